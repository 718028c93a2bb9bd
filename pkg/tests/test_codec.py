import json

import cbor2
import pytest

from tinystix.codec import (
    EXTENDED,
    PARITY,
    TinyStixPayload,
    apply_integer_mapping,
    cbor_dumps,
    cbor_loads,
    decode_cbor,
    encode_cbor,
    from_tinystix,
    mapped_json,
    peek_identity,
    remove_integer_mapping,
    to_tinystix,
)
from tinystix.errors import DictVersionMismatch, MalformedCbor, UnencodableValue, UnknownCode
from tinystix.model import canonical_json, from_dict
from tinystix.vocab import DictionaryEntrySet, build_dictionary

from .conftest import INDICATOR

# keys: id=0 indicator_types=1 name=2 type=3; types: indicator=0; benign=0 malicious-activity=1
TINY = build_dictionary(DictionaryEntrySet(
    keys=("type", "name", "id", "indicator_types"),
    vocabularies={"indicator-type-ov": ("malicious-activity", "benign")},
    types=("indicator",),
))
TREE = {"type": "indicator", "id": "i", "indicator_types": ["malicious-activity"], "name": "x"}


def test_stage1_by_hand():
    assert apply_integer_mapping(TREE, TINY) == {3: 0, 0: "i", 1: [1], 2: "x"}
    assert list(apply_integer_mapping(TREE, TINY)) == [3, 0, 1, 2]
    assert mapped_json(apply_integer_mapping(TREE, TINY)) == b'{"3":0,"0":"i","1":[1],"2":"x"}'


def test_stage2_by_hand():
    p = encode_cbor(apply_integer_mapping(TREE, TINY), 1)
    assert p.body == bytes.fromhex("a4" "0300" "006169" "018101" "026178")
    assert p.to_bytes() == b"\x82\x01" + p.body
    assert cbor2.loads(p.to_bytes()) == [1, {3: 0, 0: "i", 1: [1], 2: "x"}]


def test_unknown_names_and_terms_pass_through():
    tree = {"type": "indicator", "x_custom": 1, "indicator_types": ["benign", "home-grown"]}
    assert apply_integer_mapping(tree, TINY) == {3: 0, "x_custom": 1, 1: [0, "home-grown"]}
    assert remove_integer_mapping(apply_integer_mapping(tree, TINY), TINY) == tree


def test_empty_map():
    assert cbor_dumps({}) == b"\xa0"
    assert encode_cbor({}, 0).to_bytes() == b"\x82\x00\xa0"


@pytest.mark.parametrize("value,hexed", [
    (0, "00"), (23, "17"), (24, "1818"), (500, "1901f4"), (-1, "20"), (2**32, "1b0000000100000000"),
    (1.5, "f93e00"), (100000.0, "fa47c35000"), (0.1, "fb3fb999999999999a"), (True, "f5"), (None, "f6"),
    ("é", "62c3a9"), ([], "80"),
])
def test_preferred_serialization(value, hexed):
    assert cbor_dumps(value).hex() == hexed
    assert cbor_loads(bytes.fromhex(hexed)) == value


@pytest.mark.parametrize("raw", [
    b"",
    b"\xa0\x00",              # trailing byte
    b"\xbf\xff",              # indefinite map
    b"\xa2\x01\x00\x01\x00",  # duplicate key
    b"\x1c",                  # reserved additional info
])
def test_strict_decoder(raw):
    with pytest.raises(MalformedCbor):
        cbor_loads(raw)


@pytest.mark.parametrize("raw", [b"", b"\xa0", b"\x83\x01\xa0\x00", b"\x82\x20\xa0", b"\x82\x01\x80",
                                 b"\x82\x01\xa0\x00"])
def test_payload_framing(raw):
    with pytest.raises(MalformedCbor):
        TinyStixPayload.from_bytes(raw)


def test_version_mismatch(d, indicator):
    wire = TinyStixPayload(d.version_id + 1, to_tinystix(indicator, d).body).to_bytes()
    with pytest.raises(DictVersionMismatch):
        from_tinystix(wire, d)


def test_unknown_code_on_decode(d):
    with pytest.raises(UnknownCode):
        remove_integer_mapping({10_000: 1}, d)


def test_integer_under_vocabulary_is_rejected():
    with pytest.raises(UnencodableValue):
        apply_integer_mapping({"type": "indicator", "indicator_types": [1]}, TINY)


def test_coded_and_uncoded_same_key_is_rejected():
    body = cbor_dumps({3: 0, "type": "indicator"})
    with pytest.raises(MalformedCbor):
        from_tinystix(TinyStixPayload(TINY.version_id, body), TINY)


@pytest.mark.parametrize("profile", [PARITY, EXTENDED])
def test_roundtrip_keeps_order_and_values(d, indicator, profile):
    obj = from_dict({**INDICATOR, "confidence": 85, "x_score": 0.25, "labels": ["a", "ü"],
                     "external_references": [{"source_name": "s", "external_id": "T1"}],
                     "created": "2016-04-06T20:03:48.123456Z"})
    back = from_tinystix(to_tinystix(obj, d, profile).to_bytes(), d)
    assert back == obj
    assert canonical_json(back) == canonical_json(obj)


def test_extended_profile_is_smaller(d, indicator):
    assert len(to_tinystix(indicator, d, EXTENDED)) < len(to_tinystix(indicator, d, PARITY))


def test_extended_keeps_non_canonical_timestamps(d):
    obj = from_dict({**INDICATOR, "valid_from": "2016-01-01T00:00:00.1Z", "valid_until": "2016-02-30T00:00:00Z"})
    assert from_tinystix(to_tinystix(obj, d, EXTENDED), d) == obj


def test_peek_identity(d, indicator):
    assert peek_identity(to_tinystix(indicator, d).to_bytes(), d) == ("indicator", INDICATOR["id"])


def test_json_of_mapped_tree_is_larger_than_cbor(d, indicator):
    mapped = apply_integer_mapping(indicator, d)
    assert len(encode_cbor(mapped, 1).body) < len(mapped_json(mapped)) < len(json.dumps(INDICATOR))
