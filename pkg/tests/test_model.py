import json

import pytest

from tinystix.errors import (
    BadIdentifier,
    BadPropertyName,
    DuplicateObjectId,
    MalformedJson,
    MissingRequiredProperty,
    NotABundle,
)
from tinystix.model import (
    Identifier,
    ObjectClass,
    canonical_json,
    classify,
    from_dict,
    make_bundle,
    parse_bundle,
    parse_object,
    strip_non_native,
)

from .conftest import INDICATOR


def test_canonical_json_is_minified_and_ordered():
    obj = from_dict({"type": "x-thing", "id": "x-thing--2f8a9a1e-6f2b-4b6e-9d8e-3c7b1f0a9d11", "b": 1, "a": "é"})
    assert canonical_json(obj) == (
        '{"type":"x-thing","id":"x-thing--2f8a9a1e-6f2b-4b6e-9d8e-3c7b1f0a9d11","b":1,"a":"é"}'
    ).encode("utf-8")


def test_parse_preserves_source_order():
    text = '{"id":"indicator--8e2e2d2b-17d4-4cbf-938f-98ee46b3cd3f","type":"indicator","spec_version":"2.1",' \
           '"created":"2016-04-06T20:03:48.000Z","modified":"2016-04-06T20:03:48.000Z",' \
           '"pattern":"[x:y = 1]","pattern_type":"stix","valid_from":"2016-01-01T00:00:00Z"}'
    assert canonical_json(parse_object(text)).decode() == text


@pytest.mark.parametrize("missing", ["pattern", "pattern_type", "valid_from", "created", "id", "type"])
def test_required_properties(missing):
    data = dict(INDICATOR)
    del data[missing]
    with pytest.raises(MissingRequiredProperty) as ei:
        from_dict(data)
    assert ei.value.name == missing


@pytest.mark.parametrize("bad", [
    "indicator--not-a-uuid",
    "indicator-8e2e2d2b-17d4-4cbf-938f-98ee46b3cd3f",
    "malware--8e2e2d2b-17d4-4cbf-938f-98ee46b3cd3f",
    42,
])
def test_bad_identifier(bad):
    with pytest.raises(BadIdentifier):
        from_dict({**INDICATOR, "id": bad})


def test_identifier_parse_and_new():
    i = Identifier.parse("ipv4-addr--ff26c055-6336-5bc5-b98d-13d6226742dd")
    assert i.object_type == "ipv4-addr" and str(i) == "ipv4-addr--ff26c055-6336-5bc5-b98d-13d6226742dd"
    assert Identifier.new("note").object_type == "note"


@pytest.mark.parametrize("text", ["{", "[1,2]", '{"type":"indicator","x":NaN}', b"\xff\xfe"])
def test_malformed_json(text):
    with pytest.raises(MalformedJson):
        parse_object(text)


def test_bad_property_name():
    with pytest.raises(BadPropertyName):
        from_dict({**INDICATOR, "Bad Name": 1})


@pytest.mark.parametrize("t,cls", [
    ("indicator", ObjectClass.SDO),
    ("ipv4-addr", ObjectClass.SCO),
    ("relationship", ObjectClass.SRO),
    ("sighting", ObjectClass.SRO),
])
def test_classify(t, cls):
    assert classify(t) is cls


def test_custom_type_needs_only_type_and_id():
    obj = from_dict({"type": "x-mitre-tactic", "id": "x-mitre-tactic--2f8a9a1e-6f2b-4b6e-9d8e-3c7b1f0a9d11"})
    assert obj.object_type == "x-mitre-tactic"


def test_strip_non_native_drops_custom_and_foreign_properties(indicator):
    obj = from_dict({**INDICATOR, "x_mitre_version": "1.0", "is_family": True})
    stripped = strip_non_native(obj)
    assert stripped == indicator
    assert strip_non_native(indicator) is indicator


def test_relation_type_alias_is_normalized():
    rel = from_dict({
        "type": "relationship", "spec_version": "2.1",
        "id": "relationship--44298a74-ba52-4f0c-87a3-1824e67d7fad",
        "created": "2016-04-06T20:06:37.000Z", "modified": "2016-04-06T20:06:37.000Z",
        "relation_type": "indicates",
        "source_ref": "indicator--8e2e2d2b-17d4-4cbf-938f-98ee46b3cd3f",
        "target_ref": "malware--31b940d4-6f7f-459a-80ea-9c1f17b5891b",
    })
    assert rel["relationship_type"] == "indicates" and "relation_type" not in rel.properties


def test_bundle(indicator):
    b = make_bundle([indicator])
    again = parse_bundle(json.dumps(b.to_dict()))
    assert again.id == b.id and list(again.objects) == [indicator]
    with pytest.raises(DuplicateObjectId):
        make_bundle([indicator, indicator])
    with pytest.raises(NotABundle):
        parse_bundle('{"type":"indicator"}')


def test_equality_is_by_property_tree(indicator):
    other = from_dict({**INDICATOR, "name": "different"})
    assert indicator != other
    assert indicator == from_dict(dict(INDICATOR))
