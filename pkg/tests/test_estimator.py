import json

import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from tinystix.codec import EXTENDED, PARITY, TinyStixPayload, from_tinystix
from tinystix.estimator import TinyStixEncoder, check_stix_objects
from tinystix.model import canonical_json, from_dict, tree_equal

from .conftest import INDICATOR


def test_params_and_clone():
    enc = TinyStixEncoder(profile=EXTENDED, strip=False)
    assert enc.get_params() == {"dictionary": None, "profile": EXTENDED, "strip": False}
    twin = clone(enc)
    assert twin is not enc and twin.get_params() == enc.get_params()
    enc.set_params(profile=PARITY)
    assert enc.profile == PARITY


def test_unfitted():
    with pytest.raises(NotFittedError):
        TinyStixEncoder().transform([INDICATOR])


def test_bad_profile():
    with pytest.raises(ValueError):
        TinyStixEncoder(profile="nope").fit([INDICATOR])


@pytest.mark.parametrize("as_", [dict, json.dumps, lambda x: json.dumps(x).encode(), lambda x: from_dict(dict(x))])
def test_accepts_several_input_forms(as_):
    (obj,) = check_stix_objects([as_(INDICATOR)])
    assert tree_equal(obj.properties, INDICATOR)


def test_single_item_rejected():
    with pytest.raises(TypeError):
        check_stix_objects(INDICATOR)
    with pytest.raises(TypeError):
        check_stix_objects([42])


def test_transform_roundtrip(d):
    enc = TinyStixEncoder().fit([INDICATOR])
    assert enc.dictionary_.version_id == d.version_id
    assert enc.uncovered_keys_ == []
    (payload,) = enc.transform([INDICATOR])
    assert isinstance(payload, bytes)
    assert tree_equal(from_tinystix(TinyStixPayload.from_bytes(payload), d).properties, INDICATOR)
    (back,) = enc.inverse_transform([payload])
    assert tree_equal(back.properties, INDICATOR)


def test_strip_controls_custom_properties():
    obj = dict(INDICATOR, x_acme_score=5)
    stripped = TinyStixEncoder().fit_transform([obj])
    kept_enc = TinyStixEncoder(strip=False).fit([obj])
    kept = kept_enc.transform([obj])
    assert kept_enc.uncovered_keys_ == []  # x_ names are expected to stay uncoded
    assert "x_acme_score" not in kept_enc.inverse_transform(stripped)[0].properties
    assert kept_enc.inverse_transform(kept)[0].properties["x_acme_score"] == 5


def test_build_dictionary_option(d):
    enc = TinyStixEncoder(dictionary="build").fit([INDICATOR])
    assert enc.dictionary_.to_cbor() == d.to_cbor()


def test_measure_matches_sizes():
    enc = TinyStixEncoder().fit([INDICATOR])
    ((s0, s1, s2),) = enc.measure([INDICATOR])
    assert s0 == len(canonical_json(INDICATOR))
    assert s2 == len(enc.transform([INDICATOR])[0]) - 2  # array header + version byte
    assert s2 <= s1 <= s0


def test_in_pipeline():
    pipe = make_pipeline(TinyStixEncoder())
    out = pipe.fit_transform([INDICATOR, json.dumps(INDICATOR)])
    assert len(out) == 2 and out[0] == out[1]
