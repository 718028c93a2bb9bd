"""Randomised round trips over synthetic STIX-shaped objects."""

import string
from datetime import datetime, timezone

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from tinystix import catalog
from tinystix.codec import PROFILES, from_tinystix, to_tinystix
from tinystix.model import canonical_json, from_dict
from tinystix.vocab import load_default_dictionary

D = load_default_dictionary()
TYPES = sorted(t for t in D.type_map if t != "bundle")
BOUND = {p for p in D.key_map if catalog.vocabulary_for(None, p)} | {"type"} | {
    p for (_, p) in catalog.TYPE_PROPERTY_VOCABULARY
}
FREE_KEYS = sorted(set(D.key_map) - BOUND)

N_EXAMPLES = 10_000

name_chars = string.ascii_lowercase + string.digits + "_"
prop_names = st.text(name_chars, min_size=3, max_size=12).filter(lambda s: s[0].isalpha() and s not in BOUND)
nested_keys = st.one_of(st.sampled_from(FREE_KEYS), st.text(max_size=8).filter(lambda s: s not in BOUND))

scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-(2**63), max_value=2**64 - 1),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=20),
)
json_values = st.recursive(
    scalars,
    lambda inner: st.one_of(st.lists(inner, max_size=4), st.dictionaries(nested_keys, inner, max_size=4)),
    max_leaves=6,
)

timestamps = st.builds(
    lambda secs, frac: datetime.fromtimestamp(secs, timezone.utc).strftime("%Y-%m-%dT%H:%M:%S") + frac + "Z",
    st.integers(0, 4_102_444_800),
    st.sampled_from(["", ".000", ".123", ".123456", ".5"]),
)


def term_for(t, prop):
    vocab = "type" if prop == "type" else catalog.vocabulary_for(t, prop)
    terms = sorted(D.type_map) if vocab == "type" else sorted(D.vocab_maps.get(vocab, {}))
    one = st.sampled_from(terms) | st.text(max_size=10) if terms else st.text(max_size=10)
    return st.one_of(one, st.lists(one, max_size=3))


@st.composite
def stix_objects(draw):
    t = draw(st.sampled_from(TYPES))
    obj = {"type": t, "id": f"{t}--{draw(st.uuids())}"}
    for name in catalog.required_for(t):
        if name in obj:
            continue
        if name in ("created", "modified"):
            obj[name] = draw(timestamps)
        elif name in BOUND:
            obj[name] = draw(term_for(t, name))
        else:
            obj[name] = draw(json_values)
    for name in draw(st.lists(st.sampled_from(catalog.properties_for(t) or ("name",)), max_size=4, unique=True)):
        if name in obj:
            continue
        obj[name] = draw(term_for(t, name) if name in BOUND else st.one_of(json_values, timestamps))
    if draw(st.booleans()):
        obj.setdefault("x_" + draw(prop_names), draw(json_values))
    return from_dict(obj)



@settings(max_examples=N_EXAMPLES, deadline=None, derandomize=True,
          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
@given(stix_objects(), st.sampled_from(PROFILES))
def test_random_objects_roundtrip(obj, profile):
    wire = to_tinystix(obj, D, profile).to_bytes()
    back = from_tinystix(wire, D)
    assert back == obj
    assert canonical_json(back) == canonical_json(obj)
