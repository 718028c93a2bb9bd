"""scikit-learn style front end: fit a dictionary, transform objects to payloads."""

from __future__ import annotations

import json
from typing import Iterable

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .benchmark import measure_object, uncoded_keys
from .codec import PARITY, PROFILES, TinyStixPayload, apply_integer_mapping, from_tinystix, to_tinystix
from .model import StixObject, from_dict, parse_object, strip_non_native
from .vocab import build_dictionary, default_entry_set, load_default_dictionary


def check_stix_objects(X) -> list:
    """Coerce JSON text, bytes, dicts or :class:`StixObject` items to a list of StixObjects."""
    if isinstance(X, (StixObject, dict, str, bytes)):
        raise TypeError("expected a sequence of STIX objects, got a single item")
    out = []
    for item in X:
        if isinstance(item, StixObject):
            out.append(item)
        elif isinstance(item, dict):
            out.append(from_dict(json.loads(json.dumps(item))))
        elif isinstance(item, (str, bytes, bytearray)):
            out.append(parse_object(item))
        else:
            raise TypeError(f"cannot interpret {type(item).__name__} as a STIX object")
    return out


class TinyStixEncoder(TransformerMixin, BaseEstimator):
    """Encode STIX objects as tinySTIX payload bytes.

    Parameters
    ----------
    dictionary : str or None
        Dictionary file. ``None`` uses ``$TINYSTIX_DICT`` or the shipped file;
        ``"build"`` derives a fresh one from the built-in STIX 2.1 listing.
    profile : {"parity", "extended"}
        CBOR profile passed to the codec.
    strip : bool
        Drop non-native properties before encoding.

    Attributes
    ----------
    dictionary_ : Dictionary
    uncovered_keys_ : list of str
        Property names seen in ``fit`` that the dictionary cannot code.
    """

    def __init__(self, dictionary=None, profile: str = PARITY, strip: bool = True):
        self.dictionary = dictionary
        self.profile = profile
        self.strip = strip

    def fit(self, X, y=None):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        if self.dictionary == "build":
            self.dictionary_ = build_dictionary(default_entry_set())
        else:
            self.dictionary_ = load_default_dictionary(self.dictionary)
        missing: set = set()
        objs = self._prepare(X)
        for o in objs:
            uncoded_keys(apply_integer_mapping(o, self.dictionary_), missing)
        self.uncovered_keys_ = sorted(k for k in missing if not k.startswith("x_"))
        return self

    def _prepare(self, X) -> list:
        objs = check_stix_objects(X)
        if self.strip:
            objs = [strip_non_native(o) for o in objs]
        return objs

    def transform(self, X) -> list:
        check_is_fitted(self, "dictionary_")
        return [to_tinystix(o, self.dictionary_, self.profile).to_bytes() for o in self._prepare(X)]

    def inverse_transform(self, X: Iterable[bytes]) -> list:
        check_is_fitted(self, "dictionary_")
        return [from_tinystix(TinyStixPayload.from_bytes(p), self.dictionary_) for p in X]

    def measure(self, X) -> list:
        """(s0, s1, s2) per object."""
        check_is_fitted(self, "dictionary_")
        return [(t.s0, t.s1, t.s2) for t in (measure_object(o, self.dictionary_, self.profile) for o in self._prepare(X))]
