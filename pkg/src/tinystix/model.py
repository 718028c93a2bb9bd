"""STIX 2.1 objects as ordered property trees.

Parsing keeps the JSON property order and never coerces numbers, so the
minified re-serialization (``canonical_json``) is a stable size baseline.
"""

from __future__ import annotations

import enum
import json
import math
import re
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import catalog
from .errors import (
    BadIdentifier,
    BadPropertyName,
    DuplicateObjectId,
    MalformedJson,
    MissingRequiredProperty,
    NotABundle,
    UnknownType,
)

_ID_RE = re.compile(
    r"^([a-z0-9][a-z0-9-]*)--"
    r"([0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12})$"
)
_PROP_RE = re.compile(r"^[a-z0-9_-]+$")

# common properties that stripping must never touch
PROTECTED_PROPERTIES = frozenset(catalog.SDO_COMMON + catalog.SCO_COMMON)


class ObjectClass(enum.Enum):
    SDO = "sdo"
    SCO = "sco"
    SRO = "sro"
    MARKING = "marking"
    META = "meta"
    BUNDLE = "bundle"


_CLASS_OF = {}
_CLASS_OF.update({t: ObjectClass.SDO for t in catalog.SDO_TYPES})
_CLASS_OF.update({t: ObjectClass.SCO for t in catalog.SCO_TYPES})
_CLASS_OF.update({t: ObjectClass.SRO for t in catalog.SRO_TYPES})
_CLASS_OF.update({t: ObjectClass.MARKING for t in catalog.MARKING_TYPES})
_CLASS_OF.update({t: ObjectClass.META for t in catalog.META_TYPES})
_CLASS_OF[catalog.BUNDLE_TYPE] = ObjectClass.BUNDLE


def classify(object_type: str) -> ObjectClass:
    try:
        return _CLASS_OF[object_type]
    except (KeyError, TypeError):
        raise UnknownType(object_type) from None


def is_native_type(object_type: str) -> bool:
    return object_type in _CLASS_OF


@dataclass(frozen=True, order=True)
class Identifier:
    object_type: str
    uuid: uuid.UUID

    @classmethod
    def parse(cls, text: Any) -> "Identifier":
        if not isinstance(text, str):
            raise BadIdentifier(text)
        m = _ID_RE.match(text)
        if m is None:
            raise BadIdentifier(text)
        return cls(m.group(1), uuid.UUID(m.group(2)))

    @classmethod
    def new(cls, object_type: str) -> "Identifier":
        return cls(object_type, uuid.uuid4())

    def __str__(self) -> str:
        return f"{self.object_type}--{self.uuid}"


@dataclass(frozen=True)
class StixObject:
    """A validated STIX object.

    ``properties`` holds the full property tree, ``type`` and ``id`` included,
    in source order. Treat it as read-only; use ``replace`` to derive changes.
    """

    object_type: str
    id: Identifier
    properties: dict = field(compare=False, repr=False)

    def __eq__(self, other):
        if not isinstance(other, StixObject):
            return NotImplemented
        return tree_equal(self.properties, other.properties)

    def __hash__(self):
        return hash(self.id)

    def __getitem__(self, name):
        return self.properties[name]

    def get(self, name, default=None):
        return self.properties.get(name, default)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.properties))

    def replace(self, properties: Mapping) -> "StixObject":
        return from_dict(dict(properties))

    @property
    def object_class(self) -> ObjectClass:
        return classify(self.object_type)


@dataclass(frozen=True)
class Bundle:
    id: Identifier
    objects: tuple

    def to_dict(self) -> dict:
        return {"type": "bundle", "id": str(self.id), "objects": [o.properties for o in self.objects]}


def tree_equal(a: Any, b: Any, ordered: bool = False) -> bool:
    """Structural equality that keeps ``bool``/``int``/``float`` apart.

    With ``ordered=True`` map key order must match too.
    """
    if type(a) is not type(b):
        return False
    if isinstance(a, dict):
        if len(a) != len(b):
            return False
        if ordered and list(a) != list(b):
            return False
        return all(k in b and tree_equal(v, b[k], ordered) for k, v in a.items())
    if isinstance(a, list):
        return len(a) == len(b) and all(tree_equal(x, y, ordered) for x, y in zip(a, b))
    if isinstance(a, float) and math.isnan(a):
        return math.isnan(b)
    return a == b


def _reject_constant(name):
    raise MalformedJson(f"non-standard JSON constant: {name}")


def _load_json(text) -> Any:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(str(exc)) from None
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise MalformedJson(str(exc)) from None


def required_properties(object_type: str) -> tuple[str, ...]:
    if not is_native_type(object_type):
        return ("type", "id")
    return catalog.required_for(object_type)


def from_dict(data: Any) -> StixObject:
    """Validate an already-decoded property tree and wrap it."""
    if not isinstance(data, dict):
        raise MalformedJson("a STIX object must be a JSON object")
    if "type" not in data:
        raise MissingRequiredProperty("type")
    object_type = data["type"]
    if not isinstance(object_type, str) or not object_type:
        raise MalformedJson("'type' must be a non-empty string")
    if object_type == "relationship" and "relation_type" in data:
        data = _normalize_relation_type(data)
    if "id" not in data:
        raise MissingRequiredProperty("id")
    ident = Identifier.parse(data["id"])
    if ident.object_type != object_type:
        raise BadIdentifier(data["id"])
    for name in data:
        if not isinstance(name, str) or not _PROP_RE.match(name):
            raise BadPropertyName(f"invalid property name: {name!r}")
    for name in required_properties(object_type):
        if name not in data:
            raise MissingRequiredProperty(name)
    _check_encodable(data)
    return StixObject(object_type, ident, data)


def _normalize_relation_type(data: dict) -> dict:
    out = {}
    for k, v in data.items():
        if k == "relation_type":
            if "relationship_type" not in data:
                out["relationship_type"] = v
        else:
            out[k] = v
    return out


def _check_encodable(data) -> None:
    try:
        canonical_bytes(data)
    except UnicodeEncodeError as exc:
        raise MalformedJson(f"string is not valid UTF-8: {exc.reason}") from None
    except ValueError as exc:
        raise MalformedJson(str(exc)) from None


def parse_object(text) -> StixObject:
    """Parse one JSON document holding a single STIX object."""
    return from_dict(_load_json(text))


def parse_bundle(text) -> Bundle:
    data = _load_json(text)
    return bundle_from_dict(data)


def bundle_from_dict(data: Any, objects: Iterable[StixObject] | None = None) -> Bundle:
    if not isinstance(data, dict) or data.get("type") != "bundle":
        raise NotABundle("document is not a STIX bundle")
    if "id" not in data:
        raise MissingRequiredProperty("id")
    ident = Identifier.parse(data["id"])
    if ident.object_type != "bundle":
        raise BadIdentifier(data["id"])
    if objects is None:
        raw = data.get("objects", [])
        if not isinstance(raw, list):
            raise NotABundle("'objects' must be a list")
        objects = [from_dict(o) for o in raw]
    return make_bundle(objects, ident)


def make_bundle(objects: Iterable[StixObject], ident: Identifier | None = None) -> Bundle:
    objects = tuple(objects)
    seen = set()
    for o in objects:
        if o.id in seen:
            raise DuplicateObjectId(str(o.id))
        seen.add(o.id)
    return Bundle(ident or Identifier.new("bundle"), objects)


def canonical_bytes(tree: Any) -> bytes:
    return json.dumps(tree, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def canonical_json(obj: StixObject | Mapping) -> bytes:
    """Minified, order-preserving UTF-8 JSON; its length is the baseline size."""
    tree = obj.properties if isinstance(obj, StixObject) else obj
    return canonical_bytes(tree)


def native_properties(object_type: str) -> frozenset[str]:
    return frozenset(catalog.properties_for(object_type))


def strip_non_native(obj: StixObject) -> StixObject:
    """Drop custom (``x_``) properties and properties STIX 2.1 does not define for the type."""
    allowed = native_properties(obj.object_type)
    known_type = bool(allowed)
    kept = {}
    for name, value in obj.properties.items():
        if name.startswith("x_"):
            continue
        if known_type and name not in allowed and name not in PROTECTED_PROPERTIES:
            continue
        kept[name] = value
    if len(kept) == len(obj.properties):
        return obj
    return StixObject(obj.object_type, obj.id, kept)
