"""JSON <-> tinySTIX conversion.

Stage 1 (``apply_integer_mapping``) swaps dictionary-known keys, type names
and vocabulary terms for integer codes. Stage 2 (``encode_cbor``) writes the
mapped tree as deterministic CBOR. A payload travels as the two-element array
``[dict_version, body]``.

Two encoding profiles exist. ``"parity"`` stops after the two stages.
``"extended"`` also packs RFC 3339 timestamps as RFC 9581 extended-time tags
and identifiers as (type code, binary UUID) pairs.
"""

from __future__ import annotations

import io
import math
import re
import struct
import uuid
from collections.abc import Mapping
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

import cbor2

from . import catalog
from .errors import DictVersionMismatch, MalformedCbor, UnencodableValue
from .model import StixObject, canonical_bytes, from_dict
from .vocab import NOT_IN_DICTIONARY, Dictionary

PARITY = "parity"
EXTENDED = "extended"
PROFILES = (PARITY, EXTENDED)

TAG_UUID = 37
TAG_EXTENDED_TIME = 1001
# unregistered tag from the first-come-first-served range: [type, uuid]
TAG_STIX_ID = 55801

_MAX_DEPTH = 200


def _is_int(v) -> bool:
    return type(v) is int


# -- stage 1 ----------------------------------------------------------------

def _type_context(tree: Mapping, d: Dictionary, decoding: bool):
    """Object type governing vocabulary bindings inside *tree*, if any."""
    if decoding:
        code = d.key_map.get("type")
        v = tree.get(code, tree.get("type"))
        if _is_int(v):
            return d.decode_type(v)
        return v if isinstance(v, str) else None
    v = tree.get("type")
    return v if isinstance(v, str) else None


def _map_term(vocab: str, value, d: Dictionary, key: str):
    if isinstance(value, str):
        code = d.encode_type(value) if vocab == "type" else d.encode_term(vocab, value)
        return value if code is NOT_IN_DICTIONARY else code
    if _is_int(value):
        raise UnencodableValue(f"integer value under vocabulary-bound property {key!r}")
    return None


def _unmap_term(vocab: str, value, d: Dictionary):
    if _is_int(value):
        return d.decode_type(value) if vocab == "type" else d.decode_term(vocab, value)
    return value


def _vocab_of(type_ctx, key):
    if key == "type":
        return "type"
    return catalog.vocabulary_for(type_ctx, key)


def _map_tree(tree, d: Dictionary, type_ctx, depth: int):
    if depth > _MAX_DEPTH:
        raise UnencodableValue("tree nested too deeply")
    if isinstance(tree, Mapping):
        ctx = _type_context(tree, d, False) or type_ctx
        out = {}
        for key, value in tree.items():
            if not isinstance(key, str):
                raise UnencodableValue(f"non-string key {key!r}")
            code = d.encode_key(key)
            out[key if code is NOT_IN_DICTIONARY else code] = _map_value(key, value, d, ctx, depth)
        return out
    if isinstance(tree, list):
        return [_map_tree(v, d, type_ctx, depth + 1) for v in tree]
    return tree


def _map_value(key, value, d, ctx, depth):
    vocab = _vocab_of(ctx, key)
    if vocab is not None:
        if isinstance(value, list):
            out = []
            for item in value:
                mapped = _map_term(vocab, item, d, key)
                out.append(_map_tree(item, d, ctx, depth + 1) if mapped is None else mapped)
            return out
        mapped = _map_term(vocab, value, d, key)
        if mapped is not None:
            return mapped
    return _map_tree(value, d, ctx, depth + 1)


def _unmap_tree(tree, d: Dictionary, type_ctx, depth: int):
    if depth > _MAX_DEPTH:
        raise MalformedCbor("tree nested too deeply")
    if isinstance(tree, Mapping):
        ctx = _type_context(tree, d, True) or type_ctx
        out = {}
        for key, value in tree.items():
            name = d.decode_key(key) if _is_int(key) else key
            if name in out:
                raise MalformedCbor(f"key {name!r} appears both coded and uncoded")
            out[name] = _unmap_value(name, value, d, ctx, depth)
        return out
    if isinstance(tree, list):
        return [_unmap_tree(v, d, type_ctx, depth + 1) for v in tree]
    return tree


def _unmap_value(name, value, d, ctx, depth):
    vocab = _vocab_of(ctx, name)
    if vocab is not None:
        if isinstance(value, list):
            return [
                _unmap_term(vocab, v, d) if _is_int(v) or isinstance(v, str)
                else _unmap_tree(v, d, ctx, depth + 1)
                for v in value
            ]
        if _is_int(value) or isinstance(value, str):
            return _unmap_term(vocab, value, d)
    return _unmap_tree(value, d, ctx, depth + 1)


def apply_integer_mapping(obj: StixObject | Mapping, d: Dictionary) -> dict:
    """Replace known keys, type names and vocabulary terms with their codes."""
    tree = obj.properties if isinstance(obj, StixObject) else obj
    return _map_tree(tree, d, None, 0)


def remove_integer_mapping(mapped: Mapping, d: Dictionary) -> dict:
    """Exact inverse of :func:`apply_integer_mapping` under the same dictionary.

    Raises
    ------
    UnknownCode
        A code is absent from *d*, which usually means a dictionary mismatch.
    """
    return _unmap_tree(mapped, d, None, 0)


def mapped_json(mapped: Mapping) -> bytes:
    """Minified JSON of a mapped tree; integer keys become digit strings."""
    return canonical_bytes(mapped)


# -- stage 2 ----------------------------------------------------------------

def _encode_float(encoder, value: float) -> None:
    # shortest of half/single/double that round-trips (preferred serialization)
    if math.isnan(value):
        encoder.write(b"\xf9\x7e\x00")
        return
    for head, fmt in ((b"\xf9", ">e"), (b"\xfa", ">f")):
        try:
            packed = struct.pack(fmt, value)
        except OverflowError:
            continue
        if struct.unpack(fmt, packed)[0] == value:
            encoder.write(head + packed)
            return
    encoder.write(b"\xfb" + struct.pack(">d", value))


_ENCODERS = {float: _encode_float}


def cbor_dumps(value: Any) -> bytes:
    """Deterministic CBOR: definite lengths, shortest integers and floats."""
    return cbor2.dumps(value, encoders=_ENCODERS)


def cbor_loads(data: bytes) -> Any:
    """Strict single-item CBOR decode (no trailing bytes, no indefinite lengths)."""
    stream = io.BytesIO(data)
    try:
        value = cbor2.CBORDecoder(
            stream, allow_indefinite=False, allow_duplicate_keys=False,
        ).decode()
    except (cbor2.CBORDecodeError, ValueError, EOFError, TypeError, OverflowError) as exc:
        raise MalformedCbor(str(exc)) from None
    if stream.tell() != len(data):
        raise MalformedCbor("trailing bytes after CBOR item")
    return value


@dataclass(frozen=True)
class TinyStixPayload:
    dict_version: int
    body: bytes

    def to_bytes(self) -> bytes:
        return b"\x82" + cbor_dumps(self.dict_version) + self.body

    @classmethod
    def from_bytes(cls, data: bytes) -> "TinyStixPayload":
        data = bytes(data)
        if not data or data[0] != 0x82:
            raise MalformedCbor("payload must be a two-element array")
        item = cbor_loads(data)
        version = item[0]
        if not _is_int(version) or version < 0:
            raise MalformedCbor("dict_version must be an unsigned integer")
        head = 1 + len(cbor_dumps(version))
        if not isinstance(item[1], Mapping):
            raise MalformedCbor("payload body must be a map")
        return cls(version, data[head:])

    def __len__(self) -> int:
        return len(self.body)


_TS_RE = re.compile(r"^(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2})(?:\.(\d{3}|\d{6}|\d{9}))?Z$")
_FRACTION_KEY = {3: -3, 6: -6, 9: -9}
_ID_RE = re.compile(r"^([a-z0-9][a-z0-9-]*)--([0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12})$")


def _pack_timestamp(text: str):
    m = _TS_RE.match(text)
    if m is None:
        return None
    try:
        dt = datetime.strptime(m.group(1), "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)
    except ValueError:
        return None
    secs = int((dt - datetime(1970, 1, 1, tzinfo=timezone.utc)).total_seconds())
    value = {1: secs}
    if m.group(2):
        value[_FRACTION_KEY[len(m.group(2))]] = int(m.group(2))
    tag = cbor2.CBORTag(TAG_EXTENDED_TIME, value)
    return tag if _unpack_timestamp(value) == text else None


def _unpack_timestamp(value: Mapping) -> str:
    keys = set(value)
    secs = value.get(1)
    if not _is_int(secs) or not keys <= {1, -3, -6, -9} or len(keys) > 2:
        raise MalformedCbor("unsupported extended-time map")
    try:
        dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    except (OverflowError, OSError, ValueError):
        raise MalformedCbor("extended-time seconds out of range") from None
    text = dt.strftime("%Y-%m-%dT%H:%M:%S")
    for k, width in ((-3, 3), (-6, 6), (-9, 9)):
        if k in value:
            frac = value[k]
            if not _is_int(frac) or not 0 <= frac < 10 ** width:
                raise MalformedCbor("extended-time fraction out of range")
            text += "." + str(frac).zfill(width)
    return text + "Z"


def _pack_identifier(text: str, d: Dictionary):
    m = _ID_RE.match(text)
    if m is None:
        return None
    code = d.encode_type(m.group(1))
    prefix = m.group(1) if code is NOT_IN_DICTIONARY else code
    return cbor2.CBORTag(TAG_STIX_ID, [prefix, uuid.UUID(m.group(2))])


def _extend(tree, d: Dictionary):
    if isinstance(tree, dict):
        return {k: _extend(v, d) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_extend(v, d) for v in tree]
    if isinstance(tree, str):
        packed = _pack_identifier(tree, d) or _pack_timestamp(tree)
        return tree if packed is None else packed
    return tree


def _plain(value, d: Dictionary | None, depth: int = 0):
    """Convert a decoded CBOR item back to a JSON-shaped mapped tree."""
    if depth > _MAX_DEPTH:
        raise MalformedCbor("tree nested too deeply")
    if isinstance(value, (str, bool, float)) or value is None or _is_int(value):
        return value
    if isinstance(value, Mapping):
        out = {}
        for k, v in value.items():
            if not (isinstance(k, str) or (_is_int(k) and k >= 0)):
                raise MalformedCbor(f"map key must be text or unsigned, got {type(k).__name__}")
            out[k] = _plain(v, d, depth + 1)
        return out
    if isinstance(value, (list, tuple)):
        return [_plain(v, d, depth + 1) for v in value]
    if isinstance(value, cbor2.CBORTag):
        if value.tag == TAG_EXTENDED_TIME and isinstance(value.value, Mapping):
            return _unpack_timestamp(value.value)
        if value.tag == TAG_STIX_ID:
            return _unpack_identifier(value.value, d)
    raise MalformedCbor(f"unsupported CBOR item of type {type(value).__name__}")


def _unpack_identifier(value, d: Dictionary | None) -> str:
    if not isinstance(value, (list, tuple)) or len(value) != 2 or not isinstance(value[1], uuid.UUID):
        raise MalformedCbor("malformed identifier tag")
    prefix = value[0]
    if _is_int(prefix):
        if d is None:
            raise MalformedCbor("identifier tag needs a dictionary to decode")
        prefix = d.decode_type(prefix)
    elif not isinstance(prefix, str):
        raise MalformedCbor("malformed identifier tag")
    return f"{prefix}--{value[1]}"


def encode_cbor(mapped: Mapping, dict_version: int, profile: str = PARITY,
                dictionary: Dictionary | None = None) -> TinyStixPayload:
    """Serialize a mapped tree.

    Parameters
    ----------
    mapped : mapping
        Output of :func:`apply_integer_mapping`.
    dict_version : int
        Version of the dictionary used for the mapping.
    profile : {"parity", "extended"}
        ``"extended"`` additionally packs timestamps and identifiers and then
        needs *dictionary* for identifier type codes.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    if not isinstance(mapped, Mapping):
        raise UnencodableValue("payload body must be a map")
    tree = mapped
    if profile == EXTENDED:
        if dictionary is None:
            raise ValueError("the extended profile needs the dictionary")
        tree = _extend(dict(mapped), dictionary)
    return TinyStixPayload(dict_version, cbor_dumps(tree))


def decode_cbor(payload, dictionary: Dictionary | None = None) -> dict:
    """Decode a payload (object or wire bytes) to a mapped tree.

    Raises
    ------
    MalformedCbor
        The bytes are not a well-formed tinySTIX payload.
    DictVersionMismatch
        *dictionary* has a different version than the payload.
    """
    if not isinstance(payload, TinyStixPayload):
        payload = TinyStixPayload.from_bytes(payload)
    if dictionary is not None and payload.dict_version != dictionary.version_id:
        raise DictVersionMismatch(payload.dict_version, dictionary.version_id)
    body = cbor_loads(payload.body)
    if not isinstance(body, Mapping):
        raise MalformedCbor("payload body must be a map")
    return _plain(body, dictionary)


def to_tinystix(obj: StixObject | Mapping, d: Dictionary, profile: str = PARITY) -> TinyStixPayload:
    return encode_cbor(apply_integer_mapping(obj, d), d.version_id, profile, d)


def from_tinystix(payload, d: Dictionary) -> StixObject:
    """Decode and validate; the inverse of :func:`to_tinystix`."""
    return from_dict(remove_integer_mapping(decode_cbor(payload, d), d))


def peek_identity(payload, d: Dictionary) -> tuple[str | None, str | None]:
    """(type, id) of a payload, read without full validation."""
    body = decode_cbor(payload, d)
    tcode, icode = d.key_map.get("type"), d.key_map.get("id")
    t = body.get(tcode, body.get("type"))
    if _is_int(t):
        t = d.decode_type(t)
    i = body.get(icode, body.get("id"))
    return (t if isinstance(t, str) else None, i if isinstance(i, str) else None)
