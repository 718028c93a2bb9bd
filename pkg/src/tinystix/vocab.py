"""Integer dictionary for property names, vocabulary terms and type names."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping

import cbor2

from . import catalog
from .errors import CorruptFile, DuplicateEntry, UnknownCode, UnsupportedVersion

DICT_ENV_VAR = "TINYSTIX_DICT"
DEFAULT_VERSION = 1


class _NotInDictionary:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_IN_DICTIONARY"

    def __bool__(self):
        return False


NOT_IN_DICTIONARY = _NotInDictionary()


@dataclass(frozen=True)
class DictionaryEntrySet:
    """Source listing a dictionary is built from. Order of the lists is irrelevant."""

    keys: tuple = ()
    vocabularies: Mapping[str, Iterable[str]] = field(default_factory=dict)
    types: tuple = ()


def _assign(names: Iterable[str]) -> dict:
    names = list(names)
    seen = set()
    for n in names:
        if not isinstance(n, str):
            raise TypeError(f"dictionary entries must be strings, got {n!r}")
        if n in seen:
            raise DuplicateEntry(n)
        seen.add(n)
    return {n: i for i, n in enumerate(sorted(names))}


@dataclass(frozen=True, eq=False)
class Dictionary:
    version_id: int
    key_map: dict
    vocab_maps: dict
    type_map: dict

    def __post_init__(self):
        object.__setattr__(self, "_key_inv", _invert(self.key_map, "key_map"))
        object.__setattr__(self, "_type_inv", _invert(self.type_map, "type_map"))
        object.__setattr__(
            self, "_vocab_inv",
            {name: _invert(m, name) for name, m in self.vocab_maps.items()},
        )

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return (
            self.version_id == other.version_id
            and list(self.key_map.items()) == list(other.key_map.items())
            and list(self.type_map.items()) == list(other.type_map.items())
            and {k: list(v.items()) for k, v in self.vocab_maps.items()}
            == {k: list(v.items()) for k, v in other.vocab_maps.items()}
        )

    __hash__ = None

    # keys

    def encode_key(self, name):
        if not isinstance(name, str) or name.startswith("x_"):
            return NOT_IN_DICTIONARY
        return self.key_map.get(name, NOT_IN_DICTIONARY)

    def decode_key(self, code: int) -> str:
        try:
            return self._key_inv[code]
        except KeyError:
            raise UnknownCode(code, "key_map") from None

    # vocabulary terms

    def encode_term(self, vocab: str, term):
        m = self.vocab_maps.get(vocab)
        if m is None or not isinstance(term, str):
            return NOT_IN_DICTIONARY
        return m.get(term, NOT_IN_DICTIONARY)

    def decode_term(self, vocab: str, code: int) -> str:
        inv = self._vocab_inv.get(vocab)
        if inv is None or code not in inv:
            raise UnknownCode(code, vocab)
        return inv[code]

    # object types

    def encode_type(self, name):
        if not isinstance(name, str):
            return NOT_IN_DICTIONARY
        return self.type_map.get(name, NOT_IN_DICTIONARY)

    def decode_type(self, code: int) -> str:
        try:
            return self._type_inv[code]
        except KeyError:
            raise UnknownCode(code, "type_map") from None

    def to_cbor(self) -> bytes:
        return cbor2.dumps({
            0: self.version_id,
            1: self.key_map,
            2: self.vocab_maps,
            3: self.type_map,
        })


def _invert(mapping: Mapping, label: str) -> dict:
    inv = {}
    for k, v in mapping.items():
        if v in inv:
            raise CorruptFile(f"{label} is not injective at code {v}")
        inv[v] = k
    return inv


# module-level operation names mirror the methods

def encode_key(d: Dictionary, name: str):
    return d.encode_key(name)


def decode_key(d: Dictionary, code: int) -> str:
    return d.decode_key(code)


def encode_vocab_term(d: Dictionary, vocab: str, term: str):
    return d.encode_term(vocab, term)


def decode_vocab_term(d: Dictionary, vocab: str, code: int) -> str:
    return d.decode_term(vocab, code)


def build_dictionary(entries: DictionaryEntrySet, version_id: int = DEFAULT_VERSION) -> Dictionary:
    """Assign codes in lexicographic order, from 0, separately per map."""
    if not isinstance(version_id, int) or isinstance(version_id, bool) or version_id < 0:
        raise ValueError("version_id must be an unsigned integer")
    vocab_maps = {}
    for name in sorted(entries.vocabularies):
        vocab_maps[name] = _assign(entries.vocabularies[name])
    return Dictionary(
        version_id=version_id,
        key_map=_assign(entries.keys),
        vocab_maps=vocab_maps,
        type_map=_assign(entries.types),
    )


def default_entry_set() -> DictionaryEntrySet:
    """Entry set derived from the STIX 2.1 listing in ``tinystix.catalog``."""
    return DictionaryEntrySet(
        keys=tuple(catalog.all_property_names()),
        vocabularies={k: tuple(v) for k, v in catalog.VOCABULARIES.items()},
        types=catalog.ALL_TYPES,
    )


def save_dictionary(d: Dictionary, file) -> None:
    data = d.to_cbor()
    if hasattr(file, "write"):
        file.write(data)
    else:
        with open(file, "wb") as fh:
            fh.write(data)


def _read_bytes(file) -> bytes:
    if isinstance(file, (bytes, bytearray)):
        return bytes(file)
    if hasattr(file, "read"):
        return file.read()
    with open(file, "rb") as fh:
        return fh.read()


def _uint(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def _check_map(m, label: str) -> dict:
    if not isinstance(m, dict):
        raise CorruptFile(f"{label} is not a map")
    for k, v in m.items():
        if not isinstance(k, str) or not _uint(v):
            raise CorruptFile(f"{label} holds a non string->uint entry")
    return m


def load_dictionary(file, accept_versions: Iterable[int] | None = None) -> Dictionary:
    """Read a dictionary file (path, file object or bytes).

    ``accept_versions`` restricts the version ids this peer understands.
    """
    raw = _read_bytes(file)
    stream = io.BytesIO(raw)
    try:
        data = cbor2.CBORDecoder(stream).decode()
    except (cbor2.CBORDecodeError, ValueError, EOFError) as exc:
        raise CorruptFile(f"not a dictionary file: {exc}") from None
    if stream.tell() != len(raw):
        raise CorruptFile("trailing bytes after dictionary")
    if not isinstance(data, dict) or set(data) != {0, 1, 2, 3}:
        raise CorruptFile("dictionary file must be a map with keys 0..3")
    version = data[0]
    if not _uint(version):
        raise UnsupportedVersion(f"unrecognised version marker {version!r}")
    if accept_versions is not None and version not in set(accept_versions):
        raise UnsupportedVersion(f"dictionary version {version} not supported")
    vocab_maps = data[2]
    if not isinstance(vocab_maps, dict):
        raise CorruptFile("vocab_maps is not a map")
    vocab_maps = {str(k): _check_map(v, f"vocabulary {k}") for k, v in vocab_maps.items()}
    return Dictionary(
        version_id=version,
        key_map=_check_map(data[1], "key_map"),
        vocab_maps=vocab_maps,
        type_map=_check_map(data[3], "type_map"),
    )


_default_cache: dict = {}


def default_dictionary_path():
    return resources.files("tinystix") / "data" / "dictionary-v1.cbor"


def load_default_dictionary(path=None) -> Dictionary:
    """Dictionary from *path*, else ``$TINYSTIX_DICT``, else the shipped version 1 file."""
    path = path or os.environ.get(DICT_ENV_VAR)
    if path:
        return load_dictionary(path)
    if "shipped" not in _default_cache:
        _default_cache["shipped"] = load_dictionary(default_dictionary_path().read_bytes())
    return _default_cache["shipped"]
