import os
import types
from collections.abc import Mapping
from pathlib import Path

import cbor2
import pytest

from tinystix.ingest import load_corpus
from tinystix.model import from_dict
from tinystix.vocab import load_default_dictionary

REPO = Path(__file__).resolve().parents[1]


def corpus_root():
    for p in (os.environ.get("TINYSTIX_DATA"), REPO / "data", REPO.parent / "data"):
        if p and (Path(p) / "attack").is_dir():
            return Path(p)
    return None


@pytest.fixture(scope="session")
def d():
    return load_default_dictionary()


@pytest.fixture(scope="session")
def data_root():
    root = corpus_root()
    if root is None:
        pytest.skip("pinned corpora not present; run scripts/fetch_corpora.py")
    return root


_snapshots: dict = {}


def snapshot(name, root):
    if name not in _snapshots:
        _snapshots[name] = load_corpus(name, root)
    return _snapshots[name]


@pytest.fixture(scope="session")
def attack(data_root):
    return {n: snapshot(n, data_root) for n in ("enterprise", "ics", "mobile")}


INDICATOR = {
    "type": "indicator",
    "spec_version": "2.1",
    "id": "indicator--8e2e2d2b-17d4-4cbf-938f-98ee46b3cd3f",
    "created": "2016-04-06T20:03:48.000Z",
    "modified": "2016-04-06T20:03:48.000Z",
    "indicator_types": ["malicious-activity"],
    "name": "Poison Ivy Malware",
    "pattern": "[file:hashes.'SHA-256' = 'ef537f25c895bfa782526529a9b63d97aa631564d5d789c2b765448c8635fb6c']",
    "pattern_type": "stix",
    "valid_from": "2016-01-01T00:00:00Z",
}


@pytest.fixture
def indicator():
    return from_dict(dict(INDICATOR))


# pycose 1.1 expects cbor2 5.x lists and dicts; cbor2 6 decodes to tuples/frozendicts
def _thaw(v):
    if isinstance(v, cbor2.CBORTag):
        return cbor2.CBORTag(v.tag, _thaw(v.value))
    if isinstance(v, Mapping):
        return {_thaw(k): _thaw(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_thaw(x) for x in v]
    return v


@pytest.fixture(scope="session")
def pycose():
    mod = pytest.importorskip("pycose")
    import pycose.messages.cosebase as cb
    import pycose.messages.cosemessage as cm

    shim = types.SimpleNamespace(loads=lambda b: _thaw(cbor2.loads(b)), dumps=cbor2.dumps, CBORTag=cbor2.CBORTag)
    cm.cbor2 = cb.cbor2 = shim
    return mod


def make_objects(n, big_every=0, seed="exchange"):
    """Deterministic mix of indicators, malware and tools; every *big_every*-th one is > 1 KiB."""
    import uuid

    out = []
    kinds = ("indicator", "malware", "tool")
    for i in range(n):
        t = kinds[i % 3]
        ident = f"{t}--{uuid.uuid5(uuid.NAMESPACE_DNS, f'{seed}.{i}')}"
        base = {"type": t, "spec_version": "2.1", "id": ident,
                "created": "2024-01-01T00:00:00.000Z", "modified": "2024-01-01T00:00:00.000Z",
                "name": f"{t} {i}"}
        if t == "indicator":
            base.update(pattern=f"[ipv4-addr:value = '10.0.{i // 256}.{i % 256}']", pattern_type="stix",
                        valid_from="2024-01-01T00:00:00Z")
        elif t == "malware":
            base["is_family"] = bool(i % 2)
        if big_every and i % big_every == 0:
            base["description"] = f"long text {i} " * 150
        out.append(from_dict(base))
    return out


# one line per acceptance criterion, echoed after the run so they show without -s
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
