"""End-to-end acceptance checks, one reported line per criterion.

Tolerances are fixed here and never adjusted to fit the measurements.
"""

import itertools
import random
import threading
import time
from datetime import timedelta

import pytest

from tinystix.benchmark import AGGREGATE, REFERENCE, evaluate, run_benchmark
from tinystix.codec import from_tinystix, to_tinystix
from tinystix.cose import (
    ALG_ES256,
    KeyStore,
    decrypt,
    encrypt,
    generate_aead_key,
    generate_signing_key,
    sign,
    verify,
)
from tinystix.errors import ManifestMissing, TinyStixError
from tinystix.exchange import CollectionStore, ExchangeClient, ExchangeServer, FilterSpec, TransmissionParams, UdpTransport
from tinystix.exchange.repository import parse_time
from tinystix.exchange.transport import wait_until
from tinystix.ingest import ATTACK_DOMAINS, load_corpus
from tinystix.model import canonical_json

from . import test_codec_properties
from .conftest import ACCEPTANCE_LINES, make_objects
from .test_exchange import T0, Inbox, World, payloads

REDUCTION_PP = 5.0
CIRCL_TOTAL_PP = 6.0
BENCHMARK_SECONDS = 300
COUNT_TOLERANCE = 0.15
EXACT_COUNT_TYPES = ("identity", "marking-definition")
CODEC_SECONDS = 120
TAMPER_TRIALS = 1000
UDP_LOSS = 0.10
COMPOSITION_EPS = 1e-9

# published per-type object counts for the three ATT&CK domains
REFERENCE_COUNTS = {
    "enterprise": {"attack-pattern": 719, "course-of-action": 284, "identity": 1, "intrusion-set": 140,
                   "malware": 508, "marking-definition": 1, "relationship": 15777, "tool": 79},
    "ics": {"attack-pattern": 90, "course-of-action": 84, "identity": 1, "intrusion-set": 16,
            "malware": 26, "marking-definition": 1, "relationship": 825, "tool": 1},
    "mobile": {"attack-pattern": 175, "course-of-action": 14, "identity": 1, "intrusion-set": 5,
               "malware": 93, "marking-definition": 1, "relationship": 1391, "tool": 2},
}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _circl(root):
    try:
        return load_corpus("circl", root)
    except ManifestMissing:
        return None


@pytest.fixture(scope="module")
def corpora(attack, data_root):
    """Every corpus that is present locally; CIRCL maps to None when its feed was never fetched."""
    return dict(attack, circl=_circl(data_root))


def _available(corpora):
    return {k: v for k, v in corpora.items() if v is not None}


def _all_objects(corpora):
    return [o for snap in _available(corpora).values() for o in snap.objects]


def test_criterion_1_reductions(data_root, d):
    names = list(ATTACK_DOMAINS) + (["circl"] if _circl(data_root) is not None else [])
    t0 = time.perf_counter()
    rep = run_benchmark(names, d, data_root, AGGREGATE)
    elapsed = time.perf_counter() - t0
    misses = []
    for name in ATTACK_DOMAINS:
        got = rep.dataset(name).overall.rows(AGGREGATE)
        for label, g, want in zip(("r1", "r2", "r_total"), got, REFERENCE[name]):
            if abs(g - want) > REDUCTION_PP:
                misses.append(f"{name}.{label}={g:.2f} (want {want}±{REDUCTION_PP:g})")
    if "circl" in names:
        g = rep.dataset("circl").overall.r_total
        if abs(g - REFERENCE["circl"][2]) > CIRCL_TOTAL_PP:
            misses.append(f"circl.r_total={g:.2f} (want {REFERENCE['circl'][2]}±{CIRCL_TOTAL_PP:g})")
    else:
        misses.append("circl: no local feed snapshot")
    if elapsed > BENCHMARK_SECONDS:
        misses.append(f"runtime {elapsed:.0f}s > {BENCHMARK_SECONDS}s")
    ok = report(1, not misses, f"reductions within ±{REDUCTION_PP:g} pp, {elapsed:.1f}s; "
                + ("; ".join(misses) if misses else "all cells in range"))
    assert ok, misses


def test_criterion_2_composition_identity(corpora, d):
    errs = {name: evaluate(snap, d).overall.composition_error() for name, snap in _available(corpora).items()}
    worst = max(errs.values())
    missing = sorted(set(corpora) - set(errs))
    ok = worst < COMPOSITION_EPS
    report(2, ok, f"max |r_total - (1-(1-r1)(1-r2))| = {worst:.2e} over {sorted(errs)}"
           + (f"; not present: {missing}" if missing else ""))
    assert ok


def test_criterion_3_type_counts(attack):
    misses = []
    for name, want in REFERENCE_COUNTS.items():
        got = attack[name].type_counts()
        for t in sorted(set(want) | set(got)):
            g, w = got.get(t, 0), want.get(t, 0)
            if t in EXACT_COUNT_TYPES:
                good = g == w
            else:
                good = abs(g - w) <= COUNT_TOLERANCE * w
            if not good:
                misses.append(f"{name}.{t}={g} (want {w})")
    ok = report(3, not misses, f"identity/marking exact, others ±{COUNT_TOLERANCE:.0%}; "
                + ("; ".join(misses) if misses else "all counts in range"))
    assert ok, misses


def test_criterion_4_lossless(corpora, d):
    t0 = time.perf_counter()
    objs = _all_objects(corpora)
    broken = []
    for o in objs:
        back = from_tinystix(to_tinystix(o, d).to_bytes(), d)
        if back != o or canonical_json(back) != canonical_json(o):
            broken.append(str(o.id))
    test_codec_properties.test_random_objects_roundtrip()
    elapsed = time.perf_counter() - t0
    ok = not broken and elapsed < CODEC_SECONDS
    report(4, ok, f"{len(objs) - len(broken)}/{len(objs)} corpus objects lossless, "
           f"{test_codec_properties.N_EXAMPLES} fuzzed, {elapsed:.1f}s (limit {CODEC_SECONDS}s)")
    assert ok, broken[:10]


def _flip(data, rng):
    out = bytearray(data)
    bit = rng.randrange(len(out) * 8)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


def _rejects(fn, data, keys):
    try:
        fn(data, keys)
    except TinyStixError:
        return True
    return False


def test_criterion_5_security(corpora, d):
    keys = KeyStore([generate_signing_key(b"ed"), generate_signing_key(b"p256", ALG_ES256),
                     generate_aead_key(b"box")])
    objs = _all_objects(corpora)
    wire = [to_tinystix(o, d) for o in objs]
    roundtrip_bad = 0
    for p in wire:
        raw = p.to_bytes()
        if verify(sign(p, keys.get(b"ed")).to_bytes(), keys).to_bytes() != raw:
            roundtrip_bad += 1
        if decrypt(encrypt(p, keys.get(b"box")).to_bytes(), keys).to_bytes() != raw:
            roundtrip_bad += 1
    rng = random.Random(5)
    caught = {}
    for label, seal, open_ in (("ed25519", lambda p: sign(p, keys.get(b"ed")), verify),
                               ("es256", lambda p: sign(p, keys.get(b"p256")), verify),
                               ("aes-ccm", lambda p: encrypt(p, keys.get(b"box")), decrypt)):
        hits = 0
        for _ in range(TAMPER_TRIALS):
            sealed = seal(rng.choice(wire)).to_bytes()
            hits += _rejects(open_, _flip(sealed, rng), keys)
        caught[label] = hits
    ok = roundtrip_bad == 0 and all(v == TAMPER_TRIALS for v in caught.values())
    report(5, ok, f"{len(wire)} payloads signed+encrypted, {roundtrip_bad} roundtrip failures; tamper detected "
           + ", ".join(f"{k} {v}/{TAMPER_TRIALS}" for k, v in caught.items()))
    assert ok


def _loopback_checks(d):
    checks = {}
    w = World(d)
    try:
        c = w.client()
        objs = make_objects(100, big_every=17)
        wire = payloads(d, objs)
        st = c.add(w.coll.id, wire)
        checks["visibility"] = all(s.ok for s in st) and c.get_all(w.coll.id) == wire
        rows = [(p, o.object_type, str(o.id), parse_time(s.added_at)) for p, o, s in zip(wire, objs, st)]
        good = True
        for t, i, a in itertools.product([None, "indicator", "tool", "campaign"],
                                         [None, rows[0][2], rows[57][2]],
                                         [None, T0 - timedelta(days=1), rows[41][3], rows[-1][3]]):
            expected = [p for p, ot, oi, at in rows
                        if (t is None or ot == t) and (i is None or oi == i) and (a is None or at > a)]
            good &= c.get_all(w.coll.id, FilterSpec(t, i, a)) == expected
        checks["filters"] = good
        checks["pagination"] = all(
            [o for p in c.pages(w.coll.id, FilterSpec(page_limit=k)) for o in p.objects] == wire
            for k in (1, 7, 100))

        n, m = 5, 3
        msgs = payloads(d, make_objects(n, seed="pubsub"))
        boxes = [Inbox() for _ in range(m)]
        subs = [w.client().subscribe("alerts", b) for b in boxes]
        counts = [c.publish("alerts", p) for p in msgs]
        wait_until(lambda: all(len(b) == n for b in boxes), 10)
        checks["n_by_m"] = counts == [m] * n and sum(len(b) for b in boxes) == n * m
        late = Inbox()
        obs = w.client().subscribe("alerts", late)
        checks["retained"] = wait_until(lambda: len(late) == 1, 5) and late.items == [msgs[-1]]
        for s in subs + [obs]:
            s.cancel()
        wait_until(lambda: w.server.observer_count == 0, 5)
        silent = c.publish("alerts", msgs[0]) == 0
        threading.Event().wait(0.3)
        checks["cancellation"] = silent and all(len(b) == n for b in boxes) and len(late) == 1
    finally:
        w.close()
    return checks


def _udp_check(d):
    params = TransmissionParams.fast(ack_timeout=0.1)
    store = CollectionStore()
    coll = store.create("udp")
    server = ExchangeServer(UdpTransport("127.0.0.1", 0, loss=UDP_LOSS, seed=21), d, store, params=params)
    client = ExchangeClient(UdpTransport("127.0.0.1", 0, loss=UDP_LOSS, seed=22), server.address, params,
                            confirmable=True)
    try:
        wire = payloads(d, make_objects(40, big_every=7, seed="udp"))
        ok = all(s.ok for i in range(0, len(wire), 5) for s in client.add(coll.id, wire[i:i + 5]))
        return ok and client.get_all(coll.id) == wire and client.get_all(coll.id, FilterSpec(page_limit=6)) == wire
    finally:
        client.close()
        server.close()


@pytest.mark.network
def test_criterion_6_exchange(d):
    checks = _loopback_checks(d)
    checks[f"udp_loss_{UDP_LOSS:.0%}"] = _udp_check(d)
    failed = [k for k, v in checks.items() if not v]
    ok = report(6, not failed, ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok, failed


def test_criterion_7_size_order(corpora, d):
    viol, total = [], 0
    for snap in _available(corpora).values():
        res = evaluate(snap, d)
        viol += res.violations
        total += res.overall.n
    missing = sorted(set(corpora) - set(_available(corpora)))
    ok = not viol
    report(7, ok, f"{len(viol)} violations of s2 <= s1 <= s0 over {total} objects"
           + (f"; not present: {missing}" if missing else ""))
    assert ok, viol[:10]
