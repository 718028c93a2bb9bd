"""``tinystix`` command line.

Payload bytes go to stdout; diagnostics go to stderr. Exit status is 0 on
success, 1 for domain errors and 2 for usage errors. Errors are reported as a
single ``error: <Kind>: <message>`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
import uuid
from pathlib import Path

import cbor2

from . import __version__
from .benchmark import AGGREGATE, MEAN, emit_report, run_benchmark
from .codec import PROFILES, TinyStixPayload, from_tinystix, to_tinystix
from .cose import (
    ALG_AES_CCM_16_64_128,
    ALG_EDDSA,
    ALG_ES256,
    KeyStore,
    decrypt_bytes,
    encrypt_bytes,
    generate_aead_key,
    generate_signing_key,
    is_cose,
    sign_bytes,
    verify_bytes,
)
from .errors import TinyStixError
from .exchange import (
    CollectionStore,
    ExchangeClient,
    ExchangeServer,
    FilterSpec,
    LoopbackNetwork,
    TransmissionParams,
    UdpTransport,
)
from .exchange.repository import parse_time
from .exchange.transport import parse_bind
from .ingest import CORPORA, load_corpus, save_snapshot
from .model import canonical_bytes, parse_bundle, parse_object, strip_non_native
from .vocab import build_dictionary, default_entry_set, load_default_dictionary, save_dictionary

log = logging.getLogger("tinystix")

KEYS_ENV_VAR = "TINYSTIX_KEYS"
DEFAULT_BIND = "127.0.0.1:5683"
DEFAULT_COLLECTION = uuid.uuid5(uuid.NAMESPACE_URL, "tinystix:collection:default")
_ALGS = {"eddsa": ALG_EDDSA, "es256": ALG_ES256, "aes-ccm": ALG_AES_CCM_16_64_128}


class UsageError(Exception):
    pass


# -- io helpers -------------------------------------------------------------

def _read_input(path) -> bytes:
    if path in (None, "-"):
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _write(data: bytes) -> None:
    sys.stdout.buffer.write(data)
    sys.stdout.buffer.flush()


def _write_line(text: str) -> None:
    _write((text + "\n").encode("utf-8"))


def _dictionary(args):
    return load_default_dictionary(args.dict)


def _keys_path(args) -> str:
    return args.keys or os.environ.get(KEYS_ENV_VAR) or "tinystix-keys.cbor"


def _keystore(args) -> KeyStore:
    return KeyStore.load(_keys_path(args))


def _key(store: KeyStore, kid: str | None, want_signing: bool):
    if kid is not None:
        return store.get(kid.encode("utf-8"))
    for k in store:
        if (k.is_signing if want_signing else k.is_aead):
            return k
    raise UsageError("no suitable key in the key store; pass --kid or run keygen")


# -- offline commands -------------------------------------------------------

def cmd_convert(args) -> int:
    d = _dictionary(args)
    data = _read_input(args.input)
    if args.to == "tiny":
        obj = parse_object(data)
        if args.strip:
            obj = strip_non_native(obj)
        _write(to_tinystix(obj, d, args.profile).to_bytes())
    else:
        obj = from_tinystix(TinyStixPayload.from_bytes(data), d)
        _write(canonical_bytes(obj.properties) + (b"\n" if args.newline else b""))
    return 0


def cmd_validate(args) -> int:
    data = _read_input(args.input)
    try:
        tree = json.loads(data)
    except ValueError:
        tree = None  # parse_object reports the error
    if isinstance(tree, dict) and tree.get("type") == "bundle":
        bundle = parse_bundle(data)
        print(f"ok bundle {bundle.id} ({len(bundle.objects)} objects)", file=sys.stderr)
    else:
        obj = parse_object(data)
        print(f"ok {obj.object_type} {obj.id}", file=sys.stderr)
    return 0


def cmd_keygen(args) -> int:
    path = _keys_path(args)
    store = KeyStore.load(path) if Path(path).exists() else KeyStore()
    alg = _ALGS[args.alg]
    kid = args.kid.encode("utf-8")
    if kid in store:
        raise UsageError(f"key id {args.kid!r} already in {path}")
    key = generate_aead_key(kid, alg) if alg == ALG_AES_CCM_16_64_128 else generate_signing_key(kid, alg)
    store.add(key)
    store.save(path)
    if args.public_out:
        store.public_view().save(args.public_out, include_private=False)
    print(f"added key {args.kid} ({args.alg}) to {path}", file=sys.stderr)
    return 0


def cmd_sign(args) -> int:
    key = _key(_keystore(args), args.kid, True)
    _write(sign_bytes(_read_input(args.input), key).to_bytes())
    return 0


def cmd_verify(args) -> int:
    _write(verify_bytes(_read_input(args.input), _keystore(args)))
    return 0


def cmd_encrypt(args) -> int:
    key = _key(_keystore(args), args.kid, False)
    _write(encrypt_bytes(_read_input(args.input), key).to_bytes())
    return 0


def cmd_decrypt(args) -> int:
    _write(decrypt_bytes(_read_input(args.input), _keystore(args)))
    return 0


def cmd_build_dictionary(args) -> int:
    d = build_dictionary(default_entry_set(), args.version)
    if args.out in (None, "-"):
        _write(d.to_cbor())
    else:
        save_dictionary(d, args.out)
        print(f"wrote dictionary v{d.version_id} to {args.out}: {len(d.key_map)} keys, "
              f"{len(d.type_map)} types, {len(d.vocab_maps)} vocabularies", file=sys.stderr)
    return 0


def cmd_ingest(args) -> int:
    snap = load_corpus(args.corpus, args.data)
    for w in snap.warnings[:20]:
        print(f"warning: {w}", file=sys.stderr)
    if len(snap.warnings) > 20:
        print(f"warning: ... {len(snap.warnings) - 20} more", file=sys.stderr)
    counts = snap.type_counts()
    for t in sorted(counts):
        _write_line(f"{t}\t{counts[t]}")
    _write_line(f"total\t{len(snap)}")
    if args.out:
        save_snapshot(snap, args.out, _dictionary(args))
        print(f"snapshot written to {args.out}", file=sys.stderr)
    return 0


def cmd_benchmark(args) -> int:
    corpora = args.corpus or ["all"]
    if "all" in corpora:
        corpora = list(CORPORA)
    report = run_benchmark(corpora, _dictionary(args), args.data, args.mode)
    _write(emit_report(report, args.format).encode("utf-8"))
    return 0


# -- network commands -------------------------------------------------------

def _params(args) -> TransmissionParams:
    if args.transport == "loopback":
        return TransmissionParams.fast()
    return TransmissionParams(ack_timeout=args.ack_timeout)


class _Session:
    """Client plus, for the loopback transport, an in-process server."""

    def __init__(self, args):
        self.server = None
        params = _params(args)
        if args.transport == "loopback":
            net = LoopbackNetwork()
            store = CollectionStore()
            store.create("default", DEFAULT_COLLECTION)
            self.server = ExchangeServer(net.transport("server"), _dictionary(args), store, params=params)
            self.client = ExchangeClient(net.transport(), self.server.address, params)
        else:
            try:
                remote = parse_bind(args.bind)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            host = "::" if ":" in remote[0] else "0.0.0.0"
            self.client = ExchangeClient(UdpTransport(host, 0), remote, params)

    def close(self):
        self.client.close()
        if self.server is not None:
            self.server.close()


def _payload_out(args, payload: bytes) -> None:
    if args.json:
        d = _dictionary(args)
        inner = payload
        if is_cose(payload):
            inner = verify_bytes(payload, _keystore(args))
        obj = from_tinystix(TinyStixPayload.from_bytes(inner), d)
        _write(canonical_bytes(obj.properties) + b"\n")
    else:
        # a CBOR sequence of byte strings keeps binary output self-delimiting
        _write(cbor2.dumps(payload))


def _to_payloads(args, inputs) -> list:
    d = None
    out = []
    for path in inputs or ["-"]:
        data = _read_input(path)
        if args.from_json:
            d = d or _dictionary(args)
            out.append(to_tinystix(strip_non_native(parse_object(data)), d).to_bytes())
        else:
            out.append(data)
    return out


def cmd_serve(args) -> int:
    d = _dictionary(args)
    keys = None
    if args.require_signatures or args.keys or os.environ.get(KEYS_ENV_VAR):
        keys = _keystore(args).public_view()
    store = CollectionStore()
    titles = args.collection or ["default"]
    for i, title in enumerate(titles):
        cid = DEFAULT_COLLECTION if i == 0 else uuid.uuid5(DEFAULT_COLLECTION, title)
        store.create(title, cid)
    if args.transport == "loopback":
        transport = LoopbackNetwork().transport("server")
    else:
        try:
            host, port = parse_bind(args.bind)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        transport = UdpTransport(host, port)
    server = ExchangeServer(transport, d, store, keys=keys, require_signatures=args.require_signatures,
                            params=_params(args))
    server.broker.confirmable = args.confirmable_notifications
    for c in store:
        print(f"collection {c.id} {c.title}", file=sys.stderr)
    print(f"serving on {server.address}", file=sys.stderr)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait(args.duration) if args.duration else stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def cmd_get(args) -> int:
    spec = FilterSpec(args.type, args.id, parse_time(args.added_after) if args.added_after else None,
                      args.limit, args.token)
    s = _Session(args)
    try:
        if args.all:
            objects = s.client.get_all(args.collection, spec)
        else:
            env = s.client.get(args.collection, spec)
            objects = env.objects
            if env.more:
                print(f"more: next token {env.next_token}", file=sys.stderr)
        for p in objects:
            _payload_out(args, p)
    finally:
        s.close()
    return 0


def cmd_add(args) -> int:
    payloads = _to_payloads(args, args.inputs)
    s = _Session(args)
    try:
        statuses = s.client.add(args.collection, payloads)
    finally:
        s.close()
    for st in statuses:
        _write_line(json.dumps(st.to_obj()))
    return 0 if all(st.ok for st in statuses) else 1


def cmd_publish(args) -> int:
    payloads = _to_payloads(args, [args.input] if args.input else None)
    s = _Session(args)
    try:
        count = s.client.publish(args.topic, payloads[0])
    finally:
        s.close()
    _write_line(str(count))
    return 0


def cmd_subscribe(args) -> int:
    received = threading.Semaphore(0)
    lock = threading.Lock()

    def on_payload(payload: bytes):
        with lock:
            _payload_out(args, payload)
        received.release()

    s = _Session(args)
    try:
        obs = s.client.subscribe(args.topic, on_payload)
        got = 0
        try:
            while args.count is None or got < args.count:
                if not received.acquire(timeout=args.timeout):
                    break
                got += 1
        except KeyboardInterrupt:
            pass
        obs.cancel()
    finally:
        s.close()
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dict", help="dictionary file (default: $TINYSTIX_DICT or the shipped v1)")
    common.add_argument("--keys", help=f"key store file (default: ${KEYS_ENV_VAR} or ./tinystix-keys.cbor)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    net = argparse.ArgumentParser(add_help=False)
    net.add_argument("--bind", default=DEFAULT_BIND, help="server address host:port")
    net.add_argument("--transport", choices=("udp", "loopback"), default="udp")
    net.add_argument("--ack-timeout", type=float, default=2.0)

    p = argparse.ArgumentParser(prog="tinystix", description="Compact CBOR encoding of STIX 2.1 objects.")
    p.add_argument("--version", action="version", version=f"tinystix {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    c = sub.add_parser("convert", parents=[common], help="JSON <-> tinySTIX")
    c.add_argument("--to", choices=("tiny", "json"), required=True)
    c.add_argument("--profile", choices=PROFILES, default="parity")
    c.add_argument("--strip", action="store_true", help="drop non-native properties first")
    c.add_argument("--newline", action="store_true", help="terminate JSON output with a newline")
    c.add_argument("input", nargs="?")
    c.set_defaults(func=cmd_convert)

    c = sub.add_parser("validate", parents=[common], help="check a STIX object or bundle")
    c.add_argument("input", nargs="?")
    c.set_defaults(func=cmd_validate)

    c = sub.add_parser("keygen", parents=[common], help="add a key to the key store")
    c.add_argument("--kid", required=True)
    c.add_argument("--alg", choices=sorted(_ALGS), default="eddsa")
    c.add_argument("--public-out", help="also write the public half of the store here")
    c.set_defaults(func=cmd_keygen)

    for name, func, help_ in (("sign", cmd_sign, "wrap in COSE_Sign1"),
                              ("encrypt", cmd_encrypt, "wrap in COSE_Encrypt0")):
        c = sub.add_parser(name, parents=[common], help=help_)
        c.add_argument("--kid")
        c.add_argument("input", nargs="?")
        c.set_defaults(func=func)
    for name, func, help_ in (("verify", cmd_verify, "check a COSE_Sign1, print the payload"),
                              ("decrypt", cmd_decrypt, "open a COSE_Encrypt0, print the payload")):
        c = sub.add_parser(name, parents=[common], help=help_)
        c.add_argument("input", nargs="?")
        c.set_defaults(func=func)

    c = sub.add_parser("build-dictionary", parents=[common], help="derive the dictionary file")
    c.add_argument("--dict-version", type=int, default=1, dest="version")
    c.add_argument("--out", "-o")
    c.set_defaults(func=cmd_build_dictionary)

    c = sub.add_parser("ingest", parents=[common], help="load a corpus, print per-type counts")
    c.add_argument("--corpus", choices=CORPORA, required=True)
    c.add_argument("--data", help="corpus root (default: $TINYSTIX_DATA or ./data)")
    c.add_argument("--out", help="write a snapshot cache")
    c.set_defaults(func=cmd_ingest)

    c = sub.add_parser("benchmark", parents=[common], help="size-reduction report")
    c.add_argument("--corpus", action="append", choices=CORPORA + ("all",))
    c.add_argument("--data")
    c.add_argument("--mode", choices=(AGGREGATE, MEAN), default=AGGREGATE)
    c.add_argument("--format", choices=("table", "csv"), default="table")
    c.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("serve", parents=[common, net], help="run the collections and channels server")
    c.add_argument("--collection", action="append", help="collection title (repeatable)")
    c.add_argument("--require-signatures", action="store_true")
    c.add_argument("--confirmable-notifications", action="store_true")
    c.add_argument("--duration", type=float, help="stop after this many seconds")
    c.set_defaults(func=cmd_serve)

    c = sub.add_parser("get", parents=[common, net], help="query a collection")
    c.add_argument("--collection", default=str(DEFAULT_COLLECTION))
    c.add_argument("--type")
    c.add_argument("--id")
    c.add_argument("--added-after")
    c.add_argument("--limit", type=int)
    c.add_argument("--token")
    c.add_argument("--all", action="store_true", help="follow page tokens")
    c.add_argument("--json", action="store_true", help="decode payloads to JSON lines")
    c.set_defaults(func=cmd_get)

    c = sub.add_parser("add", parents=[common, net], help="add payloads to a collection")
    c.add_argument("--collection", default=str(DEFAULT_COLLECTION))
    c.add_argument("--from-json", action="store_true", help="inputs are STIX JSON objects")
    c.add_argument("inputs", nargs="*")
    c.set_defaults(func=cmd_add)

    c = sub.add_parser("publish", parents=[common, net], help="publish one payload to a channel")
    c.add_argument("--topic", required=True)
    c.add_argument("--from-json", action="store_true")
    c.add_argument("input", nargs="?")
    c.set_defaults(func=cmd_publish)

    c = sub.add_parser("subscribe", parents=[common, net], help="observe a channel")
    c.add_argument("--topic", required=True)
    c.add_argument("--count", type=int, help="exit after this many payloads")
    c.add_argument("--timeout", type=float, help="exit after this long without a payload")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_subscribe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except TinyStixError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
