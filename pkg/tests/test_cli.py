import json
import socket
import subprocess
import sys
import time

import cbor2
import pytest

from tinystix.cli import DEFAULT_COLLECTION, main
from tinystix.codec import TinyStixPayload, from_tinystix, to_tinystix
from tinystix.model import canonical_json, from_dict, tree_equal
from tinystix.vocab import default_dictionary_path

from .conftest import INDICATOR, make_objects


@pytest.fixture
def run(capsysbinary, monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TINYSTIX_KEYS", raising=False)

    def go(*argv):
        code = main([str(a) for a in argv])
        out, err = capsysbinary.readouterr()
        return code, out, err.decode()
    return go


@pytest.fixture
def ind_file(tmp_path):
    p = tmp_path / "ind.json"
    p.write_bytes(json.dumps(INDICATOR, indent=2).encode())
    return p


def test_convert_roundtrip(run, ind_file, tmp_path, d):
    code, tiny, _ = run("convert", "--to", "tiny", ind_file)
    assert code == 0
    assert tiny == to_tinystix(from_dict(dict(INDICATOR)), d).to_bytes()
    (tmp_path / "ind.tiny").write_bytes(tiny)
    code, js, _ = run("convert", "--to", "json", tmp_path / "ind.tiny")
    assert code == 0 and js == canonical_json(INDICATOR)
    code, js, _ = run("convert", "--to", "json", "--newline", tmp_path / "ind.tiny")
    assert js.endswith(b"}\n")


def test_convert_strip_and_profile(run, tmp_path, d):
    p = tmp_path / "x.json"
    p.write_text(json.dumps(dict(INDICATOR, x_acme=1)))
    _, kept, _ = run("convert", "--to", "tiny", p)
    _, stripped, _ = run("convert", "--to", "tiny", "--strip", "--profile", "extended", p)
    assert "x_acme" in from_tinystix(TinyStixPayload.from_bytes(kept), d).properties
    assert "x_acme" not in from_tinystix(TinyStixPayload.from_bytes(stripped), d).properties


def test_validate(run, ind_file, tmp_path):
    code, out, err = run("validate", ind_file)
    assert code == 0 and out == b"" and err.startswith("ok indicator indicator--")
    bundle = tmp_path / "b.json"
    bundle.write_text(json.dumps({"type": "bundle", "id": "bundle--" + INDICATOR["id"].split("--")[1],
                                  "objects": [INDICATOR]}))
    code, _, err = run("validate", bundle)
    assert code == 0 and "(1 objects)" in err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({k: v for k, v in INDICATOR.items() if k != "pattern"}))
    code, out, err = run("validate", bad)
    assert code == 1 and out == b""
    assert err.startswith("error: MissingRequiredProperty:")
    assert err.count("\n") == 1


def test_exit_codes(run, tmp_path):
    code, _, err = run("convert", "--to", "json", tmp_path / "missing.tiny")
    assert code == 1 and err.startswith("error: FileNotFoundError:")
    junk = tmp_path / "junk.tiny"
    junk.write_bytes(b"\xff\x00")
    code, _, err = run("convert", "--to", "json", junk)
    assert code == 1 and err.startswith("error: MalformedCbor:")
    with pytest.raises(SystemExit) as exc:
        main(["convert"])
    assert exc.value.code == 2


def test_keys_sign_verify_encrypt_decrypt(run, ind_file, tmp_path):
    assert run("keygen", "--kid", "ed")[0] == 0
    assert run("keygen", "--kid", "aes", "--alg", "aes-ccm")[0] == 0
    assert run("keygen", "--kid", "p256", "--alg", "es256", "--public-out", "pub.cbor")[0] == 0
    code, _, err = run("keygen", "--kid", "ed")
    assert code == 2 and err.startswith("error: usage:")
    _, tiny, _ = run("convert", "--to", "tiny", ind_file)
    (tmp_path / "t").write_bytes(tiny)
    for kid in ("ed", "p256"):
        _, signed, _ = run("sign", "--kid", kid, tmp_path / "t")
        (tmp_path / "s").write_bytes(signed)
        assert run("verify", tmp_path / "s")[1] == tiny
        assert run("verify", "--keys", "pub.cbor", tmp_path / "s")[1] == tiny
        flipped = bytearray(signed)
        flipped[-1] ^= 1
        (tmp_path / "s").write_bytes(bytes(flipped))
        code, out, err = run("verify", tmp_path / "s")
        assert code == 1 and out == b"" and err.startswith("error: SignatureInvalid:")
    _, sealed, _ = run("encrypt", tmp_path / "t")
    (tmp_path / "e").write_bytes(sealed)
    assert run("decrypt", tmp_path / "e")[1] == tiny
    code, _, err = run("decrypt", "--keys", "pub.cbor", tmp_path / "e")
    assert code == 1 and err.startswith("error: ")


def test_no_key_is_usage_error(run, ind_file):
    run("keygen", "--kid", "ed")
    code, _, err = run("encrypt", ind_file)
    assert code == 2 and "keygen" in err


def test_build_dictionary_matches_shipped(run, tmp_path):
    code, out, _ = run("build-dictionary")
    assert code == 0 and out == default_dictionary_path().read_bytes()
    code, _, err = run("build-dictionary", "--dict-version", "2", "--out", tmp_path / "d2.cbor")
    assert code == 0 and "v2" in err
    assert cbor2.loads((tmp_path / "d2.cbor").read_bytes())[0] == 2


def test_ingest_and_benchmark(run, data_root, tmp_path):
    code, out, _ = run("ingest", "--corpus", "ics", "--data", data_root, "--out", tmp_path / "ics.cbor")
    lines = dict(line.split("\t") for line in out.decode().splitlines())
    assert code == 0 and int(lines["total"]) == sum(int(v) for k, v in lines.items() if k != "total")
    assert (tmp_path / "ics.cbor").stat().st_size > 0
    code, out, _ = run("benchmark", "--corpus", "ics", "--data", data_root, "--format", "csv")
    assert code == 0 and out.startswith(b"# mode=aggregate")


def test_loopback_add_and_get(run, ind_file):
    code, out, _ = run("add", "--transport", "loopback", "--from-json", ind_file)
    assert code == 0
    assert json.loads(out) == {"status": "ok", "id": INDICATOR["id"], "added": json.loads(out)["added"]}
    code, out, _ = run("get", "--transport", "loopback")
    assert code == 0 and out == b""  # each loopback session starts from an empty store


def _free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _cli(*argv, stdin=None, timeout=30):
    return subprocess.run([sys.executable, "-m", "tinystix.cli", *map(str, argv)], input=stdin,
                          capture_output=True, timeout=timeout)


def test_udp_end_to_end(tmp_path, d):
    bind = f"127.0.0.1:{_free_port()}"
    server = subprocess.Popen([sys.executable, "-m", "tinystix.cli", "serve", "--bind", bind,
                               "--duration", "60"], stderr=subprocess.PIPE)
    try:
        line = server.stderr.readline().decode()
        assert str(DEFAULT_COLLECTION) in line
        assert "serving on" in server.stderr.readline().decode()
        objs = make_objects(5)
        files = []
        for i, o in enumerate(objs):
            p = tmp_path / f"o{i}.json"
            p.write_text(json.dumps(o.properties))
            files.append(p)
        r = _cli("add", "--bind", bind, "--from-json", *files)
        assert r.returncode == 0, r.stderr
        assert [json.loads(x)["status"] for x in r.stdout.splitlines()] == ["ok"] * 5
        sub = subprocess.Popen([sys.executable, "-m", "tinystix.cli", "subscribe", "--bind", bind,
                                "--topic", "alerts", "--count", "1", "--timeout", "20", "--json"],
                               stdout=subprocess.PIPE, stderr=subprocess.PIPE)
        time.sleep(1.5)
        r = _cli("publish", "--bind", bind, "--topic", "alerts", "--from-json", stdin=files[0].read_bytes())
        assert r.returncode == 0, r.stderr
        got, _ = sub.communicate(timeout=30)
        assert tree_equal(json.loads(got), objs[0].properties)
        r = _cli("get", "--bind", bind, "--all", "--limit", "2")
        assert r.returncode == 0, r.stderr
        payloads = list(_cbor_seq(r.stdout))
        back = [from_tinystix(TinyStixPayload.from_bytes(p), d) for p in payloads]
        assert sorted(str(o.id) for o in back) == sorted(str(o.id) for o in objs)
        r = _cli("get", "--bind", bind, "--collection", "no-such")
        assert r.returncode == 1 and r.stderr.startswith(b"error: ")
    finally:
        server.terminate()
        server.wait(timeout=10)


def _cbor_seq(data):
    import io
    fh = io.BytesIO(data)
    while fh.tell() < len(data):
        yield cbor2.load(fh)
