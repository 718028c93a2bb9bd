import random

import cbor2
import pytest

from tinystix.codec import to_tinystix
from tinystix.cose import (
    ALG_ES256,
    CoseKey,
    KeyStore,
    NonceSource,
    ProtectedPayload,
    decrypt,
    decrypt_bytes,
    encrypt,
    encrypt_bytes,
    generate_aead_key,
    generate_signing_key,
    is_cose,
    sign,
    sign_bytes,
    verify,
    verify_bytes,
)
from tinystix.errors import (
    AlgorithmMismatch,
    DecryptionFailed,
    MalformedCose,
    SignatureInvalid,
    TinyStixError,
    UnknownKeyId,
)


@pytest.fixture(scope="module")
def keys():
    return KeyStore([
        generate_signing_key(b"ed"),
        generate_signing_key(b"p256", ALG_ES256),
        generate_aead_key(b"box"),
    ])


def flip(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


@pytest.mark.parametrize("kid", [b"ed", b"p256"])
def test_sign_verify(keys, d, indicator, kid):
    payload = to_tinystix(indicator, d)
    msg = sign(payload, keys.get(kid))
    wire = msg.to_bytes()
    assert wire[0] == 0xD2 and is_cose(wire)
    assert verify(wire, keys) == payload
    assert verify(wire, keys.public_view()) == payload


def test_sign1_structure(keys):
    msg = sign_bytes(b"abc", keys.get(b"ed"))
    tag = cbor2.loads(msg.to_bytes())
    assert tag.tag == 18
    prot, unprot, content, sig = tag.value
    assert cbor2.loads(prot) == {1: -8, 4: b"ed"}
    assert dict(unprot) == {} and content == b"abc" and len(sig) == 64


def test_encrypt_decrypt(keys, d, indicator):
    payload = to_tinystix(indicator, d)
    msg = encrypt(payload, keys.get(b"box"))
    wire = msg.to_bytes()
    assert wire[0] == 0xD0 and is_cose(wire)
    assert payload.to_bytes() not in wire
    assert len(msg.unprotected[5]) == 13
    assert cbor2.loads(msg.protected) == {1: 10, 4: b"box"}
    assert decrypt(wire, keys) == payload


def test_nonces_never_repeat():
    src = NonceSource()
    seen = {src.next() for _ in range(10_000)}
    assert len(seen) == 10_000 and all(len(n) == 13 for n in seen)


def test_unknown_kid_and_wrong_key_kind(keys):
    other = KeyStore([generate_signing_key(b"someone-else")])
    wire = sign_bytes(b"x", other.get(b"someone-else")).to_bytes()
    with pytest.raises(UnknownKeyId):
        verify_bytes(wire, keys)
    with pytest.raises(AlgorithmMismatch):
        encrypt_bytes(b"x", keys.get(b"ed"))
    with pytest.raises(AlgorithmMismatch):
        sign_bytes(b"x", keys.public_view().get(b"ed"))
    with pytest.raises(MalformedCose):
        decrypt_bytes(wire, other)


def test_alg_header_must_match_key(keys):
    # same kid, different algorithm: the protected header no longer matches the stored key
    ed = keys.get(b"ed")
    impostor = generate_signing_key(b"ed", ALG_ES256)
    wire = sign_bytes(b"x", impostor).to_bytes()
    with pytest.raises(AlgorithmMismatch):
        verify_bytes(wire, KeyStore([ed]))


def test_untrusted_signer(keys):
    k = generate_signing_key(b"new")
    store = KeyStore([CoseKey(k.kid, k.alg, public=k.public, trusted=False)])
    wire = sign_bytes(b"x", k).to_bytes()
    with pytest.raises(SignatureInvalid):
        verify_bytes(wire, store)
    assert verify_bytes(wire, store, require_trusted=False) == b"x"


def test_keystore_file_roundtrip(tmp_path, keys):
    p = tmp_path / "keys.cbor"
    keys.save(p)
    assert (p.stat().st_mode & 0o777) == 0o600
    loaded = KeyStore.load(p)
    wire = sign_bytes(b"x", loaded.get(b"ed")).to_bytes()
    assert verify_bytes(wire, keys) == b"x"
    assert decrypt_bytes(encrypt_bytes(b"y", loaded.get(b"box")).to_bytes(), keys) == b"y"
    assert all(isinstance(m, dict) for m in cbor2.loads(p.read_bytes()))


@pytest.mark.parametrize("raw", [b"", b"\xa0", b"\xd2\x80", b"\xd2\x84\x40\xa0\x40",
                                 b"\xd1\x83\x40\xa0\x40"])
def test_malformed(raw, keys):
    with pytest.raises(MalformedCose):
        ProtectedPayload.from_bytes(raw)


@pytest.mark.parametrize("kid", [b"ed", b"p256"])
def test_tamper_sign1(keys, d, indicator, kid):
    wire = sign(to_tinystix(indicator, d), keys.get(kid)).to_bytes()
    rng = random.Random(1)
    failures = 0
    for _ in range(1000):
        with pytest.raises(TinyStixError):
            verify_bytes(flip(wire, rng.randrange(len(wire) * 8)), keys)
        failures += 1
    assert failures == 1000


def test_tamper_encrypt0(keys, d, indicator):
    wire = encrypt(to_tinystix(indicator, d), keys.get(b"box")).to_bytes()
    rng = random.Random(2)
    for _ in range(1000):
        with pytest.raises((DecryptionFailed, MalformedCose, UnknownKeyId, AlgorithmMismatch)):
            decrypt_bytes(flip(wire, rng.randrange(len(wire) * 8)), keys)


# -- interoperability with pycose -------------------------------------------

def _pycose_key(key: CoseKey, private=True):
    from pycose.keys import CoseKey as PyKey
    m = {k: v for k, v in key.to_cose_key(private).items() if isinstance(k, int)}
    return PyKey.from_dict(m)


@pytest.mark.parametrize("kid", [b"ed", b"p256"])
def test_pycose_verifies_ours(pycose, keys, kid):
    from pycose.messages import CoseMessage
    wire = sign_bytes(b"payload bytes", keys.get(kid)).to_bytes()
    msg = CoseMessage.decode(wire)
    msg.key = _pycose_key(keys.get(kid), private=False)
    assert msg.verify_signature() and msg.payload == b"payload bytes"


@pytest.mark.parametrize("kid", [b"ed", b"p256"])
def test_we_verify_pycose(pycose, keys, kid):
    from pycose.headers import KID, Algorithm
    from pycose.messages import Sign1Message
    msg = Sign1Message(phdr={Algorithm: keys.get(kid).alg, KID: kid}, payload=b"from pycose")
    msg.key = _pycose_key(keys.get(kid))
    assert verify_bytes(msg.encode(), keys) == b"from pycose"


def test_pycose_decrypts_ours(pycose, keys):
    from pycose.messages import CoseMessage
    wire = encrypt_bytes(b"secret", keys.get(b"box")).to_bytes()
    msg = CoseMessage.decode(wire)
    msg.key = _pycose_key(keys.get(b"box"))
    assert msg.decrypt() == b"secret"


def test_we_decrypt_pycose(pycose, keys):
    from pycose.headers import IV, KID, Algorithm
    from pycose.messages import Enc0Message
    msg = Enc0Message(phdr={Algorithm: 10, KID: b"box"}, uhdr={IV: bytes(range(13))}, payload=b"hello")
    msg.key = _pycose_key(keys.get(b"box"))
    assert decrypt_bytes(msg.encode(), keys) == b"hello"
