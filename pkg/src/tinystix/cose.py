"""COSE_Sign1 / COSE_Encrypt0 protection for tinySTIX payloads.

Structures follow the RFC 8152 wire format so any COSE library can read them.
Signing uses EdDSA over Ed25519 (deterministic) by default, with ES256 as an
alternative; encryption uses AES-CCM-16-64-128, the constrained-node profile.
"""

from __future__ import annotations

import io
import os
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import cbor2
from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, ed25519
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESCCM

from .codec import TinyStixPayload
from .errors import (
    AlgorithmMismatch,
    DecryptionFailed,
    MalformedCose,
    SignatureInvalid,
    UnknownKeyId,
)

# COSE registry values
ALG_EDDSA = -8
ALG_ES256 = -7
ALG_AES_CCM_16_64_128 = 10

TAG_SIGN1 = 18
TAG_ENCRYPT0 = 16

HDR_ALG = 1
HDR_KID = 4
HDR_IV = 5

KTY_OKP = 1
KTY_EC2 = 2
KTY_SYMMETRIC = 4
CRV_P256 = 1
CRV_ED25519 = 6

SIGNATURE_ALGS = (ALG_EDDSA, ALG_ES256)
AEAD_ALGS = (ALG_AES_CCM_16_64_128,)

_CCM_NONCE = 13
_CCM_TAG = 8
_TRUSTED_LABEL = "trusted"


def _dumps(value) -> bytes:
    return cbor2.dumps(value, canonical=False)


# -- nonces -----------------------------------------------------------------

class NonceSource:
    """13-byte CCM nonces: a random 5-byte prefix plus a locked 64-bit counter.

    Distinct calls on one source never return the same nonce, even across threads.
    """

    def __init__(self, prefix: bytes | None = None):
        self._prefix = prefix if prefix is not None else os.urandom(_CCM_NONCE - 8)
        if len(self._prefix) != _CCM_NONCE - 8:
            raise ValueError("nonce prefix must be 5 bytes")
        self._counter = 0
        self._lock = threading.Lock()

    def next(self) -> bytes:
        with self._lock:
            n = self._counter
            if n >= 1 << 64:
                raise OverflowError("nonce space exhausted; rotate the key")
            self._counter = n + 1
        return self._prefix + n.to_bytes(8, "big")


# -- keys -------------------------------------------------------------------

@dataclass(frozen=True)
class CoseKey:
    """One key: signing (private), verifying (public) or symmetric."""

    kid: bytes
    alg: int
    private: object = None
    public: object = None
    secret: bytes | None = None
    trusted: bool = True
    nonces: NonceSource = field(default_factory=NonceSource, compare=False, repr=False)

    @property
    def is_signing(self) -> bool:
        return self.alg in SIGNATURE_ALGS and self.private is not None

    @property
    def is_aead(self) -> bool:
        return self.alg in AEAD_ALGS and self.secret is not None

    def verifying_key(self) -> "CoseKey":
        return CoseKey(self.kid, self.alg, public=self.public, trusted=self.trusted)

    # COSE_Key map

    def to_cose_key(self, include_private: bool = True) -> dict:
        m: dict = {2: self.kid, 3: self.alg}
        if self.alg == ALG_EDDSA:
            m.update({1: KTY_OKP, -1: CRV_ED25519, -2: _raw_public(self.public)})
            if include_private and self.private is not None:
                m[-4] = self.private.private_bytes_raw()
        elif self.alg == ALG_ES256:
            nums = self.public.public_numbers()
            m.update({1: KTY_EC2, -1: CRV_P256,
                      -2: nums.x.to_bytes(32, "big"), -3: nums.y.to_bytes(32, "big")})
            if include_private and self.private is not None:
                m[-4] = self.private.private_numbers().private_value.to_bytes(32, "big")
        elif self.alg in AEAD_ALGS:
            m[1] = KTY_SYMMETRIC
            if include_private:
                m[-1] = self.secret
        else:
            raise AlgorithmMismatch(f"unsupported algorithm {self.alg}")
        m[_TRUSTED_LABEL] = self.trusted
        return m

    @classmethod
    def from_cose_key(cls, m: Mapping) -> "CoseKey":
        try:
            kty, kid, alg = m[1], bytes(m[2]), m[3]
            trusted = bool(m.get(_TRUSTED_LABEL, True))
            if kty == KTY_OKP and alg == ALG_EDDSA:
                pub = ed25519.Ed25519PublicKey.from_public_bytes(m[-2])
                priv = ed25519.Ed25519PrivateKey.from_private_bytes(m[-4]) if -4 in m else None
                return cls(kid, alg, private=priv, public=pub, trusted=trusted)
            if kty == KTY_EC2 and alg == ALG_ES256:
                nums = ec.EllipticCurvePublicNumbers(
                    int.from_bytes(m[-2], "big"), int.from_bytes(m[-3], "big"), ec.SECP256R1())
                pub = nums.public_key()
                priv = None
                if -4 in m:
                    priv = ec.derive_private_key(int.from_bytes(m[-4], "big"), ec.SECP256R1())
                return cls(kid, alg, private=priv, public=pub, trusted=trusted)
            if kty == KTY_SYMMETRIC and alg in AEAD_ALGS:
                return cls(kid, alg, secret=bytes(m[-1]), trusted=trusted)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCose(f"bad COSE_Key: {exc}") from None
        raise AlgorithmMismatch(f"unsupported key type {kty}/alg {alg}")


def _raw_public(pub) -> bytes:
    return pub.public_bytes_raw()


def generate_signing_key(kid: bytes, alg: int = ALG_EDDSA) -> CoseKey:
    if alg == ALG_EDDSA:
        priv = ed25519.Ed25519PrivateKey.generate()
    elif alg == ALG_ES256:
        priv = ec.generate_private_key(ec.SECP256R1())
    else:
        raise AlgorithmMismatch(f"{alg} is not a supported signature algorithm")
    return CoseKey(bytes(kid), alg, private=priv, public=priv.public_key())


def generate_aead_key(kid: bytes, alg: int = ALG_AES_CCM_16_64_128) -> CoseKey:
    if alg not in AEAD_ALGS:
        raise AlgorithmMismatch(f"{alg} is not a supported AEAD algorithm")
    return CoseKey(bytes(kid), alg, secret=AESCCM.generate_key(128))


class KeyStore:
    """Keys by key id. Serialized as a CBOR array of COSE_Key maps (a COSE_KeySet)."""

    def __init__(self, keys: Iterable[CoseKey] = ()):
        self._keys: dict[bytes, CoseKey] = {}
        for k in keys:
            self.add(k)

    def add(self, key: CoseKey) -> None:
        if key.kid in self._keys:
            raise ValueError(f"duplicate key id {key.kid.hex()}")
        self._keys[key.kid] = key

    def get(self, kid: bytes) -> CoseKey:
        try:
            return self._keys[bytes(kid)]
        except (KeyError, TypeError):
            raise UnknownKeyId(bytes(kid) if isinstance(kid, (bytes, bytearray)) else b"") from None

    def __contains__(self, kid) -> bool:
        return kid in self._keys

    def __iter__(self):
        return iter(self._keys.values())

    def __len__(self) -> int:
        return len(self._keys)

    def public_view(self) -> "KeyStore":
        """Same store with private signing halves removed; symmetric keys are omitted."""
        return KeyStore(k.verifying_key() for k in self if k.alg in SIGNATURE_ALGS)

    def to_bytes(self, include_private: bool = True) -> bytes:
        return _dumps([k.to_cose_key(include_private) for k in self])

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyStore":
        try:
            items = cbor2.loads(data)
        except (cbor2.CBORDecodeError, ValueError, EOFError) as exc:
            raise MalformedCose(f"bad key set: {exc}") from None
        if not isinstance(items, list):
            raise MalformedCose("key set must be a CBOR array")
        return cls(CoseKey.from_cose_key(m) for m in items)

    def save(self, path, include_private: bool = True) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(include_private))
        try:
            os.chmod(path, 0o600)
        except OSError:
            pass

    @classmethod
    def load(cls, path) -> "KeyStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- structures -------------------------------------------------------------

@dataclass(frozen=True)
class ProtectedPayload:
    """A COSE_Sign1 (tag 18) or COSE_Encrypt0 (tag 16) message."""

    tag: int
    protected: bytes
    unprotected: dict
    content: bytes
    signature: bytes = b""

    @property
    def is_signed(self) -> bool:
        return self.tag == TAG_SIGN1

    @property
    def headers(self) -> dict:
        return cbor2.loads(self.protected) if self.protected else {}

    @property
    def kid(self) -> bytes:
        return self.headers.get(HDR_KID, self.unprotected.get(HDR_KID, b""))

    @property
    def alg(self):
        return self.headers.get(HDR_ALG)

    def to_bytes(self) -> bytes:
        items = [self.protected, self.unprotected, self.content]
        if self.tag == TAG_SIGN1:
            items.append(self.signature)
        return _dumps(cbor2.CBORTag(self.tag, items))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProtectedPayload":
        data = bytes(data)
        stream = io.BytesIO(data)
        try:
            item = cbor2.CBORDecoder(stream, allow_indefinite=False).decode()
        except (cbor2.CBORDecodeError, ValueError, EOFError, TypeError, OverflowError) as exc:
            raise MalformedCose(str(exc)) from None
        if stream.tell() != len(data):
            raise MalformedCose("trailing bytes")
        if not isinstance(item, cbor2.CBORTag) or item.tag not in (TAG_SIGN1, TAG_ENCRYPT0):
            raise MalformedCose("expected a tagged COSE_Sign1 or COSE_Encrypt0")
        arr = list(item.value) if isinstance(item.value, (list, tuple)) else None
        want = 4 if item.tag == TAG_SIGN1 else 3
        if arr is None or len(arr) != want:
            raise MalformedCose("wrong number of COSE structure elements")
        prot, unprot, content = arr[0], arr[1], arr[2]
        if not isinstance(prot, bytes) or not isinstance(content, bytes) or not isinstance(unprot, Mapping):
            raise MalformedCose("bad COSE element types")
        sig = arr[3] if want == 4 else b""
        if not isinstance(sig, bytes):
            raise MalformedCose("signature must be a byte string")
        if prot:
            try:
                hdr = cbor2.loads(prot)
            except (cbor2.CBORDecodeError, ValueError, EOFError) as exc:
                raise MalformedCose(f"bad protected header: {exc}") from None
            if not isinstance(hdr, Mapping):
                raise MalformedCose("protected header must be a map")
        msg = cls(item.tag, prot, dict(unprot), content, sig)
        # reject alternative encodings so every bit of the wire form is covered
        if msg.to_bytes() != data:
            raise MalformedCose("non-canonical COSE encoding")
        return msg


def _protected_header(key: CoseKey) -> bytes:
    return _dumps({HDR_ALG: key.alg, HDR_KID: key.kid})


def _sig_structure(protected: bytes, payload: bytes, external_aad: bytes = b"") -> bytes:
    return _dumps(["Signature1", protected, external_aad, payload])


def _enc_structure(protected: bytes, external_aad: bytes = b"") -> bytes:
    return _dumps(["Encrypt0", protected, external_aad])


def _as_bytes(payload) -> bytes:
    if isinstance(payload, TinyStixPayload):
        return payload.to_bytes()
    return bytes(payload)


def _signature(key: CoseKey, data: bytes) -> bytes:
    if key.alg == ALG_EDDSA:
        return key.private.sign(data)
    r, s = decode_dss_signature(key.private.sign(data, ec.ECDSA(hashes.SHA256())))
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def _check_signature(key: CoseKey, sig: bytes, data: bytes) -> None:
    try:
        if key.alg == ALG_EDDSA:
            key.public.verify(sig, data)
        else:
            if len(sig) != 64:
                raise InvalidSignature()
            der = encode_dss_signature(int.from_bytes(sig[:32], "big"), int.from_bytes(sig[32:], "big"))
            key.public.verify(der, data, ec.ECDSA(hashes.SHA256()))
    except InvalidSignature:
        raise SignatureInvalid("signature does not verify") from None


def sign_bytes(content: bytes, key: CoseKey) -> ProtectedPayload:
    if not key.is_signing:
        raise AlgorithmMismatch("key cannot sign")
    protected = _protected_header(key)
    sig = _signature(key, _sig_structure(protected, content))
    return ProtectedPayload(TAG_SIGN1, protected, {}, bytes(content), sig)


def verify_bytes(message, keys: KeyStore, require_trusted: bool = True) -> bytes:
    msg = message if isinstance(message, ProtectedPayload) else ProtectedPayload.from_bytes(message)
    if not msg.is_signed:
        raise MalformedCose("not a COSE_Sign1 message")
    if msg.unprotected:
        raise MalformedCose("unexpected unprotected headers")
    key = keys.get(msg.kid)
    if msg.alg != key.alg or key.alg not in SIGNATURE_ALGS:
        raise AlgorithmMismatch(f"message alg {msg.alg}, key alg {key.alg}")
    if require_trusted and not key.trusted:
        raise SignatureInvalid("signer key is not trusted")
    _check_signature(key, msg.signature, _sig_structure(msg.protected, msg.content))
    return msg.content


def encrypt_bytes(content: bytes, key: CoseKey) -> ProtectedPayload:
    if not key.is_aead:
        raise AlgorithmMismatch("key is not an AEAD key")
    protected = _protected_header(key)
    iv = key.nonces.next()
    ct = AESCCM(key.secret, tag_length=_CCM_TAG).encrypt(iv, bytes(content), _enc_structure(protected))
    return ProtectedPayload(TAG_ENCRYPT0, protected, {HDR_IV: iv}, ct)


def decrypt_bytes(message, keys: KeyStore) -> bytes:
    msg = message if isinstance(message, ProtectedPayload) else ProtectedPayload.from_bytes(message)
    if msg.is_signed:
        raise MalformedCose("not a COSE_Encrypt0 message")
    key = keys.get(msg.kid)
    if msg.alg != key.alg or not key.is_aead:
        raise AlgorithmMismatch(f"message alg {msg.alg}, key alg {key.alg}")
    iv = msg.unprotected.get(HDR_IV)
    if set(msg.unprotected) != {HDR_IV} or not isinstance(iv, bytes) or len(iv) != _CCM_NONCE:
        raise DecryptionFailed("missing or malformed IV")
    try:
        return AESCCM(key.secret, tag_length=_CCM_TAG).decrypt(iv, msg.content, _enc_structure(msg.protected))
    except InvalidTag:
        raise DecryptionFailed("authentication tag mismatch") from None


def sign(payload, key: CoseKey) -> ProtectedPayload:
    return sign_bytes(_as_bytes(payload), key)


def verify(message, keys: KeyStore) -> TinyStixPayload:
    return TinyStixPayload.from_bytes(verify_bytes(message, keys))


def encrypt(payload, key: CoseKey) -> ProtectedPayload:
    return encrypt_bytes(_as_bytes(payload), key)


def decrypt(message, keys: KeyStore) -> TinyStixPayload:
    return TinyStixPayload.from_bytes(decrypt_bytes(message, keys))


def is_cose(data: bytes) -> bool:
    """Cheap sniff: does *data* start with COSE tag 16 or 18?"""
    return len(data) > 0 and data[0] in (0xC0 | TAG_ENCRYPT0, 0xC0 | TAG_SIGN1)
