"""CoAP message layer (RFC 7252) plus the Observe and Block option helpers."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable
from urllib.parse import quote, unquote

from ..errors import CoapFormatError

VERSION = 1
PAYLOAD_MARKER = 0xFF


class Type(enum.IntEnum):
    CON = 0
    NON = 1
    ACK = 2
    RST = 3


def code(cls: int, detail: int) -> int:
    return (cls << 5) | detail


def code_str(c: int) -> str:
    return f"{c >> 5}.{c & 0x1F:02d}"


class Code(enum.IntEnum):
    EMPTY = 0
    GET = 1
    POST = 2
    PUT = 3
    DELETE = 4
    CREATED = code(2, 1)
    DELETED = code(2, 2)
    VALID = code(2, 3)
    CHANGED = code(2, 4)
    CONTENT = code(2, 5)
    CONTINUE = code(2, 31)
    BAD_REQUEST = code(4, 0)
    UNAUTHORIZED = code(4, 1)
    BAD_OPTION = code(4, 2)
    NOT_FOUND = code(4, 4)
    METHOD_NOT_ALLOWED = code(4, 5)
    REQUEST_ENTITY_INCOMPLETE = code(4, 8)
    PRECONDITION_FAILED = code(4, 12)
    REQUEST_ENTITY_TOO_LARGE = code(4, 13)
    UNSUPPORTED_CONTENT_FORMAT = code(4, 15)
    INTERNAL_SERVER_ERROR = code(5, 0)
    SERVICE_UNAVAILABLE = code(5, 3)
    GATEWAY_TIMEOUT = code(5, 4)


class Opt(enum.IntEnum):
    IF_MATCH = 1
    URI_HOST = 3
    ETAG = 4
    OBSERVE = 6
    URI_PORT = 7
    LOCATION_PATH = 8
    URI_PATH = 11
    CONTENT_FORMAT = 12
    MAX_AGE = 14
    URI_QUERY = 15
    ACCEPT = 17
    BLOCK2 = 23
    BLOCK1 = 27
    SIZE2 = 28
    SIZE1 = 60


_UINT_OPTIONS = {Opt.OBSERVE, Opt.URI_PORT, Opt.CONTENT_FORMAT, Opt.MAX_AGE,
                 Opt.ACCEPT, Opt.BLOCK2, Opt.BLOCK1, Opt.SIZE2, Opt.SIZE1}

# content formats: application/cbor is registered; tinySTIX ones are experimental-range picks
CF_CBOR = 60
CF_TINYSTIX = 65100
CF_TINYSTIX_COSE = 65101


def encode_uint(value: int) -> bytes:
    if value < 0:
        raise ValueError("option uint must be non-negative")
    if value == 0:
        return b""
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def decode_uint(raw: bytes) -> int:
    return int.from_bytes(raw, "big") if raw else 0


@dataclass(frozen=True)
class Block:
    """Block1/Block2 option value: block number, more flag, size exponent."""

    num: int
    more: bool
    szx: int

    @property
    def size(self) -> int:
        return 1 << (self.szx + 4)

    @property
    def offset(self) -> int:
        return self.num * self.size

    def encode(self) -> int:
        return (self.num << 4) | (int(self.more) << 3) | self.szx

    @classmethod
    def decode(cls, value: int) -> "Block":
        szx = value & 0x7
        if szx == 7:
            raise CoapFormatError("reserved block size exponent 7")
        return cls(value >> 4, bool(value & 0x8), szx)

    @staticmethod
    def szx_for(size: int) -> int:
        if size not in (16, 32, 64, 128, 256, 512, 1024):
            raise ValueError(f"invalid block size {size}")
        return size.bit_length() - 5


@dataclass
class Message:
    mtype: Type = Type.CON
    code: int = Code.EMPTY
    mid: int = 0
    token: bytes = b""
    options: list = field(default_factory=list)
    payload: bytes = b""

    # -- option access

    def opt_all(self, number: int) -> list:
        return [v for n, v in self.options if n == number]

    def opt(self, number: int, default=None):
        vals = self.opt_all(number)
        if not vals:
            return default
        return decode_uint(vals[0]) if number in _UINT_OPTIONS else vals[0]

    def set_opt(self, number: int, value) -> "Message":
        self.del_opt(number)
        return self.add_opt(number, value)

    def add_opt(self, number: int, value) -> "Message":
        if isinstance(value, int):
            value = encode_uint(value)
        elif isinstance(value, str):
            value = value.encode("utf-8")
        self.options.append((int(number), bytes(value)))
        return self

    def del_opt(self, number: int) -> None:
        self.options = [(n, v) for n, v in self.options if n != number]

    @property
    def path(self) -> tuple:
        return tuple(v.decode("utf-8") for v in self.opt_all(Opt.URI_PATH))

    @property
    def path_str(self) -> str:
        return "/" + "/".join(quote(p, safe="") for p in self.path)

    @property
    def query(self) -> list:
        """``(name, value)`` pairs of the Uri-Query options, in order."""
        out = []
        for raw in self.opt_all(Opt.URI_QUERY):
            text = raw.decode("utf-8")
            name, _, value = text.partition("=")
            out.append((name, value))
        return out

    def set_uri(self, path: str, query: Iterable = ()) -> "Message":
        self.del_opt(Opt.URI_PATH)
        self.del_opt(Opt.URI_QUERY)
        for seg in path.strip("/").split("/"):
            if seg:
                self.add_opt(Opt.URI_PATH, unquote(seg))
        for name, value in query:
            self.add_opt(Opt.URI_QUERY, f"{name}={value}")
        return self

    @property
    def block1(self):
        v = self.opt(Opt.BLOCK1)
        return None if v is None else Block.decode(v)

    @property
    def block2(self):
        v = self.opt(Opt.BLOCK2)
        return None if v is None else Block.decode(v)

    @property
    def is_request(self) -> bool:
        return 1 <= self.code <= 31

    @property
    def is_response(self) -> bool:
        return self.code >= 64

    @property
    def is_empty(self) -> bool:
        return self.code == Code.EMPTY

    # -- wire form

    def encode(self) -> bytes:
        if len(self.token) > 8:
            raise CoapFormatError("token longer than 8 bytes")
        if not 0 <= self.mid <= 0xFFFF:
            raise CoapFormatError("message id out of range")
        out = bytearray(struct.pack(
            "!BBH", (VERSION << 6) | (int(self.mtype) << 4) | len(self.token), int(self.code), self.mid))
        out += self.token
        last = 0
        # stable sort keeps the order of repeated options
        for number, value in sorted(self.options, key=lambda o: o[0]):
            delta = number - last
            last = number
            d_nib, d_ext = _nibble(delta)
            l_nib, l_ext = _nibble(len(value))
            out.append((d_nib << 4) | l_nib)
            out += d_ext + l_ext + value
        if self.payload:
            out.append(PAYLOAD_MARKER)
            out += self.payload
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "Message":
        data = bytes(data)
        if len(data) < 4:
            raise CoapFormatError("datagram shorter than the CoAP header")
        b0, c, mid = struct.unpack("!BBH", data[:4])
        if b0 >> 6 != VERSION:
            raise CoapFormatError("unknown CoAP version")
        tkl = b0 & 0x0F
        if tkl > 8:
            raise CoapFormatError("reserved token length")
        pos = 4 + tkl
        if len(data) < pos:
            raise CoapFormatError("truncated token")
        msg = cls(Type((b0 >> 4) & 0x3), c, mid, data[4:pos])
        if c == Code.EMPTY and len(data) != 4:
            raise CoapFormatError("empty message with trailing content")
        number = 0
        while pos < len(data):
            head = data[pos]
            pos += 1
            if head == PAYLOAD_MARKER:
                if pos == len(data):
                    raise CoapFormatError("payload marker followed by empty payload")
                msg.payload = data[pos:]
                break
            delta, pos = _read_ext(head >> 4, data, pos)
            length, pos = _read_ext(head & 0x0F, data, pos)
            if pos + length > len(data):
                raise CoapFormatError("truncated option value")
            number += delta
            msg.options.append((number, data[pos:pos + length]))
            pos += length
        return msg

    def __repr__(self) -> str:
        opts = ",".join(str(n) for n, _ in self.options)
        return (f"<Message {self.mtype.name} {code_str(self.code)} mid={self.mid} "
                f"token={self.token.hex()} opts=[{opts}] len={len(self.payload)}>")


def _nibble(value: int):
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    if value < 65805:
        return 14, struct.pack("!H", value - 269)
    raise CoapFormatError("option delta/length too large")


def _read_ext(nib: int, data: bytes, pos: int):
    if nib < 13:
        return nib, pos
    if nib == 13:
        if pos + 1 > len(data):
            raise CoapFormatError("truncated option header")
        return data[pos] + 13, pos + 1
    if nib == 14:
        if pos + 2 > len(data):
            raise CoapFormatError("truncated option header")
        return struct.unpack("!H", data[pos:pos + 2])[0] + 269, pos + 2
    raise CoapFormatError("reserved option nibble 15")


def empty(mtype: Type, mid: int) -> Message:
    return Message(mtype, Code.EMPTY, mid)


def response_for(request: Message, rcode: int, payload: bytes = b"") -> Message:
    """Response skeleton; the endpoint fills in type and message id."""
    return Message(Type.ACK, rcode, request.mid, request.token, [], payload)
