"""Collections: append-only, time-ordered stores of tinySTIX payloads."""

from __future__ import annotations

import base64
import re
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable

import cbor2

from ..errors import BadFilter, CollectionNotFound, PayloadRejected, TinyStixError
from ..model import Identifier

MAX_PAGE = 100
_TOKEN_RE = re.compile(r"^[A-Za-z0-9_-]+$")
_ONE_TICK = timedelta(microseconds=1)

# payload bytes -> (object_type, object_id); raises PayloadRejected
Inspector = Callable[[bytes], tuple]


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_time(text: str) -> datetime:
    """RFC 3339 timestamp to an aware UTC datetime."""
    if not isinstance(text, str):
        raise BadFilter(f"bad timestamp: {text!r}")
    raw = text.strip()
    m = re.match(r"^(\d{4}-\d{2}-\d{2}[Tt]\d{2}:\d{2}:\d{2})(\.\d+)?([Zz]|[+-]\d{2}:\d{2})$", raw)
    if not m:
        raise BadFilter(f"bad timestamp: {text!r}")
    frac = (m.group(2) or ".0")[1:7].ljust(6, "0")
    tz = "+00:00" if m.group(3) in ("Z", "z") else m.group(3)
    try:
        dt = datetime.fromisoformat(m.group(1).replace("t", "T") + "." + frac + tz)
    except ValueError:
        raise BadFilter(f"bad timestamp: {text!r}") from None
    return dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class Entry:
    seq: int
    object_id: str
    object_type: str
    added_at: datetime
    payload: bytes


@dataclass(frozen=True)
class Status:
    ok: bool
    object_id: str | None = None
    added_at: str | None = None
    reason: str | None = None

    def to_obj(self) -> dict:
        if self.ok:
            return {"status": "ok", "id": self.object_id, "added": self.added_at}
        return {"status": "rejected", "reason": self.reason}

    @classmethod
    def from_obj(cls, m: dict) -> "Status":
        if m.get("status") == "ok":
            return cls(True, m.get("id"), m.get("added"))
        return cls(False, reason=m.get("reason"))


def encode_statuses(statuses: Iterable[Status]) -> bytes:
    return cbor2.dumps([s.to_obj() for s in statuses])


def decode_statuses(data: bytes) -> list:
    return [Status.from_obj(dict(m)) for m in cbor2.loads(data)]


def encode_token(seq: int) -> str:
    return base64.urlsafe_b64encode(seq.to_bytes(8, "big")).decode().rstrip("=")


def decode_token(token: str) -> int:
    if not isinstance(token, str) or not _TOKEN_RE.match(token):
        raise BadFilter("malformed page token")
    try:
        raw = base64.urlsafe_b64decode(token + "=" * (-len(token) % 4))
    except ValueError:
        raise BadFilter("malformed page token") from None
    if len(raw) != 8:
        raise BadFilter("malformed page token")
    return int.from_bytes(raw, "big")


@dataclass(frozen=True)
class FilterSpec:
    match_type: str | None = None
    match_id: str | None = None
    added_after: datetime | None = None
    page_limit: int | None = None
    page_token: str | None = None

    def matches(self, e: Entry) -> bool:
        if self.match_type is not None and e.object_type != self.match_type:
            return False
        if self.match_id is not None and e.object_id != self.match_id:
            return False
        if self.added_after is not None and not e.added_at > self.added_after:
            return False
        return True

    def to_query(self) -> list:
        q = []
        if self.match_type is not None:
            q.append(("type", self.match_type))
        if self.match_id is not None:
            q.append(("id", self.match_id))
        if self.added_after is not None:
            q.append(("added_after", format_time(self.added_after)))
        if self.page_limit is not None:
            q.append(("limit", str(self.page_limit)))
        if self.page_token is not None:
            q.append(("token", self.page_token))
        return q

    @classmethod
    def from_query(cls, pairs: Iterable, decode_type: Callable | None = None) -> "FilterSpec":
        """Build from CoAP ``name=value`` query pairs.

        ``type`` accepts a STIX type name or its dictionary code (via *decode_type*).
        """
        args: dict = {}
        for name, value in pairs:
            if name in {"type", "id", "added_after", "limit", "token"} and name in args:
                raise BadFilter(f"repeated filter {name}")
            if name == "type":
                if value.isdigit():
                    if decode_type is None:
                        raise BadFilter("type codes need a dictionary")
                    try:
                        value = decode_type(int(value))
                    except TinyStixError:
                        raise BadFilter(f"unknown type code {value}") from None
                if not re.match(r"^[a-z0-9][a-z0-9-]*$", value):
                    raise BadFilter(f"bad type {value!r}")
                args["type"] = value
            elif name == "id":
                try:
                    Identifier.parse(value)
                except TinyStixError:
                    raise BadFilter(f"bad id {value!r}") from None
                args["id"] = value
            elif name == "added_after":
                args["added_after"] = parse_time(value)
            elif name == "limit":
                if not value.isdigit() or int(value) < 1:
                    raise BadFilter(f"bad limit {value!r}")
                args["limit"] = int(value)
            elif name == "token":
                decode_token(value)
                args["token"] = value
            else:
                raise BadFilter(f"unknown filter {name!r}")
        return cls(args.get("type"), args.get("id"), args.get("added_after"),
                   args.get("limit"), args.get("token"))


@dataclass(frozen=True)
class Envelope:
    objects: tuple
    more: bool = False
    next_token: str | None = None

    def __post_init__(self):
        if self.more != (self.next_token is not None):
            raise ValueError("more must be set exactly when next_token is present")

    def to_bytes(self) -> bytes:
        m = {"objects": list(self.objects), "more": self.more}
        if self.next_token is not None:
            m["next"] = self.next_token
        return cbor2.dumps(m)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        m = cbor2.loads(data)
        return cls(tuple(bytes(o) for o in m["objects"]), bool(m["more"]), m.get("next"))


class Collection:
    def __init__(self, collection_id: uuid.UUID, title: str = "", clock: Callable | None = None,
                 max_page: int = MAX_PAGE):
        self.id = collection_id
        self.title = title
        self.max_page = max_page
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._entries: list[Entry] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list:
        with self._lock:
            return list(self._entries)

    def _stamp(self) -> datetime:
        now = self._clock()
        if self._entries and now <= self._entries[-1].added_at:
            now = self._entries[-1].added_at + _ONE_TICK
        return now

    def add(self, payloads: Iterable[bytes], inspect: Inspector) -> list:
        """Append each payload; a rejected one does not affect the rest."""
        statuses = []
        for data in payloads:
            try:
                if not isinstance(data, (bytes, bytearray)):
                    raise PayloadRejected("object is not a byte string")
                object_type, object_id = inspect(bytes(data))
            except PayloadRejected as exc:
                statuses.append(Status(False, reason=str(exc)))
                continue
            with self._lock:
                e = Entry(len(self._entries) + 1, object_id, object_type, self._stamp(), bytes(data))
                self._entries.append(e)
            statuses.append(Status(True, object_id, format_time(e.added_at)))
        return statuses

    def get(self, spec: FilterSpec = FilterSpec()) -> Envelope:
        limit = min(spec.page_limit or self.max_page, self.max_page)
        cursor = decode_token(spec.page_token) if spec.page_token else 0
        with self._lock:
            snapshot = self._entries[cursor:]
        page = []
        more = False
        for e in snapshot:
            if not spec.matches(e):
                continue
            if len(page) == limit:
                more = True
                break
            page.append(e)
        token = encode_token(page[-1].seq) if more else None
        return Envelope(tuple(e.payload for e in page), more, token)


class CollectionStore:
    def __init__(self, clock: Callable | None = None, max_page: int = MAX_PAGE):
        self._collections: dict = {}
        self._clock = clock
        self.max_page = max_page
        self._lock = threading.Lock()

    def create(self, title: str = "", collection_id: uuid.UUID | str | None = None) -> Collection:
        cid = uuid.UUID(str(collection_id)) if collection_id else uuid.uuid4()
        with self._lock:
            if cid in self._collections:
                raise ValueError(f"collection {cid} exists")
            c = Collection(cid, title, self._clock, self.max_page)
            self._collections[cid] = c
            return c

    def get(self, collection_id) -> Collection:
        try:
            return self._collections[uuid.UUID(str(collection_id))]
        except (KeyError, ValueError):
            raise CollectionNotFound(f"no collection {collection_id}") from None

    def __iter__(self):
        return iter(list(self._collections.values()))
