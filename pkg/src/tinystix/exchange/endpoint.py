"""CoAP endpoint: confirmable retransmission, duplicate detection, Observe
client state and block-wise transfer (RFC 7252, 7641, 7959).

One endpoint serves both roles. A server installs a ``handler`` that maps a
request to a response; a client calls :meth:`Endpoint.fetch`.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import os
import random
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

from ..errors import CoapFormatError, ExchangeError, RequestTimeout
from .message import Block, Code, Message, Opt, Type, empty
from .transport import Transport

log = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 1024


@dataclass(frozen=True)
class TransmissionParams:
    ack_timeout: float = 2.0
    ack_random_factor: float = 1.5
    max_retransmit: int = 4
    exchange_lifetime: float = 247.0
    response_timeout: float = 30.0

    @classmethod
    def fast(cls, **kw) -> "TransmissionParams":
        """Short timers for in-process and test use."""
        base = dict(ack_timeout=0.05, ack_random_factor=1.5, max_retransmit=8,
                    exchange_lifetime=30.0, response_timeout=5.0)
        base.update(kw)
        return cls(**base)


class MessageProtection:
    """Per-message protection hook; identity by default.

    An OSCORE context would implement ``protect``/``unprotect`` here.
    """

    def protect(self, msg: Message, remote) -> Message:
        return msg

    def unprotect(self, msg: Message, remote) -> Message:
        return msg


class _Slot:
    __slots__ = ("event", "msg")

    def __init__(self):
        self.event = threading.Event()
        self.msg = None

    def set(self, msg):
        self.msg = msg
        self.event.set()


def observe_fresher(v1: int, v2: int) -> bool:
    """RFC 7641 sequence comparison: is ``v2`` newer than ``v1``?"""
    half = 1 << 23
    return (v1 < v2 and v2 - v1 < half) or (v1 > v2 and v1 - v2 > half)


class Observation:
    """Client side of one Observe registration."""

    def __init__(self, endpoint: "Endpoint", remote, path: str, token: bytes, callback):
        self.endpoint = endpoint
        self.remote = remote
        self.path = path
        self.token = token
        self.callback = callback
        self.cancelled = False
        self._last_seq = None
        self._last_time = 0.0
        self._queue: list = []
        self._cv = threading.Condition()
        self._deliver_lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, name="observation", daemon=True)
        self._thread.start()

    def _offer(self, msg: Message) -> None:
        seq = msg.opt(Opt.OBSERVE)
        now = time.monotonic()
        with self._cv:
            if self.cancelled:
                return
            if seq is not None and self._last_seq is not None:
                if not (observe_fresher(self._last_seq, seq) or now > self._last_time + 128):
                    return
            if seq is not None:
                self._last_seq, self._last_time = seq, now
            self._queue.append(msg)
            self._cv.notify()

    def _run(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self.cancelled:
                    self._cv.wait()
                if self.cancelled:
                    return
                msg = self._queue.pop(0)
            if msg.code >= Code.BAD_REQUEST:
                log.info("observation of %s ended with %s", self.path, msg)
                continue
            try:
                payload = self.endpoint._complete_block2(msg, self.remote, self.path)
            except ExchangeError as exc:
                log.warning("dropping notification for %s: %s", self.path, exc)
                continue
            if not payload:
                continue
            with self._deliver_lock:
                if not self.cancelled:
                    try:
                        self.callback(payload)
                    except Exception:
                        log.exception("subscriber callback failed")

    def cancel(self) -> None:
        """Deregister; no callback runs after this returns."""
        with self._deliver_lock:
            with self._cv:
                self.cancelled = True
                self._cv.notify_all()
        try:
            req = Message(Type.CON, Code.GET, token=self.token).set_uri(self.path)
            req.set_opt(Opt.OBSERVE, 1)
            self.endpoint.request(req, self.remote)
        except ExchangeError as exc:
            log.info("deregistration of %s not acknowledged: %s", self.path, exc)
        finally:
            self.endpoint._drop_observation(self.remote, self.token)


class Endpoint:
    def __init__(self, transport: Transport, handler: Callable | None = None,
                 params: TransmissionParams | None = None, block_size: int = DEFAULT_BLOCK_SIZE,
                 workers: int = 8, protection: MessageProtection | None = None, seed: int | None = None):
        self.transport = transport
        self.handler = handler
        self.params = params or TransmissionParams()
        self.block_size = block_size
        self.szx = Block.szx_for(block_size)
        self.protection = protection or MessageProtection()
        self.reset_listeners: list = []
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self._mid = self._rng.randrange(0x10000)
        self._token_prefix = os.urandom(4)
        self._token_counter = itertools.count(1)
        self._pending: dict = {}
        self._waiters: dict = {}
        self._observations: dict = {}
        self._dedup: OrderedDict = OrderedDict()
        self._notif_mids: OrderedDict = OrderedDict()
        self._block_cache: OrderedDict = OrderedDict()
        self._block1: dict = {}
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="coap")
        self._closed = False
        transport.start(self._on_datagram)

    @property
    def address(self):
        return self.transport.local_address

    def close(self) -> None:
        self._closed = True
        for obs in list(self._observations.values()):
            with obs._cv:
                obs.cancelled = True
                obs._cv.notify_all()
        self.transport.close()
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- ids

    def _next_mid(self) -> int:
        with self._lock:
            self._mid = (self._mid + 1) & 0xFFFF
            return self._mid

    def new_token(self) -> bytes:
        return self._token_prefix + (next(self._token_counter) & 0xFFFFFFFF).to_bytes(4, "big")

    # -- sending

    def _send(self, msg: Message, remote) -> None:
        if self._closed:
            return
        self.transport.send(self.protection.protect(msg, remote).encode(), remote)

    def _send_reliable(self, msg: Message, remote) -> Message:
        """Send a CON message until it is acknowledged or reset."""
        data = self.protection.protect(msg, remote).encode()
        key = (remote, msg.mid)
        slot = _Slot()
        with self._lock:
            self._pending[key] = slot
        p = self.params
        timeout = self._rng.uniform(p.ack_timeout, p.ack_timeout * p.ack_random_factor)
        try:
            for _ in range(p.max_retransmit + 1):
                if self._closed:
                    break
                self.transport.send(data, remote)
                if slot.event.wait(timeout):
                    return slot.msg
                timeout *= 2
        finally:
            with self._lock:
                self._pending.pop(key, None)
        raise RequestTimeout(f"no acknowledgement from {remote} for mid {msg.mid}")

    def request(self, msg: Message, remote, confirmable: bool = True) -> Message:
        """One request/response exchange (no block-wise handling)."""
        msg = replace(msg, options=list(msg.options))
        if not msg.token:
            msg.token = self.new_token()
        msg.mtype = Type.CON if confirmable else Type.NON
        msg.mid = self._next_mid()
        key = (remote, msg.token)
        slot = _Slot()
        with self._lock:
            self._waiters[key] = slot
        try:
            if confirmable:
                ack = self._send_reliable(msg, remote)
                if ack.mtype == Type.RST:
                    raise ExchangeError(f"request reset by {remote}")
                if not ack.is_empty:
                    return ack
            else:
                self._send(msg, remote)
            if not slot.event.wait(self.params.response_timeout):
                raise RequestTimeout(f"no response from {remote}")
            return slot.msg
        finally:
            with self._lock:
                if self._waiters.get(key) is slot:
                    del self._waiters[key]

    def fetch(self, method: int, remote, path: str, query=(), payload: bytes = b"",
              options=(), confirmable: bool = True) -> Message:
        """Full request with Block1 upload and Block2 reassembly."""
        base = Message(code=method).set_uri(path, query)
        for n, v in options:
            base.add_opt(n, v)
        if len(payload) > self.block_size:
            resp = self._upload(base, remote, payload, confirmable)
        else:
            req = replace(base, options=list(base.options), payload=payload)
            resp = self.request(req, remote, confirmable)
        body = self._complete_block2(resp, remote, path, query, confirmable)
        resp.payload = body
        resp.del_opt(Opt.BLOCK2)
        return resp

    def _upload(self, base: Message, remote, payload: bytes, confirmable: bool) -> Message:
        size = self.block_size
        nblocks = (len(payload) + size - 1) // size
        for num in range(nblocks):
            more = num < nblocks - 1
            req = replace(base, options=list(base.options), payload=payload[num * size:(num + 1) * size])
            req.set_opt(Opt.BLOCK1, Block(num, more, self.szx).encode())
            if num == 0:
                req.set_opt(Opt.SIZE1, len(payload))
            resp = self.request(req, remote, confirmable)
            if more and resp.code != Code.CONTINUE:
                return resp
        return resp

    def _complete_block2(self, resp: Message, remote, path: str, query=(), confirmable=True) -> bytes:
        blk = resp.block2
        if blk is None or not blk.more:
            return resp.payload
        body = bytearray(resp.payload)
        etag = resp.opt(Opt.ETAG)
        num = blk.num + 1
        while True:
            req = Message(code=Code.GET).set_uri(path, query)
            req.set_opt(Opt.BLOCK2, Block(num, False, blk.szx).encode())
            if etag is not None:
                req.set_opt(Opt.ETAG, etag)
            r = self.request(req, remote, confirmable)
            if r.code != resp.code or r.block2 is None:
                raise ExchangeError(f"block {num} of {path} failed with {r.code}")
            if etag is not None and r.opt(Opt.ETAG) != etag:
                raise ExchangeError(f"representation of {path} changed during transfer")
            body += r.payload
            if not r.block2.more:
                return bytes(body)
            num += 1

    # -- observe (client)

    def observe(self, remote, path: str, callback, query=()) -> tuple:
        """Register an observation; returns ``(Observation, initial response)``."""
        token = self.new_token()
        obs = Observation(self, remote, path, token, callback)
        with self._lock:
            self._observations[(remote, token)] = obs
        req = Message(code=Code.GET, token=token).set_uri(path, query)
        req.set_opt(Opt.OBSERVE, 0)
        try:
            resp = self.request(req, remote)
        except Exception:
            self._drop_observation(remote, token)
            raise
        if resp.code >= Code.BAD_REQUEST or resp.opt(Opt.OBSERVE) is None:
            self._drop_observation(remote, token)
            with obs._cv:
                obs.cancelled = True
                obs._cv.notify_all()
            return None, resp
        if resp.payload:
            obs._offer(resp)
        return obs, resp

    def _drop_observation(self, remote, token) -> None:
        with self._lock:
            obs = self._observations.pop((remote, token), None)
        if obs is not None:
            with obs._cv:
                obs.cancelled = True
                obs._cv.notify_all()

    # -- notifications (server)

    def send_notification(self, remote, msg: Message, path: str, confirmable: bool = False) -> bool:
        """Send one notification for the resource at *path*.

        Returns False when the observer reset it or never acknowledged it.
        """
        msg = self._first_block(msg, remote, (Message().set_uri(path).path, ()))
        msg.mtype = Type.CON if confirmable else Type.NON
        msg.mid = self._next_mid()
        with self._lock:
            self._notif_mids[(remote, msg.mid)] = msg.token
            while len(self._notif_mids) > 4096:
                self._notif_mids.popitem(last=False)
        if not confirmable:
            self._send(msg, remote)
            return True
        try:
            ack = self._send_reliable(msg, remote)
        except RequestTimeout:
            return False
        return ack.mtype == Type.ACK

    # -- receiving

    def _on_datagram(self, data: bytes, remote) -> None:
        try:
            msg = Message.decode(data)
        except CoapFormatError:
            if len(data) >= 4 and (data[0] >> 4) & 0x3 == Type.CON:
                self._send(empty(Type.RST, int.from_bytes(data[2:4], "big")), remote)
            return
        msg = self.protection.unprotect(msg, remote)
        if msg.mtype in (Type.ACK, Type.RST):
            with self._lock:
                slot = self._pending.get((remote, msg.mid))
                token = self._notif_mids.pop((remote, msg.mid), None) if msg.mtype == Type.RST else None
            if slot is not None:
                slot.set(msg)
            if token is not None:
                for listener in list(self.reset_listeners):
                    listener(remote, token)
            return
        if msg.is_empty:
            if msg.mtype == Type.CON:
                self._send(empty(Type.RST, msg.mid), remote)
            return
        if msg.is_request:
            self._on_request(msg, remote)
            return
        if msg.is_response:
            with self._lock:
                obs = self._observations.get((remote, msg.token))
                slot = None if obs else self._waiters.get((remote, msg.token))
            if obs is not None:
                obs._offer(msg)
            elif slot is not None:
                slot.set(msg)
            if msg.mtype == Type.CON:
                self._send(empty(Type.ACK if (obs or slot) else Type.RST, msg.mid), remote)
            elif obs is None and slot is None:
                self._send(empty(Type.RST, msg.mid), remote)

    def _on_request(self, msg: Message, remote) -> None:
        key = (remote, msg.mid, msg.mtype == Type.CON)
        now = time.monotonic()
        with self._lock:
            while self._dedup and next(iter(self._dedup.values()))[0] < now:
                self._dedup.popitem(last=False)
            hit = self._dedup.get(key)
            if hit is None:
                self._dedup[key] = [now + self.params.exchange_lifetime, None]
        if hit is not None:
            if hit[1] is not None:
                self.transport.send(hit[1], remote)
            return
        self._pool.submit(self._handle, msg, remote, key)

    def _handle(self, msg: Message, remote, key) -> None:
        try:
            resp = self._serve(msg, remote)
        except Exception:
            log.exception("handler failed for %s", msg)
            resp = Message(code=Code.INTERNAL_SERVER_ERROR)
        after = getattr(resp, "after_send", None)
        resp.token = msg.token
        if msg.mtype == Type.CON:
            resp.mtype, resp.mid = Type.ACK, msg.mid
        else:
            resp.mtype, resp.mid = Type.NON, self._next_mid()
        data = self.protection.protect(resp, remote).encode()
        with self._lock:
            entry = self._dedup.get(key)
            if entry is not None:
                entry[1] = data
        if not self._closed:
            self.transport.send(data, remote)
        if after is not None:
            after()

    # -- block-wise (server)

    def _uri_key(self, msg: Message):
        return (msg.path, tuple(msg.query))

    def _serve(self, msg: Message, remote) -> Message:
        blk1 = msg.block1
        if blk1 is not None:
            assembled = self._accept_block1(msg, remote, blk1)
            if isinstance(assembled, Message):
                return assembled
            msg = replace(msg, options=[o for o in msg.options if o[0] not in (Opt.BLOCK1, Opt.SIZE1)],
                          payload=assembled)
        blk2 = msg.block2
        if blk2 is not None and blk2.num > 0:
            cached = self._cached_block(msg, remote, blk2)
            if cached is not None:
                return cached
            if msg.code != Code.GET:
                return Message(code=Code.REQUEST_ENTITY_INCOMPLETE)
        handler_msg = msg if blk2 is None else replace(
            msg, options=[o for o in msg.options if o[0] not in (Opt.BLOCK2, Opt.ETAG)])
        if self.handler is None:
            return Message(code=Code.NOT_FOUND)
        resp = self.handler(handler_msg, remote)
        after = getattr(resp, "after_send", None)
        if blk1 is not None:
            resp.set_opt(Opt.BLOCK1, Block(blk1.num, False, blk1.szx).encode())
        if blk2 is not None and blk2.num > 0:
            out = self._slice(resp, blk2.num, min(blk2.szx, self.szx))
        else:
            szx = self.szx if blk2 is None else min(blk2.szx, self.szx)
            out = self._first_block(resp, remote, self._uri_key(msg), szx)
        if after is not None:
            out.after_send = after
        return out

    def _accept_block1(self, msg: Message, remote, blk: Block):
        key = (remote, msg.code, self._uri_key(msg))
        with self._lock:
            buf = self._block1.get(key)
            if blk.num == 0:
                buf = self._block1[key] = bytearray()
            elif buf is None or len(buf) != blk.offset:
                # a retransmitted block we already appended is fine
                if buf is not None and len(buf) == blk.offset + len(msg.payload) and blk.more:
                    return self._continue(blk)
                self._block1.pop(key, None)
                return Message(code=Code.REQUEST_ENTITY_INCOMPLETE)
            buf += msg.payload
            if len(buf) > 16 * 1024 * 1024:
                self._block1.pop(key, None)
                return Message(code=Code.REQUEST_ENTITY_TOO_LARGE)
            if blk.more:
                return self._continue(blk)
            self._block1.pop(key, None)
            return bytes(buf)

    @staticmethod
    def _continue(blk: Block) -> Message:
        r = Message(code=Code.CONTINUE)
        r.set_opt(Opt.BLOCK1, Block(blk.num, True, blk.szx).encode())
        return r

    def _first_block(self, resp: Message, remote, uri_key, szx: int | None = None) -> Message:
        szx = self.szx if szx is None else szx
        size = 1 << (szx + 4)
        if len(resp.payload) <= size:
            return resp
        etag = hashlib.sha256(resp.payload).digest()[:8]
        with self._lock:
            self._block_cache[(remote, uri_key, etag)] = (time.monotonic() + self.params.exchange_lifetime, resp)
            self._block_cache.move_to_end((remote, uri_key, etag))
            self._block_cache[(remote, uri_key, None)] = self._block_cache[(remote, uri_key, etag)]
            while len(self._block_cache) > 1024:
                self._block_cache.popitem(last=False)
        out = self._slice(resp, 0, szx)
        out.set_opt(Opt.ETAG, etag)
        out.set_opt(Opt.SIZE2, len(resp.payload))
        return out

    def _cached_block(self, msg: Message, remote, blk: Block):
        etag = msg.opt(Opt.ETAG)
        with self._lock:
            hit = self._block_cache.get((remote, self._uri_key(msg), etag))
        if hit is None or hit[0] < time.monotonic():
            return None
        out = self._slice(hit[1], blk.num, min(blk.szx, self.szx))
        out.set_opt(Opt.ETAG, hashlib.sha256(hit[1].payload).digest()[:8])
        return out

    @staticmethod
    def _slice(resp: Message, num: int, szx: int) -> Message:
        size = 1 << (szx + 4)
        part = resp.payload[num * size:(num + 1) * size]
        more = len(resp.payload) > (num + 1) * size
        out = Message(resp.mtype, resp.code, resp.mid, resp.token,
                      [o for o in resp.options if o[0] not in (Opt.BLOCK2, Opt.ETAG, Opt.SIZE2)], part)
        out.set_opt(Opt.BLOCK2, Block(num, more, szx).encode())
        return out
