"""CoAP server exposing collections and channels.

Resources::

    GET  /collections                       list collections
    GET  /collections/{id}/objects?...      filtered, paginated envelope
    POST /collections/{id}/objects          add a CBOR array of payloads
    GET  /channels                          list topics
    GET  /channels/{topic}   (Observe)      subscribe / retained payload
    POST /channels/{topic}                  publish one payload
"""

from __future__ import annotations

import logging
import queue
import threading

import cbor2

from ..codec import TinyStixPayload, from_tinystix
from ..cose import KeyStore, ProtectedPayload, is_cose, verify_bytes
from ..errors import (
    BadFilter,
    ExchangeError,
    PayloadRejected,
    SubscriptionRefused,
    TinyStixError,
    TopicNotFound,
)
from ..vocab import Dictionary
from .broker import Broker
from .endpoint import Endpoint, MessageProtection, TransmissionParams
from .message import CF_CBOR, CF_TINYSTIX, CF_TINYSTIX_COSE, Code, Message, Opt, code
from .repository import CollectionStore, FilterSpec, encode_statuses
from .transport import Transport

log = logging.getLogger(__name__)

_OBSERVE_MOD = 1 << 24


def make_inspector(d: Dictionary, keys: KeyStore | None = None, require_signatures: bool = False):
    """Payload check used on add/publish: decodes (and verifies) the object."""

    def inspect(data: bytes) -> tuple:
        inner = data
        if is_cose(data):
            try:
                msg = ProtectedPayload.from_bytes(data)
            except TinyStixError as exc:
                raise PayloadRejected(f"bad COSE structure: {exc}") from None
            if not msg.is_signed:
                raise PayloadRejected("encrypted payloads cannot be indexed")
            if keys is not None:
                try:
                    verify_bytes(msg, keys)
                except TinyStixError as exc:
                    raise PayloadRejected(f"signature check failed: {exc}") from None
            elif require_signatures:
                raise PayloadRejected("no keys to verify signatures")
            inner = msg.content
        elif require_signatures:
            raise PayloadRejected("unsigned payload")
        try:
            obj = from_tinystix(TinyStixPayload.from_bytes(inner), d)
        except TinyStixError as exc:
            raise PayloadRejected(f"{type(exc).__name__}: {exc}") from None
        return obj.object_type, str(obj.id)

    return inspect


def _error(exc: ExchangeError) -> Message:
    m = Message(code=code(*exc.code), payload=str(exc).encode("utf-8"))
    return m


def _content_format(payload: bytes) -> int:
    return CF_TINYSTIX_COSE if is_cose(payload) else CF_TINYSTIX


class _RemoteObserver:
    """Sends one observer's notifications in order from its own thread."""

    def __init__(self, server: "ExchangeServer", remote, token: bytes, topic: str, confirmable: bool):
        self.server = server
        self.remote = remote
        self.token = token
        self.topic = topic
        self.confirmable = confirmable
        self.subscription = None
        self.seq = 1
        self._q: queue.Queue = queue.Queue()
        self._ready = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True, name=f"observer-{topic}")
        self._thread.start()

    def offer(self, payload: bytes) -> None:
        self._q.put(payload)

    def release(self) -> None:
        self._ready.set()

    def stop(self) -> None:
        if self.subscription is not None:
            self.subscription.cancel()
        self._ready.set()
        self._q.put(None)

    def _run(self) -> None:
        self._ready.wait()
        while True:
            payload = self._q.get()
            if payload is None:
                return
            self.seq = (self.seq + 1) % _OBSERVE_MOD
            msg = Message(code=Code.CONTENT, token=self.token, payload=payload)
            msg.set_opt(Opt.OBSERVE, self.seq)
            msg.set_opt(Opt.CONTENT_FORMAT, _content_format(payload))
            ok = self.server.endpoint.send_notification(
                self.remote, msg, f"/channels/{self.topic}", self.confirmable)
            if not ok:
                log.info("observer %s on %s gone", self.remote, self.topic)
                self.server._drop_observer(self.remote, self.token)
                return


class ExchangeServer:
    def __init__(self, transport: Transport, dictionary: Dictionary,
                 store: CollectionStore | None = None, broker: Broker | None = None,
                 keys: KeyStore | None = None, require_signatures: bool = False,
                 params: TransmissionParams | None = None, protection: MessageProtection | None = None,
                 workers: int = 8):
        self.dictionary = dictionary
        self.store = store or CollectionStore()
        self.inspect = make_inspector(dictionary, keys, require_signatures)
        self.broker = broker or Broker()
        if self.broker.validator is None:
            self.broker.validator = self._validate_publish
        self._observers: dict = {}
        self._obs_lock = threading.Lock()
        self.endpoint = Endpoint(transport, self.handle, params, workers=workers, protection=protection)
        self.endpoint.reset_listeners.append(self._drop_observer)

    @property
    def address(self):
        return self.endpoint.address

    def _validate_publish(self, topic: str, payload: bytes) -> None:
        # encrypted payloads are opaque to the broker and pass through
        if not _encrypted(payload):
            self.inspect(payload)

    def close(self) -> None:
        with self._obs_lock:
            observers = list(self._observers.values())
            self._observers.clear()
        for o in observers:
            o.stop()
        self.endpoint.close()

    # -- dispatch

    def handle(self, req: Message, remote) -> Message:
        path = req.path
        try:
            if path == ("collections",):
                return self._list_collections(req)
            if len(path) == 3 and path[0] == "collections" and path[2] == "objects":
                if req.code == Code.GET:
                    return self._get_objects(req, path[1])
                if req.code == Code.POST:
                    return self._add_objects(req, path[1])
                return Message(code=Code.METHOD_NOT_ALLOWED)
            if path == ("channels",):
                return self._cbor(self.broker.topics())
            if len(path) == 2 and path[0] == "channels":
                if req.code == Code.GET:
                    return self._channel_get(req, remote, path[1])
                if req.code == Code.POST:
                    return self._publish(req, path[1])
                return Message(code=Code.METHOD_NOT_ALLOWED)
        except ExchangeError as exc:
            return _error(exc)
        return Message(code=Code.NOT_FOUND, payload=b"no such resource")

    @staticmethod
    def _cbor(value, rcode: int = Code.CONTENT) -> Message:
        m = Message(code=rcode, payload=cbor2.dumps(value))
        m.set_opt(Opt.CONTENT_FORMAT, CF_CBOR)
        return m

    def _list_collections(self, req: Message) -> Message:
        if req.code != Code.GET:
            return Message(code=Code.METHOD_NOT_ALLOWED)
        return self._cbor([{"id": str(c.id), "title": c.title, "count": len(c)} for c in self.store])

    def _get_objects(self, req: Message, cid: str) -> Message:
        coll = self.store.get(cid)
        spec = FilterSpec.from_query(req.query, self.dictionary.decode_type)
        env = coll.get(spec)
        m = Message(code=Code.CONTENT, payload=env.to_bytes())
        m.set_opt(Opt.CONTENT_FORMAT, CF_CBOR)
        return m

    def _add_objects(self, req: Message, cid: str) -> Message:
        coll = self.store.get(cid)
        try:
            items = cbor2.loads(req.payload)
        except (cbor2.CBORDecodeError, ValueError, EOFError) as exc:
            raise BadFilter(f"body must be a CBOR array of payloads: {exc}") from None
        if not isinstance(items, (list, tuple)):
            raise BadFilter("body must be a CBOR array of payloads")
        statuses = coll.add(items, self.inspect)
        m = Message(code=Code.CHANGED, payload=encode_statuses(statuses))
        m.set_opt(Opt.CONTENT_FORMAT, CF_CBOR)
        return m

    def _publish(self, req: Message, topic: str) -> Message:
        if not req.payload:
            raise PayloadRejected("empty payload")
        count = self.broker.publish(topic, req.payload)
        return self._cbor(count, Code.CHANGED)

    def _channel_get(self, req: Message, remote, topic: str) -> Message:
        obs = req.opt(Opt.OBSERVE)
        if obs == 1:
            self._drop_observer(remote, req.token)
            return Message(code=Code.CONTENT)
        if obs == 0:
            return self._register(req, remote, topic)
        payload = self.broker.retained(topic)
        if payload is None:
            raise TopicNotFound(f"nothing retained on {topic}")
        m = Message(code=Code.CONTENT, payload=payload)
        m.set_opt(Opt.CONTENT_FORMAT, _content_format(payload))
        return m

    def _register(self, req: Message, remote, topic: str) -> Message:
        ch = self.broker.channel(topic)
        key = (remote, req.token)
        observer = _RemoteObserver(self, remote, req.token, topic, ch.confirmable)
        with self._obs_lock:
            old = self._observers.pop(key, None)
            self._observers[key] = observer
        if old is not None:
            old.stop()
        try:
            observer.subscription = self.broker.subscribe(topic, observer.offer)
        except (SubscriptionRefused, TopicNotFound):
            with self._obs_lock:
                self._observers.pop(key, None)
            observer.stop()
            raise
        # the registration response goes out before any queued notification
        m = Message(code=Code.CONTENT)
        m.set_opt(Opt.OBSERVE, 1)
        m.after_send = observer.release
        return m

    def _drop_observer(self, remote, token) -> None:
        with self._obs_lock:
            o = self._observers.pop((remote, token), None)
        if o is not None:
            o.stop()

    @property
    def observer_count(self) -> int:
        return len(self._observers)


def _encrypted(payload: bytes) -> bool:
    if not is_cose(payload):
        return False
    try:
        return not ProtectedPayload.from_bytes(payload).is_signed
    except TinyStixError:
        return False
