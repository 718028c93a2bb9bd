"""Client for :class:`~tinystix.exchange.server.ExchangeServer`."""

from __future__ import annotations

from typing import Iterable, Iterator

import cbor2

from ..errors import (
    BadFilter,
    CollectionNotFound,
    ExchangeError,
    PayloadRejected,
    SubscriptionRefused,
    TopicNotFound,
)
from .endpoint import Endpoint, MessageProtection, TransmissionParams
from .message import CF_CBOR, Code, Opt, code_str
from .repository import Envelope, FilterSpec, decode_statuses
from .transport import Transport


def _raise_for(resp, not_found=CollectionNotFound, bad=BadFilter):
    if resp.code < Code.BAD_REQUEST:
        return
    text = resp.payload.decode("utf-8", "replace") or code_str(resp.code)
    if resp.code == Code.NOT_FOUND:
        raise not_found(text)
    if resp.code == Code.BAD_REQUEST:
        raise bad(text)
    if resp.code == Code.SERVICE_UNAVAILABLE:
        raise SubscriptionRefused(text)
    err = ExchangeError(f"{code_str(resp.code)} {text}")
    err.code = (resp.code >> 5, resp.code & 0x1F)
    raise err


class ExchangeClient:
    def __init__(self, transport: Transport, server, params: TransmissionParams | None = None,
                 confirmable: bool = True, protection: MessageProtection | None = None):
        self.server = server
        self.confirmable = confirmable
        self.endpoint = Endpoint(transport, params=params, protection=protection)

    def close(self) -> None:
        self.endpoint.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _fetch(self, method, path, query=(), payload=b"", options=()):
        return self.endpoint.fetch(method, self.server, path, query, payload, options, self.confirmable)

    # -- collections

    def collections(self) -> list:
        resp = self._fetch(Code.GET, "/collections")
        _raise_for(resp)
        return [dict(c) for c in cbor2.loads(resp.payload)]

    def get(self, collection_id, spec: FilterSpec = FilterSpec()) -> Envelope:
        resp = self._fetch(Code.GET, f"/collections/{collection_id}/objects", spec.to_query())
        _raise_for(resp)
        return Envelope.from_bytes(resp.payload)

    def pages(self, collection_id, spec: FilterSpec = FilterSpec()) -> Iterator[Envelope]:
        while True:
            env = self.get(collection_id, spec)
            yield env
            if not env.more:
                return
            spec = FilterSpec(spec.match_type, spec.match_id, spec.added_after,
                              spec.page_limit, env.next_token)

    def get_all(self, collection_id, spec: FilterSpec = FilterSpec()) -> list:
        return [o for env in self.pages(collection_id, spec) for o in env.objects]

    def add(self, collection_id, payloads: Iterable[bytes]) -> list:
        body = cbor2.dumps([bytes(p) for p in payloads])
        resp = self._fetch(Code.POST, f"/collections/{collection_id}/objects", payload=body,
                           options=[(Opt.CONTENT_FORMAT, CF_CBOR)])
        _raise_for(resp)
        return decode_statuses(resp.payload)

    # -- channels

    def topics(self) -> list:
        resp = self._fetch(Code.GET, "/channels")
        _raise_for(resp)
        return list(cbor2.loads(resp.payload))

    def publish(self, topic: str, payload: bytes) -> int:
        resp = self._fetch(Code.POST, f"/channels/{topic}", payload=bytes(payload))
        _raise_for(resp, TopicNotFound, PayloadRejected)
        return cbor2.loads(resp.payload)

    def retained(self, topic: str) -> bytes:
        resp = self._fetch(Code.GET, f"/channels/{topic}")
        _raise_for(resp, TopicNotFound)
        return resp.payload

    def subscribe(self, topic: str, callback):
        """Observe a channel; *callback* gets each payload (retained one first)."""
        obs, resp = self.endpoint.observe(self.server, f"/channels/{topic}", callback)
        if obs is None:
            _raise_for(resp, TopicNotFound)
            raise SubscriptionRefused("server did not accept the observation")
        return obs
