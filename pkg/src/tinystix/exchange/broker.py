"""Channels: topic-based publish/subscribe with a retained last payload."""

from __future__ import annotations

import itertools
import logging
import re
import threading
from typing import Callable

from ..errors import BadFilter, SubscriptionRefused, TopicNotFound

log = logging.getLogger(__name__)

_TOPIC_RE = re.compile(r"^[A-Za-z0-9._~-]{1,64}$")

# (topic, payload) -> None; raise PayloadRejected to refuse a publish
Validator = Callable[[str, bytes], None]


class Subscription:
    def __init__(self, channel: "Channel", sub_id: int, callback):
        self.channel = channel
        self.id = sub_id
        self.callback = callback
        self.active = True

    def cancel(self) -> None:
        self.channel._remove(self.id)


class Channel:
    """One topic.

    Publishing holds the channel lock during fan-out, so callbacks see
    payloads in publish order and must not block.
    """

    def __init__(self, topic: str, confirmable: bool = False):
        self.topic = topic
        self.confirmable = confirmable
        self.retained: bytes | None = None
        self._subs: dict[int, Subscription] = {}
        self._ids = itertools.count(1)
        self._lock = threading.RLock()

    @property
    def subscriber_count(self) -> int:
        return len(self._subs)

    def _add(self, callback) -> Subscription:
        with self._lock:
            sub = Subscription(self, next(self._ids), callback)
            self._subs[sub.id] = sub
            if self.retained is not None:
                _call(sub, self.retained)
            return sub

    def _remove(self, sub_id: int) -> None:
        with self._lock:
            sub = self._subs.pop(sub_id, None)
            if sub is not None:
                sub.active = False

    def _publish(self, payload: bytes) -> int:
        with self._lock:
            self.retained = payload
            subs = list(self._subs.values())
            for sub in subs:
                _call(sub, payload)
            return len(subs)


def _call(sub: Subscription, payload: bytes) -> None:
    try:
        sub.callback(payload)
    except Exception:
        log.exception("subscriber %s on %s failed", sub.id, sub.channel.topic)


class Broker:
    def __init__(self, auto_create: bool = True, max_subscribers: int = 1024,
                 validator: Validator | None = None, confirmable: bool = False):
        self.auto_create = auto_create
        self.max_subscribers = max_subscribers
        self.validator = validator
        self.confirmable = confirmable
        self._channels: dict[str, Channel] = {}
        self._lock = threading.Lock()

    def create(self, topic: str, confirmable: bool | None = None) -> Channel:
        check_topic(topic)
        with self._lock:
            ch = self._channels.get(topic)
            if ch is None:
                ch = Channel(topic, self.confirmable if confirmable is None else confirmable)
                self._channels[topic] = ch
            return ch

    def channel(self, topic: str, create: bool | None = None) -> Channel:
        check_topic(topic)
        ch = self._channels.get(topic)
        if ch is not None:
            return ch
        if create if create is not None else self.auto_create:
            return self.create(topic)
        raise TopicNotFound(f"no channel {topic}")

    def topics(self) -> list:
        return sorted(self._channels)

    def publish(self, topic: str, payload: bytes) -> int:
        """Deliver to every current subscriber and retain; returns the delivery count."""
        payload = bytes(payload)
        if self.validator is not None:
            self.validator(topic, payload)
        return self.channel(topic)._publish(payload)

    def subscribe(self, topic: str, callback) -> Subscription:
        ch = self.channel(topic)
        with self._lock:
            total = sum(c.subscriber_count for c in self._channels.values())
            if total >= self.max_subscribers:
                raise SubscriptionRefused("broker at subscriber capacity")
            return ch._add(callback)

    def retained(self, topic: str) -> bytes | None:
        return self.channel(topic, create=False).retained


def check_topic(topic: str) -> str:
    if not isinstance(topic, str) or not _TOPIC_RE.match(topic):
        raise BadFilter(f"bad topic name {topic!r}")
    return topic
