"""Datagram transports: UDP sockets and an in-process loopback network.

Both can drop outgoing datagrams with a seeded probability so loss tests are
reproducible.
"""

from __future__ import annotations

import itertools
import logging
import queue
import random
import socket
import threading
import time
from typing import Callable

log = logging.getLogger(__name__)

Receiver = Callable[[bytes, object], None]


class LossModel:
    """Bernoulli datagram loss driven by a seeded RNG."""

    def __init__(self, loss: float = 0.0, seed: int | None = 0):
        if not 0.0 <= loss < 1.0:
            raise ValueError("loss must be in [0, 1)")
        self.loss = loss
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.sent = 0
        self.dropped = 0

    def drop(self) -> bool:
        with self._lock:
            self.sent += 1
            if self.loss and self._rng.random() < self.loss:
                self.dropped += 1
                return True
            return False


class Transport:
    local_address = None

    def start(self, receiver: Receiver) -> None:
        raise NotImplementedError

    def send(self, data: bytes, remote) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LoopbackNetwork:
    """A shared medium for :class:`LoopbackTransport` instances."""

    def __init__(self, loss: float = 0.0, seed: int | None = 0, latency: float = 0.0):
        self.loss = LossModel(loss, seed)
        self.latency = latency
        self._ports: dict = {}
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def transport(self, name: str | None = None) -> "LoopbackTransport":
        with self._lock:
            addr = ("loopback", name or f"node{next(self._ids)}")
            if addr in self._ports:
                raise OSError(f"address {addr} in use")
            t = LoopbackTransport(self, addr)
            self._ports[addr] = t
            return t

    def _deliver(self, data: bytes, src, dst) -> None:
        if self.loss.drop():
            return
        with self._lock:
            target = self._ports.get(dst)
        if target is None:
            return
        if self.latency:
            threading.Timer(self.latency, target._inbox.put, ((data, src),)).start()
        else:
            target._inbox.put((data, src))

    def _unregister(self, addr) -> None:
        with self._lock:
            self._ports.pop(addr, None)


class LoopbackTransport(Transport):
    def __init__(self, network: LoopbackNetwork, addr):
        self.network = network
        self.local_address = addr
        self._inbox: queue.Queue = queue.Queue()
        self._thread = None

    def start(self, receiver: Receiver) -> None:
        def pump():
            while True:
                item = self._inbox.get()
                if item is None:
                    return
                try:
                    receiver(*item)
                except Exception:
                    log.exception("receiver failed")

        self._thread = threading.Thread(target=pump, name=f"loop-{self.local_address[1]}", daemon=True)
        self._thread.start()

    def send(self, data: bytes, remote) -> None:
        self.network._deliver(bytes(data), self.local_address, remote)

    def close(self) -> None:
        self.network._unregister(self.local_address)
        self._inbox.put(None)
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=2)


class UdpTransport(Transport):
    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 loss: float = 0.0, seed: int | None = 0):
        family = socket.AF_INET6 if ":" in host else socket.AF_INET
        self.sock = socket.socket(family, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.sock.settimeout(0.2)
        self.local_address = self.sock.getsockname()[:2]
        self.loss = LossModel(loss, seed)
        self._closed = threading.Event()
        self._thread = None

    def start(self, receiver: Receiver) -> None:
        def pump():
            while not self._closed.is_set():
                try:
                    data, addr = self.sock.recvfrom(65535)
                except socket.timeout:
                    continue
                except OSError:
                    return
                try:
                    receiver(data, addr[:2])
                except Exception:
                    log.exception("receiver failed")

        self._thread = threading.Thread(target=pump, name=f"udp-{self.local_address[1]}", daemon=True)
        self._thread.start()

    def send(self, data: bytes, remote) -> None:
        if self.loss.drop():
            return
        try:
            self.sock.sendto(data, remote)
        except OSError as exc:
            log.warning("send to %s failed: %s", remote, exc)

    def close(self) -> None:
        self._closed.set()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=2)
        self.sock.close()


def parse_bind(text: str) -> tuple:
    """``host:port`` or ``[v6]:port`` to a socket address tuple."""
    if text.startswith("["):
        host, _, port = text[1:].partition("]:")
    else:
        host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {text!r}; expected host:port")
    return host, int(port)


def wait_until(predicate, timeout: float = 5.0, interval: float = 0.005) -> bool:
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if predicate():
            return True
        time.sleep(interval)
    return predicate()
