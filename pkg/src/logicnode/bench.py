"""Closed-loop request/response throughput benchmark over real TCP.

The server is an ordinary node running the echo program; measurement is
taken at the server (delivered handler count).  The client is a raw-socket
pipeline: it keeps a window of outstanding requests on one connection and
counts responses arriving on its own listening socket.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .protocols import load_asset
from .reader import serialize, parse_term
from .runtime import NodeConfig, start_node
from .tcp import TcpTransport, split_hostport
from .terms import Atom, Struct
from .wire import Envelope, StreamDecoder, encode_envelope

PAYLOAD_TARGET = 20  # bytes of term payload per request, mirroring the echo pair


@dataclass
class BenchReport:
    duration_s: float
    client_sent: int
    client_received: int
    server_delivered: int
    errors: int

    @property
    def req_per_s(self) -> float:
        if self.duration_s <= 0:
            return 0.0
        return self.server_delivered / self.duration_s

    def line(self) -> str:
        return ("duration=%.2fs sent=%d received=%d server_delivered=%d "
                "errors=%d req/s=%.0f" % (self.duration_s, self.client_sent,
                                          self.client_received,
                                          self.server_delivered, self.errors,
                                          self.req_per_s))


def make_server(bind_address: str):
    """Echo node plus its transport; caller runs or starts the transport."""
    transport = TcpTransport(bind_address)
    config = NodeConfig(address=bind_address, program=load_asset("pingpong_server"))
    node = start_node(config, transport)
    return node, transport


def _ping_payload(client_address: str) -> bytes:
    # pad the request so the term payload is at least PAYLOAD_TARGET bytes
    base = serialize(Struct("ping", (Atom(client_address), Atom("x"))))
    pad = max(1, PAYLOAD_TARGET - (len(base) - 1))
    term = Struct("ping", (Atom(client_address), Atom("x" * pad)))
    return serialize(term)


class _PongCounter:
    def __init__(self, bind_address: str):
        host, port = split_hostport(bind_address)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(16)
        self.received = 0
        self.errors = 0
        self._lock = threading.Lock()
        self._stop = threading.Event()
        threading.Thread(target=self._accept, daemon=True).start()

    def _accept(self):
        while not self._stop.is_set():
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            threading.Thread(target=self._read, args=(conn,), daemon=True).start()

    def _read(self, conn):
        decoder = StreamDecoder()
        while not self._stop.is_set():
            try:
                data = conn.recv(65536)
            except OSError:
                break
            if not data:
                break
            try:
                envs = decoder.feed(data)
            except Exception:
                with self._lock:
                    self.errors += 1
                break
            n = sum(1 for e in envs if e.payload.startswith(b"pong("))
            bad = len(envs) - n
            with self._lock:
                self.received += n
                self.errors += bad
        try:
            conn.close()
        except OSError:
            pass

    def stop(self):
        self._stop.set()
        try:
            self.sock.close()
        except OSError:
            pass


def run_client(server_address: str, client_address: str, duration_s: float = 10.0,
               window: int = 128) -> BenchReport:
    counter = _PongCounter(client_address)
    payload = _ping_payload(client_address)
    frame = encode_envelope(Envelope(client_address, payload, None, "network"))
    host, port = split_hostport(server_address)
    sock = socket.create_connection((host, port), timeout=5.0)
    sent = 0
    t0 = time.monotonic()
    deadline = t0 + duration_s
    try:
        while time.monotonic() < deadline:
            outstanding = sent - counter.received
            if outstanding < window:
                burst = window - outstanding
                sock.sendall(frame * burst)
                sent += burst
            else:
                time.sleep(0.0005)
    finally:
        elapsed = time.monotonic() - t0
        # drain stragglers
        settle = time.monotonic() + 2.0
        while counter.received < sent and time.monotonic() < settle:
            time.sleep(0.01)
        counter.stop()
        try:
            sock.close()
        except OSError:
            pass
    return BenchReport(duration_s=elapsed, client_sent=sent,
                       client_received=counter.received,
                       server_delivered=0, errors=counter.errors)


def run_loopback(duration_s: float = 10.0, window: int = 128,
                 server_address: str = "127.0.0.1:19801",
                 client_address: str = "127.0.0.1:19802") -> BenchReport:
    node, transport = make_server(server_address)
    transport.start()
    try:
        report = run_client(server_address, client_address, duration_s, window)
    finally:
        transport.stop()
    report.server_delivered = node.metrics.delivered
    return report
