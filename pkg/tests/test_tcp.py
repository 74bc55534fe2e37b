import socket
import time

import pytest

from logicnode.reader import parse_program, parse_term, serialize
from logicnode.runtime import NodeConfig, start_node
from logicnode.tcp import TcpTransport, split_hostport
from logicnode.wire import Envelope, StreamDecoder, encode_envelope

COUNT_SRC = """
:- event ping/1.
:- alarm tick/0.
:- dynamic seen/1, ticks/1.
ticks(0).

ping(X) :- assert(seen(X)).
tick :- retract(ticks(N)), M is N + 1, assert(ticks(M)).
"""

_PORT = [21500]


def fresh_addr() -> str:
    _PORT[0] += 1
    return "127.0.0.1:%d" % _PORT[0]


@pytest.fixture
def server():
    addr = fresh_addr()
    transport = TcpTransport(addr)
    node = start_node(NodeConfig(addr, parse_program(COUNT_SRC)), transport)
    transport.start()
    yield addr, node, transport
    transport.stop()


def wait_for(pred, timeout=5.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(0.01)
    return False


def send_raw(addr: str, data: bytes, read_reply: bool = False) -> bytes:
    with socket.create_connection(split_hostport(addr), timeout=5) as s:
        s.sendall(data)
        if not read_reply:
            time.sleep(0.05)
            return b""
        s.settimeout(5)
        dec = StreamDecoder()
        while True:
            chunk = s.recv(65536)
            if not chunk:
                return b""
            got = dec.feed(chunk)
            if got:
                return got[0].payload


def test_split_hostport():
    assert split_hostport("127.0.0.1:8000") == ("127.0.0.1", 8000)
    with pytest.raises(ValueError):
        split_hostport("nocolon")


def test_delivery_over_tcp(server):
    addr, node, _ = server
    frame = encode_envelope(Envelope("tester", serialize(parse_term("ping(a)"))))
    send_raw(addr, frame)
    assert wait_for(lambda: node.metrics.delivered == 1)
    assert node.dump_facts("seen", 1) == "seen(a)"


def test_split_frames_across_writes(server):
    addr, node, _ = server
    frame = encode_envelope(Envelope("tester", serialize(parse_term("ping(b)"))))
    with socket.create_connection(split_hostport(addr), timeout=5) as s:
        for i in range(len(frame)):
            s.sendall(frame[i:i + 1])
            time.sleep(0.001)
    assert wait_for(lambda: node.metrics.delivered == 1)


def test_many_frames_one_write(server):
    addr, node, _ = server
    frames = b"".join(
        encode_envelope(Envelope("tester", serialize(parse_term("ping(%d)" % i))))
        for i in range(20))
    send_raw(addr, frames)
    assert wait_for(lambda: node.metrics.delivered == 20)


def test_outbound_connection_reuse(server):
    addr, node, transport = server
    peer_addr = fresh_addr()
    peer_transport = TcpTransport(peer_addr)
    peer = start_node(NodeConfig(peer_addr, parse_program(COUNT_SRC)), peer_transport)
    peer_transport.start()
    try:
        env = Envelope(addr, serialize(parse_term("ping(x)")))
        for _ in range(5):
            transport.send(addr, peer_addr, env)
        assert wait_for(lambda: peer.metrics.delivered == 5)
        assert transport.connections_opened == 1
    finally:
        peer_transport.stop()


def test_send_to_dead_peer_raises_link_error(server):
    _, _, transport = server
    from logicnode.runtime import LinkError
    with pytest.raises(LinkError):
        transport.send("x", "127.0.0.1:1", Envelope("x", b"hi"))


def test_alarm_fires_on_wall_clock(server):
    addr, node, transport = server
    transport.schedule_alarm(addr, 30, Envelope(addr, serialize(parse_term("tick")), None, "alarm"))
    assert wait_for(lambda: "ticks(1)" in node.dump_facts("ticks", 1))


def test_dump_endpoint_round_trip(server):
    addr, node, _ = server
    frame = encode_envelope(Envelope("tester", serialize(parse_term("ping(q)"))))
    send_raw(addr, frame)
    assert wait_for(lambda: node.metrics.delivered == 1)
    req = encode_envelope(Envelope("tester", serialize(parse_term("'$dump'(seen, 1)"))))
    assert send_raw(addr, req, read_reply=True) == b"seen(q)"


def test_dump_endpoint_can_be_disabled():
    addr = fresh_addr()
    transport = TcpTransport(addr)
    node = start_node(
        NodeConfig(addr, parse_program(COUNT_SRC), debug_endpoint=False), transport)
    transport.start()
    try:
        req = encode_envelope(Envelope("t", serialize(parse_term("'$dump'(seen, 1)"))))
        with socket.create_connection(split_hostport(addr), timeout=2) as s:
            s.sendall(req)
            s.settimeout(0.5)
            with pytest.raises(socket.timeout):
                s.recv(4096)
    finally:
        transport.stop()


def test_double_bind_fails(server):
    addr, _, _ = server
    from logicnode.runtime import LinkError
    with pytest.raises(LinkError):
        TcpTransport(addr)


def test_garbage_bytes_only_drop_that_connection(server):
    addr, node, _ = server
    # huge length prefix forces the decoder to wait forever; closing is fine
    send_raw(addr, b"\xff\xff\xff\xff garbage")
    frame = encode_envelope(Envelope("tester", serialize(parse_term("ping(ok)"))))
    send_raw(addr, frame)
    assert wait_for(lambda: node.metrics.delivered == 1)
