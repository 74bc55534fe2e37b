"""Frame codec for envelopes.

Layout: 4-byte big-endian length of everything that follows, then 1 byte of
flags (bit 0: signed), 2-byte big-endian sender length, sender UTF-8; if
signed, 1 byte algorithm id, 2-byte big-endian MAC length, MAC bytes; the
remaining bytes are the payload.  The simulator's fault injector mutates
encoded frames, so decode errors here are a normal, counted event.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Tuple

from .auth import Mac

FLAG_SIGNED = 0x01


class FrameError(Exception):
    pass


@dataclass
class Envelope:
    sender: str
    payload: bytes
    mac: Optional[Mac] = None
    origin: str = "network"  # network | alarm


def encode_envelope(env: Envelope) -> bytes:
    sender = env.sender.encode("utf-8")
    flags = FLAG_SIGNED if env.mac is not None else 0
    body = bytes([flags]) + struct.pack(">H", len(sender)) + sender
    if env.mac is not None:
        body += bytes([env.mac.algorithm]) + struct.pack(">H", len(env.mac.data)) + env.mac.data
    body += env.payload
    return struct.pack(">I", len(body)) + body


def decode_body(body: bytes) -> Envelope:
    if len(body) < 3:
        raise FrameError("frame body too short")
    flags = body[0]
    slen = struct.unpack(">H", body[1:3])[0]
    pos = 3
    if len(body) < pos + slen:
        raise FrameError("truncated sender")
    try:
        sender = body[pos:pos + slen].decode("utf-8")
    except UnicodeDecodeError:
        raise FrameError("sender is not valid UTF-8")
    pos += slen
    mac = None
    if flags & FLAG_SIGNED:
        if len(body) < pos + 3:
            raise FrameError("truncated signature header")
        alg = body[pos]
        mlen = struct.unpack(">H", body[pos + 1:pos + 3])[0]
        pos += 3
        if len(body) < pos + mlen:
            raise FrameError("truncated MAC")
        mac = Mac(alg, body[pos:pos + mlen])
        pos += mlen
    return Envelope(sender, body[pos:], mac, "network")


def decode_frame(data: bytes) -> Tuple[Envelope, int]:
    """Decode one frame from the head of data; returns (envelope, bytes used)."""
    if len(data) < 4:
        raise FrameError("truncated length prefix")
    total = struct.unpack(">I", data[:4])[0]
    if len(data) < 4 + total:
        raise FrameError("truncated frame")
    return decode_body(data[4:4 + total]), 4 + total


class StreamDecoder:
    """Incremental decoder for a TCP byte stream."""

    def __init__(self):
        self._buf = b""

    def feed(self, data: bytes) -> list:
        self._buf += data
        out = []
        while True:
            if len(self._buf) < 4:
                return out
            total = struct.unpack(">I", self._buf[:4])[0]
            if len(self._buf) < 4 + total:
                return out
            body = self._buf[4:4 + total]
            self._buf = self._buf[4 + total:]
            out.append(decode_body(body))

    @property
    def pending(self) -> int:
        return len(self._buf)
