"""Length-prefixed binary protocol for external steering controllers.

Every message is ``uint32 length`` (big-endian, payload bytes) followed by
the payload, whose first byte is the message type:

=========  ====  ==========================================================
HELLO      0x01  uint16 version, UTF-8 JSON ProjectionSpec
HELLO_ACK  0x02  uint16 version
REQUEST    0x03  uint32 seq, uint16 width, uint16 height, float64 speed,
                 width*height*3 bytes RGB, row-major, top row first
REPLY      0x04  uint32 seq, float64 steering-wheel angle (radians)
BYE        0x05  (empty)
=========  ====  ==========================================================

The simulator sends HELLO, waits for HELLO_ACK, then alternates
REQUEST/REPLY with strictly increasing ``seq`` starting at 1, and sends
BYE on shutdown. All integers and floats are big-endian.
"""
from __future__ import annotations

import json
import os
import selectors
import struct
import time
from dataclasses import dataclass

import numpy as np

from lanesim.errors import ControllerError

VERSION = 1
HELLO, HELLO_ACK, REQUEST, REPLY, BYE = 0x01, 0x02, 0x03, 0x04, 0x05
MAX_MESSAGE = 64 * 1024 * 1024

_LEN = struct.Struct(">I")
_HELLO = struct.Struct(">BH")
_REQUEST = struct.Struct(">BIHHd")
_REPLY = struct.Struct(">BId")


@dataclass(frozen=True)
class Hello:
    version: int
    spec: dict


@dataclass(frozen=True)
class HelloAck:
    version: int


@dataclass(frozen=True)
class Request:
    seq: int
    speed: float
    pixels: np.ndarray


@dataclass(frozen=True)
class Reply:
    seq: int
    angle: float


@dataclass(frozen=True)
class Bye:
    pass


def frame(payload: bytes) -> bytes:
    return _LEN.pack(len(payload)) + payload


def encode_hello(spec: dict, version: int = VERSION) -> bytes:
    return frame(_HELLO.pack(HELLO, version) + json.dumps(spec, sort_keys=True).encode())


def encode_hello_ack(version: int = VERSION) -> bytes:
    return frame(_HELLO.pack(HELLO_ACK, version))


def encode_request(seq: int, pixels: np.ndarray, speed: float) -> bytes:
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = px.shape[:2]
    return frame(_REQUEST.pack(REQUEST, seq, w, h, float(speed)) + px.tobytes())


def encode_reply(seq: int, angle: float) -> bytes:
    return frame(_REPLY.pack(REPLY, seq, float(angle)))


def encode_bye() -> bytes:
    return frame(bytes([BYE]))


def decode(payload: bytes):
    """Parse one payload into a message object."""
    if not payload:
        raise ControllerError("empty message")
    kind = payload[0]
    try:
        if kind == HELLO:
            _, version = _HELLO.unpack_from(payload)
            spec = json.loads(payload[_HELLO.size:].decode()) if len(payload) > _HELLO.size else {}
            return Hello(version, spec)
        if kind == HELLO_ACK:
            _, version = _HELLO.unpack(payload)
            return HelloAck(version)
        if kind == REQUEST:
            _, seq, w, h, speed = _REQUEST.unpack_from(payload)
            body = payload[_REQUEST.size:]
            if len(body) != w * h * 3:
                raise ControllerError(f"request body has {len(body)} bytes, expected {w * h * 3}")
            pixels = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
            return Request(seq, speed, pixels)
        if kind == REPLY:
            _, seq, angle = _REPLY.unpack(payload)
            return Reply(seq, angle)
        if kind == BYE:
            if len(payload) != 1:
                raise ControllerError("BYE carries no body")
            return Bye()
    except (struct.error, ValueError) as exc:
        raise ControllerError(f"malformed message of type {kind:#04x}: {exc}") from None
    raise ControllerError(f"unknown message type {kind:#04x}")


def read_message_blocking(stream):
    """Read one message from a binary file object; ``None`` on clean EOF."""
    head = stream.read(_LEN.size)
    if not head:
        return None
    if len(head) != _LEN.size:
        raise ControllerError("truncated length prefix")
    (n,) = _LEN.unpack(head)
    if n > MAX_MESSAGE:
        raise ControllerError(f"message of {n} bytes exceeds limit")
    payload = stream.read(n)
    if len(payload) != n:
        raise ControllerError("truncated message")
    return decode(payload)


class FdReader:
    """Deadline-aware reader over a raw pipe file descriptor."""

    def __init__(self, fd: int):
        self.fd = fd
        self.buffer = bytearray()
        self.selector = selectors.DefaultSelector()
        self.selector.register(fd, selectors.EVENT_READ)

    def _fill(self, n: int, deadline: float) -> None:
        while len(self.buffer) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not self.selector.select(remaining):
                raise ControllerError("timed out waiting for controller reply")
            chunk = os.read(self.fd, max(65536, n - len(self.buffer)))
            if not chunk:
                raise ControllerError("controller closed its output stream")
            self.buffer.extend(chunk)

    def read_message(self, timeout: float):
        deadline = time.monotonic() + timeout
        self._fill(_LEN.size, deadline)
        (n,) = _LEN.unpack(bytes(self.buffer[: _LEN.size]))
        if n > MAX_MESSAGE:
            raise ControllerError(f"message of {n} bytes exceeds limit")
        self._fill(_LEN.size + n, deadline)
        payload = bytes(self.buffer[_LEN.size : _LEN.size + n])
        del self.buffer[: _LEN.size + n]
        return decode(payload)

    def close(self) -> None:
        self.selector.close()
