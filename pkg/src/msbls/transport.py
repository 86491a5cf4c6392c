"""Message delivery over two interchangeable backends.

Wire frame (all integers big-endian, floats IEEE-754 big-endian doubles):

    magic          4 bytes  b"MSBL"
    version        1 byte   0x01
    session_id    16 bytes
    seq            2 bytes  unsigned
    sender         1 byte
    receiver       1 byte
    kind           1 byte
    payload_count  1 byte   1 or 2
    per payload:   rows u32, cols u32, rows*cols f64 (row-major)
    checksum       4 bytes  CRC32 of all preceding frame bytes

Frames round-trip bit-exactly for finite matrices; bad magic, bad version,
truncation or checksum mismatch reject the frame without state change.
Delivery is FIFO per directed (sender, receiver) pair on both backends.
"""

from __future__ import annotations

import os
import queue
import socket
import struct
import threading
import time
import zlib

import numpy as np

from .messages import MessageKind, ProtocolMessage, Role

MAGIC = b"MSBL"
VERSION = 1
_HEADER = struct.Struct(">4sB16sHBBBB")
_DIMS = struct.Struct(">II")
_CRC = struct.Struct(">I")

DEFAULT_TIMEOUT_S = float(os.environ.get("MSBLS_TIMEOUT_MS", "30000")) / 1000.0


class FrameError(ValueError):
    """A wire frame failed to encode or decode."""


class TransportTimeout(TimeoutError):
    """No message arrived within the receive timeout."""


class TransportClosed(ConnectionError):
    """The channel was closed while sending or receiving."""


def encode_message(msg: ProtocolMessage) -> bytes:
    """Serialize a message into one self-delimiting frame."""
    parts = [
        _HEADER.pack(
            MAGIC,
            VERSION,
            msg.session_id,
            msg.seq,
            int(msg.sender),
            int(msg.receiver),
            int(msg.kind),
            len(msg.payloads),
        )
    ]
    for p in msg.payloads:
        if not np.all(np.isfinite(p)):
            raise FrameError("cannot encode non-finite payload")
        parts.append(_DIMS.pack(p.shape[0], p.shape[1]))
        parts.append(np.ascontiguousarray(p, dtype=np.float64).astype(">f8").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_message(data: bytes) -> ProtocolMessage:
    """Inverse of encode_message; raises FrameError on any malformed frame."""
    if len(data) < _HEADER.size + _CRC.size:
        raise FrameError("truncated frame: incomplete header")
    magic, version, session_id, seq, sender, receiver, kind, count = _HEADER.unpack(
        data[: _HEADER.size]
    )
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if count not in (1, 2):
        raise FrameError(f"payload count must be 1 or 2, got {count}")
    offset = _HEADER.size
    payloads = []
    for _ in range(count):
        if len(data) < offset + _DIMS.size:
            raise FrameError("truncated frame: incomplete payload dims")
        rows, cols = _DIMS.unpack(data[offset : offset + _DIMS.size])
        offset += _DIMS.size
        if rows < 1 or cols < 1:
            raise FrameError(f"bad payload dims {rows}x{cols}")
        nbytes = rows * cols * 8
        if len(data) < offset + nbytes:
            raise FrameError("truncated frame: incomplete payload entries")
        entries = np.frombuffer(data[offset : offset + nbytes], dtype=">f8")
        payloads.append(entries.astype(np.float64).reshape(rows, cols))
        offset += nbytes
    if len(data) < offset + _CRC.size:
        raise FrameError("truncated frame: missing checksum")
    if len(data) > offset + _CRC.size:
        raise FrameError("trailing bytes after frame")
    (crc,) = _CRC.unpack(data[offset : offset + _CRC.size])
    if crc != zlib.crc32(data[:offset]) & 0xFFFFFFFF:
        raise FrameError("checksum mismatch")
    try:
        return ProtocolMessage(
            session_id=session_id,
            seq=seq,
            sender=Role(sender),
            receiver=Role(receiver),
            kind=MessageKind(kind),
            payloads=tuple(payloads),
        )
    except ValueError as exc:
        raise FrameError(f"invalid message fields: {exc}") from exc


class Endpoint:
    """One role's handle on a session: send to peers, receive per sender."""

    role: Role

    def send(self, msg: ProtocolMessage) -> None:
        raise NotImplementedError

    def recv(self, sender: Role, timeout: float | None = None) -> ProtocolMessage:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class _BusEndpoint(Endpoint):
    def __init__(self, role: Role, queues, closed: threading.Event):
        self.role = role
        self._queues = queues
        self._closed = closed

    def send(self, msg: ProtocolMessage) -> None:
        if self._closed.is_set():
            raise TransportClosed("bus is closed")
        if msg.sender != self.role:
            raise ValueError(f"{self.role.name} endpoint cannot send as {msg.sender.name}")
        self._queues[(msg.sender, msg.receiver)].put(msg)

    def recv(self, sender: Role, timeout: float | None = None) -> ProtocolMessage:
        if timeout is None:
            timeout = DEFAULT_TIMEOUT_S
        deadline = time.monotonic() + timeout
        q = self._queues[(sender, self.role)]
        while True:
            if self._closed.is_set():
                raise TransportClosed("bus is closed")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportTimeout(
                    f"{self.role.name}: no message from {sender.name} within {timeout}s"
                )
            try:
                return q.get(timeout=min(remaining, 0.05))
            except queue.Empty:
                continue

    def close(self) -> None:
        self._closed.set()


def make_bus_endpoints() -> dict[Role, Endpoint]:
    """In-process backend: one FIFO queue per directed pair, shared close flag."""
    queues = {
        (s, r): queue.Queue() for s in Role for r in Role if s != r
    }
    closed = threading.Event()
    return {role: _BusEndpoint(role, queues, closed) for role in Role}


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout as exc:
            raise TransportTimeout(str(exc)) from exc
        except OSError as exc:
            raise TransportClosed(f"socket error: {exc}") from exc
        if not chunk:
            raise TransportClosed("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes:
    """Read exactly one frame off a stream socket."""
    header = _recv_exact(sock, _HEADER.size)
    magic, version, _, _, _, _, _, count = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if count not in (1, 2):
        raise FrameError(f"payload count must be 1 or 2, got {count}")
    body = bytearray(header)
    for _ in range(count):
        dims = _recv_exact(sock, _DIMS.size)
        body.extend(dims)
        rows, cols = _DIMS.unpack(dims)
        if rows < 1 or cols < 1:
            raise FrameError(f"bad payload dims {rows}x{cols}")
        body.extend(_recv_exact(sock, rows * cols * 8))
    body.extend(_recv_exact(sock, _CRC.size))
    return bytes(body)


class _TcpEndpoint(Endpoint):
    def __init__(self, role: Role, peers: dict[Role, socket.socket]):
        self.role = role
        self._peers = peers
        self._send_locks = {peer: threading.Lock() for peer in peers}
        self._closed = False

    def send(self, msg: ProtocolMessage) -> None:
        if msg.sender != self.role:
            raise ValueError(f"{self.role.name} endpoint cannot send as {msg.sender.name}")
        sock = self._peers[msg.receiver]
        data = encode_message(msg)
        with self._send_locks[msg.receiver]:
            try:
                sock.sendall(data)
            except OSError as exc:
                raise TransportClosed(f"send failed: {exc}") from exc

    def recv(self, sender: Role, timeout: float | None = None) -> ProtocolMessage:
        sock = self._peers[sender]
        sock.settimeout(DEFAULT_TIMEOUT_S if timeout is None else timeout)
        msg = decode_message(read_frame(sock))
        if msg.sender != sender:
            raise FrameError(
                f"frame from {sender.name} connection claims sender {msg.sender.name}"
            )
        return msg

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for sock in self._peers.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()


_HELLO = struct.Struct(">4sBB")  # magic, version, dialer role


def _hello(sock: socket.socket, role: Role) -> None:
    sock.sendall(_HELLO.pack(MAGIC, VERSION, int(role)))


def _read_hello(sock: socket.socket) -> Role:
    magic, version, role = _HELLO.unpack(_recv_exact(sock, _HELLO.size))
    if magic != MAGIC or version != VERSION:
        raise FrameError("bad connection hello")
    return Role(role)


def make_tcp_endpoints(
    host: str = "127.0.0.1",
    listen: dict[Role, tuple[str, int]] | None = None,
    connect_timeout: float = 10.0,
) -> dict[Role, Endpoint]:
    """Loopback TCP backend: one connection per pair of roles.

    The server listens for both clients; client A additionally listens for
    client B, so clients only ever dial. Passing ``listen`` pins explicit
    (host, port) pairs for the two listening roles; otherwise ephemeral
    loopback ports are used.
    """
    listen = listen or {}
    listeners: dict[Role, socket.socket] = {}
    for role, expected in ((Role.SERVER, 2), (Role.CLIENT_A, 1)):
        lsock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        lsock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        lsock.bind(listen.get(role, (host, 0)))
        lsock.listen(expected)
        lsock.settimeout(connect_timeout)
        listeners[role] = lsock

    server_addr = listeners[Role.SERVER].getsockname()
    client_a_addr = listeners[Role.CLIENT_A].getsockname()
    accepted: dict[Role, dict[Role, socket.socket]] = {
        Role.SERVER: {},
        Role.CLIENT_A: {},
    }
    errors: list[BaseException] = []

    def accept_loop(role: Role, count: int):
        try:
            for _ in range(count):
                conn, _ = listeners[role].accept()
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                accepted[role][_read_hello(conn)] = conn
        except BaseException as exc:
            errors.append(exc)

    threads = [
        threading.Thread(target=accept_loop, args=(Role.SERVER, 2), daemon=True),
        threading.Thread(target=accept_loop, args=(Role.CLIENT_A, 1), daemon=True),
    ]
    for t in threads:
        t.start()

    def dial(addr, role: Role) -> socket.socket:
        sock = socket.create_connection(addr, timeout=connect_timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        _hello(sock, role)
        return sock

    a_to_server = dial(server_addr, Role.CLIENT_A)
    b_to_server = dial(server_addr, Role.CLIENT_B)
    b_to_a = dial(client_a_addr, Role.CLIENT_B)
    for t in threads:
        t.join(connect_timeout)
    for lsock in listeners.values():
        lsock.close()
    if errors:
        raise TransportClosed(f"tcp setup failed: {errors[0]}")

    return {
        Role.SERVER: _TcpEndpoint(
            Role.SERVER,
            {
                Role.CLIENT_A: accepted[Role.SERVER][Role.CLIENT_A],
                Role.CLIENT_B: accepted[Role.SERVER][Role.CLIENT_B],
            },
        ),
        Role.CLIENT_A: _TcpEndpoint(
            Role.CLIENT_A,
            {
                Role.SERVER: a_to_server,
                Role.CLIENT_B: accepted[Role.CLIENT_A][Role.CLIENT_B],
            },
        ),
        Role.CLIENT_B: _TcpEndpoint(
            Role.CLIENT_B,
            {Role.SERVER: b_to_server, Role.CLIENT_A: b_to_a},
        ),
    }
