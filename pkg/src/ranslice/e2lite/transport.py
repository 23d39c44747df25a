"""Byte-line transports: an in-process queue pair and a Unix stream socket."""

from __future__ import annotations

import os
import queue
import select
import socket
import time
from typing import Optional

from .messages import LineBuffer


class TransportClosed(ConnectionError):
    pass


class Transport:
    """Carries newline-terminated byte lines in both directions."""

    def send_line(self, line: bytes) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: Optional[float] = None) -> Optional[bytes]:
        """Next line, or ``None`` when ``timeout`` seconds pass without one."""
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


_CLOSED = object()


class QueueTransport(Transport):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._in, self._out = inbox, outbox
        self._closed = False

    def send_line(self, line: bytes) -> None:
        if self._closed:
            raise TransportClosed("transport closed")
        self._out.put(bytes(line))

    def recv_line(self, timeout: Optional[float] = None) -> Optional[bytes]:
        if self._closed:
            raise TransportClosed("transport closed")
        try:
            item = self._in.get(timeout=timeout) if timeout is None or timeout > 0 \
                else self._in.get_nowait()
        except queue.Empty:
            return None
        if item is _CLOSED:
            self._closed = True
            raise TransportClosed("peer closed")
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._out.put(_CLOSED)


def inproc_pair() -> tuple[QueueTransport, QueueTransport]:
    """Two connected in-process endpoints (RAN side, xApp side)."""
    a, b = queue.Queue(), queue.Queue()
    return QueueTransport(a, b), QueueTransport(b, a)


class SocketTransport(Transport):
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = LineBuffer()
        self._lines: list[bytes] = []
        self._closed = False

    def send_line(self, line: bytes) -> None:
        if self._closed:
            raise TransportClosed("transport closed")
        try:
            self._sock.sendall(line)
        except OSError as exc:
            self._closed = True
            raise TransportClosed(str(exc)) from None

    def recv_line(self, timeout: Optional[float] = None) -> Optional[bytes]:
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self._lines:
            if self._closed:
                raise TransportClosed("transport closed")
            wait = None if deadline is None else max(deadline - time.monotonic(), 0.0)
            ready, _, _ = select.select([self._sock], [], [], wait)
            if not ready:
                return None
            try:
                chunk = self._sock.recv(65536)
            except OSError as exc:
                self._closed = True
                raise TransportClosed(str(exc)) from None
            if not chunk:
                self._closed = True
                raise TransportClosed("peer closed")
            self._buf.feed(chunk)
            self._lines.extend(self._buf.lines())
        return self._lines.pop(0)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()


def socket_listen(path: str) -> socket.socket:
    if os.path.exists(path):
        os.unlink(path)
    srv = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    srv.bind(path)
    srv.listen(1)
    return srv


def socket_accept(srv: socket.socket, timeout: float = 10.0) -> SocketTransport:
    srv.settimeout(timeout)
    conn, _ = srv.accept()
    conn.setblocking(True)
    return SocketTransport(conn)


def socket_connect(path: str, timeout: float = 10.0) -> SocketTransport:
    end = time.monotonic() + timeout
    while True:
        s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        try:
            s.connect(path)
            return SocketTransport(s)
        except (FileNotFoundError, ConnectionRefusedError):
            s.close()
            if time.monotonic() > end:
                raise
            time.sleep(0.01)
