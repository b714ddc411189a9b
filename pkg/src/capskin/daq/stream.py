"""TCP publisher for encoded frames.

A subscriber opens a connection and sends ``SUB 1\\n``. From then on it
receives frames, each preceded by a 4-byte little-endian length. Every
subscriber has its own queue of depth 8; when it is full the oldest frame is
dropped so a slow reader never holds up the scan loop. A bad handshake gets
``ERR <reason>\\n`` and the connection is closed.
"""

from __future__ import annotations

import asyncio
import logging
import socket
import threading
import time
from collections import deque
from contextlib import contextmanager
from typing import Callable

from capskin.daq.frame import LENGTH_PREFIX, VERSION, Frame, decode_frame, frame_with_prefix

log = logging.getLogger(__name__)

QUEUE_DEPTH = 8
HANDSHAKE_TIMEOUT_S = 5.0


class HandshakeRejected(ConnectionError):
    pass


class _Subscriber:
    def __init__(self, depth: int):
        self.queue: deque[bytes] = deque(maxlen=depth)
        self.ready = asyncio.Event()
        self.dropped = 0

    def put(self, data: bytes) -> None:
        if len(self.queue) == self.queue.maxlen:
            self.dropped += 1
        self.queue.append(data)
        self.ready.set()

    async def get(self) -> bytes:
        while not self.queue:
            self.ready.clear()
            await self.ready.wait()
        return self.queue.popleft()


class StreamServer:
    """Publish ``source(t)`` frames at ``rate_hz`` to all subscribers.

    ``source`` is called from the event loop with the scheduled tick time in
    seconds and must return a :class:`Frame`.
    """

    def __init__(self, source: Callable[[float], Frame], rate_hz: float,
                 host: str = "127.0.0.1", port: int = 0, queue_depth: int = QUEUE_DEPTH):
        self.source = source
        self.rate_hz = rate_hz
        self.host = host
        self.port = port
        self.queue_depth = queue_depth
        self.frames_published = 0
        self.last_sequence: int | None = None
        self._subs: set[_Subscriber] = set()
        self._handlers: set[asyncio.Task] = set()
        self._server: asyncio.base_events.Server | None = None
        self._producer: asyncio.Task | None = None

    @property
    def address(self) -> tuple[str, int]:
        sock = self._server.sockets[0]
        return sock.getsockname()[:2]

    @property
    def subscriber_count(self) -> int:
        return len(self._subs)

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self._producer = asyncio.get_running_loop().create_task(self._produce())
        log.info("streaming on %s:%d at %g Hz", *self.address, self.rate_hz)

    async def stop(self) -> None:
        if self._producer:
            self._producer.cancel()
            try:
                await self._producer
            except asyncio.CancelledError:
                pass
        if self._server:
            self._server.close()
        for task in list(self._handlers):
            task.cancel()
        if self._handlers:
            await asyncio.gather(*self._handlers, return_exceptions=True)
        if self._server:
            await self._server.wait_closed()

    async def _produce(self) -> None:
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        k = 0
        while True:
            delay = t0 + k / self.rate_hz - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            frame = self.source(k / self.rate_hz)
            data = frame_with_prefix(frame)
            for sub in self._subs:
                sub.put(data)
            self.frames_published += 1
            self.last_sequence = frame.sequence
            k += 1

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._handlers.add(task)
        try:
            await self._serve_client(reader, writer)
        finally:
            self._handlers.discard(task)

    async def _serve_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            line = await asyncio.wait_for(reader.readline(), HANDSHAKE_TIMEOUT_S)
        except (asyncio.TimeoutError, ConnectionError):
            writer.close()
            return
        reason = _check_handshake(line)
        if reason:
            writer.write(f"ERR {reason}\n".encode())
            try:
                await writer.drain()
            except ConnectionError:
                pass
            writer.close()
            return
        sub = _Subscriber(self.queue_depth)
        self._subs.add(sub)
        try:
            while True:
                writer.write(await sub.get())
                await writer.drain()
        except (ConnectionError, asyncio.CancelledError):
            pass
        finally:
            self._subs.discard(sub)
            writer.close()


def _check_handshake(line: bytes) -> str:
    parts = line.decode("ascii", "replace").strip().split()
    if len(parts) != 2 or parts[0] != "SUB":
        return f"expected 'SUB {VERSION}'"
    if parts[1] != str(VERSION):
        return f"unsupported version {parts[1]}"
    return ""


@contextmanager
def serve_in_thread(source: Callable[[float], Frame], rate_hz: float,
                    host: str = "127.0.0.1", port: int = 0, queue_depth: int = QUEUE_DEPTH):
    """Run a :class:`StreamServer` on a background event loop; yields the server."""
    server = StreamServer(source, rate_hz, host, port, queue_depth)
    loop = asyncio.new_event_loop()
    started = threading.Event()
    errors: list[BaseException] = []

    def run():
        asyncio.set_event_loop(loop)
        try:
            loop.run_until_complete(server.start())
        except BaseException as e:  # bind failures surface in the caller
            errors.append(e)
            started.set()
            return
        started.set()
        loop.run_forever()

    thread = threading.Thread(target=run, name="capskin-stream", daemon=True)
    thread.start()
    started.wait()
    if errors:
        loop.close()
        raise errors[0]
    try:
        yield server
    finally:
        asyncio.run_coroutine_threadsafe(server.stop(), loop).result(timeout=5)
        loop.call_soon_threadsafe(loop.stop)
        thread.join(timeout=5)
        loop.close()


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed")
        buf += chunk
    return bytes(buf)


def subscribe(host: str, port: int, duration: float | None = None, max_frames: int | None = None,
              version: int = VERSION, timeout: float = 5.0) -> list[Frame]:
    """Connect, handshake and collect frames for ``duration`` s or ``max_frames``."""
    frames: list[Frame] = []
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(f"SUB {version}\n".encode())
        deadline = None if duration is None else time.monotonic() + duration
        while max_frames is None or len(frames) < max_frames:
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                sock.settimeout(min(timeout, remaining))
            try:
                head = _recv_exact(sock, LENGTH_PREFIX.size)
            except socket.timeout:
                break
            if head.startswith(b"ERR"):
                rest = sock.makefile("rb").readline()
                raise HandshakeRejected((head + rest).decode().strip())
            (size,) = LENGTH_PREFIX.unpack(head)
            sock.settimeout(timeout)
            frames.append(decode_frame(_recv_exact(sock, size)))
    return frames
