"""HTTP gateway: tunnels encoded frames to a platform port.

The POST body is a frame payload without the length prefix; the gateway adds
the prefix, forwards over TCP, and returns the response payload the same
way.  A tunneled command is semantically identical to a direct one.
"""

from __future__ import annotations

import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .envelope import CONTENT_TYPE
from .framing import DEFAULT_MAX_FRAME_BYTES, FrameError, read_frame, write_frame


class _GatewayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def do_POST(self):
        server: "GatewayServer" = self.server  # type: ignore[assignment]
        length = int(self.headers.get("Content-Length", "0"))
        if length > server.max_frame_bytes:
            self._reply(413, b"frame too large")
            return
        payload = self.rfile.read(length)
        try:
            upstream_reply = server.forward(payload)
        except (OSError, FrameError) as exc:
            self._reply(502, f"upstream failure: {exc}".encode("utf-8"))
            return
        self._reply(200, upstream_reply, content_type=CONTENT_TYPE)

    def _reply(self, status: int, body: bytes, content_type: str = "text/plain"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self,
        listen: tuple[str, int],
        upstream: tuple[str, int],
        *,
        max_frame_bytes: int = DEFAULT_MAX_FRAME_BYTES,
        timeout: float = 10.0,
    ):
        self.upstream = upstream
        self.max_frame_bytes = max_frame_bytes
        self.upstream_timeout = timeout
        self._thread: threading.Thread | None = None
        super().__init__(listen, _GatewayHandler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        host = "127.0.0.1" if host in ("0.0.0.0", "") else host
        return f"http://{host}:{port}/"

    def forward(self, payload: bytes) -> bytes:
        with socket.create_connection(self.upstream, timeout=self.upstream_timeout) as sock:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            stream = sock.makefile("rwb")
            write_frame(stream, payload, self.max_frame_bytes)
            reply = read_frame(stream, self.max_frame_bytes)
        if reply is None:
            raise OSError("upstream closed the connection")
        return reply

    def start(self) -> None:
        self._thread = threading.Thread(
            target=lambda: self.serve_forever(poll_interval=0.05), name="gateway", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)
