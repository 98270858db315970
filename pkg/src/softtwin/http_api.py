"""HTTP front end for a running twin engine.

Endpoints:
  GET  /state    latest published snapshot
  GET  /config   active twin configuration
  GET  /health   liveness plus link status
  GET  /stream   server-sent events, one per published snapshot
  POST /command  {"type": "<command>", "value": <number|bool>}
Anything else is served from the static UI directory when one is set.

Built on the stdlib threading HTTP server: one thread per connection, so a
stream subscriber never blocks state reads or commands. All responses carry
permissive CORS headers so a UI served elsewhere during development can talk
to the twin directly.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import unquote, urlparse

from .controller import StartupError
from .modbus import ModbusError
from .twin import LinkDownError, TwinEngine

MAX_COMMAND_BODY = 64 * 1024
STREAM_KEEPALIVE_S = 0.25

PLACEHOLDER_PAGE = b"""<!doctype html>
<meta charset="utf-8">
<title>soft gripper twin</title>
<style>body{font-family:system-ui;margin:3rem auto;max-width:36rem;color:#222}</style>
<h1>Twin is running</h1>
<p>No UI bundle is configured. The JSON API is live:</p>
<ul>
<li><a href="/state">/state</a></li>
<li><a href="/config">/config</a></li>
<li><a href="/health">/health</a></li>
<li><code>/stream</code> (server-sent events)</li>
</ul>
"""


class _TwinHttpServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    engine: TwinEngine
    static_dir: str | None
    app_stop: threading.Event


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _TwinHttpServer

    def log_message(self, fmt: str, *args) -> None:
        pass  # request logging stays out of stdout/stderr contracts

    # -- plumbing --------------------------------------------------------

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    # -- routes ----------------------------------------------------------

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.send_header("Connection", "close")
        self.end_headers()

    def do_GET(self) -> None:
        path = urlparse(self.path).path
        if path == "/state":
            self._get_state()
        elif path == "/config":
            self._send_json(200, self.server.engine.config.to_dict())
        elif path == "/health":
            self._get_health()
        elif path == "/stream":
            self._stream()
        else:
            self._static(path)

    def do_POST(self) -> None:
        if urlparse(self.path).path != "/command":
            self._send_json(404, {"error": "unknown path"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._send_json(400, {"error": "bad Content-Length"})
            return
        if not 0 < length <= MAX_COMMAND_BODY:
            self._send_json(400, {"error": "command body required"})
            return
        try:
            payload = json.loads(self.rfile.read(length))
            command = payload["type"]
            value = payload["value"]
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError):
            self._send_json(
                400, {"error": 'body must be JSON {"type": ..., "value": ...}'})
            return
        try:
            ack = self.server.engine.command(command, value)
        except ValueError as exc:
            self._send_json(400, {"error": str(exc)})
            return
        except (LinkDownError, ModbusError, OSError) as exc:
            self._send_json(503, {"error": f"controller unavailable: {exc}"})
            return
        self._send_json(200, ack.to_dict())

    # -- endpoint bodies ---------------------------------------------------

    def _get_state(self) -> None:
        state = self.server.engine.state()
        if state is None:
            self._send_json(503, {"error": "no state published yet"})
            return
        self._send_json(200, state.to_dict())

    def _get_health(self) -> None:
        state = self.server.engine.state()
        self._send_json(200, {
            "ok": True,
            "link_ok": bool(state is not None and state.link_ok),
            "states_published": self.server.engine.state_seq(),
        })

    def _stream(self) -> None:
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()
        seq = 0
        try:
            while not self.server.app_stop.is_set():
                got = self.server.engine.next_state(
                    seq, timeout=STREAM_KEEPALIVE_S)
                if got is None:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                seq, state = got
                event = json.dumps(state.to_dict())
                self.wfile.write(f"data: {event}\n\n".encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _static(self, path: str) -> None:
        static_dir = self.server.static_dir
        if static_dir is None:
            if path == "/":
                self._send_bytes(200, PLACEHOLDER_PAGE, "text/html; charset=utf-8")
            else:
                self._send_json(404, {"error": "not found"})
            return
        rel = "index.html" if path == "/" else unquote(path).lstrip("/")
        root = os.path.realpath(static_dir)
        full = os.path.realpath(os.path.join(root, rel))
        if full != root and not full.startswith(root + os.sep):
            self._send_json(404, {"error": "not found"})
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._send_json(404, {"error": "not found"})
            return
        content_type = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as f:
            self._send_bytes(200, f.read(), content_type)


class TwinApiServer:
    """Bind, serve, and stop the HTTP front end for one engine."""

    def __init__(self, engine: TwinEngine, host: str = "127.0.0.1",
                 port: int = 8421, static_dir: str | None = None):
        self._engine = engine
        self._host = host
        self._port = port
        self._static_dir = static_dir
        self._server: _TwinHttpServer | None = None
        self._thread: threading.Thread | None = None
        self._stop_event = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("server not started")
        return self._server.server_address[0], self._server.server_address[1]

    def start(self) -> "TwinApiServer":
        if self._server is not None:
            raise RuntimeError("server already started")
        try:
            server = _TwinHttpServer((self._host, self._port), _Handler)
        except OSError as exc:
            raise StartupError(
                f"cannot bind {self._host}:{self._port}: {exc}") from exc
        server.engine = self._engine
        server.static_dir = self._static_dir
        server.app_stop = self._stop_event
        self._server = server
        self._thread = threading.Thread(
            target=server.serve_forever, kwargs={"poll_interval": 0.1},
            name="twin-http", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop_event.set()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self) -> "TwinApiServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
