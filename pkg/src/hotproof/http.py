"""Minimal HTTP plumbing shared by the node, notary and oracle services.

Each service exposes ``handle(method, path, body) -> Response``. The same
object can be served over a localhost socket (``serve``) or called directly
through ``LocalTransport``; clients only see the transport interface.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .crypto import pretty_json
from .errors import ServiceUnavailable


@dataclass
class Response:
    status: int
    body: bytes
    headers: dict[str, str] = field(default_factory=dict)

    def json(self):
        return json.loads(self.body)


def json_response(obj, status: int = 200, headers: dict | None = None) -> Response:
    return Response(status, pretty_json(obj), {"Content-Type": "application/json", **(headers or {})})


def error_response(status: int, reason: str, detail: str = "") -> Response:
    return json_response({"error": reason, "detail": detail}, status)


def _raise_for_status(resp: Response) -> Response:
    if 200 <= resp.status < 300:
        return resp
    try:
        reason = json.loads(resp.body)["error"]
    except (ValueError, KeyError, TypeError):
        reason = "HttpError"
    raise ServiceUnavailable(resp.status, reason)


class LocalTransport:
    """Calls a service object in-process."""

    def __init__(self, app):
        self.app = app

    def request(self, method: str, path: str, body: bytes = b"") -> Response:
        return _raise_for_status(self.app.handle(method, path, body))

    def get_json(self, path: str):
        return self.request("GET", path).json()

    def post_json(self, path: str, obj):
        return self.request("POST", path, json.dumps(obj).encode()).json()


class HttpTransport(LocalTransport):
    """Same interface over real sockets. Connection failures raise OSError."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def request(self, method: str, path: str, body: bytes = b"") -> Response:
        req = urllib.request.Request(
            self.base_url + path,
            data=body if method == "POST" else None,
            method=method,
            headers={"Content-Type": "application/json"} if method == "POST" else {},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as r:
                resp = Response(r.status, r.read(), dict(r.headers.items()))
        except urllib.error.HTTPError as err:
            resp = Response(err.code, err.read(), dict(err.headers.items()))
        return _raise_for_status(resp)


def transport_for(target) -> LocalTransport:
    """Accept a URL string, a transport, or a service object."""
    if isinstance(target, str):
        return HttpTransport(target)
    if isinstance(target, LocalTransport):
        return target
    return LocalTransport(target)


def _handler_for(app):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self, method):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            try:
                resp = app.handle(method, self.path, body)
            except Exception as exc:  # keep the server alive; report as 500
                resp = error_response(500, type(exc).__name__, str(exc))
            self.send_response(resp.status)
            for k, v in resp.headers.items():
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            self.wfile.write(resp.body)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def log_message(self, format, *args):
            pass

    return Handler


def make_server(app, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _handler_for(app))
    server.daemon_threads = True
    return server


def serve_in_thread(app, host: str = "127.0.0.1", port: int = 0):
    """Start ``app`` on a background thread; returns ``(server, base_url)``."""
    server = make_server(app, host, port)
    threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True).start()
    h, p = server.server_address[:2]
    return server, f"http://{h}:{p}"


def parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    return host or "127.0.0.1", int(port)
