"""Minimal JSON-over-HTTP server base used by the API facade and reference services.

Routes are (method, compiled pattern, handler) triples; handlers receive the
path match and the decoded JSON body and return (status, payload). Built on
ThreadingHTTPServer so concurrent requests are served without an event loop.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse


class JsonHttpServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._routes: list[tuple[str, re.Pattern, object]] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep tests quiet
                pass

            def _dispatch(self, method: str):
                parsed = urlparse(self.path)
                query = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
                body = None
                length = int(self.headers.get("Content-Length") or 0)
                if length:
                    raw = self.rfile.read(length)
                    try:
                        body = json.loads(raw)
                    except json.JSONDecodeError:
                        self._reply(400, {"error": {"message": "request body is not JSON"}})
                        return
                for route_method, pattern, handler in outer._routes:
                    if route_method != method:
                        continue
                    match = pattern.fullmatch(parsed.path)
                    if match is None:
                        continue
                    try:
                        status, payload = handler(match, body, query)
                    except _Drop:
                        # Fault injection: slam the connection shut.
                        self.connection.close()
                        return
                    except Exception as exc:  # noqa: BLE001  (surface as 500)
                        self._reply(500, {"error": {"message": str(exc),
                                                    "type": type(exc).__name__}})
                        return
                    self._reply(status, payload)
                    return
                self._reply(404, {"error": {"message": f"no route for {method} {parsed.path}"}})

            def _reply(self, status: int, payload: dict):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_DELETE(self):
                self._dispatch("DELETE")

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    def route(self, method: str, pattern: str, handler) -> None:
        self._routes.append((method, re.compile(pattern), handler))

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class _Drop(Exception):
    """Raised by handlers to abort the connection without a response."""


def drop_connection():
    raise _Drop()
