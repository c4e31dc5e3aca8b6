"""HTTP wiring: JSON over POST for the three /v1 endpoints.

Training serializes on a lock (one accelerator); prediction and generation
run concurrently. Auth uses a bearer token when configured.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .service import ModelService
from .service_errors import ServiceError

logger = logging.getLogger(__name__)


def make_server(
    service: ModelService, host: str = "127.0.0.1", port: int = 0, auth_token: str | None = None
) -> ThreadingHTTPServer:
    train_lock = threading.Lock()

    class Handler(BaseHTTPRequestHandler):
        server_version = "laca-server"

        def log_message(self, fmt, *args):
            logger.debug("http: " + fmt, *args)

        def _reply(self, status: int, body: dict):
            data = json.dumps(body, ensure_ascii=False).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            if auth_token and self.headers.get("Authorization") != f"Bearer {auth_token}":
                self._reply(401, {"error": "missing or invalid token"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
            except (ValueError, json.JSONDecodeError):
                self._reply(400, {"error": "body must be a JSON object"})
                return
            try:
                if self.path == "/v1/train":
                    with train_lock:
                        body = service.handle(self.path, payload)
                else:
                    body = service.handle(self.path, payload)
                self._reply(200, body)
            except ServiceError as e:
                self._reply(e.status, {"error": str(e)})
            except Exception:
                logger.exception("unhandled error serving %s", self.path)
                self._reply(500, {"error": "internal error"})

    return ThreadingHTTPServer((host, port), Handler)


def serve_forever(server: ThreadingHTTPServer) -> None:
    host, port = server.server_address[:2]
    logger.info("serving /v1 endpoints on http://%s:%s", host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
