"""In-process mock of the segmentation service.

The mock echoes every prompt box back as a filled rectangular mask with
confidence 1.0.  A few knobs inject the failures the client must survive.
"""

from __future__ import annotations

import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from ..imaging import PixelRect
from .codecs import rect_mask, rle_encode
from .protocol import PROTOCOL_VERSION, ProtocolError, decode_image, decode_prompt

__all__ = ["MockSegmentationServer"]


class MockSegmentationServer:
    """Threaded HTTP server on ``127.0.0.1``; use as a context manager.

    Args:
        fail_first: answer the first ``fail_first`` requests with HTTP 503.
        reject: prompts for which this returns True get a per-prompt error.
        truncate: drop the last result of every response (protocol violation).
        jitter: upper bound (seconds) of a random per-request delay, used to
            shuffle completion order under concurrency.
    """

    def __init__(
        self,
        port: int = 0,
        fail_first: int = 0,
        reject: Optional[Callable[[PixelRect], bool]] = None,
        truncate: bool = False,
        jitter: float = 0.0,
        seed: int = 0,
    ):
        self.fail_first = fail_first
        self.reject = reject
        self.truncate = truncate
        self.jitter = jitter
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.requests_seen = 0
        self._server = ThreadingHTTPServer(("127.0.0.1", port), self._handler_class())
        self._server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/segment"

    def start(self) -> "MockSegmentationServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def respond(self, request: dict) -> dict:
        if request.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported version {request.get('version')!r}")
        frame = decode_image(request["image"])
        results = []
        for raw in request["prompts"]:
            rect = decode_prompt(raw)
            if self.reject is not None and self.reject(rect):
                results.append({"error": "prompt rejected"})
                continue
            mask = rle_encode(rect_mask(frame.width, frame.height, rect))
            results.append({"mask": mask.to_dict(), "confidence": 1.0})
        if self.truncate and results:
            results.pop()
        return {"version": PROTOCOL_VERSION, "results": results}

    def _next_delay(self) -> tuple[int, float]:
        with self._lock:
            self.requests_seen += 1
            delay = self._rng.uniform(0, self.jitter) if self.jitter else 0.0
            return self.requests_seen, delay

    def _handler_class(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                count, delay = mock._next_delay()
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                if count <= mock.fail_first:
                    return self._send(503, {"error": "warming up"})
                if delay:
                    time.sleep(delay)
                try:
                    reply = mock.respond(json.loads(body))
                except (ProtocolError, KeyError, TypeError, ValueError) as exc:
                    return self._send(400, {"error": str(exc)})
                self._send(200, reply)

            def _send(self, status, payload):
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        return Handler
