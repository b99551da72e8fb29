"""HTTP client for a box-prompted segmentation service.

Only box prompts are sent.  Trajectory points are too imprecise to serve as
point prompts, so the client never offers them.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import requests

from ..imaging import GrayFrame, PixelRect
from .codecs import MaskRLE
from .protocol import PROTOCOL_VERSION, ProtocolError, build_request

__all__ = [
    "RetryPolicy",
    "MaskResult",
    "SegmenterUnavailable",
    "SegmenterClient",
    "segment_boxes",
]

logger = logging.getLogger(__name__)

_RETRY_STATUS = {429, 500, 502, 503, 504}


class SegmenterUnavailable(RuntimeError):
    """Raised when some prompts could not be served after all retries."""

    def __init__(self, message: str, unserved: Sequence[int]):
        super().__init__(f"{message}; unserved boxes: {list(unserved)}")
        self.unserved = list(unserved)


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.2
    backoff_factor: float = 2.0
    timeout: float = 30.0
    max_in_flight: int = 4
    chunk_size: int = 8

    def __post_init__(self):
        if self.attempts < 1 or self.max_in_flight < 1 or self.chunk_size < 1:
            raise ValueError("attempts, max_in_flight and chunk_size must be >= 1")


class MaskResult(NamedTuple):
    mask: MaskRLE
    confidence: float
    ok: bool = True


class _Unreachable(Exception):
    pass


class SegmenterClient:
    def __init__(self, endpoint: str, policy: RetryPolicy = RetryPolicy(), session=None):
        self.endpoint = endpoint
        self.policy = policy
        self._session = session or requests.Session()

    def segment_boxes(self, frame: GrayFrame, boxes: Sequence[PixelRect]) -> list[MaskResult]:
        """One mask per box, in prompt order.

        Prompts are sent in chunks of ``policy.chunk_size`` with at most
        ``policy.max_in_flight`` requests outstanding.  A prompt the service
        rejects individually yields an empty mask with confidence 0 and
        ``ok=False``.
        """
        boxes = list(boxes)
        if not boxes:
            return []
        for b in boxes:
            if not frame.bounds.contains_rect(b):
                raise ValueError(f"prompt {b} is not clipped to the frame")
        size = self.policy.chunk_size
        chunks = [(i, boxes[i:i + size]) for i in range(0, len(boxes), size)]

        def run(chunk):
            start, prompts = chunk
            try:
                return self._post(frame, prompts)
            except _Unreachable as exc:
                logger.warning("chunk at %d unserved: %s", start, exc)
                return exc

        workers = min(self.policy.max_in_flight, len(chunks))
        if workers == 1:
            outcomes = [run(c) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(run, chunks))

        unserved = []
        results: list[MaskResult] = []
        for (start, prompts), outcome in zip(chunks, outcomes):
            if isinstance(outcome, Exception):
                unserved.extend(range(start, start + len(prompts)))
            else:
                results.extend(outcome)
        if unserved:
            raise SegmenterUnavailable(f"segmentation service at {self.endpoint} unreachable", unserved)
        return results

    def _post(self, frame, prompts) -> list[MaskResult]:
        body = build_request(frame, prompts)
        wait = self.policy.backoff
        last = None
        for attempt in range(self.policy.attempts):
            if attempt:
                time.sleep(wait)
                wait *= self.policy.backoff_factor
            try:
                resp = self._session.post(self.endpoint, json=body, timeout=self.policy.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                continue
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise ProtocolError("response is not valid JSON") from exc
            return _parse_response(payload, frame, len(prompts))
        raise _Unreachable(str(last))


def _parse_response(payload, frame: GrayFrame, expected: int) -> list[MaskResult]:
    if not isinstance(payload, dict) or payload.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"unexpected protocol version {payload.get('version') if isinstance(payload, dict) else payload!r}")
    entries = payload.get("results")
    if not isinstance(entries, list) or len(entries) != expected:
        got = len(entries) if isinstance(entries, list) else None
        raise ProtocolError(f"expected {expected} masks, got {got}")
    out = []
    for entry in entries:
        if "error" in entry:
            logger.warning("service rejected a prompt: %s", entry["error"])
            out.append(MaskResult(MaskRLE.empty(frame.width, frame.height), 0.0, False))
            continue
        try:
            mask = MaskRLE.from_dict(entry["mask"])
            confidence = float(entry.get("confidence", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed mask entry: {exc}") from exc
        if (mask.width, mask.height) != (frame.width, frame.height):
            raise ProtocolError("mask size differs from the request image")
        if not 0.0 <= confidence <= 1.0:
            raise ProtocolError(f"confidence {confidence} outside [0, 1]")
        out.append(MaskResult(mask, confidence, True))
    return out


def segment_boxes(
    endpoint: str,
    frame: GrayFrame,
    boxes: Sequence[PixelRect],
    policy: RetryPolicy = RetryPolicy(),
) -> list[MaskResult]:
    if not boxes:
        return []
    return SegmenterClient(endpoint, policy).segment_boxes(frame, boxes)
