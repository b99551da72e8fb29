"""JSON wire format (``v1``) shared by the client and the mock server.

Request::

    {"version": "v1",
     "image": {"encoding": "png", "width": W, "height": H, "data": "<base64>"},
     "prompts": [{"left": l, "top": t, "width": w, "height": h}, ...]}

Response::

    {"version": "v1",
     "results": [{"mask": {"width": W, "height": H, "counts": [...]},
                  "confidence": 0.97},
                 {"error": "why this prompt failed"}, ...]}

``results`` aligns 1:1 with ``prompts``.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from ..imaging import GrayFrame, PixelRect

PROTOCOL_VERSION = "v1"


class ProtocolError(RuntimeError):
    """The service answered with something that violates the wire contract."""


def encode_image(frame: GrayFrame) -> dict:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(frame.intensities)).save(buf, format="PNG")
    return {
        "encoding": "png",
        "width": frame.width,
        "height": frame.height,
        "data": base64.b64encode(buf.getvalue()).decode("ascii"),
    }


def decode_image(payload: dict) -> GrayFrame:
    if payload.get("encoding") != "png":
        raise ProtocolError(f"unsupported image encoding {payload.get('encoding')!r}")
    raw = base64.b64decode(payload["data"])
    with Image.open(io.BytesIO(raw)) as img:
        frame = GrayFrame(np.asarray(img.convert("L")))
    if (frame.width, frame.height) != (payload["width"], payload["height"]):
        raise ProtocolError("declared image size does not match the encoded raster")
    return frame


def encode_prompt(rect: PixelRect) -> dict:
    return {"left": rect.left, "top": rect.top, "width": rect.width, "height": rect.height}


def decode_prompt(data: dict) -> PixelRect:
    return PixelRect(int(data["left"]), int(data["top"]), int(data["width"]), int(data["height"]))


def build_request(frame: GrayFrame, prompts) -> dict:
    return {
        "version": PROTOCOL_VERSION,
        "image": encode_image(frame),
        "prompts": [encode_prompt(p) for p in prompts],
    }
