"""
Box prompts to a segmentation service
=====================================

Runs the bundled mock service locally, sends a handful of box prompts in
parallel chunks and turns the returned masks into polygon labels.
"""

import numpy as np

from pointbox.imaging import GrayFrame, PixelRect
from pointbox.segmenter import MockSegmentationServer, RetryPolicy, SegmenterClient, bbox_from_mask, mask_to_polygon

frame = GrayFrame(np.random.default_rng(0).integers(0, 256, (120, 160), dtype=np.uint8))
prompts = [PixelRect(10 * k, 5 * k, 12, 9) for k in range(1, 10)]

# the mock fails the first request with 503 to show the retry path
with MockSegmentationServer(fail_first=1, jitter=0.01) as server:
    client = SegmenterClient(server.url, RetryPolicy(chunk_size=2, max_in_flight=4, backoff=0.05))
    results = client.segment_boxes(frame, prompts)
    print("requests seen by the mock:", server.requests_seen)

# %%
for prompt, res in zip(prompts, results):
    print(prompt, "->", bbox_from_mask(res.mask).as_rect(), mask_to_polygon(res.mask))
