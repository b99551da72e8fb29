import numpy as np
import pytest
import requests
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pointbox.imaging import BBox, GrayFrame, PixelRect
from pointbox.segmenter import (
    MaskRLE,
    MockSegmentationServer,
    ProtocolError,
    RetryPolicy,
    SegmenterClient,
    SegmenterUnavailable,
    bbox_from_mask,
    mask_to_polygon,
    rect_mask,
    rle_decode,
    rle_encode,
    segment_boxes,
)
from pointbox.segmenter.protocol import build_request, decode_image

FAST = RetryPolicy(attempts=3, backoff=0.01, timeout=5)


def column_major_runs(mask):
    """Reference encoder: walk pixels column by column."""
    h, w = mask.shape
    runs, current, n = [], False, 0
    for x in range(w):
        for y in range(h):
            v = bool(mask[y, x])
            if v == current:
                n += 1
            else:
                runs.append(n)
                current, n = v, 1
    runs.append(n)
    return runs


class TestRLE:
    def test_all_background(self):
        assert rle_encode(np.zeros((4, 4))).counts == (16,)

    def test_all_foreground(self):
        assert rle_encode(np.ones((4, 4))).counts == (0, 16)

    def test_top_left_only(self):
        m = np.zeros((2, 2), dtype=bool)
        m[0, 0] = True
        assert rle_encode(m).counts == (0, 1, 3)

    def test_column_major(self):
        m = np.zeros((2, 3), dtype=bool)
        m[0, 1] = True  # second column, first row -> position 2
        assert rle_encode(m).counts == (2, 1, 3)

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            MaskRLE(4, 4, (15,))
        with pytest.raises(ValueError):
            MaskRLE(2, 2, (5, -1))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            rle_encode(np.zeros((0, 3)))

    @given(arrays(bool, st.tuples(st.integers(1, 64), st.integers(1, 64))))
    def test_roundtrip_and_reference(self, mask):
        rle = rle_encode(mask)
        assert np.array_equal(rle_decode(rle), mask)
        assert list(rle.counts) == column_major_runs(mask)
        assert rle.area == int(mask.sum())
        assert MaskRLE.from_dict(rle.to_dict()) == rle


class TestMaskGeometry:
    def test_full_frame(self):
        assert bbox_from_mask(np.ones((7, 9))).as_rect() == PixelRect(0, 0, 9, 7)

    def test_single_pixel(self):
        m = np.zeros((10, 10), dtype=bool)
        m[7, 3] = True
        assert bbox_from_mask(rle_encode(m)) == BBox(3, 7, 1, 1, "segmenter")

    def test_l_shape(self):
        m = np.zeros((20, 20), dtype=bool)
        m[2:15, 4:6] = True
        m[13:15, 4:12] = True
        ys, xs = np.nonzero(m)
        b = bbox_from_mask(m)
        assert (b.left, b.top, b.right - 1, b.bottom - 1) == (xs.min(), ys.min(), xs.max(), ys.max())

    def test_empty(self):
        with pytest.raises(ValueError):
            bbox_from_mask(np.zeros((3, 3)))

    @given(st.integers(0, 30), st.integers(0, 30), st.integers(1, 34), st.integers(1, 34))
    def test_rect_roundtrip(self, l, t, w, h):
        r = PixelRect(l, t, min(w, 64 - l), min(h, 64 - t))
        assert bbox_from_mask(rle_encode(rect_mask(64, 64, r))).as_rect() == r

    def test_square_polygon(self):
        poly = mask_to_polygon(rect_mask(40, 30, PixelRect(5, 10, 10, 8)))
        assert len(poly) == 4
        corners = [(5, 10), (15, 10), (15, 18), (5, 18)]
        for c in corners:
            assert min(max(abs(c[0] - p[0]), abs(c[1] - p[1])) for p in poly) <= 1

    def test_single_pixel_polygon(self):
        m = np.zeros((10, 10), dtype=bool)
        m[4, 6] = True
        assert sorted(mask_to_polygon(m)) == sorted([(6, 4), (7, 4), (7, 5), (6, 5)])

    def test_polygon_of_blob_has_three_or_more(self):
        yy, xx = np.mgrid[0:50, 0:50]
        poly = mask_to_polygon((xx - 25) ** 2 + (yy - 25) ** 2 < 100)
        assert len(poly) >= 3


class TestProtocol:
    def test_image_roundtrip(self):
        frame = GrayFrame(np.arange(60, dtype=np.uint8).reshape(6, 10))
        req = build_request(frame, [PixelRect(1, 1, 2, 2)])
        assert req["version"] == "v1"
        assert decode_image(req["image"]) == frame
        assert req["prompts"] == [{"left": 1, "top": 1, "width": 2, "height": 2}]


@pytest.fixture
def frame():
    return GrayFrame(np.random.default_rng(0).integers(0, 256, (48, 64)).astype(np.uint8))


class TestClient:
    def test_zero_boxes_makes_no_call(self, frame):
        assert segment_boxes("http://127.0.0.1:9/unused", frame, []) == []

    def test_echo(self, frame):
        boxes = [PixelRect(1, 2, 10, 5), PixelRect(40, 30, 24, 18)]
        with MockSegmentationServer() as server:
            out = segment_boxes(server.url, frame, boxes, FAST)
        assert [bbox_from_mask(r.mask).as_rect() for r in out] == boxes
        assert all(r.ok and r.confidence == 1.0 for r in out)

    def test_retries_then_succeeds(self, frame):
        with MockSegmentationServer(fail_first=2) as server:
            out = segment_boxes(server.url, frame, [PixelRect(0, 0, 3, 3)], FAST)
            assert server.requests_seen == 3
        assert out[0].ok

    def test_gives_up(self, frame):
        with MockSegmentationServer(fail_first=100) as server:
            with pytest.raises(SegmenterUnavailable) as info:
                segment_boxes(server.url, frame, [PixelRect(0, 0, 3, 3), PixelRect(5, 5, 3, 3)], FAST)
            assert server.requests_seen == 3
        assert info.value.unserved == [0, 1]

    def test_unreachable(self, frame):
        with MockSegmentationServer() as server:
            url = server.url
        with pytest.raises(SegmenterUnavailable):
            segment_boxes(url, frame, [PixelRect(0, 0, 3, 3)], RetryPolicy(attempts=2, backoff=0.01, timeout=1))

    def test_per_box_failure(self, frame):
        boxes = [PixelRect(0, 0, 3, 3), PixelRect(10, 10, 4, 4), PixelRect(20, 20, 2, 2)]
        with MockSegmentationServer(reject=lambda r: r.left == 10) as server:
            out = segment_boxes(server.url, frame, boxes, FAST)
        assert [r.ok for r in out] == [True, False, True]
        assert out[1].confidence == 0.0 and out[1].mask.area == 0
        assert (out[1].mask.width, out[1].mask.height) == (64, 48)

    def test_mismatched_count(self, frame):
        with MockSegmentationServer(truncate=True) as server:
            with pytest.raises(ProtocolError):
                segment_boxes(server.url, frame, [PixelRect(0, 0, 3, 3)], FAST)

    def test_mock_rejects_malformed_body(self):
        with MockSegmentationServer() as server:
            resp = requests.post(server.url, data=b"not json", timeout=5)
            assert resp.status_code == 400

    def test_client_error_status_is_protocol_error(self, frame, monkeypatch):
        import pointbox.segmenter.client as client_mod

        def old_version(frame, prompts):
            req = build_request(frame, prompts)
            req["version"] = "v0"
            return req

        monkeypatch.setattr(client_mod, "build_request", old_version)
        with MockSegmentationServer() as server:
            with pytest.raises(ProtocolError):
                segment_boxes(server.url, frame, [PixelRect(0, 0, 3, 3)], FAST)

    def test_wrong_mask_size(self, frame, monkeypatch):
        with MockSegmentationServer() as server:
            original = server.respond

            def shrink(request):
                reply = original(request)
                reply["results"][0]["mask"] = {"width": 1, "height": 1, "counts": [1]}
                return reply

            server.respond = shrink
            with pytest.raises(ProtocolError):
                segment_boxes(server.url, frame, [PixelRect(0, 0, 3, 3)], FAST)

    def test_unclipped_prompt_rejected(self, frame):
        with pytest.raises(ValueError):
            segment_boxes("http://127.0.0.1:9/", frame, [PixelRect(-1, 0, 3, 3)])

    def test_order_under_concurrency(self, frame):
        rng = np.random.default_rng(1)
        boxes = []
        for _ in range(25):
            l, t = int(rng.integers(0, 60)), int(rng.integers(0, 44))
            boxes.append(PixelRect(l, t, int(rng.integers(1, 65 - l)), int(rng.integers(1, 49 - t))))
        policy = RetryPolicy(chunk_size=1, max_in_flight=4, backoff=0.01)
        with MockSegmentationServer(jitter=0.02, seed=3) as server:
            out = SegmenterClient(server.url, policy).segment_boxes(frame, boxes)
        assert [bbox_from_mask(r.mask).as_rect() for r in out] == boxes
