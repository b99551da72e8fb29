import numpy as np
import pytest
from hypothesis import given, strategies as st

from pointbox.baselines import FixedConfig, ThresholdConfig, binarize, fixed_box, threshold_box
from pointbox.imaging import BBox, GrayFrame, PixelRect, PointOutsideFrame
from pointbox.metrics import iou
from pointbox.pic import TrajectoryPoint
from pointbox.synth import SceneSpec, Target, render

HD = GrayFrame(np.full((1080, 1920), 200, dtype=np.uint8))


class TestFixedBox:
    def test_centered(self):
        assert fixed_box(TrajectoryPoint(500, 500), HD) == BBox(475, 475, 50, 50, "fixed")

    def test_clipped_at_corner(self):
        assert fixed_box(TrajectoryPoint(10, 10), HD) == BBox(0, 0, 35, 35, "fixed")

    def test_single_pixel(self):
        b = fixed_box(TrajectoryPoint(12.7, 40.2), HD, FixedConfig(1, 1))
        assert b.as_rect() == PixelRect(12, 40, 1, 1)

    def test_outside(self):
        with pytest.raises(PointOutsideFrame):
            fixed_box(TrajectoryPoint(-1, 10), HD)

    @given(st.floats(25, 1894), st.floats(25, 1054), st.integers(1, 50), st.integers(1, 50))
    def test_area_when_unclipped(self, x, y, w, h):
        b = fixed_box(TrajectoryPoint(x, y), HD, FixedConfig(w, h))
        assert b.area == w * h


class TestThresholdBox:
    def test_exact_square(self, canonical_scene):
        frame, truths = render(canonical_scene)
        box = threshold_box(frame, TrajectoryPoint(100, 100))
        assert box == BBox(95, 95, 10, 10, "threshold")
        assert iou(box, truths[0]) == 1.0

    def test_uniform_falls_back(self):
        frame = GrayFrame(np.full((200, 200), 200, dtype=np.uint8))
        box = threshold_box(frame, TrajectoryPoint(100, 100))
        assert box.source == "fixed"
        assert box.as_rect() == PixelRect(75, 75, 50, 50)

    def test_fallback_size(self):
        frame = GrayFrame(np.full((200, 200), 200, dtype=np.uint8))
        box = threshold_box(frame, TrajectoryPoint(100, 100), ThresholdConfig(fallback_size=20))
        assert box.as_rect() == PixelRect(90, 90, 20, 20)

    def test_containment_beats_size(self):
        spec = SceneSpec(300, 300, 200, (Target(60, 60, 6, 6, 30), Target(200, 200, 80, 80, 30)))
        frame, truths = render(spec)
        assert threshold_box(frame, TrajectoryPoint(60, 60)).as_rect() == truths[0].as_rect()
        assert threshold_box(frame, TrajectoryPoint(200, 200)).as_rect() == truths[1].as_rect()

    def test_nearest_component_within_radius(self):
        spec = SceneSpec(300, 300, 200, (Target(100, 100, 10, 10, 30), Target(180, 100, 10, 10, 30)))
        frame, truths = render(spec)
        # 20 px right of the first target, 55 px from the second
        box = threshold_box(frame, TrajectoryPoint(125, 100))
        assert box.as_rect() == truths[0].as_rect()
        assert box.source == "threshold"

    def test_component_out_of_radius_falls_back(self):
        frame, _ = render(SceneSpec(300, 300, 200, (Target(100, 100, 10, 10, 30),)))
        box = threshold_box(frame, TrajectoryPoint(200, 200), ThresholdConfig(search_radius=30))
        assert box.source == "fixed"

    def test_connectivity(self):
        arr = np.full((40, 40), 200, dtype=np.uint8)
        arr[10:15, 10:15] = 0
        arr[15:20, 15:20] = 0  # touches the first block only diagonally
        frame = GrayFrame(arr)
        eight = threshold_box(frame, TrajectoryPoint(12, 12), ThresholdConfig(connectivity=8))
        four = threshold_box(frame, TrajectoryPoint(12, 12), ThresholdConfig(connectivity=4))
        assert eight.as_rect() == PixelRect(10, 10, 10, 10)
        assert four.as_rect() == PixelRect(10, 10, 5, 5)

    def test_polarity(self):
        frame, truths = render(SceneSpec(100, 100, 20, (Target(50, 50, 8, 12, 240),)))
        box = threshold_box(frame, TrajectoryPoint(50, 50), ThresholdConfig(polarity="foreground_above"))
        assert box.as_rect() == truths[0].as_rect()

    def test_threshold_edge(self):
        frame = GrayFrame(np.array([[150, 151]], dtype=np.uint8))
        assert binarize(frame).tolist() == [[True, False]]
        assert binarize(frame, ThresholdConfig(polarity="foreground_above")).tolist() == [[False, True]]

    @pytest.mark.parametrize("kwargs", [{"threshold": 256}, {"polarity": "dark"}, {"connectivity": 6},
                                        {"search_radius": 0}, {"fallback_size": 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            ThresholdConfig(**kwargs)

    @given(st.integers(0, 10**6))
    def test_result_contains_foreground_unless_fallback(self, seed):
        rng = np.random.default_rng(seed)
        arr = np.where(rng.random((60, 60)) < 0.03, 40, 220).astype(np.uint8)
        frame = GrayFrame(arr)
        box = threshold_box(frame, TrajectoryPoint(*rng.uniform(0, 60, 2)), ThresholdConfig(search_radius=10))
        if box.source == "threshold":
            assert binarize(frame)[box.top:box.bottom, box.left:box.right].any()

    @given(st.integers(0, 10**6))
    def test_exact_on_clean_scenes(self, seed):
        rng = np.random.default_rng(seed)
        w, h = int(rng.integers(2, 40)), int(rng.integers(2, 40))
        f, b = int(rng.integers(0, 151)), int(rng.integers(151, 256))
        shape = str(rng.choice(["rect", "ellipse"]))
        spec = SceneSpec(120, 120, b, (Target(60, 60, w, h, f, shape=shape),))
        frame, truths = render(spec)
        assert iou(threshold_box(frame, TrajectoryPoint(60, 60)), truths[0]) == 1.0
