import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pointbox.imaging import PixelRect
from pointbox.pic import Halt, PicConfig, TrajectoryPoint, pic_box
from pointbox.synth import (
    SceneSpec,
    Target,
    load_scene,
    oracle_box,
    oracle_trace,
    random_single_rect_scene,
    render,
    scene_to_dict,
)


class TestRender:
    def test_no_targets(self):
        frame, truths = render(SceneSpec(30, 20, background=77))
        assert truths == []
        assert np.all(frame.intensities == 77)
        assert (frame.width, frame.height) == (30, 20)

    def test_single_rect(self, canonical_scene):
        frame, truths = render(canonical_scene)
        assert int((frame.intensities == 50).sum()) == 100
        assert truths[0].as_rect() == PixelRect(95, 95, 10, 10)

    def test_noise_is_seeded(self):
        spec = SceneSpec(40, 40, 128, (Target(20, 20, 6, 6, 10),), noise_sigma=12.0, seed=5)
        a, _ = render(spec)
        b, _ = render(spec)
        c, _ = render(SceneSpec(40, 40, 128, (Target(20, 20, 6, 6, 10),), noise_sigma=12.0, seed=6))
        assert a == b
        assert a != c

    def test_noise_is_clamped(self):
        frame, _ = render(SceneSpec(50, 50, 250, noise_sigma=40.0, seed=1))
        assert frame.intensities.max() == 255

    def test_ellipse_truth_is_tight(self):
        frame, truths = render(SceneSpec(60, 60, 200, (Target(30, 30, 11, 7, 0, shape="ellipse"),)))
        ys, xs = np.nonzero(frame.intensities == 0)
        t = truths[0]
        assert (t.left, t.top, t.right - 1, t.bottom - 1) == (xs.min(), ys.min(), xs.max(), ys.max())

    def test_overlapping_targets_report_each_box(self):
        spec = SceneSpec(50, 50, 200, (Target(20, 20, 10, 10, 0), Target(24, 24, 10, 10, 100)))
        frame, truths = render(spec)
        assert len(truths) == 2
        assert frame.intensities[24, 24] == 100

    def test_target_must_fit(self):
        with pytest.raises(ValueError):
            SceneSpec(20, 20, 0, (Target(1, 1, 6, 6, 9),))
        spec = SceneSpec(20, 20, 0, (Target(1, 1, 6, 6, 9, border_crossing=True),))
        _, truths = render(spec)
        assert truths[0].as_rect() == PixelRect(0, 0, 4, 4)

    def test_load_scene_roundtrip(self, tmp_path, canonical_scene):
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(scene_to_dict(canonical_scene)))
        assert load_scene(path) == canonical_scene


class TestOracle:
    def test_full_overlap(self):
        spec = SceneSpec(100, 100, 200, (Target(50, 50, 40, 40, 17),))
        assert oracle_trace(spec, TrajectoryPoint(50, 50)).means[0] == 17

    def test_canonical(self, canonical_scene):
        trace = oracle_trace(canonical_scene, TrajectoryPoint(100, 100))
        areas = [169, 324, 529, 784, 1089, 1444]
        assert trace.means == pytest.approx([50.0] + [200 - 15000 / a for a in areas], abs=1e-12)
        assert trace.halt is Halt.CONVERGED
        assert oracle_box(canonical_scene, TrajectoryPoint(100, 100)) == PixelRect(84, 84, 33, 33)

    def test_far_from_target(self):
        spec = SceneSpec(300, 300, 120, (Target(250, 250, 10, 10, 0),))
        trace = oracle_trace(spec, TrajectoryPoint(40, 40))
        assert trace.halt is Halt.CONVERGED and len(trace.boxes) == 2
        assert oracle_box(spec, TrajectoryPoint(40, 40)) == PixelRect(36, 36, 8, 8)

    def test_rejects_noise_and_multiple_targets(self):
        with pytest.raises(ValueError):
            oracle_trace(SceneSpec(20, 20, 0, (Target(10, 10, 4, 4, 9),), noise_sigma=1), TrajectoryPoint(5, 5))
        with pytest.raises(ValueError):
            oracle_trace(SceneSpec(20, 20, 0, (Target(5, 5, 4, 4, 9), Target(15, 15, 4, 4, 9))), TrajectoryPoint(5, 5))
        with pytest.raises(ValueError):
            oracle_trace(SceneSpec(20, 20, 0, (Target(10, 10, 4, 4, 9, shape="ellipse"),)), TrajectoryPoint(5, 5))

    @given(
        st.integers(0, 2**32 - 1),
        st.sampled_from([4, 8, 16]),
        st.sampled_from([1, 5, 9]),
        st.sampled_from([1, 4, 16]),
        st.booleans(),
    )
    def test_matches_pic(self, seed, w0, delta, eps, expanded):
        spec, point = random_single_rect_scene(np.random.default_rng(seed), 72, 64)
        cfg = PicConfig(w0=w0, h0=w0, delta=delta, epsilon=eps, return_expanded=expanded)
        frame, _ = render(spec)
        box, trace = pic_box(frame, point, cfg)
        assert trace == oracle_trace(spec, point, cfg)
        assert box.as_rect() == oracle_box(spec, point, cfg)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_pic_with_border_target(self, seed):
        rng = np.random.default_rng(seed)
        target = Target(float(rng.uniform(-5, 45)), float(rng.uniform(-5, 45)), 12, 9, int(rng.integers(0, 256)),
                        border_crossing=True)
        spec = SceneSpec(40, 40, int(rng.integers(0, 256)), (target,))
        try:
            frame, _ = render(spec)
        except ValueError:
            return  # target fell entirely off-frame
        point = TrajectoryPoint(float(rng.uniform(0, 40)), float(rng.uniform(0, 40)))
        cfg = PicConfig(epsilon=float(rng.choice([1, 4])), delta=int(rng.choice([1, 5])))
        assert pic_box(frame, point, cfg)[1] == oracle_trace(spec, point, cfg)
