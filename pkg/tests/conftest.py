import numpy as np
import pytest
from hypothesis import settings

from pointbox.imaging import GrayFrame
from pointbox.synth import SceneSpec, Target, render

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture
def canonical_scene():
    """10x10 target of intensity 50 centred at (100, 100) on a 200 background."""
    return SceneSpec(200, 200, background=200, targets=(Target(100, 100, 10, 10, 50),))


@pytest.fixture
def uniform_frame():
    return GrayFrame(np.full((120, 160), 90, dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def write_sequence(directory, frames_and_points, ext=".png"):
    """Write frames plus a trajectory.csv into ``directory``; returns the truths."""
    from pointbox.imaging import save_frame

    directory.mkdir(parents=True, exist_ok=True)
    rows = ["frame,x,y"]
    for index, (spec, point) in frames_and_points.items():
        frame, _ = render(spec)
        save_frame(frame, directory / f"frame_{index:06d}{ext}")
        rows.append(f"{index},{point[0]},{point[1]}")
    (directory / "trajectory.csv").write_text("\n".join(rows) + "\n")
