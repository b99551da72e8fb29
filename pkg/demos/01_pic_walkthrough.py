"""
Growing a box around a point
============================

A dark 10x10 blob sits on a bright background.  Starting from an 8x8
patch around the point, the box grows by 5 pixels per side-pair until the
mean intensity stops moving by more than 4 grey levels.
"""

import numpy as np

from pointbox import PicConfig, TrajectoryPoint, pic_box
from pointbox.synth import SceneSpec, Target, oracle_trace, render

scene = SceneSpec(200, 200, background=200, targets=(Target(100, 100, 10, 10, 50),))
frame, (truth,) = render(scene)
point = TrajectoryPoint(100, 100)

box, trace = pic_box(frame, point)
print("truth box:", truth.as_rect())
print("pic box:  ", box.as_rect(), "halt:", trace.halt.value)

# %%
# Every step of the trace: box size, mean, change from the previous mean.
for rect, mu, d in zip(trace.boxes, trace.means, (None,) + tuple(trace.deltas)):
    step = f"{rect.width:>3}x{rect.height:<3} mean={mu:8.4f}"
    print(step if d is None else f"{step} change={d:7.3f}")

# %%
# The same numbers without touching a pixel: mean = b + (f - b) * overlap / area.
exact = oracle_trace(scene, point)
print("oracle agrees:", np.allclose(exact.means, trace.means, rtol=0, atol=1e-9))

# %%
# On convergence the box before the last expansion is returned.  The
# expanded one is available too.
wide, _ = pic_box(frame, point, PicConfig(return_expanded=True))
print("expanded box:", wide.as_rect())
