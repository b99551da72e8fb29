"""
Building a split dataset from trajectories
==========================================

Writes two tiny synthetic sequences in the d<D>/c<C> layout, then builds
images/labels trees at stride 10 with the canonical split plan.
"""

import json
import tempfile
from pathlib import Path

from pointbox.dataset import build_dataset, canonical_plan
from pointbox.imaging import save_frame
from pointbox.synth import SceneSpec, Target, render

root = Path(tempfile.mkdtemp()) / "root"
for key in ("d1/c0", "d4/c2"):
    seq = root / key
    seq.mkdir(parents=True)
    rows = ["frame,x,y"]
    for i in range(30):
        x, y = 40 + 3 * i, 60 + i
        frame, _ = render(SceneSpec(192, 128, 210, (Target(x, y, 7, 5, 30),)))
        save_frame(frame, seq / f"frame_{i:06d}.png")
        rows.append(f"{i},{x},{y}")
    (seq / "trajectory.csv").write_text("\n".join(rows) + "\n")

out = root.parent / "dataset"
manifest = build_dataset(root, out, canonical_plan(), stride=10)
print(json.dumps(manifest["splits"], indent=1))

# %%
for path in sorted((out / "labels").rglob("*.txt"))[:3]:
    print(path.relative_to(out), "->", path.read_text().strip())
