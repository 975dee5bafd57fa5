"""End-to-end evaluation: fixed views vs refined views on the toy benchmark.

Generates a seeded open-pose set (3 classes x 6 poses), scores it with the
reference matcher under four view-selection strategies, and prints the
accuracy table. The gap between the fixed global views and the refined
per-class views is the whole point of the pipeline.
"""

import tempfile
import time

from op3d import MatcherHandle, ProjectionStyle
from op3d.evalkit import run_baseline
from op3d.shapes import build_toy_bank, build_toy_benchmark, toy_camera

cfg, vox = toy_camera()
handle = MatcherHandle.reference(build_toy_bank(cfg, vox))

with tempfile.TemporaryDirectory() as td:
    rotated, manifest = build_toy_benchmark(td, n_per_class=6, seed=42)
    print(f"benchmark: {len(manifest)} open-pose samples over "
          f"{sorted(manifest.class_histogram())}\n")
    print(f"{'views':10s} {'Acc':>6s} {'mAcc':>6s}  {'time':>5s}  per-class")
    for kind in ("single", "cube", "circular", "iarm"):
        t0 = time.time()
        report, _records = run_baseline(rotated, manifest, kind, handle,
                                        (ProjectionStyle.DEPTH,), cam=cfg, vox=vox)
        per = {c: f"{v:.0f}" for c, v in report.per_class.items()}
        print(f"{kind:10s} {report.acc:6.1f} {report.macc:6.1f}  {time.time() - t0:4.0f}s  {per}")

print("\nfixed views keep the object pose unchanged and average the matching")
print("score over the view set; the refined run normalizes the pose first and")
print("then climbs the score per class, which resolves the plate-family")
print("confusions the fixed views cannot.")
