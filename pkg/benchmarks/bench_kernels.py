"""Time each kernel on every importable backend.

    python benchmarks/bench_kernels.py [--repeat N]

Workloads match one perception frame (512-point cloud, 96x96 depth raster)
and one grasp sweep (25 gripper poses against 10 finger capsules).
"""

import argparse
import timeit

import numpy as np

from handover import kernels
from handover.core import GRIPPER_HALF_EXTENTS


def workloads(rng):
    pts = rng.normal(0.0, 0.05, (512, 3))
    centers = np.arange(0, 512, 4, dtype=np.int64)
    u, v = np.meshgrid(np.linspace(-0.3, 0.3, 96), np.linspace(-0.3, 0.3, 96))
    dirs = np.stack([u.ravel(), v.ravel(), np.ones(u.size)], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    a = rng.normal(0.0, 0.03, (11, 3)) + [0.0, 0.0, 0.8]
    caps = np.hstack([a, a + rng.normal(0.0, 0.03, (11, 3)), np.full((11, 1), 0.009)])
    box = np.concatenate([[0.0, 0.0, 0.75], np.eye(3).ravel(), [0.025] * 3])[None]
    sweep = np.linspace([0.0, 0.0, 0.12], [0.0, 0.0, 0.0], 25)
    # backends take contiguous float64 arrays, as the kernels wrapper passes them
    seg_a, seg_b = np.ascontiguousarray(caps[:10, :3]), np.ascontiguousarray(caps[:10, 3:6])
    return {
        "fps 512->128": lambda m: m.fps(pts, 128),
        "ball_group 128x16": lambda m: m.ball_group(pts, centers, 0.05, 16),
        "raycast 96x96": lambda m: m.raycast(np.zeros(3), dirs, caps, box),
        "segment_box 25x10": lambda m: m.segment_box_distance(sweep, np.eye(3), GRIPPER_HALF_EXTENTS, seg_a, seg_b),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()
    mods = kernels.backend_modules()
    jobs = workloads(np.random.default_rng(0))
    names = list(mods)
    print(f"{'kernel':<20}" + "".join(f"{n + ' (ms)':>16}" for n in names) + ("    speedup" if len(names) > 1 else ""))
    for label, job in jobs.items():
        ms = [1e3 * min(timeit.repeat(lambda m=mods[n]: job(m), number=1, repeat=args.repeat)) for n in names]
        line = f"{label:<20}" + "".join(f"{t:16.3f}" for t in ms)
        if len(ms) > 1:
            line += f"{ms[0] / ms[-1]:10.1f}x"
        print(line)
    print(f"active backend: {kernels.BACKEND}")


if __name__ == "__main__":
    main()
