"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs once untimed per backend (numba compilation), then the
best of ``--repeat`` runs is reported.
"""
import argparse
import timeit
from fractions import Fraction

import numpy as np

from omegastar import _kernels
from omegastar.geometry import grid_cover, membership_matrix
from omegastar.systems import make_zoo_system


def cases():
    s = make_zoo_system("tent", resolution="1/1024")
    cover = grid_cover(s.sample, Fraction(1, 64))
    pts, denom = s.encoded()
    member = membership_matrix(s.sample, cover)
    coords = cover.support
    lo = np.array([[int(b.interval(c)[0] * denom) for c in coords] for b in cover.boxes])
    hi = np.array([[int(b.interval(c)[1] * denom) for c in coords] for b in cover.boxes])
    g = (member[s.image_array].T.astype(np.float32) @ member.astype(np.float32)) > 0
    walk = member[np.random.default_rng(0).integers(0, len(s), 20_000)]

    small = make_zoo_system("tent", resolution="1/64")
    small_cover = grid_cover(small.sample, Fraction(1, 15))
    ms = membership_matrix(small.sample, small_cover)
    mf = np.ascontiguousarray(ms[small.image_array])
    spts, sden = small.encoded()
    close = np.eye(len(small), dtype=bool)
    return {
        "membership (1025 pts x 129 boxes)": ("membership", (pts, lo, hi)),
        "cover_edges (1025 pts)": ("cover_edges", (member, s.image_array)),
        "metric_edges (1025 pts)": ("metric_edges", (pts, s.image_array, denom // 50)),
        "step_checks (20000 steps)": ("step_checks", (np.ascontiguousarray(walk), g)),
        f"trapping_scan ({len(small_cover)} boxes, identity closure)":
            ("trapping_scan", (ms, mf, close)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<48}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for label, (name, call_args) in cases().items():
        times = {}
        for backend, table in (("numpy", _kernels.NUMPY), ("numba", _kernels.NUMBA)):
            fn = table[name]
            ref = fn(*call_args)
            times[backend] = min(timeit.repeat(lambda: fn(*call_args), number=1,
                                               repeat=args.repeat)) * 1e3
            times[backend + "_out"] = ref
        same = np.array_equal(np.asarray(times["numpy_out"]), np.asarray(times["numba_out"]))
        flag = "" if same else "  MISMATCH"
        print(f"{label:<48}{times['numpy']:>10.2f}{times['numba']:>10.2f}"
              f"{times['numpy'] / times['numba']:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
