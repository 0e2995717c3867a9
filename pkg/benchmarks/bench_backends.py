"""Time the numba kernels against the pure-numpy fallback.

Both backends are imported directly, so the JDTRACK_DISABLE_NUMBA flag does
not matter here. Each kernel is warmed up once (JIT compilation) and then
timed with timeit; the table reports the median per call in microseconds.

    python benchmarks/bench_backends.py --tracks 8,32,128 --dim 128
"""
import argparse
import json
import statistics
import timeit

import numpy as np

from jdtrack.kernels import _numba, _numpy


def make_inputs(n, dim, seed=0):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1000, (n, 2))
    wh = rng.uniform(20, 80, (n, 2))
    boxes = np.hstack([xy, xy + wh])
    dets = boxes + rng.normal(0, 2, boxes.shape)
    emb = rng.standard_normal((n, dim))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    mean = np.hstack([boxes, rng.normal(0, 2, (n, 4))])
    cov = np.broadcast_to(np.eye(8) * 4.0, (n, 8, 8)).copy()
    cost = rng.uniform(0, 1, (n, n))
    return boxes, dets, emb, mean, cov, cost


def cases(impl, n, dim):
    boxes, dets, emb, mean, cov, cost = make_inputs(n, dim)
    return {
        "cost_matrix": lambda: impl.cost_matrix(boxes, emb, dets, emb, 0.5, 0.5),
        "iou_matrix": lambda: impl.iou_matrix(boxes, dets),
        "pairwise_sqdist": lambda: impl.pairwise_sqdist(emb),
        "kf_predict": lambda: impl.kf_predict_batch(mean, cov, 1.0, 0.5),
        "kf_update": lambda: impl.kf_update_batch(mean, cov, dets, 2.0),
        "linear_assignment": lambda: impl.linear_assignment(cost, 1e-10),
    }


def time_call(fn, repeats):
    fn()  # compile / warm caches
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    runs = timer.repeat(repeat=repeats, number=number)
    return 1e6 * statistics.median(runs) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tracks", default="8,16,32,64,128")
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--json", help="also write results here")
    args = parser.parse_args(argv)

    rows = []
    for n in (int(v) for v in args.tracks.split(",")):
        fast, slow = cases(_numba, n, args.dim), cases(_numpy, n, args.dim)
        for name in fast:
            t_numba = time_call(fast[name], args.repeats)
            t_numpy = time_call(slow[name], args.repeats)
            rows.append({"tracks": n, "kernel": name, "numba_us": t_numba,
                         "numpy_us": t_numpy, "speedup": t_numpy / t_numba})

    print(f"{'tracks':>6} {'kernel':<18}{'numba us':>11}{'numpy us':>11}{'speedup':>9}")
    for r in rows:
        print(f"{r['tracks']:6d} {r['kernel']:<18}{r['numba_us']:11.1f}"
              f"{r['numpy_us']:11.1f}{r['speedup']:9.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"dim": args.dim, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
