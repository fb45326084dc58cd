"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs under both backends; the table reports
the best wall time of N repeats and the speedup.  Results are also checked
for agreement so a fast-but-wrong build shows up here.
"""
import argparse
import time

import numpy as np

from percsel import discrete, kernels
from percsel.evaluation import landing_scenario
from percsel.instances import small_selection_instance
from percsel.perception import sample_realized


def best_of(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def cases():
    rng = np.random.default_rng(0)
    while True:
        bm, suite, a, b = small_selection_instance(rng, limit=10 ** 5)
        if suite.W ** bm.H >= 2 * 10 ** 4:
            break
    small = discrete.encode(bm, suite, a, b, "expected")
    sc = landing_scenario()
    landing = discrete.encode(sc.batch(), sc.suite, sc.alpha, sc.beta, "exact",
                              sample_realized(sc.suite, 7))
    fixed = np.full(landing.H, -1, dtype=np.int64)
    b0 = np.full((landing.H, landing.W), 1.0 / landing.W)
    seq = np.zeros(landing.H, dtype=np.int64)
    args = lambda qp: (qp.Psi, qp.vecs, qp.lin, qp.alpha)  # noqa: E731
    yield (f"exhaustive_min (W^H={small.W ** small.H})",
           lambda k: k.exhaustive_min(*args(small)))
    yield ("relax, drone H=150 W=8",
           lambda k: k.relax(*args(landing), fixed, b0.copy(), landing.lip, 1e-9, 3000)[1])
    yield ("local_search, drone", lambda k: k.local_search(*args(landing), seq.copy())[1])
    yield ("sequence_value x2000, drone",
           lambda k: sum(k.sequence_value(*args(landing), seq) for _ in range(2000)))


KERNEL_NAMES = ("sequence_value", "exhaustive_min", "exhaustive_first_below", "relax",
                "local_search")


def solve_with(impl, qps):
    """Run branch-and-bound on every problem with ``impl`` bound into the kernel module."""
    saved = {k: getattr(kernels, k) for k in KERNEL_NAMES}
    try:
        for k in KERNEL_NAMES:
            setattr(kernels, k, getattr(impl, k))
        return sum(discrete.solve_bnb(qp).objective for qp in qps)
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def end_to_end():
    rng = np.random.default_rng(1)
    qps = []
    for _ in range(30):
        bm, suite, a, b = small_selection_instance(rng, limit=10 ** 4)
        qps.append(discrete.encode(bm, suite, a, b, "exact", sample_realized(suite, len(qps))))
    return qps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        compiled = kernels.backend("compiled")
    except ImportError:
        raise SystemExit("compiled extension is not built; run pip install -e . first")
    python = kernels.backend("python")
    print(f"{'kernel':42s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}  agree")
    for name, fn in cases():
        vp, tp = best_of(lambda: fn(python), args.repeat)
        vc, tc = best_of(lambda: fn(compiled), args.repeat)
        agree = abs(vp - vc) <= 1e-7 * (1 + abs(vp))
        print(f"{name:42s} {tp * 1e3:8.1f}ms {tc * 1e3:8.1f}ms {tp / tc:7.1f}x  {agree}")
    qps = end_to_end()
    vp, tp = best_of(lambda: solve_with(python, qps), args.repeat)
    vc, tc = best_of(lambda: solve_with(compiled, qps), args.repeat)
    agree = abs(vp - vc) <= 1e-9 * (1 + abs(vp))
    print(f"{'solve_bnb, 30 exact instances':42s} {tp * 1e3:8.1f}ms {tc * 1e3:8.1f}ms "
          f"{tp / tc:7.1f}x  {agree}")


if __name__ == "__main__":
    main()
