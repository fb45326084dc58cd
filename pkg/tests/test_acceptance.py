"""Acceptance criteria, one test per criterion.

Each ``criterion_k`` returns ``(passed, detail)`` and checks the library
against an oracle written here (brute-force enumeration, step-by-step
simulation, scipy minimizers, direct eigenvalue checks) rather than against
its own helpers.  Running this file as a script prints one PASS/FAIL line per
criterion; under pytest the lines appear in the terminal summary.
"""
import itertools
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

from percsel import discrete
from percsel.batch_lqr import (CostSpec, Dynamics, build_batch, control_cost,
                               optimal_controls, rollout)
from percsel.cli import main as cli_main
from percsel.continuous import (ContinuousSuite, build_canonical, check_assumption,
                                continuous_objective, duplicate, export_sdp, format_sdp,
                                parse_sdp, solve_qp)
from percsel.evaluation import landing_scenario, monte_carlo, pareto_sweep
from percsel.instances import (random_continuous_suite, random_cost, random_dynamics,
                               random_instance, small_selection_instance)
from percsel.perception import ErrorModel, PerceptionSuite, sample_realized_batch
from percsel.scenario import dump_scenario, parse_text
from percsel.verify import pareto_instance

try:
    from conftest import ACCEPTANCE
except ImportError:  # run as a script
    ACCEPTANCE = {}

DATA = Path(__file__).parent / "data"


# ---------------------------------------------------------------- oracles

def simulated_excess(dyn, cost, bm, s_hat, s, x0):
    """Cost of acting on s_hat minus cost of acting on s, both simulated under s."""
    total = []
    for belief in (s_hat, s):
        u = optimal_controls(bm, belief, x0)
        total.append(control_cost(rollout(dyn, u, s, x0), u, cost))
    return total[0] - total[1]


def brute_force(value, W, H):
    """Minimum and canonical (lexicographically first near-minimal) sequence."""
    seqs = list(itertools.product(range(W), repeat=H))
    vals = np.array([value(np.array(c)) for c in seqs])
    best = vals.min()
    tie = 1e-10 * (1 + abs(best))
    first = next(i for i, v in enumerate(vals) if v <= best + tie)
    return best, np.array(seqs[first])


def expected_value(Psi, mean, var, ups, alpha, beta, seq):
    H = len(seq)
    mu = mean[seq, np.arange(H)].reshape(-1)
    v = var[seq, np.arange(H)].reshape(-1)
    return alpha * (mu @ Psi @ mu + np.diag(Psi) @ v) + beta * ups * seq.sum()


def exact_value(Psi, errors, ups, alpha, beta, seq):
    e = errors[seq, np.arange(len(seq))].reshape(-1)
    return alpha * e @ Psi @ e + beta * ups * seq.sum()


# ---------------------------------------------------------------- criteria

def criterion_1():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        dyn, cost, H, bm = random_instance(rng, max_dim=4, max_H=10)
        d = bm.p * H
        for _ in range(10):
            s = rng.normal(size=d)
            s_hat = s + rng.normal(size=d)
            x0 = rng.normal(size=bm.n)
            diff = s_hat - s
            gap = diff @ bm.Psi @ diff
            sim = simulated_excess(dyn, cost, bm, s_hat, s, x0)
            worst = max(worst, abs(gap - sim) / (1 + abs(gap)))
    dt = time.perf_counter() - t0
    return worst <= 1e-8 and dt <= 30, f"max rel. error {worst:.2e}, {dt:.1f}s"


def criterion_2():
    rng = np.random.default_rng(202)
    worst = 0.0
    same_plan = True
    for _ in range(200):
        dyn, cost, H, bm = random_instance(rng, max_dim=4, max_H=10)
        d = bm.p * H
        s = rng.normal(size=d)
        s_hat = s + rng.normal(size=d)
        gaps = [simulated_excess(dyn, cost, bm, s_hat, s, rng.normal(size=bm.n) * 5)
                for _ in range(5)]
        worst = max(worst, (max(gaps) - min(gaps)) / (1 + abs(np.mean(gaps))))
    # the planner never sees x0: the same instance planned twice gives identical bytes
    for _ in range(20):
        bm, suite, alpha, beta = small_selection_instance(rng, limit=500)
        qp = discrete.encode(bm, suite, alpha, beta, "expected")
        a = discrete.solve_bnb(qp).sequence
        b = discrete.solve_bnb(discrete.encode(bm, suite, alpha, beta, "expected")).sequence
        same_plan &= a.tobytes() == b.tobytes()
    return worst <= 1e-8 and same_plan, f"max spread {worst:.2e}, plans identical: {same_plan}"


def criterion_3():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    bad = []
    for i in range(200):
        bm, suite, alpha, beta = small_selection_instance(rng, limit=10 ** 4)
        mean, var = suite.moment_arrays()
        if i % 2:
            errors = sample_realized_batch(suite, i, 1)[0]
            qp = discrete.encode(bm, suite, alpha, beta, "exact", errors)
            f = lambda c: exact_value(bm.Psi, errors, suite.upsilon, alpha, beta, c)  # noqa: E731
        else:
            qp = discrete.encode(bm, suite, alpha, beta, "expected")
            f = lambda c: expected_value(bm.Psi, mean, var, suite.upsilon, alpha, beta, c)  # noqa: E731
        best, canon = brute_force(f, suite.W, bm.H)
        ex = discrete.solve_exhaustive(qp)
        bb = discrete.solve_bnb(qp)
        ok = (abs(bb.objective - best) <= 1e-9 * (1 + abs(best))
              and abs(ex.objective - best) <= 1e-9 * (1 + abs(best))
              and np.array_equal(bb.sequence, canon) and np.array_equal(ex.sequence, canon)
              and bb.status == discrete.OPTIMAL)
        if not ok:
            bad.append(i)
    dt = time.perf_counter() - t0
    return not bad and dt <= 120, f"{200 - len(bad)}/200 agree, {dt:.1f}s"


def criterion_4():
    rng = np.random.default_rng(404)
    hits = 0
    for k in range(20):
        bm, suite, alpha, beta = small_selection_instance(rng)
        mean, var = suite.moment_arrays()
        seq = rng.integers(0, suite.W, size=bm.H)
        # draw the selected models' errors directly from the error models
        gen = np.random.default_rng([404, k])
        draws = np.stack([suite.models[w][t].sample(gen, 10 ** 4)
                          for t, w in enumerate(seq)], axis=1).reshape(10 ** 4, -1)
        vals = alpha * np.einsum("ij,jk,ik->i", draws, bm.Psi, draws) \
            + beta * suite.upsilon * seq.sum()
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        target = discrete.objective_value(discrete.encode(bm, suite, alpha, beta, "expected"),
                                          seq)
        ref = expected_value(bm.Psi, mean, var, suite.upsilon, alpha, beta, seq)
        assert abs(target - ref) <= 1e-9 * (1 + abs(ref))
        hits += abs(vals.mean() - target) <= 3 * se + 1e-12 * (1 + abs(target))
    return hits >= 19, f"{hits}/20 within 3 standard errors"


def criterion_5():
    rng = np.random.default_rng(505)
    held = violated = 0
    psd_ok = True
    for _ in range(100):
        n, m, p = (int(rng.integers(1, 4)) for _ in range(3))
        H = int(rng.integers(1, 8))
        bm = build_batch(random_dynamics(rng, n, m, p), random_cost(rng, n, m), H)
        psd_ok &= np.linalg.eigvalsh(bm.Psi)[0] >= -1e-9 * max(1, np.linalg.norm(bm.Psi, 2))
        cs = random_continuous_suite(rng, H, p)
        if rng.uniform() < 0.4:
            cs = ContinuousSuite(cs.worst_mean, cs.worst_var, cs.worst_mean + rng.normal(),
                                 cs.best_var, cs.upsilon)
        alpha = rng.uniform(0.1, 1)
        qp = build_canonical(bm, cs, alpha, rng.uniform(0, 1))
        d = (cs.best_mean - cs.worst_mean).reshape(-1)
        psi_prime = alpha * np.outer(d, d) * bm.Psi
        assert np.allclose(qp.PsiPrime, psi_prime, rtol=1e-12, atol=1e-14)
        try:
            rep = check_assumption(qp)
        except Exception:
            continue
        if rep.holds:
            held += 1
            lam = np.linalg.eigvalsh(psi_prime)[0]
            violated += lam < -1e-9 * np.linalg.norm(psi_prime, 2)
    return violated == 0 and psd_ok and held > 0, \
        f"assumption held on {held}/100, violations {violated}, Psi PSD on all: {psd_ok}"


def criterion_6():
    # scalar hand example: x1 = x0 + u + s, cost u^2 + x1^2, worst error 2, best 0
    bm = build_batch(Dynamics([[1.0]], [[1.0]], [[1.0]]), CostSpec([[0.0]], [[1.0]], [[1.0]]), 1)
    scalar = solve_qp(build_canonical(bm, ContinuousSuite([2.0], [0.0], [0.0], [0.0], 1.0),
                                      1.0, 1.0))
    ok_scalar = abs(scalar.c[0] - 0.75) <= 1e-6
    rng = np.random.default_rng(606)
    worst_kkt = 0.0
    below = sdp_ok = 0
    for _ in range(100):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        H = int(rng.integers(1, 7))
        bm = build_batch(random_dynamics(rng, n, m, 1), random_cost(rng, n, m), H)
        cs = random_continuous_suite(rng, H, 1)
        alpha, beta = rng.uniform(0.1, 1), rng.uniform(0, 1)
        qp = build_canonical(bm, cs, alpha, beta)
        res = solve_qp(qp)
        worst_kkt = max(worst_kkt, res.kkt_residual)
        # independent minimizer of the direct objective
        ref = minimize(lambda c: continuous_objective(bm.Psi, cs, alpha, beta, c),
                       np.full(H, 0.5), bounds=[(0, 1)] * H, method="L-BFGS-B",
                       options={"ftol": 1e-15, "gtol": 1e-12})
        assert res.objective <= ref.fun + 1e-7 * (1 + abs(ref.fun))
        # W = 2 discrete instance with the endpoint models
        mean = np.stack([cs.worst_mean, cs.best_mean])
        var = np.stack([cs.worst_var, cs.best_var])
        best, _ = brute_force(lambda c: expected_value(bm.Psi, mean, var, cs.upsilon,
                                                       alpha, beta, c), 2, H)
        below += res.objective <= best + 1e-9 * (1 + abs(best))
        # every exported block must be PSD at (c', theta)
        blocks = parse_sdp(format_sdp(export_sdp(qp)))
        cp = duplicate(res.c, 1)
        sdp_ok += all(np.linalg.eigvalsh(b.matrix(cp, res.objective))[0] >= -1e-8
                      for b in blocks)
    ok = ok_scalar and worst_kkt <= 1e-8 and below == 100 and sdp_ok == 100
    return ok, (f"scalar c* = {scalar.c[0]:.9f}, max KKT {worst_kkt:.1e}, "
                f"lower bound {below}/100, SDP feasible {sdp_ok}/100")


def criterion_7():
    t0 = time.perf_counter()
    sc = landing_scenario()
    report = monte_carlo(sc, n_trials=100)
    dt = time.perf_counter() - t0
    summ = report.summary()
    mean = {k: v["reward"]["mean"] for k, v in summ["policies"].items()}
    baselines = ("AllSmall", "AllLarge", "Random")
    ordered = mean["Oracle"] >= mean["Optimal"] >= max(mean[b] for b in baselines)
    # paired 95% intervals of Optimal minus each baseline must exclude zero
    r = {k: np.array([t.reward for t in report.trials if t.policy == k]) for k in mean}
    strict = True
    for b in baselines:
        diff = r["Optimal"] - r[b]
        lo = diff.mean() - 1.959963984540054 * diff.std(ddof=1) / np.sqrt(len(diff))
        strict &= lo > 0
    ok = ordered and strict and dt <= 600 and sc.horizon == 150 and sc.suite.W == 8
    return ok, (" > ".join(sorted(mean, key=mean.get, reverse=True))
                + f", Optimal beats baselines at 95%: {strict}, {dt:.0f}s")


def criterion_8():
    sc = pareto_instance(np.random.default_rng(808))
    grid = [0.1, 0.5, 1.0, 2.0, 5.0]
    points = {(p.alpha, p.beta): p for p in
              pareto_sweep(sc, [(a, b) for a in grid for b in grid], solver="exhaustive")}
    bad = 0
    for a in grid:
        per = [points[(a, b)].perception_cost for b in grid]
        bad += any(y > x + 1e-9 * (1 + abs(x)) for x, y in zip(per, per[1:]))
    for b in grid:
        ctl = [points[(a, b)].control_term for a in grid]
        bad += any(y > x + 1e-9 * (1 + abs(x)) for x, y in zip(ctl, ctl[1:]))
    distinct = len({tuple(p.sequence) for p in points.values()})
    return bad == 0 and distinct > 1, f"{bad} non-monotone grid lines, {distinct} distinct plans"


def criterion_9():
    rng = np.random.default_rng(909)
    mismatches = 0
    checked = 0
    for _ in range(10):
        H, p = int(rng.integers(3, 7)), int(rng.integers(1, 3))
        bm = build_batch(random_dynamics(rng, 2, 1, p, radius=0.9), random_cost(rng, 2, 1), H)
        mean = rng.normal(size=(H, p))
        var_hi, var_lo = rng.uniform(1.0, 3.0, size=p), rng.uniform(0.0, 0.5, size=p)
        # the cost gap comes from beta * upsilon; equal cost is the beta = 0 case
        ups = 1.0
        weighted = np.array([np.diag(bm.Psi)[t * p:(t + 1) * p] @ (var_hi - var_lo)
                             for t in range(H)])
        for beta in (0.0, float(np.median(weighted))):
            margin = weighted - beta * ups
            if np.any(np.abs(margin) < 1e-6 * (1 + np.abs(weighted))) and beta > 0:
                continue
            suite = PerceptionSuite(ups, (
                tuple(ErrorModel.normal(mean[t], var_hi) for t in range(H)),
                tuple(ErrorModel.normal(mean[t], var_lo) for t in range(H))))
            res = discrete.solve_exhaustive(discrete.encode(bm, suite, 1.0, beta, "expected"))
            expect = (margin > 0).astype(np.int64)
            checked += 1
            mismatches += not np.array_equal(res.sequence, expect)
    return mismatches == 0 and checked >= 10, f"{checked - mismatches}/{checked} plans as predicted"


def _run_cli(args):
    return cli_main([str(a) for a in args])


def criterion_10(tmp):
    tmp = Path(tmp)
    scenario = DATA / "small.yaml"
    outputs = []
    for k in range(2):
        out = tmp / f"run{k}"
        codes = [_run_cli(["plan", "--scenario", scenario, "--out", out]),
                 _run_cli(["plan", "--scenario", scenario, "--out", out, "--mode", "exact"]),
                 _run_cli(["evaluate", "--scenario", scenario, "--out", out, "--trials", 5]),
                 _run_cli(["pareto", "--scenario", scenario, "--out", out,
                           "--alphas", "0.5,1", "--betas", "0.5,1"]),
                 _run_cli(["plan-continuous", "--scenario", scenario, "--out", out,
                           "--export-sdp"])]
        files = sorted(p.name for p in out.iterdir())
        outputs.append((codes, {f: (out / f).read_bytes() for f in files}))
    same = outputs[0] == outputs[1] and all(c == 0 for c in outputs[0][0])
    trips = True
    for path in (scenario, DATA / "tiny.yaml"):
        text = dump_scenario(parse_text(path.read_text()))
        again = dump_scenario(parse_text(text))
        trips &= text == again and parse_text(text) == parse_text(path.read_text())
    landing = dump_scenario(landing_scenario())
    trips &= dump_scenario(parse_text(landing)) == landing
    return same and trips, (f"{len(outputs[0][1])} output files byte-identical: {same}, "
                            f"round trip idempotent: {trips}")


# ---------------------------------------------------------------- pytest glue

def _record(k, result):
    ok, detail = result
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, detail


def test_criterion_1_cost_gap_identity():
    _record(1, criterion_1())


def test_criterion_2_x0_independence():
    _record(2, criterion_2())


def test_criterion_3_oracle_equivalence():
    _record(3, criterion_3())


def test_criterion_4_expectation_decomposition():
    _record(4, criterion_4())


def test_criterion_5_convexity_chain():
    _record(5, criterion_5())


def test_criterion_6_continuous_subcase():
    _record(6, criterion_6())


@pytest.mark.slow
def test_criterion_7_policy_ordering():
    _record(7, criterion_7())


def test_criterion_8_pareto_monotonicity():
    _record(8, criterion_8())


def test_criterion_9_variance_sensitivity():
    _record(9, criterion_9())


def test_criterion_10_determinism_round_trip(tmp_path):
    _record(10, criterion_10(tmp_path))


if __name__ == "__main__":
    import tempfile
    only = {int(a) for a in sys.argv[1:]}
    failed = False
    for k in range(1, 11):
        if only and k not in only:
            continue
        fn = globals()[f"criterion_{k}"]
        with tempfile.TemporaryDirectory() as tmp:
            t0 = time.perf_counter()
            try:
                ok, detail = fn(tmp) if k == 10 else fn()
            except Exception as exc:
                ok, detail = False, f"{type(exc).__name__}: {exc}"
        failed |= not ok
        print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail} "
              f"[{time.perf_counter() - t0:.1f}s]", flush=True)
    sys.exit(1 if failed else 0)
