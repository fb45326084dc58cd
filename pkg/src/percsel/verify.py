"""Built-in invariant suite behind ``percsel verify``.

Each check returns ``(passed, detail)``.  ``quick`` runs reduced sample
counts (well under a minute); ``full`` runs the complete sweeps.
"""
import time

import numpy as np

from . import discrete
from .batch_lqr import build_batch, cost_gap, psd_check, simulated_gap
from .continuous import (build_canonical, check_assumption, continuous_objective, duplicate,
                         expected_block_count, export_sdp, format_sdp, parse_sdp, solve_qp,
                         verify_sdp, ContinuousSuite)
from .errors import NotSymmetric, SingularPhiC
from .instances import (random_continuous_suite, random_cost, random_dynamics, random_instance,
                        random_suite, small_selection_instance)
from .perception import ErrorModel, PerceptionSuite, sample_realized_batch

SIZES = {"quick": {"gap": 40, "samples": 5, "oracle": 40, "decomp": 5, "decomp_n": 4000,
                   "chain": 25, "relax": 25},
         "full": {"gap": 200, "samples": 10, "oracle": 200, "decomp": 20, "decomp_n": 10000,
                  "chain": 100, "relax": 100}}

FAULTS = ("asymmetric-psi",)


def check_cost_gap(rng, size, fault=None):
    worst = 0.0
    for _ in range(size["gap"]):
        dyn, cost, H, bm = random_instance(rng)
        for _ in range(size["samples"]):
            s = rng.normal(size=bm.p * H)
            s_hat = s + rng.normal(size=bm.p * H)
            x0 = rng.normal(size=bm.n)
            gap = cost_gap(bm, s_hat, s)
            sim = simulated_gap(dyn, cost, bm, s_hat, s, x0)
            worst = max(worst, abs(gap - sim) / (1.0 + abs(gap)))
    return worst <= 1e-8, f"max |analytic - simulated| / (1 + gap) = {worst:.2e}"


def check_x0_invariance(rng, size, fault=None):
    worst = 0.0
    for _ in range(size["gap"] // 2):
        dyn, cost, H, bm = random_instance(rng)
        s = rng.normal(size=bm.p * H)
        s_hat = s + rng.normal(size=bm.p * H)
        gaps = [simulated_gap(dyn, cost, bm, s_hat, s, rng.normal(size=bm.n) * 3)
                for _ in range(5)]
        worst = max(worst, (max(gaps) - min(gaps)) / (1.0 + abs(np.mean(gaps))))
    return worst <= 1e-8, f"max relative spread over 5 initial states = {worst:.2e}"


def check_psd(rng, size, fault=None):
    worst = np.inf
    for _ in range(size["gap"]):
        _, _, _, bm = random_instance(rng)
        Psi = np.array(bm.Psi)
        if fault == "asymmetric-psi":
            Psi[0, -1] += 1e-3 * max(1.0, np.abs(Psi).max())
        try:
            rep = psd_check(Psi)
        except NotSymmetric as exc:
            return False, f"Psi rejected: {exc}"
        if not rep.is_psd:
            return False, f"Psi min eigenvalue {rep.min_eigenvalue:.3g}"
        worst = min(worst, rep.min_eigenvalue / max(1.0, np.linalg.norm(Psi, 2)))
    return True, f"min eigenvalue / norm >= {worst:.2e}"


def check_oracle(rng, size, fault=None):
    for i in range(size["oracle"]):
        bm, suite, alpha, beta = small_selection_instance(rng)
        if i % 2:
            realized = sample_realized_batch(suite, int(rng.integers(1 << 30)), 1)[0]
            qp = discrete.encode(bm, suite, alpha, beta, "exact", realized)
        else:
            qp = discrete.encode(bm, suite, alpha, beta, "expected")
        ex = discrete.solve_exhaustive(qp)
        bb = discrete.solve_bnb(qp)
        if abs(ex.objective - bb.objective) > 1e-9 * (1 + abs(ex.objective)) \
                or not np.array_equal(ex.sequence, bb.sequence) or bb.status != discrete.OPTIMAL:
            return False, (f"instance {i}: exhaustive {ex.sequence} {ex.objective!r}, "
                           f"bnb {bb.sequence} {bb.objective!r} ({bb.status})")
    return True, f"{size['oracle']} instances agree"


def check_relaxation(rng, size, fault=None):
    for i in range(size["relax"]):
        bm, suite, alpha, beta = small_selection_instance(rng, limit=2000)
        qp = discrete.encode(bm, suite, alpha, beta, "expected")
        best = discrete.solve_exhaustive(qp).objective
        bound = discrete.relax_lower_bound(qp)
        if bound > best + 1e-9 * (1 + abs(best)):
            return False, f"instance {i}: bound {bound!r} exceeds optimum {best!r}"
    return True, f"{size['relax']} bounds below the optimum"


def check_decomposition(rng, size, fault=None):
    hits = 0
    total = size["decomp"]
    for _ in range(total):
        bm, suite, alpha, beta = small_selection_instance(rng)
        qp = discrete.encode(bm, suite, alpha, beta, "expected")
        seq = rng.integers(0, suite.W, size=bm.H)
        draws = sample_realized_batch(suite, int(rng.integers(1 << 30)), size["decomp_n"])
        v = draws[:, seq, np.arange(bm.H)].reshape(draws.shape[0], -1)
        vals = alpha * np.einsum("ij,jk,ik->i", v, qp.Psi, v) + beta * suite.upsilon * seq.sum()
        se = vals.std(ddof=1) / np.sqrt(vals.shape[0])
        target = discrete.objective_value(qp, seq)
        if abs(vals.mean() - target) <= 3 * se + 1e-12 * (1 + abs(target)):
            hits += 1
    need = total - max(1, total // 20)
    return hits >= need, f"{hits}/{total} within 3 standard errors (need {need})"


def check_convexity_chain(rng, size, fault=None):
    held = 0
    for _ in range(size["chain"]):
        n, m, p = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        H = int(rng.integers(1, 8))
        bm = build_batch(random_dynamics(rng, n, m, p), random_cost(rng, n, m), H)
        if not psd_check(bm.Psi).is_psd:
            return False, "Psi failed the PSD check"
        cs = random_continuous_suite(rng, H, p)
        if rng.uniform() < 0.3:
            # constant mean shift: Phi is a constant matrix and the assumption holds
            shift = rng.normal()
            cs = ContinuousSuite(cs.worst_mean, cs.worst_var, cs.worst_mean + shift,
                                 cs.best_var, cs.upsilon)
        qp = build_canonical(bm, cs, rng.uniform(0.1, 1), rng.uniform(0, 1))
        try:
            rep = check_assumption(qp)
        except SingularPhiC:
            continue
        if rep.holds:
            held += 1
            norm = np.linalg.norm(qp.PsiPrime, 2)
            if rep.psi_prime_min_eig < -1e-9 * max(norm, 1e-300):
                return False, f"assumption holds but Psi' min eigenvalue {rep.psi_prime_min_eig:.3g}"
    return True, f"implication verified ({held} suites satisfied the assumption)"


def _scalar_example():
    from .batch_lqr import CostSpec, Dynamics
    bm = build_batch(Dynamics([[1.0]], [[1.0]], [[1.0]]), CostSpec([[0.0]], [[1.0]], [[1.0]]), 1)
    return build_canonical(bm, ContinuousSuite([2.0], [0.0], [0.0], [0.0], 1.0), 1.0, 1.0)


def check_continuous(rng, size, fault=None):
    qp = _scalar_example()
    res = solve_qp(qp)
    if abs(res.c[0] - 0.75) > 1e-6:
        return False, f"scalar example gave c = {res.c[0]!r}"
    for i in range(size["chain"]):
        n, m, p = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        H = int(rng.integers(1, 7))
        bm = build_batch(random_dynamics(rng, n, m, p), random_cost(rng, n, m), H)
        cs = random_continuous_suite(rng, H, p)
        alpha, beta = rng.uniform(0.1, 1), rng.uniform(0, 1)
        qp = build_canonical(bm, cs, alpha, beta)
        for _ in range(5):
            c = rng.uniform(size=H)
            direct = continuous_objective(bm.Psi, cs, alpha, beta, c)
            if abs(qp.value_at(c) - direct) > 1e-10 * (1 + abs(direct)):
                return False, f"instance {i}: canonical form disagrees with the direct objective"
        res = solve_qp(qp)
        if res.kkt_residual > 1e-8:
            return False, f"instance {i}: KKT residual {res.kkt_residual:.2e}"
        blocks = parse_sdp(format_sdp(export_sdp(qp)))
        if len(blocks) != expected_block_count(H, p):
            return False, f"instance {i}: {len(blocks)} SDP blocks"
        if not all(ok for *_, ok in verify_sdp(blocks, duplicate(res.c, p), res.objective)):
            return False, f"instance {i}: SDP blocks infeasible at the QP optimum"
        if p == 1:
            pair = PerceptionSuite(cs.upsilon, tuple(
                tuple(ErrorModel.normal(mu[t], var[t]) for t in range(H))
                for mu, var in ((cs.worst_mean, cs.worst_var), (cs.best_mean, cs.best_var))))
            ex = discrete.solve_exhaustive(discrete.encode(bm, pair, alpha, beta, "expected"))
            if res.objective > ex.objective + 1e-9 * (1 + abs(ex.objective)):
                return False, f"instance {i}: QP value above the discrete optimum"
    return True, "scalar c* = 0.75; KKT, SDP feasibility and relaxation bound hold"


def pareto_instance(rng):
    from .scenario import from_data
    H, W = 4, 3
    dyn = random_dynamics(rng, 2, 1, 1, radius=0.9)
    cost = random_cost(rng, 2, 1)
    models = [{"family": "normal", "mean": [float(rng.normal() * (W - w))],
               "variance": [float(rng.uniform(0.5, 2.0) * (W - w) ** 2)]} for w in range(W)]
    data = {"schema_version": 1, "name": "pareto-check",
            "dynamics": {k: np.asarray(getattr(dyn, k)).tolist() for k in "ABC"},
            "cost": {k: np.asarray(getattr(cost, k)).tolist() for k in ("Q", "R", "Qf")},
            "horizon": H, "suite": {"models": models}, "weights": {"alpha": 1.0, "beta": 1.0},
            "upsilon": 0.5, "seeds": {"master": 0},
            "solver": {"gap_tol": 1e-10, "node_limit": 200000, "qp_tol": 1e-8,
                       "oracle_node_limit": 5000, "oracle_gap_tol": 1e-6}}
    return from_data(data)


def pareto_violations(points, alphas, betas):
    """List of monotonicity violations on an alpha x beta grid (row-major points)."""
    grid = {(p.alpha, p.beta): p for p in points}
    out = []
    for a in alphas:
        per = [grid[(a, b)].perception_cost for b in betas]
        if any(y > x + 1e-9 * (1 + abs(x)) for x, y in zip(per, per[1:])):
            out.append(f"alpha={a}: perception cost increases with beta {per}")
    for b in betas:
        ctl = [grid[(a, b)].control_term for a in alphas]
        if any(y > x + 1e-9 * (1 + abs(x)) for x, y in zip(ctl, ctl[1:])):
            out.append(f"beta={b}: control term increases with alpha {ctl}")
    return out


def check_pareto(rng, size, fault=None):
    from .evaluation import pareto_sweep
    sc = pareto_instance(rng)
    alphas = betas = [0.1, 0.5, 1.0, 2.0, 5.0]
    points = pareto_sweep(sc, [(a, b) for a in alphas for b in betas], solver="exhaustive")
    bad = pareto_violations(points, alphas, betas)
    return not bad, "; ".join(bad) or "monotone along every grid row and column"


def variance_instance(rng, H=5):
    """Two equal-mean models, equal cost (beta = 0), model 1 has lower variance."""
    dyn = random_dynamics(rng, 2, 1, 1, radius=0.9)
    bm = build_batch(dyn, random_cost(rng, 2, 1), H)
    mean = rng.normal(size=H)
    hi = [ErrorModel.normal(mean[t], 2.0) for t in range(H)]
    lo = [ErrorModel.normal(mean[t], 0.5) for t in range(H)]
    suite = PerceptionSuite(1.0, (tuple(hi), tuple(lo)))
    return bm, suite


def check_variance(rng, size, fault=None):
    for i in range(5):
        bm, suite = variance_instance(rng)
        qp = discrete.encode(bm, suite, 1.0, 0.0, "expected")
        res = discrete.solve_exhaustive(qp)
        gain = np.diag(bm.Psi) * (2.0 - 0.5)
        expect = (gain > 0).astype(np.int64)
        if not np.array_equal(res.sequence, expect):
            return False, f"instance {i}: plan {res.sequence}, expected {expect}"
    return True, "lower-variance model chosen wherever it pays"


def check_roundtrip(rng, size, fault=None, scenario=None):
    from .evaluation import landing_scenario
    from .scenario import dump_scenario, parse_text
    sc = scenario or landing_scenario()
    text = dump_scenario(sc)
    again = parse_text(text)
    ok = again == sc and dump_scenario(again) == text
    return ok, "parse -> dump -> parse is idempotent" if ok else "round trip changed the scenario"


CHECKS = (("cost-gap identity", check_cost_gap),
          ("x0 invariance", check_x0_invariance),
          ("Psi PSD", check_psd),
          ("oracle equivalence", check_oracle),
          ("relaxation soundness", check_relaxation),
          ("expectation decomposition", check_decomposition),
          ("convexity chain", check_convexity_chain),
          ("continuous subcase", check_continuous),
          ("Pareto monotonicity", check_pareto),
          ("variance sensitivity", check_variance),
          ("scenario round trip", check_roundtrip))


def run(level="quick", seed=0, scenario=None, fault=None, out=print):
    """Run every check; returns the list of (name, passed, detail, seconds)."""
    if level not in SIZES:
        raise ValueError(f"level must be one of {sorted(SIZES)}")
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    size = SIZES[level]
    results = []
    for k, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, k])
        t0 = time.perf_counter()
        kwargs = {"scenario": scenario} if fn is check_roundtrip else {}
        try:
            passed, detail = fn(rng, size, fault=fault, **kwargs)
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        results.append((name, passed, detail, dt))
        if out is not None:
            out(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail} ({dt:.1f}s)")
    return results
