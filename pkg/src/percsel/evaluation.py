"""Monte-Carlo comparison of selection policies and (alpha, beta) sweeps.

Every trial draws one set of realized errors for all models and steps, then
scores each policy's sequence on it.  Scores use the gap form of the total
cost: ``control_gap`` is the excess control cost caused by the chosen
models' errors and ``reward = -(alpha * control_gap + beta * perception_cost)``.

Seeding: trial ``k`` of a run with master seed ``m`` samples errors from
``SeedSequence([m, k, 0])``; the random policy uses ``SeedSequence([m, k, 1])``.
Nothing depends on wall-clock time or on execution order, so reports are
reproducible byte for byte.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import discrete
from .batch_lqr import cost_gap
from .errors import DimensionMismatch, ValidationError
from .perception import RealizedErrors, sample_realized

POLICY_KINDS = ("all_small", "all_large", "random", "optimal", "oracle")
POLICY_NAMES = {"all_small": "AllSmall", "all_large": "AllLarge", "random": "Random",
                "optimal": "Optimal", "oracle": "Oracle"}
CSV_COLUMNS = ("trial", "policy", "control_gap", "perception_cost", "reward")
Z95 = 1.959963984540054


@dataclass(frozen=True, eq=False)
class Policy:
    kind: str
    seed: object = None
    sequence: object = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @property
    def name(self):
        return POLICY_NAMES[self.kind]

    @classmethod
    def all_small(cls):
        return cls("all_small")

    @classmethod
    def all_large(cls):
        return cls("all_large")

    @classmethod
    def random(cls, seed):
        return cls("random", seed=seed)

    @classmethod
    def optimal(cls, sequence):
        return cls("optimal", sequence=np.asarray(sequence, dtype=np.int64))

    @classmethod
    def oracle(cls):
        return cls("oracle")


@dataclass(frozen=True, eq=False)
class TrialResult:
    policy: str
    control_gap: float
    perception_cost: float
    reward: float
    sequence: np.ndarray
    trial: int = 0
    solver: dict = field(default_factory=dict)


def policy_sequence(policy, W, H):
    if policy.kind == "all_small":
        return np.zeros(H, dtype=np.int64)
    if policy.kind == "all_large":
        return np.full(H, W - 1, dtype=np.int64)
    if policy.kind == "random":
        return np.random.default_rng(policy.seed).integers(0, W, size=H, dtype=np.int64)
    if policy.kind == "optimal":
        if policy.sequence is None:
            raise ValueError("the optimal policy needs a precomputed sequence")
        seq = np.asarray(policy.sequence, dtype=np.int64)
        if seq.shape != (H,) or np.any(seq < 0) or np.any(seq >= W):
            raise DimensionMismatch(f"optimal sequence must have {H} entries in [0, {W - 1}]")
        return seq
    raise ValueError("the oracle sequence depends on the realized errors")


def score(bm, realized, upsilon, alpha, beta, seq):
    """(control_gap, perception_cost, reward) of ``seq`` on one realization."""
    errors = np.asarray(getattr(realized, "errors", realized), dtype=float)
    v = errors[seq, np.arange(bm.H)].reshape(-1)
    gap = cost_gap(bm, v, np.zeros_like(v))
    per = float(upsilon * seq.sum())
    return gap, per, -(alpha * gap + beta * per)


def run_policy(policy, bm, suite, realized, alpha, beta, incumbents=(), gap_tol=1e-6,
               node_limit=5000, trial=0):
    """Score one policy on one realization.

    The oracle solves the realized (exact-mode) problem by branch-and-bound,
    seeded with ``incumbents`` (typically the other policies' sequences) so
    its answer is never worse than any of them.
    """
    errors = np.asarray(getattr(realized, "errors", realized), dtype=float)
    if errors.shape != (suite.W, bm.H, bm.p):
        raise DimensionMismatch(f"realized errors have shape {errors.shape}, "
                                f"expected {(suite.W, bm.H, bm.p)}")
    info = {}
    if policy.kind == "oracle":
        qp = discrete.encode(bm, suite, alpha, beta, "exact", RealizedErrors(errors))
        res = discrete.solve_bnb(qp, gap_tol=gap_tol, node_limit=node_limit,
                                 incumbents=incumbents)
        seq = res.sequence
        info = {"status": res.status, "nodes": res.nodes_explored, "gap": res.gap}
    else:
        seq = policy_sequence(policy, suite.W, bm.H)
    gap, per, reward = score(bm, errors, suite.upsilon, alpha, beta, seq)
    return TrialResult(policy=policy.name, control_gap=gap, perception_cost=per,
                       reward=reward, sequence=seq, trial=trial, solver=info)


def trial_seed(master, trial, stream=0):
    return np.random.SeedSequence([int(master), int(trial), int(stream)])


def _stats(values):
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    half = Z95 * std / math.sqrt(n) if n > 1 else 0.0
    return {"mean": mean, "std": std, "ci95": [mean - half, mean + half]}


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    scenario_hash: str
    master_seed: int
    n_trials: int
    policies: tuple
    trials: tuple
    plan: dict
    alpha: float
    beta: float

    def records(self, policy=None):
        return [r for r in self.trials if policy is None or r.policy == policy]

    def summary(self):
        out = {"scenario_sha256": self.scenario_hash,
               "seeds": {"master": self.master_seed,
                         "trial_streams": "SeedSequence([master, trial, 0|1])"},
               "n_trials": self.n_trials, "weights": {"alpha": self.alpha, "beta": self.beta},
               "plan": self.plan, "policies": {}, "comparisons": {}}
        rewards = {}
        for name in self.policies:
            recs = self.records(name)
            rewards[name] = np.array([r.reward for r in recs])
            out["policies"][name] = {k: _stats([getattr(r, k) for r in recs])
                                     for k in ("control_gap", "perception_cost", "reward")}
            solver = [r.solver for r in recs if r.solver]
            if solver:
                out["policies"][name]["solver"] = {
                    "nodes_total": int(sum(s["nodes"] for s in solver)),
                    "optimal_trials": int(sum(s["status"] == discrete.OPTIMAL for s in solver)),
                    "max_gap": float(max(s["gap"] for s in solver))}
        if "Optimal" in rewards:
            for name in self.policies:
                if name == "Optimal":
                    continue
                diff = rewards["Optimal"] - rewards[name]
                st = _stats(diff)
                out["comparisons"][f"Optimal-{name}"] = {
                    "mean_reward_difference": st["mean"], "ci95": st["ci95"],
                    "optimal_better_95": bool(st["ci95"][0] > 0),
                    "optimal_not_worse_95": bool(st["ci95"][1] >= 0)}
        return out

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.trials:
            w.writerow([r.trial, r.policy, "%.17g" % r.control_gap, "%.17g" % r.perception_cost,
                        "%.17g" % r.reward])
        return buf.getvalue()

    def json_text(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def ordering(self):
        """Policy names sorted by mean reward, best first."""
        s = self.summary()["policies"]
        return sorted(self.policies, key=lambda n: (-s[n]["reward"]["mean"], n))


def plan_expected(scenario, bm=None, solver="bnb"):
    """Expected-mode plan for the scenario's suite and weights."""
    bm = scenario.batch() if bm is None else bm
    qp = discrete.encode(bm, scenario.suite, scenario.alpha, scenario.beta, "expected")
    if solver == "exhaustive":
        return qp, discrete.solve_exhaustive(qp)
    opts = scenario.solver
    return qp, discrete.solve_bnb(qp, gap_tol=opts["gap_tol"], node_limit=opts["node_limit"])


def default_policies():
    return ("all_small", "all_large", "random", "optimal", "oracle")


def monte_carlo(scenario, policies=None, n_trials=100, master_seed=None, plan=None,
                progress=None):
    """Run ``n_trials`` trials of every policy kind in ``policies``.

    ``plan`` may carry a precomputed optimal sequence; otherwise the
    expected-mode problem is solved first.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if scenario.suite is None:
        raise ValidationError(["suite: evaluation needs a discrete suite"])
    kinds = tuple(policies or default_policies())
    master = scenario.seeds["master"] if master_seed is None else int(master_seed)
    bm = scenario.batch()
    suite = scenario.suite
    alpha, beta = scenario.alpha, scenario.beta
    plan_info = {}
    if plan is None and ("optimal" in kinds or "oracle" in kinds):
        _, res = plan_expected(scenario, bm)
        plan = res.sequence
        plan_info = {"objective": res.objective, "lower_bound": res.lower_bound,
                     "status": res.status, "nodes": res.nodes_explored}
    if plan is not None:
        plan = np.asarray(plan, dtype=np.int64)
        plan_info["sequence"] = [int(w) for w in plan]
    opts = scenario.solver
    trials = []
    for k in range(n_trials):
        errors = sample_realized(suite, trial_seed(master, k, 0)).errors
        done = []
        for kind in kinds:
            if kind == "oracle":
                continue
            pol = Policy(kind, seed=trial_seed(master, k, 1) if kind == "random" else None,
                         sequence=plan if kind == "optimal" else None)
            done.append(run_policy(pol, bm, suite, errors, alpha, beta, trial=k))
        if "oracle" in kinds:
            seeds = [r.sequence for r in done] + ([plan] if plan is not None else [])
            done.append(run_policy(Policy.oracle(), bm, suite, errors, alpha, beta,
                                   incumbents=seeds, gap_tol=opts["oracle_gap_tol"],
                                   node_limit=opts["oracle_node_limit"], trial=k))
        by_name = {r.policy: r for r in done}
        trials.extend(by_name[POLICY_NAMES[kind]] for kind in kinds)
        if progress is not None:
            progress(k + 1, n_trials)
    from .scenario import scenario_hash
    return EvaluationReport(scenario_hash=scenario_hash(scenario), master_seed=master,
                            n_trials=n_trials, policies=tuple(POLICY_NAMES[k] for k in kinds),
                            trials=tuple(trials), plan=plan_info, alpha=alpha, beta=beta)


@dataclass(frozen=True, eq=False)
class ParetoPoint:
    alpha: float
    beta: float
    sequence: np.ndarray
    control_term: float
    perception_cost: float
    objective: float


def pareto_sweep(scenario, grid, solver=None):
    """Expected-mode optimum for each (alpha, beta) in ``grid``, in grid order.

    ``solver`` is ``exhaustive``, ``bnb`` or None (exhaustive when W^H <= 10^4).
    ``control_term`` is the unweighted expected quadratic term
    ``m'Psi m + diag(Psi).var``; ``perception_cost`` is ``upsilon * sum(c)``.
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValueError("the (alpha, beta) grid is empty")
    for a, b in grid:
        if a < 0 or b < 0 or (a == 0 and b == 0):
            raise ValueError(f"invalid weights ({a}, {b})")
    bm = scenario.batch()
    suite = scenario.suite
    if solver is None:
        solver = "exhaustive" if suite.W ** bm.H <= 10 ** 4 else "bnb"
    points = []
    for a, b in grid:
        qp = discrete.encode(bm, suite, a, b, "expected")
        if solver == "exhaustive":
            res = discrete.solve_exhaustive(qp)
        else:
            res = discrete.solve_bnb(qp, gap_tol=scenario.solver["gap_tol"],
                                     node_limit=scenario.solver["node_limit"])
        quad, per = discrete.objective_terms(qp, res.sequence)
        points.append(ParetoPoint(alpha=a, beta=b, sequence=res.sequence, control_term=quad,
                                  perception_cost=per, objective=res.objective))
    return points


def pareto_csv_text(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("alpha", "beta", "control_term", "perception_cost", "objective", "sequence"))
    for pt in points:
        w.writerow(["%.17g" % pt.alpha, "%.17g" % pt.beta, "%.17g" % pt.control_term,
                    "%.17g" % pt.perception_cost, "%.17g" % pt.objective,
                    " ".join(str(int(x)) for x in pt.sequence)])
    return buf.getvalue()


def landing_scenario():
    """The shipped drone-landing scenario (H=150, W=8, n=4, m=1, p=1)."""
    from .scenario import parse_text
    text = resources.files("percsel").joinpath("data/drone_landing.yaml").read_text()
    return parse_text(text, "drone_landing.yaml")
