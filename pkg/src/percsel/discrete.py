"""Boolean model-selection programs and their exact solvers.

A choice sequence ``c = (w_0, ..., w_{H-1})`` picks one model per step.
Two objectives are supported:

* ``exact``: the realized errors are known, and the objective is
  ``alpha * v' Psi v + beta * upsilon * sum(c)`` with ``v`` stacking the
  chosen realized errors.
* ``expected``: only per-model means and (elementwise) variances are known;
  under independence the expected objective is
  ``alpha * m' Psi m + alpha * diag(Psi) . var + beta * upsilon * sum(c)``.

Both fit the kernel form ``alpha * v' Psi v + sum_t lin[t, c_t]``, which is
what the exhaustive search, the convex relaxation and branch-and-bound work
on.  Ties between sequences whose objectives agree within ``TIE_RTOL`` are
broken towards the lexicographically smallest sequence.
"""
import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .batch_lqr import psd_check
from .errors import (ConvergenceFailure, DimensionMismatch, MissingRealizedErrors,
                     TooLarge)
from .perception import check_suite_shape

TIE_RTOL = 1e-10
EXHAUSTIVE_LIMIT = 10 ** 6

OPTIMAL = "optimal"
BOUND_GAP = "bound_gap"
INFEASIBLE = "infeasible"


def _tie(value):
    return TIE_RTOL * (1.0 + abs(value))


@dataclass(frozen=True, eq=False)
class BooleanQP:
    """Encoded selection problem.  Arrays indexed (w, t, r) follow the suite layout."""
    mode: str
    Psi: np.ndarray
    errors: np.ndarray            # (W, H, p): realized errors or means
    variances: np.ndarray         # (W, H, p); zeros in exact mode
    alpha: float
    beta: float
    upsilon: float
    vecs: np.ndarray = field(init=False, repr=False)
    lin: np.ndarray = field(init=False, repr=False)
    lip: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("exact", "expected"):
            raise ValueError(f"mode must be 'exact' or 'expected', got {self.mode!r}")
        W, H, p = self.errors.shape
        if self.Psi.shape != (p * H, p * H) or self.variances.shape != (W, H, p):
            raise DimensionMismatch("Psi, errors and variances sizes are inconsistent")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        vecs = np.ascontiguousarray(np.transpose(self.errors, (1, 0, 2)))
        var_tw = np.transpose(self.variances, (1, 0, 2))                 # (H, W, p)
        vrow = self.Vrow.reshape(H, p)
        lin = self.beta * self.upsilon * np.arange(W, dtype=float)[None, :].repeat(H, 0)
        if self.mode == "expected":
            lin = lin + self.alpha * np.einsum("twr,tr->tw", var_tw, vrow)
        object.__setattr__(self, "vecs", vecs)
        object.__setattr__(self, "lin", np.ascontiguousarray(lin))
        object.__setattr__(self, "lip", _lipschitz(self.Psi, vecs, self.alpha))

    @property
    def W(self):
        return self.errors.shape[0]

    @property
    def H(self):
        return self.errors.shape[1]

    @property
    def p(self):
        return self.errors.shape[2]

    @property
    def Vrow(self):
        return np.diag(self.Psi).copy()


def _lipschitz(Psi, vecs, alpha):
    """Exact Lipschitz constant of the relaxed objective's gradient.

    The quadratic part is ``alpha * b' E' Psi E b`` with E block diagonal, so
    its Hessian norm equals ``2 alpha lambda_max(S^1/2 Psi S^1/2)`` where
    ``S = E E'`` is block diagonal with p x p blocks.
    """
    if alpha == 0.0 or not np.any(Psi):
        return 0.0
    H, W, p = vecs.shape
    root = np.zeros_like(Psi)
    for t in range(H):
        S = vecs[t].T @ vecs[t]
        lam, U = np.linalg.eigh(S)
        blk = slice(t * p, (t + 1) * p)
        root[blk, blk] = (U * np.sqrt(np.maximum(lam, 0.0))) @ U.T
    M = root @ Psi @ root
    lam_max = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    return 2.0 * alpha * max(lam_max, 0.0) * (1.0 + 1e-9)


@dataclass(eq=False)
class SolveResult:
    sequence: np.ndarray
    objective: float
    lower_bound: float
    nodes_explored: int
    status: str
    gap: float = 0.0
    stats: dict = field(default_factory=dict)


def as_sequence(qp, c):
    seq = np.asarray(c, dtype=np.int64).reshape(-1)
    if seq.shape[0] != qp.H:
        raise DimensionMismatch(f"sequence has {seq.shape[0]} steps, expected {qp.H}")
    if np.any(seq < 0) or np.any(seq >= qp.W):
        raise DimensionMismatch(f"model indices must lie in [0, {qp.W - 1}]")
    return seq


def objective_value(qp, c):
    seq = as_sequence(qp, c)
    steps = np.arange(qp.H)
    v = qp.errors[seq, steps].reshape(-1)
    value = qp.alpha * float(v @ qp.Psi @ v)
    if qp.mode == "expected":
        value += qp.alpha * float(qp.Vrow @ qp.variances[seq, steps].reshape(-1))
    return value + qp.beta * qp.upsilon * float(seq.sum())


def objective_terms(qp, c):
    """Split the objective into (quadratic control term, perception cost), unweighted."""
    seq = as_sequence(qp, c)
    steps = np.arange(qp.H)
    v = qp.errors[seq, steps].reshape(-1)
    quad = float(v @ qp.Psi @ v)
    if qp.mode == "expected":
        quad += float(qp.Vrow @ qp.variances[seq, steps].reshape(-1))
    return quad, qp.upsilon * float(seq.sum())


def encode(bm, suite, alpha, beta, mode, realized=None):
    check_suite_shape(suite, bm.H, bm.p)
    means, variances = suite.moment_arrays()
    if mode == "exact":
        if realized is None:
            raise MissingRealizedErrors("exact mode needs realized errors")
        errors = np.asarray(getattr(realized, "errors", realized), dtype=float)
        if errors.shape != means.shape:
            raise DimensionMismatch(f"realized errors have shape {errors.shape}, "
                                    f"expected {means.shape}")
        variances = np.zeros_like(errors)
    elif mode == "expected":
        errors = means
    else:
        raise ValueError(f"mode must be 'exact' or 'expected', got {mode!r}")
    return BooleanQP(mode=mode, Psi=np.asarray(bm.Psi, dtype=float), errors=errors,
                     variances=variances, alpha=float(alpha), beta=float(beta),
                     upsilon=float(suite.upsilon))


def solve_exhaustive(qp, limit=EXHAUSTIVE_LIMIT):
    count = qp.W ** qp.H
    if count > limit:
        raise TooLarge(f"W^H = {count} sequences exceeds the limit {limit}")
    t0 = time.perf_counter()
    best = kernels.exhaustive_min(qp.Psi, qp.vecs, qp.lin, qp.alpha)
    seq = kernels.exhaustive_first_below(qp.Psi, qp.vecs, qp.lin, qp.alpha, best + _tie(best))
    obj = objective_value(qp, seq)
    return SolveResult(sequence=seq, objective=obj, lower_bound=obj, nodes_explored=count,
                       status=OPTIMAL, stats={"wall_time": time.perf_counter() - t0})


def _normalize_fixed(qp, fixed_prefix):
    fixed = np.full(qp.H, -1, dtype=np.int64)
    if fixed_prefix is None:
        return fixed
    if isinstance(fixed_prefix, dict):
        items = fixed_prefix.items()
    else:
        arr = np.asarray(fixed_prefix, dtype=np.int64).reshape(-1)
        if arr.shape[0] > qp.H:
            raise DimensionMismatch("prefix is longer than the horizon")
        items = ((t, w) for t, w in enumerate(arr) if w >= 0)
    for t, w in items:
        if not (0 <= t < qp.H and 0 <= w < qp.W):
            raise DimensionMismatch(f"invalid assignment step {t} -> model {w}")
        fixed[t] = w
    return fixed


def _solve_relaxation(qp, fixed, b0, tol, max_iter, cutoff=np.inf):
    """Return (b, f, gap, bound, iters) of the relaxation with pinned rows."""
    if qp.lip == 0.0:
        # linear objective: per-row minimum is optimal and the bound is exact
        b = np.zeros((qp.H, qp.W))
        choice = np.where(fixed >= 0, fixed, np.argmin(qp.lin, axis=1))
        b[np.arange(qp.H), choice] = 1.0
        f = float(np.sum(qp.lin * b)) + qp.alpha * _quad_of(qp, b)
        return b, f, 0.0, f, 0
    return kernels.relax(qp.Psi, qp.vecs, qp.lin, qp.alpha, fixed, b0, qp.lip, tol, max_iter,
                         cutoff)


def _quad_of(qp, b):
    v = np.einsum("tw,twp->tp", b, qp.vecs).reshape(-1)
    return float(v @ qp.Psi @ v)


def relax_lower_bound(qp, fixed_prefix=None, tol=1e-8, max_iter=200000):
    """Lower bound on every completion of ``fixed_prefix`` via the simplex relaxation.

    ``fixed_prefix`` is a sequence (time prefix; -1 marks a free step), or a
    dict mapping step -> model.
    """
    fixed = _normalize_fixed(qp, fixed_prefix)
    if np.all(fixed >= 0):
        return objective_value(qp, fixed)
    b0 = np.full((qp.H, qp.W), 1.0 / qp.W)
    b, f, gap, bound, _ = _solve_relaxation(qp, fixed, b0, tol, max_iter)
    if gap > tol * max(1.0, abs(f)):
        raise ConvergenceFailure(f"relaxation stopped with KKT residual {gap:.3g}")
    return bound


def _gradient_at(qp, seq):
    steps = np.arange(qp.H)
    v = qp.vecs[steps, seq].reshape(-1)
    g = (qp.Psi @ v).reshape(qp.H, qp.p)
    return 2.0 * qp.alpha * np.einsum("twr,tr->tw", qp.vecs, g) + qp.lin


def greedy_sequence(qp):
    """Per-step minimizer of the separable (block-diagonal) part of the objective."""
    p = qp.p
    diag = np.empty((qp.H, qp.W))
    for t in range(qp.H):
        P = qp.Psi[t * p:(t + 1) * p, t * p:(t + 1) * p]
        diag[t] = np.einsum("wi,ij,wj->w", qp.vecs[t], P, qp.vecs[t])
    return np.argmin(qp.alpha * diag + qp.lin, axis=1).astype(np.int64)


class _Incumbent:
    """Near-optimal sequences seen so far; the canonical one is the lexicographic minimum."""

    def __init__(self, qp):
        self.qp = qp
        self.best = np.inf
        self.ties = {}

    def offer(self, seq):
        key = tuple(int(w) for w in seq)
        if key in self.ties:
            return
        obj = objective_value(self.qp, np.asarray(key))
        if obj > self.best + _tie(self.best):
            return
        self.best = min(self.best, obj)
        limit = self.best + _tie(self.best)
        self.ties[key] = obj
        self.ties = {k: v for k, v in self.ties.items() if v <= limit}

    @property
    def sequence(self):
        return min(self.ties) if self.ties else None


def solve_bnb(qp, gap_tol=1e-10, node_limit=200000, incumbents=(), relax_tol=None,
              relax_max_iter=20000, trace=None):
    """Best-first branch-and-bound with simplex-relaxation bounds.

    ``gap_tol`` is relative to ``max(1, |incumbent|)``; at or below
    ``TIE_RTOL`` the returned sequence is the canonical (lexicographically
    smallest) optimum.  ``incumbents`` seeds the search with known sequences.
    Node relaxations stop at relative KKT residual ``relax_tol`` (default
    ``max(1e-9, gap_tol / 10)``) or as soon as their bound prunes the node;
    either way the bound used is valid.
    If ``trace`` is a list, ``(node_id, parent_id, bound)`` tuples are appended.
    """
    t0 = time.perf_counter()
    H, W = qp.H, qp.W
    if relax_tol is None:
        relax_tol = max(1e-9, 0.1 * gap_tol)
    inc = _Incumbent(qp)
    starts = [greedy_sequence(qp)] + [np.full(H, w, dtype=np.int64) for w in range(W)]
    starts += [as_sequence(qp, s) for s in incumbents]
    for s in starts:
        inc.offer(s)
        inc.offer(kernels.local_search(qp.Psi, qp.vecs, qp.lin, qp.alpha, s)[0])

    def gap_abs():
        return gap_tol * max(1.0, abs(inc.best))

    canonical = gap_tol * max(1.0, abs(inc.best)) <= _tie(inc.best)

    def prunable(bound, lexmin):
        I = inc.best
        if bound > I + _tie(I):
            return True
        if bound >= I - gap_abs():
            if not canonical or lexmin >= inc.sequence:
                return True
        return False

    counter = itertools.count()
    root_fixed = np.full(H, -1, dtype=np.int64)
    heap = [(-np.inf, (0,) * H, next(counter), root_fixed, None, -1)]
    nodes = 0
    relax_iters = 0
    pruned_low = np.inf
    steps = np.arange(H)
    while heap:
        bound, lexmin, node_id, fixed, warm, parent = heap[0]
        if prunable(bound, lexmin):
            heapq.heappop(heap)
            pruned_low = min(pruned_low, bound)
            continue
        if nodes >= node_limit:
            break
        heapq.heappop(heap)
        nodes += 1
        free = fixed < 0
        b0 = np.full((H, W), 1.0 / W) if warm is None else warm
        I = inc.best
        if canonical and lexmin < inc.sequence:
            cutoff = I + 2.0 * _tie(I)
        else:
            cutoff = I - gap_abs()
        b, f, gap, rbound, iters = _solve_relaxation(qp, fixed, b0, relax_tol, relax_max_iter,
                                                     cutoff)
        relax_iters += iters
        B = max(bound, rbound)

        rounded = np.where(free, np.argmax(b, axis=1), fixed)
        inc.offer(rounded)
        inc.offer(np.where(free, 0, fixed))

        # vertex certificate: KKT at the rounded point proves it optimal for this node
        grad = _gradient_at(qp, rounded)
        chosen = grad[steps, rounded]
        others = grad.copy()
        others[steps, rounded] = np.inf
        margins = np.where(free, others.min(axis=1) - chosen, np.inf) if W > 1 \
            else np.full(H, np.inf)
        resolved = False
        if np.all(margins >= -1e-12 * (1.0 + np.abs(chosen))):
            f_r = objective_value(qp, rounded)
            B = max(B, f_r)
            resolved = bool(np.min(margins) > _tie(f_r))
        if trace is not None:
            trace.append((node_id, parent, B))
        if resolved or prunable(B, lexmin):
            pruned_low = min(pruned_low, B)
            continue

        frac = np.where(free, 1.0 - b.max(axis=1), -1.0)
        if frac.max() > 1e-9:
            t = int(np.argmax(frac))
        else:
            t = int(np.argmin(np.where(free, margins, np.inf)))
        for w in range(W):
            child = fixed.copy()
            child[t] = w
            warm_b = b.copy()
            warm_b[t] = 0.0
            warm_b[t, w] = 1.0
            child_lexmin = tuple(int(x) for x in np.where(child >= 0, child, 0))
            heapq.heappush(heap, (B, child_lexmin, next(counter), child, warm_b, node_id))

    open_low = min((n[0] for n in heap), default=np.inf)
    seq = np.asarray(inc.sequence, dtype=np.int64)
    obj = objective_value(qp, seq)
    lower = min(obj, pruned_low, open_low)
    gap = max(0.0, obj - lower)
    finished = not heap or open_low >= obj - max(gap_abs(), _tie(obj))
    status = OPTIMAL if finished else BOUND_GAP
    return SolveResult(sequence=seq, objective=obj, lower_bound=lower, nodes_explored=nodes,
                       status=status, gap=gap,
                       stats={"wall_time": time.perf_counter() - t0,
                              "relax_iterations": relax_iters,
                              "open_nodes": len(heap)})


def check_psd_psi(qp, tol=1e-9):
    return psd_check(qp.Psi, tol)
