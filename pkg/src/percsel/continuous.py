"""Continuous model quality: interpolating between a worst and a best model.

A quality level ``c_t`` in [0, 1] mixes the moments of the worst (c = 0) and
best (c = 1) error models linearly and costs ``c_t * upsilon``.  With the
per-coordinate mean difference ``d = mu_best - mu_worst`` the expected
objective is a box-constrained quadratic in the duplicated vector ``c'``
(each ``c_t`` repeated p times)::

    c' (Phi o Psi) c' * alpha + (L + R + beta * Im) c' + K + K2,   Phi = d d'

``Phi o Psi`` is PSD whenever Psi is (Schur product theorem), so the program
is convex.  It is solved directly in the H free variables; the SDP form of
the same program can be exported as a list of LMI blocks and checked at a
candidate point.
"""
from dataclasses import dataclass

import numpy as np

from .batch_lqr import psd_check
from .errors import ConvergenceFailure, DimensionMismatch, NotConvex, SingularPhiC

SINGULAR_COND = 1e12


@dataclass(frozen=True, eq=False)
class ContinuousSuite:
    """Worst/best moments, each of shape (H, p)."""
    worst_mean: np.ndarray
    worst_var: np.ndarray
    best_mean: np.ndarray
    best_var: np.ndarray
    upsilon: float

    def __post_init__(self):
        shape = None
        for name in ("worst_mean", "worst_var", "best_mean", "best_var"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            shape = arr.shape if shape is None else shape
            if arr.ndim != 2 or arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.worst_var < 0) or np.any(self.best_var < 0):
            raise DimensionMismatch("variances must be nonnegative")
        object.__setattr__(self, "upsilon", float(self.upsilon))

    @classmethod
    def from_suite(cls, suite):
        """Use model 0 as the worst and model W-1 as the best end point."""
        means, variances = suite.moment_arrays()
        return cls(means[0], variances[0], means[-1], variances[-1], suite.upsilon)

    @property
    def H(self):
        return self.worst_mean.shape[0]

    @property
    def p(self):
        return self.worst_mean.shape[1]

    def interpolate(self, c):
        """Mean and variance, each (H, p), at quality levels c (length H)."""
        c = np.asarray(c, dtype=float).reshape(-1, 1)
        mean = (1.0 - c) * self.worst_mean + c * self.best_mean
        var = (1.0 - c) * self.worst_var + c * self.best_var
        return mean, var


def continuous_objective(Psi, cs, alpha, beta, c):
    """Expected objective at quality levels c, straight from the interpolated moments."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != cs.H:
        raise DimensionMismatch(f"c has {c.shape[0]} entries, expected {cs.H}")
    mean, var = cs.interpolate(c)
    m = mean.reshape(-1)
    return float(alpha * (m @ Psi @ m) + alpha * np.diag(Psi) @ var.reshape(-1)
                 + beta * cs.upsilon * c.sum())


def duplicate(c, p):
    """Expand an H-vector to the duplicated pH-vector c'."""
    return np.repeat(np.asarray(c, dtype=float).reshape(-1), p)


def duplication_indices(t, p):
    return list(range(p * t, p * t + p))


@dataclass(frozen=True, eq=False)
class CanonicalQP:
    H: int
    p: int
    alpha: float
    beta: float
    Psi: np.ndarray
    Phi: np.ndarray
    PsiPrime: np.ndarray
    Lvec: np.ndarray
    Rvec: np.ndarray
    ImRow: np.ndarray
    Kconst: float
    K2const: float

    @property
    def linear(self):
        return self.Lvec + self.Rvec + self.beta * self.ImRow

    @property
    def constant(self):
        return self.Kconst + self.K2const

    def value(self, c_prime):
        x = np.asarray(c_prime, dtype=float).reshape(-1)
        return float(x @ self.PsiPrime @ x + self.linear @ x + self.constant)

    def value_at(self, c):
        return self.value(duplicate(c, self.p))

    def reduced(self):
        """(Q, g) with value_at(c) = c'Qc + g'c + constant."""
        D = np.kron(np.eye(self.H), np.ones((self.p, 1)))
        Q = D.T @ self.PsiPrime @ D
        return 0.5 * (Q + Q.T), D.T @ self.linear


def build_canonical(bm, cs, alpha, beta):
    if cs.H != bm.H or cs.p != bm.p:
        raise DimensionMismatch(f"continuous suite covers H={cs.H}, p={cs.p}; "
                                f"expected H={bm.H}, p={bm.p}")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    Psi = np.asarray(bm.Psi, dtype=float)
    g0 = cs.worst_mean.reshape(-1)
    g1 = cs.best_mean.reshape(-1)
    v0 = cs.worst_var.reshape(-1)
    v1 = cs.best_var.reshape(-1)
    d = g1 - g0
    Phi = np.outer(d, d)
    PsiPrime = alpha * Phi * Psi
    PsiPrime = 0.5 * (PsiPrime + PsiPrime.T)
    diag = np.diag(Psi)
    n = Psi.shape[0]
    return CanonicalQP(
        H=bm.H, p=bm.p, alpha=float(alpha), beta=float(beta), Psi=Psi, Phi=Phi,
        PsiPrime=PsiPrime,
        Lvec=2.0 * alpha * d * (Psi @ g0),
        Rvec=alpha * diag * (v1 - v0),
        ImRow=np.full(n, cs.upsilon / bm.p),
        Kconst=float(alpha * g0 @ Psi @ g0),
        K2const=float(alpha * diag @ v0))


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    Phi: np.ndarray
    epsilon_tilde: float
    lhs: float
    rhs: float
    holds: bool
    psi_prime_min_eig: float
    kappa: float

    def summary(self):
        return {"epsilon_tilde": self.epsilon_tilde, "lhs": self.lhs, "rhs": self.rhs,
                "holds": self.holds, "kappa": self.kappa,
                "psi_prime_min_eig": self.psi_prime_min_eig}


def default_epsilon(Phi):
    scale = float(np.mean(np.abs(Phi)))
    return 1e-6 * scale if scale > 0 else 1e-6


def check_assumption(qp, epsilon_tilde=None):
    """Perturbation test: split Phi into a well-conditioned part plus a remainder.

    ``Phi_c = eps I + delta 11'`` (delta the mean entry of Phi) and
    ``Phi_delta = Phi - Phi_c``; the condition is
    ``||Phi_delta|| / ||Phi_c|| <= 1 / kappa(Phi_c)``.  Equality is accepted up
    to a relative rounding slack of 1e-9.
    """
    Phi = qp.Phi
    eps = default_epsilon(Phi) if epsilon_tilde is None else float(epsilon_tilde)
    if not eps > 0:
        raise ValueError("epsilon_tilde must be positive")
    n = Phi.shape[0]
    delta = float(np.mean(Phi))
    Phi_c = eps * np.eye(n) + delta
    Phi_d = Phi - Phi_c
    # Phi_c has eigenvalue eps + n*delta on the ones vector and eps elsewhere
    eig_c = np.array([eps, eps + n * delta]) if n > 1 else np.array([eps + delta])
    small, large = np.min(np.abs(eig_c)), np.max(np.abs(eig_c))
    if small == 0.0 or large / small > SINGULAR_COND:
        raise SingularPhiC(f"Phi_c is numerically singular at epsilon_tilde={eps:g}")
    kappa = float(large / small)
    lhs = float(np.linalg.norm(Phi_d, 2) / large)
    rhs = 1.0 / kappa
    min_eig = psd_check(qp.PsiPrime).min_eigenvalue
    return AssumptionReport(Phi=Phi, epsilon_tilde=eps, lhs=lhs, rhs=rhs,
                            holds=bool(lhs <= rhs * (1.0 + 1e-9)),
                            psi_prime_min_eig=min_eig, kappa=kappa)


@dataclass(frozen=True, eq=False)
class QPResult:
    c: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int


def kkt_residual(Q, g, c):
    grad = 2.0 * Q @ c + g
    return float(np.linalg.norm(c - np.clip(c - grad, 0.0, 1.0)))


def _arc_search(f, c, fc, grad, direction, step, tries):
    """Backtrack along the projection arc; returns (point, value) or None."""
    for _ in range(tries):
        trial = np.clip(c + step * direction, 0.0, 1.0)
        ft = f(trial)
        if ft <= fc - 1e-4 * grad @ (c - trial) and ft <= fc:
            return trial, ft
        step *= 0.5
    return None


def solve_qp(qp, tol=1e-8, max_iter=10000):
    """Projected Newton on the box, paired with a Barzilai-Borwein gradient step.

    Each iteration tries both candidates and keeps the lower one.  The Newton
    system on the free variables is lightly regularized so directions in the
    null space of a singular Hessian run to the box boundary instead of
    vanishing.
    """
    rep = psd_check(qp.PsiPrime)
    if not rep.is_psd:
        try:
            report = check_assumption(qp)
        except SingularPhiC:
            report = None
        raise NotConvex(f"Psi' has eigenvalue {rep.min_eigenvalue:.3g}", report)
    Q, g = qp.reduced()
    H = qp.H

    def f(c):
        return float(c @ Q @ c + g @ c)

    hess_norm = 2.0 * float(np.linalg.norm(Q, 2))
    mu = 1e-10 * max(1.0, hess_norm)
    bb_step = 1.0 / max(hess_norm, 1e-12)
    c = np.full(H, 0.5)
    fc = f(c)
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * Q @ c + g
        res = float(np.linalg.norm(c - np.clip(c - grad, 0.0, 1.0)))
        if res <= tol:
            break
        candidates = []
        free = ~(((c <= 0.0) & (grad > 0)) | ((c >= 1.0) & (grad < 0)))
        if np.any(free):
            direction = np.zeros(H)
            Qf = 2.0 * Q[np.ix_(free, free)] + mu * np.eye(int(free.sum()))
            direction[free] = -np.linalg.solve(Qf, grad[free])
            found = _arc_search(f, c, fc, grad, direction, 1.0, 40)
            if found is not None:
                candidates.append(found)
        found = _arc_search(f, c, fc, grad, -grad, bb_step, 60)
        if found is not None:
            s_vec = found[0] - c
            y_vec = 2.0 * Q @ s_vec
            sy = float(s_vec @ y_vec)
            bb_step = float(s_vec @ s_vec) / sy if sy > 0 else 1.0 / max(hess_norm, 1e-12)
            candidates.append(found)
        if not candidates:
            break
        c, fc = min(candidates, key=lambda cand: cand[1])
    if res > tol:
        raise ConvergenceFailure(f"box QP stopped with KKT residual {res:.3g}")
    # polish: exact minimizer on the final face, kept only if it is at least as good
    free = (c > 0.0) & (c < 1.0)
    if np.any(free):
        grad = 2.0 * Q @ c + g
        trial = c.copy()
        trial[free] -= np.linalg.lstsq(2.0 * Q[np.ix_(free, free)], grad[free], rcond=None)[0]
        if np.all((trial >= 0.0) & (trial <= 1.0)):
            r_trial = kkt_residual(Q, g, trial)
            if r_trial <= res and f(trial) <= fc:
                c, res = trial, r_trial
    return QPResult(c=c, objective=qp.value_at(c), kkt_residual=res, iterations=it)


def round_to_discrete(c):
    c = np.asarray(c, dtype=float).reshape(-1)
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("quality levels must lie in [0, 1]")
    return (c > 0.5).astype(np.int64)


# ---------------------------------------------------------------- SDP export

@dataclass(frozen=True, eq=False)
class SDPBlock:
    """LMI block ``[[I_k, M x], [(M x)', const + lin . x + theta_coef * theta]] >= 0``.

    With k = 0 the block is the scalar ``const + lin . x + theta_coef * theta``.
    """
    kind: str
    t: int
    r: int
    M: np.ndarray          # (k, n)
    const: float
    lin: np.ndarray        # (n,)
    theta_coef: float

    def matrix(self, x, theta):
        x = np.asarray(x, dtype=float).reshape(-1)
        k = self.M.shape[0]
        corner = self.const + float(self.lin @ x) + self.theta_coef * theta
        B = np.empty((k + 1, k + 1))
        B[:k, :k] = np.eye(k)
        Mx = self.M @ x
        B[:k, k] = Mx
        B[k, :k] = Mx
        B[k, k] = corner
        return B


def expected_block_count(H, p):
    return 2 * H * (p - 1) + 2 * H + 1


def psd_factor(PsiPrime):
    """M with M'M = Psi'; eigenvalues down to -1e-12 * max(1, ||Psi'||) are clipped."""
    lam, U = np.linalg.eigh(0.5 * (PsiPrime + PsiPrime.T))
    scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
    if lam.size and lam[0] < -1e-12 * scale:
        raise NotConvex(f"Psi' has eigenvalue {lam[0]:.3g}; cannot factor")
    return (U * np.sqrt(np.maximum(lam, 0.0))).T


def export_sdp(qp):
    n = qp.H * qp.p
    p = qp.p
    empty = np.zeros((0, n))
    blocks = []
    for t in range(qp.H):
        for r in range(1, p):
            w = np.zeros(n)
            w[p * t] = 1.0
            w[p * t + r] = -1.0
            blocks.append(SDPBlock("dup_pos", t, r, empty, 0.0, -w, 0.0))
            blocks.append(SDPBlock("dup_neg", t, r, empty, 0.0, w.copy(), 0.0))
    for t in range(qp.H):
        e = np.zeros(n)
        e[p * t] = 1.0
        blocks.append(SDPBlock("box_upper", t, 0, empty, 1.0, -e, 0.0))
        blocks.append(SDPBlock("box_lower", t, 0, empty, 0.0, e.copy(), 0.0))
    blocks.append(SDPBlock("schur", -1, -1, psd_factor(qp.PsiPrime), -qp.constant,
                           -qp.linear, 1.0))
    return blocks


def _fmt(values):
    return " ".join("%.17g" % v for v in np.asarray(values, dtype=float).reshape(-1))


def format_sdp(blocks):
    """Plain-text form; see the README for the grammar."""
    n = blocks[0].lin.shape[0] if blocks else 0
    lines = ["percsel-sdp 1", f"variables {n}", f"blocks {len(blocks)}"]
    for b in blocks:
        lines.append(f"block {b.kind} {b.t} {b.r} {b.M.shape[0]}")
        lines.append(f"const {_fmt([b.const])}")
        lines.append(f"theta {_fmt([b.theta_coef])}")
        lines.append(f"lin {_fmt(b.lin)}")
        for row in b.M:
            lines.append(f"M {_fmt(row)}")
        lines.append("end")
    return "\n".join(lines) + "\n"


def parse_sdp(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "percsel-sdp 1":
        raise ValueError("not a percsel SDP file")
    n = int(lines[1].split()[1])
    count = int(lines[2].split()[1])
    blocks = []
    i = 3
    for _ in range(count):
        head = lines[i].split()
        if head[0] != "block":
            raise ValueError(f"expected 'block' on line {i + 1}")
        kind, t, r, k = head[1], int(head[2]), int(head[3]), int(head[4])
        const = float(lines[i + 1].split()[1])
        theta = float(lines[i + 2].split()[1])
        lin = np.array([float(v) for v in lines[i + 3].split()[1:]])
        rows = [[float(v) for v in lines[i + 4 + j].split()[1:]] for j in range(k)]
        M = np.array(rows, dtype=float).reshape(k, n)
        if lines[i + 4 + k] != "end" or lin.shape[0] != n:
            raise ValueError(f"malformed block starting on line {i + 1}")
        blocks.append(SDPBlock(kind, t, r, M, const, lin, theta))
        i += 5 + k
    return blocks


def write_sdp(blocks, path):
    with open(path, "w") as fh:
        fh.write(format_sdp(blocks))


def read_sdp(path):
    with open(path) as fh:
        return parse_sdp(fh.read())


def verify_sdp(blocks, c_prime, theta, tol=1e-8):
    """Minimum eigenvalue per block at (c', theta); ok iff >= -tol * max(1, ||B||)."""
    out = []
    for b in blocks:
        B = b.matrix(c_prime, theta)
        lam = np.linalg.eigvalsh(B)
        scale = max(1.0, float(np.max(np.abs(lam))))
        out.append((b.kind, b.t, b.r, float(lam[0]), bool(lam[0] >= -tol * scale)))
    return out
