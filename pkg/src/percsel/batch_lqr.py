"""Stacked finite-horizon LQR and the perception sensitivity matrix.

The dynamics ``x[t+1] = A x[t] + B u[t] + C s[t]`` are unrolled over the
horizon so that the stacked state ``X = [x0; ...; xH]`` is

    X = F x0 + G u + Hs s

The batch control cost is ``X' Qbar X + u' Rbar u`` with ``Qbar`` holding
``Q`` for the first H states and ``Qf`` for the last one.  Minimizing over
``u`` with the controller fed a perception estimate ``s_hat`` gives

    u*(s_hat) = -K^{-1} (G' Qbar F x0 + L s_hat)
    K = G' Qbar G + Rbar,   L = G' Qbar Hs

and the excess cost of planning with ``s_hat`` instead of the true ``s`` is
``(s_hat - s)' Psi (s_hat - s)`` with ``Psi = L' K^{-1} L``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric


def _as_matrix(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DimensionMismatch(f"{name} contains NaN or Inf")
    return M


@dataclass(frozen=True, eq=False)
class Dynamics:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[0] != n:
            raise DimensionMismatch(
                f"B {B.shape} and C {C.shape} must have {n} rows to match A")
        for name, M in (("A", A), ("B", B), ("C", C)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[1]


def _check_symmetric(M, name, rtol=1e-12):
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric")


def _check_psd(M, name, rtol=1e-10):
    lam = np.linalg.eigvalsh(M)
    if lam[0] < -rtol * max(np.linalg.norm(M, 2), 1e-300):
        raise NotPositiveDefinite(f"{name} is not positive semidefinite "
                                  f"(min eigenvalue {lam[0]:.3g})")


@dataclass(frozen=True, eq=False)
class CostSpec:
    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        Qf = _as_matrix(self.Qf, "Qf")
        if Q.shape[0] != Q.shape[1] or Qf.shape != Q.shape or R.shape[0] != R.shape[1]:
            raise DimensionMismatch("Q, Qf must be n x n and R must be m x m")
        for name, M in (("Q", Q), ("R", R), ("Qf", Qf)):
            _check_symmetric(M, name)
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("R must be positive definite") from None
        _check_psd(Q, "Q")
        _check_psd(Qf, "Qf")
        for name, M in (("Q", Q), ("R", R), ("Qf", Qf)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    def check_against(self, dyn):
        if self.Q.shape[0] != dyn.n or self.R.shape[0] != dyn.m:
            raise DimensionMismatch(
                f"cost sizes Q {self.Q.shape}, R {self.R.shape} do not match "
                f"dynamics n={dyn.n}, m={dyn.m}")


@dataclass(frozen=True, eq=False)
class BatchMatrices:
    H: int
    n: int
    m: int
    p: int
    F: np.ndarray
    G: np.ndarray
    Hs: np.ndarray
    Qbar: np.ndarray
    Rbar: np.ndarray
    K: np.ndarray
    L: np.ndarray
    Psi: np.ndarray
    # G' Qbar F, needed for the x0 feedforward term of the optimal inputs
    GQF: np.ndarray = field(repr=False)
    K_chol: tuple = field(repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray   # (H+1, n)
    inputs: np.ndarray   # (H, m)


@dataclass(frozen=True, eq=False)
class PSDReport:
    min_eigenvalue: float
    is_psd: bool


def stack_maps(dyn, H):
    """Return F, G, Hs such that the stacked states are F x0 + G u + Hs s."""
    n, m, p = dyn.n, dyn.m, dyn.p
    F = np.zeros((n * (H + 1), n))
    G = np.zeros((n * (H + 1), m * H))
    Hs = np.zeros((n * (H + 1), p * H))
    powers = [np.eye(n)]
    for _ in range(H):
        powers.append(dyn.A @ powers[-1])
    for k in range(H + 1):
        F[k * n:(k + 1) * n] = powers[k]
        for j in range(k):
            Ak = powers[k - 1 - j]
            G[k * n:(k + 1) * n, j * m:(j + 1) * m] = Ak @ dyn.B
            Hs[k * n:(k + 1) * n, j * p:(j + 1) * p] = Ak @ dyn.C
    return F, G, Hs


def build_batch(dyn, cost, H):
    if int(H) != H or H < 1:
        raise DimensionMismatch(f"horizon must be a positive integer, got {H}")
    H = int(H)
    cost.check_against(dyn)
    F, G, Hs = stack_maps(dyn, H)
    Qbar = sla.block_diag(*([cost.Q] * H + [cost.Qf]))
    Rbar = sla.block_diag(*([cost.R] * H))
    QG = Qbar @ G
    K = G.T @ QG + Rbar
    K = 0.5 * (K + K.T)
    L = QG.T @ Hs
    GQF = QG.T @ F
    try:
        K_chol = sla.cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("K = G'QG + R is not positive definite") from None
    Psi = L.T @ sla.cho_solve(K_chol, L, check_finite=False)
    Psi = 0.5 * (Psi + Psi.T)
    for M in (F, G, Hs, Qbar, Rbar, K, L, Psi, GQF):
        M.setflags(write=False)
    return BatchMatrices(H=H, n=dyn.n, m=dyn.m, p=dyn.p, F=F, G=G, Hs=Hs,
                         Qbar=Qbar, Rbar=Rbar, K=K, L=L, Psi=Psi, GQF=GQF,
                         K_chol=K_chol)


def _vec(x, size, name):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != size:
        raise DimensionMismatch(f"{name} has length {x.shape[0]}, expected {size}")
    return x


def optimal_controls(bm, s, x0):
    """Batch-optimal inputs when the controller believes perception ``s``."""
    s = _vec(s, bm.p * bm.H, "s")
    x0 = _vec(x0, bm.n, "x0")
    rhs = bm.GQF @ x0 + bm.L @ s
    return -sla.cho_solve(bm.K_chol, rhs, check_finite=False)


def rollout(dyn, u, s, x0):
    """Simulate the recursion step by step (independent of the stacked maps)."""
    n, m, p = dyn.n, dyn.m, dyn.p
    u = np.asarray(u, dtype=float).reshape(-1)
    s = np.asarray(s, dtype=float).reshape(-1)
    if u.shape[0] % m:
        raise DimensionMismatch("input vector length is not a multiple of m")
    H = u.shape[0] // m
    if s.shape[0] != p * H:
        raise DimensionMismatch(f"perception vector has length {s.shape[0]}, expected {p * H}")
    x = _vec(x0, n, "x0").copy()
    U = u.reshape(H, m)
    S = s.reshape(H, p)
    states = np.empty((H + 1, n))
    states[0] = x
    for t in range(H):
        x = dyn.A @ x + dyn.B @ U[t] + dyn.C @ S[t]
        states[t + 1] = x
    return Trajectory(states=states, inputs=U.copy())


def control_cost(traj, u, cost):
    U = np.asarray(u, dtype=float)
    X = traj.states
    H = X.shape[0] - 1
    U = U.reshape(H, -1) if U.size else U
    if U.shape[0] != H or U.shape[1] != cost.R.shape[0] or X.shape[1] != cost.Q.shape[0]:
        raise DimensionMismatch("trajectory, inputs and cost sizes are inconsistent")
    J = 0.0
    for t in range(H):
        J += X[t] @ cost.Q @ X[t] + U[t] @ cost.R @ U[t]
    J += X[H] @ cost.Qf @ X[H]
    return float(J)


def batch_cost(bm, u, s, x0):
    """Same cost as :func:`control_cost`, evaluated through the stacked maps."""
    X = bm.F @ _vec(x0, bm.n, "x0") + bm.G @ _vec(u, bm.m * bm.H, "u") \
        + bm.Hs @ _vec(s, bm.p * bm.H, "s")
    u = np.asarray(u, dtype=float).reshape(-1)
    return float(X @ bm.Qbar @ X + u @ bm.Rbar @ u)


def cost_gap(bm, s_hat, s):
    d = _vec(s_hat, bm.p * bm.H, "s_hat") - _vec(s, bm.p * bm.H, "s")
    return float(d @ bm.Psi @ d)


def simulated_gap(dyn, cost, bm, s_hat, s, x0):
    """Excess cost measured by simulation: J(u*(s_hat)) - J(u*(s)), both under true s."""
    u_hat = optimal_controls(bm, s_hat, x0)
    u_star = optimal_controls(bm, s, x0)
    J_hat = control_cost(rollout(dyn, u_hat, s, x0), u_hat, cost)
    J_star = control_cost(rollout(dyn, u_star, s, x0), u_star, cost)
    return J_hat - J_star


def psd_check(M, tol=1e-9):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-10")
    if M.size == 0:
        return PSDReport(min_eigenvalue=0.0, is_psd=True)
    lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    norm2 = float(np.linalg.norm(M, 2))
    return PSDReport(min_eigenvalue=lam_min, is_psd=lam_min >= -tol * max(1.0, norm2))
