"""Random problem instances for self-checks and tests."""
import numpy as np

from .batch_lqr import CostSpec, Dynamics, build_batch
from .continuous import ContinuousSuite
from .perception import ErrorModel, PerceptionSuite


def random_dynamics(rng, n, m, p, radius=None):
    A = rng.normal(size=(n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    if rho > 0:
        A *= (rng.uniform(0.5, 1.1) if radius is None else radius) / rho
    return Dynamics(A, rng.normal(size=(n, m)), rng.normal(size=(n, p)))


def random_cost(rng, n, m):
    def spd(k, floor):
        X = rng.normal(size=(k, k))
        return X @ X.T / k + floor * np.eye(k)
    Q = spd(n, 0.0) if rng.uniform() < 0.8 else np.zeros((n, n))
    return CostSpec(0.5 * (Q + Q.T), spd(m, 0.2), spd(n, 0.1))


def random_instance(rng, max_dim=4, max_H=10):
    n, m, p = (int(rng.integers(1, max_dim + 1)) for _ in range(3))
    H = int(rng.integers(1, max_H + 1))
    dyn = random_dynamics(rng, n, m, p)
    cost = random_cost(rng, n, m)
    return dyn, cost, H, build_batch(dyn, cost, H)


def random_model(rng, p, scale=1.0):
    kind = rng.integers(0, 4)
    if kind == 0:
        return ErrorModel.normal(rng.normal(size=p) * scale, rng.uniform(0, 1, size=p) * scale ** 2)
    if kind == 1:
        lo = rng.normal(size=p) * scale
        return ErrorModel.uniform(lo, lo + rng.uniform(0, 2, size=p) * scale)
    if kind == 2:
        return ErrorModel.empirical(rng.normal(size=(int(rng.integers(2, 12)), p)) * scale)
    return ErrorModel.degenerate(rng.normal(size=p) * scale)


def random_suite(rng, W, H, p, upsilon=None, time_varying=True):
    ups = float(rng.uniform(0.05, 2.0)) if upsilon is None else upsilon
    rows = []
    for w in range(W):
        scale = 2.0 / (1 + w)
        if time_varying:
            rows.append(tuple(random_model(rng, p, scale) for _ in range(H)))
        else:
            rows.append(tuple([random_model(rng, p, scale)] * H))
    return PerceptionSuite(ups, tuple(rows))


def small_selection_instance(rng, limit=10 ** 4):
    """(bm, suite, alpha, beta) with W^H <= limit."""
    while True:
        W = int(rng.integers(1, 5))
        H = int(rng.integers(1, 9))
        if W ** H <= limit:
            break
    n, m, p = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
    dyn = random_dynamics(rng, n, m, p)
    bm = build_batch(dyn, random_cost(rng, n, m), H)
    suite = random_suite(rng, W, H, p, time_varying=bool(rng.integers(0, 2)))
    alpha, beta = rng.uniform(0, 1, size=2)
    return bm, suite, float(alpha), float(beta)


def random_continuous_suite(rng, H, p):
    worst = rng.normal(size=(H, p)) * 2.0
    best = worst * rng.uniform(0, 0.5) + rng.normal(size=(H, p)) * 0.1
    return ContinuousSuite(worst, rng.uniform(0, 2, size=(H, p)), best,
                           rng.uniform(0, 0.2, size=(H, p)), float(rng.uniform(0.1, 2.0)))
