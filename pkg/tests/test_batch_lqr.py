import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percsel.batch_lqr import (CostSpec, Dynamics, batch_cost, build_batch, control_cost,
                               cost_gap, optimal_controls, psd_check, rollout, simulated_gap)
from percsel.errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric
from percsel.instances import random_instance


def scalar():
    dyn = Dynamics([[1.0]], [[1.0]], [[1.0]])
    cost = CostSpec([[0.0]], [[1.0]], [[1.0]])
    return dyn, cost, build_batch(dyn, cost, 1)


def test_scalar_hand_values():
    dyn, cost, bm = scalar()
    # cost u^2 + (x0 + u + s)^2: K = 2, L = 1
    assert bm.K[0, 0] == pytest.approx(2.0)
    assert bm.Psi[0, 0] == pytest.approx(0.5)
    u = optimal_controls(bm, [1.0], [0.0])
    assert u[0] == pytest.approx(-0.5)
    J = control_cost(rollout(dyn, u, [1.0], [0.0]), u, cost)
    assert J == pytest.approx(0.5)
    assert cost_gap(bm, [2.0], [0.0]) == pytest.approx(2.0)
    assert simulated_gap(dyn, cost, bm, [2.0], [0.0], [3.0]) == pytest.approx(2.0)


def test_no_perception_coupling_gives_zero_psi():
    bm = build_batch(Dynamics(np.eye(2), [[1.0], [0.0]], np.zeros((2, 1))),
                     CostSpec(np.eye(2), [[1.0]], np.eye(2)), 4)
    assert np.all(bm.Psi == 0)


def test_optimal_controls_minimize_a_fitted_quadratic(rng):
    # oracle: the batch cost is quadratic in u; recover its minimizer from samples
    dyn, cost, H, bm = random_instance(rng, max_dim=2, max_H=3)
    s, x0 = rng.normal(size=bm.p * H), rng.normal(size=bm.n)
    d = bm.m * H
    U = rng.normal(size=(3 * (d + 1) ** 2, d))
    J = np.array([control_cost(rollout(dyn, u, s, x0), u, cost) for u in U])
    iu = np.triu_indices(d)
    feats = np.hstack([(U[:, :, None] * U[:, None, :])[:, iu[0], iu[1]], U, np.ones((len(U), 1))])
    coef = np.linalg.lstsq(feats, J, rcond=None)[0]
    Qm = np.zeros((d, d))
    Qm[iu] = coef[:len(iu[0])]
    Qm = 0.5 * (Qm + Qm.T)
    g = coef[len(iu[0]):len(iu[0]) + d]
    u_fit = np.linalg.solve(2 * Qm, -g)
    np.testing.assert_allclose(optimal_controls(bm, s, x0), u_fit, rtol=1e-6, atol=1e-6)


def test_batch_cost_matches_rollout(rng):
    for _ in range(20):
        dyn, cost, H, bm = random_instance(rng)
        u, s, x0 = rng.normal(size=bm.m * H), rng.normal(size=bm.p * H), rng.normal(size=bm.n)
        ref = control_cost(rollout(dyn, u, s, x0), u, cost)
        assert batch_cost(bm, u, s, x0) == pytest.approx(ref, rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_gap_identity_property(seed):
    rng = np.random.default_rng(seed)
    dyn, cost, H, bm = random_instance(rng)
    s = rng.normal(size=bm.p * H)
    s_hat = s + rng.normal(size=bm.p * H)
    gap = cost_gap(bm, s_hat, s)
    assert gap >= -1e-12
    assert abs(gap - simulated_gap(dyn, cost, bm, s_hat, s, rng.normal(size=bm.n))) \
        <= 1e-8 * (1 + gap)


def test_validation_errors():
    with pytest.raises(DimensionMismatch):
        Dynamics(np.eye(2), np.ones((3, 1)), np.ones((2, 1)))
    with pytest.raises(NotSymmetric):
        CostSpec([[1.0, 2.0], [0.0, 1.0]], [[1.0]], np.eye(2))
    with pytest.raises(NotPositiveDefinite):
        CostSpec(np.eye(1), [[0.0]], np.eye(1))
    with pytest.raises(NotPositiveDefinite):
        CostSpec([[-1.0]], [[1.0]], [[1.0]])
    dyn, cost, _ = scalar()
    with pytest.raises(DimensionMismatch):
        build_batch(dyn, cost, 0)
    with pytest.raises(DimensionMismatch):
        build_batch(dyn, CostSpec(np.eye(2), [[1.0]], np.eye(2)), 3)


def test_psd_check():
    assert psd_check(np.diag([1.0, 0.0])).is_psd
    rep = psd_check(np.diag([1.0, -0.1]))
    assert not rep.is_psd and rep.min_eigenvalue == pytest.approx(-0.1)
    with pytest.raises(NotSymmetric):
        psd_check(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_matrices_are_read_only():
    _, _, bm = scalar()
    with pytest.raises(ValueError):
        bm.Psi[0, 0] = 1.0
