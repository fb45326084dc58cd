import json

import numpy as np
import pytest

from percsel.evaluation import (Policy, landing_scenario, monte_carlo, pareto_csv_text,
                                pareto_sweep, policy_sequence, run_policy, score)
from percsel.perception import ErrorModel, PerceptionSuite
from percsel.scenario import parse_scenario
from percsel.verify import pareto_instance, pareto_violations


def test_policy_sequences():
    assert list(policy_sequence(Policy.all_small(), 4, 3)) == [0, 0, 0]
    assert list(policy_sequence(Policy.all_large(), 4, 3)) == [3, 3, 3]
    a = policy_sequence(Policy.random(5), 4, 50)
    np.testing.assert_array_equal(a, policy_sequence(Policy.random(5), 4, 50))
    assert a.min() >= 0 and a.max() <= 3 and len(set(a)) > 1
    with pytest.raises(ValueError):
        policy_sequence(Policy.optimal([0, 9, 0]), 4, 3)


def test_degenerate_suite_rewards(tiny_path):
    sc = parse_scenario(tiny_path)
    bm = sc.batch()
    errors = np.array([[[2.0]], [[0.0]]])
    small = run_policy(Policy.all_small(), bm, sc.suite, errors, 1.0, 1.0)
    large = run_policy(Policy.all_large(), bm, sc.suite, errors, 1.0, 1.0)
    assert (small.control_gap, small.perception_cost, small.reward) == \
        pytest.approx((2.0, 0.0, -2.0))
    assert (large.control_gap, large.perception_cost, large.reward) == \
        pytest.approx((0.0, 1.0, -1.0))
    oracle = run_policy(Policy.oracle(), bm, sc.suite, errors, 1.0, 1.0)
    assert list(oracle.sequence) == [1] and oracle.reward == pytest.approx(-1.0)


def test_oracle_never_loses_within_a_trial(tiny_path):
    sc = parse_scenario(tiny_path)
    sc = sc.with_weights(1.0, 0.3)
    rep = monte_carlo(sc, n_trials=6, master_seed=3)
    for k in range(6):
        rows = {r.policy: r.reward for r in rep.trials if r.trial == k}
        assert rows["Oracle"] >= max(rows.values()) - 1e-9


def test_reports_are_deterministic(tiny_path):
    sc = parse_scenario(tiny_path)
    a, b = (monte_carlo(sc, n_trials=5, master_seed=9) for _ in range(2))
    assert a.csv_text() == b.csv_text() and a.json_text() == b.json_text()
    assert a.csv_text().splitlines()[0] == "trial,policy,control_gap,perception_cost,reward"
    summary = json.loads(a.json_text())
    assert set(summary["policies"]) == {"AllSmall", "AllLarge", "Random", "Optimal", "Oracle"}
    assert "Optimal-AllSmall" in summary["comparisons"]
    c = monte_carlo(sc, n_trials=5, master_seed=10)
    assert c.csv_text() != a.csv_text() or sc.suite.models[0][0].family == "degenerate"


def test_score_matches_quadratic_form():
    sc = landing_scenario()
    bm = sc.batch()
    rng = np.random.default_rng(0)
    errors = rng.normal(size=(sc.suite.W, bm.H, bm.p))
    seq = rng.integers(0, sc.suite.W, size=bm.H)
    gap, per, reward = score(bm, errors, sc.upsilon, sc.alpha, sc.beta, seq)
    e = errors[seq, np.arange(bm.H), 0]
    assert gap == pytest.approx(e @ bm.Psi @ e)
    assert per == sc.upsilon * seq.sum()
    assert reward == pytest.approx(-(sc.alpha * gap + sc.beta * per))


def test_pareto_sweep_monotone():
    sc = pareto_instance(np.random.default_rng(4))
    grid = [0.1, 1.0, 10.0]
    pts = pareto_sweep(sc, [(a, b) for a in grid for b in grid])
    assert pareto_violations(pts, grid, grid) == []
    assert pareto_csv_text(pts).count("\n") == 10
    with pytest.raises(ValueError):
        pareto_sweep(sc, [(0.0, 0.0)])


def test_equal_models_keep_the_cheap_one():
    from percsel.batch_lqr import CostSpec, Dynamics, build_batch
    from percsel import discrete
    bm = build_batch(Dynamics([[1.0]], [[1.0]], [[1.0]]), CostSpec([[1.0]], [[1.0]], [[1.0]]), 5)
    m = ErrorModel.normal([0.0], [1.0])
    suite = PerceptionSuite.constant(1.0, [m, m], 5)
    res = discrete.solve_bnb(discrete.encode(bm, suite, 1.0, 0.5, "expected"))
    assert list(res.sequence) == [0] * 5
