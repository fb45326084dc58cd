import numpy as np
import pytest

from percsel.errors import IndexOutOfRange
from percsel.perception import (ErrorModel, PerceptionSuite, model_cost, moments,
                                sample_realized, sample_realized_batch, validate_suite)


def suite3(H=4):
    return PerceptionSuite.constant(0.5, [ErrorModel.normal([1.0, -1.0], [4.0, 1.0]),
                                          ErrorModel.uniform([-1.0, 0.0], [1.0, 3.0]),
                                          ErrorModel.empirical([[0.0, 1.0], [2.0, 3.0]])], H)


def test_family_moments():
    m = ErrorModel.uniform([0.0], [6.0])
    assert m.mean[0] == 3.0 and m.variance[0] == pytest.approx(3.0)
    e = ErrorModel.empirical([[1.0], [3.0]])
    assert e.mean[0] == 2.0 and e.variance[0] == 1.0
    d = ErrorModel.degenerate([2.5, -1.0])
    assert np.all(d.variance == 0) and d.p == 2


def test_cost_and_moments_lookup():
    s = suite3()
    assert model_cost(s, 2) == 1.0
    mean, var = moments(s, 0, 3)
    np.testing.assert_array_equal(mean, [1.0, -1.0])
    np.testing.assert_array_equal(var, [4.0, 1.0])
    with pytest.raises(IndexOutOfRange):
        model_cost(s, 3)
    with pytest.raises(IndexOutOfRange):
        moments(s, 0, 4)


@pytest.mark.parametrize("model, field", [
    (ErrorModel.normal([0.0], [-1.0]), "variance"),
    (ErrorModel.uniform([1.0], [0.0]), "uniform"),
    (ErrorModel.normal([np.nan], [1.0]), "mean"),
])
def test_validate_flags_bad_parameters(model, field):
    bad = PerceptionSuite.constant(1.0, [ErrorModel.normal([0.0], [1.0]), model], 2)
    found = validate_suite(bad)
    assert found and any(v.w == 1 and field in v.field for v in found)


def test_validate_flags_shape_and_upsilon():
    ragged = PerceptionSuite(1.0, ((ErrorModel.normal([0.0], [1.0]),) * 2,
                                   (ErrorModel.normal([0.0, 0.0], [1.0, 1.0]),) * 2))
    assert validate_suite(ragged)
    assert validate_suite(PerceptionSuite.constant(0.0, [ErrorModel.normal([0.0], [1.0])], 2))
    assert validate_suite(suite3()) == []


def test_sampling_matches_moments():
    s = suite3(H=3)
    draws = sample_realized_batch(s, 7, 40000)
    assert draws.shape == (40000, 3, 3, 2)
    mean, var = s.moment_arrays()
    se = np.sqrt(var / 40000)
    assert np.all(np.abs(draws.mean(axis=0) - mean) <= 5 * se + 1e-12)
    np.testing.assert_allclose(draws.var(axis=0), var, rtol=0.05, atol=1e-12)


def test_empirical_coordinates_are_independent():
    m = ErrorModel.empirical([[0.0, 0.0], [1.0, 1.0]])
    x = m.sample(np.random.default_rng(0), 20000)
    assert abs(np.corrcoef(x.T)[0, 1]) < 0.05


def test_sampling_is_seeded():
    s = suite3()
    a = sample_realized(s, 3).errors
    np.testing.assert_array_equal(a, sample_realized(s, 3).errors)
    assert not np.array_equal(a, sample_realized(s, 4).errors)
