"""Perception model suites: per-(model, step) error distributions and costs.

Model ``w`` costs ``w * upsilon`` per invocation.  Each (model, step) pair
carries an :class:`ErrorModel` describing the distribution of the
perception error ``g(w, t) - s_t`` (a p-vector).  Errors of different
(model, step) pairs are sampled independently.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, UnsupportedFamily

FAMILIES = ("normal", "uniform", "empirical", "degenerate")


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """Error distribution of one model at one step.

    Build instances with the family constructors (:meth:`normal`,
    :meth:`uniform`, :meth:`empirical`, :meth:`degenerate`).  Construction
    never rejects bad parameters; :func:`validate_suite` reports them.
    """
    family: str
    mean: np.ndarray
    variance: np.ndarray
    params: dict = field(default_factory=dict)

    @classmethod
    def normal(cls, mean, variance):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        variance = np.atleast_1d(np.asarray(variance, dtype=float))
        return cls("normal", mean, variance, {"mean": mean, "variance": variance})

    @classmethod
    def uniform(cls, low, high):
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        return cls("uniform", 0.5 * (low + high), (high - low) ** 2 / 12.0,
                   {"low": low, "high": high})

    @classmethod
    def empirical(cls, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        # resampling reproduces the population (ddof=0) moments
        return cls("empirical", samples.mean(axis=0), samples.var(axis=0),
                   {"samples": samples})

    @classmethod
    def degenerate(cls, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls("degenerate", value, np.zeros_like(value), {"value": value})

    @property
    def p(self):
        return self.mean.shape[0]

    def sample(self, rng, size):
        """Draw ``size`` error vectors, shape (size, p)."""
        p = self.p
        if self.family == "normal":
            return rng.normal(self.mean, np.sqrt(np.maximum(self.variance, 0.0)), size=(size, p))
        if self.family == "uniform":
            return rng.uniform(self.params["low"], self.params["high"], size=(size, p))
        if self.family == "empirical":
            # each coordinate is resampled from its own marginal, so the
            # coordinates are independent like every other family here
            samples = self.params["samples"]
            idx = rng.integers(0, samples.shape[0], size=(size, p))
            return np.take_along_axis(samples, idx, axis=0)
        if self.family == "degenerate":
            return np.broadcast_to(self.params["value"], (size, p)).copy()
        raise UnsupportedFamily(f"cannot sample from family {self.family!r}")


@dataclass(frozen=True, eq=False)
class PerceptionSuite:
    """W models over H steps.  ``models[w][t]`` is an :class:`ErrorModel`."""
    upsilon: float
    models: tuple

    @classmethod
    def constant(cls, upsilon, per_model, H):
        """Suite whose error model for each w is the same at every step."""
        return cls(float(upsilon), tuple(tuple([m] * H) for m in per_model))

    @property
    def W(self):
        return len(self.models)

    @property
    def H(self):
        return len(self.models[0]) if self.models else 0

    @property
    def p(self):
        return self.models[0][0].p

    def moment_arrays(self):
        """Means and variances as (W, H, p) arrays."""
        mean = np.array([[m.mean for m in row] for row in self.models], dtype=float)
        var = np.array([[m.variance for m in row] for row in self.models], dtype=float)
        return mean, var


@dataclass(frozen=True, eq=False)
class RealizedErrors:
    """One concrete draw of every model's error: array of shape (W, H, p)."""
    errors: np.ndarray

    @property
    def shape(self):
        return self.errors.shape


@dataclass(frozen=True)
class Violation:
    w: object
    t: object
    field: str
    message: str

    def __str__(self):
        where = "suite" if self.w is None else f"(w={self.w}, t={self.t})"
        return f"{where} {self.field}: {self.message}"


def model_cost(suite, w):
    if not 0 <= w < suite.W or int(w) != w:
        raise IndexOutOfRange(f"model index {w} outside [0, {suite.W - 1}]")
    return w * suite.upsilon


def moments(suite, w, t):
    if not 0 <= w < suite.W:
        raise IndexOutOfRange(f"model index {w} outside [0, {suite.W - 1}]")
    if not 0 <= t < suite.H:
        raise IndexOutOfRange(f"step {t} outside [0, {suite.H - 1}]")
    m = suite.models[w][t]
    return m.mean.copy(), m.variance.copy()


def _groups(row):
    """Group step indices that share one ErrorModel object (preserving order)."""
    groups = {}
    for t, model in enumerate(row):
        groups.setdefault(id(model), (model, []))[1].append(t)
    return list(groups.values())


def sample_realized_batch(suite, seed, n):
    """``n`` independent draws, shape (n, W, H, p).  Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, suite.W, suite.H, suite.p))
    for w, row in enumerate(suite.models):
        for model, steps in _groups(row):
            if model.family not in FAMILIES:
                raise UnsupportedFamily(f"cannot sample from family {model.family!r}")
            draw = model.sample(rng, n * len(steps))
            out[:, w, steps, :] = draw.reshape(n, len(steps), suite.p)
    return out


def sample_realized(suite, seed):
    return RealizedErrors(sample_realized_batch(suite, seed, 1)[0])


def validate_suite(suite):
    out = []
    ups = suite.upsilon
    if not (np.isfinite(ups) and ups > 0):
        out.append(Violation(None, None, "upsilon", f"must be finite and > 0, got {ups}"))
    if suite.W < 1:
        out.append(Violation(None, None, "models", "at least one model is required"))
        return out
    H = len(suite.models[0])
    if H < 1:
        out.append(Violation(None, None, "models", "horizon must be at least 1"))
        return out
    p = suite.models[0][0].p
    for w, row in enumerate(suite.models):
        if len(row) != H:
            out.append(Violation(w, None, "models", f"has {len(row)} steps, expected {H}"))
            continue
        for t, m in enumerate(row):
            if m.family not in FAMILIES:
                out.append(Violation(w, t, "family", f"unsupported family {m.family!r}"))
            if m.mean.shape != (p,):
                out.append(Violation(w, t, "mean", f"expected {p} entries, got {m.mean.shape}"))
            elif not np.all(np.isfinite(m.mean)):
                out.append(Violation(w, t, "mean", "not finite"))
            if m.variance.shape != (p,):
                out.append(Violation(w, t, "variance", f"expected {p} entries"))
            elif not np.all(np.isfinite(m.variance)):
                out.append(Violation(w, t, "variance", "not finite"))
            elif np.any(m.variance < 0):
                out.append(Violation(w, t, "variance", f"negative entry {m.variance.min()}"))
            if m.family == "uniform" and np.any(m.params["high"] < m.params["low"]):
                out.append(Violation(w, t, "uniform", "high < low"))
            if m.family == "degenerate" and np.any(m.variance != 0):
                out.append(Violation(w, t, "variance", "degenerate model must have zero variance"))
            if m.family == "empirical" and m.params["samples"].shape[0] == 0:
                out.append(Violation(w, t, "samples", "empirical model without samples"))
    return out


def check_suite_shape(suite, H, p):
    if suite.H != H or suite.p != p:
        raise DimensionMismatch(
            f"suite covers H={suite.H}, p={suite.p}; expected H={H}, p={p}")
