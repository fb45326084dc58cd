"""Scenario files: YAML documents describing one experiment.

Top-level keys::

    schema_version: 1
    name: <free text>                      (optional)
    dynamics: {A: [[..]], B: [[..]], C: [[..]]}
    cost: {Q: [[..]], R: [[..]], Qf: [[..]]}
    horizon: <int>
    x0: [..]                               (optional; only for raw-cost reporting)
    suite: {models: [<model>, ...]}        (or continuous_suite: {worst: <model>, best: <model>})
    weights: {alpha: <float>, beta: <float>}
    upsilon: <float>
    seeds: {master: <int>, realized: <int, optional>}
    solver: {gap_tol, node_limit, qp_tol, oracle_node_limit, oracle_gap_tol}   (optional)

A model is ``{family: normal, mean: [..], variance: [..]}``, ``{family:
uniform, low, high}``, ``{family: empirical, samples: [[..], ..]}`` or
``{family: degenerate, value: [..]}``, optionally with ``overrides``: a list of
models carrying ``start``/``stop`` (half-open step range) that replace the
base model on those steps.

Parsing keeps YAML node positions so structural problems are reported as
:class:`ParseError` with a line and column; semantic problems are collected
into one :class:`ValidationError`.
"""
import hashlib
from dataclasses import dataclass

import numpy as np
import yaml

from .batch_lqr import CostSpec, Dynamics, build_batch
from .continuous import ContinuousSuite
from .errors import ParseError, PercselError, ValidationError
from .perception import ErrorModel, PerceptionSuite, validate_suite

SCHEMA_VERSION = 1
SOLVER_DEFAULTS = {"gap_tol": 1e-10, "node_limit": 200000, "qp_tol": 1e-8,
                   "oracle_node_limit": 5000, "oracle_gap_tol": 1e-6}
FAMILY_PARAMS = {"normal": ("mean", "variance"), "uniform": ("low", "high"),
                 "empirical": ("samples",), "degenerate": ("value",)}
TOP_KEYS = ("schema_version", "name", "dynamics", "cost", "horizon", "x0", "suite",
            "continuous_suite", "weights", "upsilon", "seeds", "solver")


class _Doc:
    """Plain data converted from a YAML node tree plus the position of every path."""

    def __init__(self, text, source):
        self.source = source
        self.marks = {}
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            self.data = self._convert(loader, node, ()) if node is not None else None
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            raise ParseError(f"{source}: {exc.problem or exc}", mark.line + 1 if mark else None,
                             mark.column + 1 if mark else None) from None
        finally:
            loader.dispose()

    def _convert(self, loader, node, path):
        self.marks[path] = node.start_mark
        if isinstance(node, yaml.MappingNode):
            out = {}
            for knode, vnode in node.value:
                key = loader.construct_object(knode, deep=True)
                if key in out:
                    self.error(f"duplicate key {key!r}", path, knode.start_mark)
                out[key] = self._convert(loader, vnode, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(loader, v, path + (i,)) for i, v in enumerate(node.value)]
        return loader.construct_object(node, deep=True)

    def error(self, message, path, mark=None):
        mark = mark or self._closest(path)
        where = ".".join(str(p) for p in path) or "<document>"
        raise ParseError(f"{self.source}: {where}: {message}",
                         mark.line + 1 if mark else None, mark.column + 1 if mark else None)

    def _closest(self, path):
        while path and path not in self.marks:
            path = path[:-1]
        return self.marks.get(path)


def _number(doc, value, path):
    if isinstance(value, bool):
        doc.error("expected a number, got a boolean", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    doc.error(f"expected a number, got {value!r}", path)


def _integer(doc, value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        doc.error(f"expected an integer, got {value!r}", path)
    return int(value)


def _vector(doc, value, path):
    if isinstance(value, list):
        return [_number(doc, v, path + (i,)) for i, v in enumerate(value)]
    return [_number(doc, value, path)]


def _matrix(doc, value, path):
    if not isinstance(value, list) or not value:
        doc.error("expected a nonempty list of rows", path)
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            row = [row]
        rows.append([_number(doc, v, path + (i, j)) for j, v in enumerate(row)])
        if len(rows[-1]) != len(rows[0]):
            doc.error(f"row {i} has {len(rows[-1])} entries, row 0 has {len(rows[0])}",
                      path + (i,))
    return rows


def _model_spec(doc, value, path, allow_overrides=True):
    if not isinstance(value, dict):
        doc.error("expected a model mapping", path)
    family = value.get("family")
    if family not in FAMILY_PARAMS:
        doc.error(f"unknown family {family!r}; expected one of {sorted(FAMILY_PARAMS)}",
                  path + ("family",))
    out = {"family": family}
    for key in FAMILY_PARAMS[family]:
        if key not in value:
            doc.error(f"{family} model needs '{key}'", path)
        if key == "samples":
            out[key] = _matrix(doc, value[key], path + (key,))
        else:
            out[key] = _vector(doc, value[key], path + (key,))
    extra = set(value) - set(FAMILY_PARAMS[family]) - {"family", "overrides", "start", "stop"}
    if extra:
        doc.error(f"unexpected keys {sorted(extra)}", path)
    if "overrides" in value:
        if not allow_overrides:
            doc.error("nested overrides are not supported", path + ("overrides",))
        ovs = value["overrides"]
        if not isinstance(ovs, list):
            doc.error("overrides must be a list", path + ("overrides",))
        out["overrides"] = []
        for i, ov in enumerate(ovs):
            p = path + ("overrides", i)
            spec = _model_spec(doc, ov, p, allow_overrides=False)
            for key in ("start", "stop"):
                if key not in ov:
                    doc.error(f"override needs '{key}'", p)
                spec[key] = _integer(doc, ov[key], p + (key,))
            out["overrides"].append(spec)
    return out


def _normalize(doc):
    data = doc.data
    if not isinstance(data, dict):
        doc.error("top level must be a mapping", ())
    unknown = set(data) - set(TOP_KEYS)
    if unknown:
        doc.error(f"unknown top-level keys {sorted(unknown)}", ())
    missing = [k for k in ("schema_version", "dynamics", "cost", "horizon", "weights",
                           "upsilon", "seeds") if k not in data]
    if "suite" not in data and "continuous_suite" not in data:
        missing.append("suite")
    if missing:
        raise ValidationError([f"{k}: missing required field" for k in missing])

    out = {"schema_version": _integer(doc, data["schema_version"], ("schema_version",))}
    if out["schema_version"] != SCHEMA_VERSION:
        doc.error(f"unsupported schema_version {out['schema_version']}", ("schema_version",))
    out["name"] = str(data.get("name", ""))
    for section, keys in (("dynamics", ("A", "B", "C")), ("cost", ("Q", "R", "Qf"))):
        block = data[section]
        if not isinstance(block, dict):
            doc.error("expected a mapping", (section,))
        absent = [k for k in keys if k not in block]
        if absent:
            raise ValidationError([f"{section}.{k}: missing required field" for k in absent])
        out[section] = {k: _matrix(doc, block[k], (section, k)) for k in keys}
    out["horizon"] = _integer(doc, data["horizon"], ("horizon",))
    if "x0" in data:
        out["x0"] = _vector(doc, data["x0"], ("x0",))
    if "suite" in data:
        suite = data["suite"]
        if not isinstance(suite, dict) or not isinstance(suite.get("models"), list):
            doc.error("suite needs a 'models' list", ("suite",))
        out["suite"] = {"models": [_model_spec(doc, m, ("suite", "models", i))
                                   for i, m in enumerate(suite["models"])]}
    if "continuous_suite" in data:
        cs = data["continuous_suite"]
        if not isinstance(cs, dict) or "worst" not in cs or "best" not in cs:
            doc.error("continuous_suite needs 'worst' and 'best'", ("continuous_suite",))
        out["continuous_suite"] = {k: _model_spec(doc, cs[k], ("continuous_suite", k))
                                   for k in ("worst", "best")}
    weights = data["weights"]
    if not isinstance(weights, dict) or "alpha" not in weights or "beta" not in weights:
        raise ValidationError(["weights: needs alpha and beta"])
    out["weights"] = {k: _number(doc, weights[k], ("weights", k)) for k in ("alpha", "beta")}
    out["upsilon"] = _number(doc, data["upsilon"], ("upsilon",))
    seeds = data["seeds"]
    if not isinstance(seeds, dict) or "master" not in seeds:
        raise ValidationError(["seeds.master: missing required field"])
    out["seeds"] = {"master": _integer(doc, seeds["master"], ("seeds", "master"))}
    if "realized" in seeds:
        out["seeds"]["realized"] = _integer(doc, seeds["realized"], ("seeds", "realized"))
    solver = dict(SOLVER_DEFAULTS)
    given = data.get("solver") or {}
    if not isinstance(given, dict):
        doc.error("solver must be a mapping", ("solver",))
    for key, value in given.items():
        if key not in SOLVER_DEFAULTS:
            doc.error(f"unknown solver option {key!r}", ("solver", key))
        if isinstance(SOLVER_DEFAULTS[key], int):
            solver[key] = _integer(doc, value, ("solver", key))
        else:
            solver[key] = _number(doc, value, ("solver", key))
    out["solver"] = solver
    return out


def _error_model(spec):
    family = spec["family"]
    if family == "normal":
        return ErrorModel.normal(spec["mean"], spec["variance"])
    if family == "uniform":
        return ErrorModel.uniform(spec["low"], spec["high"])
    if family == "empirical":
        return ErrorModel.empirical(spec["samples"])
    return ErrorModel.degenerate(spec["value"])


def _model_row(spec, H, violations, where):
    base = _error_model(spec)
    row = [base] * H
    for i, ov in enumerate(spec.get("overrides", [])):
        start, stop = ov["start"], ov["stop"]
        if not 0 <= start < stop <= H:
            violations.append(f"{where}.overrides.{i}: step range [{start}, {stop}) "
                              f"outside [0, {H})")
            continue
        model = _error_model(ov)
        row[start:stop] = [model] * (stop - start)
    return tuple(row)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated experiment description.  ``data`` is the normalized document."""
    data: dict
    dynamics: Dynamics
    cost: CostSpec
    suite: object
    continuous_suite: object

    @property
    def name(self):
        return self.data["name"]

    @property
    def horizon(self):
        return self.data["horizon"]

    @property
    def alpha(self):
        return self.data["weights"]["alpha"]

    @property
    def beta(self):
        return self.data["weights"]["beta"]

    @property
    def upsilon(self):
        return self.data["upsilon"]

    @property
    def seeds(self):
        return self.data["seeds"]

    @property
    def solver(self):
        return self.data["solver"]

    @property
    def x0(self):
        x0 = self.data.get("x0")
        return None if x0 is None else np.asarray(x0, dtype=float)

    def batch(self):
        return build_batch(self.dynamics, self.cost, self.horizon)

    def with_weights(self, alpha, beta):
        data = dict(self.data)
        data["weights"] = {"alpha": float(alpha), "beta": float(beta)}
        return from_data(data)

    def __eq__(self, other):
        return isinstance(other, Scenario) and _canonical(self.data) == _canonical(other.data)

    def __hash__(self):
        return hash(scenario_hash(self))


def from_data(data):
    violations = []
    try:
        dyn = Dynamics(**{k: np.array(v) for k, v in data["dynamics"].items()})
    except PercselError as exc:
        raise ValidationError([f"dynamics: {exc}"]) from None
    try:
        cost = CostSpec(**{k: np.array(v) for k, v in data["cost"].items()})
        cost.check_against(dyn)
    except PercselError as exc:
        raise ValidationError([f"cost: {exc}"]) from None
    H = data["horizon"]
    if H < 1:
        violations.append(f"horizon: must be >= 1, got {H}")
    if "x0" in data and len(data["x0"]) != dyn.n:
        violations.append(f"x0: has {len(data['x0'])} entries, expected {dyn.n}")
    for k in ("alpha", "beta"):
        w = data["weights"][k]
        if not (np.isfinite(w) and w >= 0):
            violations.append(f"weights.{k}: must be finite and >= 0, got {w}")
    if data["weights"]["alpha"] == 0 and data["weights"]["beta"] == 0:
        violations.append("weights: alpha and beta cannot both be zero")
    suite = cs = None
    if violations:
        raise ValidationError(violations)
    if "suite" in data:
        rows = tuple(_model_row(m, H, violations, f"suite.models.{w}")
                     for w, m in enumerate(data["suite"]["models"]))
        suite = PerceptionSuite(data["upsilon"], rows)
        violations += [f"suite: {v}" for v in validate_suite(suite)]
        if not violations and suite.p != dyn.p:
            violations.append(f"suite: error vectors have {suite.p} entries, C has {dyn.p} columns")
    if "continuous_suite" in data:
        ends = [_model_row(data["continuous_suite"][k], H, violations, f"continuous_suite.{k}")
                for k in ("worst", "best")]
        pair = PerceptionSuite(data["upsilon"], tuple(ends))
        violations += [f"continuous_suite: {v}" for v in validate_suite(pair)]
        if not violations:
            if pair.p != dyn.p:
                violations.append(f"continuous_suite: error vectors have {pair.p} entries, "
                                  f"C has {dyn.p} columns")
            else:
                cs = ContinuousSuite.from_suite(pair)
    if not (np.isfinite(data["upsilon"]) and data["upsilon"] > 0) \
            and not any(v.startswith("suite") for v in violations):
        violations.append(f"upsilon: must be finite and > 0, got {data['upsilon']}")
    if violations:
        raise ValidationError(violations)
    return Scenario(data=data, dynamics=dyn, cost=cost, suite=suite, continuous_suite=cs)


def parse_text(text, source="<string>"):
    doc = _Doc(text, source)
    return from_data(_normalize(doc))


def parse_scenario(path):
    with open(path) as fh:
        text = fh.read()
    return parse_text(text, str(path))


def _canonical(data):
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)


def dump_scenario(scenario, path=None):
    """Serialize; floats are written with ``repr`` so they reload bit-for-bit."""
    text = _canonical(scenario.data)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def scenario_hash(scenario):
    return hashlib.sha256(_canonical(scenario.data).encode()).hexdigest()
