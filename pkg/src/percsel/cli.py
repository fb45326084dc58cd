"""Command-line front end.

Exit codes: 0 success, 1 error, 2 plan finished with a bound gap,
3 continuous problem not convex.
"""
import argparse
import json
import os
import sys
import time

import numpy as np

from . import discrete
from .continuous import (build_canonical, check_assumption, duplicate, export_sdp,
                         round_to_discrete, solve_qp, write_sdp)
from .errors import NotConvex, PercselError, SingularPhiC, ValidationError
from .evaluation import monte_carlo, pareto_csv_text, plan_expected
from .perception import RealizedErrors, sample_realized
from .scenario import parse_scenario, scenario_hash

EXIT_OK, EXIT_ERROR, EXIT_BOUND_GAP, EXIT_NOT_CONVEX = 0, 1, 2, 3


def _log(msg):
    print(msg, file=sys.stderr)


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_realized(path, shape):
    """Realized errors from ``.npy`` (W, H, p) or CSV rows ``model,step,component,error``."""
    if path.endswith(".npy"):
        arr = np.load(path)
    else:
        arr = np.full(shape, np.nan)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        for w, t, r, e in data:
            arr[int(w), int(t), int(r)] = e
        if np.isnan(arr).any():
            raise ValidationError([f"realized: {path} does not cover every (model, step, component)"])
    if arr.shape != tuple(shape):
        raise ValidationError([f"realized: shape {arr.shape}, expected {tuple(shape)}"])
    return RealizedErrors(np.asarray(arr, dtype=float))


def cmd_plan(args):
    sc = parse_scenario(args.scenario)
    if sc.suite is None:
        raise ValidationError(["suite: plan needs a discrete suite"])
    bm = sc.batch()
    realized = None
    if args.mode == "exact":
        if args.realized:
            realized = load_realized(args.realized, (sc.suite.W, bm.H, bm.p))
        else:
            seed = args.seed if args.seed is not None else sc.seeds.get("realized")
            if seed is None:
                raise ValidationError(["seeds.realized: exact mode needs --realized, --seed "
                                       "or seeds.realized"])
            realized = sample_realized(sc.suite, seed)
    qp = discrete.encode(bm, sc.suite, sc.alpha, sc.beta, args.mode, realized)
    t0 = time.perf_counter()
    if args.solver == "exhaustive":
        res = discrete.solve_exhaustive(qp)
    else:
        res = discrete.solve_bnb(qp, gap_tol=sc.solver["gap_tol"],
                                 node_limit=sc.solver["node_limit"])
    _log(f"solved in {time.perf_counter() - t0:.3f}s ({res.status}, "
         f"{res.nodes_explored} nodes)")
    out = _out_dir(args.out)
    rows = ["step,model_index"] + [f"{t},{int(w)}" for t, w in enumerate(res.sequence)]
    _write(os.path.join(out, "sequence.csv"), "\n".join(rows) + "\n")
    control, per = discrete.objective_terms(qp, res.sequence)
    _write(os.path.join(out, "plan.json"), _json({
        "scenario_sha256": scenario_hash(sc), "mode": args.mode, "solver": args.solver,
        "objective": res.objective, "lower_bound": res.lower_bound, "gap": res.gap,
        "status": res.status, "nodes_explored": res.nodes_explored,
        "control_term": control, "perception_cost": per,
        "sequence": [int(w) for w in res.sequence]}))
    print(f"objective {res.objective!r} lower_bound {res.lower_bound!r} status {res.status}")
    return EXIT_OK if res.status == discrete.OPTIMAL else EXIT_BOUND_GAP


def cmd_plan_continuous(args):
    sc = parse_scenario(args.scenario)
    if sc.continuous_suite is None:
        raise ValidationError(["continuous_suite: plan-continuous needs a continuous_suite"])
    qp = build_canonical(sc.batch(), sc.continuous_suite, sc.alpha, sc.beta)
    try:
        report = check_assumption(qp).summary()
    except SingularPhiC as exc:
        report = {"error": str(exc)}
    out = _out_dir(args.out)
    try:
        res = solve_qp(qp, tol=sc.solver["qp_tol"])
    except NotConvex as exc:
        _log(f"not convex: {exc}")
        _log(_json(report))
        _write(os.path.join(out, "continuous.json"), _json({"error": str(exc),
                                                          "assumption": report}))
        return EXIT_NOT_CONVEX
    if not report.get("holds", True):
        _log("warning: the perturbation assumption does not hold; "
             f"Psi' min eigenvalue {report['psi_prime_min_eig']!r}")
    doc = {"scenario_sha256": scenario_hash(sc), "c": [float(x) for x in res.c],
           "objective": res.objective, "kkt_residual": res.kkt_residual,
           "rounded_sequence": [int(w) for w in round_to_discrete(res.c)],
           "assumption": report}
    if args.export_sdp:
        path = os.path.join(out, "sdp.txt")
        write_sdp(export_sdp(qp), path)
        doc["sdp"] = {"path": "sdp.txt", "c_prime": [float(x) for x in duplicate(res.c, qp.p)],
                      "theta": res.objective}
    _write(os.path.join(out, "continuous.json"), _json(doc))
    print(f"objective {res.objective!r} kkt_residual {res.kkt_residual:.3g}")
    return EXIT_OK


def cmd_evaluate(args):
    sc = parse_scenario(args.scenario)
    t0 = time.perf_counter()

    def progress(k, n):
        if k % 10 == 0 or k == n:
            _log(f"  trial {k}/{n} ({time.perf_counter() - t0:.1f}s)")

    report = monte_carlo(sc, n_trials=args.trials, master_seed=args.seed, progress=progress)
    out = _out_dir(args.out)
    _write(os.path.join(out, "trials.csv"), report.csv_text())
    _write(os.path.join(out, "summary.json"), report.json_text())
    summary = report.summary()
    for name in report.ordering():
        r = summary["policies"][name]["reward"]
        print(f"{name:9s} mean reward {r['mean']:.6g}  95% CI [{r['ci95'][0]:.6g}, "
              f"{r['ci95'][1]:.6g}]")
    print("ordering: " + " > ".join(report.ordering()))
    return EXIT_OK


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_pareto(args):
    from .evaluation import pareto_sweep
    sc = parse_scenario(args.scenario)
    alphas = _parse_floats(args.alphas)
    betas = _parse_floats(args.betas)
    solver = None if args.solver == "auto" else args.solver
    points = pareto_sweep(sc, [(a, b) for a in alphas for b in betas], solver=solver)
    out = _out_dir(args.out)
    _write(os.path.join(out, "pareto.csv"), pareto_csv_text(points))
    print(f"{len(points)} grid points written")
    return EXIT_OK


def cmd_verify(args):
    from . import verify
    sc = parse_scenario(args.scenario) if args.scenario else None
    results = verify.run(args.level, seed=args.seed or 0, scenario=sc, fault=args.inject_fault)
    failed = [name for name, ok, *_ in results if not ok]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_ERROR
    print(f"all {len(results)} invariants passed")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario YAML file")
    common.add_argument("--out", default="percsel-out", help="output directory")
    common.add_argument("--seed", type=int, help="overrides the scenario seed")
    parser = argparse.ArgumentParser(prog="percsel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="optimal discrete model sequence")
    p.add_argument("--mode", choices=("expected", "exact"), default="expected")
    p.add_argument("--solver", choices=("bnb", "exhaustive"), default="bnb")
    p.add_argument("--realized", help="realized errors (.npy or CSV) for exact mode")
    p.set_defaults(func=cmd_plan, needs_scenario=True)

    p = sub.add_parser("plan-continuous", parents=[common], help="continuous quality levels")
    p.add_argument("--export-sdp", action="store_true", help="also write the SDP blocks")
    p.set_defaults(func=cmd_plan_continuous, needs_scenario=True)

    p = sub.add_parser("evaluate", parents=[common], help="Monte-Carlo policy comparison")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_evaluate, needs_scenario=True)

    p = sub.add_parser("pareto", parents=[common], help="(alpha, beta) sweep")
    p.add_argument("--alphas", default="0.1,0.5,1,2,5")
    p.add_argument("--betas", default="0.1,0.5,1,2,5")
    p.add_argument("--solver", choices=("auto", "bnb", "exhaustive"), default="auto")
    p.set_defaults(func=cmd_pareto, needs_scenario=True)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("level", nargs="?", choices=("quick", "full"), default="quick")
    p.add_argument("--inject-fault", choices=("asymmetric-psi",), help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify, needs_scenario=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.needs_scenario and not args.scenario:
        parser.error(f"{args.command} needs --scenario")
    try:
        return args.func(args)
    except ValidationError as exc:
        _log("invalid scenario:")
        for v in exc.violations:
            _log(f"  {v}")
        return EXIT_ERROR
    except NotConvex as exc:
        _log(f"not convex: {exc}")
        return EXIT_NOT_CONVEX
    except (PercselError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
