"""Optimal perception-model schedules for linear-quadratic control."""
from .batch_lqr import (BatchMatrices, CostSpec, Dynamics, PSDReport, Trajectory, batch_cost,
                        build_batch, control_cost, cost_gap, optimal_controls, psd_check,
                        rollout, simulated_gap)
from .continuous import (AssumptionReport, CanonicalQP, ContinuousSuite, QPResult,
                         build_canonical, check_assumption, export_sdp, round_to_discrete,
                         solve_qp, verify_sdp)
from .discrete import (BooleanQP, SolveResult, encode, objective_value, relax_lower_bound,
                       solve_bnb, solve_exhaustive)
from .errors import *  # noqa: F401,F403
from .evaluation import (EvaluationReport, ParetoPoint, Policy, TrialResult, landing_scenario,
                         monte_carlo, pareto_sweep, run_policy)
from .kernels import BACKEND
from .perception import (ErrorModel, PerceptionSuite, RealizedErrors, model_cost, moments,
                         sample_realized, validate_suite)
from .scenario import Scenario, dump_scenario, parse_scenario

__version__ = "0.1.0"
