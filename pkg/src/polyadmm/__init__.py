"""Parallel collision-avoiding MPC with scale-based polytope constraints.

Collision constraints between convex polytopes come from the dual of a
scaling LP; an ADMM splitting turns the MPC into many tiny certificate QPs,
each solved as an LCP by Lemke's method and batched across worker threads.
"""

from .admm_mpc import AdmmParams, AdmmReport, MpcProblem, TrajectoryIterate, solve_mpc
from .batch_solver import Backend, BatchRequest, BatchResult, solve_batch
from .collision_lp import DualCertificate, ScaleResult, check_certificate, min_scale, solve_dual
from .dynamics import DoubleIntegrator, Unicycle, make_model
from .geometry import (
    BodyPolytope,
    HalfspacePolytope,
    ObstacleSet,
    Pose,
    RobotGeometry,
    contains,
    make_box,
    transform_polytope,
)
from .lemke import LcpSolution, LcpStatus, lcp_enumerate, lemke_solve
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"
