"""Stochastic gradient Langevin dynamics laboratory.

Steppers (SGLD, SGD, ULA, PGD), a small suite of objectives, hitting-time
measurement for approximate stationary points, closed-form iteration bounds
and the experiment harness that ties them together.
"""

from langevin_lab.schedule import PartialSums, StepSchedule
from langevin_lab.problems import (
    LinearRegressionProblem,
    MatrixFactorizationProblem,
    OnlinePCAProblem,
    Problem,
    QuadraticSaddle,
    ScalarQuadratic,
)
from langevin_lab.dynamics import DynamicsConfig, Method, Trajectory, run, run_batch, step
from langevin_lab.stationarity import (
    CENSORED,
    HittingRecord,
    RegionSpec,
    is_fosp,
    is_sosp,
    measure_hitting,
    min_eig,
)

__version__ = "0.1.0"

__all__ = [
    "CENSORED",
    "DynamicsConfig",
    "HittingRecord",
    "LinearRegressionProblem",
    "MatrixFactorizationProblem",
    "Method",
    "OnlinePCAProblem",
    "PartialSums",
    "Problem",
    "QuadraticSaddle",
    "RegionSpec",
    "ScalarQuadratic",
    "StepSchedule",
    "Trajectory",
    "is_fosp",
    "is_sosp",
    "measure_hitting",
    "min_eig",
    "run",
    "run_batch",
    "step",
]
