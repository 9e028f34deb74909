"""Simulation and numerical verification toolkit for regret-minimizing play.

Two-player repeated games with a learner (fictitious play and its smooth
variants) against configurable adversaries, plus the continuous-time
machinery used to certify consistency: interpolated trajectories,
differential-inclusion solvers, Lyapunov decay monitors, and the
Gronwall / recursive-sequence bound evaluators.
"""

from .ctanalysis import (
    CertificateReport,
    DIProblem,
    InterpolatedPath,
    SolutionCurve,
    consistency_monitor,
    delta_accumulation,
    deviation_bound,
    euler_solve,
    interpolate,
    lyapunov_phi,
    lyapunov_psi,
    membership_defect,
    tracking_solve,
)
from .engine import NoiseRecord, Trajectory, extract_noise, regret_series, run
from .game import PayoffMatrix, SimplexPoint, StateTriple
from .seqcert import (
    GronwallInstance,
    SequenceCertificate,
    gronwall_bound,
    sequence_certificate,
)
from .smoothing import (
    BetaSchedule,
    PerturbationFunction,
    entropy_perturbation,
    lipschitz_certificate,
    perturbed_value,
    smooth_best_response,
)
from .strategies import BeliefState, StrategySpec

__version__ = "0.1.0"

__all__ = [
    "PayoffMatrix",
    "SimplexPoint",
    "StateTriple",
    "BetaSchedule",
    "PerturbationFunction",
    "entropy_perturbation",
    "smooth_best_response",
    "perturbed_value",
    "lipschitz_certificate",
    "BeliefState",
    "StrategySpec",
    "Trajectory",
    "NoiseRecord",
    "run",
    "extract_noise",
    "regret_series",
    "InterpolatedPath",
    "DIProblem",
    "SolutionCurve",
    "CertificateReport",
    "interpolate",
    "lyapunov_psi",
    "lyapunov_phi",
    "euler_solve",
    "tracking_solve",
    "delta_accumulation",
    "deviation_bound",
    "membership_defect",
    "consistency_monitor",
    "GronwallInstance",
    "SequenceCertificate",
    "gronwall_bound",
    "sequence_certificate",
    "__version__",
]
