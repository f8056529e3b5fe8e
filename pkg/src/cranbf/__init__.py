"""Power-minimizing C-RAN downlink beamforming under imperfect CSI.

Modules: ``model`` (scenario generation), ``conic`` (SOCP interior point),
``core`` (fixed-pattern beamformer design), ``scfa`` (smooth constraint-free
approximation), ``baselines`` (comparison algorithms), ``bounds`` (power
bounds) and ``harness`` (Monte-Carlo runner and CLI backend).
"""

from .baselines import ALGORITHMS
from .bounds import compute_bounds
from .core import LinkMatrix, SolveReport, solve_p2
from .kernels import IMPLEMENTATION as KERNEL_BACKEND
from .model import DesignProblem, SystemParams, sample_feasible_problem, trial_rng

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "DesignProblem",
    "KERNEL_BACKEND",
    "LinkMatrix",
    "SolveReport",
    "SystemParams",
    "compute_bounds",
    "sample_feasible_problem",
    "solve_p2",
    "trial_rng",
]
