from .benchmark import BenchmarkReport, benchmark_schedules, write_benchmark
from .constraints import ScucConstraint, annulus_g, design_free, himmelblau_g, himmelblau_squared_g
from .discretization import (
    CfiResult,
    DiscretizationState,
    blankenship_falk,
    certify,
    solve_cfi,
    solve_hypercube,
    tighten_cut,
    write_iterations,
    write_result,
)
from .lower import lower_level_solve, nelder_mead_batch
from .problem import BALL, CUBE, LowerConfig, SipConfig, SipProblem, UpperConfig
from .upper import upper_level_fixed_design, upper_level_scuc

__all__ = [
    "BALL", "CUBE", "BenchmarkReport", "CfiResult", "DiscretizationState", "LowerConfig",
    "ScucConstraint", "SipConfig", "SipProblem", "UpperConfig", "annulus_g", "benchmark_schedules",
    "blankenship_falk", "certify", "design_free", "himmelblau_g", "himmelblau_squared_g",
    "lower_level_solve", "nelder_mead_batch", "solve_cfi", "solve_hypercube", "tighten_cut",
    "upper_level_fixed_design", "upper_level_scuc", "write_benchmark", "write_iterations", "write_result",
]
