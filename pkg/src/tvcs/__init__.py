"""TV-regularized image reconstruction from random projections.

Library layout:

- :mod:`tvcs.grad_ops` -- periodic differences, shrinkage, FFT u-solve
- :mod:`tvcs.sensing` -- Gaussian / partial-DCT encoders and observations
- :mod:`tvcs.solvers` -- the penalty (FTVCS) and multiplier (IADM) drivers
- :mod:`tvcs.reference_oracle` -- dense desk-scale ground truth and checkers
- :mod:`tvcs.imaging` -- phantom, metrics, image I/O
- :mod:`tvcs.cli` / :mod:`tvcs.figures` -- experiment runner and reports
"""

from .grad_ops import (SpectralSolver, apply_D, apply_D_transpose,
                       build_spectral_solver, shrink2, shrink_field,
                       solve_u_subproblem)
from .imaging import (QualityReport, objective_penalty, objective_tv_l2,
                      read_image, relative_error, shepp_logan, write_image)
from .sensing import (Observation, PartialDCTOperator, SensingOperator,
                      estimate_spectral_radius, make_gaussian_operator,
                      make_partial_dct_operator, synthesize_observation)
from .solvers import (DivergenceError, IterationTrace, SolverConfig,
                      SolverState, TVProblem, ftvcs_step, iadm_step,
                      relative_change, run_ftvcs, run_iadm)

__version__ = "0.1.0"

__all__ = [
    "SpectralSolver", "apply_D", "apply_D_transpose", "build_spectral_solver",
    "shrink2", "shrink_field", "solve_u_subproblem",
    "QualityReport", "objective_penalty", "objective_tv_l2", "read_image",
    "relative_error", "shepp_logan", "write_image",
    "Observation", "PartialDCTOperator", "SensingOperator",
    "estimate_spectral_radius", "make_gaussian_operator",
    "make_partial_dct_operator", "synthesize_observation",
    "DivergenceError", "IterationTrace", "SolverConfig", "SolverState",
    "TVProblem", "ftvcs_step", "iadm_step", "relative_change", "run_ftvcs",
    "run_iadm",
]
