"""Accelerated parallel coordinate descent for sparse smooth problems."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    Dataset,
    SparseColMatrix,
    SparsityReport,
    analyze_sparsity,
    load_dataset,
    normalize_columns,
    save_dataset,
    sparsity_measures,
    spectral_radius,
)
from .errors import AccShotError, DataError, NumericalError, ValidationError  # noqa: E402
from .loss import LossKind, LossModel, Objective, full_gradient, full_value  # noqa: E402
from .pipeline import Algorithm, Problem, run  # noqa: E402
from .schedule import COption, Sampling, ShotgunParams, eta_star, p_star, sigma  # noqa: E402
from .solver import Mode, accel_shotgun_solve, agd_solve, shotgun_solve  # noqa: E402
from .trace import StoppingRule, Trace  # noqa: E402
