"""Numerically stable coded matrix computations with convolutional-code generators."""

from .polyalg import (GeneratorSpec, InfeasibleStorageError, Monomial, PolyMatrix, ValidationError,
                      khatri_rao, make_matmat_factors, make_matvec_generator, make_systematic_generator,
                      min_q, min_z)
from .expand import expand, expand_subset, gram
from .codec import MatMatPlan, MatVecPlan, build_system, encode_matmat, encode_matvec
from .decode import DecodeError, ObservationSet, assemble, decode, ls_decode, peel
from .spectral import FrequencyGrid, cond, kappa_R, kappa_worst, search_R, theorem2_bounds
from .runtime import ExperimentConfig, NoiseModel, StragglerModel, run_experiment, sweep

__version__ = "0.1.0"
