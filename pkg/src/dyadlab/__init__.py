"""Dyadic sparse square-function laboratory: weights, sparse collections, coronas and norm estimates."""
from .config import ConfigError, ExperimentConfig
from .constants import (BumpFunction, Characteristic, ExponentSet, ainfty_constant, ap_constant,
                        bump_integral_converges, dyadic_maximal, entropy_bump_mult, entropy_bump_sep, rho, rho_eps)
from .corona import (Corona, PrincipalCubes, SliceFamily, bilinear_form, corona_I_II, parallel_projection,
                     principal_cubes, quasi_orthogonality_ratio, slice_ap, slice_entropy)
from .experiments import Report, make_power_weight, run_entropy, run_sharpness, run_verify
from .grid import DyadicCube, GridError, GridFunction, GridSpec, Weight
from .kernels import BACKEND
from .normlab import (Bounds, HypothesisError, NormEstimate, carleson_ratio, exact_norm_22, op_norm_lower,
                      testing_constant, theorem_rhs)
from .sparse import (NotSparseError, SparseCollection, apply, chain, dyadic_square_function, exceptional_sets,
                     generate, is_sparse, random_sparse, sparse_dominate, stopping)

__version__ = "0.1.0"
