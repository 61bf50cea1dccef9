"""Positively homogeneous factorization with global-optimality certificates."""

from .certificate import (CERTIFIED, ESCAPE, INDETERMINATE, LIKELY, Certificate, PolarResult,
                          check_global, per_slice_alignment, polar)
from .descent import DescentConfig, DescentResult, descend
from .maps import CPOuterProduct, HomogeneousMap, MatrixProduct, ReLUNetwork
from .meta import (MetaConfig, MetaResult, ThetaDirection, append_zero_slice, collapse_slice,
                   find_null_theta, run_meta)
from .oracle import (brute_polar, degree_mismatch_probe, factor_oracle_solution,
                     solve_convex_nuclear)
from .problem import DegreeMismatchError, LogisticLoss, Problem, QTerm, SquaredLoss
from .regularizers import (ConicNormProduct, ElementalPair, LinearEquality, LinearInequality,
                           NonNegOrthant, NormProduct, PowerSum, SupportBound, validate_pair)
from .tensor import FactorSet, ShapeError, concat_last, inner, slice_last

__version__ = "0.1.0"
