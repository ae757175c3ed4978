"""Calderon-Zygmund decomposition of Sobolev functions on a uniform grid."""
from .badset import RegionMask, bad_set, maximal_function, weak_type_ratio
from .czd import CZDecomposition, counterexample_demo, decompose, gradient_identity_residual, truncation_study
from .errors import CZError, DataError, GoodSetEmptyError, ParameterError
from .grid import GridSpec, ScalarField, TestFunction, VectorField, gradient, lp_norm
from .partition import PartitionOfUnity, build_partition
from .verify import Ceilings, VerificationReport, sweep, verify
from .whitney import DyadicCube, WhitneyDecomposition, whitney_decompose

__version__ = "0.1.0"
