"""Nonlocal perturbations of forward space-time kernels on grids."""
from .errors import (AliasingError, InvalidArgument, KPError, NoConvergence,
                     PreconditionViolation, UnsupportedPerturbation)
from .grid import ScalarField, SpaceGrid, TimeGrid, integrate, make_space_grid, make_time_grid
from .kernelalg import (ForwardKernel, SpatialJumpKernel, apply_jump, compose, identity_jump,
                        j_norm, kjk, lemma1_defect, zero_jump)
from .perturb import (BoundCertificate, PerturbedKernel, QFunction, bound_factor,
                      perturbation_series, series_term, signed_series, verify_smallness)
from .stable import StableParams, stable_density_grid, stable_kernel

__version__ = "0.1.0"
