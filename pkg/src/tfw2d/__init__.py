"""Periodic Thomas-Fermi-von Weizsaecker ground states of 2D crystals.

A Fourier spectral discretization of the periodized cell, an SCF solver for
the 3D problem and its 1D limit, and the homogenization study m -> m_N.
"""
__version__ = "0.1.0"

from .cell import Grid3, UnitCell, fft_forward, fft_inverse, laplacian_symbol  # noqa: E402
from .coulomb import (GreenEvalConfig, eval_green_realspace, green_regular_part,  # noqa: E402
                      hartree_d1, hartree_dg, solve_poisson, validate_green_vs_spectral)
from .errors import (DegenerateFit, EigensolverStalled, GridMismatch, InvalidExponent,  # noqa: E402
                     NegativeDensity, NonHermitianInput, NotNeutral, ScfDiverged, SingularPoint,
                     TFWError, UnsampleableModel)
from .fields import (RealField, SpectralField, forward_transform, integrate,  # noqa: E402
                     inverse_transform, lp_norm, power_integral, spectral_gradient_sq_integral,
                     weighted_l1_x3)
from .homogenization import (GridRule, HomogenizationPlan, HomogenizationReport,  # noqa: E402
                             average_to_1d, build_m_n, fit_rate, run_study)
from .solver import (NuclearModel, ScfConfig, ScfResult, apply_hamiltonian,  # noqa: E402
                     el_residual, lowest_eigenpair, scf_solve, scf_solve_1d)
