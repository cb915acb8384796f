"""Exact and numerical Brenier maps from the standard Gaussian, with executable
checks of their growth, derivative and concentration bounds."""

from .exact import (
    RadialProfile,
    TransportMap,
    brenier_1d,
    brenier_product,
    brenier_radial,
    cdf_1d,
    linear_map,
    monge_ampere_residual,
)
from .measures import (
    Potential,
    hessian_band_check,
    is_radial,
    isotropize,
    make_gaussian,
    make_laplace_product,
    make_power_potential,
)
from .numeric import SemiDiscretePlan, entropic_map, pushforward_test, quantize_target, sd_map, sd_map_eval, semidiscrete_solve
from .report import BoundReport
from .sampling import SampleBatch, sample_gaussian, sample_mala, sample_target
from .verify import (
    ConcentrationSpec,
    ball_certificate,
    concentration_constant_bound_check,
    concentration_profile,
    displacement_bound_check,
    eigen_log_variance,
    lp_derivative_norm,
    monotonicity_check,
    opnorm_growth_check,
    probe_design,
)

__version__ = "0.1.0"
