"""Classical reference and baseline solvers."""

from .poisson import poisson_periodic
from .slfd import (
    apply_coefficients,
    equalize,
    sl_fd_first_order,
    sl_interp_highorder_2d,
    sl_linear_conservative,
)
from .weno import (
    flux_divergence,
    vlasov_reference_step,
    vp_density,
    vp_field,
    weno5_advect_step_1d,
    weno5_advect_step_2d,
    weno5_evolve,
    weno5_reconstruct,
)

__all__ = [
    "apply_coefficients",
    "equalize",
    "flux_divergence",
    "poisson_periodic",
    "sl_fd_first_order",
    "sl_interp_highorder_2d",
    "sl_linear_conservative",
    "vlasov_reference_step",
    "vp_density",
    "vp_field",
    "weno5_advect_step_1d",
    "weno5_advect_step_2d",
    "weno5_evolve",
    "weno5_reconstruct",
]
