"""Monte Carlo finite-volume solver for linear hyperbolic conservation laws
whose flux coefficients are spatiotemporal random fields (Gaussian random
fields in space, Ornstein-Uhlenbeck processes in time).

Subpackage layout:
    grid         -- structured meshes, cell-average fields, norms, I/O
    random_field -- FFT spectral sampling of Gaussian random fields
    ou_sde       -- Ornstein-Uhlenbeck integrators and closed-form moments
    fv_core      -- flux-differencing machinery, CFL control, SSP-RK2
    models       -- scalar advection, 2-D acoustics, 2-D magnetic induction
    monte_carlo  -- parallel sample loop and streaming moment accumulation
    oracle       -- closed-form moments of the OU-driven scalar transport
    cli          -- configuration, scenario presets and subcommands
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    NumericalBlowupError,
    UnsupportedConfigurationError,
)

__all__ = [
    "ConfigurationError",
    "NumericalBlowupError",
    "UnsupportedConfigurationError",
    "__version__",
]
