"""Nonstationary half-spectral space-time covariance models.

Kernel evaluation by FFT of analytic cross-spectra, exact Gaussian maximum
likelihood with stochastic derivative estimators, simulation and spectral
diagnostics.
"""

__version__ = "0.1.0"

from .covariance import ObservationLayout, assemble, assemble_grad, grid_for  # noqa: E402
from .errors import (  # noqa: E402
    AssemblyError,
    ConditioningWarning,
    ConfigError,
    DomainError,
    IndefiniteMatrixError,
    NumericError,
)
from .fft_kernel import (  # noqa: E402
    FrequencyGrid,
    KernelTable,
    kernel_sequence,
    kernel_sequence_grad,
    kernel_table,
    make_frequency_grid,
)
from .likelihood import (  # noqa: E402
    ProbeSet,
    loglik,
    loglik_grad_exact,
    standard_errors,
    stochastic_fisher,
    stochastic_grad,
)
from .optimizer import FitOptions, FitResult, fit, freeze  # noqa: E402
from .params import PARAM_NAMES, ModelParams, ParamTransform  # noqa: E402
from .simulation import sample  # noqa: E402
