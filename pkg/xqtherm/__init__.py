from importlib.metadata import PackageNotFoundError, version

from xqtherm.accessor import ReadoutAccessor  # noqa: F401
from xqtherm.config import RunConfig
from xqtherm.decoherence import (
    DecayFactors,
    decay_factors,
    decay_table,
    gamma_beta_integral,
)
from xqtherm.distributions import (
    MeasurementConfig,
    collective_field_distribution,
    correlation_distribution,
    gaussian_s_theta0,
    product_distribution,
)
from xqtherm.errors import (
    ConfigError,
    ContractError,
    DomainError,
    NumericalError,
    ThermometryError,
)
from xqtherm.estimation import (
    FisherReport,
    fisher_analytic,
    fisher_exact,
    fisher_high_t,
    fisher_low_t,
    grouped_fisher,
)
from xqtherm.oracle import DecayMatrix, exact_p_of_s, exact_probability
from xqtherm.sampling import empirical_fisher, sample_readouts
from xqtherm.spectral import OhmicSpectrum, SpectralModel, TabulatedSpectrum

try:
    __version__ = version("xqtherm")
except PackageNotFoundError:  # noqa # pragma: no cover
    # package is not installed
    __version__ = "9999"

__all__ = [
    "__version__",
    "ConfigError",
    "ContractError",
    "DecayFactors",
    "DecayMatrix",
    "DomainError",
    "FisherReport",
    "MeasurementConfig",
    "NumericalError",
    "OhmicSpectrum",
    "RunConfig",
    "SpectralModel",
    "TabulatedSpectrum",
    "ThermometryError",
    "collective_field_distribution",
    "correlation_distribution",
    "decay_factors",
    "decay_table",
    "empirical_fisher",
    "exact_p_of_s",
    "exact_probability",
    "fisher_analytic",
    "fisher_exact",
    "fisher_high_t",
    "fisher_low_t",
    "gamma_beta_integral",
    "gaussian_s_theta0",
    "grouped_fisher",
    "product_distribution",
    "sample_readouts",
]
