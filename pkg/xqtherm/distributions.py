import io
import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Any, ClassVar, Literal

import numpy as np
import xarray as xr
from scipy import special, stats

from xqtherm.decoherence import DecayFactors
from xqtherm.errors import ContractError, DomainError

logger = logging.getLogger(__name__)

Observable = Literal["S", "S2"]

GAUSS_HERMITE_NODES = 64
GAUSS_HERMITE_CHECK_NODES = 128
GAUSS_HERMITE_TOLERANCE = 1e-10
NORMALIZATION_TOLERANCE = 1e-10
ANGLE_TOLERANCE = 1e-12

_OBSERVABLE_ALIASES = {"S": "S", "S2": "S2", "S_squared": "S2", "S^2": "S2"}


def _normalize_observable(observable) -> Observable:
    try:
        return _OBSERVABLE_ALIASES[observable]
    except KeyError:
        raise ContractError(
            f"observable must be one of {sorted(_OBSERVABLE_ALIASES)}, got {observable!r}"
        ) from None


def is_independent_angle(theta: float) -> bool:
    return abs(theta) <= ANGLE_TOLERANCE


def is_correlation_angle(theta: float) -> bool:
    return abs(theta - math.pi / 2) <= ANGLE_TOLERANCE


def s_support(n: int) -> np.ndarray:
    """the values ``-N, -N + 2, ..., N`` of the ensemble readout"""
    return np.arange(-n, n + 1, 2)


def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and weights for the standard normal density"""
    knots, weights = np.polynomial.hermite.hermgauss(n)
    return knots * np.sqrt(2), weights / np.sqrt(np.pi)


@dataclass(frozen=True)
class MeasurementConfig:
    """
    Ramsey measurement of N thermometers.

    Parameters
    ----------
    n_thermometers : int
        Number of thermometers N.
    theta : float
        Angle of the measurement axis in ``[0, π/2]``. ``0`` measures along x
        (independent measurement), ``π/2`` along y (correlation measurement).
    decay : DecayFactors
        Decay factors at the working point.
    """

    n_thermometers: int
    theta: float
    decay: DecayFactors

    def __post_init__(self):
        if int(self.n_thermometers) != self.n_thermometers or self.n_thermometers < 1:
            raise DomainError(
                f"number of thermometers must be a positive integer, got {self.n_thermometers!r}"
            )
        if not -ANGLE_TOLERANCE <= self.theta <= math.pi / 2 + ANGLE_TOLERANCE:
            raise DomainError(f"theta must lie in [0, pi/2], got {self.theta!r}")

    @property
    def n(self) -> int:
        return int(self.n_thermometers)

    @property
    def is_independent(self) -> bool:
        return is_independent_angle(self.theta)

    @property
    def is_correlation(self) -> bool:
        return is_correlation_angle(self.theta)

    def with_decay(self, decay: DecayFactors) -> "MeasurementConfig":
        return replace(self, decay=decay)

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "theta": self.theta} | self.decay.to_dict()


def _moment(support, probabilities, observable: Observable) -> float:
    values = support.astype("float64") ** (2 if observable == "S2" else 1)
    return float(np.sum(probabilities * values))


def _variance(support, probabilities, observable: Observable) -> float:
    values = support.astype("float64") ** (2 if observable == "S2" else 1)
    mean = np.sum(probabilities * values)
    return float(np.sum(probabilities * (values - mean) ** 2))


@dataclass(frozen=True, eq=False)
class ReadoutDistribution:
    """Base class for probability models of the readouts

    Parameters
    ----------
    config : MeasurementConfig
        The measurement the distribution describes.
    method : str
        Name of the builder that produced the distribution. Used to rebuild it
        at different decay factors.
    """

    config: MeasurementConfig
    method: str

    form: ClassVar[str] = ""

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def support(self) -> np.ndarray:
        return s_support(self.n)

    def probabilities(self) -> np.ndarray:
        """probabilities of the ensemble readout over `support`"""
        raise NotImplementedError()

    def mean(self, observable: Observable = "S") -> float:
        """expectation of ``S`` or ``S²``"""
        return _moment(self.support, self.probabilities(), _normalize_observable(observable))

    def variance(self, observable: Observable = "S") -> float:
        """variance of ``S`` or ``S²``"""
        return _variance(self.support, self.probabilities(), _normalize_observable(observable))

    def normalization_error(self) -> float:
        return abs(float(np.sum(self.probabilities())) - 1.0)

    def rebuild(self, decay: DecayFactors) -> "ReadoutDistribution":
        """the same kind of distribution at different decay factors"""
        builder = BUILDERS.get(self.method)
        if builder is None:
            raise ContractError(f"distributions built by {self.method!r} cannot be rebuilt")

        return builder(self.config.with_decay(decay))

    def to_dataarray(self) -> xr.DataArray:
        """the ensemble readout probabilities as a DataArray over ``S``"""
        return xr.DataArray(
            self.probabilities(),
            coords={"S": self.support},
            dims="S",
            name="probability",
            attrs={"form": self.form, "method": self.method}
            | self.config.to_dict(),
        )

    def to_text(self, path_or_buffer=None) -> str | None:
        """serialize to the two-column ``S p(S)`` text format"""
        return self.to_dataarray().readout.to_text(path_or_buffer)


@dataclass(frozen=True, eq=False)
class ExactEnumerated(ReadoutDistribution):
    """probabilities of every readout string

    Parameters
    ----------
    readouts : numpy.ndarray
        ``(2**N, N)`` array of ±1 readouts.
    table : numpy.ndarray
        Probability of each readout string.
    """

    readouts: np.ndarray
    table: np.ndarray

    form: ClassVar[str] = "exact_enumerated"

    def probabilities(self) -> np.ndarray:
        k = (self.readouts.sum(axis=1) + self.n) // 2
        return np.bincount(k, weights=self.table, minlength=self.n + 1)

    def normalization_error(self) -> float:
        return abs(float(np.sum(self.table)) - 1.0)


@dataclass(frozen=True, eq=False)
class ProductDistribution(ReadoutDistribution):
    """independent ±1 readouts

    Parameters
    ----------
    p_plus : float
        Probability of a single readout to be +1.
    """

    p_plus: float

    form: ClassVar[str] = "product"

    @property
    def spin_mean(self) -> float:
        return 2 * self.p_plus - 1

    def probabilities(self) -> np.ndarray:
        k = np.arange(self.n + 1)
        return stats.binom.pmf(k, self.n, self.p_plus)


@dataclass(frozen=True, eq=False)
class CollectiveGaussianS(ReadoutDistribution):
    """large-N Gaussian approximation of the ensemble readout

    Parameters
    ----------
    mean_s : float
        Mean of ``S``.
    variance_s : float
        Variance of ``S``. Zero describes a point mass at `mean_s`.
    """

    mean_s: float
    variance_s: float

    form: ClassVar[str] = "collective_gaussian"

    def pdf(self, s) -> np.ndarray:
        """Gaussian probability density of ``S``"""
        if self.variance_s == 0:
            return np.where(np.asarray(s) == self.mean_s, np.inf, 0.0)
        return stats.norm.pdf(s, loc=self.mean_s, scale=math.sqrt(self.variance_s))

    def probabilities(self) -> np.ndarray:
        # density on the lattice of spacing 2, renormalized over the support
        support = self.support
        if self.variance_s == 0:
            probabilities = np.zeros(support.shape)
            probabilities[np.argmin(np.abs(support - self.mean_s))] = 1.0
            return probabilities

        weights = self.pdf(support)
        return weights / weights.sum()

    def mean(self, observable: Observable = "S") -> float:
        observable = _normalize_observable(observable)
        if observable == "S":
            return self.mean_s
        return self.mean_s**2 + self.variance_s

    def variance(self, observable: Observable = "S") -> float:
        observable = _normalize_observable(observable)
        if observable == "S":
            return self.variance_s
        return 4 * self.mean_s**2 * self.variance_s + 2 * self.variance_s**2

    def normalization_error(self) -> float:
        return 0.0


@dataclass(frozen=True, eq=False)
class CollectiveExactS(ReadoutDistribution):
    """probabilities of the ensemble readout ``S`` on its exact support

    Parameters
    ----------
    table : numpy.ndarray
        ``p(S)`` for ``S = -N, -N + 2, ..., N``.
    """

    table: np.ndarray

    form: ClassVar[str] = "collective_exact"

    def probabilities(self) -> np.ndarray:
        return self.table


def _binomial_mixture(n: int, p_plus: np.ndarray, weights: np.ndarray) -> np.ndarray:
    k = np.arange(n + 1)
    pmf = stats.binom.pmf(k[None, :], n, p_plus[:, None])
    return weights @ pmf


def _collective_table(config: MeasurementConfig, nodes: int) -> np.ndarray:
    decay = config.decay
    if decay.gamma_l == 0:
        phi = np.zeros(1)
        weights = np.ones(1)
    else:
        knots, weights = gauss_hermite(nodes)
        phi = math.sqrt(decay.gamma_l / 2) * knots

    p_plus = (1 + math.exp(-decay.gamma_h) * np.cos(config.theta + 2 * phi)) / 2
    return _binomial_mixture(config.n, p_plus, weights)


def collective_field_distribution(
    config: MeasurementConfig,
    *,
    nodes: int = GAUSS_HERMITE_NODES,
    check_nodes: int | None = GAUSS_HERMITE_CHECK_NODES,
) -> CollectiveExactS:
    """ensemble readout distribution of the collective field model

    .. math::

        P_s = \\left\\langle \\prod_j \\frac{1 + s_j e^{-Γ_H} \\cos(θ + 2φ_0)}{2}
        \\right\\rangle_{φ_0}, \\quad φ_0 \\sim \\mathcal{N}(0, Γ_L / 2)

    The average over the collective field uses Gauss-Hermite quadrature.

    Parameters
    ----------
    config : MeasurementConfig
        The measurement.
    nodes : int, default: 64
        Number of quadrature nodes.
    check_nodes : int or None, default: 128
        Number of nodes of the convergence check. ``None`` disables the check.

    Returns
    -------
    distribution : CollectiveExactS
    """
    table = _collective_table(config, nodes)
    if check_nodes is not None and config.decay.gamma_l > 0:
        reference = _collective_table(config, check_nodes)
        difference = float(np.max(np.abs(table - reference)))
        if difference > GAUSS_HERMITE_TOLERANCE:
            logger.warning(
                "Gauss-Hermite average not converged: %d vs %d nodes differ by %g",
                nodes,
                check_nodes,
                difference,
            )

    return CollectiveExactS(config=config, method="collective_field", table=table)


def product_distribution(config: MeasurementConfig) -> ProductDistribution:
    """independent measurement distribution

    Every readout is +1 with probability ``(1 + e^{-Γ})/2``.

    Raises
    ------
    ContractError
        if the measurement angle is not 0
    """
    if not config.is_independent:
        raise ContractError(
            f"the product distribution requires theta = 0, got {config.theta!r}"
        )

    p_plus = (1 + math.exp(-config.decay.gamma_total)) / 2
    return ProductDistribution(config=config, method="product", p_plus=p_plus)


def correlation_distribution(config: MeasurementConfig) -> CollectiveGaussianS:
    """large-N Gaussian ensemble readout of the correlation measurement

    Zero mean, variance ``N (1 + 2 e^{-2Γ} N Γ_L)``.

    Raises
    ------
    ContractError
        if the measurement angle is not π/2
    """
    if not config.is_correlation:
        raise ContractError(
            f"the correlation distribution requires theta = pi/2, got {config.theta!r}"
        )

    decay = config.decay
    n = config.n
    variance = n * (1 + 2 * math.exp(-2 * decay.gamma_total) * n * decay.gamma_l)
    return CollectiveGaussianS(
        config=config, method="correlation", mean_s=0.0, variance_s=variance
    )


def gaussian_s_theta0(config: MeasurementConfig) -> CollectiveGaussianS:
    """large-N Gaussian ensemble readout of the independent measurement

    Mean ``N e^{-Γ}``, variance ``N (1 - e^{-2Γ})``. For ``Γ = 0`` this is a
    point mass at ``S = N``.

    Raises
    ------
    ContractError
        if the measurement angle is not 0
    """
    if not config.is_independent:
        raise ContractError(
            f"the Gaussian independent readout requires theta = 0, got {config.theta!r}"
        )

    gamma = config.decay.gamma_total
    n = config.n
    return CollectiveGaussianS(
        config=config,
        method="gaussian_theta0",
        mean_s=n * math.exp(-gamma),
        variance_s=-n * math.expm1(-2 * gamma),
    )


def correlation_table(config: MeasurementConfig) -> CollectiveExactS:
    """small Γ_L expansion of the correlation measurement on the exact support

    Every readout string has probability proportional to
    ``exp(S² Γ_L e^{-2Γ} / (1 + 2 N Γ_L e^{-2Γ}))``; the normalization is
    obtained by explicit summation.
    """
    if not config.is_correlation:
        raise ContractError(
            f"the correlation table requires theta = pi/2, got {config.theta!r}"
        )

    decay = config.decay
    n = config.n
    suppression = decay.gamma_l * math.exp(-2 * decay.gamma_total)
    exponent = suppression / (1 + 2 * n * suppression)

    k = np.arange(n + 1)
    support = s_support(n)
    log_multiplicity = special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)
    log_weights = log_multiplicity + exponent * support.astype("float64") ** 2
    weights = np.exp(log_weights - log_weights.max())

    return CollectiveExactS(
        config=config, method="correlation_table", table=weights / weights.sum()
    )


def product_table(config: MeasurementConfig) -> CollectiveExactS:
    """ensemble readout of the product distribution on the exact support"""
    distribution = product_distribution(config)
    return CollectiveExactS(
        config=config, method="product_table", table=distribution.probabilities()
    )


def collective_moments(config: MeasurementConfig) -> tuple[float, float]:
    """closed form ``⟨S⟩`` and ``⟨S²⟩`` of the collective field model

    Returns
    -------
    mean_s : float
        ``N e^{-Γ} cos θ``
    mean_s2 : float
        ``N + N (N - 1) e^{-2Γ_H} (1 + cos 2θ e^{-4Γ_L}) / 2``
    """
    decay = config.decay
    n = config.n
    mean_s = n * math.exp(-decay.gamma_total) * math.cos(config.theta)
    pair = (
        math.exp(-2 * decay.gamma_h)
        * (1 + math.cos(2 * config.theta) * math.exp(-4 * decay.gamma_l))
        / 2
    )
    return mean_s, n + n * (n - 1) * pair


def total_variation(p: ReadoutDistribution, q: ReadoutDistribution) -> float:
    """total variation distance of the ensemble readouts"""
    if p.n != q.n:
        raise DomainError(
            f"distributions describe different numbers of thermometers: {p.n} and {q.n}"
        )
    return 0.5 * float(np.sum(np.abs(p.probabilities() - q.probabilities())))


_PAULI_X = np.array([[0, 1], [1, 0]], dtype="complex128")
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype="complex128")
_IDENTITY = np.eye(2, dtype="complex128")


def two_thermometer_state(decay: DecayFactors) -> np.ndarray:
    """reduced state of two thermometers to first order in Γ_L

    .. math::

        ρ ≈ \\frac{1}{4}(I + e^{-Γ} σ^x)(I + e^{-Γ} σ^x)
            + \\frac{1}{2} Γ_L e^{-2Γ} σ^y σ^y

    The basis is ``|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩`` in the eigenbasis of σᶻ.

    Returns
    -------
    rho : numpy.ndarray
        Hermitian 4×4 matrix with unit trace.
    """
    coherence = math.exp(-decay.gamma_total)
    single = (_IDENTITY + coherence * _PAULI_X) / 2
    correlation = 0.5 * decay.gamma_l * math.exp(-2 * decay.gamma_total)

    rho = np.kron(single, single) + correlation * np.kron(_PAULI_Y, _PAULI_Y)
    return rho / np.trace(rho).real


def _from_oracle(config: MeasurementConfig) -> ExactEnumerated:
    from xqtherm.oracle import exact_distribution

    return exact_distribution(config.decay.decay_matrix(config.n), config.theta)


BUILDERS = {
    "collective_field": collective_field_distribution,
    "product": product_distribution,
    "correlation": correlation_distribution,
    "gaussian_theta0": gaussian_s_theta0,
    "correlation_table": correlation_table,
    "product_table": product_table,
    "exact_enumerated": _from_oracle,
}


def write_table(support, probabilities, attrs, path_or_buffer=None) -> str | None:
    """write ``S p(S)`` rows preceded by a ``#`` header"""
    buffer = io.StringIO()
    buffer.write("# xqtherm-p_of_s v1\n")
    buffer.write("# " + " ".join(f"{k}={v}" for k, v in attrs.items()) + "\n")
    buffer.write("# S p\n")
    for s, p in zip(support, probabilities):
        buffer.write(f"{int(s)} {float(p):.17g}\n")

    text = buffer.getvalue()
    if path_or_buffer is None:
        return text
    if isinstance(path_or_buffer, (str, os.PathLike)):
        with open(path_or_buffer, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        path_or_buffer.write(text)
    return None
