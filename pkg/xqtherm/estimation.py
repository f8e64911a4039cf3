import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import xarray as xr

from xqtherm.decoherence import DecayFactors, decay_factors
from xqtherm.distributions import (
    CollectiveGaussianS,
    MeasurementConfig,
    Observable,
    ReadoutDistribution,
    _normalize_observable,
)
from xqtherm.errors import ContractError, DomainError
from xqtherm.spectral import SpectralModel, temperature_regime
from xqtherm.utils import _check_beta

logger = logging.getLogger(__name__)

Regime = Literal["full", "high", "low"]

REGIMES = ("full", "high", "low")
# relative step of the central differences in β
FINITE_DIFFERENCE_STEP = 1e-3
# cells below this probability do not contribute to the Fisher information
PROBABILITY_FLOOR = 1e-30


def _regime_flag(model: SpectralModel | None, beta: float) -> str | None:
    if model is None or not math.isfinite(beta):
        return None
    return temperature_regime(model, beta)


@dataclass(frozen=True)
class FisherReport:
    """
    Fisher information about β and derived precision figures.

    Parameters
    ----------
    fisher : float
        Fisher information ``F(β)`` per shot.
    method : str
        How `fisher` was obtained.
    n_thermometers : int
        Number of thermometers N.
    theta : float
        Measurement angle.
    beta, time : float
        The working point.
    regime_flag : {"high", "low"} or None, optional
        Temperature regime suggested by ``β ω_co``.
    degenerate : bool, default: False
        Whether the measurement carries no noise (``Γ = 0``).
    details : dict, optional
        Method specific extra values.
    """

    fisher: float
    method: str
    n_thermometers: int
    theta: float
    beta: float = math.nan
    time: float = math.nan
    regime_flag: str | None = None
    degenerate: bool = False
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def crb_variance(self) -> float:
        """Cramér-Rao bound ``1/F`` of the variance of a single shot estimate"""
        if self.fisher > 0:
            return 1 / self.fisher
        return math.inf

    @property
    def precision_figure(self) -> float:
        """dimensionless precision ``β² F``"""
        return self.beta**2 * self.fisher

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n_thermometers,
            "theta": self.theta,
            "beta": self.beta,
            "time": self.time,
            "method": self.method,
            "fisher": self.fisher,
            "crb_variance": self.crb_variance,
            "precision_figure": self.precision_figure,
            "regime": self.regime_flag,
            "degenerate": self.degenerate,
        } | self.details


def _check_angle(config: MeasurementConfig):
    if not (config.is_independent or config.is_correlation):
        raise ContractError(
            f"analytic results exist for theta in {{0, pi/2}} only, got {config.theta!r}"
        )


def _decay_derivatives(decay: DecayFactors, regime: Regime) -> tuple[float, float]:
    # (dΓ_L/dβ, dΓ_H/dβ) retained by the regime
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}, got {regime!r}")
    d_low = decay.d_gamma_l_d_beta if regime in ("full", "low") else 0.0
    d_high = decay.d_gamma_h_d_beta if regime in ("full", "high") else 0.0
    return d_low, d_high


def _correlation_variance(decay: DecayFactors, n: int) -> float:
    return n * (1 + 2 * math.exp(-2 * decay.gamma_total) * n * decay.gamma_l)


def _correlation_variance_derivative(decay: DecayFactors, n: int, regime: Regime) -> float:
    d_low, d_high = _decay_derivatives(decay, regime)
    if regime == "low":
        # Γ_L dΓ/dβ is of second order in Γ_L
        bracket = d_low
    else:
        bracket = d_low - 2 * decay.gamma_l * (d_low + d_high)
    return 2 * n**2 * math.exp(-2 * decay.gamma_total) * bracket


def fisher_analytic(
    config: MeasurementConfig,
    regime: Regime = "full",
    *,
    model: SpectralModel | None = None,
) -> FisherReport:
    """Fisher information of the Gaussian large-N readout models

    At ``θ = 0`` the readout ``S`` is Gaussian with mean ``N e^{-Γ}`` and
    variance ``N (1 - e^{-2Γ})``; the Fisher information is

    .. math::

        F = \\frac{N}{e^{2Γ} - 1} \\left|\\frac{∂Γ}{∂β}\\right|^2

    At ``θ = π/2`` it has zero mean and variance
    ``v = N (1 + 2 e^{-2Γ} N Γ_L)``, and ``F = (∂_β v / v)^2 / 2``.

    Parameters
    ----------
    config : MeasurementConfig
        The measurement at the working point.
    regime : {"full", "high", "low"}, default: "full"
        ``"high"`` keeps only the temperature dependence of Γ_H, ``"low"``
        only the one of Γ_L to leading order, ``"full"`` both.
    model : SpectralModel, optional
        Used to flag the temperature regime of the working point.

    Returns
    -------
    report : FisherReport

    Raises
    ------
    ContractError
        if θ is neither 0 nor π/2
    """
    _check_angle(config)
    decay = config.decay
    n = config.n
    d_low, d_high = _decay_derivatives(decay, regime)

    degenerate = False
    if config.is_independent:
        derivative = d_low + d_high
        denominator = math.expm1(2 * decay.gamma_total)
        if derivative == 0:
            fisher = 0.0
        elif denominator == 0:
            degenerate = True
            fisher = math.inf
        else:
            fisher = n * derivative**2 / denominator
        details = {"d_gamma_d_beta": derivative}
    else:
        variance = _correlation_variance(decay, n)
        derivative = _correlation_variance_derivative(decay, n, regime)
        fisher = 0.5 * (derivative / variance) ** 2
        details = {"variance_s": variance, "d_variance_d_beta": derivative}

    return FisherReport(
        fisher=fisher,
        method=f"analytic_{regime}",
        n_thermometers=n,
        theta=config.theta,
        beta=decay.beta,
        time=decay.time,
        regime_flag=_regime_flag(model, decay.beta),
        degenerate=degenerate,
        details=details,
    )


def _warn_on_regime(report: FisherReport, expected: str):
    if report.regime_flag is not None and report.regime_flag != expected:
        logger.warning(
            "%s temperature formula used at beta=%g, which is in the %s temperature regime",
            expected,
            report.beta,
            report.regime_flag,
        )


def fisher_high_t(
    config: MeasurementConfig, *, model: SpectralModel | None = None
) -> FisherReport:
    """Fisher information when only Γ_H depends on the temperature

    θ = 0:

    .. math::

        F = \\frac{N}{e^{2Γ} - 1} \\left|\\frac{∂Γ_H}{∂β}\\right|^2

    θ = π/2:

    .. math::

        F = \\frac{8 (N Γ_L)^2}{(e^{2Γ} + 2 N Γ_L)^2} \\left|\\frac{∂Γ_H}{∂β}\\right|^2
    """
    report = fisher_analytic(config, "high", model=model)
    _warn_on_regime(report, "high")
    return report


def fisher_low_t(
    config: MeasurementConfig, *, model: SpectralModel | None = None
) -> FisherReport:
    """Fisher information when only Γ_L depends on the temperature

    θ = 0:

    .. math::

        F = \\frac{N}{e^{2Γ} - 1} \\left|\\frac{∂Γ_L}{∂β}\\right|^2

    θ = π/2:

    .. math::

        F = \\frac{2 N^2}{(e^{2Γ} + 2 N Γ_L)^2} \\left|\\frac{∂Γ_L}{∂β}\\right|^2
    """
    report = fisher_analytic(config, "low", model=model)
    _warn_on_regime(report, "low")
    return report


def _gaussian_fisher(
    lower: CollectiveGaussianS, center: CollectiveGaussianS, upper: CollectiveGaussianS, h: float
) -> float:
    d_mean = (upper.mean_s - lower.mean_s) / (2 * h)
    d_variance = (upper.variance_s - lower.variance_s) / (2 * h)
    variance = center.variance_s
    if variance == 0:
        return math.inf if d_mean != 0 else 0.0
    return d_mean**2 / variance + 0.5 * (d_variance / variance) ** 2


def _log_derivative(
    dist: ReadoutDistribution, decays: dict[float, DecayFactors], h: float
) -> np.ndarray:
    def derivative(step):
        upper = np.log(dist.rebuild(decays[step]).probabilities())
        lower = np.log(dist.rebuild(decays[-step]).probabilities())
        return (upper - lower) / (2 * step)

    # Richardson extrapolation of the central differences
    return (4 * derivative(h / 2) - derivative(h)) / 3


def fisher_exact(
    dist: ReadoutDistribution,
    beta: float,
    model: SpectralModel,
    t: float,
) -> FisherReport:
    """Fisher information of a tabulated readout distribution

    .. math::

        F(β) = \\sum_S p(S) \\left(\\frac{∂ \\ln p(S)}{∂β}\\right)^2

    The logarithmic derivative is obtained from central differences with step
    ``h = 10⁻³ β`` improved by Richardson extrapolation from ``h`` and ``h/2``.
    The distribution is rebuilt with the decay factors of ``β ± h`` and
    ``β ± h/2``. Cells with ``p(S) < 10⁻³⁰`` are skipped.

    Gaussian forms use the closed form Fisher information of a normal
    density, with the mean and variance differentiated numerically.

    Parameters
    ----------
    dist : ReadoutDistribution
        The distribution at ``β``.
    beta : float
        Inverse temperature of the working point.
    model : SpectralModel
        The bath spectrum.
    t : float
        Evolution time.

    Returns
    -------
    report : FisherReport
    """
    _check_beta(beta)
    if not math.isfinite(beta):
        raise DomainError("the Fisher information needs a finite beta")

    h = FINITE_DIFFERENCE_STEP * beta
    steps = (h, -h, h / 2, -h / 2)
    decays = {step: decay_factors(model, beta + step, t) for step in steps}
    center = dist.rebuild(decay_factors(model, beta, t))
    details: dict[str, Any] = {"step": h}

    if isinstance(center, CollectiveGaussianS):
        fisher = _gaussian_fisher(
            dist.rebuild(decays[-h / 2]), center, dist.rebuild(decays[h / 2]), h / 2
        )
        degenerate = center.variance_s == 0
    else:
        probabilities = center.probabilities()
        mask = probabilities >= PROBABILITY_FLOOR
        with np.errstate(divide="ignore", invalid="ignore"):
            score = _log_derivative(center, decays, h)
        fisher = float(np.sum(probabilities[mask] * score[mask] ** 2))
        degenerate = bool(np.count_nonzero(mask) == 1)
        details["skipped_cells"] = int(np.count_nonzero(~mask))

    logger.debug("exact Fisher information of %s at beta=%g: %g", dist.method, beta, fisher)
    return FisherReport(
        fisher=fisher,
        method=f"exact_{dist.method}",
        n_thermometers=dist.n,
        theta=dist.config.theta,
        beta=beta,
        time=t,
        regime_flag=_regime_flag(model, beta),
        degenerate=degenerate,
        details=details,
    )


@dataclass(frozen=True)
class Score:
    """
    Gaussian score function of the ensemble readout.

    Parameters
    ----------
    values : numpy.ndarray
        ``L_β`` for each readout.
    coefficient : float
        ``c₁`` (θ = 0) or ``c₂`` (θ = π/2).
    expectation : float
        Model expectation of the observable.
    observable : {"S", "S2"}
        The observable the score is linear in.
    degenerate : bool
        Whether the readout is noiseless; `values` are then NaN.
    """

    values: np.ndarray
    coefficient: float
    expectation: float
    observable: Observable
    degenerate: bool = False


def score_function(config: MeasurementConfig, s) -> Score:
    """score ``∂_β ln p`` of the Gaussian readout model

    At θ = 0, ``L = c₁ (S - N e^{-Γ})`` with
    ``c₁ = -e^{-Γ} ∂_β Γ / (1 - e^{-2Γ})``. At θ = π/2,
    ``L = c₂ (S² - v)`` with ``v = N (1 + 2 e^{-2Γ} N Γ_L)`` and
    ``c₂ = ∂_β v / (2 v²)``. The score has zero mean under the model and its
    variance is the Fisher information of `fisher_analytic`.

    Parameters
    ----------
    config : MeasurementConfig
        The measurement at the working point.
    s : array-like
        Ensemble readouts ``S``.

    Returns
    -------
    score : Score
    """
    _check_angle(config)
    decay = config.decay
    n = config.n
    s = np.asarray(s, dtype="float64")

    if config.is_independent:
        observable = "S"
        expectation = n * math.exp(-decay.gamma_total)
        denominator = -math.expm1(-2 * decay.gamma_total)
        if denominator == 0:
            logger.warning("score function of a noiseless readout (gamma = 0) is undefined")
            return Score(
                values=np.full(s.shape, np.nan),
                coefficient=math.nan,
                expectation=expectation,
                observable=observable,
                degenerate=True,
            )
        coefficient = (
            -math.exp(-decay.gamma_total) * decay.d_gamma_d_beta / denominator
        )
        values = coefficient * (s - expectation)
    else:
        observable = "S2"
        expectation = _correlation_variance(decay, n)
        derivative = _correlation_variance_derivative(decay, n, "full")
        coefficient = derivative / (2 * expectation**2)
        values = coefficient * (s**2 - expectation)

    return Score(
        values=values,
        coefficient=coefficient,
        expectation=expectation,
        observable=observable,
    )


@dataclass(frozen=True)
class GroupedFisherReport:
    """
    Fisher information of the grouping strategy.

    Parameters
    ----------
    fisher : float
        Total Fisher information of the ``N`` thermometers.
    group_size : float
        ``N₀ = e^{2Γ} / (2 Γ_L)``, rounded.
    n_groups : float
        ``N / N₀``.
    ratio_to_independent : float
        Gain over measuring all thermometers independently.
    fallback : bool
        Whether the independent measurement was used because ``N₀ < 2``.
    saturated : bool
        Whether the full ensemble is beyond the saturation scale
        (``2 N Γ_L > e^{2Γ}``).
    """

    fisher: float
    group_size: float
    n_groups: float
    ratio_to_independent: float
    fallback: bool = False
    saturated: bool = False


def grouped_fisher(n_total: int, decay: DecayFactors) -> GroupedFisherReport:
    """Fisher information when the thermometers are split into groups of size N₀

    Each group is read out by a correlation measurement; groups are
    independent. With ``N₀ = e^{2Γ} / (2 Γ_L)``,

    .. math::

        F = \\frac{N N₀}{2 e^{4Γ}} \\left|\\frac{∂Γ_L}{∂β}\\right|^2

    which beats the independent measurement by ``(1 - e^{-2Γ}) e^{-2Γ} N₀ / 2``.
    Without cooperative decay (``Γ_L = 0``) or for ``N₀ < 2`` grouping cannot
    help and the independent Fisher information is reported with the
    `fallback` flag set.

    Parameters
    ----------
    n_total : int
        Total number of thermometers.
    decay : DecayFactors
        Decay factors at the working point.

    Returns
    -------
    report : GroupedFisherReport
    """
    if n_total < 1:
        raise DomainError(f"number of thermometers must be positive, got {n_total}")

    gamma = decay.gamma_total
    derivative = decay.d_gamma_l_d_beta
    independent = n_total * derivative**2 / math.expm1(2 * gamma) if gamma > 0 else math.inf
    saturated = 2 * n_total * decay.gamma_l > math.exp(2 * gamma)

    group_size = (
        round(math.exp(2 * gamma) / (2 * decay.gamma_l)) if decay.gamma_l > 0 else math.inf
    )
    if decay.gamma_l == 0 or group_size < 2:
        logger.info("group size %s, falling back to independent measurement", group_size)
        return GroupedFisherReport(
            fisher=independent,
            group_size=group_size,
            n_groups=float(n_total),
            ratio_to_independent=1.0,
            fallback=True,
            saturated=saturated,
        )

    return GroupedFisherReport(
        fisher=n_total * group_size * derivative**2 / (2 * math.exp(4 * gamma)),
        group_size=group_size,
        n_groups=n_total / group_size,
        ratio_to_independent=-math.expm1(-2 * gamma) * math.exp(-2 * gamma) * group_size / 2,
        saturated=saturated,
    )


def saturation_scale(decay: DecayFactors) -> float:
    """ensemble size ``N* = e^{2Γ} / (2 Γ_L)`` where the quadratic scaling ends"""
    if decay.gamma_l == 0:
        return math.inf
    return math.exp(2 * decay.gamma_total) / (2 * decay.gamma_l)


@dataclass(frozen=True)
class SNRReport:
    """
    Signal to noise ratio of a temperature change.

    Parameters
    ----------
    observable : {"S", "S2"}
        The observable.
    snr : float
        ``|δŌ| / ΔO``.
    signal : float
        Change ``δŌ`` of the expectation.
    noise : float
        Standard deviation ``ΔO`` at the reference temperature.
    precision : float
        Temperature resolution ``ΔO / |∂Ō/∂β|``.
    delta_beta : float
        The temperature change.
    degenerate : bool
        Whether the noise or the signal vanishes.
    """

    observable: Observable
    snr: float
    signal: float
    noise: float
    precision: float
    delta_beta: float
    degenerate: bool = False


def snr(
    observable: Observable,
    dist_pair: tuple[ReadoutDistribution, ReadoutDistribution],
    delta_beta: float | None = None,
) -> SNRReport:
    """signal to noise ratio of the readout of an observable

    Parameters
    ----------
    observable : {"S", "S2"}
        The observable.
    dist_pair : pair of ReadoutDistribution
        Distributions at ``β`` and ``β + δβ``.
    delta_beta : float, optional
        The temperature change ``δβ``. Defaults to ``10⁻³ β``, with ``β`` taken
        from the decay factors of the reference distribution.

    Returns
    -------
    report : SNRReport
    """
    observable = _normalize_observable(observable)
    reference, shifted = dist_pair
    if delta_beta is None:
        beta = reference.config.decay.beta
        if not math.isfinite(beta):
            raise DomainError(
                "delta_beta cannot be derived: the reference decay factors carry no finite beta"
            )
        delta_beta = 1e-3 * beta
    if delta_beta == 0:
        raise DomainError("delta_beta must not vanish")

    signal = shifted.mean(observable) - reference.mean(observable)
    noise = math.sqrt(max(reference.variance(observable), 0.0))

    degenerate = noise == 0 or signal == 0
    if noise == 0:
        ratio = math.inf if signal != 0 else 0.0
    else:
        ratio = abs(signal) / noise
    precision = noise * abs(delta_beta) / abs(signal) if signal != 0 else math.inf

    return SNRReport(
        observable=observable,
        snr=ratio,
        signal=signal,
        noise=noise,
        precision=precision,
        delta_beta=delta_beta,
        degenerate=degenerate,
    )


def fisher_sweep(
    model: SpectralModel,
    beta: float,
    ns: Sequence[int],
    thetas: Sequence[float],
    times: Sequence[float],
    regime: Regime = "full",
) -> xr.Dataset:
    """analytic Fisher information over ``(theta, n, time)``

    Returns
    -------
    table : xarray.Dataset
        Variables ``fisher`` and ``precision_figure``.
    """
    decays = [decay_factors(model, beta, t) for t in times]
    fisher = np.empty((len(thetas), len(ns), len(times)))
    for (i, theta), (j, n) in itertools.product(enumerate(thetas), enumerate(ns)):
        for k, decay in enumerate(decays):
            config = MeasurementConfig(n_thermometers=n, theta=theta, decay=decay)
            fisher[i, j, k] = fisher_analytic(config, regime).fisher

    dims = ("theta", "n", "time")
    return xr.Dataset(
        {"fisher": (dims, fisher), "precision_figure": (dims, beta**2 * fisher)},
        coords={"theta": list(thetas), "n": list(ns), "time": list(times)},
        attrs={"beta": beta, "regime": regime},
    )


def optimize_time(
    model: SpectralModel,
    beta: float,
    config: MeasurementConfig,
    t_grid: Sequence[float],
    regime: Regime = "full",
) -> tuple[float, FisherReport]:
    """evolution time maximizing the analytic Fisher information

    The decay factors of `config` are replaced by the ones at each grid time.
    Ties are resolved toward the smaller time.

    Returns
    -------
    t_best : float
    report : FisherReport
        The report at `t_best`.
    """
    if len(t_grid) == 0:
        raise DomainError("the time grid is empty")
    if np.any(np.diff(np.asarray(t_grid, dtype=float)) <= 0):
        raise DomainError("the time grid must be strictly increasing")

    reports = [
        fisher_analytic(config.with_decay(decay_factors(model, beta, t)), regime, model=model)
        for t in t_grid
    ]
    values = np.array([report.fisher for report in reports])
    best = int(np.argmax(values))
    return float(t_grid[best]), reports[best]


def finite_range_scaling_exponent(alpha_exponent: float, dimension: int) -> tuple[float, float]:
    """precision scaling with finite-range interactions

    For thermometers coupled through interactions decaying as ``r^{-α}`` in
    ``d`` dimensions, ``ε = min(α/d, 1)`` and the Fisher information
    scales as ``N^{2-ε}``.

    Returns
    -------
    epsilon : float
    exponent : float
        ``2 - ε``.
    """
    if dimension < 1:
        raise DomainError(f"dimension must be a positive integer, got {dimension}")
    if alpha_exponent < 0:
        raise DomainError(f"interaction exponent must be nonnegative, got {alpha_exponent}")

    epsilon = min(alpha_exponent / dimension, 1.0)
    return epsilon, 2 - epsilon


@dataclass(frozen=True)
class ScalingFit:
    """
    Least-squares fit of ``log F = exponent · log N + intercept``.

    Parameters
    ----------
    exponent, intercept : float
        Fit coefficients.
    residuals : numpy.ndarray
        Residuals of ``log F``.
    total_sum_of_squares : float, optional
        Sum of squared deviations of ``log F`` from its mean.
    """

    exponent: float
    intercept: float
    residuals: np.ndarray
    total_sum_of_squares: float = math.nan

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))

    @property
    def r_squared(self) -> float:
        """coefficient of determination of the fit in log space"""
        if not self.total_sum_of_squares > 0:
            return math.nan
        return 1 - float(np.sum(self.residuals**2)) / self.total_sum_of_squares


def fit_scaling_exponent(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """fit the power-law exponent of the Fisher information in N

    Parameters
    ----------
    points : sequence of (N, F)
        At least three points with distinct positive N and positive F.

    Returns
    -------
    fit : ScalingFit
    """
    values = np.asarray(points, dtype="float64")
    if values.ndim != 2 or values.shape[1] != 2 or values.shape[0] < 3:
        raise DomainError("need at least three (N, F) points")
    n, fisher = values.T
    if len(np.unique(n)) != len(n):
        raise DomainError("the values of N must be distinct")
    if np.any(n <= 0) or np.any(fisher <= 0):
        raise DomainError("N and F must be positive")

    x = np.log(n)
    y = np.log(fisher)
    exponent, intercept = np.polyfit(x, y, deg=1)
    return ScalingFit(
        exponent=float(exponent),
        intercept=float(intercept),
        residuals=y - (exponent * x + intercept),
        total_sum_of_squares=float(np.sum((y - y.mean()) ** 2)),
    )
