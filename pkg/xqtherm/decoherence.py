import functools
import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal

try:
    from typing import Self
except ImportError:  # pragma: no cover
    from typing_extensions import Self

import numpy as np
import xarray as xr
from scipy import integrate

from xqtherm.errors import DomainError, NumericalError
from xqtherm.spectral import SpectralModel
from xqtherm.utils import _check_beta, _check_nonnegative, _check_time

logger = logging.getLogger(__name__)

Band = Literal["low", "high", "full"]

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-15
QUAD_LIMIT = 200
# quad reports roundoff trouble long before the result becomes unusable
QUAD_ACCEPTABLE_RELERR = 1e-7
# below this value of β ω the Bose factors are replaced by their Taylor series
TAYLOR_THRESHOLD = 1e-6

BANDS = ("low", "high", "full")


def _filter(omega, t):
    # (1 - cos ωt) / ω² without cancellation; tends to t²/2 for ω → 0
    return 0.5 * t**2 * np.sinc(omega * t / (2 * np.pi)) ** 2


def _thermal_weight(omega, beta):
    # ω (coth(βω/2) - 1) = 2ω / (exp(βω) - 1), tends to 2/β for ω → 0
    x = beta * omega
    if x < TAYLOR_THRESHOLD:
        return (2 / beta) * (1 - x / 2 + x**2 / 12)
    return 2 * omega * math.exp(-x) / -math.expm1(-x)


def _coth_derivative_weight(omega, beta):
    # -(ω²/2) / sinh²(βω/2) = ω · d/dβ coth(βω/2), tends to -2/β² for ω → 0
    y = beta * omega / 2
    if y < TAYLOR_THRESHOLD:
        ratio = 1 - y**2 / 6
    else:
        ratio = 2 * y * math.exp(-y) / -math.expm1(-2 * y)
    return -(2 / beta**2) * ratio**2


def _band_limits(model: SpectralModel, band: Band) -> tuple[float, float]:
    upper = model.upper_frequency
    crossover = min(model.omega_co, upper)
    limits = {
        "low": (0.0, crossover),
        "high": (crossover, upper),
        "full": (0.0, upper),
    }
    if band not in limits:
        raise DomainError(f"band must be one of {BANDS}, got {band!r}")
    return limits[band]


def _subintervals(lower, upper, scales: Iterable[float]) -> list[tuple[float, float]]:
    points = sorted({s for s in scales if lower < s < upper})
    edges = [lower, *points, upper]
    return list(zip(edges[:-1], edges[1:]))


def _quad(func: Callable[[float], float], lower, upper, scales, diagnostics) -> float:
    total = 0.0
    total_abserr = 0.0
    failures = []
    for a, b in _subintervals(lower, upper, scales):
        value, abserr, _, *message = integrate.quad(
            func,
            a,
            b,
            epsabs=QUAD_EPSABS,
            epsrel=QUAD_EPSREL,
            limit=QUAD_LIMIT,
            full_output=1,
        )
        logger.debug("quad on [%g, %g]: %g (abserr %g)", a, b, value, abserr)
        total += value
        total_abserr += abserr
        if message:
            failures.append(((a, b), message[0]))

    # the error is judged against the whole integral, not per subinterval
    if failures and total_abserr > QUAD_ACCEPTABLE_RELERR * abs(total):
        intervals, messages = zip(*failures)
        raise NumericalError(
            "decay integral did not converge",
            diagnostics
            | {
                "intervals": list(intervals),
                "estimate": total,
                "abserr": total_abserr,
                "message": messages[0],
            },
        )
    return total


def _model_scales(model: SpectralModel, t: float) -> list[float]:
    scales = list(model.breakpoints) + list(model.scale_frequencies)
    if t > 0:
        scales += [1 / t, 10 / t, 100 / t]
    return scales


def _thermal_scales(beta: float) -> list[float]:
    return [k / beta for k in (1, 5, 20, 50)]


def _check_integrable(model: SpectralModel):
    if not math.isfinite(model.low_frequency_slope):
        raise NumericalError(
            "decay integral does not converge: the spectral density does not vanish at ω = 0",
            {"kind": model.kind, "slope": model.low_frequency_slope},
        )


def vacuum_integral(model: SpectralModel, t: float, band: Band = "full") -> float:
    """temperature independent part ``4 ∫ J(ω) (1 − cos ωt)/ω² dω`` of the decay"""
    _check_time(t)
    lower, upper = _band_limits(model, band)
    if t == 0 or upper <= lower:
        return 0.0

    def integrand(omega):
        return 4 * float(model.j(omega)) * _filter(omega, t)

    diagnostics = {"part": "vacuum", "band": band, "time": t}
    return _quad(integrand, lower, upper, _model_scales(model, t), diagnostics)


def thermal_integral(model: SpectralModel, beta: float, t: float, band: Band = "full") -> float:
    """thermal part ``4 ∫ J(ω) (coth(βω/2) − 1) (1 − cos ωt)/ω² dω`` of the decay"""
    _check_beta(beta)
    _check_time(t)
    lower, upper = _band_limits(model, band)
    if t == 0 or upper <= lower or math.isinf(beta):
        return 0.0
    _check_integrable(model)

    def integrand(omega):
        return (
            4
            * float(model.j_over_omega(omega))
            * _thermal_weight(omega, beta)
            * _filter(omega, t)
        )

    diagnostics = {"part": "thermal", "band": band, "beta": beta, "time": t}
    scales = _model_scales(model, t) + _thermal_scales(beta)
    return _quad(integrand, lower, upper, scales, diagnostics)


def gamma_beta_derivative(model: SpectralModel, beta: float, t: float, band: Band = "full") -> float:
    """β-derivative of `gamma_beta_integral`

    Obtained by integrating the analytically differentiated integrand,
    ``d/dβ coth(βω/2) = −(ω/2) / sinh²(βω/2)``.
    """
    _check_beta(beta)
    _check_time(t)
    lower, upper = _band_limits(model, band)
    if t == 0 or upper <= lower or math.isinf(beta):
        return 0.0
    _check_integrable(model)

    def integrand(omega):
        return (
            4
            * float(model.j_over_omega(omega))
            * _coth_derivative_weight(omega, beta)
            * _filter(omega, t)
        )

    diagnostics = {"part": "derivative", "band": band, "beta": beta, "time": t}
    scales = _model_scales(model, t) + _thermal_scales(beta)
    return _quad(integrand, lower, upper, scales, diagnostics)


def gamma_beta_integral(model: SpectralModel, beta: float, t: float, band: Band = "full") -> float:
    """temperature dependent decay integral

    .. math::

        Γ^β(t) = 4 \\int_{band} J(ω) \\coth\\frac{βω}{2} \\frac{1 - \\cos ωt}{ω^2} dω

    Parameters
    ----------
    model : SpectralModel
        The bath spectrum.
    beta : float
        Inverse temperature (``k_B = 1``). ``numpy.inf`` selects the zero
        temperature limit.
    t : float
        Evolution time.
    band : {"low", "high", "full"}, default: "full"
        Integration range: ``[0, ω_co]``, ``(ω_co, Ω_max]`` or ``[0, Ω_max]``.

    Returns
    -------
    gamma : float
        The dimensionless decay value.

    Raises
    ------
    DomainError
        if ``beta ≤ 0`` or ``t < 0``
    NumericalError
        if the quadrature does not converge
    """
    return vacuum_integral(model, t, band) + thermal_integral(model, beta, t, band)


def white_noise_decay(gamma_white: float, t: float) -> float:
    """decay caused by white noise of strength ``gamma_white``: ``2 γ t``"""
    _check_nonnegative("gamma_white", gamma_white)
    _check_time(t)
    return 2 * gamma_white * t


def zero_temperature_ohmic_decay(alpha: float, omega_c: float, t: float) -> float:
    """closed form ``2 α ln(1 + ω_c² t²)`` of the zero temperature Ohmic decay"""
    return 2 * alpha * math.log1p((omega_c * t) ** 2)


@dataclass(frozen=True)
class DecayFactors:
    """
    Cooperative decay factors at a working point ``(β, t)``.

    The decay matrix is ``Γ_ij = Γ_L + Γ_H δ_ij``.

    Parameters
    ----------
    gamma_l : float
        Low frequency (cooperative) decay factor Γ_L.
    gamma_h : float
        High frequency (individual) decay factor Γ_H, white noise included.
    d_gamma_l_d_beta, d_gamma_h_d_beta : float, default: 0.0
        β-derivatives of Γ_L and Γ_H.
    beta : float, optional
        Inverse temperature of the working point.
    time : float, optional
        Evolution time of the working point.
    """

    gamma_l: float
    gamma_h: float
    d_gamma_l_d_beta: float = 0.0
    d_gamma_h_d_beta: float = 0.0
    beta: float = math.nan
    time: float = math.nan
    gamma_total: float = field(init=False)

    def __post_init__(self):
        _check_nonnegative("gamma_l", self.gamma_l)
        _check_nonnegative("gamma_h", self.gamma_h)
        object.__setattr__(self, "gamma_total", self.gamma_l + self.gamma_h)

    @property
    def d_gamma_d_beta(self) -> float:
        """β-derivative of the total decay ``Γ = Γ_L + Γ_H``"""
        return self.d_gamma_l_d_beta + self.d_gamma_h_d_beta

    def to_dict(self: Self) -> dict[str, Any]:
        return {
            "beta": self.beta,
            "time": self.time,
            "gamma_l": self.gamma_l,
            "gamma_h": self.gamma_h,
            "gamma_total": self.gamma_total,
            "d_gamma_l_d_beta": self.d_gamma_l_d_beta,
            "d_gamma_h_d_beta": self.d_gamma_h_d_beta,
        }

    def decay_matrix(self, n: int):
        """the N×N decay matrix ``Γ_L + Γ_H δ_ij``"""
        from xqtherm.oracle import DecayMatrix

        return DecayMatrix.collective(n, self.gamma_l, self.gamma_h)


@functools.lru_cache(maxsize=4096)
def decay_factors(model: SpectralModel, beta: float, t: float) -> DecayFactors:
    """compute Γ_L, Γ_H and their β-derivatives

    Results are cached; the arguments are immutable.

    Parameters
    ----------
    model : SpectralModel
        The bath spectrum.
    beta : float
        Inverse temperature.
    t : float
        Evolution time.

    Returns
    -------
    decay : DecayFactors
    """
    _check_beta(beta)
    _check_time(t)

    gamma_l = gamma_beta_integral(model, beta, t, "low")
    gamma_h = gamma_beta_integral(model, beta, t, "high") + white_noise_decay(
        model.gamma_white, t
    )

    return DecayFactors(
        gamma_l=gamma_l,
        gamma_h=gamma_h,
        d_gamma_l_d_beta=gamma_beta_derivative(model, beta, t, "low"),
        d_gamma_h_d_beta=gamma_beta_derivative(model, beta, t, "high"),
        beta=beta,
        time=t,
    )


DECAY_VARIABLES = (
    "gamma_l",
    "gamma_h",
    "gamma_total",
    "d_gamma_l_d_beta",
    "d_gamma_h_d_beta",
)


def decay_table(
    model: SpectralModel,
    betas: Sequence[float],
    times: Sequence[float],
    *,
    threads: int = 1,
) -> xr.Dataset:
    """tabulate the decay factors on a ``(beta, time)`` grid

    Parameters
    ----------
    model : SpectralModel
        The bath spectrum.
    betas, times : sequence of float
        Grid coordinates.
    threads : int, default: 1
        Number of worker threads. The result does not depend on it.

    Returns
    -------
    table : xarray.Dataset
        Dataset with one variable per decay quantity over ``(beta, time)``.
    """
    points = [(beta, t) for beta in betas for t in times]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(executor.map(lambda p: decay_factors(model, *p), points))

    shape = (len(betas), len(times))
    data_vars = {
        name: (
            ("beta", "time"),
            np.reshape([getattr(r, name) for r in results], shape),
        )
        for name in DECAY_VARIABLES
    }

    return xr.Dataset(
        data_vars,
        coords={"beta": list(betas), "time": list(times)},
        attrs={k: v for k, v in model.to_dict().items() if np.ndim(v) == 0},
    )
