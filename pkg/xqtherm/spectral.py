import logging
import os
from dataclasses import dataclass
from typing import Any, ClassVar, Literal, TypeVar

try:
    from typing import Self
except ImportError:  # pragma: no cover
    from typing_extensions import Self

import numpy as np
from scipy import integrate

from xqtherm.config import translate_parameters
from xqtherm.errors import DomainError
from xqtherm.utils import SPECTRUM_REGISTRY, _check_nonnegative, register_spectrum

logger = logging.getLogger(__name__)

T = TypeVar("T")

#: Ohmic spectra are integrated up to this multiple of the cutoff frequency
OHMIC_CUTOFF_MULTIPLE = 50.0


def _as_result(values, omega):
    if np.ndim(omega) == 0:
        return float(values)
    return values


def _frequencies(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype="float64")
    if np.any(omega < 0) or np.any(np.isnan(omega)):
        raise DomainError("angular frequencies must be nonnegative")
    return omega


@dataclass(frozen=True, kw_only=True)
class SpectralModel:
    """Base class for bath spectra

    Parameters
    ----------
    omega_co : float, default: 0.0
        Cooperative crossover frequency. Below it the noise is common to all
        thermometers, above it every thermometer sees independent noise.
    gamma_white : float, default: 0.0
        Strength γ of the temperature independent white noise,
        ``⟨{ζ(τ₁), ζ(τ₂)}⟩ = γ δ(τ₁ − τ₂)``. It only contributes to the
        individual (high frequency) decay.
    """

    omega_co: float = 0.0
    gamma_white: float = 0.0

    kind: ClassVar[str] = ""

    def __post_init__(self):
        _check_nonnegative("omega_co", self.omega_co)
        if not np.isfinite(self.omega_co):
            raise DomainError("omega_co must be finite")
        _check_nonnegative("gamma_white", self.gamma_white)

    @classmethod
    def from_dict(cls: type[T], mapping: dict[str, Any]) -> T:
        """construct a spectral model from a mapping of parameters

        The ``"kind"`` entry selects the registered model class.
        """
        kind = mapping.get("kind", cls.kind or "ohmic")
        model_cls = SPECTRUM_REGISTRY.get(kind)
        if model_cls is None:
            raise ValueError(f"unknown spectrum kind: {kind}")

        return model_cls.from_dict(mapping)

    def to_dict(self: Self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "omega_co": self.omega_co,
            "gamma_white": self.gamma_white,
        }

    def j(self, omega: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    def j_over_omega(self, omega: np.ndarray) -> np.ndarray:
        """J(ω)/ω with the ω → 0 limit filled in"""
        raise NotImplementedError()

    @property
    def low_frequency_slope(self) -> float:
        """the limit of J(ω)/ω for ω → 0"""
        raise NotImplementedError()

    @property
    def upper_frequency(self) -> float:
        """frequency beyond which the spectrum is treated as zero"""
        raise NotImplementedError()

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """frequencies where the spectrum has kinks (passed to the integrator)"""
        return ()

    @property
    def scale_frequencies(self) -> tuple[float, ...]:
        """characteristic frequencies used to split the integration range"""
        return ()


@register_spectrum("ohmic")
@dataclass(frozen=True, kw_only=True)
class OhmicSpectrum(SpectralModel):
    """
    Ohmic spectral density ``J(ω) = α ω exp(−ω/ω_c)``.

    Parameters
    ----------
    alpha : float
        Dimensionless coupling strength.
    omega_c : float
        Cutoff frequency.
    omega_co : float, default: 0.0
        Cooperative crossover frequency.
    gamma_white : float, default: 0.0
        White noise strength.
    """

    alpha: float
    """float : The dimensionless coupling strength"""

    omega_c: float
    """float : The cutoff frequency"""

    kind: ClassVar[str] = "ohmic"

    def __post_init__(self):
        super().__post_init__()
        _check_nonnegative("alpha", self.alpha)
        if not self.omega_c > 0:
            raise DomainError(f"omega_c must be positive, got {self.omega_c!r}")

    @classmethod
    def from_dict(cls: type[T], mapping: dict[str, Any]) -> T:
        """construct an `OhmicSpectrum` object from a mapping of parameters

        Besides the canonical names, the aliases ``cutoff``, ``omega-c``,
        ``coupling``, ``gamma``, ``omega-co`` and the relative parameters
        ``omega_co_ratio`` (ω_co/ω_c) and ``gamma_ratio`` (γ/ω_c) are accepted.

        Parameters
        ----------
        mapping: mapping of str to any
            The parameters.

        Returns
        -------
        model : OhmicSpectrum
            The constructed spectrum.
        """
        translations = {
            "cutoff": ("omega_c", float),
            "omega-c": ("omega_c", float),
            "omega_c": ("omega_c", float),
            "coupling": ("alpha", float),
            "alpha": ("alpha", float),
            "omega-co": ("omega_co", float),
            "omega_co": ("omega_co", float),
            "gamma": ("gamma_white", float),
            "gamma-white": ("gamma_white", float),
            "gamma_white": ("gamma_white", float),
        }

        params = translate_parameters(mapping, translations, ignore=("kind",))

        # relative parameters need the (translated) cutoff
        omega_c = params.get("omega_c")
        for relative, absolute in [
            ("omega_co_ratio", "omega_co"),
            ("gamma_ratio", "gamma_white"),
        ]:
            if relative not in params:
                continue
            if absolute in params:
                raise ValueError(
                    f"Parameter {absolute} received multiple values: "
                    f"{sorted([absolute, relative])}"
                )
            if omega_c is None:
                raise ValueError(f"{relative} requires omega_c")
            params[absolute] = float(params.pop(relative)) * omega_c

        return cls(**params)

    def to_dict(self: Self) -> dict[str, Any]:
        """
        Dump the normalized spectrum parameters.

        Returns
        -------
        mapping : dict of str to any
            The normalized parameters.
        """
        return super().to_dict() | {"alpha": self.alpha, "omega_c": self.omega_c}

    def j(self, omega):
        omega = _frequencies(omega)
        return _as_result(self.alpha * omega * np.exp(-omega / self.omega_c), omega)

    def j_over_omega(self, omega):
        omega = _frequencies(omega)
        return _as_result(self.alpha * np.exp(-omega / self.omega_c), omega)

    @property
    def low_frequency_slope(self) -> float:
        return self.alpha

    @property
    def upper_frequency(self) -> float:
        return OHMIC_CUTOFF_MULTIPLE * self.omega_c

    @property
    def scale_frequencies(self) -> tuple[float, ...]:
        return (self.omega_c, 5 * self.omega_c, 20 * self.omega_c)


@register_spectrum("tabulated")
@dataclass(frozen=True, kw_only=True)
class TabulatedSpectrum(SpectralModel):
    """
    Spectral density given on a frequency grid.

    Values are linearly interpolated inside the grid and zero outside of it.

    Parameters
    ----------
    omegas : tuple of float
        Strictly increasing, nonnegative frequencies.
    values : tuple of float
        Nonnegative values of J at ``omegas``.
    omega_co : float, default: 0.0
        Cooperative crossover frequency. Must not exceed the last grid point.
    gamma_white : float, default: 0.0
        White noise strength.
    """

    omegas: tuple[float, ...]
    values: tuple[float, ...]

    kind: ClassVar[str] = "tabulated"

    def __post_init__(self):
        super().__post_init__()

        # normalize to tuples to keep the object hashable
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

        omegas = np.asarray(self.omegas)
        values = np.asarray(self.values)
        if omegas.size < 2 or omegas.shape != values.shape:
            raise DomainError(
                "tabulated spectra need at least two (omega, J) pairs of equal length"
            )
        if np.any(omegas < 0) or np.any(np.diff(omegas) <= 0):
            raise DomainError("tabulated frequencies must be nonnegative and strictly increasing")
        if np.any(values < 0):
            raise DomainError("tabulated spectral densities must be nonnegative")
        if self.omega_co > omegas[-1]:
            raise DomainError("omega_co exceeds the support of the tabulated spectrum")

    @classmethod
    def from_dict(cls: type[T], mapping: dict[str, Any]) -> T:
        translations = {
            "omega": ("omegas", tuple),
            "omegas": ("omegas", tuple),
            "j": ("values", tuple),
            "values": ("values", tuple),
            "omega-co": ("omega_co", float),
            "omega_co": ("omega_co", float),
            "gamma": ("gamma_white", float),
            "gamma-white": ("gamma_white", float),
            "gamma_white": ("gamma_white", float),
        }
        params = translate_parameters(mapping, translations, ignore=("kind",))
        if "path" in params:
            path = params.pop("path")
            return load_tabulated(path, **params)

        return cls(**params)

    def to_dict(self: Self) -> dict[str, Any]:
        return super().to_dict() | {
            "omegas": list(self.omegas),
            "values": list(self.values),
        }

    def j(self, omega):
        omega = _frequencies(omega)
        values = np.interp(omega, self.omegas, self.values, left=0.0, right=0.0)
        return _as_result(values, omega)

    def j_over_omega(self, omega):
        omega = _frequencies(omega)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(
                omega > 0, np.interp(omega, self.omegas, self.values, 0.0, 0.0) / omega, 0.0
            )
        ratio = np.where(omega > 0, ratio, self.low_frequency_slope)
        return _as_result(ratio, omega)

    @property
    def low_frequency_slope(self) -> float:
        if self.omegas[0] > 0:
            return 0.0
        if self.values[0] > 0:
            return np.inf

        return (self.values[1] - self.values[0]) / (self.omegas[1] - self.omegas[0])

    @property
    def upper_frequency(self) -> float:
        return self.omegas[-1]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.omegas


def evaluate_j(model: SpectralModel, omega):
    """evaluate the spectral density

    Parameters
    ----------
    model : SpectralModel
        The bath spectrum.
    omega : float or array-like
        Nonnegative angular frequencies.

    Returns
    -------
    j : float or numpy.ndarray
        ``J(ω)``.

    Raises
    ------
    DomainError
        if any frequency is negative
    """
    return model.j(omega)


def cooperative_j(model: SpectralModel, omega, same_thermometer: bool):
    """evaluate the cooperative spectral density ``J_ij(ω)``

    Cross terms (``same_thermometer=False``) only carry the spectral weight below
    the crossover frequency, the diagonal always carries the full spectrum.
    """
    values = np.asarray(model.j(omega))
    if same_thermometer:
        return _as_result(values, omega)

    cooperative = np.where(np.asarray(omega) <= model.omega_co, values, 0.0)
    return _as_result(cooperative, omega)


def total_weight(model: SpectralModel, epsrel: float = 1e-10) -> float:
    """integrate the spectral density over all frequencies"""
    upper = model.upper_frequency
    points = [p for p in model.breakpoints if 0 < p < upper] or None
    value, abserr = integrate.quad(
        model.j, 0.0, upper, points=points, epsabs=0.0, epsrel=epsrel, limit=1000
    )
    logger.debug("spectral weight %g (abserr %g)", value, abserr)
    return value


def temperature_regime(model: SpectralModel, beta: float) -> Literal["low", "high"]:
    """heuristic temperature regime: ``"low"`` if ``β ω_co ≥ 1``"""
    return "low" if beta * model.omega_co >= 1 else "high"


def load_tabulated(
    path: str | os.PathLike, *, omega_co: float = 0.0, gamma_white: float = 0.0
) -> TabulatedSpectrum:
    """read a tabulated spectrum

    The file contains two whitespace separated numeric columns (ω, J);
    lines starting with ``#`` are comments.

    Parameters
    ----------
    path : path-like
        The file to read.
    omega_co, gamma_white : float, default: 0.0
        Cooperative crossover frequency and white noise strength.

    Returns
    -------
    model : TabulatedSpectrum
    """
    try:
        table = np.loadtxt(path, comments="#", ndmin=2, dtype="float64")
    except (OSError, ValueError) as e:
        raise DomainError(f"cannot read tabulated spectrum {os.fspath(path)!r}: {e}") from e

    if table.shape[1] != 2:
        raise DomainError(
            f"tabulated spectra need exactly two columns, got {table.shape[1]}"
        )

    return TabulatedSpectrum(
        omegas=tuple(table[:, 0]),
        values=tuple(table[:, 1]),
        omega_co=omega_co,
        gamma_white=gamma_white,
    )


def save_tabulated(model: SpectralModel, path: str | os.PathLike, omegas=None):
    """write a spectrum in the two-column text format read by `load_tabulated`"""
    if omegas is None:
        if isinstance(model, TabulatedSpectrum):
            omegas = model.omegas
        else:
            omegas = np.linspace(0.0, model.upper_frequency, 2001)

    omegas = np.asarray(omegas, dtype="float64")
    table = np.column_stack([omegas, model.j(omegas)])
    np.savetxt(path, table, fmt="%.17g", header=f"xqtherm spectrum kind={model.kind}\nomega J")
