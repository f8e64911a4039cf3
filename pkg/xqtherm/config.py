import itertools
import math
import operator
import os
from dataclasses import dataclass, field, fields
from typing import Any, ClassVar, Literal

try:
    ExceptionGroup
except NameError:  # pragma: no cover
    from exceptiongroup import ExceptionGroup

from xqtherm.errors import ConfigError


def _identity(x):
    return x


def translate_parameters(mapping, translations, ignore=()):
    """normalize parameter names

    Parameters
    ----------
    mapping : mapping of str to any
        The raw parameters.
    translations : mapping of str to (str, callable)
        Maps an accepted parameter name to its canonical name and a converter
        for its value. Names without a translation are passed through.
    ignore : iterable of str, optional
        Canonical names to drop from the result.

    Returns
    -------
    params : dict of str to any

    Raises
    ------
    ExceptionGroup
        if several aliases of the same parameter were given
    """

    def translate(name, value):
        new_name, translator = translations.get(name, (name, _identity))

        return new_name, name, translator(value)

    key = operator.itemgetter(0)
    translated = sorted((translate(name, value) for name, value in mapping.items()), key=key)
    grouped = {
        name: [(old_name, value) for _, old_name, value in group]
        for name, group in itertools.groupby(translated, key=key)
    }
    duplicated_parameters = {
        name: group for name, group in grouped.items() if len(group) != 1
    }
    if duplicated_parameters:
        raise ExceptionGroup(
            "received multiple values for parameters",
            [
                ValueError(
                    f"Parameter {name} received multiple values: {sorted(n for n, _ in group)}"
                )
                for name, group in duplicated_parameters.items()
            ],
        )

    return {name: group[0][1] for name, group in grouped.items() if name not in ignore}


def parse_theta(value) -> float:
    """parse a measurement angle; accepts numbers and ``pi/2``-style tokens"""
    if not isinstance(value, str):
        return float(value)

    token = value.strip().lower().replace(" ", "")
    if token in {"pi/2", "π/2"}:
        return math.pi / 2
    if token.endswith("*pi"):
        return float(token[: -len("*pi")]) * math.pi
    return float(token)


def _parse_list(converter):
    def parse(value):
        if isinstance(value, str):
            items = [item for item in value.split(",") if item.strip()]
        elif isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [value]

        return tuple(converter(item) for item in items)

    return parse


def _parse_int(value) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass

    # "1e6" and 100.0 are accepted, exact only up to 2**53
    number = float(value)
    if not number.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(number)


def _parse_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in {"1", "true", "yes", "on"}
    return bool(value)


def _default_ns():
    return tuple(2**k for k in range(8))


def _default_times():
    return tuple(round(0.01 * k, 10) for k in range(1, 101))


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """read a flat ``key = value`` configuration file

    Blank lines and lines starting with ``#`` are ignored, as are trailing
    ``#`` comments.

    Raises
    ------
    ConfigError
        if the file cannot be read or a line is not of the form ``key = value``
    """
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError("config", f"cannot read {os.fspath(path)!r}: {e}") from e

    mapping = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError("config", f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        if key in mapping:
            raise ConfigError(key, f"line {lineno}: duplicated key")
        mapping[key] = value.strip()

    return mapping


@dataclass(frozen=True)
class RunConfig:
    """Parameter bundle of a command line run

    The defaults reproduce the parameter set of the reference precision plot:
    Ohmic bath with ``α = 0.2``, ``ω_c = 10``, ``ω_co = 0.01 ω_c``,
    ``γ = 0.1 ω_c`` at ``β ω_c = 1`` (high temperature) and ``β ω_c = 10³``
    (low temperature).
    """

    alpha: float = 0.2
    omega_c: float = 10.0
    omega_co: float = 0.1
    gamma_white: float = 1.0
    betas: tuple[float, ...] = (0.1, 100.0)
    ns: tuple[int, ...] = field(default_factory=_default_ns)
    thetas: tuple[float, ...] = (0.0, math.pi / 2)
    times: tuple[float, ...] = field(default_factory=_default_times)
    shots: int = 100_000
    seed: int = 0
    threads: int = 1
    out: str | None = None
    spectrum: str | None = None
    regime: Literal["auto", "full", "high", "low"] = "auto"
    compressed: bool = True
    sweep_param: str | None = None
    sweep_values: tuple[float, ...] = ()

    valid_parameters: ClassVar[dict[str, Any]] = {
        "regime": ["auto", "full", "high", "low"],
        "sweep_param": [
            None,
            "n",
            "beta",
            "time",
            "theta",
            "alpha",
            "omega_co",
            "gamma_white",
        ],
    }

    translations: ClassVar[dict[str, tuple[str, Any]]] = {
        "alpha": ("alpha", float),
        "omega_c": ("omega_c", float),
        "omega-c": ("omega_c", float),
        "omega_co": ("omega_co", float),
        "omega-co": ("omega_co", float),
        "gamma_white": ("gamma_white", float),
        "gamma-white": ("gamma_white", float),
        "gamma": ("gamma_white", float),
        "beta": ("betas", _parse_list(float)),
        "betas": ("betas", _parse_list(float)),
        "n": ("ns", _parse_list(_parse_int)),
        "ns": ("ns", _parse_list(_parse_int)),
        "theta": ("thetas", _parse_list(parse_theta)),
        "thetas": ("thetas", _parse_list(parse_theta)),
        "time": ("times", _parse_list(float)),
        "times": ("times", _parse_list(float)),
        "shots": ("shots", _parse_int),
        "m": ("shots", _parse_int),
        "seed": ("seed", _parse_int),
        "threads": ("threads", _parse_int),
        "out": ("out", str),
        "spectrum": ("spectrum", str),
        "regime": ("regime", str),
        "compressed": ("compressed", _parse_bool),
        "param": ("sweep_param", lambda v: str(v).replace("-", "_")),
        "sweep_param": ("sweep_param", lambda v: str(v).replace("-", "_")),
        "values": ("sweep_values", _parse_list(float)),
        "sweep_values": ("sweep_values", _parse_list(float)),
    }

    def __post_init__(self):
        for name in ["alpha", "omega_co", "gamma_white"]:
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(name, f"must be finite and nonnegative, got {value!r}")
        if not (math.isfinite(self.omega_c) and self.omega_c > 0):
            raise ConfigError("omega_c", f"must be positive, got {self.omega_c!r}")
        if not self.betas or any(not beta > 0 for beta in self.betas):
            raise ConfigError("beta", "needs at least one positive value")
        if not self.ns or any(n < 1 for n in self.ns):
            raise ConfigError("n", "needs at least one positive integer")
        if not self.thetas or any(not 0 <= theta <= math.pi / 2 + 1e-12 for theta in self.thetas):
            raise ConfigError("theta", "values must lie in [0, pi/2]")
        if not self.times or any(not (math.isfinite(t) and t >= 0) for t in self.times):
            raise ConfigError("time", "needs at least one finite nonnegative value")
        if list(self.times) != sorted(set(self.times)):
            raise ConfigError("time", "values must be strictly increasing")
        if self.shots < 1:
            raise ConfigError("shots", f"must be at least 1, got {self.shots}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads", f"must be at least 1, got {self.threads}")
        if self.regime not in self.valid_parameters["regime"]:
            raise ConfigError(
                "regime", f"must be one of {self.valid_parameters['regime']}"
            )
        if self.sweep_param not in self.valid_parameters["sweep_param"]:
            raise ConfigError(
                "param", f"must be one of {self.valid_parameters['sweep_param'][1:]}"
            )

    @classmethod
    def normalize(cls, mapping: dict[str, Any]) -> dict[str, Any]:
        """translate raw parameter names and values to canonical fields

        Raises
        ------
        ConfigError
            for unknown keys or unparsable values
        ExceptionGroup
            if several aliases of the same parameter were given
        """
        unknown = sorted(set(mapping) - set(cls.translations))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")

        converted = {}
        for name, value in mapping.items():
            canonical, converter = cls.translations[name]
            try:
                converted[name] = converter(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(canonical, f"invalid value {value!r}: {e}") from e

        # values are already converted, only the names are translated
        names = {name: (canonical, _identity) for name, (canonical, _) in cls.translations.items()}
        return translate_parameters(converted, names)

    @classmethod
    def from_dict(cls, mapping: dict[str, Any]) -> "RunConfig":
        """construct a `RunConfig` from raw parameters (aliases allowed)"""
        params = cls.normalize(mapping)
        return cls(**params)

    @classmethod
    def from_sources(cls, *mappings: dict[str, Any]) -> "RunConfig":
        """merge parameter sources, later sources taking precedence"""
        merged = {}
        for mapping in mappings:
            merged |= cls.normalize(mapping)

        return cls(**merged)

    def to_dict(self) -> dict[str, Any]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
        }

    def spectral_model(self):
        """the bath spectrum described by this configuration"""
        from xqtherm.spectral import OhmicSpectrum, load_tabulated

        if self.spectrum is not None:
            return load_tabulated(
                self.spectrum, omega_co=self.omega_co, gamma_white=self.gamma_white
            )

        return OhmicSpectrum(
            alpha=self.alpha,
            omega_c=self.omega_c,
            omega_co=self.omega_co,
            gamma_white=self.gamma_white,
        )
