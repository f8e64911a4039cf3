import math

from xqtherm.errors import DomainError

SPECTRUM_REGISTRY = {}


def register_spectrum(name):
    def inner(cls):
        SPECTRUM_REGISTRY[name] = cls
        return cls

    return inner


def _check_nonnegative(name, value):
    if not value >= 0:
        raise DomainError(f"{name} must be nonnegative, got {value!r}")


def _check_positive(name, value):
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value!r}")


def _check_time(t):
    if not (math.isfinite(t) and t >= 0):
        raise DomainError(f"evolution time must be finite and nonnegative, got {t!r}")


def _check_beta(beta):
    # beta = inf is the zero temperature limit
    if not beta > 0:
        raise DomainError(f"inverse temperature must be positive, got {beta!r}")
