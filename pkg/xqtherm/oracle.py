"""Exact readout statistics by enumeration of the coherence sum

For a Gaussian dephasing bath with decay matrix Γ, the probability of the
readout string ``s`` of N thermometers measured along the axis at angle θ is

.. math::

    P_s = \\sum_{Δη ∈ \\{-1, 0, 1\\}^N} \\prod_j w(Δη_j)
          \\exp\\Big(-\\sum_{ij} Δη_i Γ_{ij} Δη_j
          + i \\sum_j Δη_j \\big(θ + (1 - s_j) π / 2\\big)\\Big)

with ``w(0) = 1/2`` and ``w(±1) = 1/4``. The cost grows as ``3^N``, which
restricts the oracle to small ensembles.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from xqtherm.distributions import (
    CollectiveExactS,
    ExactEnumerated,
    MeasurementConfig,
)
from xqtherm.decoherence import DecayFactors
from xqtherm.errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

MAX_ENUMERATED_THERMOMETERS = 12
IMAGINARY_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12
EIGENVALUE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DecayMatrix:
    """
    Symmetric positive semidefinite N×N decay matrix.

    Parameters
    ----------
    entries : numpy.ndarray
        The matrix ``Γ_ij``.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype="float64")
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
            raise DomainError(f"decay matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DomainError("decay matrix entries must be finite")
        if np.max(np.abs(entries - entries.T), initial=0.0) > SYMMETRY_TOLERANCE:
            raise DomainError("decay matrix must be symmetric")

        scale = max(1.0, float(np.max(np.abs(entries))))
        smallest = float(np.linalg.eigvalsh(entries)[0])
        if smallest < -EIGENVALUE_TOLERANCE * scale:
            raise DomainError(
                f"decay matrix must be positive semidefinite, smallest eigenvalue is {smallest:g}"
            )

        object.__setattr__(self, "entries", entries)

    @classmethod
    def collective(cls, n: int, gamma_l: float, gamma_h: float) -> "DecayMatrix":
        """``Γ_ij = Γ_L + Γ_H δ_ij``"""
        if n < 1:
            raise DomainError(f"number of thermometers must be positive, got {n}")
        return cls(np.full((n, n), float(gamma_l)) + float(gamma_h) * np.eye(n))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def is_collective(self) -> bool:
        """whether all diagonal and all off-diagonal entries agree"""
        n = self.n
        diagonal = np.diag(self.entries)
        off_diagonal = self.entries[~np.eye(n, dtype=bool)]
        return bool(np.ptp(diagonal) == 0 and (n == 1 or np.ptp(off_diagonal) == 0))

    def to_decay_factors(self) -> DecayFactors:
        """Γ_L and Γ_H of a collective matrix"""
        if not self.is_collective():
            raise DomainError("decay matrix is not of the form Γ_L + Γ_H δ_ij")
        diagonal = float(self.entries[0, 0])
        gamma_l = float(self.entries[0, 1]) if self.n > 1 else 0.0
        return DecayFactors(gamma_l=gamma_l, gamma_h=diagonal - gamma_l)


def _check_size(n: int, cap: int):
    if n > cap:
        raise DomainError(
            f"exact enumeration is limited to {cap} thermometers, got {n};"
            " use xqtherm.sampling for larger ensembles"
        )


def _coherence_terms(gamma: DecayMatrix, theta: float):
    # all Δη with their weight, quadratic form and θ phase
    n = gamma.n
    steps = np.array([-1, 0, 1], dtype="int8")
    grid = np.stack(np.meshgrid(*([steps] * n), indexing="ij"), axis=-1).reshape(-1, n)

    weights = np.where(grid == 0, 0.5, 0.25).prod(axis=1)
    dense = grid.astype("float64")
    quadratic = np.einsum("ki,ij,kj->k", dense, gamma.entries, dense)
    amplitude = weights * np.exp(-quadratic + 1j * theta * dense.sum(axis=1))
    return grid, amplitude


def _checked_real(values: np.ndarray, context) -> np.ndarray:
    residue = float(np.max(np.abs(values.imag), initial=0.0))
    if residue > IMAGINARY_TOLERANCE:
        raise NumericalError(
            "exact probability has a non-vanishing imaginary part",
            {"imaginary": residue} | context,
        )
    return values.real


def _readout_probabilities(grid, amplitude, readouts: np.ndarray) -> np.ndarray:
    # s_j ** |Δη_j| encodes exp(i Δη_j (1 - s_j) π / 2)
    flips = readouts[:, None, :] == -1
    odd = np.count_nonzero(flips & (grid[None, :, :] != 0), axis=2) % 2
    signs = 1 - 2 * odd
    return signs @ amplitude


def _check_readout(readout, n: int) -> np.ndarray:
    readout = np.asarray(readout)
    if readout.shape != (n,) or not np.all(np.isin(readout, (-1, 1))):
        raise DomainError(f"readout must be a sequence of {n} values in {{-1, +1}}")
    return readout.astype("int8")


def exact_probability(
    gamma: DecayMatrix,
    theta: float,
    readout,
    *,
    cap: int = MAX_ENUMERATED_THERMOMETERS,
) -> float:
    """probability of a single readout string

    Parameters
    ----------
    gamma : DecayMatrix
        Decay matrix of the N thermometers.
    theta : float
        Measurement angle.
    readout : sequence of int
        N values in ``{-1, +1}``.
    cap : int, default: 12
        Largest N the enumeration accepts.

    Returns
    -------
    probability : float

    Raises
    ------
    DomainError
        for ``N > cap`` or malformed readouts
    NumericalError
        if the enumerated sum has an imaginary part above ``1e-12``
    """
    _check_size(gamma.n, cap)
    readout = _check_readout(readout, gamma.n)

    grid, amplitude = _coherence_terms(gamma, theta)
    value = _readout_probabilities(grid, amplitude, readout[None, :])
    return float(_checked_real(value, {"readout": readout.tolist(), "theta": theta})[0])


def _walsh_hadamard(values: np.ndarray, n: int) -> np.ndarray:
    transformed = values.reshape((2,) * n)
    for axis in range(n):
        first, second = np.split(transformed, 2, axis=axis)
        transformed = np.concatenate([first + second, first - second], axis=axis)
    return transformed.reshape(-1)


def _all_readouts(n: int) -> np.ndarray:
    # bit j set means s_j = -1; index order is lexicographic with +1 first
    bits = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype("int8")


def exact_distribution(
    gamma: DecayMatrix,
    theta: float,
    *,
    cap: int = MAX_ENUMERATED_THERMOMETERS,
) -> ExactEnumerated:
    """probabilities of all ``2^N`` readout strings

    The amplitudes are grouped by the support of Δη; the sum over readouts is
    then a Walsh-Hadamard transform.

    Returns
    -------
    distribution : ExactEnumerated
    """
    n = gamma.n
    _check_size(n, cap)

    grid, amplitude = _coherence_terms(gamma, theta)
    support_bits = (grid != 0).astype("int64")
    mask = support_bits @ (1 << np.arange(n - 1, -1, -1))
    grouped = np.bincount(mask, weights=amplitude.real, minlength=2**n) + 1j * np.bincount(
        mask, weights=amplitude.imag, minlength=2**n
    )

    table = _checked_real(_walsh_hadamard(grouped, n), {"theta": theta, "n": n})
    readouts = _all_readouts(n)

    if gamma.is_collective():
        decay = gamma.to_decay_factors()
    else:
        decay = DecayFactors(gamma_l=0.0, gamma_h=0.0)
        logger.debug("non-collective decay matrix: config carries placeholder decay factors")

    config = MeasurementConfig(n_thermometers=n, theta=theta, decay=decay)
    return ExactEnumerated(
        config=config,
        method="exact_enumerated",
        readouts=readouts,
        table=table,
    )


def exact_p_of_s(
    gamma: DecayMatrix,
    theta: float,
    *,
    cap: int = MAX_ENUMERATED_THERMOMETERS,
) -> CollectiveExactS:
    """exact distribution of the ensemble readout ``S = Σ s_j``

    For collective decay matrices all strings with the same ``S`` share their
    probability, so one representative per value of ``S`` is enumerated and
    weighted by its multiplicity.
    """
    n = gamma.n
    _check_size(n, cap)

    if not gamma.is_collective():
        distribution = exact_distribution(gamma, theta, cap=cap)
        return CollectiveExactS(
            config=distribution.config,
            method="exact_enumerated",
            table=distribution.probabilities(),
        )

    # representative with the k first readouts at +1
    k = np.arange(n + 1)
    representatives = np.where(np.arange(n)[None, :] < k[:, None], 1, -1).astype("int8")

    grid, amplitude = _coherence_terms(gamma, theta)
    values = _readout_probabilities(grid, amplitude, representatives)
    probabilities = _checked_real(values, {"theta": theta, "n": n})
    multiplicity = np.array([math.comb(n, int(i)) for i in k], dtype="float64")

    config = MeasurementConfig(n_thermometers=n, theta=theta, decay=gamma.to_decay_factors())
    return CollectiveExactS(
        config=config, method="exact_enumerated", table=multiplicity * probabilities
    )


def exact_reduced_state(gamma: DecayMatrix) -> np.ndarray:
    """exact two-thermometer density matrix after the free evolution

    The state before the final rotation has the elements
    ``ρ_{η η'} = exp(-Σ Δη_i Γ_ij Δη_j) / 4`` with ``Δη = (η - η')/2``, in the
    eigenbasis of σᶻ ordered ``|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩``.
    """
    if gamma.n != 2:
        raise DomainError(f"the reduced state needs a 2×2 decay matrix, got N={gamma.n}")

    eta = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype="float64")
    delta = (eta[:, None, :] - eta[None, :, :]) / 2
    quadratic = np.einsum("abi,ij,abj->ab", delta, gamma.entries, delta)
    return (np.exp(-quadratic) / 4).astype("complex128")


def auxiliary_field_probability(
    gamma: DecayMatrix,
    theta: float,
    readout,
    *,
    samples: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo estimate of a readout probability

    The bath is replaced by Gaussian phases ``φ ~ N(0, Γ/2)`` so that

    .. math::

        P_s = \\Big\\langle \\prod_j \\frac{1 + s_j \\cos(θ + 2 φ_j)}{2} \\Big\\rangle_φ

    Works for any N and any positive semidefinite decay matrix.

    Returns
    -------
    estimate : float
        Sample mean.
    stderr : float
        Standard error of the sample mean.
    """
    if samples < 2:
        raise DomainError(f"need at least 2 samples, got {samples}")
    readout = _check_readout(readout, gamma.n)

    rng = np.random.Generator(np.random.Philox(seed))
    phases = rng.multivariate_normal(
        np.zeros(gamma.n), gamma.entries / 2, size=samples, method="eigh"
    )
    values = np.prod((1 + readout * np.cos(theta + 2 * phases)) / 2, axis=1)

    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(samples))
