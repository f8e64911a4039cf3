import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from xqtherm.decoherence import decay_factors
from xqtherm.distributions import CollectiveExactS, MeasurementConfig, collective_moments
from xqtherm.errors import ContractError, DomainError
from xqtherm.spectral import SpectralModel

logger = logging.getLogger(__name__)

CHUNK_SIZE = 2**16


@dataclass(frozen=True, eq=False)
class ReadoutBatch:
    """
    Simulated shots of a measurement.

    Parameters
    ----------
    config : MeasurementConfig
        The measurement.
    seed : int
        Seed of the random stream.
    s_values : numpy.ndarray
        Ensemble readout ``S`` of every shot.
    readouts : numpy.ndarray, optional
        ``(M, N)`` array of the individual ±1 readouts. Only kept when the
        batch was not compressed.
    """

    config: MeasurementConfig
    seed: int
    s_values: np.ndarray
    readouts: np.ndarray | None = None

    @property
    def m_shots(self) -> int:
        return len(self.s_values)

    @property
    def compressed(self) -> bool:
        return self.readouts is None


def _sample_chunk(config: MeasurementConfig, size: int, seed_sequence, compressed: bool):
    rng = np.random.Generator(np.random.Philox(seed_sequence))
    decay = config.decay
    n = config.n

    phi = rng.normal(0.0, math.sqrt(decay.gamma_l / 2), size=size)
    p_plus = (1 + math.exp(-decay.gamma_h) * np.cos(config.theta + 2 * phi)) / 2
    if compressed:
        return 2 * rng.binomial(n, p_plus) - n, None

    readouts = np.where(rng.random((size, n)) < p_plus[:, None], 1, -1).astype("int8")
    return readouts.sum(axis=1, dtype="int64"), readouts


def sample_readouts(
    config: MeasurementConfig,
    m_shots: int,
    seed: int,
    *,
    compressed: bool = True,
    threads: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> ReadoutBatch:
    """simulate shots of the collective field model

    Every shot draws the collective phase ``φ₀ ~ N(0, Γ_L/2)``, after which the
    thermometers are independent with
    ``P(+1) = (1 + e^{-Γ_H} cos(θ + 2φ₀)) / 2``.

    Shots are drawn in chunks of `chunk_size`, each from its own Philox
    stream spawned from `seed`. The batch is a deterministic function of
    ``(config, m_shots, seed, compressed, chunk_size)``; `threads` does not
    change the result.

    Parameters
    ----------
    config : MeasurementConfig
        The measurement.
    m_shots : int
        Number of shots.
    seed : int
        Seed of the random stream.
    compressed : bool, default: True
        Draw only the ensemble readout ``S`` per shot. Otherwise all individual
        readouts are drawn and kept.
    threads : int, default: 1
        Number of worker threads.

    Returns
    -------
    batch : ReadoutBatch
    """
    if m_shots < 1:
        raise DomainError(f"number of shots must be positive, got {m_shots}")
    if chunk_size < 1:
        raise DomainError(f"chunk size must be positive, got {chunk_size}")

    sizes = [min(chunk_size, m_shots - start) for start in range(0, m_shots, chunk_size)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(args):
        size, child = args
        return _sample_chunk(config, size, child, compressed)

    with ThreadPoolExecutor(max_workers=threads) as executor:
        chunks = list(executor.map(work, zip(sizes, children)))

    s_values = np.concatenate([s for s, _ in chunks])
    readouts = None if compressed else np.concatenate([r for _, r in chunks])
    logger.debug("sampled %d shots of N=%d in %d chunks", m_shots, config.n, len(sizes))

    return ReadoutBatch(config=config, seed=seed, s_values=s_values, readouts=readouts)


def _mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def _sample_variance(values: np.ndarray, mean: float) -> float:
    return math.fsum((values - mean) ** 2) / (len(values) - 1)


def _standard_error_of_variance(values: np.ndarray, mean: float, variance: float) -> float:
    m = len(values)
    fourth = math.fsum((values - mean) ** 4) / m
    return math.sqrt(max(fourth - variance**2 * (m - 3) / (m - 1), 0.0) / m)


@dataclass(frozen=True)
class EmpiricalMoments:
    """
    Sample statistics of a readout batch.

    ``pair_correlation`` is the average of ``s_i s_j`` over all pairs
    ``i ≠ j``, ``(S² - N) / (N (N - 1))`` per shot. Values that need more
    shots or thermometers than available are NaN.
    """

    m_shots: int
    mean_s: float
    variance_s: float
    mean_s2: float
    variance_s2: float
    pair_correlation: float
    stderr_mean_s: float
    stderr_mean_s2: float
    stderr_variance_s: float
    stderr_variance_s2: float
    stderr_pair_correlation: float

    def mean(self, observable: str) -> float:
        return self.mean_s if observable == "S" else self.mean_s2

    def variance(self, observable: str) -> float:
        return self.variance_s if observable == "S" else self.variance_s2


def empirical_moments(batch: ReadoutBatch) -> EmpiricalMoments:
    """sample moments of ``S`` and ``S²`` with standard errors

    Sums are compensated.
    """
    m = batch.m_shots
    n = batch.config.n
    s = batch.s_values.astype("float64")
    s2 = s**2

    mean_s = _mean(s)
    mean_s2 = _mean(s2)
    if m < 2:
        logger.warning("a single shot gives no variance estimate")
        nan = math.nan
        pair = (mean_s2 - n) / (n * (n - 1)) if n > 1 else nan
        return EmpiricalMoments(m, mean_s, nan, mean_s2, nan, pair, nan, nan, nan, nan, nan)

    variance_s = _sample_variance(s, mean_s)
    variance_s2 = _sample_variance(s2, mean_s2)

    if n > 1:
        pairs = (s2 - n) / (n * (n - 1))
        pair = _mean(pairs)
        stderr_pair = math.sqrt(_sample_variance(pairs, pair) / m)
    else:
        pair = stderr_pair = math.nan

    return EmpiricalMoments(
        m_shots=m,
        mean_s=mean_s,
        variance_s=variance_s,
        mean_s2=mean_s2,
        variance_s2=variance_s2,
        pair_correlation=pair,
        stderr_mean_s=math.sqrt(variance_s / m),
        stderr_mean_s2=math.sqrt(variance_s2 / m),
        stderr_variance_s=_standard_error_of_variance(s, mean_s, variance_s),
        stderr_variance_s2=_standard_error_of_variance(s2, mean_s2, variance_s2),
        stderr_pair_correlation=stderr_pair,
    )


def empirical_p_of_s(batch: ReadoutBatch) -> CollectiveExactS:
    """histogram of the ensemble readout"""
    n = batch.config.n
    counts = np.bincount((batch.s_values + n) // 2, minlength=n + 1)
    return CollectiveExactS(
        config=batch.config, method="empirical", table=counts / batch.m_shots
    )


@dataclass(frozen=True)
class EmpiricalFisher:
    """
    Fisher information estimated from simulated shots.

    Parameters
    ----------
    fisher : float
        ``|∂_β⟨O⟩|² / Var(O)``.
    stderr : float
        Standard error propagated from the variance estimate.
    observable : {"S", "S2"}
        ``S`` at θ = 0, ``S²`` otherwise.
    degenerate : bool
        Whether the sample variance vanishes.
    """

    fisher: float
    stderr: float
    observable: str
    d_mean_d_beta: float
    variance: float
    m_shots: int
    degenerate: bool = False

    @property
    def confidence_interval(self) -> tuple[float, float]:
        return (self.fisher - 1.96 * self.stderr, self.fisher + 1.96 * self.stderr)


def empirical_fisher(
    model: SpectralModel,
    config: MeasurementConfig,
    m_shots: int,
    seed: int,
    delta_beta: float | None = None,
    *,
    compressed: bool = True,
    threads: int = 1,
) -> EmpiricalFisher:
    """moment-based Fisher information estimate from simulated shots

    The slope of ``⟨O⟩`` is the central difference of the closed form moments
    at ``β ± δβ``; the variance of ``O`` is estimated from ``m_shots`` shots at
    ``β``.

    Parameters
    ----------
    model : SpectralModel
        The bath spectrum.
    config : MeasurementConfig
        The measurement. Its decay factors must carry ``beta`` and ``time``.
    m_shots : int
        Number of shots.
    seed : int
        Seed of the random stream.
    delta_beta : float, optional
        Step of the central difference. Defaults to ``10⁻³ β``.

    Returns
    -------
    estimate : EmpiricalFisher
    """
    beta = config.decay.beta
    t = config.decay.time
    if not (math.isfinite(beta) and math.isfinite(t)):
        raise ContractError("the decay factors of the configuration carry no working point")
    if delta_beta is None:
        delta_beta = 1e-3 * beta
    if not 0 < delta_beta < beta:
        raise DomainError(f"delta_beta must lie in (0, beta), got {delta_beta}")

    observable = "S" if config.is_independent else "S2"
    index = 0 if observable == "S" else 1

    upper = collective_moments(config.with_decay(decay_factors(model, beta + delta_beta, t)))
    lower = collective_moments(config.with_decay(decay_factors(model, beta - delta_beta, t)))
    slope = (upper[index] - lower[index]) / (2 * delta_beta)

    batch = sample_readouts(config, m_shots, seed, compressed=compressed, threads=threads)
    moments = empirical_moments(batch)
    variance = moments.variance(observable)
    stderr_variance = (
        moments.stderr_variance_s if observable == "S" else moments.stderr_variance_s2
    )

    if not variance > 0:
        logger.warning("vanishing sample variance of %s, the estimate is degenerate", observable)
        return EmpiricalFisher(
            fisher=math.nan,
            stderr=math.nan,
            observable=observable,
            d_mean_d_beta=slope,
            variance=variance,
            m_shots=m_shots,
            degenerate=True,
        )

    fisher = slope**2 / variance
    return EmpiricalFisher(
        fisher=fisher,
        stderr=fisher * stderr_variance / variance,
        observable=observable,
        d_mean_d_beta=slope,
        variance=variance,
        m_shots=m_shots,
    )


def write_batch(batch: ReadoutBatch, path_or_buffer=None) -> str | None:
    """write a batch as text

    A ``#`` header records the configuration and seed, followed by one line
    per shot: the shot index and then the ±1 readouts when available,
    otherwise ``S``.
    """
    decay = batch.config.decay
    header = {
        "n": batch.config.n,
        "theta": repr(batch.config.theta),
        "gamma_l": repr(decay.gamma_l),
        "gamma_h": repr(decay.gamma_h),
        "beta": repr(decay.beta),
        "time": repr(decay.time),
        "seed": batch.seed,
        "shots": batch.m_shots,
        "mode": "compressed" if batch.compressed else "full",
    }

    buffer = io.StringIO()
    buffer.write("# xqtherm-batch v1\n")
    buffer.write("# " + " ".join(f"{k}={v}" for k, v in header.items()) + "\n")
    values = batch.s_values if batch.compressed else batch.readouts
    rows = np.column_stack([np.arange(batch.m_shots), values])
    np.savetxt(buffer, rows, fmt="%d")

    text = buffer.getvalue()
    if path_or_buffer is None:
        return text
    if isinstance(path_or_buffer, (str, os.PathLike)):
        with open(path_or_buffer, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        path_or_buffer.write(text)
    return None
