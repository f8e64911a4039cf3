"""Command line interface

Subcommands share a set of parameter flags. Parameters are merged from the
defaults, an optional ``--config`` file and the command line, in that order.
"""

import argparse
import dataclasses
import itertools
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor

try:
    ExceptionGroup
except NameError:  # pragma: no cover
    from exceptiongroup import ExceptionGroup

import numpy as np
import pandas as pd
import xarray as xr

from xqtherm.config import RunConfig, read_config_file
from xqtherm.decoherence import decay_factors, decay_table
from xqtherm.distributions import MeasurementConfig, collective_field_distribution
from xqtherm.errors import (
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_SUCCESS,
    ConfigError,
    ContractError,
    DomainError,
    NumericalError,
)
from xqtherm.estimation import (
    fisher_analytic,
    fisher_exact,
    fisher_sweep,
    fit_scaling_exponent,
)
from xqtherm.sampling import empirical_fisher, sample_readouts, write_batch
from xqtherm.spectral import temperature_regime

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"

# flag, config key, argparse options
PARAMETER_FLAGS = [
    ("--alpha", "alpha", {"type": float, "help": "Ohmic coupling strength"}),
    ("--omega-c", "omega_c", {"type": float, "help": "Ohmic cutoff frequency"}),
    ("--omega-co", "omega_co", {"type": float, "help": "crossover frequency ω_co"}),
    ("--gamma-white", "gamma_white", {"type": float, "help": "white noise rate γ"}),
    ("--beta", "beta", {"help": "comma separated inverse temperatures"}),
    ("--n", "n", {"help": "comma separated numbers of thermometers"}),
    ("--theta", "theta", {"help": "comma separated angles, 'pi/2' allowed"}),
    ("--time", "time", {"help": "comma separated evolution times"}),
    ("--shots", "shots", {"help": "number of simulated shots"}),
    ("--seed", "seed", {"help": "seed of the random stream"}),
    ("--threads", "threads", {"help": "number of worker threads"}),
    ("--out", "out", {"help": "output path, stdout if omitted"}),
    ("--spectrum", "spectrum", {"help": "two-column tabulated spectral density"}),
    ("--regime", "regime", {"help": "Fisher formula: auto, full, high or low"}),
]


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging verbosity",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="increase verbosity (repeatable)",
    )
    for flag, key, options in PARAMETER_FLAGS:
        parser.add_argument(flag, dest=key, default=argparse.SUPPRESS, **options)
    parser.add_argument(
        "--full-readouts",
        dest="compressed",
        action="store_const",
        const=False,
        default=argparse.SUPPRESS,
        help="draw and keep the individual readouts of every shot",
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="xqtherm", description="Collective quantum thermometry in a dephasing bath"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("gamma", parents=[common], help="tabulate decay factors over (β, t)")
    subparsers.add_parser(
        "fig2", parents=[common], help="optimal precision against N in both regimes"
    )
    subparsers.add_parser(
        "fisher", parents=[common], help="analytic, exact and sampled Fisher information"
    )
    subparsers.add_parser("sample", parents=[common], help="simulate readout shots")
    sweep = subparsers.add_parser("sweep", parents=[common], help="vary a single parameter")
    sweep.add_argument("--param", dest="param", default=argparse.SUPPRESS)
    sweep.add_argument("--values", dest="values", default=argparse.SUPPRESS)

    return parser


def _log_level(args) -> int:
    level = getattr(logging, args.log_level)
    return max(logging.DEBUG, level - 10 * args.verbose)


def write_csv(table: xr.Dataset | pd.DataFrame, name: str, path=None):
    """write a table as CSV preceded by a versioned ``#`` header"""
    if isinstance(table, xr.Dataset):
        frame = table.to_dataframe().reset_index()
    else:
        frame = table
    header = f"# xqtherm-{name} v1\n"
    if path is None:
        sys.stdout.write(header)
        frame.to_csv(sys.stdout, index=False, float_format="%.17g", lineterminator="\n")
        return

    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header)
        frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
    logger.info("wrote %s table to %s", name, path)


def _formula(config: RunConfig, model, beta: float) -> str:
    if config.regime == "auto":
        return temperature_regime(model, beta)
    return config.regime


def run_gamma(config: RunConfig):
    model = config.spectral_model()
    table = decay_table(model, sorted(config.betas), config.times, threads=config.threads)
    write_csv(table, "gamma", config.out)


def _optimal_precision(config: RunConfig, model, beta: float) -> xr.Dataset:
    formula = _formula(config, model, beta)
    sweep = fisher_sweep(model, beta, config.ns, config.thetas, config.times, formula)
    best = sweep["fisher"].argmax("time")
    optimum = sweep.isel(time=best).reset_coords("time").rename({"time": "t_opt"})
    for theta, n in itertools.product(optimum["theta"].values, optimum["n"].values):
        point = optimum.sel(theta=theta, n=n)
        logger.info(
            "fig2 regime=%s beta=%g theta=%g n=%d t_opt=%g fisher=%g",
            formula,
            beta,
            theta,
            n,
            float(point["t_opt"]),
            float(point["fisher"]),
        )

    return optimum[["t_opt", "fisher", "precision_figure"]].expand_dims(beta=[beta])


def _exponents(label: str, table: xr.Dataset) -> list[dict]:
    rows = []
    for beta, theta in itertools.product(table["beta"].values, table["theta"].values):
        fisher = table["fisher"].sel(beta=beta, theta=theta)
        points = [
            (float(n), float(f)) for n, f in zip(fisher["n"].values, fisher.values) if f > 0
        ]
        if len(points) < 3:
            logger.warning(
                "not enough points to fit the scaling exponent at beta=%g, theta=%g", beta, theta
            )
            exponent = rms = math.nan
        else:
            fit = fit_scaling_exponent(points)
            exponent, rms = fit.exponent, fit.rms
        rows.append(
            {"regime": label, "beta": beta, "theta": theta, "exponent": exponent, "rms": rms}
        )
    return rows


def _suffixed(path: str | None, suffix: str) -> str | None:
    return None if path is None else f"{path}_{suffix}.csv"


def run_fig2(config: RunConfig):
    model = config.spectral_model()
    betas = sorted(config.betas)

    with ThreadPoolExecutor(max_workers=config.threads) as executor:
        optima = list(executor.map(lambda b: _optimal_precision(config, model, b), betas))

    rows = []
    for label in ["high", "low"]:
        tables = [
            table
            for beta, table in zip(betas, optima)
            if temperature_regime(model, beta) == label
        ]
        if not tables:
            continue
        table = xr.concat(tables, dim="beta")
        write_csv(table, f"optimal_{label}", _suffixed(config.out, label))
        rows.extend(_exponents(label, table))

    exponents = pd.DataFrame(rows, columns=["regime", "beta", "theta", "exponent", "rms"])
    write_csv(exponents, "exponents", _suffixed(config.out, "exponents"))


def _fisher_point(config: RunConfig, model, point) -> dict:
    beta, t, theta, n = point
    measurement = MeasurementConfig(
        n_thermometers=n, theta=theta, decay=decay_factors(model, beta, t)
    )
    row = {}
    try:
        row["fisher_analytic"] = fisher_analytic(
            measurement, _formula(config, model, beta)
        ).fisher
        row["fisher_full"] = fisher_analytic(measurement, "full").fisher
    except ContractError:
        row["fisher_analytic"] = row["fisher_full"] = math.nan

    exact = fisher_exact(collective_field_distribution(measurement), beta, model, t)
    sampled = empirical_fisher(
        model, measurement, config.shots, config.seed, compressed=config.compressed
    )
    logger.debug("fisher at beta=%g t=%g theta=%g n=%d: %g", beta, t, theta, n, exact.fisher)

    return row | {
        "fisher_exact": exact.fisher,
        "fisher_empirical": sampled.fisher,
        "fisher_empirical_stderr": sampled.stderr,
        "precision_figure": exact.precision_figure,
    }


def run_fisher(config: RunConfig):
    model = config.spectral_model()
    coords = {
        "beta": sorted(config.betas),
        "time": list(config.times),
        "theta": sorted(config.thetas),
        "n": sorted(config.ns),
    }
    points = list(itertools.product(*coords.values()))

    with ThreadPoolExecutor(max_workers=config.threads) as executor:
        rows = list(executor.map(lambda p: _fisher_point(config, model, p), points))

    shape = tuple(len(values) for values in coords.values())
    table = xr.Dataset(
        {
            name: (tuple(coords), np.reshape([row[name] for row in rows], shape))
            for name in rows[0]
        },
        coords=coords,
    )
    write_csv(table, "fisher", config.out)


def _single(config: RunConfig, field: str, key: str):
    values = getattr(config, field)
    if len(values) != 1:
        raise ConfigError(key, f"the sample command takes exactly one value, got {len(values)}")
    return values[0]


def run_sample(config: RunConfig):
    model = config.spectral_model()
    beta = _single(config, "betas", "beta")
    t = _single(config, "times", "time")
    theta = _single(config, "thetas", "theta")
    n = _single(config, "ns", "n")

    measurement = MeasurementConfig(
        n_thermometers=n, theta=theta, decay=decay_factors(model, beta, t)
    )
    batch = sample_readouts(
        measurement,
        config.shots,
        config.seed,
        compressed=config.compressed,
        threads=config.threads,
    )
    if config.out is None:
        sys.stdout.write(write_batch(batch))
    else:
        write_batch(batch, config.out)


SWEEP_FIELDS = {
    "n": "ns",
    "beta": "betas",
    "time": "times",
    "theta": "thetas",
    "alpha": "alpha",
    "omega_co": "omega_co",
    "gamma_white": "gamma_white",
}


def _sweep_config(config: RunConfig, value: float) -> RunConfig:
    field = SWEEP_FIELDS[config.sweep_param]
    if field == "ns":
        if not float(value).is_integer():
            raise ConfigError("values", f"numbers of thermometers must be integers, got {value}")
        value = int(value)

    base = {
        "betas": config.betas[:1],
        "times": config.times[:1],
        "thetas": config.thetas[:1],
        "ns": config.ns[:1],
    }
    if field in base:
        base[field] = (value,)
    else:
        base[field] = value
    return dataclasses.replace(config, **base)


def _sweep_point(config: RunConfig) -> dict:
    model = config.spectral_model()
    (beta,), (t,), (theta,), (n,) = config.betas, config.times, config.thetas, config.ns

    decay = decay_factors(model, beta, t)
    measurement = MeasurementConfig(n_thermometers=n, theta=theta, decay=decay)
    try:
        analytic = fisher_analytic(measurement, _formula(config, model, beta)).fisher
    except ContractError:
        analytic = math.nan
    exact = fisher_exact(collective_field_distribution(measurement), beta, model, t)

    return {
        "gamma_l": decay.gamma_l,
        "gamma_h": decay.gamma_h,
        "fisher_analytic": analytic,
        "fisher_exact": exact.fisher,
        "precision_figure": exact.precision_figure,
    }


def run_sweep(config: RunConfig):
    if config.sweep_param is None:
        raise ConfigError("param", "the sweep command needs a parameter to vary")
    if not config.sweep_values:
        raise ConfigError("values", "the sweep command needs at least one value")

    values = sorted(config.sweep_values)
    configs = [_sweep_config(config, value) for value in values]
    with ThreadPoolExecutor(max_workers=config.threads) as executor:
        rows = list(executor.map(_sweep_point, configs))

    dim = config.sweep_param
    table = xr.Dataset(
        {name: (dim, [row[name] for row in rows]) for name in rows[0]},
        coords={dim: values},
    )
    write_csv(table, f"sweep_{dim}", config.out)


COMMANDS = {
    "gamma": run_gamma,
    "fig2": run_fig2,
    "fisher": run_fisher,
    "sample": run_sample,
    "sweep": run_sweep,
}

NON_PARAMETERS = {"command", "config", "log_level", "verbose"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=_log_level(args), format=LOG_FORMAT, stream=sys.stderr)

    cli_params = {k: v for k, v in vars(args).items() if k not in NON_PARAMETERS}
    try:
        file_params = read_config_file(args.config) if args.config else {}
        config = RunConfig.from_sources(file_params, cli_params)
        logger.info("running %s with %s", args.command, config.to_dict())
        COMMANDS[args.command](config)
    except ConfigError as e:
        logger.error("invalid configuration: %s", e)
        return EXIT_CONFIG_ERROR
    except ExceptionGroup as e:
        for error in e.exceptions:
            logger.error("invalid configuration: %s", error)
        return EXIT_CONFIG_ERROR
    except (DomainError, ContractError) as e:
        logger.error("invalid input: %s", e)
        return EXIT_CONFIG_ERROR
    except NumericalError as e:
        logger.error("numerical failure: %s", e)
        return EXIT_NUMERICAL_ERROR

    return EXIT_SUCCESS
