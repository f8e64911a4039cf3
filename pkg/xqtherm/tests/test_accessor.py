import math

import numpy as np
import pytest
import xarray as xr

import xqtherm  # noqa: F401
from xqtherm.decoherence import DecayFactors
from xqtherm.distributions import (
    MeasurementConfig,
    collective_field_distribution,
    product_distribution,
)
from xqtherm.errors import DomainError


def make_config(n, theta, gamma_l=0.1, gamma_h=0.4):
    return MeasurementConfig(
        n_thermometers=n, theta=theta, decay=DecayFactors(gamma_l=gamma_l, gamma_h=gamma_h)
    )


@pytest.fixture
def distribution():
    return collective_field_distribution(make_config(6, 0.3))


def test_to_dataarray(distribution):
    arr = distribution.to_dataarray()

    assert arr.dims == ("S",)
    assert arr.name == "probability"
    np.testing.assert_array_equal(arr["S"], np.arange(-6, 7, 2))
    assert arr.attrs["method"] == "collective_field"
    assert arr.readout.n_thermometers == 6


@pytest.mark.parametrize("observable", ["S", "S2"])
def test_moments(distribution, observable):
    arr = distribution.to_dataarray()

    assert arr.readout.mean(observable) == pytest.approx(distribution.mean(observable))
    assert arr.readout.variance(observable) == pytest.approx(
        distribution.variance(observable)
    )


def test_normalization_error(distribution):
    arr = distribution.to_dataarray()

    assert arr.readout.normalization_error() < 1e-12
    assert (arr * 2).readout.normalization_error() == pytest.approx(1.0)


def test_total_variation():
    independent = product_distribution(make_config(4, 0.0, gamma_l=0.0)).to_dataarray()
    collective = collective_field_distribution(make_config(4, 0.0, gamma_l=0.0))

    assert independent.readout.total_variation(collective.to_dataarray()) < 1e-12
    assert independent.readout.total_variation(independent) == 0.0

    other = collective_field_distribution(make_config(4, math.pi / 2)).to_dataarray()
    distance = independent.readout.total_variation(other)
    assert 0 < distance <= 1


def test_total_variation_partial_support():
    arr = product_distribution(make_config(2, 0.0)).to_dataarray()
    point = xr.DataArray([1.0], coords={"S": [2]}, dims="S")

    expected = 0.5 * (abs(float(arr.sel(S=2)) - 1) + float(arr.sel(S=[-2, 0]).sum()))
    assert arr.readout.total_variation(point) == pytest.approx(expected)


def test_total_variation_mismatch():
    first = product_distribution(make_config(2, 0.0)).to_dataarray()
    second = product_distribution(make_config(4, 0.0)).to_dataarray()

    with pytest.raises(DomainError, match="different numbers"):
        first.readout.total_variation(second)


def test_to_text(distribution, tmp_path):
    arr = distribution.to_dataarray()

    text = arr.readout.to_text()
    lines = text.splitlines()

    assert lines[0] == "# xqtherm-p_of_s v1"
    assert "method=collective_field" in lines[1]
    assert lines[2] == "# S p"
    assert [int(line.split()[0]) for line in lines[3:]] == list(range(-6, 7, 2))

    path = tmp_path / "p_of_s.txt"
    arr.readout.to_text(path)
    assert path.read_text() == text


def test_missing_dimension():
    arr = xr.DataArray([0.5, 0.5], dims="x")

    with pytest.raises(DomainError, match="'S' dimension"):
        arr.readout.mean()
