import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from xqtherm import spectral
from xqtherm.errors import DomainError
from xqtherm.tests import assert_exceptions_equal

try:
    ExceptionGroup
except NameError:  # pragma: no cover
    from exceptiongroup import ExceptionGroup


# namespace class
class strategies:
    alphas = st.floats(min_value=0, max_value=10)
    cutoffs = st.floats(min_value=1e-3, max_value=1e3)
    frequencies = st.floats(min_value=0, max_value=1e4)

    @classmethod
    def ohmic(cls):
        return st.builds(spectral.OhmicSpectrum, alpha=cls.alphas, omega_c=cls.cutoffs)


class TestOhmicSpectrum:
    @pytest.mark.parametrize(
        ["params", "message"],
        (
            pytest.param({"alpha": -0.1, "omega_c": 1.0}, "alpha", id="negative-alpha"),
            pytest.param({"alpha": 0.1, "omega_c": 0.0}, "omega_c", id="zero-cutoff"),
            pytest.param(
                {"alpha": 0.1, "omega_c": 1.0, "omega_co": -1.0}, "omega_co", id="negative-co"
            ),
            pytest.param(
                {"alpha": 0.1, "omega_c": 1.0, "gamma_white": -1.0},
                "gamma_white",
                id="negative-white-noise",
            ),
        ),
    )
    def test_init_invalid(self, params, message):
        with pytest.raises(DomainError, match=message):
            spectral.OhmicSpectrum(**params)

    def test_values(self):
        model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0)

        assert model.j(0.0) == 0.0
        assert model.j(10.0) == pytest.approx(0.2 * 10.0 * math.exp(-1))
        assert model.j_over_omega(0.0) == 0.2
        assert model.low_frequency_slope == 0.2

    def test_maximum_at_cutoff(self):
        model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0)
        omegas = np.linspace(0, 100, 100001)

        assert omegas[np.argmax(model.j(omegas))] == pytest.approx(10.0, abs=1e-3)

    @given(strategies.ohmic(), strategies.frequencies)
    def test_nonnegative(self, model, omega):
        assert model.j(omega) >= 0

    def test_negative_frequency(self):
        model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0)

        with pytest.raises(DomainError, match="nonnegative"):
            spectral.evaluate_j(model, -1.0)

    @pytest.mark.parametrize(
        ["mapping", "expected"],
        (
            pytest.param(
                {"alpha": 0.2, "omega_c": 10},
                spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0),
                id="canonical",
            ),
            pytest.param(
                {"kind": "ohmic", "coupling": 0.2, "cutoff": 10, "gamma": 1},
                spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0, gamma_white=1.0),
                id="aliases",
            ),
            pytest.param(
                {"alpha": 0.2, "omega_c": 10, "omega_co_ratio": 0.01, "gamma_ratio": 0.1},
                spectral.OhmicSpectrum(
                    alpha=0.2, omega_c=10.0, omega_co=0.01 * 10, gamma_white=0.1 * 10
                ),
                id="relative",
            ),
        ),
    )
    def test_from_dict(self, mapping, expected):
        actual = spectral.SpectralModel.from_dict(mapping)

        assert actual == expected

    def test_from_dict_duplicated(self):
        with pytest.raises(ExceptionGroup) as actual:
            spectral.OhmicSpectrum.from_dict({"alpha": 0.2, "coupling": 0.3, "omega_c": 1})

        expected = ExceptionGroup(
            "received multiple values for parameters",
            [ValueError("Parameter alpha received multiple values: ['alpha', 'coupling']")],
        )
        assert_exceptions_equal(actual.value, expected)

    def test_to_dict(self):
        model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0, omega_co=0.1, gamma_white=1.0)
        expected = {
            "kind": "ohmic",
            "alpha": 0.2,
            "omega_c": 10.0,
            "omega_co": 0.1,
            "gamma_white": 1.0,
        }

        assert model.to_dict() == expected
        assert spectral.SpectralModel.from_dict(model.to_dict()) == model

    def test_total_weight(self):
        model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0)

        assert spectral.total_weight(model) == pytest.approx(0.2 * 10.0**2, rel=1e-8)


class TestTabulatedSpectrum:
    def test_interpolation(self):
        model = spectral.TabulatedSpectrum(omegas=(0.0, 1.0, 2.0), values=(0.0, 2.0, 1.0))

        np.testing.assert_allclose(model.j([0.5, 1.5, 3.0]), [1.0, 1.5, 0.0])
        assert model.j_over_omega(0.0) == 2.0
        assert model.upper_frequency == 2.0
        assert model.breakpoints == (0.0, 1.0, 2.0)

    @pytest.mark.parametrize(
        ["omegas", "values", "expected"],
        (
            pytest.param((0.0, 1.0), (0.0, 3.0), 3.0, id="vanishing"),
            pytest.param((0.0, 1.0), (1.0, 3.0), math.inf, id="finite-at-zero"),
            pytest.param((0.5, 1.0), (1.0, 3.0), 0.0, id="gapped"),
        ),
    )
    def test_low_frequency_slope(self, omegas, values, expected):
        model = spectral.TabulatedSpectrum(omegas=omegas, values=values)

        assert model.low_frequency_slope == expected

    @pytest.mark.parametrize(
        ["params", "message"],
        (
            pytest.param({"omegas": (0.0,), "values": (0.0,)}, "at least two", id="too-short"),
            pytest.param(
                {"omegas": (0.0, 1.0), "values": (0.0,)}, "at least two", id="mismatched"
            ),
            pytest.param(
                {"omegas": (1.0, 0.5), "values": (0.0, 1.0)}, "increasing", id="unsorted"
            ),
            pytest.param(
                {"omegas": (0.0, 1.0), "values": (0.0, -1.0)}, "nonnegative", id="negative"
            ),
            pytest.param(
                {"omegas": (0.0, 1.0), "values": (0.0, 1.0), "omega_co": 2.0},
                "omega_co",
                id="crossover",
            ),
        ),
    )
    def test_init_invalid(self, params, message):
        with pytest.raises(DomainError, match=message):
            spectral.TabulatedSpectrum(**params)

    def test_save_and_load(self, tmp_path):
        model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0)
        path = tmp_path / "ohmic.txt"
        omegas = np.linspace(0, 50, 11)

        spectral.save_tabulated(model, path, omegas=omegas)
        loaded = spectral.load_tabulated(path, omega_co=0.1, gamma_white=1.0)

        np.testing.assert_allclose(loaded.omegas, omegas, rtol=0)
        np.testing.assert_allclose(loaded.values, model.j(omegas), rtol=1e-15)
        assert loaded.omega_co == 0.1
        assert loaded.gamma_white == 1.0

    def test_load_invalid(self, tmp_path):
        path = tmp_path / "broken.txt"
        path.write_text("0 1 2\n1 2 3\n", encoding="utf-8")

        with pytest.raises(DomainError, match="two columns"):
            spectral.load_tabulated(path)

    def test_from_dict(self):
        model = spectral.SpectralModel.from_dict(
            {"kind": "tabulated", "omega": [0, 1], "j": [0, 1], "omega-co": 0.5}
        )

        assert model == spectral.TabulatedSpectrum(
            omegas=(0.0, 1.0), values=(0.0, 1.0), omega_co=0.5
        )


def test_from_dict_unknown_kind():
    with pytest.raises(ValueError, match="unknown spectrum kind"):
        spectral.SpectralModel.from_dict({"kind": "lorentzian"})


def test_cooperative_j():
    model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0, omega_co=0.1)
    omegas = np.array([0.05, 0.1, 1.0])

    np.testing.assert_allclose(spectral.cooperative_j(model, omegas, True), model.j(omegas))
    np.testing.assert_allclose(
        spectral.cooperative_j(model, omegas, False), [model.j(0.05), model.j(0.1), 0.0]
    )


@pytest.mark.parametrize(
    ["beta", "expected"],
    (
        pytest.param(0.1, "high", id="high"),
        pytest.param(10.0, "low", id="boundary"),
        pytest.param(100.0, "low", id="low"),
    ),
)
def test_temperature_regime(beta, expected):
    model = spectral.OhmicSpectrum(alpha=0.2, omega_c=10.0, omega_co=0.1)

    assert spectral.temperature_regime(model, beta) == expected
