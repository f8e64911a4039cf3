import math

import numpy as np
import pytest

from xqtherm import estimation
from xqtherm.decoherence import DecayFactors, decay_factors
from xqtherm.distributions import (
    MeasurementConfig,
    collective_field_distribution,
    correlation_distribution,
    gaussian_s_theta0,
    product_distribution,
)
from xqtherm.errors import ContractError, DomainError
from xqtherm.spectral import OhmicSpectrum

model = OhmicSpectrum(alpha=0.2, omega_c=10.0, omega_co=0.1, gamma_white=1.0)

HIGH_T = {"beta": 0.1, "t": 0.1}
LOW_T = {"beta": 100.0, "t": 0.18}

synthetic = DecayFactors(
    gamma_l=1e-3,
    gamma_h=1 - 1e-3,
    d_gamma_l_d_beta=-2e-3,
    d_gamma_h_d_beta=-5e-2,
    beta=10.0,
    time=0.2,
)


def make_config(n, theta, decay=synthetic):
    return MeasurementConfig(n_thermometers=n, theta=theta, decay=decay)


def working_point(n, theta, beta, t):
    return make_config(n, theta, decay_factors(model, beta, t))


class TestFisherAnalytic:
    @pytest.mark.parametrize(
        ["regime", "derivative"],
        (
            pytest.param("full", -2e-3 - 5e-2, id="full"),
            pytest.param("high", -5e-2, id="high"),
            pytest.param("low", -2e-3, id="low"),
        ),
    )
    def test_independent(self, regime, derivative):
        report = estimation.fisher_analytic(make_config(8, 0.0), regime)

        expected = 8 * derivative**2 / (math.exp(2.0) - 1)
        assert report.fisher == pytest.approx(expected)
        assert report.method == f"analytic_{regime}"
        assert report.crb_variance == pytest.approx(1 / expected)
        assert report.precision_figure == pytest.approx(100 * expected)

    def test_correlation_high(self):
        n = 8
        report = estimation.fisher_high_t(make_config(n, math.pi / 2))

        x = n * 1e-3
        expected = 8 * x**2 / (math.exp(2.0) + 2 * x) ** 2 * 5e-2**2
        assert report.fisher == pytest.approx(expected)

    def test_correlation_low(self):
        n = 8
        report = estimation.fisher_low_t(make_config(n, math.pi / 2))

        expected = 2 * n**2 / (math.exp(2.0) + 2 * n * 1e-3) ** 2 * 2e-3**2
        assert report.fisher == pytest.approx(expected)

    def test_correlation_full_is_gaussian_fisher(self):
        n = 16
        config = make_config(n, math.pi / 2)
        report = estimation.fisher_analytic(config, "full")

        variance = n * (1 + 2 * math.exp(-2.0) * n * 1e-3)
        derivative = (
            2 * n**2 * math.exp(-2.0) * (-2e-3 - 2 * 1e-3 * (-2e-3 - 5e-2))
        )
        assert report.fisher == pytest.approx(0.5 * (derivative / variance) ** 2)

    def test_other_angles(self):
        with pytest.raises(ContractError, match="theta"):
            estimation.fisher_analytic(make_config(4, 0.3))

    def test_invalid_regime(self):
        with pytest.raises(DomainError, match="regime"):
            estimation.fisher_analytic(make_config(4, 0.0), "medium")

    def test_noiseless(self):
        decay = DecayFactors(gamma_l=0.0, gamma_h=0.0, d_gamma_h_d_beta=-1.0)
        report = estimation.fisher_analytic(make_config(4, 0.0, decay))

        assert report.degenerate
        assert report.fisher == math.inf
        assert report.crb_variance == 0.0

    def test_temperature_independent(self):
        decay = DecayFactors(gamma_l=0.1, gamma_h=0.2)

        for theta in [0.0, math.pi / 2]:
            report = estimation.fisher_analytic(make_config(4, theta, decay))
            assert report.fisher == 0.0
            assert report.crb_variance == math.inf

    def test_regime_flag(self, caplog):
        config = working_point(4, 0.0, **LOW_T)

        report = estimation.fisher_high_t(config, model=model)

        assert report.regime_flag == "low"
        assert "high temperature formula" in caplog.text


class TestScaling:
    def test_high_temperature_independent_is_linear(self):
        points = [
            (n, estimation.fisher_high_t(working_point(n, 0.0, **HIGH_T)).fisher)
            for n in [1, 2, 4, 8, 16]
        ]
        fit = estimation.fit_scaling_exponent(points)

        assert fit.exponent == pytest.approx(1.0, abs=1e-10)
        assert fit.rms < 1e-10
        assert fit.r_squared == pytest.approx(1.0)

    def test_low_temperature_correlation_is_quadratic(self):
        decay = DecayFactors(gamma_l=1e-4, gamma_h=1 - 1e-4, d_gamma_l_d_beta=-1e-3)
        points = [
            (n, estimation.fisher_low_t(make_config(n, math.pi / 2, decay)).fisher)
            for n in [2, 4, 8, 16]
        ]

        fit = estimation.fit_scaling_exponent(points)

        assert 1.95 <= fit.exponent <= 2.0

    @pytest.mark.parametrize(
        ["theta", "t", "bounds"],
        (
            pytest.param(math.pi / 2, 0.18, (1.9, 2.0), id="correlation"),
            pytest.param(0.0, 0.6, (0.98, 1.02), id="independent"),
        ),
    )
    def test_low_temperature_working_point(self, theta, t, bounds):
        points = [
            (n, estimation.fisher_low_t(working_point(n, theta, 100.0, t)).fisher)
            for n in [2, 4, 8, 16, 32]
        ]

        fit = estimation.fit_scaling_exponent(points)

        lower, upper = bounds
        assert lower <= fit.exponent <= upper

    def test_saturation(self):
        decay = DecayFactors(gamma_l=1e-3, gamma_h=0.5, d_gamma_l_d_beta=-1e-3)
        n_star = estimation.saturation_scale(decay)
        limit = decay.d_gamma_l_d_beta**2 / (2 * decay.gamma_l**2)

        # F / limit = (x / (1 + x))² with x = 2 N Γ_L e^{-2Γ}
        n = math.ceil(40 * n_star)
        report = estimation.fisher_low_t(make_config(n, math.pi / 2, decay))

        assert n_star == pytest.approx(math.exp(2 * 0.501) / 2e-3)
        assert report.fisher == pytest.approx(limit, rel=0.05)
        assert report.fisher < limit

    @pytest.mark.parametrize(
        ["alpha", "dimension", "expected"],
        (
            pytest.param(0.0, 1, (0.0, 2.0), id="all-to-all"),
            pytest.param(1.5, 3, (0.5, 1.5), id="partial"),
            pytest.param(1.0, 2, (0.5, 1.5), id="half"),
            pytest.param(3.0, 1, (1.0, 1.0), id="short-range"),
            pytest.param(4.0, 2, (1.0, 1.0), id="faster-than-dimension"),
        ),
    )
    def test_finite_range(self, alpha, dimension, expected):
        assert estimation.finite_range_scaling_exponent(alpha, dimension) == expected

    def test_finite_range_invalid(self):
        with pytest.raises(DomainError):
            estimation.finite_range_scaling_exponent(1.0, 0)

    @pytest.mark.parametrize(
        "points",
        (
            pytest.param([(1, 1.0), (2, 2.0)], id="too-few"),
            pytest.param([(1, 1.0), (1, 2.0), (2, 3.0)], id="duplicated"),
            pytest.param([(1, 1.0), (2, 0.0), (4, 3.0)], id="nonpositive"),
        ),
    )
    def test_fit_invalid(self, points):
        with pytest.raises(DomainError):
            estimation.fit_scaling_exponent(points)


class TestFisherExact:
    def test_single_thermometer_matches_full_formula(self):
        config = working_point(1, 0.0, **HIGH_T)
        dist = collective_field_distribution(config)

        report = estimation.fisher_exact(dist, HIGH_T["beta"], model, HIGH_T["t"])
        expected = estimation.fisher_analytic(config, "full").fisher

        assert report.fisher == pytest.approx(expected, rel=1e-4)
        assert report.method == "exact_collective_field"

    def test_single_thermometer_low_temperature(self):
        config = working_point(1, 0.0, **LOW_T)
        dist = product_distribution(config)

        report = estimation.fisher_exact(dist, LOW_T["beta"], model, LOW_T["t"])
        expected = estimation.fisher_analytic(config, "full").fisher

        assert report.fisher == pytest.approx(expected, rel=1e-4)

    def test_single_thermometer_correlation_is_uninformative(self):
        config = working_point(1, math.pi / 2, **HIGH_T)
        dist = collective_field_distribution(config)

        report = estimation.fisher_exact(dist, HIGH_T["beta"], model, HIGH_T["t"])

        assert report.fisher < 1e-12

    def test_low_temperature_correlation(self):
        n = 8
        config = working_point(n, math.pi / 2, **LOW_T)
        dist = collective_field_distribution(config)

        exact = estimation.fisher_exact(dist, LOW_T["beta"], model, LOW_T["t"]).fisher
        analytic = estimation.fisher_low_t(config).fisher

        # the Gaussian model counts N² instead of N (N - 1) pairs
        assert exact == pytest.approx(analytic, rel=0.15)
        assert exact == pytest.approx(analytic * (n - 1) / n, rel=0.02)

    @pytest.mark.parametrize("theta", [0.0, math.pi / 2])
    def test_gaussian_forms_match_analytic(self, theta):
        config = working_point(16, theta, **LOW_T)
        builder = gaussian_s_theta0 if theta == 0 else correlation_distribution

        report = estimation.fisher_exact(builder(config), LOW_T["beta"], model, LOW_T["t"])
        analytic = estimation.fisher_analytic(config, "full").fisher

        if theta == 0:
            # the analytic form only keeps the information in the mean
            assert report.fisher > analytic
        else:
            assert report.fisher == pytest.approx(analytic, rel=1e-4)

    def test_empirical_cannot_be_rebuilt(self):
        from xqtherm.sampling import empirical_p_of_s, sample_readouts

        config = working_point(2, 0.0, **HIGH_T)
        dist = empirical_p_of_s(sample_readouts(config, 100, seed=0))

        with pytest.raises(ContractError, match="cannot be rebuilt"):
            estimation.fisher_exact(dist, HIGH_T["beta"], model, HIGH_T["t"])


class TestScoreFunction:
    @pytest.mark.parametrize("n", [4, 32])
    def test_correlation(self, n):
        config = working_point(n, math.pi / 2, **LOW_T)
        gaussian = correlation_distribution(config)

        score = estimation.score_function(config, [0.0])

        assert score.observable == "S2"
        assert score.coefficient * (gaussian.mean("S2") - score.expectation) == pytest.approx(
            0.0, abs=1e-10 * abs(score.coefficient) * n
        )
        variance = score.coefficient**2 * gaussian.variance("S2")
        assert variance == pytest.approx(
            estimation.fisher_analytic(config, "full").fisher, rel=1e-2
        )

    def test_independent(self):
        config = working_point(16, 0.0, **HIGH_T)
        dist = collective_field_distribution(config)
        support = dist.support
        probabilities = dist.probabilities()

        score = estimation.score_function(config, support)

        assert score.observable == "S"
        mean = float(np.sum(probabilities * score.values))
        assert abs(mean) <= 1e-10 * abs(score.coefficient) * 16
        variance = score.coefficient**2 * gaussian_s_theta0(config).variance("S")
        assert variance == pytest.approx(
            estimation.fisher_analytic(config, "full").fisher, rel=1e-2
        )

    def test_degenerate(self):
        config = make_config(4, 0.0, DecayFactors(gamma_l=0.0, gamma_h=0.0))

        score = estimation.score_function(config, [4, 4])

        assert score.degenerate
        assert np.all(np.isnan(score.values))


class TestGroupedFisher:
    def test_group_size(self):
        decay = DecayFactors(gamma_l=1e-3, gamma_h=1 - 1e-3, d_gamma_l_d_beta=-1e-2)

        report = estimation.grouped_fisher(1024, decay)

        assert report.group_size == 3695
        assert report.fisher == pytest.approx(1024 * 3695 * 1e-4 / (2 * math.exp(4.0)))
        assert report.ratio_to_independent == pytest.approx(216.2, rel=1e-3)
        assert not report.fallback
        assert not report.saturated

    def test_fallback_without_cooperative_decay(self):
        decay = DecayFactors(gamma_l=0.0, gamma_h=1.0, d_gamma_h_d_beta=-1e-2)

        report = estimation.grouped_fisher(16, decay)

        assert report.fallback
        assert report.ratio_to_independent == 1.0
        assert report.fisher == 0.0

    def test_invalid(self):
        with pytest.raises(DomainError):
            estimation.grouped_fisher(0, synthetic)


class TestSNR:
    def test_snr(self):
        decay = DecayFactors(gamma_l=0.1, gamma_h=0.1)
        config = make_config(10, 0.0, decay)
        from xqtherm.distributions import CollectiveGaussianS

        reference = CollectiveGaussianS(
            config=config, method="gaussian_theta0", mean_s=5.0, variance_s=4.0
        )
        shifted = CollectiveGaussianS(
            config=config, method="gaussian_theta0", mean_s=5.5, variance_s=4.0
        )

        report = estimation.snr("S", (reference, shifted), 0.1)

        assert report.signal == pytest.approx(0.5)
        assert report.noise == 2.0
        assert report.snr == pytest.approx(0.25)
        assert report.precision == pytest.approx(2.0 * 0.1 / 0.5)
        assert not report.degenerate

    def test_noiseless(self):
        config = make_config(4, 0.0, DecayFactors(gamma_l=0.0, gamma_h=0.0))
        dist = gaussian_s_theta0(config)

        report = estimation.snr("S", (dist, dist), 0.1)

        assert report.degenerate
        assert report.precision == math.inf

    def test_zero_step(self):
        dist = gaussian_s_theta0(make_config(4, 0.0))

        with pytest.raises(DomainError, match="delta_beta"):
            estimation.snr("S", (dist, dist), 0.0)

    def test_default_step(self):
        reference = gaussian_s_theta0(make_config(10, 0.0))
        shifted = gaussian_s_theta0(
            make_config(10, 0.0, DecayFactors(gamma_l=1e-3, gamma_h=0.9, beta=10.0))
        )

        report = estimation.snr("S", (reference, shifted))

        assert report.delta_beta == pytest.approx(1e-2)
        assert report.precision == pytest.approx(report.noise * 1e-2 / abs(report.signal))

    def test_default_step_without_beta(self):
        dist = gaussian_s_theta0(make_config(4, 0.0, DecayFactors(gamma_l=0.1, gamma_h=0.1)))

        with pytest.raises(DomainError, match="delta_beta"):
            estimation.snr("S", (dist, dist))


class TestOptimizeTime:
    t_grid = [round(0.005 * k, 10) for k in range(1, 201)]

    @pytest.mark.parametrize(
        ["point", "theta", "regime"],
        (
            pytest.param(HIGH_T, 0.0, "high", id="high-independent"),
            pytest.param(LOW_T, math.pi / 2, "low", id="low-correlation"),
            pytest.param(LOW_T, 0.0, "low", id="low-independent"),
        ),
    )
    def test_interior_optimum(self, point, theta, regime):
        config = working_point(8, theta, **point)

        t_best, report = estimation.optimize_time(
            model, point["beta"], config, self.t_grid, regime
        )
        sweep = estimation.fisher_sweep(
            model, point["beta"], [8], [theta], self.t_grid, regime
        )

        assert self.t_grid[0] < t_best < self.t_grid[-1]
        assert report.time == t_best
        assert report.fisher == pytest.approx(float(sweep["fisher"].max()))
        assert self.t_grid[int(sweep["fisher"].squeeze().argmax())] == t_best

    def test_ties_prefer_shorter_times(self):
        flat = OhmicSpectrum(alpha=0.0, omega_c=10.0, omega_co=0.1)
        config = make_config(4, 0.0)

        t_best, report = estimation.optimize_time(flat, 1.0, config, [0.1, 0.2, 0.3])

        assert t_best == 0.1
        assert report.fisher == 0.0

    def test_empty_grid(self):
        with pytest.raises(DomainError, match="empty"):
            estimation.optimize_time(model, 1.0, make_config(4, 0.0), [])

    @pytest.mark.parametrize(
        "t_grid",
        (
            pytest.param([0.2, 0.1, 0.3], id="unsorted"),
            pytest.param([0.1, 0.1, 0.2], id="repeated"),
        ),
    )
    def test_grid_not_increasing(self, t_grid):
        with pytest.raises(DomainError, match="increasing"):
            estimation.optimize_time(model, 1.0, make_config(4, 0.0), t_grid)

    @pytest.mark.parametrize(
        ["point", "theta", "regime", "expected"],
        (
            pytest.param(HIGH_T, 0.0, "high", 0.1, id="high-independent"),
            pytest.param(LOW_T, math.pi / 2, "low", 0.18, id="low-correlation"),
            pytest.param(LOW_T, 0.0, "low", 0.6, id="low-independent"),
        ),
    )
    def test_reported_times(self, point, theta, regime, expected):
        t_grid = [round(0.01 * k, 10) for k in range(1, 101)]
        config = working_point(16, theta, **point)

        t_best, _ = estimation.optimize_time(model, point["beta"], config, t_grid, regime)

        assert abs(t_best - expected) <= 0.01 + 1e-9


class TestRegimeOrdering:
    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 128])
    def test_high_temperature_prefers_independent(self, n):
        independent = estimation.fisher_high_t(working_point(n, 0.0, 0.1, 0.1)).fisher
        correlation = estimation.fisher_high_t(working_point(n, math.pi / 2, 0.1, 0.15)).fisher

        assert independent > correlation

    @pytest.mark.parametrize("n", [1, 8, 128])
    def test_high_temperature_correlation_bound(self, n):
        config = working_point(n, math.pi / 2, **HIGH_T)
        bound = 2 * config.decay.d_gamma_h_d_beta**2

        assert estimation.fisher_high_t(config).fisher <= bound

    def test_low_temperature_prefers_correlation(self):
        independent = estimation.fisher_low_t(working_point(64, 0.0, **LOW_T)).fisher
        correlation = estimation.fisher_low_t(working_point(64, math.pi / 2, **LOW_T)).fisher

        assert correlation > independent


def test_fisher_sweep():
    sweep = estimation.fisher_sweep(model, 0.1, [1, 2], [0.0, math.pi / 2], [0.1, 0.2], "high")

    assert dict(sweep.sizes) == {"theta": 2, "n": 2, "time": 2}
    np.testing.assert_allclose(sweep["precision_figure"], 0.01 * sweep["fisher"])
    np.testing.assert_allclose(
        sweep["fisher"].sel(theta=0.0, n=2), 2 * sweep["fisher"].sel(theta=0.0, n=1)
    )


def test_report_to_dict():
    report = estimation.fisher_analytic(make_config(2, 0.0))
    mapping = report.to_dict()

    assert mapping["n"] == 2
    assert mapping["method"] == "analytic_full"
    assert mapping["precision_figure"] == pytest.approx(100 * report.fisher)
