import math

import numpy as np
import pytest
from scipy.integrate import quad

from spdegibbs import CATALOG, make_space, make_scheme
from spdegibbs.analytics import (
    DerivativeBundle,
    commutator_bruteforce,
    commutator_term,
    fit_loglog_slope,
    gaussian_phi_expectation,
    generator,
    gibbs_quadrature,
    ibp_residuals,
    linear_recursion_coefficients,
    lm_variance_factors,
    mu_star_expectation,
    order2_condition_residual,
    pie_variance_factors,
    postprocessor_term,
    rk2_variance_factor,
    stationarity_residual,
    stationary_variance_recursion,
    taylor_term_order2,
    theta_variance_factor,
    weak_taylor_residuals,
)


class TestVarianceFactors:
    def test_trapezoidal_is_exact(self):
        for dt in (0.01, 0.5, 3.0):
            assert theta_variance_factor(0.5, dt) == 1.0

    def test_explicit_euler_value(self):
        assert theta_variance_factor(0.0, 0.5) == pytest.approx(4.0 / 3.0, rel=1e-15)

    def test_implicit_euler_value(self):
        assert theta_variance_factor(1.0, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_window_violation(self):
        with pytest.raises(ValueError):
            theta_variance_factor(0.0, 2.0)

    def test_lm_values(self):
        assert lm_variance_factors(0.5) == (0.75, 1.0)
        chain, observed = lm_variance_factors(1e-8)
        assert chain == pytest.approx(1.0, abs=1e-8)
        assert observed == 1.0
        with pytest.raises(ValueError):
            lm_variance_factors(1.0)

    def test_pie_observable_exact_for_every_dt(self):
        for dt in (0.01, 0.5, 2.0, 10.0):
            chain, observed = pie_variance_factors(dt)
            assert chain == pytest.approx(2.0 / (2.0 + dt), rel=1e-15)
            assert observed == 1.0

    def test_rk2_not_exact(self):
        assert abs(rk2_variance_factor(0.5) - 1.0) > 1e-3
        assert rk2_variance_factor(1e-9) == pytest.approx(1.0, abs=1e-8)


class TestVarianceRecursion:
    """The iterated per-mode recursion is the independent route; it must hit
    the closed forms to 1e-12 for every scheme and step size."""

    @pytest.mark.parametrize("dt", [0.5, 0.25, 0.1, 0.01])
    @pytest.mark.parametrize(
        "name,theta", [("ee", None), ("cn", None), ("ie", None), ("theta", 0.25), ("theta", 0.75)]
    )
    def test_theta_family(self, name, theta, dt):
        space = make_space("spectral", modes=6)
        scheme = make_scheme(name, dt, theta=theta)
        a, c, _ = linear_recursion_coefficients(scheme, space)
        v = stationary_variance_recursion(a, c)
        th = scheme.theta if scheme.kind == "theta" else 0.0
        target = theta_variance_factor(th, dt) * space.covariance_diagonal / 2.0
        assert np.max(np.abs(v - target)) < 1e-12

    @pytest.mark.parametrize("dt", [0.5, 0.25, 0.1, 0.01])
    def test_lm_chain_and_observable(self, dt):
        space = make_space("fd", dx=0.1)
        a, c, post = linear_recursion_coefficients(make_scheme("lm", dt), space)
        v = stationary_variance_recursion(a, c)
        q = space.covariance_diagonal
        chain, observed = lm_variance_factors(dt)
        assert np.max(np.abs(v - chain * q / 2.0)) < 1e-12
        assert np.max(np.abs(v + post - observed * q / 2.0)) < 1e-12

    @pytest.mark.parametrize("dt", [0.5, 0.25, 0.1, 0.01, 10.0])
    def test_pie_observable_exact(self, dt):
        space = make_space("fd", dx=0.1)
        a, c, post = linear_recursion_coefficients(make_scheme("pie", dt), space)
        v = stationary_variance_recursion(a, c)
        assert np.max(np.abs(v + post - space.covariance_diagonal / 2.0)) < 1e-12

    def test_pli_interpolates(self):
        space = make_space("fd", dx=0.1)
        dt = 0.25
        q = space.covariance_diagonal
        for alpha in (0.0, 0.5, 1.0):
            a, c, _ = linear_recursion_coefficients(make_scheme("pli", dt, alpha=alpha), space)
            v = stationary_variance_recursion(a, c)
            p = space.eigenvalues ** (-alpha)
            target = (q / 2.0) / (1.0 + dt * p * space.eigenvalues / 2.0)
            assert np.max(np.abs(v - target)) < 1e-12


class TestGaussianObservable:
    def test_point_mass(self, space_fd9):
        assert gaussian_phi_expectation(space_fd9, 0.0) == 1.0

    def test_single_mode_against_quadrature_oracle(self):
        space = make_space("spectral", modes=1)
        var = space.covariance_diagonal[0] / 2.0
        oracle = quad(
            lambda y: math.exp(-(y**2)) * math.exp(-(y**2) / (2 * var)) / math.sqrt(2 * math.pi * var),
            -10,
            10,
        )[0]
        value = gaussian_phi_expectation(space, 1.0)
        assert value == pytest.approx(oracle, rel=1e-10)
        assert value == pytest.approx((1 + 1 / np.pi**2) ** -0.5, rel=1e-12)

    def test_monotone_in_factor_and_modes(self):
        space = make_space("fd", dx=0.02)
        vals = [gaussian_phi_expectation(space, s) for s in (0.5, 1.0, 1.5)]
        assert vals[0] > vals[1] > vals[2]
        small = make_space("fd", dx=0.1)
        assert gaussian_phi_expectation(small, 1.0) > gaussian_phi_expectation(space, 1.0)

    def test_mc_cross_check(self):
        space = make_space("spectral", modes=3)
        rng = np.random.default_rng(0)
        y = rng.normal(size=(400_000, 3)) * np.sqrt(space.covariance_diagonal / 2.0)
        phi = np.exp(-np.sum(y * y, axis=1))
        se = phi.std() / math.sqrt(len(phi))
        assert abs(phi.mean() - gaussian_phi_expectation(space, 1.0)) < 4 * se


class TestExpansionOperators:
    def setup_method(self):
        self.space = make_space("spectral", modes=1)
        self.q = self.space.covariance_diagonal[0]
        self.zero = CATALOG["zero"]

    def test_generator_linear_phi(self):
        # phi = y: D phi . G = -y, no trace term
        bundle = DerivativeBundle(self.space, self.zero, "linear")
        for y in (0.3, -1.2):
            assert generator(bundle, np.array([y])) == pytest.approx(-y, rel=1e-14)

    def test_generator_quadratic_phi(self):
        # phi = y^2: -2y^2 + q
        bundle = DerivativeBundle(self.space, self.zero, "quadratic")
        y = 0.7
        assert generator(bundle, np.array([y])) == pytest.approx(-2 * y**2 + self.q, rel=1e-14)

    def test_order2_term_vanishes_for_linear_phi(self):
        bundle = DerivativeBundle(self.space, self.zero, "linear")
        assert taylor_term_order2(bundle, np.array([0.4])) == 0.0

    def test_order2_term_quadratic_phi(self):
        # (1/2) 2 y^2 + (1/2) q (-1) 2 = y^2 - q
        bundle = DerivativeBundle(self.space, self.zero, "quadratic")
        y = 0.9
        assert taylor_term_order2(bundle, np.array([y])) == pytest.approx(y**2 - self.q, rel=1e-13)

    def test_postprocessor_term(self):
        bundle = DerivativeBundle(self.space, self.zero, "quadratic")
        assert postprocessor_term(bundle, np.array([2.0])) == pytest.approx(self.q / 4.0, rel=1e-14)
        lin = DerivativeBundle(self.space, self.zero, "linear")
        assert postprocessor_term(lin, np.array([2.0])) == 0.0

    def test_commutator_quadratic_phi(self):
        # -(1/4) q D2phi(DG e, e) = -(1/4) q (-1) 2 = q/2
        bundle = DerivativeBundle(self.space, self.zero, "quadratic")
        assert commutator_term(bundle, np.array([0.3])) == pytest.approx(self.q / 2.0, rel=1e-13)
        lin = DerivativeBundle(self.space, self.zero, "linear")
        assert commutator_term(lin, np.array([0.3])) == 0.0

    @pytest.mark.parametrize("nl_name", ["zero", "cos"])
    def test_commutator_against_bruteforce(self, nl_name, rng):
        space = make_space("spectral", modes=2)
        bundle = DerivativeBundle(space, CATALOG[nl_name], "expnorm")
        for _ in range(10):
            y = rng.normal(scale=0.4, size=2)
            assert commutator_bruteforce(bundle, y) == pytest.approx(
                commutator_term(bundle, y), abs=1e-5
            )

    def test_bundle_finite_difference_consistency(self):
        for nl_name in ("cos", "linear"):
            for phi in ("linear", "quadratic", "expnorm"):
                bundle = DerivativeBundle(make_space("spectral", modes=2), CATALOG[nl_name], phi)
                assert bundle.finite_difference_check(n_points=20) <= 1e-5

    def test_bundle_rejects_large_dimension(self):
        with pytest.raises(ValueError):
            DerivativeBundle(make_space("spectral", modes=4), self.zero, "expnorm")


class TestEquilibriumIdentities:
    def test_gaussian_quadratic_closed_form(self):
        # A1 phi + [L, Abar] phi = (y^2 - q) + q/2 has Gaussian mean zero
        space = make_space("spectral", modes=1)
        res = order2_condition_residual(space, CATALOG["zero"], "quadratic")
        assert res <= 1e-10

    @pytest.mark.parametrize("modes,tol", [(1, 1e-6), (2, 1e-5)])
    def test_cos_reaction_expnorm(self, modes, tol):
        space = make_space("spectral", modes=modes)
        res = order2_condition_residual(space, CATALOG["cos"], "expnorm")
        assert res <= tol

    @pytest.mark.parametrize("nl_name", ["zero", "cos"])
    def test_integration_by_parts(self, nl_name):
        space = make_space("spectral", modes=1)
        r1, r2 = ibp_residuals(space, CATALOG[nl_name], "expnorm")
        assert r1 <= 1e-6
        assert r2 <= 1e-6

    @pytest.mark.parametrize("modes", [1, 2])
    @pytest.mark.parametrize("nl_name", ["zero", "cos"])
    @pytest.mark.parametrize("phi", ["quadratic", "expnorm"])
    def test_generator_mean_vanishes(self, modes, nl_name, phi):
        space = make_space("spectral", modes=modes)
        assert stationarity_residual(space, CATALOG[nl_name], phi) <= 1e-6

    def test_gibbs_weights_normalised(self):
        space = make_space("spectral", modes=2)
        pts, w = gibbs_quadrature(space, CATALOG["cos"], 40)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert pts.shape == (1600, 2)

    def test_mu_star_expectation_gaussian_moment(self):
        # zero reaction: the target measure is the Gaussian itself
        space = make_space("spectral", modes=1)
        second = mu_star_expectation(space, CATALOG["zero"], lambda y: float(y[0] ** 2), 60)
        assert second == pytest.approx(space.covariance_diagonal[0] / 2.0, rel=1e-10)


class TestWeakTaylorExpansion:
    def test_residual_slopes(self):
        space = make_space("spectral", modes=1)
        dts = (2**-3, 2**-4, 2**-5, 2**-6, 2**-7)
        res_int, res_post = weak_taylor_residuals(space, CATALOG["cos"], "expnorm", dts)
        assert fit_loglog_slope(dts, res_int) >= 2.7
        assert fit_loglog_slope(dts, res_post) >= 1.7

    def test_wrong_generator_coefficient_is_detected(self):
        # mutation hook: with the trace coefficient at 1 instead of 1/2 the
        # one-step expansion is wrong at first order and the slope collapses
        space = make_space("spectral", modes=1)
        dts = (2**-3, 2**-4, 2**-5, 2**-6, 2**-7)
        res_int, _ = weak_taylor_residuals(space, CATALOG["cos"], "expnorm", dts, trace_coefficient=1.0)
        assert fit_loglog_slope(dts, res_int) < 2.7

    def test_two_mode_expansion(self):
        space = make_space("spectral", modes=2)
        dts = (2**-3, 2**-4, 2**-5, 2**-6)
        res_int, res_post = weak_taylor_residuals(space, CATALOG["cos"], "expnorm", dts, n_nodes=30)
        assert fit_loglog_slope(dts, res_int) >= 2.7
        assert fit_loglog_slope(dts, res_post) >= 1.7
