import math

import numpy as np
import pytest
from scipy.integrate import quad

from spdegibbs import CATALOG, NoiseStream, make_preconditioner, make_space, nemytskii, potential
from spdegibbs.model import drift, drift_alpha, get_nonlinearity, sample_increment


class TestCatalog:
    @pytest.mark.parametrize("name", ["zero", "linear", "cos"])
    def test_lipschitz_certificate(self, name, rng):
        nl = CATALOG[name]
        a = rng.normal(scale=3.0, size=10_000)
        b = rng.normal(scale=3.0, size=10_000)
        lhs = np.abs(nl.f(a) - nl.f(b))
        assert (lhs <= nl.lip_bound * np.abs(a - b) + 1e-12).all()

    @pytest.mark.parametrize("name", ["zero", "linear", "cos"])
    def test_potential_density_slope(self, name, rng):
        # u' = -f by central differences
        nl = CATALOG[name]
        x = rng.normal(scale=2.0, size=100)
        h = 1e-6
        slope = (nl.potential_density(x + h) - nl.potential_density(x - h)) / (2 * h)
        assert np.max(np.abs(slope + nl.f(x))) < 1e-8

    @pytest.mark.parametrize("name", ["zero", "linear", "cos"])
    def test_derivative_consistency(self, name, rng):
        nl = CATALOG[name]
        x = rng.normal(scale=2.0, size=100)
        h = 1e-6
        slope = (nl.f(x + h) - nl.f(x - h)) / (2 * h)
        assert np.max(np.abs(slope - nl.f_prime(x))) < 1e-8

    def test_cos_admissible_in_both_flavors(self):
        nl = CATALOG["cos"]
        assert nl.lip_bound == 2.0
        assert nl.is_admissible(make_space("spectral", modes=4))  # pi^2 > 2
        assert nl.is_admissible(make_space("fd", dx=0.02))  # 9.866... > 2

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            get_nonlinearity("tanh")


class TestNemytskii:
    def test_zero_gives_zero_field(self, space_fd9, rng):
        y = rng.normal(size=9)
        assert np.array_equal(nemytskii(space_fd9, CATALOG["zero"], y), np.zeros(9))

    def test_linear_is_negation(self, space_fd49, rng):
        y = rng.normal(size=49)
        out = nemytskii(space_fd49, CATALOG["linear"], y)
        assert np.max(np.abs(out + y)) < 1e-12

    @pytest.mark.parametrize("modes,tol", [(49, 1e-3), (199, 1e-4)])
    def test_constant_field_against_quadrature_oracle(self, modes, tol):
        # f(0) = 1, so the result holds the sine coefficients of the
        # constant function; oracle = continuum integral of e_k
        space = make_space("spectral", modes=modes)
        out = nemytskii(space, CATALOG["cos"], np.zeros(modes))
        for k in (1, 3):
            oracle = quad(lambda z, k=k: math.sqrt(2) * math.sin(k * math.pi * z), 0, 1)[0]
            assert out[k - 1] == pytest.approx(oracle, abs=tol)
        assert abs(out[1]) < 1e-12  # even modes vanish by symmetry

    def test_grid_error_shrinks_quadratically(self):
        oracle = 2 * math.sqrt(2) / math.pi
        errs = []
        for modes in (24, 49, 99):
            space = make_space("spectral", modes=modes)
            errs.append(abs(nemytskii(space, CATALOG["cos"], np.zeros(modes))[0] - oracle))
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < errs[0] / 8  # roughly (dx ratio)^2 = 16, with slack


class TestPotential:
    def test_zero(self, space_fd9):
        assert potential(space_fd9, CATALOG["zero"], np.ones(9)) == 0.0

    @pytest.mark.parametrize("flavor", ["spectral", "fd"])
    def test_quadratic_potential_of_first_mode(self, flavor):
        # u = x^2/2 integrates e_1^2/2 = 1/2 exactly under the grid rule
        space = make_space(flavor, modes=15)
        e1 = np.zeros(15)
        e1[0] = 1.0
        assert potential(space, CATALOG["linear"], e1) == pytest.approx(0.5, abs=1e-9)

    @pytest.mark.parametrize("name", ["linear", "cos"])
    @pytest.mark.parametrize("modes", [4, 8])
    def test_gradient_structure(self, name, modes, rng):
        # -DV (finite differences, step 1e-5) against the reaction coefficients
        nl = CATALOG[name]
        space = make_space("fd", modes=modes)
        for _ in range(20):
            y = rng.normal(scale=0.7, size=modes)
            grad = np.empty(modes)
            for k in range(modes):
                e = np.zeros(modes)
                e[k] = 1e-5
                grad[k] = (potential(space, nl, y + e) - potential(space, nl, y - e)) / 2e-5
            f_coef = nemytskii(space, nl, y)
            assert np.linalg.norm(-grad - f_coef) <= 1e-5 * max(np.linalg.norm(f_coef), 1e-3)


class TestDrift:
    def test_zero_reaction_is_negation(self, space_fd9, rng):
        y = rng.normal(size=9)
        assert np.max(np.abs(drift(space_fd9, CATALOG["zero"], y) + y)) < 1e-15

    def test_origin_is_fixed_point_only_for_zero_reaction(self, space_fd9):
        assert np.array_equal(drift(space_fd9, CATALOG["zero"], np.zeros(9)), np.zeros(9))
        assert np.linalg.norm(drift(space_fd9, CATALOG["cos"], np.zeros(9))) > 0.01

    def test_cos_at_origin_first_coefficient(self):
        space = make_space("spectral", modes=199)
        out = drift(space, CATALOG["cos"], np.zeros(199))
        oracle = (1.0 / math.pi**2) * (2 * math.sqrt(2) / math.pi)  # q_1 <1, e_1>
        assert out[0] == pytest.approx(oracle, abs=2e-5)

    def test_alpha_one_matches_plain_drift(self, space_fd49, rng):
        precond = make_preconditioner(space_fd49, 1.0)
        for _ in range(100):
            y = rng.normal(size=49)
            a = drift_alpha(space_fd49, precond, CATALOG["cos"], y)
            b = drift(space_fd49, CATALOG["cos"], y)
            assert np.max(np.abs(a - b)) < 1e-12

    def test_alpha_zero_zero_reaction_is_stiff_linear(self, space_fd9, rng):
        precond = make_preconditioner(space_fd9, 0.0)
        y = rng.normal(size=9)
        out = drift_alpha(space_fd9, precond, CATALOG["zero"], y)
        assert np.max(np.abs(out + space_fd9.eigenvalues * y)) < 1e-12

    def test_alpha_half_first_mode(self):
        space = make_space("spectral", modes=2)
        precond = make_preconditioner(space, 0.5)
        out = drift_alpha(space, precond, CATALOG["zero"], np.array([1.0, 0.0]))
        assert out[0] == pytest.approx(-math.pi, rel=1e-13)
        assert out[1] == 0.0


class TestSampleIncrement:
    def test_deterministic(self, space_fd9):
        precond = make_preconditioner(space_fd9, 1.0)
        a = sample_increment(space_fd9, precond, NoiseStream(3, 5), 0.25)
        b = sample_increment(space_fd9, precond, NoiseStream(3, 5), 0.25)
        assert np.array_equal(a, b)

    def test_consumes_one_step(self, space_fd9):
        precond = make_preconditioner(space_fd9, 1.0)
        stream = NoiseStream(3, 5)
        sample_increment(space_fd9, precond, stream, 0.25)
        assert stream.step_counter == 1

    def test_moments_match_covariance(self):
        # MC moment oracle: mean 0, Var = dt p_k, within 4 standard errors
        space = make_space("spectral", modes=4)
        precond = make_preconditioner(space, 1.0)
        dt = 0.3
        n = 100_000
        draws = np.empty((n, 4))
        for m in range(n):
            draws[m] = sample_increment(space, precond, NoiseStream(17, m), dt)
        target_var = dt * precond.multipliers
        se_mean = np.sqrt(target_var / n)
        assert (np.abs(draws.mean(axis=0)) < 4 * se_mean).all()
        se_var = target_var * np.sqrt(2.0 / n)
        assert (np.abs(draws.var(axis=0) - target_var) < 4 * se_var).all()
        # first spectral mode has variance dt / pi^2
        assert target_var[0] == pytest.approx(dt / np.pi**2, rel=1e-14)

    def test_norm_squared_mean_is_dt_trace(self):
        space = make_space("fd", dx=0.1)
        precond = make_preconditioner(space, 1.0)
        dt = 0.5
        n = 50_000
        norms = np.empty(n)
        for m in range(n):
            norms[m] = np.sum(sample_increment(space, precond, NoiseStream(23, m), dt) ** 2)
        target = dt * space.trace_q(0.0)
        # |dW|^2 is a weighted chi-square; bound its standard error from above
        se = math.sqrt(2.0 * dt**2 * np.sum(precond.multipliers**2) / n)
        assert abs(norms.mean() - target) < 4 * se

    def test_rejects_bad_dt(self, space_fd9):
        precond = make_preconditioner(space_fd9, 1.0)
        with pytest.raises(ValueError):
            sample_increment(space_fd9, precond, NoiseStream(0, 0), 0.0)
