"""Closed-form laws and the small-dimension expansion verifier.

Everything in the linear (zero-reaction) case is Gaussian and solvable in
closed form: each mode of each scheme obeys a scalar AR(1) recursion whose
stationary variance is ``factor * q_k / 2``, with a scheme-specific variance
factor.  A factor of exactly 1 means the sampled law equals the target
Gaussian.

The second half of the module is a numerical verifier, at dimension K <= 3,
for the algebra behind the second-order schemes: the Ito generator of the
preconditioned flow, the dt^2 coefficient of the integrator's one-step weak
expansion, the dt coefficient of the postprocessor's expansion, their
commutator, and the integration-by-parts identities that make the combined
equilibrium term vanish.  Expectations against the target measure use tensor
Gauss-Hermite quadrature reweighted by the Gibbs density, with the
normaliser computed on the same grid so quadrature bias cancels in the
ratio.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .model import Nonlinearity, potential
from .schemes import SchemeSpec, pie_coefficients, theta_coefficients
from .spectral import SpectralSpace

# ---------------------------------------------------------------------------
# Gaussian stationary laws


def theta_variance_factor(theta: float, dt: float) -> float:
    """Stationary variance factor 2 / (2 + (2 theta - 1) dt) of the theta-method.

    Exactly 1 at theta = 1/2: the trapezoidal scheme has no equilibrium bias
    in the Gaussian case.
    """
    if theta < 0.5 and dt >= 2.0 / (1.0 - 2.0 * theta):
        raise ValueError(
            f"theta={theta} requires dt < {2.0 / (1.0 - 2.0 * theta)}, got {dt}"
        )
    return 2.0 / (2.0 + (2.0 * theta - 1.0) * dt)


def lm_variance_factors(dt: float) -> tuple[float, float]:
    """(chain, observable) variance factors of the split-increment scheme.

    The chain equilibrates at 1 - dt/2; the postprocessor adds back exactly
    dt/2, so the observable factor is 1 for every dt < 1.
    """
    if dt >= 1.0:
        raise ValueError(f"closed form requires dt < 1, got {dt}")
    return 1.0 - dt / 2.0, 1.0


def pie_variance_factors(dt: float) -> tuple[float, float]:
    """(chain, observable) variance factors of the postprocessed implicit Euler.

    Chain factor 2/(2 + dt) (same as implicit Euler); the observable factor
    is exactly 1 for every dt > 0.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return 2.0 / (2.0 + dt), 1.0


def rk2_variance_factor(dt: float) -> float:
    """Variance factor (2 - dt) / (2 - dt + dt^2/2): second-order accurate, not exact."""
    return (2.0 - dt) / (2.0 - dt + 0.5 * dt**2)


def scheme_variance_factor(scheme: SchemeSpec) -> float:
    """Variance factor of the scheme's *observed* chain in the Gaussian case."""
    k = scheme.kind
    if k == "ee":
        return theta_variance_factor(0.0, scheme.dt)
    if k == "theta":
        return theta_variance_factor(scheme.theta, scheme.dt)
    if k == "lm":
        return lm_variance_factors(scheme.dt)[1]
    if k == "pie":
        return pie_variance_factors(scheme.dt)[1]
    if k == "rk2":
        return rk2_variance_factor(scheme.dt)
    raise ValueError(f"no single variance factor for scheme kind {k!r}")


def linear_recursion_coefficients(
    scheme: SchemeSpec, space: SpectralSpace
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Per-mode AR(1) data (a_k, c_k, observable add-on) in the Gaussian case.

    One step of any scheme with zero reaction reads y' = a y + (noise of
    variance c); the stationary variance solves v = a^2 v + c.  For
    postprocessed schemes the observable adds an independent contribution
    returned as the third entry (None otherwise).
    """
    dt = scheme.dt
    q = space.covariance_diagonal
    k = scheme.kind
    if k == "ee":
        a = np.full_like(q, 1.0 - dt)
        c = dt * q
        return a, c, None
    if k == "theta":
        am, _, binc = theta_coefficients(scheme.theta, dt)
        return np.full_like(q, am), binc**2 * dt * q, None
    if k == "lm":
        a = np.full_like(q, 1.0 - dt)
        c = (1.0 - dt / 2.0) ** 2 * dt * q
        return a, c, 0.25 * dt * q
    if k == "pie":
        cm, _, _ = pie_coefficients(dt)
        post = 0.5 / math.sqrt(1.0 + 0.5 * dt)
        return np.full_like(q, cm), cm**2 * dt * q, post**2 * dt * q
    if k == "rk2":
        a = np.full_like(q, 1.0 - dt + 0.5 * dt**2)
        c = (1.0 - dt / 2.0) ** 2 * dt * q
        return a, c, None
    if k == "pli":
        p = space.eigenvalues ** (-scheme.alpha)
        a = 1.0 / (1.0 + dt * (p * space.eigenvalues))
        c = a**2 * dt * p
        return a, c, None
    raise ValueError(f"unhandled scheme kind {k!r}")


def stationary_variance_recursion(a: np.ndarray, c: np.ndarray, max_iter: int = 100000) -> np.ndarray:
    """Fixed point of v <- a^2 v + c by straight iteration (no closed form).

    Deterministic independent route for cross-checking the variance factors.
    """
    a2 = np.asarray(a, dtype=float) ** 2
    c = np.asarray(c, dtype=float)
    if np.any(a2 >= 1.0):
        raise ValueError("recursion is not contracting: |a| must be < 1")
    v = np.zeros_like(c)
    for _ in range(max_iter):
        v_next = a2 * v + c
        if np.all(np.abs(v_next - v) <= 1e-17 * np.maximum(v_next, 1e-300)):
            return v_next
        v = v_next
    raise RuntimeError("variance recursion did not converge")


def gaussian_phi_expectation(space: SpectralSpace, variance_factor: float) -> float:
    """E[exp(-|Y|^2)] for Y ~ N(0, (factor/2) Q): prod_k (1 + factor q_k)^(-1/2)."""
    if variance_factor < 0:
        raise ValueError("variance factor must be >= 0")
    q = space.covariance_diagonal
    return float(np.exp(-0.5 * np.sum(np.log1p(variance_factor * q))))


def euler_contraction_factor(dt: float, q1: float, lip: float) -> float:
    """Per-step contraction bound 1 - dt (1 - q_1 Lip) of the explicit scheme."""
    return 1.0 - dt * (1.0 - q1 * lip)


def mixing_rate(space: SpectralSpace, nl: Nonlinearity) -> float:
    """Exponential mixing rate 1 - Lip / lambda_1 of the preconditioned flow."""
    return 1.0 - nl.lip_bound / float(space.eigenvalues[0])


# ---------------------------------------------------------------------------
# Test-function bundles with closed-form derivatives (verifier scale, K <= 3)


class _LinearPhi:
    """phi(y) = sum_k y_k."""

    def value(self, y):
        return np.sum(y, axis=-1)

    def d1(self, y, h1):
        return float(np.sum(h1))

    def d2(self, y, h1, h2):
        return 0.0

    def d3(self, y, h1, h2, h3):
        return 0.0

    def d4(self, y, h1, h2, h3, h4):
        return 0.0


class _QuadraticPhi:
    """phi(y) = |y|^2."""

    def value(self, y):
        return np.sum(y * y, axis=-1)

    def d1(self, y, h1):
        return 2.0 * float(y @ h1)

    def d2(self, y, h1, h2):
        return 2.0 * float(h1 @ h2)

    def d3(self, y, h1, h2, h3):
        return 0.0

    def d4(self, y, h1, h2, h3, h4):
        return 0.0


class _ExpNormPhi:
    """phi(y) = exp(-|y|^2)."""

    def value(self, y):
        return np.exp(-np.sum(y * y, axis=-1))

    def d1(self, y, h1):
        return float(self.value(y) * (-2.0 * (y @ h1)))

    def d2(self, y, h1, h2):
        a1, a2 = y @ h1, y @ h2
        return float(self.value(y) * (4.0 * a1 * a2 - 2.0 * (h1 @ h2)))

    def d3(self, y, h1, h2, h3):
        a1, a2, a3 = y @ h1, y @ h2, y @ h3
        s = -8.0 * a1 * a2 * a3
        s += 4.0 * (a1 * (h2 @ h3) + a2 * (h1 @ h3) + a3 * (h1 @ h2))
        return float(self.value(y) * s)

    def d4(self, y, h1, h2, h3, h4):
        a = [y @ h for h in (h1, h2, h3, h4)]
        g = {
            (0, 1): h1 @ h2,
            (0, 2): h1 @ h3,
            (0, 3): h1 @ h4,
            (1, 2): h2 @ h3,
            (1, 3): h2 @ h4,
            (2, 3): h3 @ h4,
        }
        s = 16.0 * a[0] * a[1] * a[2] * a[3]
        for (i, j), gij in g.items():
            k, l = [m for m in range(4) if m not in (i, j)]
            s -= 8.0 * a[k] * a[l] * gij
        s += 4.0 * (g[(0, 1)] * g[(2, 3)] + g[(0, 2)] * g[(1, 3)] + g[(0, 3)] * g[(1, 2)])
        return float(self.value(y) * s)


_PHI_CATALOG = {"linear": _LinearPhi, "quadratic": _QuadraticPhi, "expnorm": _ExpNormPhi}


class DerivativeBundle:
    """Test function and drift with exact directional derivatives, K <= 3.

    The drift is the same discrete object the integrators use (the reaction
    acting pointwise on the collocation grid), so every identity checked
    with this bundle is an identity of the implemented system, not of an
    idealised one.  Fourth-order finite differencing of a generic phi is too
    noisy to verify dt^3 remainders, hence the closed-form catalog.
    """

    def __init__(self, space: SpectralSpace, nl: Nonlinearity, phi: str = "expnorm"):
        if space.mode_count > 3:
            raise ValueError("the expansion verifier is restricted to K <= 3")
        if phi not in _PHI_CATALOG:
            raise ValueError(f"unknown test function {phi!r}; choose from {sorted(_PHI_CATALOG)}")
        if nl.f_second is None:
            raise ValueError(f"nonlinearity {nl.name!r} has no second derivative for the verifier")
        self.space = space
        self.nl = nl
        self.phi_name = phi
        self._phi = _PHI_CATALOG[phi]()
        self.q = space.covariance_diagonal
        self._S = space.eigenvector_matrix
        self._h = space.grid_spacing

    # -- test function ------------------------------------------------------
    def phi(self, y):
        return self._phi.value(np.asarray(y, dtype=float))

    def dphi(self, y, h1):
        return self._phi.d1(y, h1)

    def d2phi(self, y, h1, h2):
        return self._phi.d2(y, h1, h2)

    def d3phi(self, y, h1, h2, h3):
        return self._phi.d3(y, h1, h2, h3)

    def d4phi(self, y, h1, h2, h3, h4):
        return self._phi.d4(y, h1, h2, h3, h4)

    # -- drift G(y) = -y + Q F(y) --------------------------------------------
    def drift_value(self, y):
        y = np.asarray(y, dtype=float)
        grid = y @ self._S
        reaction = self._h * (self.nl.f(grid) @ self._S)
        return -y + self.q * reaction

    def drift_jvp(self, y, h1):
        grid = np.asarray(y, dtype=float) @ self._S
        dh = self._h * ((self.nl.f_prime(grid) * (h1 @ self._S)) @ self._S)
        return -h1 + self.q * dh

    def drift_d2(self, y, h1, h2):
        grid = np.asarray(y, dtype=float) @ self._S
        d2 = self._h * ((self.nl.f_second(grid) * (h1 @ self._S) * (h2 @ self._S)) @ self._S)
        return self.q * d2

    # -- consistency check ---------------------------------------------------
    def finite_difference_check(self, n_points: int = 20, step: float = 1e-4, seed: int = 0) -> float:
        """Max relative deviation of each closed-form derivative from a
        central difference of the order below it, over random states."""
        rng = np.random.default_rng(seed)
        k = self.space.mode_count
        worst = 0.0

        def rel(a, b):
            scale = max(abs(np.asarray(a)).max() if np.ndim(a) else abs(a), 1e-8)
            return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / scale)

        for _ in range(n_points):
            y = rng.normal(scale=0.5, size=k)
            dirs = [rng.normal(size=k) for _ in range(4)]
            h1, h2, h3, h4 = dirs
            fd = (self.phi(y + step * h1) - self.phi(y - step * h1)) / (2 * step)
            worst = max(worst, rel(self.dphi(y, h1), fd))
            fd = (self.dphi(y + step * h2, h1) - self.dphi(y - step * h2, h1)) / (2 * step)
            worst = max(worst, rel(self.d2phi(y, h1, h2), fd))
            fd = (self.d2phi(y + step * h3, h1, h2) - self.d2phi(y - step * h3, h1, h2)) / (2 * step)
            worst = max(worst, rel(self.d3phi(y, h1, h2, h3), fd))
            fd = (self.d3phi(y + step * h4, h1, h2, h3) - self.d3phi(y - step * h4, h1, h2, h3)) / (2 * step)
            worst = max(worst, rel(self.d4phi(y, h1, h2, h3, h4), fd))
            fd = (self.drift_value(y + step * h1) - self.drift_value(y - step * h1)) / (2 * step)
            worst = max(worst, rel(self.drift_jvp(y, h1), fd))
            fd = (self.drift_jvp(y + step * h2, h1) - self.drift_jvp(y - step * h2, h1)) / (2 * step)
            worst = max(worst, rel(self.drift_d2(y, h1, h2), fd))
        return worst


# ---------------------------------------------------------------------------
# Expansion operators


def generator(bundle: DerivativeBundle, y: np.ndarray, trace_coefficient: float = 0.5) -> float:
    """Ito generator: Dphi.G + (1/2) sum_k q_k D2phi(e_k, e_k).

    ``trace_coefficient`` exists as a mutation hook for tests: with any value
    other than 1/2 the one-step weak expansion stops matching at first order,
    which the residual-slope check detects.
    """
    g = bundle.drift_value(y)
    val = bundle.dphi(y, g)
    k = bundle.space.mode_count
    eye = np.eye(k)
    for i in range(k):
        val += trace_coefficient * bundle.q[i] * bundle.d2phi(y, eye[i], eye[i])
    return float(val)


def taylor_term_order2(bundle: DerivativeBundle, y: np.ndarray) -> float:
    """dt^2 coefficient of the split-increment scheme's one-step weak expansion.

    (1/2) D2phi(G,G) + (1/2) sum_i q_i D3phi(e_i,e_i,G)
    + (1/8) sum_{i,j} q_i q_j D4phi(e_i,e_i,e_j,e_j)
    + (1/8) Dphi . sum_i q_i D2G(e_i,e_i) + (1/2) sum_i q_i D2phi(DG e_i, e_i)
    """
    k = bundle.space.mode_count
    eye = np.eye(k)
    q = bundle.q
    g = bundle.drift_value(y)
    val = 0.5 * bundle.d2phi(y, g, g)
    for i in range(k):
        val += 0.5 * q[i] * bundle.d3phi(y, eye[i], eye[i], g)
    for i in range(k):
        for j in range(k):
            val += 0.125 * q[i] * q[j] * bundle.d4phi(y, eye[i], eye[i], eye[j], eye[j])
    d2g_trace = sum(q[i] * bundle.drift_d2(y, eye[i], eye[i]) for i in range(k))
    val += 0.125 * bundle.dphi(y, d2g_trace)
    for i in range(k):
        val += 0.5 * q[i] * bundle.d2phi(y, bundle.drift_jvp(y, eye[i]), eye[i])
    return float(val)


def postprocessor_term(bundle: DerivativeBundle, y: np.ndarray) -> float:
    """dt coefficient of the postprocessor expansion: (1/8) sum_i q_i D2phi(e_i,e_i)."""
    k = bundle.space.mode_count
    eye = np.eye(k)
    return float(sum(0.125 * bundle.q[i] * bundle.d2phi(y, eye[i], eye[i]) for i in range(k)))


def commutator_term(bundle: DerivativeBundle, y: np.ndarray) -> float:
    """Closed form of the generator/postprocessor commutator applied to phi:

    -(1/8) sum_i q_i Dphi.(D2G(e_i,e_i)) - (1/4) sum_i q_i D2phi(DG e_i, e_i).
    """
    k = bundle.space.mode_count
    eye = np.eye(k)
    q = bundle.q
    d2g_trace = sum(q[i] * bundle.drift_d2(y, eye[i], eye[i]) for i in range(k))
    val = -0.125 * bundle.dphi(y, d2g_trace)
    for i in range(k):
        val -= 0.25 * q[i] * bundle.d2phi(y, bundle.drift_jvp(y, eye[i]), eye[i])
    return float(val)


def commutator_bruteforce(bundle: DerivativeBundle, y: np.ndarray, step: float = 1e-4) -> float:
    """L(Abar phi) - Abar(L phi) by finite-difference lifting of the exact
    scalar fields; independent cross-check of :func:`commutator_term`."""
    k = bundle.space.mode_count
    eye = np.eye(k)
    q = bundle.q

    def lift_generator(func: Callable[[np.ndarray], float], x: np.ndarray) -> float:
        g = bundle.drift_value(x)
        gn = np.linalg.norm(g)
        if gn == 0.0:
            dterm = 0.0
        else:
            u = g / gn
            dterm = gn * (func(x + step * u) - func(x - step * u)) / (2 * step)
        tterm = 0.0
        f0 = func(x)
        for i in range(k):
            tterm += 0.5 * q[i] * (func(x + step * eye[i]) - 2 * f0 + func(x - step * eye[i])) / step**2
        return dterm + tterm

    def lift_post(func: Callable[[np.ndarray], float], x: np.ndarray) -> float:
        f0 = func(x)
        return sum(
            0.125 * q[i] * (func(x + step * eye[i]) - 2 * f0 + func(x - step * eye[i])) / step**2
            for i in range(k)
        )

    abar_phi = lambda x: postprocessor_term(bundle, x)
    l_phi = lambda x: generator(bundle, x)
    return lift_generator(abar_phi, y) - lift_post(l_phi, y)


# ---------------------------------------------------------------------------
# Quadrature against the target measure


def gauss_hermite_normal(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights (z, w) with sum w f(z) = E[f(Z)], Z standard normal."""
    x, w = hermgauss(n_nodes)
    return math.sqrt(2.0) * x, w / math.sqrt(math.pi)


def _normal_tensor(k: int, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = gauss_hermite_normal(n_nodes)
    pts = np.array(list(itertools.product(z, repeat=k)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=k))), axis=1)
    return pts, wts


def gibbs_quadrature(
    space: SpectralSpace, nl: Nonlinearity, n_nodes: int = 40
) -> tuple[np.ndarray, np.ndarray]:
    """Points and normalised weights for expectations against the target
    Gibbs measure on K <= 3 modes.

    The Gaussian reference factorises over modes (variance q_k/2 each); the
    Gibbs reweighting exp(-2V) and its normaliser are evaluated on the same
    tensor grid.
    """
    k = space.mode_count
    if k > 3:
        raise ValueError("Gibbs quadrature is restricted to K <= 3")
    z, wts = _normal_tensor(k, n_nodes)
    pts = z * np.sqrt(space.covariance_diagonal / 2.0)
    logw = np.array([-2.0 * potential(space, nl, p) for p in pts])
    w = wts * np.exp(logw - logw.max())
    return pts, w / w.sum()


def mu_star_expectation(
    space: SpectralSpace,
    nl: Nonlinearity,
    func: Callable[[np.ndarray], float],
    n_nodes: int = 40,
) -> float:
    pts, w = gibbs_quadrature(space, nl, n_nodes)
    vals = np.array([func(p) for p in pts])
    return float(vals @ w)


def order2_condition_residual(
    space: SpectralSpace,
    nl: Nonlinearity,
    phi: str = "expnorm",
    n_nodes: int = 40,
    convergence_margin: float = 1e-6,
) -> float:
    """|< A1 phi + [L, Abar1] phi >| against the target measure.

    Zero (to quadrature accuracy) is the algebraic condition that makes the
    postprocessed scheme second order at equilibrium.  Raises if refining
    the grid from ``n_nodes`` to ``n_nodes + 20`` moves the value by more
    than ``convergence_margin``.
    """
    bundle = DerivativeBundle(space, nl, phi)
    combined = lambda y: taylor_term_order2(bundle, y) + commutator_term(bundle, y)
    coarse = mu_star_expectation(space, nl, combined, n_nodes)
    fine = mu_star_expectation(space, nl, combined, n_nodes + 20)
    if abs(fine - coarse) > convergence_margin:
        raise RuntimeError(
            f"quadrature not converged: residual moved by {abs(fine - coarse):.3e} "
            f"between {n_nodes} and {n_nodes + 20} nodes/dim"
        )
    return abs(fine)


def ibp_residuals(
    space: SpectralSpace,
    nl: Nonlinearity,
    phi: str = "expnorm",
    n_nodes: int = 40,
) -> tuple[float, float]:
    """Residuals of the two equilibrium integration-by-parts identities:

    < sum_{ij} q_i q_j D4phi(e_i,e_i,e_j,e_j) > = < -2 sum_i q_i D3phi(e_i,e_i,G) >
    < sum_i q_i D3phi(e_i,e_i,G) > = < -sum_i q_i D2phi(DG e_i,e_i) - 2 D2phi(G,G) >
    """
    bundle = DerivativeBundle(space, nl, phi)
    k = space.mode_count
    eye = np.eye(k)
    q = bundle.q

    def d4_sum(y):
        return sum(
            q[i] * q[j] * bundle.d4phi(y, eye[i], eye[i], eye[j], eye[j])
            for i in range(k)
            for j in range(k)
        )

    def d3_sum(y):
        g = bundle.drift_value(y)
        return sum(q[i] * bundle.d3phi(y, eye[i], eye[i], g) for i in range(k))

    def rhs2(y):
        g = bundle.drift_value(y)
        s = -2.0 * bundle.d2phi(y, g, g)
        for i in range(k):
            s -= q[i] * bundle.d2phi(y, bundle.drift_jvp(y, eye[i]), eye[i])
        return s

    lhs1 = mu_star_expectation(space, nl, d4_sum, n_nodes)
    rhs1 = mu_star_expectation(space, nl, lambda y: -2.0 * d3_sum(y), n_nodes)
    lhs2 = mu_star_expectation(space, nl, d3_sum, n_nodes)
    rhs2_val = mu_star_expectation(space, nl, rhs2, n_nodes)
    return abs(lhs1 - rhs1), abs(lhs2 - rhs2_val)


def stationarity_residual(
    space: SpectralSpace,
    nl: Nonlinearity,
    phi: str = "expnorm",
    n_nodes: int = 40,
) -> float:
    """|< L phi >| against the target measure (zero at equilibrium)."""
    bundle = DerivativeBundle(space, nl, phi)
    return abs(mu_star_expectation(space, nl, lambda y: generator(bundle, y), n_nodes))


# ---------------------------------------------------------------------------
# One-step weak Taylor residuals


def weak_taylor_residuals(
    space: SpectralSpace,
    nl: Nonlinearity,
    phi: str = "expnorm",
    dts: tuple[float, ...] = (2**-3, 2**-4, 2**-5, 2**-6, 2**-7),
    x: np.ndarray | None = None,
    n_nodes: int = 40,
    trace_coefficient: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the one-step expansions of the split-increment scheme.

    For each dt, computes the one-step expectation E[phi(Y_1) | Y_0 = x] by
    Gauss-Hermite quadrature over the K driving normals, and returns

        | E phi(Y_1) - phi - dt L phi - dt^2 A1 phi |   (third order in dt)
        | E phi(Ybar_0) - phi - dt Abar1 phi |          (second order in dt)

    as two arrays aligned with ``dts``.
    """
    bundle = DerivativeBundle(space, nl, phi)
    k = space.mode_count
    if x is None:
        x = 0.4 / np.arange(1, k + 1)
    x = np.asarray(x, dtype=float)
    z, wts = _normal_tensor(k, n_nodes)
    q = space.covariance_diagonal
    phi_x = bundle.phi(x)
    l_x = generator(bundle, x, trace_coefficient)
    a1_x = taylor_term_order2(bundle, x)
    abar_x = postprocessor_term(bundle, x)
    res_int = np.empty(len(dts))
    res_post = np.empty(len(dts))
    for idx, dt in enumerate(dts):
        w = np.sqrt(dt * q) * z
        mid = x + 0.5 * w
        g = bundle.drift_value(mid)
        y1 = (x + dt * g) + w
        e_phi = float(bundle.phi(y1) @ wts)
        res_int[idx] = abs(e_phi - phi_x - dt * l_x - dt**2 * a1_x)
        ybar = x + 0.5 * w
        e_post = float(bundle.phi(ybar) @ wts)
        res_post[idx] = abs(e_post - phi_x - dt * abar_x)
    return res_int, res_post


def fit_loglog_slope(dts, residuals) -> float:
    """Least-squares slope of log residual against log dt."""
    return float(np.polyfit(np.log(np.asarray(dts)), np.log(np.asarray(residuals)), 1)[0])
