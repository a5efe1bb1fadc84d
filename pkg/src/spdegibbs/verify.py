"""Self-verification suite: every identity the construction rests on.

Each check is deterministic and fast (the whole suite runs in seconds; the
closed-form group alone is well under a second).  The CLI `verify`
subcommand prints one line per check and exits nonzero if any fails.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from . import analytics, backend
from .model import CATALOG, nemytskii, potential
from .rng import normals
from .schemes import make_scheme, step_explicit_euler, step_pli
from .spectral import make_preconditioner, make_space


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""


def _result(name, residual, tol, detail="", larger_is_better=False):
    ok = residual >= tol if larger_is_better else residual <= tol
    return CheckResult(name, bool(ok), float(residual), float(tol), detail)


# ---------------------------------------------------------------------------
# check implementations


def _gaussian_checks() -> Iterable[CheckResult]:
    space = make_space("spectral", modes=8)
    q = space.covariance_diagonal
    for theta in (0.0, 0.25, 0.5, 1.0):
        for dt in (0.5, 0.25, 0.1, 0.01):
            scheme = make_scheme("theta" if theta > 0 else "ee", dt, theta=theta or None)
            a, c, _ = analytics.linear_recursion_coefficients(scheme, space)
            v = analytics.stationary_variance_recursion(a, c)
            target = analytics.theta_variance_factor(theta, dt) * q / 2.0
            res = float(np.max(np.abs(v - target)))
            yield _result(f"gaussian/theta{theta}-dt{dt}", res, 1e-12)
    for dt in (0.5, 0.25, 0.1, 0.01):
        scheme = make_scheme("lm", dt)
        a, c, post = analytics.linear_recursion_coefficients(scheme, space)
        v = analytics.stationary_variance_recursion(a, c)
        chain, observed = analytics.lm_variance_factors(dt)
        res = float(np.max(np.abs(v - chain * q / 2.0)))
        yield _result(f"gaussian/lm-chain-dt{dt}", res, 1e-12)
        res = float(np.max(np.abs((v + post) - observed * q / 2.0)))
        yield _result(f"gaussian/lm-observed-dt{dt}", res, 1e-12)
    for dt in (0.5, 0.25, 0.1, 0.01, 10.0):
        scheme = make_scheme("pie", dt)
        a, c, post = analytics.linear_recursion_coefficients(scheme, space)
        v = analytics.stationary_variance_recursion(a, c)
        chain, observed = analytics.pie_variance_factors(dt)
        res = float(np.max(np.abs(v - chain * q / 2.0)))
        yield _result(f"gaussian/pie-chain-dt{dt}", res, 1e-12)
        res = float(np.max(np.abs((v + post) - q / 2.0)))
        yield _result(f"gaussian/pie-observed-dt{dt}", res, 1e-12)
    for dt in (0.5, 0.25, 0.1):
        scheme = make_scheme("rk2", dt)
        a, c, _ = analytics.linear_recursion_coefficients(scheme, space)
        v = analytics.stationary_variance_recursion(a, c)
        res = float(np.max(np.abs(v - analytics.rk2_variance_factor(dt) * q / 2.0)))
        yield _result(f"gaussian/rk2-factor-dt{dt}", res, 1e-12)
    gap = abs(analytics.rk2_variance_factor(0.5) - 1.0)
    yield _result("gaussian/rk2-not-exact", gap, 1e-3, larger_is_better=True)
    yield _result(
        "gaussian/cn-exact", abs(analytics.theta_variance_factor(0.5, 0.7) - 1.0), 1e-15
    )


def _taylor_checks() -> Iterable[CheckResult]:
    space = make_space("spectral", modes=1)
    nl = CATALOG["cos"]
    dts = (2**-3, 2**-4, 2**-5, 2**-6, 2**-7)
    res_int, res_post = analytics.weak_taylor_residuals(space, nl, "expnorm", dts)
    s_int = analytics.fit_loglog_slope(dts, res_int)
    s_post = analytics.fit_loglog_slope(dts, res_post)
    yield _result("taylor/integrator-slope", s_int, 2.7, larger_is_better=True)
    yield _result("taylor/postprocessor-slope", s_post, 1.7, larger_is_better=True)


def _order2_checks() -> Iterable[CheckResult]:
    for nl_name in ("zero", "cos"):
        nl = CATALOG[nl_name]
        for k in (1, 2):
            space = make_space("spectral", modes=k)
            for phi in ("quadratic", "expnorm"):
                res = analytics.order2_condition_residual(space, nl, phi)
                yield _result(f"order2/residual-{nl_name}-K{k}-{phi}", res, 1e-5)
    nl = CATALOG["cos"]
    space = make_space("spectral", modes=1)
    r1, r2 = analytics.ibp_residuals(space, nl, "expnorm")
    yield _result("order2/ibp-fourth-moment", r1, 1e-6)
    yield _result("order2/ibp-third-moment", r2, 1e-6)
    for nl_name in ("zero", "cos"):
        for k in (1, 2):
            space = make_space("spectral", modes=k)
            for phi in ("quadratic", "expnorm"):
                res = analytics.stationarity_residual(space, CATALOG[nl_name], phi)
                yield _result(f"order2/stationarity-{nl_name}-K{k}-{phi}", res, 1e-6)
    space = make_space("spectral", modes=2)
    bundle = analytics.DerivativeBundle(space, nl, "expnorm")
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        y = rng.normal(scale=0.4, size=2)
        closed = analytics.commutator_term(bundle, y)
        brute = analytics.commutator_bruteforce(bundle, y)
        worst = max(worst, abs(closed - brute))
    yield _result("order2/commutator-bruteforce", worst, 1e-5)


def _contraction_checks() -> Iterable[CheckResult]:
    space = make_space("spectral", modes=16)
    nl = CATALOG["cos"]
    dt = 0.1
    scheme = make_scheme("ee", dt)
    gamma = analytics.euler_contraction_factor(dt, space.covariance_diagonal[0], nl.lip_bound)
    rng = np.random.default_rng(11)
    y1 = rng.normal(scale=0.5, size=16)
    y2 = rng.normal(scale=0.5, size=16)
    worst = 0.0
    for n in range(50):
        w = np.sqrt(dt * space.covariance_diagonal) * normals(3, 0, n, 16)
        z1 = step_explicit_euler(space, nl, y1, w, dt)
        z2 = step_explicit_euler(space, nl, y2, w, dt)
        ratio = np.linalg.norm(z1 - z2) / np.linalg.norm(y1 - y2)
        worst = max(worst, ratio - gamma)
        y1, y2 = z1, z2
    yield _result("contraction/ee-coupled", worst, 1e-12)

    dt = 0.05
    precond = make_preconditioner(space, 1.0)
    bound = 1.05 * np.exp(-(1.0 - nl.lip_bound / space.eigenvalues[0]) * dt)
    y1 = rng.normal(scale=0.5, size=16)
    y2 = rng.normal(scale=0.5, size=16)
    worst = 0.0
    for n in range(50):
        w = np.sqrt(dt * precond.multipliers) * normals(4, 0, n, 16)
        z1 = step_pli(space, precond, nl, y1, w, dt)
        z2 = step_pli(space, precond, nl, y2, w, dt)
        ratio = np.linalg.norm(z1 - z2) / np.linalg.norm(y1 - y2)
        worst = max(worst, ratio - bound)
        y1, y2 = z1, z2
    yield _result("contraction/pli-alpha1", worst, 0.0, detail="ratio minus 1.05x mixing bound")


def _gradient_checks() -> Iterable[CheckResult]:
    rng = np.random.default_rng(7)
    for flavor, modes in (("spectral", 6), ("fd", 7)):
        space = make_space(flavor, modes=modes)
        for nl_name in ("cos", "linear"):
            nl = CATALOG[nl_name]
            worst = 0.0
            for _ in range(5):
                y = rng.normal(scale=0.5, size=modes)
                grad = np.empty(modes)
                for k in range(modes):
                    e = np.zeros(modes)
                    e[k] = 1e-5
                    grad[k] = (potential(space, nl, y + e) - potential(space, nl, y - e)) / 2e-5
                f_coef = nemytskii(space, nl, y)
                worst = max(worst, np.linalg.norm(-grad - f_coef) / np.linalg.norm(f_coef))
            yield _result(f"gradient/{flavor}-{nl_name}", worst, 1e-5)


def _determinism_checks() -> Iterable[CheckResult]:
    z1 = normals(12345, 42, 7, 33)
    z2 = normals(12345, 42, 7, 33)
    yield _result("determinism/stream-repeat", float(np.max(np.abs(z1 - z2))), 0.0)

    space = make_space("fd", dx=0.1)
    nl = CATALOG["cos"]
    scheme = make_scheme("lm", 0.125)
    kw = dict(observable="expnorm", n_samples=256, master_seed=9, traj_offset=0, n_steps=16)
    p1, d1 = backend.ensemble_phi(space, nl, scheme, **kw)
    p2, d2 = backend.ensemble_phi(space, nl, scheme, **kw)
    same = np.array_equal(p1, p2) and np.array_equal(d1, d2)
    yield _result("determinism/ensemble-repeat", 0.0 if same else 1.0, 0.0)

    if backend.compiled_available():
        pt1, _ = backend.ensemble_phi(space, nl, scheme, **kw, n_threads=1, backend="compiled")
        pt2, _ = backend.ensemble_phi(space, nl, scheme, **kw, n_threads=2, backend="compiled")
        same = np.array_equal(pt1, pt2)
        yield _result("determinism/thread-count", 0.0 if same else 1.0, 0.0)
        zero = CATALOG["zero"]
        ee = make_scheme("ee", 0.25)
        _, _, s_c = backend.ensemble_phi(
            space, zero, ee, "expnorm", 64, 5, 0, 12, backend="compiled", return_states=True
        )
        _, _, s_p = backend.ensemble_phi(
            space, zero, ee, "expnorm", 64, 5, 0, 12, backend="python", return_states=True
        )
        # numpy and libm transcendentals differ by <= 2 ulp on ~0.3% of
        # normals, so cross-backend agreement is near-exact, not bitwise
        scale = float(np.max(np.abs(s_p)))
        res = float(np.max(np.abs(s_c - s_p))) / scale
        yield _result("determinism/backend-agreement", res, 1e-12)


def _bundle_checks() -> Iterable[CheckResult]:
    space = make_space("spectral", modes=2)
    for nl_name in ("cos", "linear"):
        for phi in ("expnorm", "quadratic"):
            bundle = analytics.DerivativeBundle(space, CATALOG[nl_name], phi)
            res = bundle.finite_difference_check(n_points=8)
            yield _result(f"bundle/fd-{nl_name}-{phi}", res, 1e-5)


_GROUPS: dict[str, Callable[[], Iterable[CheckResult]]] = {
    "gaussian": _gaussian_checks,
    "taylor": _taylor_checks,
    "order2": _order2_checks,
    "contraction": _contraction_checks,
    "gradient": _gradient_checks,
    "determinism": _determinism_checks,
    "bundle": _bundle_checks,
}


def run_checks(name_filter: Optional[str] = None) -> list[CheckResult]:
    """Run the checks selected by the filter (substring of a group name, or
    of individual check names if no group matches); all of them without one."""
    results: list[CheckResult] = []
    if not name_filter:
        for func in _GROUPS.values():
            results.extend(func())
        return results
    matched = [func for group, func in _GROUPS.items() if name_filter in group]
    if matched:
        for func in matched:
            results.extend(func())
        return results
    for func in _GROUPS.values():
        results.extend(r for r in func() if name_filter in r.name or fnmatch.fnmatch(r.name, name_filter))
    return results
