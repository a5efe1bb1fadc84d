"""One-step maps for every supported time integrator.

All schemes advance the coefficient vector of the preconditioned flow and
consume exactly one noise increment (K normals) per step, so any two schemes
fed the same stream see identical noise -- the basis for common-random-number
comparisons.  The postprocessed schemes additionally expose an observable
state built from the current state and the increment of the step about to be
taken; it perturbs what is *measured*, never the chain itself.

The floating-point evaluation order of each update is part of the contract:
the batched and compiled ensemble kernels replicate these expressions
operation by operation, so linear (zero-reaction) paths agree bitwise across
implementations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .model import Nonlinearity, nemytskii
from .rng import NoiseStream
from .spectral import Preconditioner, SpectralSpace, make_preconditioner

KINDS = ("ee", "ie", "cn", "theta", "lm", "pie", "rk2", "pli")

_POSTPROCESSED = ("lm", "pie")


class TrajectoryDivergedError(RuntimeError):
    """Raised by the reference path when an iterate stops being finite."""

    def __init__(self, step: int):
        super().__init__(f"trajectory diverged at step {step}")
        self.step = step


@dataclass(frozen=True)
class SchemeSpec:
    """A validated (integrator, step size) choice.

    ``kind`` is canonical: the aliases ie, cn and theta(0) resolve to the
    theta-method and the explicit Euler scheme at construction.  ``label``
    keeps the name the scheme was requested under, for reports.
    """

    kind: str
    dt: float
    theta: Optional[float] = None
    alpha: Optional[float] = None
    label: str = ""

    @property
    def has_postprocessor(self) -> bool:
        return self.kind in _POSTPROCESSED


def make_scheme(
    name: str,
    dt: float,
    theta: Optional[float] = None,
    alpha: Optional[float] = None,
) -> SchemeSpec:
    """Build a :class:`SchemeSpec`, resolving aliases and step-size windows.

    Explicit schemes (ee, lm, rk2) require dt <= 1; the theta-method with
    theta < 1/2 requires dt < 2/(1 - 2 theta); implicit schemes (ie, cn,
    pie, pli) take any positive dt.
    """
    if name not in KINDS:
        raise ValueError(f"unknown scheme {name!r}; choose from {KINDS}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    label = name
    if name == "ie":
        name, theta = "theta", 1.0
    elif name == "cn":
        name, theta = "theta", 0.5
    if name == "theta":
        if theta is None:
            raise ValueError("the theta-method needs a theta value")
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
        if theta == 0.0:
            name = "ee"
        elif theta < 0.5:
            window = 2.0 / (1.0 - 2.0 * theta)
            if dt >= window:
                raise ValueError(
                    f"theta-method with theta={theta} requires dt < {window}"
                )
    if name in ("ee", "lm", "rk2") and dt > 1.0:
        raise ValueError(f"scheme {label!r} requires dt <= 1, got dt={dt}")
    if name == "pli":
        if alpha is None:
            raise ValueError("the preconditioned linear-implicit scheme needs alpha")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    theta_val = theta if name == "theta" else None
    alpha_val = alpha if name == "pli" else None
    return SchemeSpec(kind=name, dt=float(dt), theta=theta_val, alpha=alpha_val, label=label)


class StepOutput(NamedTuple):
    state: np.ndarray
    postprocessed: Optional[np.ndarray]


def _is_zero(nl: Nonlinearity) -> bool:
    return nl.name == "zero"


def theta_coefficients(theta: float, dt: float) -> tuple[float, float, float]:
    """(state multiplier, reaction-term weight, increment weight)."""
    denom = 1.0 + theta * dt
    return (1.0 - (1.0 - theta) * dt) / denom, dt / denom, 1.0 / denom


def pie_coefficients(dt: float) -> tuple[float, float, float]:
    """(implicit multiplier, reaction-term weight, midpoint noise weight)."""
    c = 1.0 / (1.0 + dt)
    return c, dt * c, 0.5 * c


def postprocess_coefficient(scheme: SchemeSpec) -> float:
    """Weight of the fresh increment in the observable state."""
    if scheme.kind == "lm":
        return 0.5
    if scheme.kind == "pie":
        return 0.5 / math.sqrt(1.0 + 0.5 * scheme.dt)
    raise ValueError(f"scheme {scheme.label!r} has no postprocessor")


def step_explicit_euler(space, nl, y, increment, dt):
    """y + dt * drift(y) + increment."""
    if _is_zero(nl):
        g = -y
    else:
        g = space.covariance_diagonal * nemytskii(space, nl, y) - y
    return (y + dt * g) + increment


def step_theta(space, nl, y, increment, dt, theta):
    """Linearly implicit theta-method; theta = 0 falls through to Euler."""
    if theta == 0.0:
        return step_explicit_euler(space, nl, y, increment, dt)
    a, bdt, binc = theta_coefficients(theta, dt)
    if _is_zero(nl):
        return (a * y) + binc * increment
    qf = space.covariance_diagonal * nemytskii(space, nl, y)
    return ((a * y) + bdt * qf) + binc * increment


def step_lm(space, nl, y, increment, dt) -> StepOutput:
    """Explicit Euler with the increment split half before the drift.

    The observable state is the midpoint y + increment/2 itself.
    """
    mid = y + 0.5 * increment
    if _is_zero(nl):
        g = -mid
    else:
        g = space.covariance_diagonal * nemytskii(space, nl, mid) - mid
    return StepOutput((y + dt * g) + increment, mid)


def step_pie(space, nl, y, increment, dt) -> StepOutput:
    """Linearly implicit Euler with midpoint-shifted reaction, postprocessed.

    Unconditionally stable; the observable adds the increment scaled by
    1/(2 sqrt(1 + dt/2)), which makes the sampled Gaussian law exact.
    """
    c, dtc, half_c = pie_coefficients(dt)
    post = y + (0.5 / math.sqrt(1.0 + 0.5 * dt)) * increment
    if _is_zero(nl):
        return StepOutput((c * y) + c * increment, post)
    mid = y + half_c * increment
    qf = space.covariance_diagonal * nemytskii(space, nl, mid)
    return StepOutput(((c * y) + dtc * qf) + c * increment, post)


def step_rk2(space, nl, y, increment, dt):
    """Heun's method on the drift; both stages share one increment."""
    if _is_zero(nl):
        g1 = -y
        yh = (y + dt * g1) + increment
        g2 = -yh
    else:
        q = space.covariance_diagonal
        g1 = q * nemytskii(space, nl, y) - y
        yh = (y + dt * g1) + increment
        g2 = q * nemytskii(space, nl, yh) - yh
    return (y + (0.5 * dt) * (g1 + g2)) + increment


def step_pli(space, precond, nl, y, increment, dt):
    """Implicit in the preconditioned linear part, explicit in the reaction.

    Coefficientwise (1 + dt p_k lambda_k)^(-1) (y_k + dt p_k F_k + W_k);
    the increment must carry the matching p_k^(1/2) scaling.
    """
    a = 1.0 / (1.0 + dt * (precond.multipliers * space.eigenvalues))
    if _is_zero(nl):
        return a * (y + increment)
    dp = dt * precond.multipliers
    return a * ((y + dp * nemytskii(space, nl, y)) + increment)


def step(space, nl, scheme: SchemeSpec, y, increment, precond=None) -> StepOutput:
    """Dispatch one step of any scheme; postprocessed slot filled if it has one."""
    k = scheme.kind
    if k == "ee":
        return StepOutput(step_explicit_euler(space, nl, y, increment, scheme.dt), None)
    if k == "theta":
        return StepOutput(step_theta(space, nl, y, increment, scheme.dt, scheme.theta), None)
    if k == "lm":
        return step_lm(space, nl, y, increment, scheme.dt)
    if k == "pie":
        return step_pie(space, nl, y, increment, scheme.dt)
    if k == "rk2":
        return StepOutput(step_rk2(space, nl, y, increment, scheme.dt), None)
    if k == "pli":
        if precond is None:
            raise ValueError("pli steps need the preconditioner")
        return StepOutput(step_pli(space, precond, nl, y, increment, scheme.dt), None)
    raise ValueError(f"unhandled scheme kind {k!r}")


def noise_preconditioner(space: SpectralSpace, scheme: SchemeSpec) -> Preconditioner:
    """The preconditioner whose square root scales this scheme's noise."""
    if scheme.kind == "pli":
        return make_preconditioner(space, scheme.alpha)
    return make_preconditioner(space, 1.0)


def warn_if_inadmissible(space: SpectralSpace, nl: Nonlinearity) -> None:
    """Mixing is only guaranteed for Lip(f) below the smallest eigenvalue;
    steeper reactions are allowed but the run is not certified ergodic."""
    if not nl.is_admissible(space):
        warnings.warn(
            f"nonlinearity {nl.name!r} has Lipschitz bound {nl.lip_bound}, not below "
            f"the smallest eigenvalue {space.eigenvalues[0]:.6g}; equilibrium sampling "
            "is not guaranteed to mix",
            RuntimeWarning,
            stacklevel=3,
        )


def run_trajectory(
    space: SpectralSpace,
    nl: Nonlinearity,
    scheme: SchemeSpec,
    initial_state: np.ndarray,
    stream: NoiseStream,
    n_steps: int,
) -> StepOutput:
    """Iterate the one-step map; reference (unbatched) implementation.

    Draws one increment per step.  For postprocessed schemes the returned
    observable is built from the final state and a fresh increment at step
    index ``n_steps`` (the increment the next step would consume); with
    ``n_steps = 0`` no postprocessing is applied.  Raises
    :class:`TrajectoryDivergedError` on the first non-finite iterate.
    """
    from .model import sample_increment

    warn_if_inadmissible(space, nl)
    precond = noise_preconditioner(space, scheme)
    y = np.asarray(initial_state, dtype=float).copy()
    space._check_len(y)
    if n_steps == 0:
        return StepOutput(y, None)
    for n in range(n_steps):
        w = sample_increment(space, precond, stream, scheme.dt)
        y, _ = step(space, nl, scheme, y, w, precond)
        if not np.all(np.isfinite(y)):
            raise TrajectoryDivergedError(n)
    if scheme.has_postprocessor:
        w = sample_increment(space, precond, stream, scheme.dt)
        post = y + postprocess_coefficient(scheme) * w
    else:
        post = None
    return StepOutput(y, post)
