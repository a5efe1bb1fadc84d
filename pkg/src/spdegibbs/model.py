"""The reaction term, its potential, and the preconditioned drift.

A scalar function f acts on fields pointwise (a Nemytskii operator); on the
discrete grid this reads

    F(y) = from_physical( f(to_physical(y)) ).

The potential is the matching quadrature of the antiderivative u (u' = -f),
so that F = -DV holds exactly at the discrete level, not just up to grid
error.  That exactness is what makes the Gibbs density exp(-2V) dnu the
invariant measure of every discretised flow built from F, and it is checked
numerically by the gradient-consistency tests rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .rng import NoiseStream
from .spectral import Preconditioner, SpectralSpace


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar reaction f with certificate data.

    ``potential_density`` is the antiderivative u with u' = -f (the sign
    that makes F = -DV with V(y) = integral of u(y(z))).  ``lip_bound`` is a
    certified global Lipschitz constant of f; the dynamics is provably
    mixing when it is below the smallest eigenvalue of the linear operator.
    ``f_second`` is only needed by the small-dimension expansion verifier.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    potential_density: Callable[[np.ndarray], np.ndarray]
    lip_bound: float
    f_second: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def is_admissible(self, space: SpectralSpace) -> bool:
        return self.lip_bound < float(space.eigenvalues[0])


CATALOG = {
    "zero": Nonlinearity(
        name="zero",
        f=lambda x: np.zeros_like(x),
        f_prime=lambda x: np.zeros_like(x),
        potential_density=lambda x: np.zeros_like(x),
        lip_bound=0.0,
        f_second=lambda x: np.zeros_like(x),
    ),
    "linear": Nonlinearity(
        name="linear",
        f=lambda x: -x,
        f_prime=lambda x: -np.ones_like(x),
        potential_density=lambda x: 0.5 * x**2,
        lip_bound=1.0,
        f_second=lambda x: np.zeros_like(x),
    ),
    "cos": Nonlinearity(
        name="cos",
        f=lambda x: np.cos(x) - x,
        f_prime=lambda x: -1.0 - np.sin(x),
        potential_density=lambda x: 0.5 * x**2 - np.sin(x),
        lip_bound=2.0,
        f_second=lambda x: -np.cos(x),
    ),
}


def get_nonlinearity(name: str) -> Nonlinearity:
    try:
        return CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; built-ins: {sorted(CATALOG)}")


def nemytskii(space: SpectralSpace, nl: Nonlinearity, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of f applied pointwise to the field."""
    return space.from_physical(nl.f(space.to_physical(coeffs)))


def potential(space: SpectralSpace, nl: Nonlinearity, coeffs: np.ndarray) -> float:
    """Trapezoid quadrature of u(y(z)) over [0, 1] (Dirichlet boundary).

    The boundary contributes the constant dx * u(0); it never affects
    gradients but keeps the value consistent with the continuum integral.
    """
    vals = nl.potential_density(space.to_physical(coeffs))
    u0 = float(nl.potential_density(np.zeros(1))[0])
    return float(space.grid_spacing * (np.sum(vals) + u0))


def drift(space: SpectralSpace, nl: Nonlinearity, coeffs: np.ndarray) -> np.ndarray:
    """Drift of the fully preconditioned flow: -y + Q F(y), coefficientwise."""
    return -coeffs + space.covariance_diagonal * nemytskii(space, nl, coeffs)


def drift_alpha(
    space: SpectralSpace,
    precond: Preconditioner,
    nl: Nonlinearity,
    coeffs: np.ndarray,
) -> np.ndarray:
    """Drift of the alpha-preconditioned flow: P(A y + F(y)), coefficientwise.

    alpha = 1 recovers :func:`drift` (p_k lambda_k = 1); alpha = 0 is the
    stiff original dynamics.
    """
    p = precond.multipliers
    return -p * space.eigenvalues * coeffs + p * nemytskii(space, nl, coeffs)


def sample_increment(
    space: SpectralSpace,
    precond: Preconditioner,
    stream: NoiseStream,
    dt: float,
) -> np.ndarray:
    """One noise increment: coefficient k is sqrt(dt p_k) xi_k.

    Consumes exactly ``mode_count`` normals and advances the stream by one
    step, whatever the scheme does with the increment.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = stream.next_normals(space.mode_count)
    return np.sqrt(dt * precond.multipliers) * z
