"""Eigenbasis representation of the negative Dirichlet Laplacian on (0, 1).

Two discretisations are supported, both diagonal in a sine basis:

* ``spectral`` -- spectral Galerkin truncation, eigenvalues pi^2 k^2;
* ``fd``       -- standard second-order finite differences with grid spacing
  dx = 1/(K+1), eigenvalues (4/dx^2) sin^2(k pi dx / 2).

In both cases the eigenvectors sampled on the interior grid z_j = j/(K+1)
are sqrt(2) sin(k pi z_j), orthonormal under the dx-weighted discrete L2
inner product <u, v> = dx sum_j u_j v_j.  All operators used downstream
(covariance, fractional powers, preconditioners) act diagonally on the
coefficients, so no numerical eigensolver is ever involved.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

_SQRT2 = np.sqrt(2.0)

FLAVORS = ("spectral", "fd")


@dataclass(frozen=True)
class SpectralSpace:
    """Immutable discretisation: eigenvalues plus grid transforms.

    ``transform`` selects how physical<->coefficient maps are evaluated:
    ``"dst"`` uses a fast discrete sine transform, ``"dense"`` multiplies by
    the explicit (symmetric) eigenvector matrix.  The two agree to ~1e-14
    and the dense path is what the compiled ensemble kernel uses.
    """

    flavor: str
    mode_count: int
    eigenvalues: np.ndarray
    transform: str = "dst"

    @property
    def grid_spacing(self) -> float:
        """Spacing of the interior collocation grid, 1/(K+1)."""
        return 1.0 / (self.mode_count + 1)

    @property
    def grid(self) -> np.ndarray:
        """Interior grid points z_j = j/(K+1), j = 1..K."""
        k = self.mode_count
        return np.arange(1, k + 1) / (k + 1)

    @property
    def covariance_diagonal(self) -> np.ndarray:
        """q_k = 1/lambda_k, the diagonal of the inverse operator."""
        return 1.0 / self.eigenvalues

    @functools.cached_property
    def eigenvector_matrix(self) -> np.ndarray:
        """S[j, k] = sqrt(2) sin((k+1) pi z_j); symmetric, S S = (K+1) I."""
        k = np.arange(1, self.mode_count + 1)
        return _SQRT2 * np.sin(np.pi * np.outer(self.grid, k))

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values of the field with the given coefficients."""
        coeffs = np.asarray(coeffs, dtype=float)
        self._check_len(coeffs)
        if self.transform == "dense":
            return self.eigenvector_matrix @ coeffs
        import scipy.fft  # deferred: keeps CLI startup light

        return scipy.fft.dst(coeffs, type=1) / _SQRT2

    def from_physical(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of the field with the given grid values."""
        values = np.asarray(values, dtype=float)
        self._check_len(values)
        if self.transform == "dense":
            return self.grid_spacing * (self.eigenvector_matrix @ values)
        import scipy.fft

        return self.grid_spacing * scipy.fft.dst(values, type=1) / _SQRT2

    def project(self, coeffs: np.ndarray) -> np.ndarray:
        """Truncate a coefficient vector from a finer space onto this one."""
        coeffs = np.asarray(coeffs, dtype=float)
        if len(coeffs) < self.mode_count:
            raise ValueError(
                f"cannot project a length-{len(coeffs)} vector onto {self.mode_count} modes"
            )
        return coeffs[: self.mode_count].copy()

    def apply_diagonal(self, exponent: float, coeffs: np.ndarray) -> np.ndarray:
        """Multiply coefficient k by lambda_k**exponent (any real exponent)."""
        coeffs = np.asarray(coeffs, dtype=float)
        self._check_len(coeffs)
        return self.eigenvalues**exponent * coeffs

    def sobolev_norm(self, coeffs: np.ndarray, beta: float = 0.0) -> float:
        """(sum_k lambda_k^beta c_k^2)^(1/2); beta = 0 is the plain norm."""
        if beta < 0:
            raise ValueError("beta must be >= 0")
        coeffs = np.asarray(coeffs, dtype=float)
        self._check_len(coeffs)
        if beta == 0.0:
            return float(np.linalg.norm(coeffs))
        return float(np.sqrt(np.sum(self.eigenvalues**beta * coeffs**2)))

    def trace_q(self, alpha: float = 0.0) -> float:
        """Truncated trace sum_{k<=K} lambda_k^(2 alpha - 1).

        alpha = 0 gives the trace of the covariance; the sum diverges with K
        once alpha >= 1/4 (the supremum exponent for this operator family).
        """
        return float(np.sum(self.eigenvalues ** (2.0 * alpha - 1.0)))

    def _check_len(self, arr: np.ndarray) -> None:
        if arr.shape[-1] != self.mode_count:
            raise ValueError(
                f"expected {self.mode_count} entries, got {arr.shape[-1]}"
            )


def make_space(
    flavor: str,
    modes: int | None = None,
    dx: float | None = None,
    transform: str = "dst",
) -> SpectralSpace:
    """Build a :class:`SpectralSpace` from a mode count or a grid spacing.

    For the finite-difference flavor, ``dx`` must equal 1/(K+1) for an
    integer K >= 1 (to 1e-12); otherwise the nearest valid spacing is named
    in the error.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {FLAVORS}, got {flavor!r}")
    if transform not in ("dst", "dense"):
        raise ValueError(f"transform must be 'dst' or 'dense', got {transform!r}")
    if (modes is None) == (dx is None):
        raise ValueError("specify exactly one of modes= or dx=")
    if dx is not None:
        if dx <= 0:
            raise ValueError("dx must be positive")
        k = int(round(1.0 / dx - 1.0))
        if k < 1 or abs(dx - 1.0 / (k + 1)) > 1e-12:
            nearest = 1.0 / (max(k, 1) + 1)
            raise ValueError(
                f"dx={dx!r} is not of the form 1/(K+1); nearest valid spacing is {nearest!r}"
            )
        modes = k
    if modes < 1:
        raise ValueError("mode count must be >= 1")
    k = np.arange(1, modes + 1, dtype=float)
    if flavor == "spectral":
        lam = np.pi**2 * k**2
    else:
        h = 1.0 / (modes + 1)
        lam = (4.0 / h**2) * np.sin(k * np.pi * h / 2.0) ** 2
    return SpectralSpace(flavor=flavor, mode_count=modes, eigenvalues=lam, transform=transform)


@dataclass(frozen=True)
class Preconditioner:
    """Diagonal preconditioner p_k = lambda_k^(-alpha), alpha in [0, 1].

    alpha = 0 is the identity (no preconditioning, original dynamics with
    white-in-space noise); alpha = 1 inverts the linear operator, which
    makes the drift's linear part -I and the noise trace class.
    """

    alpha: float
    multipliers: np.ndarray
    sqrt_multipliers: np.ndarray

    def is_admissible(self, space: SpectralSpace) -> bool:
        """Mixing condition: lambda_1 sup_k p_k <= inf_k lambda_k p_k.

        Holds with equality for every alpha of this diagonal family; kept
        as an explicit check because general preconditioners need it.
        """
        lam = space.eigenvalues
        return float(lam[0] * self.multipliers.max()) <= float(
            (lam * self.multipliers).min() * (1.0 + 1e-12)
        )


def make_preconditioner(space: SpectralSpace, alpha: float) -> Preconditioner:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    p = space.eigenvalues ** (-alpha)
    return Preconditioner(alpha=float(alpha), multipliers=p, sqrt_multipliers=np.sqrt(p))
