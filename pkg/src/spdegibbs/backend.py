"""Ensemble execution backends.

The compiled Cython kernel is preferred when the extension built; the
batched numpy kernel is the portable fallback and the only path that can
run user-supplied (Python callable) reactions or observables.  Selection
happens at import and can be forced with SPDEGIBBS_BACKEND=compiled|python.

Both kernels draw the same counter-based noise and evaluate the same update
expressions; see the benchmark module for a throughput comparison.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernel_py
from .model import Nonlinearity
from .schemes import (
    SchemeSpec,
    pie_coefficients,
    postprocess_coefficient,
    theta_coefficients,
)
from .spectral import SpectralSpace, make_preconditioner

try:
    from . import _kernel as _compiled
except ImportError:  # built without the extension
    _compiled = None

_SCHEME_IDS = {"ee": 0, "theta": 1, "lm": 2, "pie": 3, "rk2": 4, "pli": 5}
_F_IDS = {"zero": 0, "cos": 1, "linear": 2}


def compiled_available() -> bool:
    return _compiled is not None


def default_backend() -> str:
    env = os.environ.get("SPDEGIBBS_BACKEND", "auto").lower()
    if env in ("compiled", "python"):
        return env
    return "compiled" if compiled_available() else "python"


def resolve_backend(backend: Optional[str]) -> str:
    name = (backend or default_backend()).lower()
    if name == "auto":
        name = default_backend()
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and not compiled_available():
        raise RuntimeError("compiled backend requested but the extension is not built")
    return name


@dataclass(frozen=True)
class _RunPack:
    """Everything a kernel needs, precomputed once so that both kernels
    consume bit-identical coefficients."""

    scheme_id: int
    c0: float
    c1: float
    c2: float
    noise_scale: np.ndarray
    q_or_dp: np.ndarray
    mode_a: np.ndarray
    S: np.ndarray
    h: float
    f_id: int
    post_coeff: float
    has_post: bool


def build_pack(space: SpectralSpace, nl: Nonlinearity, scheme: SchemeSpec) -> _RunPack:
    dt = scheme.dt
    lam = space.eigenvalues
    q = space.covariance_diagonal
    k = scheme.kind
    f_id = _F_IDS.get(nl.name, -1)
    needs_reaction = f_id != 0
    if k == "pli":
        p = make_preconditioner(space, scheme.alpha).multipliers
        noise_scale = np.sqrt(dt * p)
        mode_a = 1.0 / (1.0 + dt * (p * lam))
        q_or_dp = dt * p
        c0 = c1 = c2 = 0.0
    else:
        noise_scale = np.sqrt(dt * q)
        mode_a = np.ones_like(q)
        q_or_dp = q
        if k == "ee":
            c0, c1, c2 = dt, 0.0, 0.0
        elif k == "theta":
            c0, c1, c2 = theta_coefficients(scheme.theta, dt)
        elif k == "lm":
            c0, c1, c2 = dt, 0.0, 0.0
        elif k == "pie":
            c0, c1, c2 = pie_coefficients(dt)
        elif k == "rk2":
            c0, c1, c2 = dt, 0.5 * dt, 0.0
        else:
            raise ValueError(f"unhandled scheme kind {k!r}")
    if needs_reaction:
        S = np.ascontiguousarray(space.eigenvector_matrix)
    else:
        S = np.zeros((1, 1))
    post = postprocess_coefficient(scheme) if scheme.has_postprocessor else math.nan
    return _RunPack(
        scheme_id=_SCHEME_IDS[k],
        c0=c0,
        c1=c1,
        c2=c2,
        noise_scale=np.ascontiguousarray(noise_scale),
        q_or_dp=np.ascontiguousarray(q_or_dp),
        mode_a=np.ascontiguousarray(mode_a),
        S=S,
        h=space.grid_spacing,
        f_id=f_id,
        post_coeff=post,
        has_post=scheme.has_postprocessor,
    )


def ensemble_phi(
    space: SpectralSpace,
    nl: Nonlinearity,
    scheme: SchemeSpec,
    observable,
    n_samples: int,
    master_seed: int,
    traj_offset: int,
    n_steps: int,
    n_threads: int = 1,
    backend: Optional[str] = None,
    return_states: bool = False,
):
    """Per-trajectory observable values for an independent ensemble.

    ``observable`` is the string "expnorm" or (python backend only) a
    callable mapping (B, K) coefficient arrays to (B,) values.  Returns
    (phi, diverged) with phi NaN on diverged trajectories, plus the final
    observed states when ``return_states`` is set.
    """
    pack = build_pack(space, nl, scheme)
    callable_obs = None if observable == "expnorm" else observable
    name = resolve_backend(backend)
    if name == "compiled" and (pack.f_id < 0 or callable_obs is not None):
        name = "python"
    if name == "compiled":
        return _compiled.ensemble_phi(
            pack.scheme_id,
            pack.c0,
            pack.c1,
            pack.c2,
            pack.noise_scale,
            pack.q_or_dp,
            pack.mode_a,
            pack.S,
            pack.h,
            pack.f_id,
            pack.post_coeff,
            int(pack.has_post),
            n_samples,
            int(master_seed) & 0xFFFFFFFFFFFFFFFF,
            int(traj_offset) & 0xFFFFFFFFFFFFFFFF,
            n_steps,
            n_threads,
            int(return_states),
        )
    f = None if pack.f_id == 0 else nl.f
    return _kernel_py.ensemble_phi(
        pack.scheme_id,
        pack.c0,
        pack.c1,
        pack.c2,
        pack.noise_scale,
        pack.q_or_dp,
        pack.mode_a if pack.scheme_id == _SCHEME_IDS["pli"] else None,
        pack.S if f is not None else None,
        pack.h,
        f,
        pack.post_coeff if pack.has_post else None,
        callable_obs,
        n_samples,
        int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        int(traj_offset) & 0xFFFFFFFFFFFFFFFF,
        n_steps,
        return_states=return_states,
    )


def run_batch_python(space, nl, scheme, n_samples, master_seed, traj_offset, n_steps,
                     initial_states=None, record_steps=None):
    """Batched stepping with snapshots (numpy path only; support routine)."""
    pack = build_pack(space, nl, scheme)
    f = None if pack.f_id == 0 else nl.f
    return _kernel_py.run_batch(
        pack.scheme_id,
        pack.c0,
        pack.c1,
        pack.c2,
        pack.noise_scale,
        pack.q_or_dp,
        pack.mode_a if pack.scheme_id == _SCHEME_IDS["pli"] else None,
        pack.S if f is not None else None,
        pack.h,
        f,
        n_samples,
        int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        int(traj_offset) & 0xFFFFFFFFFFFFFFFF,
        n_steps,
        initial_states=initial_states,
        record_steps=record_steps,
    )
