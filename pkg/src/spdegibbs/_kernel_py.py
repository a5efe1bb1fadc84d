"""Batched pure-numpy ensemble kernel (portable fallback).

Mirrors the compiled kernel in `_kernel.pyx` operation for operation: the
same counter-based noise, the same update expressions in the same order.
Linear (zero-reaction) paths agree bitwise with the compiled kernel; paths
through the reaction term differ only by BLAS summation order inside the
grid transforms (~1 ulp).

Scheme ids: 0 ee, 1 theta, 2 lm, 3 pie, 4 rk2, 5 pli.
"""

from __future__ import annotations

import numpy as np

from .rng import normals_batch

DEFAULT_BATCH = 1 << 16


def _reaction(y, f, S, h):
    """Coefficients of f applied pointwise on the grid (batched)."""
    return h * (f(y @ S) @ S)


def ensemble_phi(
    scheme_id: int,
    c0: float,
    c1: float,
    c2: float,
    noise_scale: np.ndarray,
    q_or_dp: np.ndarray,
    mode_a: np.ndarray | None,
    S: np.ndarray | None,
    h: float,
    f,
    post_coeff: float | None,
    observable,
    n_samples: int,
    master_seed: int,
    traj_offset: int,
    n_steps: int,
    return_states: bool = False,
    batch_size: int = DEFAULT_BATCH,
):
    """Run ``n_samples`` independent trajectories; return (phi, diverged[, states]).

    ``f`` is None for the zero reaction, else a vectorised grid callable.
    ``observable`` is None for exp(-|y|^2), else a callable on (B, K) states.
    """
    k = len(noise_scale)
    phi_out = np.empty(n_samples)
    diverged = np.zeros(n_samples, dtype=bool)
    states_out = np.empty((n_samples, k)) if return_states else None
    for start in range(0, n_samples, batch_size):
        stop = min(start + batch_size, n_samples)
        trajs = np.arange(start, stop, dtype=np.uint64) + np.uint64(traj_offset)
        y = np.zeros((stop - start, k))
        alive = np.ones(stop - start, dtype=bool)
        for n in range(n_steps):
            w = noise_scale * normals_batch(master_seed, trajs, n, k)
            y = _step(scheme_id, c0, c1, c2, q_or_dp, mode_a, S, h, f, y, w)
            alive &= np.isfinite(y).all(axis=1)
        if post_coeff is not None and n_steps > 0:
            w = noise_scale * normals_batch(master_seed, trajs, n_steps, k)
            obs = y + post_coeff * w
        else:
            obs = y
        if observable is None:
            phi = np.exp(-np.sum(obs * obs, axis=1))
        else:
            phi = np.asarray(observable(obs), dtype=float)
        phi[~alive] = np.nan
        phi_out[start:stop] = phi
        diverged[start:stop] = ~alive
        if return_states:
            states_out[start:stop] = obs
    if return_states:
        return phi_out, diverged, states_out
    return phi_out, diverged


def _step(scheme_id, c0, c1, c2, q, mode_a, S, h, f, y, w):
    dt = c0
    if scheme_id == 0:  # ee
        if f is None:
            g = -y
        else:
            g = q * _reaction(y, f, S, h) - y
        return (y + dt * g) + w
    if scheme_id == 1:  # theta: c0 = state mult, c1 = reaction weight, c2 = incr weight
        if f is None:
            return (c0 * y) + c2 * w
        qf = q * _reaction(y, f, S, h)
        return ((c0 * y) + c1 * qf) + c2 * w
    if scheme_id == 2:  # lm
        mid = y + 0.5 * w
        if f is None:
            g = -mid
        else:
            g = q * _reaction(mid, f, S, h) - mid
        return (y + dt * g) + w
    if scheme_id == 3:  # pie: c0 = implicit mult, c1 = reaction weight, c2 = midpoint weight
        if f is None:
            return (c0 * y) + c0 * w
        mid = y + c2 * w
        qf = q * _reaction(mid, f, S, h)
        return ((c0 * y) + c1 * qf) + c0 * w
    if scheme_id == 4:  # rk2: c0 = dt, c1 = dt/2
        if f is None:
            g1 = -y
            yh = (y + dt * g1) + w
            g2 = -yh
        else:
            g1 = q * _reaction(y, f, S, h) - y
            yh = (y + dt * g1) + w
            g2 = q * _reaction(yh, f, S, h) - yh
        return (y + c1 * (g1 + g2)) + w
    if scheme_id == 5:  # pli: q slot holds dt * p
        if f is None:
            return mode_a * (y + w)
        return mode_a * ((y + q * _reaction(y, f, S, h)) + w)
    raise ValueError(f"unknown scheme id {scheme_id}")


def run_batch(
    scheme_id,
    c0,
    c1,
    c2,
    noise_scale,
    q_or_dp,
    mode_a,
    S,
    h,
    f,
    n_samples,
    master_seed,
    traj_offset,
    n_steps,
    initial_states=None,
    record_steps=None,
):
    """Step a batch of trajectories, optionally recording snapshots.

    Support routine for moment histories and path-regularity studies; not a
    hot path.  Returns (final_states, snapshots) where ``snapshots`` maps a
    recorded step index to the (B, K) state array after that step.
    """
    k = len(noise_scale)
    trajs = np.arange(n_samples, dtype=np.uint64) + np.uint64(traj_offset)
    if initial_states is None:
        y = np.zeros((n_samples, k))
    else:
        y = np.array(initial_states, dtype=float)
    wanted = set(record_steps or ())
    snapshots = {}
    if 0 in wanted:
        snapshots[0] = y.copy()
    for n in range(n_steps):
        w = noise_scale * normals_batch(master_seed, trajs, n, k)
        y = _step(scheme_id, c0, c1, c2, q_or_dp, mode_a, S, h, f, y, w)
        if (n + 1) in wanted:
            snapshots[n + 1] = y.copy()
    return y, snapshots
