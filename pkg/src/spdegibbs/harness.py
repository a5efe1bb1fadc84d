"""Monte Carlo ensembles, step-size sweeps, and convergence-order fits.

Seed discipline: trajectory m of a run draws from the counter-based stream
(master_seed, run_offset + m).  Runs inside a sweep get disjoint offset
ranges (stride 2^33), so rows are independent; reruns with the same inputs
are bit-identical, whatever the thread count or backend batch size.

Order fits regress log |bias| on log dt by least squares, using only rows
whose bias is resolved against the Monte Carlo noise: a row is noise-flagged
when |bias| < flag_sigma * combined standard error (combined with the
reference's own error).  Flagged rows are excluded from the fit rather than
downweighted; at least three usable rows are required, otherwise the fitted
order is reported unavailable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import backend as _backend
from ._kernel_py import _step
from .analytics import gaussian_phi_expectation
from .model import Nonlinearity
from .rng import normals_batch
from .schemes import SchemeSpec, make_scheme, warn_if_inadmissible
from .spectral import SpectralSpace

OFFSET_STRIDE = 2**33
REFERENCE_OFFSET = 2**62


@dataclass(frozen=True)
class EnsembleEstimate:
    mean: float
    stderr: float
    n_samples: int
    n_diverged: int
    scheme: SchemeSpec
    seed: int
    final_time: float


@dataclass(frozen=True)
class ReferenceValue:
    value: float
    stderr: float
    mode: str


@dataclass(frozen=True)
class SweepRow:
    dt: float
    estimate: float
    stderr: float
    reference: float
    bias: float
    flagged: bool


@dataclass(frozen=True)
class ConvergenceReport:
    scheme_label: str
    rows: tuple[SweepRow, ...]
    fitted_order: Optional[float]
    fit_dts: tuple[float, ...]
    reference: ReferenceValue
    n_diverged: int = 0


@dataclass(frozen=True)
class CoupledComparison:
    bias_a: float
    bias_b: float
    stderr_difference: float
    mean_a: float
    mean_b: float
    stderr_a: float
    stderr_b: float


def step_count(final_time: float, dt: float) -> int:
    """T/dt as an integer, rejecting non-integral ratios with the nearest fix."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if final_time < 0:
        raise ValueError("final time must be >= 0")
    n = int(round(final_time / dt))
    if abs(n * dt - final_time) > 1e-9 * max(1.0, final_time):
        nearest = final_time / max(n, 1)
        raise ValueError(
            f"final_time={final_time} is not an integer number of dt={dt} steps; "
            f"nearest valid dt is {nearest!r}"
        )
    return n


def scheme_family(name: str, theta: Optional[float] = None, alpha: Optional[float] = None):
    """dt -> SchemeSpec factory for sweeps."""
    return lambda dt: make_scheme(name, dt, theta=theta, alpha=alpha)


def ensemble_values(
    space: SpectralSpace,
    nl: Nonlinearity,
    scheme: SchemeSpec,
    observable,
    n_samples: int,
    final_time: float,
    seed: int,
    traj_offset: int = 0,
    n_threads: int = 1,
    backend: Optional[str] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory observable values phi(Y_N^(m)) and the diverged mask.

    All trajectories start from zero; the observed state is the
    postprocessed one when the scheme carries a postprocessor.
    """
    if n_samples < 1:
        raise ValueError("need at least one trajectory")
    warn_if_inadmissible(space, nl)
    n_steps = step_count(final_time, scheme.dt)
    return _backend.ensemble_phi(
        space, nl, scheme, observable, n_samples, seed, traj_offset, n_steps,
        n_threads=n_threads, backend=backend,
    )


def run_ensemble(
    space: SpectralSpace,
    nl: Nonlinearity,
    scheme: SchemeSpec,
    observable,
    n_samples: int,
    final_time: float,
    seed: int,
    traj_offset: int = 0,
    n_threads: int = 1,
    backend: Optional[str] = None,
) -> EnsembleEstimate:
    """Mean and standard error of the observable over an independent ensemble."""
    phi, diverged = ensemble_values(
        space, nl, scheme, observable, n_samples, final_time, seed,
        traj_offset=traj_offset, n_threads=n_threads, backend=backend,
    )
    n_div = int(diverged.sum())
    usable = phi[~diverged]
    if usable.size == 0:
        raise RuntimeError("every trajectory diverged")
    mean = float(np.mean(usable))
    stderr = float(np.std(usable, ddof=1) / math.sqrt(usable.size)) if usable.size > 1 else 0.0
    return EnsembleEstimate(
        mean=mean,
        stderr=stderr,
        n_samples=n_samples,
        n_diverged=n_div,
        scheme=scheme,
        seed=seed,
        final_time=final_time,
    )


def reference_value(
    space: SpectralSpace,
    nl: Nonlinearity,
    observable,
    mode: str,
    final_time: float = 10.0,
    seed: int = 0,
    ref_dt: float = 2.0**-7,
    ref_samples: int = 10**5,
    n_threads: int = 1,
    backend: Optional[str] = None,
) -> ReferenceValue:
    """Target value of the observable under the invariant measure.

    ``analytic`` is exact and only valid for the zero reaction (Gaussian
    law); ``fine-lm`` runs the postprocessed split-increment scheme at a
    fine step, the same device the reference experiments use, on a
    trajectory-offset range disjoint from every sweep.
    """
    if mode == "analytic":
        if nl.name != "zero":
            raise ValueError("the analytic reference only exists for the zero reaction")
        if observable != "expnorm":
            raise ValueError("the analytic reference only covers the expnorm observable")
        return ReferenceValue(gaussian_phi_expectation(space, 1.0), 0.0, "analytic")
    if mode == "fine-lm":
        est = run_ensemble(
            space, nl, make_scheme("lm", ref_dt), observable, ref_samples,
            final_time, seed, traj_offset=REFERENCE_OFFSET,
            n_threads=n_threads, backend=backend,
        )
        return ReferenceValue(est.mean, est.stderr, "fine-lm")
    raise ValueError(f"unknown reference mode {mode!r}")


def _fit_order(rows: Sequence[SweepRow]) -> tuple[Optional[float], tuple[float, ...]]:
    usable = [r for r in rows if not r.flagged and r.bias != 0.0]
    if len(usable) < 3:
        return None, ()
    x = np.log([r.dt for r in usable])
    y = np.log([abs(r.bias) for r in usable])
    return float(np.polyfit(x, y, 1)[0]), tuple(r.dt for r in usable)


def dt_sweep(
    space: SpectralSpace,
    nl: Nonlinearity,
    schemes: Callable[[float], SchemeSpec],
    observable,
    dts: Sequence[float],
    n_samples: int,
    final_time: float,
    seed: int,
    reference: ReferenceValue,
    base_offset: int = 0,
    flag_sigma: float = 3.0,
    n_threads: int = 1,
    backend: Optional[str] = None,
) -> ConvergenceReport:
    """One ensemble per step size, biases against the reference, order fit."""
    dts = [float(d) for d in dts]
    if len(dts) < 3:
        raise ValueError("a sweep needs at least three step sizes")
    if any(d2 >= d1 for d1, d2 in zip(dts, dts[1:])):
        raise ValueError("step sizes must be sorted in strictly decreasing order")
    rows = []
    label = None
    n_div = 0
    for i, dt in enumerate(dts):
        scheme = schemes(dt)
        label = label or scheme.label
        est = run_ensemble(
            space, nl, scheme, observable, n_samples, final_time, seed,
            traj_offset=base_offset + i * OFFSET_STRIDE,
            n_threads=n_threads, backend=backend,
        )
        n_div += est.n_diverged
        bias = est.mean - reference.value
        combined = math.sqrt(est.stderr**2 + reference.stderr**2)
        rows.append(
            SweepRow(
                dt=dt,
                estimate=est.mean,
                stderr=est.stderr,
                reference=reference.value,
                bias=bias,
                flagged=bool(abs(bias) < flag_sigma * combined),
            )
        )
    order, fit_dts = _fit_order(rows)
    return ConvergenceReport(
        scheme_label=label,
        rows=tuple(rows),
        fitted_order=order,
        fit_dts=fit_dts,
        reference=reference,
        n_diverged=n_div,
    )


def alpha_sweep(
    space: SpectralSpace,
    nl: Nonlinearity,
    alphas: Sequence[float],
    observable,
    dts: Sequence[float],
    n_samples: int,
    final_time: float,
    seed: int,
    reference: ReferenceValue,
    flag_sigma: float = 3.0,
    n_threads: int = 1,
    backend: Optional[str] = None,
) -> list[tuple[float, ConvergenceReport]]:
    """One dt-sweep of the preconditioned linear-implicit scheme per alpha."""
    out = []
    for j, alpha in enumerate(alphas):
        report = dt_sweep(
            space, nl, scheme_family("pli", alpha=alpha), observable, dts,
            n_samples, final_time, seed, reference,
            base_offset=j * len(dts) * OFFSET_STRIDE,
            flag_sigma=flag_sigma, n_threads=n_threads, backend=backend,
        )
        out.append((float(alpha), report))
    return out


def coupled_bias_comparison(
    space: SpectralSpace,
    nl: Nonlinearity,
    scheme_a: SchemeSpec,
    scheme_b: SchemeSpec,
    observable,
    n_samples: int,
    final_time: float,
    seed: int,
    reference: ReferenceValue,
    traj_offset: int = 0,
    n_threads: int = 1,
    backend: Optional[str] = None,
) -> CoupledComparison:
    """Biases of two schemes driven by identical noise streams.

    Because every scheme consumes exactly one increment per step, feeding
    both the same (seed, offset) range couples them pathwise; the standard
    error of the bias difference is then far below either individual error.
    """
    if scheme_a.dt != scheme_b.dt:
        raise ValueError("coupled comparison requires a common dt")
    vals = []
    for scheme in (scheme_a, scheme_b):
        phi, div = ensemble_values(
            space, nl, scheme, observable, n_samples, final_time, seed,
            traj_offset=traj_offset, n_threads=n_threads, backend=backend,
        )
        if div.any():
            phi = phi.copy()
            phi[div] = np.nan
        vals.append(phi)
    both = np.isfinite(vals[0]) & np.isfinite(vals[1])
    a, b = vals[0][both], vals[1][both]
    diff = a - b
    stderr_diff = float(np.std(diff, ddof=1) / math.sqrt(diff.size))
    mean_a, mean_b = float(a.mean()), float(b.mean())
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(x.size))
    return CoupledComparison(
        bias_a=mean_a - reference.value,
        bias_b=mean_b - reference.value,
        stderr_difference=stderr_diff,
        mean_a=mean_a,
        mean_b=mean_b,
        stderr_a=se(a),
        stderr_b=se(b),
    )


def second_moment_history(
    space: SpectralSpace,
    nl: Nonlinearity,
    scheme: SchemeSpec,
    n_samples: int,
    final_time: float,
    seed: int,
    traj_offset: int = 0,
) -> np.ndarray:
    """Ensemble mean of |Y_n|^2 after each step (numpy path; zero start)."""
    n_steps = step_count(final_time, scheme.dt)
    pack = _backend.build_pack(space, nl, scheme)
    f = None if pack.f_id == 0 else nl.f
    mode_a = pack.mode_a if pack.scheme_id == 5 else None
    s_mat = pack.S if f is not None else None
    trajs = np.arange(n_samples, dtype=np.uint64) + np.uint64(traj_offset)
    y = np.zeros((n_samples, space.mode_count))
    hist = np.empty(n_steps + 1)
    hist[0] = 0.0
    for n in range(n_steps):
        w = pack.noise_scale * normals_batch(seed, trajs, n, space.mode_count)
        y = _step(pack.scheme_id, pack.c0, pack.c1, pack.c2, pack.q_or_dp,
                  mode_a, s_mat, pack.h, f, y, w)
        hist[n + 1] = float(np.mean(np.sum(y * y, axis=1)))
    return hist


# ---------------------------------------------------------------------------
# CSV emission (locale-independent: '.' decimals, LF endings, no quoting)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


SWEEP_HEADER = "scheme,dt,estimate,stderr,reference,bias,flagged"


def sweep_csv_lines(report: ConvergenceReport) -> list[str]:
    lines = [SWEEP_HEADER]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    report.scheme_label,
                    _fmt(r.dt),
                    _fmt(r.estimate),
                    _fmt(r.stderr),
                    _fmt(r.reference),
                    _fmt(r.bias),
                    _fmt(r.flagged),
                ]
            )
        )
    order = "unavailable" if report.fitted_order is None else repr(report.fitted_order)
    lines.append(f"# fitted_order={order}")
    return lines


def alpha_sweep_csv_lines(results: list[tuple[float, ConvergenceReport]]) -> list[str]:
    lines: list[str] = []
    for alpha, report in results:
        lines.append(f"# alpha={_fmt(alpha)}")
        lines.extend(sweep_csv_lines(report))
    for alpha, report in results:
        order = "unavailable" if report.fitted_order is None else repr(report.fitted_order)
        lines.append(f"# summary alpha={_fmt(alpha)} fitted_order={order}")
    return lines


SAMPLE_HEADER = "scheme,dt,T,samples,seed,mean,stderr,n_diverged"


def sample_csv_lines(est: EnsembleEstimate) -> list[str]:
    return [
        SAMPLE_HEADER,
        ",".join(
            [
                est.scheme.label,
                _fmt(est.scheme.dt),
                _fmt(est.final_time),
                str(est.n_samples),
                str(est.seed),
                _fmt(est.mean),
                _fmt(est.stderr),
                str(est.n_diverged),
            ]
        ),
    ]
