"""Command-line interface.

Subcommands: sample | sweep | alpha-sweep | verify | traj.  Defaults follow
the reference experiment setup: finite differences at dx = 0.02, the
cos(x) - x reaction, final time T = 10, the exp(-|x|^2) observable, seed 0.

Exit codes: 0 success, 2 validation error, 3 divergence under --strict,
4 verification failure.  With a fixed --seed all output bytes are
deterministic (no timestamps are emitted).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import harness, verify
from .model import CATALOG, get_nonlinearity, sample_increment
from .rng import NoiseStream
from .schemes import KINDS, make_scheme, noise_preconditioner, step
from .spectral import make_space

_EXIT_OK = 0
_EXIT_VALIDATION = 2
_EXIT_DIVERGED = 3
_EXIT_VERIFY = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdegibbs",
        description="Sample the invariant Gibbs distribution of a semilinear "
        "stochastic heat equation with preconditioned time integrators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, dts=False):
        p.add_argument("--config", default=None, help="flat key=value file; flags override")
        p.add_argument("--flavor", choices=("fd", "spectral"), default="fd")
        p.add_argument("--dx", type=float, default=0.02, help="grid spacing (fd flavor)")
        p.add_argument("--modes", type=int, default=None, help="mode count (overrides --dx)")
        p.add_argument("--nonlinearity", choices=tuple(sorted(CATALOG)), default="cos")
        p.add_argument("--scheme", choices=KINDS, default="lm")
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--dt", type=float, default=0.125)
        if dts:
            p.add_argument(
                "--dts",
                default="0.25,0.125,0.0625,0.03125,0.015625",
                help="comma list of step sizes, decreasing",
            )
        p.add_argument("--T", type=float, default=10.0, dest="T")
        p.add_argument("--samples", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--phi", choices=("expnorm",), default="expnorm")
        p.add_argument("--out", default=None, help="write CSV here instead of stdout")
        p.add_argument("--strict", action="store_true", help="exit 3 if any trajectory diverged")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")

    def add_reference(p):
        p.add_argument("--reference", choices=("analytic", "fine-lm"), default="fine-lm")
        p.add_argument("--ref-dt", type=float, default=2.0**-7, dest="ref_dt")
        p.add_argument("--ref-samples", type=int, default=None, dest="ref_samples")

    p = sub.add_parser("sample", help="one ensemble estimate")
    add_common(p)
    p.add_argument("--steps", type=int, default=None, help="step count (overrides --T)")

    p = sub.add_parser("sweep", help="bias vs step size, with fitted order")
    add_common(p, dts=True)
    add_reference(p)

    p = sub.add_parser("alpha-sweep", help="order vs preconditioner exponent")
    add_common(p, dts=True)
    add_reference(p)
    p.add_argument("--alphas", default="0,0.5,1", help="comma list of exponents in [0,1]")

    p = sub.add_parser("verify", help="run the self-verification suite")
    p.add_argument("--filter", default=None, help="substring of a check group or name")

    p = sub.add_parser("traj", help="dump one trajectory's grid values per step")
    add_common(p)
    p.add_argument("--trajectory", type=int, default=0, help="trajectory index in the stream")

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Prepend the flags from --config (if present) so command-line flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv
    path = argv[idx + 1]
    extra: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if flag == "--strict":
                if value.lower() in ("1", "true", "yes", "on"):
                    extra.append(flag)
            else:
                extra.extend([flag, value])
    # insert after the subcommand so later (command-line) flags win
    return argv[:2] + extra + argv[2:]


def _space_from_args(args):
    if args.modes is not None:
        return make_space(args.flavor, modes=args.modes)
    return make_space(args.flavor, dx=args.dx)


def _scheme_from_args(args, dt=None):
    return make_scheme(args.scheme, dt if dt is not None else args.dt,
                       theta=args.theta, alpha=args.alpha)


def _parse_dts(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _emit(lines: list[str], out: Optional[str]) -> None:
    payload = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _reference_from_args(args, space, nl):
    ref_samples = args.ref_samples if args.ref_samples is not None else args.samples
    return harness.reference_value(
        space, nl, args.phi, args.reference, final_time=args.T, seed=args.seed,
        ref_dt=args.ref_dt, ref_samples=ref_samples,
        n_threads=args.threads, backend=None if args.backend == "auto" else args.backend,
    )


def _cmd_sample(args) -> int:
    space = _space_from_args(args)
    nl = get_nonlinearity(args.nonlinearity)
    scheme = _scheme_from_args(args)
    final_time = args.T if args.steps is None else args.steps * scheme.dt
    est = harness.run_ensemble(
        space, nl, scheme, args.phi, args.samples, final_time, args.seed,
        n_threads=args.threads, backend=None if args.backend == "auto" else args.backend,
    )
    print(f"mean={est.mean!r} stderr={est.stderr!r} n_diverged={est.n_diverged}")
    if args.out:
        _emit(harness.sample_csv_lines(est), args.out)
    if args.strict and est.n_diverged > 0:
        print("diverged trajectories present", file=sys.stderr)
        return _EXIT_DIVERGED
    return _EXIT_OK


def _cmd_sweep(args) -> int:
    space = _space_from_args(args)
    nl = get_nonlinearity(args.nonlinearity)
    dts = _parse_dts(args.dts)
    reference = _reference_from_args(args, space, nl)
    report = harness.dt_sweep(
        space, nl, harness.scheme_family(args.scheme, theta=args.theta, alpha=args.alpha),
        args.phi, dts, args.samples, args.T, args.seed, reference,
        n_threads=args.threads, backend=None if args.backend == "auto" else args.backend,
    )
    _emit(harness.sweep_csv_lines(report), args.out)
    if args.strict and report.n_diverged > 0:
        print("diverged trajectories present", file=sys.stderr)
        return _EXIT_DIVERGED
    return _EXIT_OK


def _cmd_alpha_sweep(args) -> int:
    space = _space_from_args(args)
    nl = get_nonlinearity(args.nonlinearity)
    dts = _parse_dts(args.dts)
    alphas = _parse_dts(args.alphas)
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {a}")
    reference = _reference_from_args(args, space, nl)
    results = harness.alpha_sweep(
        space, nl, alphas, args.phi, dts, args.samples, args.T, args.seed, reference,
        n_threads=args.threads, backend=None if args.backend == "auto" else args.backend,
    )
    _emit(harness.alpha_sweep_csv_lines(results), args.out)
    if args.strict and any(rep.n_diverged for _, rep in results):
        print("diverged trajectories present", file=sys.stderr)
        return _EXIT_DIVERGED
    return _EXIT_OK


def _cmd_verify(args) -> int:
    results = verify.run_checks(args.filter)
    if not results:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return _EXIT_VALIDATION
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "pass" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{r.name:<{width}}  {status}  residual={r.residual:.3e}  tol={r.tolerance:.3e}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return _EXIT_VERIFY if failures else _EXIT_OK


def _cmd_traj(args) -> int:
    space = _space_from_args(args)
    nl = get_nonlinearity(args.nonlinearity)
    scheme = _scheme_from_args(args)
    n_steps = harness.step_count(args.T, scheme.dt)
    precond = noise_preconditioner(space, scheme)
    stream = NoiseStream(args.seed, args.trajectory)
    y = np.zeros(space.mode_count)
    k = space.mode_count
    header = "step,t," + ",".join(f"x_{i}" for i in range(1, k + 1))
    lines = [header]

    def row(n, state):
        vals = space.to_physical(state)
        return ",".join([str(n), repr(n * scheme.dt)] + [repr(float(v)) for v in vals])

    lines.append(row(0, y))
    for n in range(n_steps):
        w = sample_increment(space, precond, stream, scheme.dt)
        y, _ = step(space, nl, scheme, y, w, precond)
        if not np.all(np.isfinite(y)):
            print(f"trajectory diverged at step {n}", file=sys.stderr)
            _emit(lines, args.out)
            return _EXIT_DIVERGED if args.strict else _EXIT_OK
        lines.append(row(n + 1, y))
    _emit(lines, args.out)
    return _EXIT_OK


_COMMANDS = {
    "sample": _cmd_sample,
    "sweep": _cmd_sweep,
    "alpha-sweep": _cmd_alpha_sweep,
    "verify": _cmd_verify,
    "traj": _cmd_traj,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv if argv is None else ["spdegibbs", *argv])
    parser = _build_parser()
    try:
        argv = _apply_config(argv)
        args = parser.parse_args(argv[1:])
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse validation
        return int(exc.code or 0)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
