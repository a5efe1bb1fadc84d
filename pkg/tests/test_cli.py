import re

import numpy as np

from spdegibbs import cli
from spdegibbs.analytics import gaussian_phi_expectation
from spdegibbs.harness import EnsembleEstimate
from spdegibbs.spectral import make_space


def run_cli(capsys, *args):
    code = cli.main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSample:
    def test_exact_scheme_hits_analytic_target(self, capsys):
        code, out, err = run_cli(
            capsys,
            "sample", "--scheme", "cn", "--dt", "0.25", "--nonlinearity", "zero",
            "--flavor", "fd", "--dx", "0.1", "--samples", "20000", "--T", "5",
        )
        assert code == 0
        m = re.match(r"mean=(\S+) stderr=(\S+) n_diverged=(\d+)", out)
        assert m, out
        mean, stderr = float(m.group(1)), float(m.group(2))
        target = gaussian_phi_expectation(make_space("fd", dx=0.1), 1.0)
        assert abs(mean - target) < 4 * stderr
        assert m.group(3) == "0"

    def test_window_violation_message_and_exit(self, capsys):
        code, out, err = run_cli(capsys, "sample", "--scheme", "ee", "--dt", "1.5")
        assert code == 2
        assert "dt <= 1" in err

    def test_zero_steps(self, capsys):
        code, out, _ = run_cli(capsys, "sample", "--steps", "0", "--samples", "5")
        assert code == 0
        assert out.startswith("mean=1.0 stderr=0.0")

    def test_csv_out(self, capsys, tmp_path):
        path = tmp_path / "row.csv"
        code, _, _ = run_cli(
            capsys,
            "sample", "--samples", "50", "--T", "1", "--dt", "0.25",
            "--flavor", "fd", "--dx", "0.25", "--out", str(path),
        )
        assert code == 0
        lines = path.read_text().splitlines()
        assert lines[0] == "scheme,dt,T,samples,seed,mean,stderr,n_diverged"
        assert len(lines) == 2

    def test_strict_divergence_exit(self, capsys, monkeypatch):
        from spdegibbs import harness
        from spdegibbs.schemes import make_scheme

        def fake(*args, **kwargs):
            return EnsembleEstimate(0.5, 0.01, 10, 3, make_scheme("lm", 0.125), 0, 1.0)

        monkeypatch.setattr(harness, "run_ensemble", fake)
        code, _, err = run_cli(capsys, "sample", "--strict", "--samples", "10", "--T", "1")
        assert code == 3


class TestSweep:
    def test_byte_identical_reruns(self, capsys, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            code, _, _ = run_cli(
                capsys,
                "sweep", "--scheme", "lm", "--nonlinearity", "zero",
                "--flavor", "fd", "--dx", "0.25", "--dts", "0.5,0.25,0.125",
                "--samples", "400", "--T", "2", "--reference", "analytic",
                "--out", str(path),
            )
            assert code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_exact_scheme_all_rows_flagged(self, capsys):
        code, out, _ = run_cli(
            capsys,
            "sweep", "--scheme", "cn", "--nonlinearity", "zero",
            "--flavor", "fd", "--dx", "0.25", "--dts", "0.5,0.25,0.125",
            "--samples", "400", "--T", "2", "--reference", "analytic",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "scheme,dt,estimate,stderr,reference,bias,flagged"
        assert all(line.endswith(",1") for line in lines[1:4])
        assert lines[-1] == "# fitted_order=unavailable"

    def test_analytic_reference_rejected_for_reaction(self, capsys):
        code, _, err = run_cli(
            capsys,
            "sweep", "--nonlinearity", "cos", "--reference", "analytic",
            "--dts", "0.5,0.25,0.125", "--samples", "10", "--T", "1",
        )
        assert code == 2
        assert "analytic" in err


class TestAlphaSweep:
    def test_blocks_and_summary(self, capsys):
        code, out, _ = run_cli(
            capsys,
            "alpha-sweep", "--nonlinearity", "zero", "--flavor", "fd", "--modes", "4",
            "--dts", "0.5,0.25,0.125", "--alphas", "0,1", "--samples", "200",
            "--T", "2", "--reference", "analytic",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "# alpha=0.0"
        assert sum(1 for ln in lines if ln == "scheme,dt,estimate,stderr,reference,bias,flagged") == 2
        assert sum(1 for ln in lines if ln.startswith("# summary alpha=")) == 2

    def test_alpha_out_of_range(self, capsys):
        code, _, err = run_cli(capsys, "alpha-sweep", "--alphas", "0,2", "--samples", "10")
        assert code == 2


class TestVerify:
    def test_gaussian_filter_passes(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--filter", "gaussian")
        assert code == 0
        assert "gaussian/lm-chain-dt0.5" in out
        assert "FAIL" not in out

    def test_failing_check_exits_four(self, capsys, monkeypatch):
        from spdegibbs import verify as verify_mod
        from spdegibbs.verify import CheckResult

        monkeypatch.setattr(
            verify_mod, "run_checks", lambda flt=None: [CheckResult("x/y", False, 1.0, 0.1)]
        )
        code, out, _ = run_cli(capsys, "verify")
        assert code == 4
        assert "FAIL" in out

    def test_unknown_filter(self, capsys):
        code, _, err = run_cli(capsys, "verify", "--filter", "nonexistent-check")
        assert code == 2


class TestTraj:
    def test_schema_and_length(self, capsys):
        code, out, _ = run_cli(
            capsys,
            "traj", "--flavor", "fd", "--modes", "4", "--dt", "0.25", "--T", "2",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "step,t,x_1,x_2,x_3,x_4"
        assert len(lines) == 1 + 1 + 8  # header, initial state, 8 steps
        first = lines[1].split(",")
        assert first[0] == "0" and float(first[1]) == 0.0
        assert all(np.isfinite([float(v) for v in lines[-1].split(",")[2:]]))

    def test_deterministic(self, capsys):
        args = ("traj", "--flavor", "fd", "--modes", "3", "--dt", "0.5", "--T", "3")
        _, out1, _ = run_cli(capsys, *args)
        _, out2, _ = run_cli(capsys, *args)
        assert out1 == out2


class TestConfigFile:
    def test_flags_override_config(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nscheme=cn\ndt=0.25\nsamples=50\nT=1\nflavor=fd\ndx=0.25\n")
        out_path = tmp_path / "o.csv"
        code, _, _ = run_cli(
            capsys, "sample", "--config", str(cfg), "--dt", "0.5", "--out", str(out_path)
        )
        assert code == 0
        row = out_path.read_text().splitlines()[1].split(",")
        assert row[0] == "cn"  # from config
        assert row[1] == "0.5"  # overridden on the command line

    def test_malformed_config(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("scheme cn\n")
        code, _, err = run_cli(capsys, "sample", "--config", str(cfg))
        assert code == 2
