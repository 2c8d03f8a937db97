import filecmp

import numpy as np
import pytest

from streamopt.cli import main
from streamopt.testbeds.configio import parse_kv, write_kv, write_time_value_csv, read_time_value_csv


def read_summary(out_dir):
    entries = {}
    for line in (out_dir / "summary.txt").read_text().splitlines():
        key, value = line.split(" = ", 1)
        entries[key] = value
    return entries


SMALL_LOT = dict(n_basis=10, n_frames=4, sinc_spacing=0.125, grid_step=2e-3)
SMALL_NHPP = dict(splines_per_frame=4, n_frames=6, rate_scale=1.0)


def write_cfg(tmp_path, mapping, name="scenario.cfg"):
    path = tmp_path / name
    write_kv(path, mapping)
    return str(path)


class TestRun:
    def test_synthetic_full_passes_oracle(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["run", "synthetic-ls", "--seed", "3", "--buffer", "full",
                   "--out", str(out)])
        assert rc == 0
        summary = read_summary(out)
        assert float(summary["oracle_max_rel_err"]) < 1e-9
        assert summary["assertions"] == "pass"
        assert (out / "archive.csv").exists()
        assert (out / "decay.csv").exists()
        assert (out / "history.csv").exists()

    def test_empty_stream_exits_zero(self, tmp_path):
        out = tmp_path / "empty"
        rc = main(["run", "synthetic-ls", "--frames", "0", "--out", str(out)])
        assert rc == 0
        assert (out / "archive.csv").read_text() == "frame,component,value\n"

    def test_truncated_run_within_bound(self, tmp_path):
        out = tmp_path / "b3"
        rc = main(["run", "synthetic-ls", "--seed", "3", "--buffer", "3",
                   "--out", str(out)])
        assert rc == 0
        summary = read_summary(out)
        assert summary["dominant"] == "True"
        assert float(summary["truncation_max_err"]) \
            <= float(summary["truncation_bound"])

    def test_lot_run_small_config(self, tmp_path):
        out = tmp_path / "lot"
        cfg = write_cfg(tmp_path, SMALL_LOT)
        rc = main(["run", "lot-ls", "--config", cfg, "--seed", "1",
                   "--buffer", "full", "--out", str(out)])
        assert rc == 0
        summary = read_summary(out)
        assert float(summary["oracle_max_rel_err"]) < 1e-9
        times, values = read_time_value_csv(out / "crossings.csv")
        assert times.size == int(summary["crossings"])

    def test_nhpp_run_positive_and_near_oracle(self, tmp_path):
        out = tmp_path / "nhpp"
        cfg = write_cfg(tmp_path, SMALL_NHPP)
        rc = main(["run", "nhpp-noa", "--config", cfg, "--seed", "2",
                   "--buffer", "4", "--out", str(out)])
        assert rc == 0
        summary = read_summary(out)
        assert summary["all_coefficients_positive"] == "True"
        assert float(summary["oracle_max_rel_err"]) < 1e-3
        assert (out / "trace.csv").exists()
        assert (out / "events.csv").exists()

    def test_deterministic_outputs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg = write_cfg(tmp_path, SMALL_NHPP)
        for out in (out_a, out_b):
            assert main(["run", "nhpp-noa", "--config", cfg, "--seed", "9",
                         "--buffer", "3", "--out", str(out)]) == 0
        for name in ("archive.csv", "decay.csv", "trace.csv", "events.csv",
                     "summary.txt"):
            assert filecmp.cmp(out_a / name, out_b / name, shallow=False)

    def test_structured_error_exit(self, tmp_path):
        rc = main(["run", "synthetic-ls", "--config",
                   str(tmp_path / "missing.cfg"), "--out",
                   str(tmp_path / "x")])
        assert rc == 2

    def test_failed_assertion_named_and_nonzero(self, tmp_path):
        # an impossible oracle tolerance forces the in-run assertion to fail
        cfg = write_cfg(tmp_path, dict(oracle_tol=1e-30))
        out = tmp_path / "fail"
        rc = main(["run", "synthetic-ls", "--config", cfg, "--seed", "3",
                   "--buffer", "full", "--out", str(out)])
        assert rc == 1
        summary = read_summary(out)
        assert summary["assertions"] == "fail"
        assert "oracle_max_rel_err" in summary["failed_assertions"]


class TestLagTable:
    def test_matrix_shape_and_monotone_columns(self, tmp_path):
        out = tmp_path / "lag"
        rc = main(["lag-table", "synthetic-ls", "--seed", "3",
                   "--out", str(out)])
        assert rc == 0
        rows = np.loadtxt(out / "lag_table.csv", delimiter=",", skiprows=1)
        K = int(rows[:, 0].max()) + 1
        M = np.full((K, K), np.nan)
        for k, j, v in rows:
            M[int(k), int(j)] = v
        # entries only for j <= k
        assert np.all(np.isnan(M[np.triu_indices(K, 1)]))
        # each column decreases as more appends settle the frame (floored
        # entries excluded)
        for j in range(K - 1):
            col = M[j:, j]
            col = col[col > -15.5]
            assert np.all(np.diff(col) < 0.5)

    def test_rejects_nhpp(self, tmp_path):
        rc = main(["lag-table", "nhpp-noa", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_decoupled_entries_at_floor(self, tmp_path):
        # with no coupling nothing ever gets refreshed: every sub-diagonal
        # entry sits at the numerical floor
        cfg = write_cfg(tmp_path, dict(coupling=0.0, jitter=0.0))
        out = tmp_path / "lag0"
        rc = main(["lag-table", "synthetic-ls", "--config", cfg,
                   "--seed", "2", "--out", str(out)])
        assert rc == 0
        rows = np.loadtxt(out / "lag_table.csv", delimiter=",", skiprows=1)
        sub = rows[rows[:, 0] > rows[:, 1]]
        assert np.all(sub[:, 2] <= -12.0)


class TestBufferSweep:
    def test_ls_sweep_slope_negative(self, tmp_path):
        out = tmp_path / "sweep"
        rc = main(["buffer-sweep", "synthetic-ls", "--seed", "3",
                   "--buffers", "1,2,3,4,5", "--out", str(out)])
        assert rc == 0
        summary = read_summary(out)
        assert float(summary["sweep_slope"]) < 0.0
        data = np.loadtxt(out / "sweep.csv", delimiter=",", skiprows=1)
        assert data.shape == (5, 2)

    def test_nhpp_sweep(self, tmp_path):
        out = tmp_path / "sweep-nhpp"
        cfg = write_cfg(tmp_path, SMALL_NHPP)
        rc = main(["buffer-sweep", "nhpp-noa", "--config", cfg, "--seed",
                   "2", "--buffers", "2,4,6", "--out", str(out)])
        assert rc == 0


class TestConditioning:
    def test_identity_like_dominant(self, tmp_path):
        cfg = write_cfg(tmp_path, dict(coupling=0.0, jitter=0.0, gamma=0.0))
        rc = main(["conditioning", "synthetic-ls", "--config", cfg,
                   "--seed", "1", "--out", str(tmp_path / "c")])
        assert rc == 0
        text = (tmp_path / "c" / "conditioning.txt").read_text()
        entries = dict(line.split(" = ", 1) for line in text.splitlines())
        assert float(entries["delta"]) < 1e-9
        assert float(entries["theta"]) < 1e-9
        assert entries["dominant"] == "true"

    def test_forced_non_dominant(self, tmp_path):
        cfg = write_cfg(tmp_path, dict(coupling=5.0))
        rc = main(["conditioning", "synthetic-ls", "--config", cfg,
                   "--seed", "1", "--out", str(tmp_path / "c2")])
        assert rc == 0
        text = (tmp_path / "c2" / "conditioning.txt").read_text()
        entries = dict(line.split(" = ", 1) for line in text.splitlines())
        assert entries["dominant"] == "false"
        assert entries["eps_star"] == "unset"

    def test_nhpp_constants(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_NHPP)
        rc = main(["conditioning", "nhpp-noa", "--config", cfg, "--seed",
                   "2", "--out", str(tmp_path / "c3")])
        assert rc == 0
        text = (tmp_path / "c3" / "conditioning.txt").read_text()
        entries = dict(line.split(" = ", 1) for line in text.splitlines())
        a = float(entries["a"])
        assert 0.0 < a < 1.0
        for key in ("M_x", "M_g", "C0", "C1"):
            assert np.isfinite(float(entries[key]))
        # the buffer-error constant is finite exactly when the declared
        # constants certify dominance
        if entries["rate_dominant"] == "true":
            assert np.isfinite(float(entries["C_b"]))


class TestSelftest:
    def test_selftest_passes(self):
        assert main(["selftest"]) == 0


class TestConfigIO:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "x.cfg"
        write_kv(path, dict(a=1, b=2.5, c="full", d=[1, 2, 3], e=True))
        got = parse_kv(path)
        assert got == dict(a=1, b=2.5, c="full", d=[1, 2, 3], e=True)

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "y.cfg"
        path.write_text("# comment\n\nn = 4  # inline\n")
        assert parse_kv(path) == dict(n=4)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "z.cfg"
        path.write_text("not a pair\n")
        with pytest.raises(ValueError):
            parse_kv(path)

    def test_time_value_roundtrip(self, tmp_path):
        path = tmp_path / "tv.csv"
        times = np.array([0.25, 1.5])
        vals = np.array([-1.0, 2.0])
        write_time_value_csv(path, times, vals)
        t2, v2 = read_time_value_csv(path)
        assert np.array_equal(t2, times)
        assert np.array_equal(v2, vals)
