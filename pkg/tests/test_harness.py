import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baps import __version__
from baps.cli import main
from baps.errors import ConfigurationError
from baps.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    best_over_pilot_window,
    emit,
    format_value,
    grid_points,
    load_config,
    parse_grid,
    read_csv,
    run_point,
    save_config,
    substream,
    sweep,
    to_csv,
)

SMALL = dict(n_symbols=6000, pilot_window=16, seed=7)
HEADER = ("algorithm,order,lambda,snr_db,linewidth_hz,baud_hz,n_symbols,n_pilots,pilot_period,"
          "half_window,n_test_phases,pilot_window,reanchor,seed,rep,mi_bits,ser,ber,q_db,"
          "rms_phase_error,cycle_slips,snr_eff_db,wall_s,version")


def _small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


class TestConfig:
    def test_defaults_mirror_awgn_setup(self):
        c = ExperimentConfig()
        assert (c.n_symbols, c.n_pilots, c.pilot_period, c.baud_hz, c.linewidth_hz) == (2**18, 50, 2000, 50e9, 200e3)
        assert c.effective_test_phases == 240
        assert ExperimentConfig(algorithm="bps").effective_test_phases == 60

    def test_file_round_trip(self, tmp_path):
        c = ExperimentConfig(algorithm="ps_bps", order=256, lam=0.0605, snr_db=17.5,
                             pilot_window=[8, 16], seed=2**64 - 1, reanchor=True, n_test_phases=64)
        save_config(c, tmp_path / "c.yaml")
        assert load_config(tmp_path / "c.yaml") == c

    @settings(max_examples=40)
    @given(
        lam=st.floats(0, 1, allow_nan=False),
        snr=st.floats(-10, 40, allow_nan=False),
        seed=st.integers(0, 2**64 - 1),
        n=st.integers(0, 40),
        alg=st.sampled_from(["bps", "ps_bps", "baps", "genie"]),
    )
    def test_round_trip_property(self, tmp_path_factory, lam, snr, seed, n, alg):
        c = ExperimentConfig(algorithm=alg, lam=lam, snr_db=snr, seed=seed, half_window=n)
        p = tmp_path_factory.mktemp("cfg") / "c.yaml"
        save_config(c, p)
        assert load_config(p) == c

    def test_target_rate(self):
        c = ExperimentConfig(order=256, target_rate=2.4)
        assert c.effective_lambda == pytest.approx(0.018716473361617955, abs=1e-8)

    @pytest.mark.parametrize(
        "data",
        [
            {"algorithm": "foo"},
            {"order": 16},
            {"lambda": -1},
            {"n_pilots": 1},
            {"seed": -1},
            {"seed": 2**64},
            {"half_window": 1.5},
            {"bogus": 1},
            {"reanchor": "maybe"},
            {"pilot_window": [4, 0]},
        ],
    )
    def test_invalid(self, data):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(data)

    def test_malformed_file(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("a: [1, 2\n")
        with pytest.raises(ConfigurationError):
            load_config(p)


class TestSubstreams:
    def test_reproducible(self):
        a = substream(5, "noise", 3).standard_normal(100)
        b = substream(5, "noise", 3).standard_normal(100)
        np.testing.assert_array_equal(a, b)

    def test_components_and_reps_uncorrelated(self):
        base = substream(11, "noise", 0).standard_normal(10**5)
        for other in (substream(11, "noise", 1), substream(11, "phase", 0), substream(11, "source", 0),
                      substream(12, "noise", 0)):
            assert abs(np.corrcoef(base, other.standard_normal(10**5))[0, 1]) < 0.01


class TestRunPoint:
    def test_row_shape(self):
        row = run_point(_small())
        assert tuple(row) == CSV_COLUMNS
        assert row["version"] == __version__
        assert 0 <= row["mi_bits"] <= 6 and 0 <= row["ser"] <= 1

    @pytest.mark.parametrize("alg", ["bps", "ps_bps", "baps", "genie"])
    def test_clean_channel(self, alg):
        row = run_point(_small(algorithm=alg, snr_db=math.inf, linewidth_hz=0.0))
        assert row["mi_bits"] == pytest.approx(6.0, abs=1e-3)
        assert row["ser"] == 0.0
        assert math.isnan(row["q_db"])

    def test_clean_channel_shaped_near_entropy(self):
        # the finite-sample estimate is the empirical -mean log2 p(x_k), so allow its standard error
        from baps.shaping import build_qam, mb_prior

        p = mb_prior(build_qam(64), 0.05)
        lp = np.log2(p.probabilities)
        se = math.sqrt(np.sum(p.probabilities * lp**2) - p.entropy() ** 2) / math.sqrt(6000)
        row = run_point(_small(algorithm="baps", lam=0.05, snr_db=math.inf, linewidth_hz=0.0))
        assert abs(row["mi_bits"] - p.entropy()) < 4 * se
        assert row["ser"] == 0.0

    def test_deterministic(self):
        a = run_point(_small(), timing=False)
        b = run_point(_small(), timing=False)
        assert a == b

    def test_seed_changes_result(self):
        assert run_point(_small(seed=1))["mi_bits"] != run_point(_small(seed=2))["mi_bits"]

    def test_list_pilot_window_rejected(self):
        with pytest.raises(ConfigurationError):
            run_point(_small(pilot_window=[4, 8]))

    def test_error_context(self):
        # an unreachable rate only fails once the pipeline builds the prior
        with pytest.raises(RuntimeError, match="seed=7"):
            run_point(_small(target_rate=9.0))


class TestSweep:
    def test_order_and_count(self):
        rows = sweep(_small(n_symbols=2100), {"lambda": [0, 0.02], "snr_db": [12]}, timing=False)
        assert [r["lambda"] for r in rows] == [0.0, 0.02]

    def test_cartesian_product_lexicographic(self):
        pts = grid_points(_small(repetitions=2), {"algorithm": ["bps", "baps"], "lambda": [0.0, 0.1]})
        keys = [(c.algorithm, c.lam, rep) for c, rep in pts]
        assert keys == [("bps", 0.0, 0), ("bps", 0.0, 1), ("bps", 0.1, 0), ("bps", 0.1, 1),
                        ("baps", 0.0, 0), ("baps", 0.0, 1), ("baps", 0.1, 0), ("baps", 0.1, 1)]

    def test_pilot_window_list_expands(self):
        pts = grid_points(_small(pilot_window=[4, 8, 16]), {"lambda": [0.0]})
        assert [c.pilot_window for c, _ in pts] == [4, 8, 16]

    @pytest.mark.parametrize("grid", [{}, "{}", {"lambda": []}])
    def test_empty_grid(self, grid):
        with pytest.raises(ConfigurationError):
            sweep(_small(), grid)

    def test_inline_and_file_grid(self, tmp_path):
        p = tmp_path / "g.yaml"
        p.write_text("lambda: [0, 0.05]\n")
        assert parse_grid(str(p)) == parse_grid("{lambda: [0, 0.05]}") == {"lambda": [0, 0.05]}

    def test_unwritable_before_compute(self, tmp_path, monkeypatch):
        import baps.harness as h

        calls = []
        monkeypatch.setattr(h, "run_point", lambda *a, **k: calls.append(1))
        with pytest.raises(OSError, match="cannot write"):
            sweep(_small(), {"lambda": [0]}, out=tmp_path / "missing" / "x.csv")
        assert calls == []

    def test_best_pilot_window(self):
        rows = sweep(_small(n_symbols=4000, pilot_window=[2, 16]), {"lambda": [0.0, 0.05]}, timing=False)
        best = best_over_pilot_window(rows)
        assert len(best) == 2
        for b, pair in zip(best, (rows[:2], rows[2:])):
            assert b["mi_bits"] == max(r["mi_bits"] for r in pair)

    def test_parallel_matches_serial(self, tmp_path):
        cfg = _small(n_symbols=2100)
        grid = {"algorithm": ["bps", "baps"], "lambda": [0.0, 0.05]}
        sweep(cfg, grid, tmp_path / "a.csv", workers=1, timing=False)
        sweep(cfg, grid, tmp_path / "b.csv", workers=2, timing=False)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestEmit:
    def _rows(self):
        return sweep(_small(n_symbols=2100), {"lambda": [0.0, 0.03]})

    def test_header_is_fixed(self):
        assert ",".join(CSV_COLUMNS) == HEADER

    def test_one_row(self, tmp_path):
        emit(self._rows()[:1], tmp_path / "o.csv")
        lines = (tmp_path / "o.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[0] == HEADER

    def test_csv_round_trip_bytes(self, tmp_path):
        emit(self._rows(), tmp_path / "o.csv")
        again = to_csv(read_csv(tmp_path / "o.csv"))
        assert again.encode() == (tmp_path / "o.csv").read_bytes()

    def test_jsonl_mirrors_csv(self, tmp_path):
        rows = self._rows()
        emit(rows, tmp_path / "o.csv")
        emit(rows, tmp_path / "o.jsonl")
        recs = [json.loads(x) for x in (tmp_path / "o.jsonl").read_text().splitlines()]
        data_lines = (tmp_path / "o.csv").read_text().splitlines()[1:]
        assert len(recs) == len(data_lines)
        assert all(tuple(r) == CSV_COLUMNS for r in recs)

    def test_nine_significant_digits(self):
        assert format_value("mi_bits", 1 / 3) == "0.333333333"
        assert format_value("q_db", float("nan")) == "nan"
        assert format_value("reanchor", False) == "false"

    def test_no_rows(self, tmp_path):
        with pytest.raises(ConfigurationError):
            emit([], tmp_path / "o.csv")

    def test_io_error_names_path(self, tmp_path):
        target = tmp_path / "nope" / "o.csv"
        with pytest.raises(OSError, match="nope"):
            emit(self._rows()[:1], target)


class TestCli:
    def test_run_stdout(self, capsys):
        assert main(["run", "n_symbols=2100", "pilot_window=16", "--seed", "3"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == HEADER and len(out) == 2

    def test_run_config_and_override(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        save_config(_small(n_symbols=2100, algorithm="bps"), cfg)
        out = tmp_path / "r.jsonl"
        assert main(["run", "--config", str(cfg), "--out", str(out), "algorithm=baps", "lambda=0.04"]) == 0
        rec = json.loads(out.read_text())
        assert rec["algorithm"] == "baps" and rec["lambda"] == 0.04 and rec["seed"] == 7

    def test_config_error_exit_2(self, capsys):
        assert main(["run", "algorithm=foo"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_override_syntax(self):
        assert main(["run", "algorithm"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.yaml")]) == 2

    def test_runtime_error_exit_3(self, tmp_path):
        assert main(["sweep", "--grid", "{lambda: [0]}", "--out", str(tmp_path / "no" / "x.csv"),
                     "n_symbols=2100"]) == 3

    def test_sweep_reproducible(self, tmp_path):
        args = ["sweep", "--grid", "{lambda: [0, 0.05]}", "--no-timing", "--seed", "5",
                "n_symbols=2100", "pilot_window=16"]
        assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert len((tmp_path / "a.csv").read_text().splitlines()) == 3

    def test_module_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "baps", "run", "algorithm=nope"], capture_output=True, text=True)
        assert r.returncode == 2

    def test_workers_env(self, monkeypatch):
        from baps.harness import default_workers

        monkeypatch.setenv("BAPS_WORKERS", "3")
        assert default_workers() == 3
        monkeypatch.setenv("BAPS_WORKERS", "x")
        assert default_workers() == 1
