import csv
import json

import numpy as np
import pytest

from modcal.harness import (CONFIG_KEYS, REPORT_COLUMNS, ConfigError, build_config,
                            emit_report, load_config, parse_config_text, read_report,
                            run_experiment, run_interval_comparison, worker_count)

SMALL = {
    "datasets": "hetero:n=300",
    "base_kinds": "point,distribution",
    "interpolators": "linear",
    "seeds": "0-3",
    "hidden": "6",
    "epochs": "40",
}


def cfg(**over):
    raw = dict(SMALL)
    raw.update(over)
    return build_config(raw)


class TestConfig:
    def test_parse_text(self):
        raw = parse_config_text("# comment\ndatasets = hetero, skew  # trailing\nseeds=1\n")
        assert raw == {"datasets": "hetero, skew", "seeds": "1"}

    @pytest.mark.parametrize("text", ["nokey\n", "bogus = 1\n", "seeds = 1\nseeds = 2\n"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_seed_range(self):
        assert cfg(seeds="0-2, 7").seeds == (0, 1, 2, 7)

    @pytest.mark.parametrize("over", [
        {"scores": "residue", "base_kinds": "distribution"},
        {"scores": "zscore", "base_kinds": "point"},
        {"scores": "ensemble-sum", "base_kinds": "distribution"},
        {"interpolators": "isotonic", "base_kinds": "point"},
    ])
    def test_incompatible_pairs(self, over):
        with pytest.raises(ConfigError, match="incompatible"):
            cfg(**over)

    @pytest.mark.parametrize("over", [
        {"seeds": "-1"}, {"seeds": "a"}, {"interpolators": "spline"}, {"scores": "nope"},
        {"base_kinds": "gauss"}, {"datasets": "nowhere.csv"}, {"train_frac": "0.9"},
        {"naf.strict": "maybe"}, {"level": "1.5"}, {"datasets": "hetero:q=1"},
    ])
    def test_invalid_values(self, over):
        with pytest.raises(ConfigError):
            cfg(**over)

    def test_auto_scores(self):
        c = cfg(base_kinds="point,interval,quantile-3,distribution,ensemble-2")
        assert [c.cells_for_kind(k)[0][0] for k in c.base_kinds] == [
            "residue", "interval", "quantile", "zscore", "zscore"]

    def test_alias_cells(self):
        c = cfg(base_kinds="distribution", interpolators="isotonic,conformal-calibration")
        assert c.cells_for_kind("distribution") == [("cdf", "isotonic"),
                                                    ("cdf", "conformal-calibration")]

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.cfg")

    def test_every_key_documented(self):
        assert all(desc for _, desc in CONFIG_KEYS.values())

    def test_threads_capped(self, monkeypatch):
        c = cfg(threads="8")
        monkeypatch.setenv("CALIB_THREADS", "2")
        assert worker_count(c) == 2
        monkeypatch.setenv("CALIB_THREADS", "x")
        with pytest.raises(ConfigError):
            worker_count(c)


class TestRun:
    def test_grid_rows(self):
        rep = run_experiment(cfg())
        assert len(rep.rows) == 8 and not rep.failures
        for agg in rep.aggregates():
            assert agg["count"] == 4

    def test_step_map_sentinels(self):
        rep = run_experiment(cfg(interpolators="random", seeds="0", base_kinds="point"))
        assert rep.rows[0].metrics.nll is None and rep.rows[0].metrics.std is None

    def test_cell_failure_recorded(self):
        # strict NAF with a tiny budget cannot reach its accuracy target
        c = cfg(interpolators="linear,naf", seeds="0", base_kinds="point",
                **{"naf.strict": "true", "naf.hidden_units": "2", "naf.max_iters": "3"})
        rep = run_experiment(c)
        assert [r.ok for r in rep.rows] == [True, False]
        assert "NafConvergenceError" in rep.failures[0].error

    def test_parallel_matches_serial(self):
        c = cfg(seeds="0-1")
        assert run_experiment(c, workers=1) == run_experiment(c, workers=2)


@pytest.fixture(scope="module")
def report():
    return run_experiment(cfg(interpolators="linear,random", seeds="0-1"))


class TestEmit:
    def test_csv_columns_and_na(self, report, tmp_path):
        emit_report(report, tmp_path)
        with (tmp_path / "report.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0][:11]) == REPORT_COLUMNS
        random_rows = [r for r in rows[1:] if r[3] == "random"]
        assert random_rows and all(r[5] == "NA" and r[7] == "NA" for r in random_rows)

    def test_json_round_trip(self, report, tmp_path):
        emit_report(report, tmp_path)
        assert read_report(tmp_path / "report.json") == report
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["config"]["datasets"] == ["hetero:n=300"]

    def test_pit_histograms(self, report, tmp_path):
        emit_report(report, tmp_path)
        with (tmp_path / "pit_histograms.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows[0]) == 5 + 20
        assert len(rows) == 1 + len(report.rows)
        assert all(sum(map(int, r[5:])) == 60 for r in rows[1:])  # test split of 300 rows

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        emit_report(run_experiment(cfg(seeds="0")), a)
        emit_report(run_experiment(cfg(seeds="0")), b)
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()

    def test_io_error_has_path(self, report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match=str(blocker)):
            emit_report(report, blocker / "sub")


def test_interval_comparison_columns():
    table = run_interval_comparison(cfg(seeds="0", datasets="hetero:n=500"), c=0.5)
    assert [r["base"] for r in table] == ["point", "distribution"]
    for r in table:
        assert 0 < r["conformal_coverage"] <= 1 and r["width_ratio"] > 0
        assert np.isfinite(r["credible_width"])
