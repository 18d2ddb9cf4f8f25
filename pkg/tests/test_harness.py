import json
import math
from dataclasses import replace

import numpy as np
import pytest

from modules import harness
from modules.compactify import compactify
from modules.errors import ConfigError, DegenerateState
from modules.geometry import GeometrySpec, build, diameter, sizes
from modules.harness import (
    COLUMNS,
    cell_tasks,
    config_from_dict,
    load_config,
    resolve_workers,
    sweep,
    validate_config,
)
from modules.report import lower_median, report


def small_config(**overrides):
    data = {
        "n": 4,
        "target": {"scenario": "random", "seed": 1},
        "geometries": [{"family": "mps"}, {"family": "balanced", "compact": True}],
        "chi_values": [2],
        "trials_per_cell": 2,
        "base_seed": 7,
        "optim": {"max_iters": 15},
    }
    data.update(overrides)
    return config_from_dict(data)


@pytest.fixture(autouse=True)
def no_worker_override(monkeypatch):
    monkeypatch.delenv("TNGEO_WORKERS", raising=False)


class TestConfig:

    def test_defaults(self):
        cfg = small_config()
        assert cfg.success_threshold == 1e-3
        assert cfg.workers == 1
        assert cfg.loss == "log"
        assert cfg.geometries[1].compact

    def test_valid(self):
        assert validate_config(small_config()) == (True, "Config validation successful.")

    @pytest.mark.parametrize("overrides", [
        {"chi_values": [4, 2]},
        {"chi_values": []},
        {"trials_per_cell": 0},
        {"workers": 0},
        {"geometries": [{"family": "peps", "compact": True}]},
        {"geometries": [{"family": "peps", "rows": 3}]},
        {"geometries": [{"family": "mps"}, {"family": "mps"}]},
        {"loss": "hinge"},
        {"n": 30},
    ])
    def test_invalid(self, overrides):
        is_valid, message = validate_config(small_config(**overrides))
        assert not is_valid
        assert message

    @pytest.mark.parametrize("data", [
        {"geometries": [{"family": "mps"}], "chi_values": [2]},
        {"n": 4, "geometries": [{"compact": True}], "chi_values": [2]},
        {"n": 4, "geometries": [{"family": "mps"}], "chi_values": [2], "optim": {"step": 1}},
        {"n": 4, "geometries": [{"family": "mps"}], "chi_values": [2], "target": {"scenario": "hidden"}},
        {"n": "four", "geometries": [], "chi_values": []},
    ])
    def test_malformed(self, data):
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_load(self, tmp_path):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({"n": 4, "geometries": [{"family": "star", "k": 2}], "chi_values": [2, 4]}))
        cfg = load_config(path)
        assert cfg.geometries[0].k == 2
        assert cfg.chi_values == (2, 4)

    def test_load_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")

    def test_load_bad_json(self, tmp_path):
        path = tmp_path / "experiment.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_load_invalid(self, tmp_path):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({"n": 4, "geometries": [{"family": "mps"}], "chi_values": [4, 2]}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_worker_override(self, monkeypatch):
        monkeypatch.setenv("TNGEO_WORKERS", "3")
        assert resolve_workers(small_config()) == 3
        monkeypatch.setenv("TNGEO_WORKERS", "many")
        with pytest.raises(ConfigError):
            resolve_workers(small_config())


class TestCells:

    def test_canonical_order_and_unique_seeds(self):
        cfg = small_config(chi_values=[2, 4], trials_per_cell=3)
        tasks = cell_tasks(cfg)
        assert len(tasks) == 2 * 2 * 3
        assert [(t[0].label, t[0].chi, t[2]) for t in tasks[:4]] == [
            ("mps", 2, 0), ("mps", 2, 1), ("mps", 2, 2), ("mps", 4, 0)]
        seeds = [t[3] for t in tasks]
        assert len(set(seeds)) == len(seeds)

    def test_seeds_do_not_depend_on_other_cells(self):
        a = cell_tasks(small_config())
        b = cell_tasks(small_config(chi_values=[1, 2]))
        assert a[0][3] == [t for t in b if t[0].chi == 2][0][3]


class TestSweep:

    def test_one_cell(self):
        cfg = small_config(geometries=[{"family": "mps"}], trials_per_cell=3)
        table = sweep(cfg)
        assert list(table.rows.columns) == COLUMNS
        assert len(table.rows) == 3
        assert table.rows["seed"].nunique() == 3
        assert (table.rows["wall_ms"] == 0).all()

    def test_rerun_is_byte_identical(self):
        cfg = small_config()
        assert sweep(cfg).to_csv() == sweep(cfg).to_csv()

    def test_worker_count_independent(self):
        cfg = small_config(trials_per_cell=4)
        serial = sweep(cfg).to_csv()
        parallel = sweep(replace(cfg, workers=4)).to_csv()
        assert serial == parallel

    def test_metrics_match_rebuilt_network(self):
        cfg = small_config()
        table = sweep(cfg)
        for row in table.rows.itertuples():
            spec = GeometrySpec.from_label(row.geometry, row.n, row.chi)
            net = build(spec, row.seed)
            if row.compact:
                net = compactify(net, row.chi)
            assert (row.largest_tensor, row.total_elems) == sizes(net)
            assert row.diameter == diameter(net)

    def test_history_mirror(self, tmp_path):
        table = sweep(small_config())
        table.write(tmp_path / "out")
        lines = (tmp_path / "out.jsonl").read_text().splitlines()
        assert len(lines) == len(table.rows)
        for line, iterations in zip(lines, table.rows["iterations"]):
            record = json.loads(line)
            assert len(record["history"]) == iterations + 1
            assert set(COLUMNS) <= set(record)
        assert (tmp_path / "out.csv").read_text() == table.to_csv()

    def test_csv_format(self):
        table = sweep(small_config(geometries=[{"family": "dense"}], trials_per_cell=1))
        text = table.to_csv()
        header, row = text.split("\n")[:2]
        assert header == ",".join(COLUMNS)
        assert "\r" not in text
        value = row.split(",")[COLUMNS.index("final_infidelity")]
        assert float(value) == table.rows["final_infidelity"].iloc[0]

    def test_hidden_target(self):
        cfg = small_config(target={"scenario": "hidden", "seed": 2, "geometry": {"family": "mps", "chi": 1}},
                           geometries=[{"family": "mps"}], chi_values=[1], trials_per_cell=1,
                           optim={"max_iters": 200})
        table = sweep(cfg)
        assert table.rows["final_infidelity"].iloc[0] <= 1e-8

    @pytest.mark.parametrize("error", [
        DegenerateState("network state has zero norm"),
        MemoryError(),
        ValueError("bad shape"),
        RuntimeError("worker died"),
    ])
    def test_failure_recorded_in_row(self, monkeypatch, error):
        def broken(*args, **kwargs):
            raise error

        monkeypatch.setattr(harness, "run_trial", broken)
        table = sweep(small_config(geometries=[{"family": "mps"}]))
        assert (table.rows["converged_reason"] == f"Error:{type(error).__name__}").all()
        assert table.rows["final_infidelity"].isna().all()
        assert table.histories == [[], []]

    def test_failed_cells_keep_finished_rows(self, monkeypatch):
        real_run_trial = harness.run_trial

        def flaky(target, spec, compact, *args, **kwargs):
            if compact:
                raise MemoryError()
            return real_run_trial(target, spec, compact, *args, **kwargs)

        monkeypatch.setattr(harness, "run_trial", flaky)
        table = sweep(small_config())
        rows = table.rows
        assert rows.loc[~rows["compact"], "final_infidelity"].notna().all()
        assert (rows.loc[rows["compact"], "converged_reason"] == "Error:MemoryError").all()

    def test_timing_recorded_when_enabled(self):
        table = sweep(small_config(geometries=[{"family": "mps"}], trials_per_cell=1, record_timing=True))
        assert table.rows["wall_ms"].iloc[0] > 0


@pytest.mark.slow
class TestSweepRuns:

    def test_dense_beats_mps(self):
        cfg = config_from_dict({
            "n": 10,
            "target": {"scenario": "random", "seed": 10},
            "geometries": [{"family": "mps"}, {"family": "dense"}],
            "chi_values": [32],
            "trials_per_cell": 10,
            "base_seed": 1,
        })
        summary = report(sweep(cfg))
        best = dict(zip(summary["geometry"], summary["best_infidelity"]))
        assert best["dense"] <= best["mps"]

    def test_density_trend(self):
        cfg = config_from_dict({
            "n": 10,
            "target": {"scenario": "random", "seed": 11},
            "geometries": [{"family": f} for f in ["mps", "antenna", "balanced", "star", "dense"]],
            "chi_values": [32],
            "trials_per_cell": 10,
            "base_seed": 2,
        })
        summary = report(sweep(cfg))
        # ordered by decreasing diameter
        best = list(summary.sort_values("diameter", ascending=False, kind="stable")["best_infidelity"])
        inversions = [(a, b) for a, b in zip(best, best[1:]) if b > a]
        assert len(inversions) <= 1
        for a, b in inversions:
            assert b <= 3 * a

    def test_compact_advantage(self):
        families = ["mps", "antenna", "balanced", "star"]
        geometries = [{"family": f, "compact": c} for f in families for c in (False, True)]
        cfg = config_from_dict({
            "n": 12,
            "target": {"scenario": "hidden", "seed": 12, "geometry": {"family": "mps", "chi": 4}},
            "geometries": geometries,
            "chi_values": [4],
            "trials_per_cell": 20,
            "base_seed": 3,
        })
        table = sweep(cfg)
        for family in families:
            label = GeometrySpec(family, 12, 4).label
            rows = table.rows[table.rows["geometry"] == label]
            regular = rows[~rows["compact"]]
            compact = rows[rows["compact"]]
            assert len(regular) == len(compact) == 20
            assert lower_median(compact["final_infidelity"]) <= lower_median(regular["final_infidelity"])
            assert compact["total_elems"].iloc[0] < regular["total_elems"].iloc[0]
            assert not math.isnan(compact["final_infidelity"].max())
            assert np.isfinite(regular["final_infidelity"]).all()
