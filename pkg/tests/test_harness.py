import dataclasses
import json
import os

import pytest

from semiverified.errors import ConfigError
from semiverified.harness import (
    REPORT_COLUMNS,
    ExperimentConfig,
    ReportIOError,
    TrialReport,
    aggregate,
    emit_report,
    grid_points,
    load_sweep,
    oracle_check,
    read_report,
    render_report,
    run_sweep,
    run_trial,
    run_trials,
    validate,
)


def make(**over):
    base = {
        "sim": {"n": 60, "r0": 2, "alpha": 0.4, "m_per_tuple": 1000},
        "recovery": {"epsilon": 0.1, "delta": 0.1},
        "algorithm": "efficient",
        "trials": 3,
        "base_seed": 5,
    }
    for k, v in over.items():
        if isinstance(v, dict):
            base[k] = {**base[k], **v}
        else:
            base[k] = v
    return ExperimentConfig.from_dict(base)


def strip_time(report: TrialReport) -> dict:
    d = report.to_dict()
    d.pop("wall_time_ms")
    return d


# --- config ---------------------------------------------------------------


def test_config_round_trip():
    cfg = make()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.recovery.r0 == 2


@pytest.mark.parametrize("data", [
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5}, "recovery": {"epsilon": 0.1, "delta": 0.1}, "typo": 1},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5, "alhpa": 1}, "recovery": {"epsilon": 0.1, "delta": 0.1}},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5}, "recovery": {"epsilon": 0.1}},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5}, "recovery": {"epsilon": 0.1, "delta": 0.1}, "trials": 0},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5}, "recovery": {"epsilon": 0.1, "delta": 0.1}, "algorithm": "magic"},
    {"sim": {"n": 10, "r0": 2, "alpha": 2}, "recovery": {"epsilon": 0.1, "delta": 0.1}},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5}, "recovery": {"epsilon": 0.1, "delta": 0.1, "r0": 3}},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5, "adversary": "bogus"}, "recovery": {"epsilon": 0.1, "delta": 0.1}},
    {"sim": {"n": 10, "r0": 2, "alpha": 0.5}, "recovery": {"epsilon": 0.1, "delta": 0.1}, "base_seed": -1},
    [],
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


@pytest.mark.parametrize("over", [
    dict(algorithm="r2", sim={"r0": 3}),
    dict(algorithm="basic", sim={"n": 500}),
    dict(algorithm="vc", sim={"n": 30}),
    dict(sim={"alpha": 0.3, "adversary": "uniform_cover"}),
])
def test_validate_preconditions(over):
    with pytest.raises(ConfigError):
        validate(make(**over))


# --- trials ---------------------------------------------------------------


def test_trial_is_deterministic():
    cfg = make()
    assert strip_time(run_trial(cfg, 1)) == strip_time(run_trial(cfg, 1))
    assert run_trial(cfg, 1).seed != run_trial(cfg, 2).seed


@pytest.mark.parametrize("algorithm", ["r2", "basic", "efficient", "vc", "majority"])
def test_alpha_one_is_exact_for_every_algorithm(algorithm):
    cfg = make(algorithm=algorithm, sim={"n": 14, "alpha": 1.0, "m_per_tuple": 10})
    validate(cfg)
    report = run_trial(cfg, 0)
    assert report.error_fraction == 0
    assert report.fail_events == []


def test_report_fields_are_sane():
    report = run_trial(make(), 0)
    assert 0 <= report.error_fraction <= 1
    assert min(report.verified_used, report.phases, report.soundness_breaches) >= 0
    assert report.config_echo == make().to_dict()


def test_failures_reach_the_report():
    cfg = make(sim={"alpha": 0.2, "adversary": "anti_planted", "m_per_tuple": 2000}, trials=2)
    reports = run_trials(cfg)
    assert all(r.failed for r in reports)
    row = aggregate(cfg, reports)
    assert row["fail_rate"] == 1.0 and row["trials"] == 2


def test_parallel_matches_serial():
    cfg = make(trials=4)
    serial = [strip_time(r) for r in run_trials(cfg, jobs=1)]
    parallel = [strip_time(r) for r in run_trials(cfg, jobs=2)]
    assert serial == parallel


def test_aggregate_columns_in_order():
    cfg = make()
    row = aggregate(cfg, run_trials(cfg))
    assert tuple(row) == REPORT_COLUMNS
    assert row["success_rate"] == 1.0


# --- sweeps ---------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ConfigError):
        grid_points({})
    with pytest.raises(ConfigError):
        grid_points({"delta": [0.1]})
    with pytest.raises(ConfigError):
        grid_points({"alpha": []})
    with pytest.raises(ConfigError):
        grid_points({"alpha": "0.3"})
    assert grid_points({"n": [1, 2], "alpha": [0.5]}) == [{"n": 1, "alpha": 0.5}, {"n": 2, "alpha": 0.5}]


def test_sweep_records_bad_points_and_continues():
    cfg = make(trials=2)
    rows = run_sweep(cfg, {"alpha": [0.4, 0.3], "adversary": ["uniform_cover", "random_independent"]})
    assert len(rows) == 4
    bad = rows[0]
    assert bad["trials"] == 0 and bad["fail_rate"] == 1.0 and bad["adversary"] == "uniform_cover"
    assert rows[1]["trials"] == 2 and rows[1]["success_rate"] == 1.0


def test_sweep_is_reproducible():
    cfg = make(trials=2)
    grid = {"n": [40, 80], "epsilon": [0.1, 0.2]}

    def no_time(rows):
        return [{k: v for k, v in r.items() if k != "median_wall_ms"} for r in rows]

    assert no_time(run_sweep(cfg, grid)) == no_time(run_sweep(cfg, grid))


def test_load_sweep():
    template, grid = load_sweep({"template": make().to_dict(), "grid": {"alpha": [0.3]}})
    assert template == make() and grid == {"alpha": [0.3]}
    with pytest.raises(ConfigError):
        load_sweep({"template": make().to_dict(), "grid": {}})
    with pytest.raises(ConfigError):
        load_sweep({"template": make().to_dict(), "grid": {"alpha": [0.3]}, "extra": 1})


# --- oracle check ---------------------------------------------------------


@pytest.mark.parametrize("kind", ["simulated", "sound"])
def test_oracle_check_rows(kind):
    cfg = make(sim={"n": 12, "alpha": 0.35, "m_per_tuple": 2000}, recovery={"epsilon": 0.25}, trials=3)
    rows = oracle_check(cfg, instance_kind=kind)
    assert len(rows) == 3
    assert all(r["passed"] for r in rows)
    assert all(r["planted_in_solutions"] for r in rows if r["soundness_breaches"] == 0)


def test_oracle_check_rejects_large_n():
    with pytest.raises(ConfigError):
        oracle_check(make(sim={"n": 40}))


# --- reports --------------------------------------------------------------


def test_one_row_csv(tmp_path):
    cfg = make(trials=1)
    rows = [aggregate(cfg, run_trials(cfg))]
    path = tmp_path / "r.csv"
    emit_report(rows, "csv", str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(REPORT_COLUMNS)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_round_trip(tmp_path, fmt):
    cfg = make(trials=2)
    rows = run_sweep(cfg, {"alpha": [0.4, 0.3], "adversary": ["uniform_cover"]})
    path = str(tmp_path / f"r.{fmt}")
    emit_report(rows, fmt, path)
    back = read_report(path)
    assert back == rows
    if fmt == "json":
        assert all(list(r) == list(REPORT_COLUMNS) for r in json.loads(open(path).read()))


def test_emit_overwrites_atomically(tmp_path):
    path = tmp_path / "r.json"
    path.write_text("old")
    emit_report([{"a": 1}], "json", str(path))
    assert json.loads(path.read_text()) == [{"a": 1}]
    assert os.listdir(tmp_path) == ["r.json"]


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], "csv", str(tmp_path / "x.csv"))
    with pytest.raises(ValueError):
        render_report([{"a": 1}], "xml")
    with pytest.raises(ReportIOError, match="missing"):
        emit_report([{"a": 1}], "csv", str(tmp_path / "missing" / "x.csv"))


def test_trial_report_round_trips_through_json():
    report = run_trial(make(), 0)
    back = TrialReport(**json.loads(json.dumps(report.to_dict())))
    assert dataclasses.asdict(back) == report.to_dict()
