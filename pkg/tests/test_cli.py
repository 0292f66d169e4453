import json

import pytest

from levilab.cli import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    SCENARIO_DIR,
    bundled_scenarios,
    load_scenario,
    main,
)
from levilab.exceptions import ScenarioValidationError


def _write(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
    return path


def _scenario(*tasks, **extra):
    data = {
        "name": "test",
        "ambient": {"N": 2},
        "domains": {"ball": {"example": "ball", "params": {"n": 2}}},
        "tasks": list(tasks),
    }
    data.update(extra)
    return data


LEVI_TASK = {"id": "levi", "kind": "levi_pcv", "domain": "ball", "q": 0, "samples": {"kind": "boundary", "count": 5}}
BAD_CENTER_TASK = {"id": "bad", "kind": "local_max", "expr": "abs2(z1)", "center": [0, 0, 0]}


def test_list_shows_catalog_and_scenarios(capsys):
    assert main(["list"]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(["list"]) == EXIT_OK
    assert capsys.readouterr().out == first
    names = [line.split()[0] for line in first.splitlines() if line.startswith("  ")]
    assert "ex58" in names
    assert "uk" in names
    catalog = names[: names.index("ball_psh.json")]
    assert catalog == sorted(catalog)


def test_bundled_scenarios_validate():
    names = bundled_scenarios()
    assert "ex58.json" in names
    for name in names:
        load_scenario(SCENARIO_DIR / name)


@pytest.mark.parametrize(
    "data,field",
    [
        ("{not json", None),
        (_scenario({"kind": "no_such_task"}), "tasks.0"),
        (_scenario(dict(LEVI_TASK, domain="missing")), None),
        (_scenario(LEVI_TASK, exprs={"bad": "z1 + * z2"}), "exprs.bad"),
        (_scenario(LEVI_TASK, domains={"ball": {"example": "ex58"}}), "domains.ball"),
        ({"name": "empty", "ambient": {"N": 2}, "tasks": []}, "tasks"),
    ],
)
def test_malformed_scenarios_exit_with_validation_code(tmp_path, data, field):
    path = _write(tmp_path, data)
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_VALIDATION
    if field is not None and field.startswith("tasks"):
        with pytest.raises(ScenarioValidationError) as err:
            load_scenario(path)
        assert err.value.field.startswith(field)


def test_missing_file_is_a_validation_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == EXIT_VALIDATION


def test_bad_thread_count(tmp_path):
    path = _write(tmp_path, _scenario(LEVI_TASK))
    assert main(["run", str(path), "--threads", "0"]) == EXIT_VALIDATION


def test_failing_task_is_isolated(tmp_path):
    path = _write(tmp_path, _scenario(BAD_CENTER_TASK, LEVI_TASK))
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == EXIT_RUNTIME
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "task_errors"
    bad, levi = report["tasks"]
    assert bad["status"] == "error"
    assert bad["error"]["type"] == "DimensionMismatchError"
    assert levi["status"] == "ok"
    assert levi["result"]["counts"]["certified_yes"] == 5
    assert "[error] bad" in (out / "report.txt").read_text()


def test_fail_fast_skips_remaining_tasks(tmp_path):
    path = _write(tmp_path, _scenario(BAD_CENTER_TASK, LEVI_TASK, fail_fast=True))
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == EXIT_RUNTIME
    statuses = [t["status"] for t in json.loads((out / "report.json").read_text())["tasks"]]
    assert statuses == ["error", "skipped"]


def test_reports_are_byte_identical_across_threads(tmp_path):
    reports = []
    for threads in ("1", "4", "1"):
        out = tmp_path / f"out{len(reports)}"
        assert main(["run", str(SCENARIO_DIR / "ex58.json"), "--threads", threads, "--out", str(out)]) == EXIT_OK
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1] == reports[2]


def test_seed_override_is_reported(tmp_path):
    path = _write(tmp_path, _scenario(LEVI_TASK))
    out = tmp_path / "out"
    assert main(["run", str(path), "--seed", "7", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "report.json").read_text())["seed"] == 7


def test_trace_writes_csv(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(SCENARIO_DIR / "leviflat.json"), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    leaf = next(t for t in report["tasks"] if t["id"] == "leaf")
    assert leaf["result"]["csv"] == "leaf_leaf.csv"
    assert (out / "leaf_leaf.csv").exists()
    assert leaf["result"]["max_residual"] <= 1e-8


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIO_DIR.glob("*.json")))
def test_bundled_scenarios_run(tmp_path, name):
    assert main(["run", str(SCENARIO_DIR / name), "--out", str(tmp_path)]) == EXIT_OK
