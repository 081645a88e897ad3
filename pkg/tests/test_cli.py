"""Command line round trips: config parsing, exit codes, and the full
synth -> discretize -> learn -> score -> backtest -> report pipeline."""

import csv
import hashlib
import json

import numpy as np
import pytest

from rulescreen.cli import (
    RunConfig,
    default_config_text,
    effective_workers,
    parse_config,
    parse_synth_spec,
    run,
)
from rulescreen.errors import ConfigError, InconsistentSpec
from rulescreen.synth import business_day_grid


# ---------------------------------------------------------------------------
# config file parsing


def write_cfg(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_parse_config_defaults_when_no_file():
    assert parse_config(None) == RunConfig()


def test_parse_config_reads_values_and_ignores_comments(tmp_path):
    path = write_cfg(tmp_path, """
# rule search knobs
m = 5          # modalities
alpha = 0.10

cp_max = 3
eta = auto
epsilon = 0.02
learning_years = 2012,2013
""")
    cfg = parse_config(path)
    assert cfg.m == 5
    assert cfg.alpha == 0.10
    assert cfg.cp_max == 3
    assert cfg.eta is None
    assert cfg.epsilon == 0.02
    assert cfg.learning_years == "2012,2013"


def test_parse_config_unknown_key_is_named(tmp_path):
    path = write_cfg(tmp_path, "m = 5\nbogus_knob = 1\n")
    with pytest.raises(ConfigError, match="bogus_knob"):
        parse_config(path)


def test_parse_config_reports_line_number(tmp_path):
    path = write_cfg(tmp_path, "m = 5\n\nnot a key value pair\n")
    with pytest.raises(ConfigError, match=":3:"):
        parse_config(path)


def test_parse_config_bad_value(tmp_path):
    path = write_cfg(tmp_path, "m = five\n")
    with pytest.raises(ConfigError, match="five"):
        parse_config(path)


@pytest.mark.parametrize("line", [
    "worker_count = 0",
    "horizon_days = 0",
    "learn_fraction = 1.0",
    "learn_fraction = 0.0",
    "learning_years = twenty12",
])
def test_parse_config_rejects_out_of_range(tmp_path, line):
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path, line + "\n"))


def test_default_config_text_round_trips(tmp_path):
    path = write_cfg(tmp_path, default_config_text())
    assert parse_config(path) == RunConfig()


def test_effective_workers_env_override(tmp_path, monkeypatch):
    cfg = RunConfig(worker_count=2)
    monkeypatch.delenv("RULESCREEN_WORKERS", raising=False)
    assert effective_workers(cfg) == 2
    monkeypatch.setenv("RULESCREEN_WORKERS", "6")
    assert effective_workers(cfg) == 6
    monkeypatch.setenv("RULESCREEN_WORKERS", "zero")
    with pytest.raises(ConfigError):
        effective_workers(cfg)
    monkeypatch.setenv("RULESCREEN_WORKERS", "0")
    with pytest.raises(ConfigError):
        effective_workers(cfg)


# ---------------------------------------------------------------------------
# synth spec JSON


def test_parse_synth_spec_round_trip():
    blob = {
        "n_stocks": 5,
        "n_dates": 100,
        "d": 2,
        "m": 3,
        "planted": [
            {"intervals": [{"feature_index": 0, "lo": 0, "hi": 1}],
             "effect": 0.04},
        ],
        "regime_shift": {
            "date": "2010-06-01",
            "replacement": [
                {"intervals": [{"feature_index": 0, "lo": 0, "hi": 1}],
                 "effect": -0.04},
            ],
        },
        "seed": 3,
    }
    spec = parse_synth_spec(blob)
    assert spec.n_stocks == 5
    assert spec.planted[0].effect == 0.04
    assert spec.planted[0].condition.intervals[0].hi == 1
    assert spec.regime_shift[0] == "2010-06-01"
    assert spec.regime_shift[1][0].effect == -0.04


def test_parse_synth_spec_rejects_unknown_keys():
    with pytest.raises(InconsistentSpec, match="n_stonks"):
        parse_synth_spec({"n_stonks": 5, "n_dates": 10, "d": 1, "m": 2})


def test_parse_synth_spec_names_missing_interval_key():
    blob = {
        "n_stocks": 5,
        "n_dates": 100,
        "d": 2,
        "m": 3,
        "planted": [
            {"intervals": [{"feature_id": 0, "lo": 0, "hi": 1}], "effect": 0.04},
        ],
    }
    with pytest.raises(InconsistentSpec, match="feature_index"):
        parse_synth_spec(blob)


# ---------------------------------------------------------------------------
# exit codes


def test_print_config_exits_zero(capsys):
    assert run(["--print-config"]) == 0
    out = capsys.readouterr().out
    assert "m = 10" in out
    assert "eta = auto" in out


def test_no_subcommand_exits_one():
    assert run([]) == 1


def test_unknown_subcommand_exits_one():
    assert run(["frobnicate"]) == 1


def test_bad_config_key_exits_one(tmp_path, caplog):
    cfg = write_cfg(tmp_path, "bogus_knob = 1\nfeatures = x\n")
    assert run(["backtest", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "bogus_knob" in caplog.text


def test_missing_input_file_exits_two(tmp_path):
    code = run([
        "learn",
        "--panel", str(tmp_path / "nope.csv"),
        "--returns", str(tmp_path / "nope2.csv"),
        "--out", str(tmp_path / "rules.json"),
    ])
    assert code == 2


def test_backtest_missing_prices_exits_two(tmp_path, caplog):
    for name in ("features", "returns", "universe"):
        (tmp_path / f"{name}.csv").write_text("stub\n")
    cfg = write_cfg(tmp_path, "\n".join(
        f"{k} = {tmp_path / (k + '.csv')}"
        for k in ("features", "returns", "universe", "prices")
    ) + "\n")
    assert run(["backtest", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "prices" in caplog.text


# ---------------------------------------------------------------------------
# full pipeline


SPEC_BLOB = {
    "n_stocks": 12,
    "n_dates": 1008,
    "d": 3,
    "m": 3,
    "planted": [
        {"intervals": [{"feature_index": 0, "lo": 0, "hi": 0}], "effect": 0.06},
        {"intervals": [{"feature_index": 1, "lo": 2, "hi": 2}], "effect": -0.06},
    ],
    "noise_sigma": 0.02,
    "seed": 11,
    "horizon_days": 63,
    "sector_feature": 0,
}

CFG_TEXT = """
m = 3
alpha = 0.05
c_min = 0.05
c_max = 0.7
cp_max = 2
M = 20
learn_fraction = 0.75
horizon_days = 63
initial_train_years = 3
worker_count = 1
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run every subcommand once into a shared directory tree."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(SPEC_BLOB))
    assert run(["synth", "--spec", str(spec_path), "--out", str(data)]) == 0

    cfg_path = root / "run.cfg"
    lines = [CFG_TEXT]
    for key in ("features", "returns", "universe", "prices"):
        lines.append(f"{key} = {data / (key + '.csv')}")
    cfg_path.write_text("\n".join(lines) + "\n")

    disc_path = root / "disc" / "discretizer.json"
    assert run([
        "discretize",
        "--features", str(data / "features.csv"),
        "--returns", str(data / "returns.csv"),
        "--config", str(cfg_path),
        "--out", str(disc_path),
    ]) == 0

    learn_dir = root / "learn"
    assert run([
        "learn",
        "--panel", str(data / "features.csv"),
        "--returns", str(data / "returns.csv"),
        "--config", str(cfg_path),
        "--out", str(learn_dir / "rules.json"),
    ]) == 0

    asof = str(business_day_grid("2010-01-04", SPEC_BLOB["n_dates"])[-1])
    scores_path = root / "scores" / "scores.csv"
    assert run([
        "score",
        "--rules", str(learn_dir / "rules.json"),
        "--state", str(learn_dir / "state.json"),
        "--discretizer", str(learn_dir / "discretizer.json"),
        "--panel", str(data / "features.csv"),
        "--asof", asof,
        "--out", str(scores_path),
    ]) == 0

    bt_dir = root / "bt"
    assert run(["backtest", "--config", str(cfg_path), "--out", str(bt_dir)]) == 0

    report_path = root / "report.md"
    assert run(["report", "--dir", str(bt_dir), "--out", str(report_path)]) == 0

    return {
        "root": root, "data": data, "cfg": cfg_path, "learn": learn_dir,
        "scores": scores_path, "bt": bt_dir, "report": report_path,
        "asof": asof,
    }


def test_synth_writes_all_inputs(pipeline):
    names = {p.name for p in pipeline["data"].iterdir()}
    assert names == {"features.csv", "returns.csv", "universe.csv",
                     "prices.csv", "manifest.json"}


def test_learn_writes_sibling_artifacts(pipeline):
    names = {p.name for p in pipeline["learn"].iterdir()}
    assert names == {"rules.json", "learn-report.csv", "discretizer.json",
                     "state.json", "manifest.json"}
    rules = json.loads((pipeline["learn"] / "rules.json").read_text())
    assert rules and all("prediction" in entry for entry in rules)
    state = json.loads((pipeline["learn"] / "state.json").read_text())
    assert len(state["weights"]) == len(rules)


def test_manifest_hashes_inputs(pipeline):
    blob = json.loads((pipeline["learn"] / "manifest.json").read_text())
    assert blob["subcommand"] == "learn"
    assert blob["config"]["m"] == 3
    features = str(pipeline["data"] / "features.csv")
    digest = hashlib.sha256(
        (pipeline["data"] / "features.csv").read_bytes()).hexdigest()
    assert blob["inputs"][features] == digest
    assert "rulescreen" in blob["versions"]


def test_scores_schema(pipeline):
    with open(pipeline["scores"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["date", "stock_id", "y_hat", "score"]
    assert len(rows) == 1 + SPEC_BLOB["n_stocks"]
    for row in rows[1:]:
        assert row[0] == pipeline["asof"]
        float(row[2])
        assert int(row[3]) in (-1, 0, 1)


def test_backtest_writes_report_files(pipeline):
    names = {p.name for p in pipeline["bt"].iterdir()}
    assert names == {"levels.csv", "kpis.json", "calendar.csv",
                     "learning-y.csv", "manifest.json"}
    kpis = json.loads((pipeline["bt"] / "kpis.json").read_text())
    assert "Benchmark" in kpis
    assert "Positive ML" in kpis
    for report in kpis.values():
        assert "ann_performance" in report
        assert "information_ratio" in report


def test_levels_start_at_base(pipeline):
    with open(pipeline["bt"] / "levels.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "date"
    assert "Benchmark" in rows[0]
    for value in rows[1][1:]:
        assert float(value) == pytest.approx(100.0)


def test_report_renders_markdown(pipeline):
    text = pipeline["report"].read_text()
    assert text.startswith("# Backtest report")
    assert "| Benchmark |" in text
    assert "## Calendar-year excess" in text


def test_learn_worker_count_does_not_change_outputs(pipeline, tmp_path,
                                                    monkeypatch):
    data, cfg = pipeline["data"], pipeline["cfg"]

    def learn_into(directory, workers):
        monkeypatch.setenv("RULESCREEN_WORKERS", str(workers))
        assert run([
            "learn",
            "--panel", str(data / "features.csv"),
            "--returns", str(data / "returns.csv"),
            "--config", str(cfg),
            "--out", str(directory / "rules.json"),
        ]) == 0

    learn_into(tmp_path / "w1", 1)
    learn_into(tmp_path / "w4", 4)
    for name in ("rules.json", "state.json", "discretizer.json"):
        a = (tmp_path / "w1" / name).read_bytes()
        b = (tmp_path / "w4" / name).read_bytes()
        assert a == b, name
