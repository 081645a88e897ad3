"""Command-line entry point.

One binary, six subcommands (synth, discretize, learn, score, backtest,
report). Configuration is a flat `key = value` text file whose defaults print
with --print-config; every run drops a manifest.json next to its outputs with
the effective config, sha256 of each input file, and library versions, so a
run can be reproduced byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .aggregate import AggregationState, default_eta, init_state, predict_many, score_many, update
from .backtest import (
    BENCHMARK,
    POSITIVE,
    WalkForwardConfig,
    learning_y,
    load_prices_csv,
    load_universe_csv,
    run_study,
    write_calendar_csv,
    write_kpis_json,
    write_learning_y_csv,
    write_levels_csv,
)
from .errors import (
    ConfigError,
    DataError,
    EmptyPanel,
    InconsistentSpec,
    MissingPriceData,
    ValidationError,
)
from .panel import (
    Discretizer,
    apply_discretizer,
    attach_returns,
    fit_discretizer,
    load_features_csv,
    load_returns_csv,
    split,
    write_features_csv,
    write_returns_csv,
)
from .rulegen import learn as learn_rules
from .rules import Condition, Interval, RuleSet, SearchParams
from .synth import (
    PlantedRule,
    SynthSpec,
    generate,
    write_prices_csv,
    write_universe_csv,
)

logger = logging.getLogger(__name__)

WORKERS_ENV = "RULESCREEN_WORKERS"


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    # rule search
    m: int = 10
    alpha: float = 0.05
    c_min: float = 0.05
    c_max: float = 0.5
    cp_max: int = 2
    M: int = 50
    z_kind: str = "gaussian"
    # aggregation
    eta: Optional[float] = None  # None = auto
    loss_kind: str = "squared"
    loss_clip: float = 1.0
    epsilon: Optional[float] = None  # None = auto
    learn_fraction: float = 0.25
    # study layout
    horizon_days: int = 63
    initial_train_years: int = 3
    best_in_class_x: float = 0.30
    score_lag_days: int = 4
    periods_per_year: float = 252.0
    start_date: str = ""
    end_date: str = ""
    learning_years: str = "all"
    # inputs
    features: str = ""
    returns: str = ""
    universe: str = ""
    prices: str = ""
    # plumbing
    worker_count: int = 1
    seed: int = 0

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = "auto" if v is None else v
        return out


_INT_KEYS = {
    "m",
    "cp_max",
    "M",
    "horizon_days",
    "initial_train_years",
    "score_lag_days",
    "worker_count",
    "seed",
}
_FLOAT_KEYS = {
    "alpha",
    "c_min",
    "c_max",
    "loss_clip",
    "learn_fraction",
    "best_in_class_x",
    "periods_per_year",
}
_AUTO_FLOAT_KEYS = {"eta", "epsilon"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _AUTO_FLOAT_KEYS:
            return None if raw == "auto" else float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {key!r}") from None
    return raw


def parse_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    known = {f.name for f in fields(RunConfig)}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = text.split("=", 1)
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            cfg = replace(cfg, **{key: _convert(key, raw)})
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig) -> None:
    cfg_to_search_params(cfg)  # raises on bad rule-search knobs
    if cfg.worker_count < 1:
        raise ConfigError(f"worker_count must be >= 1, got {cfg.worker_count}")
    if cfg.horizon_days < 1:
        raise ConfigError(f"horizon_days must be >= 1, got {cfg.horizon_days}")
    if not 0.0 < cfg.learn_fraction < 1.0:
        raise ConfigError(
            f"learn_fraction must lie in (0,1), got {cfg.learn_fraction}"
        )
    if cfg.learning_years not in ("all", "none"):
        try:
            [int(part) for part in cfg.learning_years.split(",")]
        except ValueError:
            raise ConfigError(
                f"learning_years must be 'all', 'none' or comma-separated "
                f"years, got {cfg.learning_years!r}"
            ) from None


def cfg_to_search_params(cfg: RunConfig) -> SearchParams:
    return SearchParams(
        m=cfg.m,
        alpha=cfg.alpha,
        c_min=cfg.c_min,
        c_max=cfg.c_max,
        cp_max=cfg.cp_max,
        M=cfg.M,
        z_kind=cfg.z_kind,
    )


def default_config_text() -> str:
    lines = []
    for key, value in RunConfig().as_dict().items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def effective_workers(cfg: RunConfig) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return cfg.worker_count
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers


# ---------------------------------------------------------------------------
# manifests


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(directory, subcommand: str, config: Dict[str, object], inputs) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "versions": {
            "rulescreen": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
        },
    }
    path = Path(directory) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# shared pieces


def _load_labeled_panel(features_path: str, returns_path: str):
    panel, specs = load_features_csv(features_path)
    panel = attach_returns(panel, load_returns_csv(returns_path))
    return panel, specs


def _take_rows(panel, mask):
    return type(panel)(
        dates=panel.dates[mask],
        stock_ids=panel.stock_ids[mask],
        columns=[c[mask] for c in panel.columns],
        y=panel.y[mask],
    )


def _fit_state(parts, ruleset, cfg: RunConfig):
    """Replay the post-design observations through the weight update and fix
    the score dead zone; mirrors one learning step of the study engine."""
    eta = cfg.eta if cfg.eta is not None else default_eta(
        ruleset.R, max(1, parts.aggregate.n)
    )
    state = init_state(
        ruleset.R, eta, loss_kind=cfg.loss_kind, loss_clip=cfg.loss_clip
    )
    A = ruleset.activation_matrix(parts.aggregate.x)
    for i in range(parts.aggregate.n):
        state = update(
            state,
            ruleset,
            parts.aggregate.x[i],
            float(parts.aggregate.y[i]),
            active=A[i],
        )
    preds = predict_many(state, ruleset, parts.aggregate.x, activation=A)
    epsilon = cfg.epsilon if cfg.epsilon is not None else float(np.std(preds))
    return replace(state, epsilon=epsilon)


def write_scores_csv(path, dates, stock_ids, y_hat, score) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "stock_id", "y_hat", "score"])
        for i in range(len(stock_ids)):
            writer.writerow(
                [str(dates[i]), str(stock_ids[i]), repr(float(y_hat[i])), int(score[i])]
            )


def _cfg_to_walk(cfg: RunConfig) -> WalkForwardConfig:
    return WalkForwardConfig(
        initial_train_years=cfg.initial_train_years,
        horizon_days=cfg.horizon_days,
        learn_fraction=cfg.learn_fraction,
        m=cfg.m,
        alpha=cfg.alpha,
        c_min=cfg.c_min,
        c_max=cfg.c_max,
        cp_max=cfg.cp_max,
        top_m=cfg.M,
        z_kind=cfg.z_kind,
        loss_kind=cfg.loss_kind,
        loss_clip=cfg.loss_clip,
        eta=cfg.eta,
        epsilon=cfg.epsilon,
        bic_x=cfg.best_in_class_x,
        score_lag_days=cfg.score_lag_days,
        periods_per_year=cfg.periods_per_year,
        workers=effective_workers(cfg),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    with open(args.spec) as fh:
        blob = json.load(fh)
    spec = parse_synth_spec(blob)
    data = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_features_csv(out / "features.csv", data.panel, data.specs)
    write_returns_csv(out / "returns.csv", data.panel)
    write_universe_csv(out / "universe.csv", data.universe)
    write_prices_csv(
        out / "prices.csv", data.price_dates, data.price_stock_ids, data.price_returns
    )
    write_manifest(out, "synth", {"spec": blob}, [args.spec])
    logger.info("synth: wrote %d panel rows to %s", data.panel.n, out)
    return 0


def parse_synth_spec(blob: Dict) -> SynthSpec:
    known = {f.name for f in fields(SynthSpec)}
    unknown = set(blob) - known
    if unknown:
        raise InconsistentSpec(f"unknown synth spec keys {sorted(unknown)}")

    def parse_rule(entry) -> PlantedRule:
        try:
            intervals = tuple(
                Interval(int(iv["feature_index"]), int(iv["lo"]), int(iv["hi"]))
                for iv in entry["intervals"]
            )
            effect = float(entry["effect"])
        except KeyError as exc:
            raise InconsistentSpec(f"planted rule missing key {exc}") from None
        return PlantedRule(condition=Condition(intervals), effect=effect)

    kwargs = dict(blob)
    kwargs["planted"] = [parse_rule(e) for e in blob.get("planted", [])]
    shift = blob.get("regime_shift")
    if shift is not None:
        kwargs["regime_shift"] = (
            str(shift["date"]),
            [parse_rule(e) for e in shift.get("replacement", [])],
        )
    try:
        return SynthSpec(**kwargs)
    except TypeError as exc:
        raise InconsistentSpec(f"bad synth spec: {exc}") from None


def cmd_discretize(args) -> int:
    cfg = parse_config(args.config)
    panel, specs = load_features_csv(args.features)
    if args.returns:
        panel = attach_returns(panel, load_returns_csv(args.returns))
        keep = np.isfinite(panel.y)
        if not keep.any():
            raise EmptyPanel("no labeled rows to fit on")
        panel = _take_rows(panel, keep)
    disc = fit_discretizer(panel, specs, cfg.m)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(disc.to_json() + "\n")
    inputs = [args.features] + ([args.returns] if args.returns else [])
    if args.config:
        inputs.append(args.config)
    write_manifest(out.parent, "discretize", cfg.as_dict(), inputs)
    return 0


def cmd_learn(args) -> int:
    cfg = parse_config(args.config)
    panel, specs = _load_labeled_panel(args.panel, args.returns)
    keep = np.isfinite(panel.y)
    if not keep.any():
        raise EmptyPanel("returns attach to no feature rows")
    labeled = _take_rows(panel, keep)
    disc = fit_discretizer(labeled, specs, cfg.m)
    codes = apply_discretizer(labeled, disc)
    if codes.n < 2:
        raise EmptyPanel(f"need at least 2 labeled rows, got {codes.n}")
    n_design = max(1, min(codes.n - 1, int(math.floor(cfg.learn_fraction * codes.n))))
    parts = split(codes, n_design)
    ruleset, report = learn_rules(
        parts.learn,
        cfg_to_search_params(cfg),
        learned_at=codes.dates[-1],
        workers=effective_workers(cfg),
    )
    state = _fit_state(parts, ruleset, cfg)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(ruleset.to_json() + "\n")
    report.to_csv(out.parent / "learn-report.csv")
    (out.parent / "discretizer.json").write_text(disc.to_json() + "\n")
    (out.parent / "state.json").write_text(state.to_json() + "\n")
    inputs = [args.panel, args.returns] + ([args.config] if args.config else [])
    write_manifest(out.parent, "learn", cfg.as_dict(), inputs)
    logger.info(
        "learn: %d rules (%d design rows, %d replay rows)",
        ruleset.R,
        parts.learn.n,
        parts.aggregate.n,
    )
    return 0


def cmd_score(args) -> int:
    disc = Discretizer.from_json(Path(args.discretizer).read_text())
    feature_ids = [s.feature_id for s in disc.specs]
    n_codes = [disc.n_codes(fid) for fid in feature_ids]
    ruleset = RuleSet.from_json(Path(args.rules).read_text(), feature_ids, n_codes)
    state = AggregationState.from_json(Path(args.state).read_text())
    if state.n_rules != ruleset.R:
        raise InconsistentSpec(
            f"state has {state.n_rules} weights for {ruleset.R} rules"
        )
    panel, specs = load_features_csv(args.panel, specs=disc.specs)
    asof = np.datetime64(args.asof, "D")
    keep = panel.dates == asof
    if not keep.any():
        raise EmptyPanel(f"no feature rows dated {asof}")
    codes = apply_discretizer(_take_rows(panel, keep), disc)
    y_hat = predict_many(state, ruleset, codes.x)
    ternary = score_many(y_hat, state.epsilon)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores_csv(out, codes.dates, codes.stock_ids, y_hat, ternary)
    write_manifest(
        out.parent,
        "score",
        {"asof": str(asof)},
        [args.rules, args.state, args.discretizer, args.panel],
    )
    return 0


def cmd_backtest(args) -> int:
    cfg = parse_config(args.config)
    for key in ("features", "returns", "universe", "prices"):
        if not getattr(cfg, key):
            raise ConfigError(f"backtest requires config key {key!r}")
    if not os.path.exists(cfg.prices):
        raise MissingPriceData(f"{cfg.prices} not found")
    panel, specs = _load_labeled_panel(cfg.features, cfg.returns)
    universe = load_universe_csv(cfg.universe)
    prices = load_prices_csv(cfg.prices)

    if cfg.start_date or cfg.end_date:
        lo = np.datetime64(cfg.start_date, "D") if cfg.start_date else prices.dates[0]
        hi = np.datetime64(cfg.end_date, "D") if cfg.end_date else prices.dates[-1]
        dmask = (prices.dates >= lo) & (prices.dates <= hi)
        prices = type(prices)(
            dates=prices.dates[dmask],
            stock_ids=prices.stock_ids,
            returns=prices.returns[dmask],
        )
        panel = _take_rows(panel, (panel.dates >= lo) & (panel.dates <= hi))
        universe = type(universe)(
            {d: s for d, s in universe.snapshots.items() if lo <= d <= hi}
        )

    wcfg = _cfg_to_walk(cfg)
    result = run_study(panel, specs, universe, prices, wcfg)

    if cfg.learning_years == "none":
        frozen_years: List[int] = []
    elif cfg.learning_years == "all":
        frozen_years = [rec.year for rec in result.learnings]
    else:
        frozen_years = [int(p) for p in cfg.learning_years.split(",")]
    frozen_series = []
    for year in frozen_years:
        rep = learning_y(panel, specs, universe, prices, wcfg, year)
        frozen_series.append(rep.series)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_levels_csv(out / "levels.csv", result.series)
    write_kpis_json(out / "kpis.json", result.reports)
    write_calendar_csv(out / "calendar.csv", result.reports)
    write_learning_y_csv(
        out / "learning-y.csv",
        result.series[POSITIVE],
        result.series[BENCHMARK],
        frozen_series,
    )
    inputs = [cfg.features, cfg.returns, cfg.universe, cfg.prices]
    if args.config:
        inputs.append(args.config)
    write_manifest(out, "backtest", cfg.as_dict(), inputs)
    logger.info("backtest: %d reviews, %d learnings", len(result.reviews), len(result.learnings))
    return 0


def cmd_report(args) -> int:
    directory = Path(args.dir)
    kpi_path = directory / "kpis.json"
    if not kpi_path.exists():
        raise EmptyPanel(f"{kpi_path} not found; run backtest first")
    blob = json.loads(kpi_path.read_text())
    lines = ["# Backtest report", ""]
    header = ["strategy", "ann_perf", "ann_vol", "sharpe", "max_dd", "IR", "alpha"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for name in sorted(blob):
        k = blob[name]
        lines.append(
            "| {name} | {ann_performance:.2%} | {ann_volatility:.2%} | "
            "{sharpe:.2f} | {max_drawdown:.2%} | {information_ratio:.2f} | "
            "{ann_alpha:.2%} |".format(name=name, **k)
        )
    cal_path = directory / "calendar.csv"
    if cal_path.exists():
        lines += ["", "## Calendar-year excess vs benchmark", ""]
        with open(cal_path, newline="") as fh:
            for row in csv.reader(fh):
                if row and row[0] == "year":
                    lines.append("| " + " | ".join(row) + " |")
                    lines.append("|" + "---|" * len(row))
                else:
                    cells = [row[0]] + [f"{float(v):.2%}" for v in row[1:]]
                    lines.append("| " + " | ".join(cells) + " |")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulescreen",
        description="Rule-based stock screening: discretize, learn, score, backtest.",
    )
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the default configuration and exit",
    )
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("discretize", help="fit quantile bins on a feature panel")
    p.add_argument("--features", required=True)
    p.add_argument("--returns", default=None, help="restrict the fit to labeled rows")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="discretizer JSON path")

    p = sub.add_parser("learn", help="design rules on a labeled panel")
    p.add_argument("--panel", required=True, help="features.csv")
    p.add_argument("--returns", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="rules.json path")

    p = sub.add_parser("score", help="score one cross-section with saved rules")
    p.add_argument("--rules", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--discretizer", required=True)
    p.add_argument("--panel", required=True, help="features.csv")
    p.add_argument("--asof", required=True, help="ISO date to score")
    p.add_argument("--out", required=True, help="scores.csv path")

    p = sub.add_parser("backtest", help="run the walk-forward study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report directory")

    p = sub.add_parser("report", help="render a backtest directory as markdown")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", default=None)

    return parser


_DISPATCH = {
    "synth": cmd_synth,
    "discretize": cmd_discretize,
    "learn": cmd_learn,
    "score": cmd_score,
    "backtest": cmd_backtest,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and usage errors
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.print_config:
        sys.stdout.write(default_config_text())
        return 0
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _DISPATCH[args.subcommand](args)
    except ValidationError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1
    except DataError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2
    except FileNotFoundError as exc:
        logger.error("missing input file: %s", exc)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
