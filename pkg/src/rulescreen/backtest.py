"""Monthly-rebalanced screening portfolios and the walk-forward study engine.

The simulator is deliberately simple: portfolios rebalance to target weights at
month-end review closes and buy-and-hold in between, so intra-month weights
drift with prices. Review targets are computed from the universe snapshot dated
`score_lag_days` trading days before the review (the data a manager would have
had when deciding).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .aggregate import default_eta, init_state, predict_many, score_many, update
from .errors import (
    EmptyAfterFilter,
    GridMismatch,
    InsufficientHistory,
    MissingPriceData,
    NoPopulatedSector,
    SpecMismatch,
    UnknownLearningYear,
)
from .panel import (
    FeatureSpec,
    RawPanel,
    apply_discretizer,
    fit_discretizer,
    split,
)
from .rulegen import LearnReport, learn
from .rules import RuleSet, SearchParams

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9

BENCHMARK = "Benchmark"
POSITIVE = "Positive ML"
POSITIVE_SM = "Positive Sector-Matched"
NEGATIVE = "Negative ML"
BEST_IN_CLASS = "Best-in-class 30%"


# ---------------------------------------------------------------------------
# market data containers


@dataclass
class UniverseSnapshot:
    """Investable universe on one date: caps, sectors, peer groups, ratings
    and (once the scorer has run) ternary ML scores per stock."""

    date: np.datetime64
    stock_ids: np.ndarray
    cap_weight: np.ndarray
    sector: np.ndarray
    peer_group: np.ndarray
    esg_rating: np.ndarray
    score: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(set(self.stock_ids)) != len(self.stock_ids):
            raise SpecMismatch(f"duplicate stock_id in snapshot {self.date}")
        total = float(self.cap_weight.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise SpecMismatch(
                f"cap weights at {self.date} sum to {total!r}, expected 1"
            )

    @property
    def n(self) -> int:
        return len(self.stock_ids)

    def with_scores(self, score: np.ndarray) -> "UniverseSnapshot":
        return replace(self, score=np.asarray(score, dtype=np.int64))


class UniverseTable:
    """All universe snapshots of a study, keyed by snapshot date."""

    def __init__(self, snapshots: Dict[np.datetime64, UniverseSnapshot]):
        self.snapshots = dict(snapshots)
        self.dates = np.array(sorted(self.snapshots), dtype="datetime64[D]")

    def at(self, date) -> UniverseSnapshot:
        key = np.datetime64(date, "D")
        try:
            return self.snapshots[key]
        except KeyError:
            raise SpecMismatch(f"no universe snapshot dated {key}") from None

    @classmethod
    def from_rows(cls, rows) -> "UniverseTable":
        by_date: Dict[np.datetime64, list] = {}
        for row in rows:
            by_date.setdefault(np.datetime64(row.date, "D"), []).append(row)
        snaps = {}
        for date, group in by_date.items():
            snaps[date] = UniverseSnapshot(
                date=date,
                stock_ids=np.array([r.stock_id for r in group], dtype=object),
                cap_weight=np.array([r.cap_weight for r in group], dtype=np.float64),
                sector=np.array([r.sector for r in group], dtype=object),
                peer_group=np.array([r.peer_group for r in group], dtype=object),
                esg_rating=np.array([r.esg_rating for r in group], dtype=np.float64),
            )
        return cls(snaps)


@dataclass
class PriceTable:
    """Daily total returns on a complete (date x stock) grid."""

    dates: np.ndarray
    stock_ids: List[str]
    returns: np.ndarray  # shape (n_dates, n_stocks)

    def __post_init__(self):
        if self.returns.shape != (len(self.dates), len(self.stock_ids)):
            raise MissingPriceData(
                f"return grid {self.returns.shape} does not match "
                f"{len(self.dates)} dates x {len(self.stock_ids)} stocks"
            )
        if not np.all(np.isfinite(self.returns)):
            raise MissingPriceData("return grid contains missing values")
        self.date_index = {d: i for i, d in enumerate(self.dates)}
        self.col = {sid: j for j, sid in enumerate(self.stock_ids)}

    @property
    def n(self) -> int:
        return len(self.dates)

    def index_of(self, date) -> int:
        key = np.datetime64(date, "D")
        try:
            return self.date_index[key]
        except KeyError:
            raise MissingPriceData(f"no prices on {key}") from None


def month_ends(dates: np.ndarray) -> np.ndarray:
    """Last date of each calendar month present in a sorted daily grid."""
    months = dates.astype("datetime64[M]")
    keep = np.ones(len(dates), dtype=bool)
    keep[:-1] = months[:-1] != months[1:]
    return dates[keep]


# ---------------------------------------------------------------------------
# portfolio series and KPIs


@dataclass
class PortfolioSeries:
    name: str
    dates: np.ndarray
    values: np.ndarray
    weights_history: List[Tuple[np.datetime64, np.ndarray, np.ndarray]] = field(
        default_factory=list
    )

    def __post_init__(self):
        if len(self.values) and abs(float(self.values[0]) - 100.0) > 1e-9:
            raise SpecMismatch("portfolio level series must start at 100")

    def periodic_returns(self) -> np.ndarray:
        return self.values[1:] / self.values[:-1] - 1.0


@dataclass
class KpiReport:
    ann_performance: float
    ann_volatility: float
    sharpe: float
    max_drawdown: float
    information_ratio: float
    ann_alpha: float
    calendar_excess: Dict[int, float]

    def as_dict(self) -> Dict[str, float]:
        return {
            "ann_performance": self.ann_performance,
            "ann_volatility": self.ann_volatility,
            "sharpe": self.sharpe,
            "max_drawdown": self.max_drawdown,
            "information_ratio": self.information_ratio,
            "ann_alpha": self.ann_alpha,
        }


@dataclass
class BacktestReport:
    name: str
    series: PortfolioSeries
    kpis: KpiReport


# ---------------------------------------------------------------------------
# screens


def best_in_class(snapshot: UniverseSnapshot, x: float) -> np.ndarray:
    """Drop, within each peer group, the stocks in the lowest x-quantile of
    ESG ratings; keep survivors at their cap proportions, renormalized to 1.

    A stock survives iff the fraction of its peer group rated at or below it
    exceeds x, so x = 0 removes nothing and 10 distinct ratings with x = 0.3
    lose exactly three names.
    """
    if not 0.0 <= x < 1.0:
        raise SpecMismatch(f"quantile threshold must lie in [0,1), got {x}")
    keep = np.zeros(snapshot.n, dtype=bool)
    for group in np.unique(snapshot.peer_group):
        idx = np.flatnonzero(snapshot.peer_group == group)
        ratings = snapshot.esg_rating[idx]
        order = np.sort(ratings)
        ecdf = np.searchsorted(order, ratings, side="right") / len(ratings)
        keep[idx] = ecdf > x
    if not keep.any():
        raise EmptyAfterFilter(f"best-in-class x={x} removed every stock")
    weights = np.where(keep, snapshot.cap_weight, 0.0)
    return weights / weights.sum()


def ml_screen(snapshot: UniverseSnapshot, sign: int) -> np.ndarray:
    """Keep the stocks whose ternary score equals `sign` (+1 or -1) at their
    cap proportions, renormalized to 1. Unscored stocks count as 0."""
    if sign not in (1, -1):
        raise SpecMismatch(f"screen sign must be +1 or -1, got {sign}")
    scores = (
        snapshot.score
        if snapshot.score is not None
        else np.zeros(snapshot.n, dtype=np.int64)
    )
    keep = scores == sign
    if not keep.any():
        raise EmptyAfterFilter(f"no stock scored {sign:+d} on {snapshot.date}")
    weights = np.where(keep, snapshot.cap_weight, 0.0)
    return weights / weights.sum()


def sector_match(weights: np.ndarray, snapshot: UniverseSnapshot) -> np.ndarray:
    """Rescale selected weights so each sector's total matches the benchmark's
    sector mass. Sectors with no selected stock have their benchmark mass
    redistributed pro-rata over the populated ones."""
    selected = weights > 0.0
    if not selected.any():
        raise NoPopulatedSector("selection is empty")
    populated = np.unique(snapshot.sector[selected])
    bench_mass = {
        str(s): float(snapshot.cap_weight[snapshot.sector == s].sum())
        for s in populated
    }
    denom = sum(bench_mass.values())
    if denom <= 0.0:
        raise NoPopulatedSector("selected sectors carry no benchmark mass")
    out = np.zeros_like(weights)
    for s in populated:
        mass = bench_mass[str(s)]
        if mass <= 0.0:
            raise NoPopulatedSector(f"sector {s} has zero benchmark mass")
        in_sector = selected & (snapshot.sector == s)
        sector_sum = weights[in_sector].sum()
        out[in_sector] = weights[in_sector] * (mass / denom / sector_sum)
    return out


# ---------------------------------------------------------------------------
# simulation


def simulate(
    review_schedule: Sequence[np.datetime64],
    weights_fn: Callable[[UniverseSnapshot], np.ndarray],
    prices: PriceTable,
    universe: UniverseTable,
    name: str = "portfolio",
    score_lag_days: int = 4,
) -> PortfolioSeries:
    """Run one strategy: at each review close, rebalance to the weights that
    weights_fn assigns to the snapshot dated score_lag_days earlier; hold
    between reviews. Level series starts at 100 on the first review."""
    reviews = sorted(np.datetime64(r, "D") for r in review_schedule)
    if not reviews:
        raise SpecMismatch("empty review schedule")
    review_idx = []
    for r in reviews:
        i = prices.index_of(r)
        if i - score_lag_days < 0:
            raise MissingPriceData(
                f"review {r} has no data {score_lag_days} trading days earlier"
            )
        review_idx.append(i)

    def target_holdings(i: int, level: float) -> Tuple[np.ndarray, np.datetime64, np.ndarray, np.ndarray]:
        snap_date = prices.dates[i - score_lag_days]
        snap = universe.at(snap_date)
        w = np.asarray(weights_fn(snap), dtype=np.float64)
        if w.shape != (snap.n,):
            raise SpecMismatch("weights_fn returned a vector of the wrong length")
        if np.any(w < -WEIGHT_TOL) or abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
            raise SpecMismatch("weights must be non-negative and sum to 1")
        h = np.zeros(len(prices.stock_ids), dtype=np.float64)
        for sid, wi in zip(snap.stock_ids, w):
            if sid not in prices.col:
                raise MissingPriceData(f"no prices for {sid}")
            h[prices.col[sid]] = level * wi
        return h, snap_date, snap.stock_ids, w

    i0 = review_idx[0]
    holdings, _, ids0, w0 = target_holdings(i0, 100.0)
    history = [(reviews[0], ids0, w0)]
    values = [100.0]
    review_at = {i: r for i, r in zip(review_idx[1:], reviews[1:])}
    for t in range(i0 + 1, prices.n):
        holdings = holdings * (1.0 + prices.returns[t])
        if t in review_at:
            level = float(holdings.sum())
            holdings, _, ids, w = target_holdings(t, level)
            history.append((review_at[t], ids, w))
        values.append(float(holdings.sum()))
    return PortfolioSeries(
        name=name,
        dates=prices.dates[i0:],
        values=np.array(values, dtype=np.float64),
        weights_history=history,
    )


def kpis(
    series: PortfolioSeries,
    benchmark_series: PortfolioSeries,
    periods_per_year: float,
) -> KpiReport:
    """Standard report card for a level series against its benchmark."""
    if len(series.dates) != len(benchmark_series.dates) or np.any(
        series.dates != benchmark_series.dates
    ):
        raise GridMismatch("series and benchmark are on different date grids")
    v, b = series.values, benchmark_series.values
    r = v[1:] / v[:-1] - 1.0
    rb = b[1:] / b[:-1] - 1.0
    n = len(r)
    ppy = float(periods_per_year)

    ann_perf = float((v[-1] / v[0]) ** (ppy / n) - 1.0) if n >= 1 else 0.0
    ann_vol = float(np.std(r, ddof=1) * math.sqrt(ppy)) if n >= 2 else 0.0
    sharpe = ann_perf / ann_vol if ann_vol > 0.0 else 0.0
    max_dd = float(np.min(v / np.maximum.accumulate(v) - 1.0))

    excess = r - rb
    te = float(np.std(excess, ddof=1) * math.sqrt(ppy)) if n >= 2 else 0.0
    ir = float(np.mean(excess) * ppy / te) if te > 0.0 else 0.0

    if n >= 1:
        var_b = float(np.sum((rb - rb.mean()) ** 2))
        beta = (
            float(np.sum((rb - rb.mean()) * (r - r.mean())) / var_b)
            if var_b > 0.0
            else 0.0
        )
        alpha = float(r.mean() - beta * rb.mean()) * ppy
    else:
        alpha = 0.0

    calendar: Dict[int, float] = {}
    if n >= 1:
        years = series.dates[1:].astype("datetime64[Y]").astype(int) + 1970
        for year in np.unique(years):
            in_year = years == year
            strat = float(np.prod(1.0 + r[in_year]) - 1.0)
            bench = float(np.prod(1.0 + rb[in_year]) - 1.0)
            calendar[int(year)] = strat - bench

    return KpiReport(
        ann_performance=ann_perf,
        ann_volatility=ann_vol,
        sharpe=sharpe,
        max_drawdown=max_dd,
        information_ratio=ir,
        ann_alpha=alpha,
        calendar_excess=calendar,
    )


# ---------------------------------------------------------------------------
# walk-forward study


@dataclass
class WalkForwardConfig:
    initial_train_years: int = 3
    horizon_days: int = 63
    learn_fraction: float = 0.25
    m: int = 10
    alpha: float = 0.05
    c_min: float = 0.05
    c_max: float = 0.5
    cp_max: int = 2
    top_m: int = 50
    z_kind: str = "gaussian"
    loss_kind: str = "squared"
    loss_clip: float = 1.0
    eta: Optional[float] = None
    epsilon: Optional[float] = None
    bic_x: float = 0.30
    score_lag_days: int = 4
    periods_per_year: float = 252.0
    workers: int = 1

    def search_params(self) -> SearchParams:
        return SearchParams(
            m=self.m,
            alpha=self.alpha,
            c_min=self.c_min,
            c_max=self.c_max,
            cp_max=self.cp_max,
            M=self.top_m,
            z_kind=self.z_kind,
        )


@dataclass
class LearningRecord:
    date: np.datetime64
    year: int
    ruleset: RuleSet
    epsilon: float
    report: LearnReport
    n_design: int
    n_replay: int


@dataclass
class StudyResult:
    reports: Dict[str, BacktestReport]
    series: Dict[str, PortfolioSeries]
    learnings: List[LearningRecord]
    scores: Dict[np.datetime64, Dict[str, Tuple[float, int]]]  # score date -> stock
    reviews: np.ndarray


def _raw_take(panel: RawPanel, index: np.ndarray) -> RawPanel:
    return RawPanel(
        dates=panel.dates[index],
        stock_ids=panel.stock_ids[index],
        columns=[c[index] for c in panel.columns],
        y=panel.y[index],
    )


def _year(date: np.datetime64) -> int:
    return int(date.astype("datetime64[Y]").astype(int)) + 1970


def _learning_dates(grid: np.ndarray, initial_train_years: int) -> List[np.datetime64]:
    first_year = _year(grid[0]) + initial_train_years - 1
    last_year = _year(grid[-1])
    if first_year > last_year:
        raise InsufficientHistory(
            f"need {initial_train_years} training years; data covers "
            f"{_year(grid[0])}..{last_year}"
        )
    years = grid.astype("datetime64[Y]").astype(int) + 1970
    out = []
    for year in range(first_year, last_year + 1):
        in_year = np.flatnonzero(years == year)
        if len(in_year):
            out.append(grid[in_year[-1]])
    return out


def run_study(
    raw_panel: RawPanel,
    specs: Sequence[FeatureSpec],
    universe: UniverseTable,
    prices: PriceTable,
    cfg: WalkForwardConfig,
    freeze_year: Optional[int] = None,
) -> StudyResult:
    """Shared engine behind walk_forward and learning_y.

    Learnings happen at the last trading day of each calendar year, starting
    once `initial_train_years` are available. Each learning refits the
    discretizer and rules on every observation whose outcome has resolved,
    resets aggregation weights to uniform and replays the post-design labels,
    then updates daily out of sample as labels resolve. With freeze_year set,
    re-learning stops after that year's learning; weight updates continue.
    """
    grid = prices.dates
    learn_dates = _learning_dates(grid, cfg.initial_train_years)
    if freeze_year is not None:
        if freeze_year not in {_year(L) for L in learn_dates}:
            raise UnknownLearningYear(
                f"{freeze_year} is not a completed learning year"
            )
        learn_dates = [L for L in learn_dates if _year(L) <= freeze_year]
    first_learning = learn_dates[0]

    lag = cfg.score_lag_days
    review_candidates = month_ends(grid)
    reviews = []
    for r in review_candidates:
        i = prices.index_of(r)
        if i - lag < 0:
            continue
        if grid[i - lag] >= first_learning:
            reviews.append(r)
    if not reviews:
        raise InsufficientHistory("no out-of-sample review after the first learning")
    review_arr = np.array(reviews, dtype="datetime64[D]")
    score_idx = {prices.index_of(r) - lag: r for r in reviews}

    labeled = np.isfinite(raw_panel.y)
    resolution = np.busday_offset(raw_panel.dates, cfg.horizon_days)

    scores: Dict[np.datetime64, Dict[str, Tuple[float, int]]] = {}
    learnings: List[LearningRecord] = []

    by_date: Dict[np.datetime64, List[int]] = {}
    for i, d in enumerate(raw_panel.dates):
        by_date.setdefault(d, []).append(i)
    rows_by_date = {d: np.array(ix, dtype=np.int64) for d, ix in by_date.items()}

    n_total_labeled = int(labeled.sum())

    for k, L in enumerate(learn_dates):
        # ---- learning at the close of L
        in_learning = labeled & (resolution <= L)
        if not in_learning.any():
            raise InsufficientHistory(f"no resolved labels at learning {L}")
        raw_learn = _raw_take(raw_panel, np.flatnonzero(in_learning))
        discretizer = fit_discretizer(raw_learn, specs, cfg.m)
        panel_L = apply_discretizer(raw_learn, discretizer)
        N = panel_L.n
        if N < 2:
            raise InsufficientHistory(f"learning set at {L} has {N} rows")
        n_design = max(1, min(N - 1, int(math.floor(cfg.learn_fraction * N))))
        parts = split(panel_L, n_design)
        ruleset, report = learn(
            parts.learn, cfg.search_params(), learned_at=L, workers=cfg.workers
        )
        R = ruleset.R
        eta = cfg.eta if cfg.eta is not None else default_eta(
            R, max(1, n_total_labeled - n_design)
        )
        state = init_state(R, eta, loss_kind=cfg.loss_kind, loss_clip=cfg.loss_clip)
        replay = parts.aggregate
        A_replay = ruleset.activation_matrix(replay.x)
        for i in range(replay.n):
            state = update(
                state, ruleset, replay.x[i], float(replay.y[i]), active=A_replay[i]
            )
        if cfg.epsilon is not None:
            epsilon = cfg.epsilon
        else:
            fit_preds = predict_many(state, ruleset, replay.x, activation=A_replay)
            epsilon = float(np.std(fit_preds))
        state = replace(state, epsilon=epsilon)
        learnings.append(
            LearningRecord(
                date=L,
                year=_year(L),
                ruleset=ruleset,
                epsilon=epsilon,
                report=report,
                n_design=parts.learn.n,
                n_replay=replay.n,
            )
        )

        # ---- out-of-sample until the next learning (or the end of data)
        next_L = learn_dates[k + 1] if k + 1 < len(learn_dates) else None
        pending = labeled & (resolution > L)
        if next_L is not None:
            pending &= resolution <= next_L
        pend_idx = np.flatnonzero(pending)
        pend_lists: Dict[np.datetime64, List[int]] = {}
        if len(pend_idx):
            raw_pend = _raw_take(raw_panel, pend_idx)
            panel_pend = apply_discretizer(raw_pend, discretizer)
            A_pend = ruleset.activation_matrix(panel_pend.x)
            res_pend = np.busday_offset(panel_pend.dates, cfg.horizon_days)
            for pos in range(panel_pend.n):
                pend_lists.setdefault(res_pend[pos], []).append(pos)
        pend_by_day = {d: np.array(v, dtype=np.int64) for d, v in pend_lists.items()}

        t_start = prices.index_of(L) + 1
        t_stop = prices.index_of(next_L) + 1 if next_L is not None else prices.n
        for t in range(t_start, t_stop):
            day = grid[t]
            todo = pend_by_day.get(day)
            if todo is not None:
                for pos in todo:
                    state = update(
                        state,
                        ruleset,
                        panel_pend.x[pos],
                        float(panel_pend.y[pos]),
                        active=A_pend[pos],
                    )
            if t in score_idx:
                row_ix = rows_by_date.get(day)
                if row_ix is None or not len(row_ix):
                    raise SpecMismatch(f"no panel rows to score on {day}")
                raw_day = _raw_take(raw_panel, row_ix)
                panel_day = apply_discretizer(raw_day, discretizer)
                y_hat = predict_many(state, ruleset, panel_day.x)
                ternary = score_many(y_hat, state.epsilon)
                scores[day] = {
                    str(sid): (float(y_hat[j]), int(ternary[j]))
                    for j, sid in enumerate(panel_day.stock_ids)
                }

    # ---- attach scores to snapshots and simulate the strategy legs
    scored: Dict[np.datetime64, UniverseSnapshot] = {}
    for r in reviews:
        sd = grid[prices.index_of(r) - lag]
        snap = universe.at(sd)
        per_stock = scores.get(sd, {})
        arr = np.array(
            [per_stock.get(str(sid), (0.0, 0))[1] for sid in snap.stock_ids],
            dtype=np.int64,
        )
        scored[sd] = snap.with_scores(arr)
    scored_table = UniverseTable(scored)

    def benchmark_fn(snap: UniverseSnapshot) -> np.ndarray:
        return snap.cap_weight / snap.cap_weight.sum()

    def fallback(fn: Callable[[UniverseSnapshot], np.ndarray], label: str):
        def wrapped(snap: UniverseSnapshot) -> np.ndarray:
            try:
                return fn(snap)
            except (EmptyAfterFilter, NoPopulatedSector) as exc:
                logger.warning("%s on %s: %s; holding benchmark", label, snap.date, exc)
                return benchmark_fn(snap)

        return wrapped

    def positive_fn(snap: UniverseSnapshot) -> np.ndarray:
        return ml_screen(snap, 1)

    def positive_sm_fn(snap: UniverseSnapshot) -> np.ndarray:
        return sector_match(ml_screen(snap, 1), snap)

    def negative_fn(snap: UniverseSnapshot) -> np.ndarray:
        return ml_screen(snap, -1)

    def bic_fn(snap: UniverseSnapshot) -> np.ndarray:
        return best_in_class(snap, cfg.bic_x)

    legs: Dict[str, Callable[[UniverseSnapshot], np.ndarray]] = {
        BENCHMARK: benchmark_fn,
        POSITIVE: fallback(positive_fn, POSITIVE),
        POSITIVE_SM: fallback(positive_sm_fn, POSITIVE_SM),
        NEGATIVE: fallback(negative_fn, NEGATIVE),
        BEST_IN_CLASS: fallback(bic_fn, BEST_IN_CLASS),
    }
    series = {
        name: simulate(review_arr, fn, prices, scored_table, name, lag)
        for name, fn in legs.items()
    }
    bench = series[BENCHMARK]
    reports = {
        name: BacktestReport(
            name=name, series=s, kpis=kpis(s, bench, cfg.periods_per_year)
        )
        for name, s in series.items()
    }
    return StudyResult(
        reports=reports,
        series=series,
        learnings=learnings,
        scores=scores,
        reviews=review_arr,
    )


def walk_forward(
    raw_panel: RawPanel,
    specs: Sequence[FeatureSpec],
    universe: UniverseTable,
    prices: PriceTable,
    cfg: WalkForwardConfig,
) -> Dict[str, BacktestReport]:
    """Annual re-learning study; returns one report per strategy leg."""
    return run_study(raw_panel, specs, universe, prices, cfg).reports


def learning_y(
    raw_panel: RawPanel,
    specs: Sequence[FeatureSpec],
    universe: UniverseTable,
    prices: PriceTable,
    cfg: WalkForwardConfig,
    Y: int,
) -> BacktestReport:
    """Positive-screen backtest with rules frozen at the year-Y learning.

    Aggregation weights keep updating daily, so the first year out of sample
    is the walk-forward Positive ML leg bit for bit; afterwards the static
    rules stop adapting.
    """
    result = run_study(raw_panel, specs, universe, prices, cfg, freeze_year=Y)
    report = result.reports[POSITIVE]
    renamed = replace(report.series, name=f"Learning {Y}")
    return BacktestReport(name=f"Learning {Y}", series=renamed, kpis=report.kpis)


# ---------------------------------------------------------------------------
# CSV / JSON loaders and writers


def _fmt(value: float) -> str:
    return repr(float(value))


def load_universe_csv(path) -> UniverseTable:
    @dataclass
    class _Row:
        date: str
        stock_id: str
        cap_weight: float
        sector: str
        peer_group: str
        esg_rating: float

    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"date", "stock_id", "cap_weight", "sector", "peer_group", "esg_rating"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise SpecMismatch(f"universe csv must have columns {sorted(need)}")
        for rec in reader:
            rows.append(
                _Row(
                    date=rec["date"],
                    stock_id=rec["stock_id"],
                    cap_weight=float(rec["cap_weight"]),
                    sector=rec["sector"],
                    peer_group=rec["peer_group"],
                    esg_rating=float(rec["esg_rating"]),
                )
            )
    if not rows:
        raise SpecMismatch("universe csv is empty")
    return UniverseTable.from_rows(rows)


def load_prices_csv(path) -> PriceTable:
    cells: Dict[Tuple[np.datetime64, str], float] = {}
    stock_ids: List[str] = []
    seen = set()
    dates_seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"date", "stock_id", "total_return_daily"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise SpecMismatch(f"prices csv must have columns {sorted(need)}")
        for rec in reader:
            date = np.datetime64(rec["date"], "D")
            sid = rec["stock_id"]
            cells[(date, sid)] = float(rec["total_return_daily"])
            if sid not in seen:
                seen.add(sid)
                stock_ids.append(sid)
            dates_seen.add(date)
    if not cells:
        raise MissingPriceData("prices csv is empty")
    dates = np.array(sorted(dates_seen), dtype="datetime64[D]")
    grid = np.full((len(dates), len(stock_ids)), np.nan, dtype=np.float64)
    date_pos = {d: i for i, d in enumerate(dates)}
    col = {s: j for j, s in enumerate(stock_ids)}
    for (d, s), v in cells.items():
        grid[date_pos[d], col[s]] = v
    missing = np.argwhere(~np.isfinite(grid))
    if len(missing):
        i, j = missing[0]
        raise MissingPriceData(
            f"missing return for {stock_ids[j]} on {dates[i]} "
            f"({len(missing)} gaps total)"
        )
    return PriceTable(dates=dates, stock_ids=stock_ids, returns=grid)


def write_levels_csv(path, series_map: Dict[str, PortfolioSeries]) -> None:
    names = list(series_map)
    first = series_map[names[0]]
    for name in names[1:]:
        if np.any(series_map[name].dates != first.dates):
            raise GridMismatch("level series must share one date grid")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date"] + names)
        for i, d in enumerate(first.dates):
            writer.writerow([str(d)] + [_fmt(series_map[n].values[i]) for n in names])


def write_kpis_json(path, reports: Dict[str, BacktestReport]) -> None:
    blob = {name: rep.kpis.as_dict() for name, rep in reports.items()}
    with open(path, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_calendar_csv(path, reports: Dict[str, BacktestReport]) -> None:
    names = list(reports)
    years = sorted({y for rep in reports.values() for y in rep.kpis.calendar_excess})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["year"] + names)
        for year in years:
            writer.writerow(
                [year]
                + [_fmt(reports[n].kpis.calendar_excess.get(year, 0.0)) for n in names]
            )


def write_learning_y_csv(
    path,
    walk_positive: PortfolioSeries,
    benchmark: PortfolioSeries,
    frozen: Sequence[PortfolioSeries],
) -> None:
    """Relative-to-benchmark levels (base 100) of the adaptive positive screen
    next to each frozen-rules variant."""
    cols = [walk_positive] + list(frozen)
    for s in cols:
        if np.any(s.dates != benchmark.dates):
            raise GridMismatch("learning-y series must share the benchmark grid")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date"] + [s.name for s in cols])
        for i, d in enumerate(benchmark.dates):
            rel = [
                _fmt(100.0 * s.values[i] / benchmark.values[i] / (s.values[0] / benchmark.values[0]))
                for s in cols
            ]
            writer.writerow([str(d)] + rel)
