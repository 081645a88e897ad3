"""Deterministic synthetic panel generator with planted rules.

Features are piecewise-constant per stock over blocks of `horizon_days`
business days, drawn uniformly over the modality grid. A label is attached to
each block-start observation whose full forward window fits in the grid:
y = sum of planted effects active at that date + gaussian noise. Daily stock
returns spread log(1+y) evenly across the block on top of a common benchmark
path, so the realized forward excess return over the horizon equals y exactly
while labels stay independent across observations (forward windows never
overlap).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InconsistentSpec
from .panel import FeatureSpec, RawPanel
from .rules import Condition

DEFAULT_START = "2010-01-04"


@dataclass(frozen=True)
class PlantedRule:
    """Ground-truth effect: stocks whose true modalities fall inside the
    condition earn `effect` extra forward excess return (a decimal)."""

    condition: Condition
    effect: float


@dataclass
class SynthSpec:
    n_stocks: int
    n_dates: int
    d: int
    m: int
    planted: List[PlantedRule] = field(default_factory=list)
    noise_sigma: float = 0.03
    regime_shift: Optional[Tuple[str, List[PlantedRule]]] = None
    seed: int = 0
    # plumbing knobs
    start: str = DEFAULT_START
    horizon_days: int = 63
    sector_feature: Optional[int] = 0
    n_sectors: Optional[int] = None
    n_peer_groups: int = 4
    snapshot_lag_days: int = 4
    bench_drift_daily: float = 0.0002
    bench_sigma_daily: float = 0.004

    def validate(self) -> None:
        if min(self.n_stocks, self.n_dates, self.d, self.m) < 1:
            raise InconsistentSpec("n_stocks, n_dates, d, m must be positive")
        if self.m < 2:
            raise InconsistentSpec("m must be >= 2")
        if self.noise_sigma < 0:
            raise InconsistentSpec("noise_sigma must be >= 0")
        if self.horizon_days < 1:
            raise InconsistentSpec("horizon_days must be >= 1")
        for planted in self._all_planted():
            for iv in planted.condition.intervals:
                if iv.feature_index >= self.d:
                    raise InconsistentSpec(
                        f"planted condition references feature {iv.feature_index}, d={self.d}"
                    )
                if not 0 <= iv.lo <= iv.hi < self.m:
                    raise InconsistentSpec(
                        f"planted interval [{iv.lo},{iv.hi}] outside modality grid"
                    )
        if self.sector_feature is not None and self.sector_feature >= self.d:
            raise InconsistentSpec("sector_feature outside feature range")

    def _all_planted(self) -> List[PlantedRule]:
        out = list(self.planted)
        if self.regime_shift is not None:
            out.extend(self.regime_shift[1])
        return out


@dataclass
class UniverseRow:
    date: np.datetime64
    stock_id: str
    cap_weight: float
    sector: str
    peer_group: str
    esg_rating: float


@dataclass
class SynthData:
    """Everything the panel and backtest layers consume, plus ground truth."""

    spec: SynthSpec
    specs: List[FeatureSpec]
    panel: RawPanel
    true_modalities: np.ndarray  # aligned with panel rows
    universe: List[UniverseRow]
    price_dates: np.ndarray
    price_stock_ids: List[str]
    price_returns: np.ndarray  # (n_dates, n_stocks) daily total returns
    review_dates: np.ndarray


def business_day_grid(start, n_dates: int) -> np.ndarray:
    start = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(start, np.arange(n_dates))


def month_end_reviews(dates: np.ndarray) -> np.ndarray:
    """Last business day of each month present in a daily grid."""
    months = dates.astype("datetime64[M]")
    keep = np.ones(len(dates), dtype=bool)
    keep[:-1] = months[:-1] != months[1:]
    return dates[keep]


def true_modality(raw: np.ndarray, m: int) -> np.ndarray:
    """Generator-side binning: uniform [0,1) raw values on an exact grid."""
    return np.minimum((raw * m).astype(np.int64), m - 1)


def _planted_activation(
    modalities: np.ndarray, planted: Sequence[PlantedRule]
) -> np.ndarray:
    """(rows, n_planted) activation of ground-truth conditions."""
    cols = []
    for rule in planted:
        mask = np.ones(len(modalities), dtype=bool)
        for iv in rule.condition.intervals:
            col = modalities[:, iv.feature_index]
            mask &= (col >= iv.lo) & (col <= iv.hi)
        cols.append(mask)
    if not cols:
        return np.zeros((len(modalities), 0), dtype=bool)
    return np.stack(cols, axis=1)


def generate(spec: SynthSpec) -> SynthData:
    """Build one synthetic dataset; identical spec (including seed) gives
    identical output arrays."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    S, D, H, m = spec.n_stocks, spec.n_dates, spec.horizon_days, spec.m
    dates = business_day_grid(spec.start, D)
    stock_ids = [f"S{i:04d}" for i in range(S)]
    specs = [FeatureSpec(feature_id=f"f{k}") for k in range(spec.d)]

    n_blocks = int(np.ceil(D / H))
    block_starts = np.arange(n_blocks) * H
    # raw features per (stock, block, feature)
    raw_blocks = rng.random((S, n_blocks, spec.d))
    mod_blocks = true_modality(raw_blocks, m)

    shift_date = None
    post_planted: List[PlantedRule] = []
    if spec.regime_shift is not None:
        shift_date = np.datetime64(spec.regime_shift[0], "D")
        post_planted = list(spec.regime_shift[1])
        if not (dates[0] <= shift_date <= dates[-1]):
            raise InconsistentSpec("regime_shift date outside the date grid")

    # Ground-truth effect per (stock, block): planted list chosen by the
    # block-start date relative to the regime shift.
    effects = np.zeros((S, n_blocks), dtype=np.float64)
    for b, i0 in enumerate(block_starts):
        block_date = dates[i0]
        planted = spec.planted
        if shift_date is not None and block_date >= shift_date:
            planted = post_planted
        if planted:
            act = _planted_activation(mod_blocks[:, b, :], planted)
            effects[:, b] = act @ np.array([p.effect for p in planted])

    noise = rng.normal(0.0, spec.noise_sigma, size=(S, n_blocks))
    y_blocks = effects + noise
    if np.any(y_blocks <= -0.999):
        raise InconsistentSpec(
            "planted effects/noise imply a forward return at or below -100%"
        )

    # Daily returns: common benchmark path plus each stock's block drift.
    bench_log = np.log1p(
        spec.bench_drift_daily + spec.bench_sigma_daily * rng.standard_normal(D)
    )
    block_of_day = np.minimum(np.arange(D) // H, n_blocks - 1)
    # Day i's return belongs to the window opened at its block start: the
    # window of block b covers days (i0, i0+H], i.e. block days shifted by one.
    window_of_day = np.minimum((np.arange(D) - 1) // H, n_blocks - 1)
    window_of_day[0] = 0
    drift_log = np.log1p(y_blocks) / H  # (S, n_blocks)
    daily_log = bench_log[None, :] + drift_log[:, window_of_day]
    returns = np.expm1(daily_log)
    returns[:, 0] = 0.0  # base date carries no return
    price_returns = returns.T.copy()  # (n_dates, n_stocks)

    # Panel rows: every (date, stock); y only on complete block starts.
    labeled_blocks = block_starts[block_starts + H < D]
    rows_dates = np.repeat(dates, S)
    rows_stocks = np.tile(np.array(stock_ids, dtype=object), D)
    day_block = block_of_day
    columns = []
    for k in range(spec.d):
        col_matrix = raw_blocks[:, day_block, k]  # (S, D)
        columns.append(col_matrix.T.reshape(-1).astype(np.float64))
    true_mods = np.empty((D * S, spec.d), dtype=np.int64)
    for k in range(spec.d):
        true_mods[:, k] = mod_blocks[:, day_block, k].T.reshape(-1)
    y_rows = np.full(D * S, np.nan, dtype=np.float64)
    labeled_set = set(int(i) for i in labeled_blocks)
    for b, i0 in enumerate(block_starts):
        if int(i0) in labeled_set:
            y_rows[i0 * S : i0 * S + S] = y_blocks[:, b]
    panel = RawPanel(dates=rows_dates, stock_ids=rows_stocks, columns=columns, y=y_rows)

    # Universe snapshots live at score dates: snapshot_lag_days grid days
    # before each month-end review, which is where the backtester looks.
    review_dates = month_end_reviews(dates)
    base_caps = rng.uniform(0.5, 1.5, size=S)
    base_caps = base_caps / base_caps.sum()
    n_sectors = spec.n_sectors if spec.n_sectors is not None else m
    universe: List[UniverseRow] = []
    date_index = {d: i for i, d in enumerate(dates)}
    for review in review_dates:
        di = date_index[review] - spec.snapshot_lag_days
        if di < 0:
            continue
        rd = dates[di]
        b = int(block_of_day[di])
        ratings = rng.uniform(0.0, 100.0, size=S)
        for si, sid in enumerate(stock_ids):
            if spec.sector_feature is not None:
                sec_code = int(mod_blocks[si, b, spec.sector_feature]) % n_sectors
            else:
                sec_code = si % n_sectors
            universe.append(
                UniverseRow(
                    date=rd,
                    stock_id=sid,
                    cap_weight=float(base_caps[si]),
                    sector=f"SEC{sec_code}",
                    peer_group=f"PG{si % spec.n_peer_groups}",
                    esg_rating=float(ratings[si]),
                )
            )

    return SynthData(
        spec=spec,
        specs=specs,
        panel=panel,
        true_modalities=true_mods,
        universe=universe,
        price_dates=dates,
        price_stock_ids=stock_ids,
        price_returns=price_returns,
        review_dates=review_dates,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_universe_csv(path, universe: List[UniverseRow]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["date", "stock_id", "cap_weight", "sector", "peer_group", "esg_rating"]
        )
        for row in universe:
            writer.writerow(
                [
                    str(row.date),
                    row.stock_id,
                    _fmt(row.cap_weight),
                    row.sector,
                    row.peer_group,
                    _fmt(row.esg_rating),
                ]
            )


def write_prices_csv(path, dates, stock_ids, returns) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "stock_id", "total_return_daily"])
        for i, d in enumerate(dates):
            for j, sid in enumerate(stock_ids):
                writer.writerow([str(d), sid, _fmt(returns[i, j])])
