"""Feature panel handling: loading, quantile discretization, chronological split.

The raw panel is a time-indexed collection of (date, stock_id, feature vector,
forward excess return) records. Numeric features are discretized into m
modalities with empirical quantiles fitted on a learning sample and applied
unchanged out of sample; categorical features keep their own code set.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import (
    BadSplitPoint,
    EmptyPanel,
    NonPositiveModalities,
    SpecMismatch,
)

logger = logging.getLogger(__name__)

# Code assigned to missing feature values. Intervals only cover codes >= 0,
# so a missing value can never activate a condition on that feature.
MISSING_CODE = -1

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    """Declares one feature column.

    relative_to is descriptive metadata (e.g. a feature expressed versus its
    sector average); it never changes how the column is discretized.
    """

    feature_id: str
    kind: str = NUMERIC
    relative_to: str = "all"

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SpecMismatch(f"unknown feature kind {self.kind!r}")


@dataclass(frozen=True)
class RawObservation:
    """One (date, stock) record before discretization.

    features holds d raw values; None marks a missing value. y is the 3-month
    forward excess return as a decimal (0.01 = 1%), or None when the outcome
    is not (yet) observed.
    """

    date: object
    stock_id: str
    features: Sequence[object]
    y: Optional[float] = None


@dataclass
class RawPanel:
    """Column-oriented raw panel; the fast-path equivalent of a list of
    RawObservation. columns[k] is a float64 array (NaN = missing) for numeric
    features and an object array (None = missing) for categorical ones."""

    dates: np.ndarray
    stock_ids: np.ndarray
    columns: List[np.ndarray]
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.dates)


def as_date64(value) -> np.datetime64:
    """Normalize a date-like value to numpy datetime64[D]."""
    return np.datetime64(value, "D")


def raw_panel_from_observations(
    raw: Sequence[RawObservation], specs: Sequence[FeatureSpec]
) -> RawPanel:
    if len(raw) == 0:
        raise EmptyPanel("no observations")
    d = len(specs)
    n = len(raw)
    dates = np.array([as_date64(o.date) for o in raw], dtype="datetime64[D]")
    stock_ids = np.array([o.stock_id for o in raw], dtype=object)
    columns: List[np.ndarray] = []
    for k, spec in enumerate(specs):
        if spec.kind == NUMERIC:
            col = np.full(n, np.nan, dtype=np.float64)
            for i, o in enumerate(raw):
                v = o.features[k]
                if v is not None and v == v:
                    col[i] = float(v)
        else:
            col = np.array(
                [o.features[k] if o.features[k] is not None else None for o in raw],
                dtype=object,
            )
        columns.append(col)
    y = np.array(
        [np.nan if o.y is None else float(o.y) for o in raw], dtype=np.float64
    )
    for i, o in enumerate(raw):
        if len(o.features) != d:
            raise SpecMismatch(
                f"observation {i} has {len(o.features)} features, specs declare {d}"
            )
    return RawPanel(dates=dates, stock_ids=stock_ids, columns=columns, y=y)


def _coerce_raw(raw, specs) -> RawPanel:
    if isinstance(raw, RawPanel):
        if len(raw.columns) != len(specs):
            raise SpecMismatch(
                f"panel has {len(raw.columns)} columns, specs declare {len(specs)}"
            )
        return raw
    return raw_panel_from_observations(raw, specs)


def empirical_quantile(sorted_values: np.ndarray, p: float):
    """Smallest sample value whose empirical CDF is >= p."""
    n = len(sorted_values)
    idx = int(np.ceil(p * n)) - 1
    return sorted_values[max(idx, 0)]


@dataclass
class Discretizer:
    """Fitted binning for one panel: quantile cut points per numeric feature,
    category tables per categorical feature."""

    specs: List[FeatureSpec]
    m: int
    edges: Dict[str, np.ndarray] = field(default_factory=dict)
    categories: Dict[str, List[str]] = field(default_factory=dict)

    def n_codes(self, feature_id: str) -> int:
        """Size of the code set for one feature (full-interval width)."""
        if feature_id in self.categories:
            return max(len(self.categories[feature_id]), 1)
        return len(self.edges[feature_id]) + 1

    def code_counts(self) -> List[int]:
        return [self.n_codes(s.feature_id) for s in self.specs]

    def to_json(self) -> str:
        blob = {}
        for spec in self.specs:
            if spec.kind == NUMERIC:
                blob[spec.feature_id] = {
                    "kind": NUMERIC,
                    "edges": [float(e) for e in self.edges[spec.feature_id]],
                }
            else:
                blob[spec.feature_id] = {
                    "kind": CATEGORICAL,
                    "categories": list(self.categories[spec.feature_id]),
                }
        return json.dumps(blob, indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str, m: Optional[int] = None) -> "Discretizer":
        blob = json.loads(text)
        specs = []
        edges: Dict[str, np.ndarray] = {}
        categories: Dict[str, List[str]] = {}
        max_codes = 1
        for feature_id, entry in blob.items():
            kind = entry["kind"]
            specs.append(FeatureSpec(feature_id=feature_id, kind=kind))
            if kind == NUMERIC:
                edges[feature_id] = np.asarray(entry["edges"], dtype=np.float64)
                max_codes = max(max_codes, len(entry["edges"]) + 1)
            else:
                categories[feature_id] = list(entry["categories"])
                max_codes = max(max_codes, len(entry["categories"]))
        return cls(
            specs=specs,
            m=m if m is not None else max_codes,
            edges=edges,
            categories=categories,
        )


def fit_discretizer(raw, specs: Sequence[FeatureSpec], m: int) -> Discretizer:
    """Fit per-feature binning on a sample.

    Numeric features with more than m distinct values get m-1 cut points at
    the k/m empirical quantiles (smallest value with CDF >= k/m). Numeric
    features with at most m distinct values get identity binning: each
    distinct value is its own modality, in sorted order. Categorical features
    keep their observed label set as the code table.
    """
    if m < 2:
        raise NonPositiveModalities(f"m must be >= 2, got {m}")
    specs = list(specs)
    if len({s.feature_id for s in specs}) != len(specs):
        raise SpecMismatch("duplicate feature_id in specs")
    panel = _coerce_raw(raw, specs)
    if panel.n == 0:
        raise EmptyPanel("no observations")

    disc = Discretizer(specs=specs, m=m)
    for spec, col in zip(specs, panel.columns):
        if spec.kind == CATEGORICAL:
            seen = sorted({v for v in col if v is not None})
            disc.categories[spec.feature_id] = [str(v) for v in seen]
            continue
        values = col[np.isfinite(col)]
        if len(values) == 0:
            # All-missing column: single degenerate modality.
            disc.edges[spec.feature_id] = np.empty(0, dtype=np.float64)
            continue
        values = np.sort(values)
        distinct = np.unique(values)
        if len(distinct) <= m:
            disc.edges[spec.feature_id] = distinct[:-1].astype(np.float64)
        else:
            cuts = np.array(
                [empirical_quantile(values, k / m) for k in range(1, m)],
                dtype=np.float64,
            )
            disc.edges[spec.feature_id] = cuts
    return disc


@dataclass
class DiscretizedPanel:
    """Time-ordered discretized panel.

    x holds modality codes (int32, MISSING_CODE for missing values), y the
    forward excess returns (NaN when unobserved). Rows are sorted by
    (date, stock_id); sorting is stable so re-loads reproduce the same order.
    """

    specs: List[FeatureSpec]
    m: int
    dates: np.ndarray
    stock_ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    n_codes: List[int]

    @property
    def n(self) -> int:
        return len(self.dates)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def feature_ids(self) -> List[str]:
        return [s.feature_id for s in self.specs]

    def observed(self) -> "DiscretizedPanel":
        """Rows whose outcome y is observed (used for training sums)."""
        return self.take(np.isfinite(self.y))

    def take(self, index) -> "DiscretizedPanel":
        return DiscretizedPanel(
            specs=self.specs,
            m=self.m,
            dates=self.dates[index],
            stock_ids=self.stock_ids[index],
            x=self.x[index],
            y=self.y[index],
            n_codes=self.n_codes,
        )


def apply_discretizer(raw, discretizer: Discretizer) -> DiscretizedPanel:
    """Map raw values to modality codes with frozen bins.

    Bins are right-closed (a value equal to a cut point falls in the lower
    bin); values outside the fitted range clamp to the extreme modalities;
    missing values map to MISSING_CODE. Unseen categorical labels are treated
    as missing. Output rows are sorted by (date, stock_id).
    """
    specs = discretizer.specs
    panel = _coerce_raw(raw, specs)
    n, d = panel.n, len(specs)
    x = np.full((n, d), MISSING_CODE, dtype=np.int32)
    for k, spec in enumerate(specs):
        col = panel.columns[k]
        if spec.kind == CATEGORICAL:
            table = {
                label: code
                for code, label in enumerate(discretizer.categories[spec.feature_id])
            }
            codes = np.array(
                [table.get(v, MISSING_CODE) if v is not None else MISSING_CODE for v in col],
                dtype=np.int32,
            )
            x[:, k] = codes
        else:
            if spec.feature_id not in discretizer.edges:
                raise SpecMismatch(f"no fitted edges for feature {spec.feature_id!r}")
            edges = discretizer.edges[spec.feature_id]
            ok = np.isfinite(col)
            codes = np.searchsorted(edges, col[ok], side="left").astype(np.int32)
            x[ok, k] = codes

    order = np.lexsort((panel.stock_ids, panel.dates))
    return DiscretizedPanel(
        specs=list(specs),
        m=discretizer.m,
        dates=panel.dates[order],
        stock_ids=panel.stock_ids[order],
        x=x[order],
        y=panel.y[order],
        n_codes=discretizer.code_counts(),
    )


@dataclass
class TrainSplit:
    """Chronological learning/aggregation split: D_n is the first n rows of
    the time-ordered panel, D_t the rest."""

    learn: DiscretizedPanel
    aggregate: DiscretizedPanel


def split(panel: DiscretizedPanel, n: int) -> TrainSplit:
    N = panel.n
    if not 0 < n < N:
        raise BadSplitPoint(f"split point {n} outside (0, {N})")
    learn = panel.take(slice(0, n))
    aggregate = panel.take(slice(n, N))
    if aggregate.n <= learn.n:
        logger.warning(
            "aggregation set (%d rows) is not larger than learning set (%d rows)",
            aggregate.n,
            learn.n,
        )
    return TrainSplit(learn=learn, aggregate=aggregate)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    # repr gives the shortest round-trip decimal form, keeping writers
    # byte-deterministic across runs.
    return repr(float(value))


def load_features_csv(path, specs: Optional[Sequence[FeatureSpec]] = None):
    """Read features.csv (`date,stock_id,<feature_id>...`, empty cell = missing).

    Returns (RawPanel without y, specs). Columns default to numeric unless
    specs say otherwise.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["date", "stock_id"]:
            raise SpecMismatch(f"{path}: expected header date,stock_id,...")
        feature_ids = header[2:]
        rows = list(reader)
    if specs is None:
        specs = [FeatureSpec(feature_id=f) for f in feature_ids]
    else:
        specs = list(specs)
        if [s.feature_id for s in specs] != feature_ids:
            raise SpecMismatch(f"{path}: header does not match provided specs")
    if not rows:
        raise EmptyPanel(f"{path}: no data rows")

    n = len(rows)
    dates = np.array([np.datetime64(r[0], "D") for r in rows], dtype="datetime64[D]")
    stock_ids = np.array([r[1] for r in rows], dtype=object)
    columns: List[np.ndarray] = []
    for k, spec in enumerate(specs):
        cells = [r[2 + k] for r in rows]
        if spec.kind == CATEGORICAL:
            columns.append(
                np.array([c if c != "" else None for c in cells], dtype=object)
            )
        else:
            col = np.full(n, np.nan, dtype=np.float64)
            for i, c in enumerate(cells):
                if c != "":
                    col[i] = float(c)
            columns.append(col)
    y = np.full(n, np.nan, dtype=np.float64)
    return RawPanel(dates=dates, stock_ids=stock_ids, columns=columns, y=y), specs


def load_returns_csv(path) -> Dict[tuple, float]:
    """Read returns.csv into a {(date, stock_id): y} map."""
    out: Dict[tuple, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "stock_id", "fwd_excess_return_3m"]:
            raise SpecMismatch(
                f"{path}: expected header date,stock_id,fwd_excess_return_3m"
            )
        for row in reader:
            if row[2] != "":
                out[(np.datetime64(row[0], "D"), row[1])] = float(row[2])
    return out


def attach_returns(panel: RawPanel, returns: Dict[tuple, float]) -> RawPanel:
    y = np.full(panel.n, np.nan, dtype=np.float64)
    for i in range(panel.n):
        key = (panel.dates[i], panel.stock_ids[i])
        if key in returns:
            y[i] = returns[key]
    return RawPanel(
        dates=panel.dates, stock_ids=panel.stock_ids, columns=panel.columns, y=y
    )


def write_features_csv(path, panel: RawPanel, specs: Sequence[FeatureSpec]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "stock_id"] + [s.feature_id for s in specs])
        for i in range(panel.n):
            cells = [str(panel.dates[i]), str(panel.stock_ids[i])]
            for k, spec in enumerate(specs):
                v = panel.columns[k][i]
                if spec.kind == CATEGORICAL:
                    cells.append("" if v is None else str(v))
                else:
                    cells.append("" if not np.isfinite(v) else _fmt(v))
            writer.writerow(cells)


def write_returns_csv(path, panel: RawPanel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "stock_id", "fwd_excess_return_3m"])
        for i in range(panel.n):
            if np.isfinite(panel.y[i]):
                writer.writerow(
                    [str(panel.dates[i]), str(panel.stock_ids[i]), _fmt(panel.y[i])]
                )
