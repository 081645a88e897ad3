"""Rule algebra: hyper-rectangle conditions, activation, conditional means,
coverage and significance tests, and suitable intersections.

A condition is a sparse set of closed modality intervals, one per constrained
feature; features without an interval are unconstrained. A rule couples a
condition with its prediction (the conditional mean of y over the learning
set) and its activation count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .errors import (
    DimensionMismatch,
    EmptyLearningSet,
    NoActivations,
    SpecMismatch,
)
from .panel import DiscretizedPanel

# Rejection reasons returned by intersect().
REASON_EMPTY = "empty_intersection"
REASON_COMPLEXITY = "complexity_condition"
REASON_ACTIVATION = "intersection_condition"


@dataclass(frozen=True, order=True)
class Interval:
    """Closed modality interval [lo, hi] on one feature."""

    feature_index: int
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise SpecMismatch(f"interval lo {self.lo} > hi {self.hi}")

    def contains(self, code: int) -> bool:
        return self.lo <= code <= self.hi


@dataclass(frozen=True)
class Condition:
    """Sparse hyper-rectangle; intervals sorted by feature index.

    A stored full-width interval (covering the whole code set) contributes 0
    to complexity but still matters for activation: missing-coded values fail
    every stored interval.
    """

    intervals: Tuple[Interval, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.intervals, key=lambda iv: iv.feature_index))
        idx = [iv.feature_index for iv in ordered]
        if len(set(idx)) != len(idx):
            raise SpecMismatch("condition holds two intervals on one feature")
        object.__setattr__(self, "intervals", ordered)

    def complexity(self, n_codes: Sequence[int]) -> int:
        """Number of stored intervals strictly narrower than the feature's
        full code set."""
        cp = 0
        for iv in self.intervals:
            full = n_codes[iv.feature_index]
            if not (iv.lo == 0 and iv.hi == full - 1):
                cp += 1
        return cp

    def key(self) -> tuple:
        return tuple((iv.feature_index, iv.lo, iv.hi) for iv in self.intervals)


def activates(condition: Condition, x: Sequence[int]) -> bool:
    """True iff every stored interval contains the matching entry of x."""
    x = np.asarray(x)
    for iv in condition.intervals:
        if iv.feature_index >= len(x):
            raise DimensionMismatch(
                f"condition references feature {iv.feature_index}, x has {len(x)}"
            )
        if not iv.contains(int(x[iv.feature_index])):
            return False
    return True


def activation_mask(condition: Condition, x_matrix: np.ndarray) -> np.ndarray:
    """Boolean activation vector over the rows of an (n, d) code matrix."""
    n, d = x_matrix.shape
    mask = np.ones(n, dtype=bool)
    for iv in condition.intervals:
        if iv.feature_index >= d:
            raise DimensionMismatch(
                f"condition references feature {iv.feature_index}, panel has {d}"
            )
        col = x_matrix[:, iv.feature_index]
        mask &= (col >= iv.lo) & (col <= iv.hi)
    return mask


def activation_count(condition: Condition, panel: DiscretizedPanel) -> int:
    return int(activation_mask(condition, panel.x).sum())


def conditional_mean(condition: Condition, panel: DiscretizedPanel) -> float:
    """Mean of observed y over activated rows; 0.0 when nothing activates.

    Rows with unobserved y are excluded from both sums. The gather order is
    row order, so a per-row loop over the same panel reproduces the value
    bit for bit.
    """
    selected = panel.y[activation_mask(condition, panel.x)]
    selected = selected[np.isfinite(selected)]
    if selected.size == 0:
        return 0.0
    return float(np.sum(selected) / selected.size)


def coverage_ratio(condition: Condition, panel: DiscretizedPanel) -> float:
    if panel.n == 0:
        raise EmptyLearningSet("coverage over an empty learning set")
    return activation_count(condition, panel) / panel.n


def sample_std(panel: DiscretizedPanel) -> float:
    """Sample standard deviation (ddof=1) of observed y on the panel."""
    y = panel.y[np.isfinite(panel.y)]
    if y.size < 2:
        return 0.0
    return float(np.std(y, ddof=1))


def gaussian_threshold(n_activations: int, alpha: float, sigma: float) -> float:
    """Two-sided gaussian mean test threshold: q(1 - alpha/2) * sigma / sqrt(n)."""
    if n_activations < 1:
        raise NoActivations("threshold undefined with zero activations")
    q = float(norm.ppf(1.0 - alpha / 2.0))
    return q * sigma / np.sqrt(n_activations)


Z_KINDS: Dict[str, Callable[[int, float, float], float]] = {
    "gaussian": gaussian_threshold,
}


def significance_threshold(
    condition: Condition,
    panel: DiscretizedPanel,
    alpha: float,
    z_kind: str = "gaussian",
    sigma: Optional[float] = None,
) -> float:
    """Minimum |mean difference| a rule must show to count as significant.

    sigma defaults to the panel-wide sample dispersion of y; callers that
    already computed it pass it in to avoid re-scanning.
    """
    if z_kind not in Z_KINDS:
        raise SpecMismatch(f"unknown z_kind {z_kind!r}")
    if sigma is None:
        sigma = sample_std(panel)
    n_act = activation_count(condition, panel)
    return Z_KINDS[z_kind](n_act, alpha, sigma)


@dataclass(frozen=True)
class SearchParams:
    """Knobs of the rule search."""

    m: int = 10
    alpha: float = 0.05
    c_min: float = 0.05
    c_max: float = 0.5
    cp_max: int = 2
    M: int = 50
    z_kind: str = "gaussian"

    def __post_init__(self):
        if self.m < 2:
            raise SpecMismatch(f"m must be >= 2, got {self.m}")
        if not 0.0 <= self.alpha <= 1.0:
            raise SpecMismatch(f"alpha must lie in [0,1], got {self.alpha}")
        # c_min = 0 disables the lower coverage bound (diagnostic configs).
        if not 0.0 <= self.c_min < self.c_max <= 1.0:
            raise SpecMismatch(
                f"need 0 <= c_min < c_max <= 1, got ({self.c_min}, {self.c_max})"
            )
        if self.cp_max < 1:
            raise SpecMismatch(f"cp_max must be >= 1, got {self.cp_max}")
        if self.M < 1:
            raise SpecMismatch(f"M must be >= 1, got {self.M}")
        if self.z_kind not in Z_KINDS:
            raise SpecMismatch(f"unknown z_kind {self.z_kind!r}")


@dataclass(frozen=True)
class Rule:
    """A condition with its learning-set statistics, frozen at learning time."""

    condition: Condition
    prediction: float
    activations: int
    sign: int
    is_default: bool = False

    def complexity(self, n_codes: Sequence[int]) -> int:
        return self.condition.complexity(n_codes)


def make_rule(
    condition: Condition,
    panel: DiscretizedPanel,
    global_mean: Optional[float] = None,
) -> Rule:
    if global_mean is None:
        global_mean = conditional_mean(Condition(), panel)
    prediction = conditional_mean(condition, panel)
    count = activation_count(condition, panel)
    return Rule(
        condition=condition,
        prediction=prediction,
        activations=count,
        sign=int(np.sign(prediction - global_mean)),
    )


def is_suitable(
    rule: Rule,
    panel: DiscretizedPanel,
    params: SearchParams,
    sigma: Optional[float] = None,
    global_mean: Optional[float] = None,
) -> bool:
    """Coverage within [c_min, c_max] and mean shift at least the z threshold."""
    cov = coverage_ratio(rule.condition, panel)
    if not params.c_min <= cov <= params.c_max:
        return False
    if activation_count(rule.condition, panel) < 1:
        return False
    if global_mean is None:
        global_mean = conditional_mean(Condition(), panel)
    z = significance_threshold(
        rule.condition, panel, params.alpha, params.z_kind, sigma=sigma
    )
    mu = conditional_mean(rule.condition, panel)
    return bool(abs(mu - global_mean) >= z)


def intersect_conditions(a: Condition, b: Condition) -> Optional[Condition]:
    """Geometric intersection of two hyper-rectangles; None when empty."""
    merged: Dict[int, Tuple[int, int]] = {
        iv.feature_index: (iv.lo, iv.hi) for iv in a.intervals
    }
    for iv in b.intervals:
        if iv.feature_index in merged:
            lo0, hi0 = merged[iv.feature_index]
            lo, hi = max(lo0, iv.lo), min(hi0, iv.hi)
            if lo > hi:
                return None
            merged[iv.feature_index] = (lo, hi)
        else:
            merged[iv.feature_index] = (iv.lo, iv.hi)
    return Condition(
        tuple(Interval(k, lo, hi) for k, (lo, hi) in sorted(merged.items()))
    )


def intersect(
    rule_i: Rule,
    rule_j: Rule,
    panel: DiscretizedPanel,
) -> Tuple[Optional[Condition], Optional[str]]:
    """Try to form a suitable intersection of two rules.

    Returns (condition, None) when all three conditions hold, otherwise
    (None, reason) naming the first failed one. Checks run cheapest first:
    geometric emptiness, complexity additivity, then the activation-count
    strict-subset requirement (which needs a panel scan).
    """
    cond = intersect_conditions(rule_i.condition, rule_j.condition)
    if cond is None:
        return None, REASON_EMPTY
    n_codes = panel.n_codes
    if cond.complexity(n_codes) != rule_i.complexity(n_codes) + rule_j.complexity(
        n_codes
    ):
        return None, REASON_COMPLEXITY
    n_both = activation_count(cond, panel)
    if n_both == rule_i.activations or n_both == rule_j.activations:
        return None, REASON_ACTIVATION
    return cond, None


def selection_criterion(rule: Rule, global_mean: float) -> float:
    """Significance-scaled effect size used to rank rules."""
    return abs(rule.prediction - global_mean) * np.sqrt(rule.activations)


def rule_sort_key(rule: Rule, global_mean: float, n_codes: Sequence[int]) -> tuple:
    # Criterion descending, then complexity, then the interval tuple, making
    # the order total and reproducible across worker counts.
    return (
        -selection_criterion(rule, global_mean),
        rule.complexity(n_codes),
        rule.condition.key(),
    )


def describe(rule: Rule, feature_ids: Sequence[str]) -> str:
    """Human-readable If-Then rendering of one rule."""
    if not rule.condition.intervals:
        clause = "any stock"
    else:
        parts = [
            f"{feature_ids[iv.feature_index]} in [{iv.lo}, {iv.hi}]"
            for iv in rule.condition.intervals
        ]
        clause = " AND ".join(parts)
    tag = " (default)" if rule.is_default else ""
    return (
        f"IF {clause} THEN expected 3m excess return = "
        f"{rule.prediction * 100:+.2f}% "
        f"({rule.activations} activations){tag}"
    )


@dataclass
class RuleSet:
    """Covering set of rules frozen at a learning date."""

    rules: List[Rule]
    learned_at: object
    feature_ids: List[str]
    n_codes: List[int]
    global_mean: float = 0.0

    @property
    def R(self) -> int:
        return len(self.rules)

    def default_prediction(self) -> float:
        for rule in self.rules:
            if rule.is_default:
                return rule.prediction
        return self.global_mean

    def describe(self) -> List[str]:
        return [describe(r, self.feature_ids) for r in self.rules]

    def activation_matrix(self, x_matrix: np.ndarray) -> np.ndarray:
        """(n, R) boolean activation matrix over a code matrix."""
        cols = [activation_mask(r.condition, x_matrix) for r in self.rules]
        return np.stack(cols, axis=1) if cols else np.zeros((len(x_matrix), 0), bool)

    def to_json(self) -> str:
        blob = []
        for rule in self.rules:
            entry = {
                "intervals": [
                    {
                        "feature_id": self.feature_ids[iv.feature_index],
                        "lo": int(iv.lo),
                        "hi": int(iv.hi),
                    }
                    for iv in rule.condition.intervals
                ],
                "prediction": float(rule.prediction),
                "activations": int(rule.activations),
                "learned_at": str(self.learned_at),
            }
            if rule.is_default:
                entry["is_default"] = True
            blob.append(entry)
        return json.dumps(blob, indent=2)

    @classmethod
    def from_json(
        cls, text: str, feature_ids: Sequence[str], n_codes: Sequence[int]
    ) -> "RuleSet":
        blob = json.loads(text)
        index = {f: k for k, f in enumerate(feature_ids)}
        rules = []
        learned_at = None
        for entry in blob:
            intervals = []
            for iv in entry["intervals"]:
                if iv["feature_id"] not in index:
                    raise SpecMismatch(f"unknown feature_id {iv['feature_id']!r}")
                intervals.append(
                    Interval(index[iv["feature_id"]], int(iv["lo"]), int(iv["hi"]))
                )
            learned_at = np.datetime64(entry["learned_at"], "D")
            rules.append(
                Rule(
                    condition=Condition(tuple(intervals)),
                    prediction=float(entry["prediction"]),
                    activations=int(entry["activations"]),
                    sign=0,
                    is_default=bool(entry.get("is_default", False)),
                )
            )
        default_pred = next((r.prediction for r in rules if r.is_default), 0.0)
        # The schema does not carry signs; recover them against the default
        # (full-space) prediction, which equals the learning-set mean.
        rules = [
            Rule(
                condition=r.condition,
                prediction=r.prediction,
                activations=r.activations,
                sign=int(np.sign(r.prediction - default_pred)),
                is_default=r.is_default,
            )
            for r in rules
        ]
        return cls(
            rules=rules,
            learned_at=learned_at,
            feature_ids=list(feature_ids),
            n_codes=list(n_codes),
            global_mean=default_pred,
        )
