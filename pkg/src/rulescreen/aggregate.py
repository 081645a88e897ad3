"""Sleeping-expert aggregation of rule predictions.

Each rule in the covering set is an expert that speaks only when activated.
Predictions are the weight-normalized average over active rules; weight
updates multiply active rules by exp(-eta * loss) while inactive rules keep
their weight untouched (the active block redistributes its own mass, which is
the exact form of charging sleepers the mix loss of the active ensemble).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional

import numpy as np

from .errors import NoActiveRule, NonFiniteLoss, SpecMismatch
from .rules import RuleSet, activates

LOSS_KINDS: Dict[str, Callable[[float, float], float]] = {
    "squared": lambda p, y: (p - y) ** 2,
}


def default_eta(n_rules: int, expected_steps: int) -> float:
    """Learning rate minimizing the exponential-weighting regret bound."""
    if n_rules < 2 or expected_steps < 1:
        return 0.0
    return math.sqrt(8.0 * math.log(n_rules) / expected_steps)


@dataclass(frozen=True)
class AggregationState:
    """Weight vector over the rules of one RuleSet plus update bookkeeping."""

    weights: np.ndarray
    eta: float
    loss_kind: str = "squared"
    loss_clip: float = 1.0
    epsilon: float = 0.0
    step: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise SpecMismatch(f"unknown loss_kind {self.loss_kind!r}")

    @property
    def n_rules(self) -> int:
        return len(self.weights)

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": [float(w) for w in self.weights],
                "eta": float(self.eta),
                "step": int(self.step),
                "epsilon": float(self.epsilon),
            },
            indent=2,
        )

    @classmethod
    def from_json(
        cls, text: str, loss_kind: str = "squared", loss_clip: float = 1.0
    ) -> "AggregationState":
        blob = json.loads(text)
        return cls(
            weights=np.asarray(blob["weights"], dtype=np.float64),
            eta=float(blob["eta"]),
            loss_kind=loss_kind,
            loss_clip=loss_clip,
            epsilon=float(blob["epsilon"]),
            step=int(blob["step"]),
        )


def init_state(
    n_rules: int,
    eta: float,
    loss_kind: str = "squared",
    loss_clip: float = 1.0,
    epsilon: float = 0.0,
) -> AggregationState:
    """Uniform initial weights 1/R."""
    if n_rules < 1:
        raise SpecMismatch("cannot aggregate an empty ruleset")
    return AggregationState(
        weights=np.full(n_rules, 1.0 / n_rules, dtype=np.float64),
        eta=eta,
        loss_kind=loss_kind,
        loss_clip=loss_clip,
        epsilon=epsilon,
    )


def _active_mask_single(ruleset: RuleSet, x) -> np.ndarray:
    return np.array([activates(r.condition, x) for r in ruleset.rules], dtype=bool)


def predict(state: AggregationState, ruleset: RuleSet, x) -> float:
    """Aggregate prediction: weighted mean of the active rules' predictions."""
    active = _active_mask_single(ruleset, x)
    if not active.any():
        raise NoActiveRule("no rule activates; ruleset is not a covering")
    preds = np.array([r.prediction for r in ruleset.rules])
    den = float(state.weights[active].sum())
    if den <= 0.0:
        # All active mass underflowed; fall back to the unweighted mean.
        return float(preds[active].mean())
    return float(np.dot(state.weights[active], preds[active]) / den)


def predict_many(
    state: AggregationState,
    ruleset: RuleSet,
    x_matrix: np.ndarray,
    activation: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Vectorized predict over an (n, d) code matrix.

    Rows activating no rule get the ruleset's default prediction instead of
    raising: the scoring engine must be total even when the learning sample
    happened to be coverable without the full-space rule.
    """
    A = ruleset.activation_matrix(x_matrix) if activation is None else activation
    preds = np.array([r.prediction for r in ruleset.rules])
    den = A @ state.weights
    num = A @ (state.weights * preds)
    out = np.full(len(x_matrix), ruleset.default_prediction(), dtype=np.float64)
    ok = den > 0.0
    out[ok] = num[ok] / den[ok]
    # Rows with active rules whose weights all underflowed to zero.
    stranded = (~ok) & A.any(axis=1)
    if stranded.any():
        cnt = A[stranded].sum(axis=1)
        out[stranded] = (A[stranded] @ preds) / cnt
    return out


def update(
    state: AggregationState,
    ruleset: RuleSet,
    x,
    y: float,
    active: Optional[np.ndarray] = None,
) -> AggregationState:
    """One weight update from a resolved outcome y.

    Active rules are charged their own (clipped) loss; inactive rules keep
    exactly their current weight, so a rule that never activates retains its
    initial relative weight bit for bit. When nothing activates, weights are
    returned unchanged.
    """
    if not np.isfinite(y):
        raise NonFiniteLoss(f"outcome {y!r} is not finite")
    if active is None:
        active = _active_mask_single(ruleset, x)
    if not active.any():
        return replace(state, step=state.step + 1)

    loss_fn = LOSS_KINDS[state.loss_kind]
    w = state.weights.copy()
    preds = np.array([r.prediction for r in ruleset.rules])
    losses = np.array([loss_fn(p, y) for p in preds[active]])
    if not np.all(np.isfinite(losses)):
        raise NonFiniteLoss("non-finite loss on an active rule")
    losses = np.minimum(losses, state.loss_clip)
    factors = np.exp(-state.eta * losses)

    block = w[active] * factors
    block_sum = block.sum()
    target = 1.0 - w[~active].sum()  # mass the active block must keep
    if block_sum > 0.0:
        w[active] = block * (target / block_sum)
    return replace(state, weights=w, step=state.step + 1)


def score(y_hat: float, epsilon: float) -> int:
    """Ternary score with a closed dead zone: |y_hat| <= epsilon maps to 0."""
    if y_hat > epsilon:
        return 1
    if y_hat < -epsilon:
        return -1
    return 0


def score_many(y_hat: np.ndarray, epsilon: float) -> np.ndarray:
    out = np.zeros(len(y_hat), dtype=np.int64)
    out[y_hat > epsilon] = 1
    out[y_hat < -epsilon] = -1
    return out
