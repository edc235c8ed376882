"""Class-priority engine: simplex weights, objective values, loss tracking.

The weight vector lives on the C-simplex (|G|-simplex under superclasses)
and is updated multiplicatively: w'_c proportional to w_c * exp(-eta *
alpha_c), computed in log space with a max shift so thousands of updates
cannot overflow. alpha_c is the sum over the selected batch of (optionally
clipped) excess losses against class c's expert, minus the tracked mean
holdout loss of class c, so classes with high holdout loss gain weight.

The holdout-loss tracker runs in one of two modes: "full" recomputes the
per-class mean holdout loss of the target model from the whole holdout
split (intended once per epoch), "ewma" folds per-class means of a small
random holdout batch into a debiased exponentially-weighted moving average
every step. In ewma mode a class absent from the sampled batch keeps its
previous value, and before a class has been folded at all its value falls
back to whatever the tracker was initialized with.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import learner
from .errors import InvalidInputError, NumericError
from .numerics import Rng

FULL, EWMA = "full", "ewma"


def init_weights(C: int) -> np.ndarray:
    """Uniform point 1/C on the C-simplex."""
    if C < 2:
        raise InvalidInputError("need at least 2 classes")
    return np.full(C, 1.0 / C)


def check_simplex(w: np.ndarray, tol: float = 1e-9) -> None:
    if np.any(w < 0) or abs(w.sum() - 1.0) > tol:
        raise NumericError(f"weights left the simplex: sum={w.sum()!r}, min={w.min()!r}")


def update_weights(w: np.ndarray, alpha: np.ndarray, eta: float) -> np.ndarray:
    """Multiplicative update w'_c = w_c exp(-eta alpha_c) / normalizer."""
    if eta < 0:
        raise InvalidInputError("eta must be >= 0")
    w = np.asarray(w, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if w.shape != alpha.shape:
        raise InvalidInputError("weights and alpha must have the same length")
    if not np.all(np.isfinite(alpha)):
        raise InvalidInputError("alpha must be finite")
    if eta == 0.0:
        # exp(0) = 1 and w sums to one, so the update is exactly the identity
        check_simplex(w)
        return w.copy()
    with np.errstate(divide="ignore"):
        logw = np.log(w) - eta * alpha
    shift = logw.max()
    if not np.isfinite(shift):
        raise NumericError(f"degenerate weight update: log-weights {logw!r}")
    out = np.exp(logw - shift)
    total = out.sum()
    if total <= 0 or not np.isfinite(total):
        raise NumericError(f"weight normalizer is {total!r} (alpha={alpha!r})")
    return out / total


def excess_losses(
    target_losses: np.ndarray, expert_losses: np.ndarray, clip: bool
) -> np.ndarray:
    """(E, n) matrix of per-class excess losses, clipped at zero when asked."""
    diff = np.asarray(target_losses)[None, :] - np.asarray(expert_losses)
    return np.maximum(diff, 0.0) if clip else diff


@dataclass(frozen=True)
class HoldoutLossTracker:
    mode: str  # FULL or EWMA
    values: np.ndarray  # full mode: the per-class means; ewma: fallback values
    decay: float = 0.99
    raw: np.ndarray | None = None  # ewma accumulator
    folds: np.ndarray | None = None  # ewma per-class fold counts

    def __post_init__(self):
        if self.mode not in (FULL, EWMA):
            raise InvalidInputError(f"unknown tracker mode {self.mode!r}")
        if not 0 <= self.decay <= 1:
            raise InvalidInputError("ewma decay must lie in [0, 1]")

    @classmethod
    def create(cls, mode: str, dim: int, decay: float = 0.99) -> "HoldoutLossTracker":
        base = np.zeros(dim)
        if mode == EWMA:
            return cls(mode=mode, values=base, decay=decay,
                       raw=np.zeros(dim), folds=np.zeros(dim, dtype=np.int64))
        return cls(mode=mode, values=base, decay=decay)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def value(self) -> np.ndarray:
        """Current per-class mean holdout losses (debiased in ewma mode)."""
        if self.mode == FULL:
            return self.values
        denom = 1.0 - self.decay ** self.folds
        with np.errstate(invalid="ignore", divide="ignore"):
            debiased = self.raw / denom
        return np.where(denom > 0, debiased, self.values)


def compute_alpha(
    target_losses: np.ndarray,
    expert_losses: np.ndarray,
    tracker: HoldoutLossTracker,
    clip: bool = True,
    include_holdout: bool = True,
) -> np.ndarray:
    """Per-class objective value for the selected batch.

    alpha_c = sum_i excess(i, c) - mean_holdout_loss_c, where the sum runs
    over the selected points and the excess is clipped at zero when ``clip``
    is set. An empty batch leaves only the negated holdout term.
    """
    expert_losses = np.asarray(expert_losses, dtype=np.float64)
    if expert_losses.ndim != 2 or expert_losses.shape[0] != tracker.dim:
        raise InvalidInputError(
            f"expert losses must be ({tracker.dim}, n), got {expert_losses.shape}"
        )
    target_losses = np.asarray(target_losses, dtype=np.float64)
    if target_losses.shape != (expert_losses.shape[1],):
        raise InvalidInputError("target losses must align with expert losses")
    alpha = excess_losses(target_losses, expert_losses, clip).sum(axis=1)
    if include_holdout:
        alpha = alpha - tracker.value()
    return alpha


def refresh_holdout_full(
    tracker: HoldoutLossTracker,
    target: learner.LearnerState,
    holdout_X: np.ndarray,
    holdout_y: np.ndarray,
    group_of: np.ndarray | None = None,
) -> HoldoutLossTracker:
    """Recompute per-class (or per-group) mean losses on the full holdout.

    Matches ``learner.evaluate`` bitwise at class granularity; group values
    are example-weighted means over the member classes. A class or group
    with no holdout examples is a configuration error.
    """
    ev = learner.evaluate(target, holdout_X, holdout_y)
    if group_of is None:
        values = ev.mean_loss
    else:
        values = _group_means(ev, np.asarray(group_of, dtype=np.int64))
    if values.shape[0] != tracker.dim:
        raise InvalidInputError("tracker dimension does not match the holdout losses")
    if not np.all(np.isfinite(values)):
        missing = np.flatnonzero(~np.isfinite(values))
        raise InvalidInputError(
            f"holdout split has no examples for classes/groups {missing.tolist()}"
        )
    return replace(tracker, values=values)


def _group_means(ev: learner.EvalResult, group_of: np.ndarray) -> np.ndarray:
    n_groups = int(group_of.max()) + 1
    sums = np.zeros(n_groups)
    counts = np.zeros(n_groups)
    loss_sums = np.where(ev.counts > 0, ev.mean_loss * ev.counts, 0.0)
    np.add.at(sums, group_of, loss_sums)
    np.add.at(counts, group_of, ev.counts)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / counts, np.nan)


def refresh_holdout_ewma(
    tracker: HoldoutLossTracker,
    target: learner.LearnerState,
    holdout_X: np.ndarray,
    holdout_y: np.ndarray,
    batch_size: int,
    rng: Rng,
    group_of: np.ndarray | None = None,
) -> HoldoutLossTracker:
    """Fold one uniformly sampled holdout batch into the debiased EWMA."""
    if tracker.mode != EWMA:
        raise InvalidInputError("tracker is not in ewma mode")
    if batch_size < 1:
        raise InvalidInputError("ewma batch size must be >= 1")
    idx = rng.integers(0, holdout_y.shape[0], size=batch_size)
    batch = learner.WeightedBatch(holdout_X[idx], holdout_y[idx])
    losses = learner.per_example_loss(target, batch)
    keys = batch.labels if group_of is None else np.asarray(group_of)[batch.labels]
    sums = np.bincount(keys, weights=losses, minlength=tracker.dim)
    counts = np.bincount(keys, minlength=tracker.dim)
    return fold_ewma(tracker, sums, counts)


def fold_ewma(
    tracker: HoldoutLossTracker, loss_sums: np.ndarray, counts: np.ndarray
) -> HoldoutLossTracker:
    """raw_c <- a raw_c + (1 - a) batch_mean_c for classes present in the
    batch; absent classes keep raw and fold count unchanged."""
    present = counts > 0
    a = tracker.decay
    raw = tracker.raw.copy()
    folds = tracker.folds.copy()
    with np.errstate(invalid="ignore"):
        means = np.where(present, loss_sums / np.maximum(counts, 1), 0.0)
    raw[present] = a * raw[present] + (1.0 - a) * means[present]
    folds[present] += 1
    return replace(tracker, raw=raw, folds=folds)
