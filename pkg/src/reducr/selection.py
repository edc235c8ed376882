"""Batch selection rules over a candidate batch.

Five rules share one result shape:

* ``uniform``    k distinct indices uniformly without replacement.
* ``trainloss``  rank candidates by descending training loss, then sample k
  without replacement from the rank distribution p_i proportional to
  s_e^(-i / n), renormalizing after each draw.
* ``rholoss``    top-k by excess loss against a single reference model,
  no clipping, no class weights.
* ``reducr``     top-k by the weighted sum over classes of clipped excess
  losses against the per-class experts. The class-holdout term is point-
  independent and weights sum to one, so it is factored out of the score
  and only enters the weight update.
* ``payoff``     per candidate the minimum over classes of (target loss -
  expert loss - mean class-holdout loss), un-clipped; top-k of these
  min-scores.

Per-candidate loss matrices computed during scoring are kept on the result
so the caller can reuse them (the class-weight update needs the selected
columns).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, learner
from .class_weights import HoldoutLossTracker
from .errors import InvalidInputError
from .numerics import Rng, top_k_indices

RULES = ("uniform", "trainloss", "rholoss", "reducr", "payoff")


@dataclass
class SelectionContext:
    """Everything a rule may need; rules ignore fields they don't use."""

    k: int
    rng: Rng
    target: learner.LearnerState | None = None
    expert_states: list[learner.LearnerState] | None = None  # index = class/group id
    reference: learner.LearnerState | None = None
    weights: np.ndarray | None = None
    tracker: HoldoutLossTracker | None = None
    clip: bool = True
    selection_pressure: float = 100.0
    drop_model_loss: bool = False
    drop_expert_term: bool = False


@dataclass
class SelectionResult:
    indices: np.ndarray  # (k,) distinct, ascending
    scores: np.ndarray | None = None  # per-candidate scores (rule-specific)
    target_losses: np.ndarray | None = field(default=None, repr=False)
    expert_losses: np.ndarray | None = field(default=None, repr=False)  # (E, n)


def _target_losses(state, X, y):
    return learner.per_example_loss(state, learner.WeightedBatch(X, y))


def expert_loss_matrix(expert_states, X, y) -> np.ndarray:
    """Per-expert per-candidate cross-entropy, rows in expert-id order."""
    return np.stack([_target_losses(s, X, y) for s in expert_states])


def _reducr_inputs(X, y, ctx: SelectionContext):
    if ctx.expert_states is None or ctx.weights is None:
        raise InvalidInputError("reducr needs expert states and class weights")
    if len(ctx.expert_states) != ctx.weights.shape[0]:
        raise InvalidInputError(
            f"{len(ctx.expert_states)} experts but {ctx.weights.shape[0]} weights"
        )
    n = y.shape[0]
    if ctx.drop_model_loss:
        tl = np.zeros(n)
    else:
        tl = _target_losses(ctx.target, X, y)
    if ctx.drop_expert_term:
        el = np.zeros((len(ctx.expert_states), n))
    else:
        el = expert_loss_matrix(ctx.expert_states, X, y)
    return tl, el


def score_reducr(X, y, ctx: SelectionContext) -> SelectionResult:
    """Weighted clipped excess-loss score per candidate (holdout term
    omitted; it cancels in the argmax)."""
    tl, el = _reducr_inputs(X, y, ctx)
    scores = kernels.weighted_excess_scores(tl, el, ctx.weights, ctx.clip)
    return SelectionResult(
        indices=np.empty(0, dtype=np.int64),
        scores=scores,
        target_losses=tl,
        expert_losses=el,
    )


def select_reducr(X, y, ctx: SelectionContext) -> SelectionResult:
    res = score_reducr(X, y, ctx)
    res.indices = top_k_indices(res.scores, ctx.k, ctx.rng)
    return res


def select_rho(X, y, target, reference, k, rng) -> SelectionResult:
    """Top-k by target loss minus reference-model loss."""
    tl = _target_losses(target, X, y)
    rl = _target_losses(reference, X, y)
    scores = tl - rl
    return SelectionResult(
        indices=top_k_indices(scores, k, rng),
        scores=scores,
        target_losses=tl,
    )


def select_trainloss(X, y, target, k, selection_pressure, rng) -> SelectionResult:
    """Rank-distribution sampling by training loss (sequential draws
    without replacement, renormalizing after each)."""
    if not selection_pressure > 1:
        raise InvalidInputError("selection pressure must be > 1")
    losses = _target_losses(target, X, y)
    n = losses.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} must satisfy 1 <= k <= {n}")
    order = np.argsort(-losses, kind="stable")  # order[i] = candidate of rank i+1
    weights = selection_pressure ** (-(np.arange(1, n + 1)) / n)
    chosen = np.empty(k, dtype=np.int64)
    remaining = np.arange(n)
    for t in range(k):
        probs = weights[remaining]
        pos = rng.choice(remaining.size, p=probs / probs.sum())
        chosen[t] = order[remaining[pos]]
        remaining = np.delete(remaining, pos)
    return SelectionResult(
        indices=np.sort(chosen), scores=losses, target_losses=losses
    )


def select_uniform(n_candidates, k, rng) -> SelectionResult:
    """k distinct indices uniformly without replacement."""
    if not 1 <= k <= n_candidates:
        raise InvalidInputError(f"k={k} must satisfy 1 <= k <= {n_candidates}")
    idx = rng.choice(n_candidates, size=k, replace=False)
    return SelectionResult(indices=np.sort(idx).astype(np.int64))


def select_payoff(X, y, ctx: SelectionContext) -> SelectionResult:
    """Top-k of per-candidate min over classes of the un-clipped objective
    (target loss - expert loss - mean class-holdout loss)."""
    if ctx.expert_states is None or ctx.tracker is None:
        raise InvalidInputError("payoff needs expert states and a holdout tracker")
    tl = _target_losses(ctx.target, X, y)
    el = expert_loss_matrix(ctx.expert_states, X, y)
    scores = kernels.min_payoff_scores(tl, el, ctx.tracker.value())
    return SelectionResult(
        indices=top_k_indices(scores, ctx.k, ctx.rng),
        scores=scores,
        target_losses=tl,
        expert_losses=el,
    )


def select(rule: str, X, y, ctx: SelectionContext) -> SelectionResult:
    """Dispatch a rule name from the config enum."""
    if rule == "uniform":
        return select_uniform(y.shape[0], ctx.k, ctx.rng)
    if rule == "trainloss":
        return select_trainloss(X, y, ctx.target, ctx.k, ctx.selection_pressure, ctx.rng)
    if rule == "rholoss":
        if ctx.reference is None:
            raise InvalidInputError("rholoss needs a reference model")
        return select_rho(X, y, ctx.target, ctx.reference, ctx.k, ctx.rng)
    if rule == "reducr":
        return select_reducr(X, y, ctx)
    if rule == "payoff":
        return select_payoff(X, y, ctx)
    raise InvalidInputError(f"unknown selection rule {rule!r}; choose from {RULES}")
