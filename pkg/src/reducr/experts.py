"""Amortised class-expert training and the single reference model.

An expert for class c (or group G) minimizes the weight-scaled mean
cross-entropy over the holdout split with per-example weight
1 + gamma * 1[label matches], so matching examples are up-weighted; the
reference model is the same procedure with all weights 1 (gamma plays no
role). Training runs for a fixed step budget over uniformly sampled
holdout batches, keeping the checkpoint with the best weighted loss on a
held-in validation slice of the same split (large gamma converges slowly,
so the final iterate is not necessarily the best). Experts are frozen
after training.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import learner
from .data import ImbalanceSpec, SuperclassMap
from .errors import InvalidInputError
from .numerics import make_rng

_VAL_SLICE_MAX = 1024
_VAL_FRACTION = 0.2


@dataclass(frozen=True)
class ExpertBank:
    """One frozen expert per class (or group), all sharing an architecture."""

    experts: dict[int, learner.LearnerState]
    gamma: float
    steps: int

    def __post_init__(self):
        ids = sorted(self.experts)
        if ids != list(range(len(ids))):
            raise InvalidInputError("expert ids must be contiguous from 0")
        archs = {s.arch for s in self.experts.values()}
        if len(archs) > 1:
            raise InvalidInputError("experts must share one architecture")

    def __len__(self) -> int:
        return len(self.experts)

    def states(self) -> list[learner.LearnerState]:
        return [self.experts[i] for i in range(len(self.experts))]


def _member_weights(labels: np.ndarray, members: np.ndarray | None, gamma: float):
    if members is None:
        return np.ones(labels.shape[0])
    return 1.0 + gamma * np.isin(labels, members).astype(np.float64)


def _train(
    X: np.ndarray,
    y: np.ndarray,
    arch: learner.Architecture,
    members: np.ndarray | None,
    gamma: float,
    steps: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    draw_batch=None,
) -> learner.LearnerState:
    n = y.shape[0]
    if n == 0:
        raise InvalidInputError("cannot train on an empty split")
    if steps < 1 or batch_size < 1:
        raise InvalidInputError("steps and batch size must be >= 1")
    rng = make_rng(seed, stream=1)
    val_rng = make_rng(seed, stream=2)
    val_size = min(n, max(1, min(_VAL_SLICE_MAX, int(n * _VAL_FRACTION))))
    val_idx = val_rng.choice(n, size=val_size, replace=False)
    val_batch = learner.WeightedBatch(
        X[val_idx], y[val_idx], _member_weights(y[val_idx], members, gamma)
    )
    state = learner.init_learner(arch, seed)
    eval_every = max(1, steps // 25)

    def val_loss(s):
        losses = learner.per_example_loss(s, val_batch)
        return float((losses * val_batch.weights).mean())

    best_state, best_loss = state, val_loss(state)
    for t in range(steps):
        idx = draw_batch(rng) if draw_batch else rng.integers(0, n, size=batch_size)
        batch = learner.WeightedBatch(
            X[idx], y[idx], _member_weights(y[idx], members, gamma)
        )
        state = learner.sgd_step(state, batch, learning_rate)
        if (t + 1) % eval_every == 0 or t == steps - 1:
            loss = val_loss(state)
            if loss < best_loss:
                best_state, best_loss = state, loss
    return best_state


def train_class_expert(
    X: np.ndarray,
    y: np.ndarray,
    arch: learner.Architecture,
    class_id: int,
    gamma: float,
    steps: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    draw_batch=None,
) -> learner.LearnerState:
    """Expert for one class: holdout training with weight 1 + gamma on it."""
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    if y.shape[0] == 0:
        raise InvalidInputError("holdout split is empty")
    if not np.any(y == class_id):
        warnings.warn(
            f"class {class_id} absent from the holdout split; "
            "expert degenerates to the reference objective",
            stacklevel=2,
        )
    return _train(
        X, y, arch, np.asarray([class_id]), gamma, steps, batch_size,
        learning_rate, seed, draw_batch,
    )


def train_reference_model(
    X: np.ndarray,
    y: np.ndarray,
    arch: learner.Architecture,
    steps: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    draw_batch=None,
) -> learner.LearnerState:
    """Same training loop with all weights 1."""
    if y.shape[0] == 0:
        raise InvalidInputError("holdout split is empty")
    return _train(
        X, y, arch, None, 0.0, steps, batch_size, learning_rate, seed, draw_batch
    )


def train_group_experts(
    X: np.ndarray,
    y: np.ndarray,
    arch: learner.Architecture,
    superclass_map: SuperclassMap | None,
    gamma: float,
    steps: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    draw_batch=None,
) -> ExpertBank:
    """One expert per group (per class when no map), weight 1 + gamma on
    examples whose label falls in the group."""
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    C = arch.C
    if superclass_map is None:
        groups = [[c] for c in range(C)]
    else:
        if len(superclass_map.group_of) != C:
            raise InvalidInputError("superclass map does not cover all classes")
        groups = [superclass_map.members(g) for g in range(superclass_map.n_groups)]
    experts = {}
    for gid, members in enumerate(groups):
        experts[gid] = _train(
            X, y, arch, np.asarray(members), gamma, steps, batch_size,
            learning_rate, seed=expert_seed(seed, gid), draw_batch=draw_batch,
        )
    return ExpertBank(experts=experts, gamma=gamma, steps=steps)


def expert_seed(base_seed: int, expert_id: int) -> int:
    """Per-expert child seed; id -1 is reserved for the reference model."""
    return int(
        np.random.SeedSequence(base_seed, spawn_key=(100 + expert_id + 1,))
        .generate_state(1, dtype=np.uint64)[0]
    )


def imbalanced_batch_drawer(labels: np.ndarray, C: int, spec: ImbalanceSpec,
                            batch_size: int):
    """Class-first batch sampler mirroring the streaming imbalance, for use
    as ``draw_batch`` when expert training should see the same skew."""
    probs = spec.probabilities(C)
    buckets = [np.flatnonzero(labels == c) for c in range(C)]
    empty = [c for c, b in enumerate(buckets) if b.size == 0]
    if empty:
        raise InvalidInputError(f"no examples of classes {empty} to sample from")

    def draw(rng):
        classes = rng.choice(C, size=batch_size, p=probs)
        out = np.empty(batch_size, dtype=np.int64)
        for i, c in enumerate(classes):
            bucket = buckets[c]
            out[i] = bucket[rng.integers(0, bucket.size)]
        return out

    return draw


# ---------------------------------------------------------------------------
# bank persistence: one checkpoint per expert + reference + JSON manifest
# ---------------------------------------------------------------------------


def save_bank(
    bank: ExpertBank,
    reference: learner.LearnerState,
    out_dir,
    seed: int,
    extra: dict | None = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for gid, state in bank.experts.items():
        learner.save_checkpoint(state, out_dir / f"expert_{gid}.ckpt")
    learner.save_checkpoint(reference, out_dir / "reference.ckpt")
    manifest = {
        "format": 1,
        "gamma": bank.gamma,
        "steps": bank.steps,
        "seed": seed,
        "expert_seeds": {
            str(gid): expert_seed(seed, gid) for gid in range(len(bank))
        },
        "reference_seed": expert_seed(seed, -1),
        "n_experts": len(bank),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "experts.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_bank(directory) -> tuple[ExpertBank, learner.LearnerState, dict]:
    directory = Path(directory)
    manifest_path = directory / "experts.json"
    if not manifest_path.exists():
        raise InvalidInputError(f"no experts.json manifest in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    experts = {
        gid: learner.load_checkpoint(directory / f"expert_{gid}.ckpt")
        for gid in range(int(manifest["n_experts"]))
    }
    reference = learner.load_checkpoint(directory / "reference.ckpt")
    bank = ExpertBank(
        experts=experts, gamma=manifest["gamma"], steps=manifest["steps"]
    )
    return bank, reference, manifest
