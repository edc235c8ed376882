"""Small differentiable classifiers trained by plain SGD.

Two architectures: softmax regression (with bias) and a one-hidden-layer
tanh MLP. tanh keeps the loss smooth so central finite differences verify
the analytic gradients tightly. All operations are pure: they return new
states and never mutate parameter arrays in place. Gradients are reduced
over the batch in a deterministic order (sequentially in the compiled
backend) for bit-reproducible runs.

Checkpoint format (version 1, little-endian):

    magic   b"RDCK"
    u16     format version (1)
    u8      architecture kind (0 = softmax regression, 1 = MLP)
    u32[n]  dims: (d, C) for kind 0, (d, h, C) for kind 1
    u64     step count
    f64[..] parameter arrays flattened in order, C row-major:
            kind 0: W (d*C), b (C); kind 1: W1, b1, W2, b2
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .numerics import make_rng


@dataclass(frozen=True)
class SoftmaxRegression:
    d: int
    C: int

    def param_shapes(self):
        return ((self.d, self.C), (self.C,))


@dataclass(frozen=True)
class MLP:
    d: int
    h: int
    C: int

    def param_shapes(self):
        return ((self.d, self.h), (self.h,), (self.h, self.C), (self.C,))


Architecture = SoftmaxRegression | MLP


@dataclass(frozen=True)
class LearnerState:
    arch: Architecture
    params: tuple[np.ndarray, ...]
    step_count: int = 0

    @property
    def n_classes(self) -> int:
        return self.arch.C


@dataclass(frozen=True)
class WeightedBatch:
    """Examples plus nonnegative per-example weights (default all 1)."""

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InvalidInputError("features must be (n, d) with n labels")
        w = self.weights
        if w is None:
            w = np.ones(y.shape[0])
        else:
            w = np.ascontiguousarray(w, dtype=np.float64)
            if w.shape != y.shape:
                raise InvalidInputError("weights length must equal batch size")
            if np.any(w < 0):
                raise InvalidInputError("weights must be nonnegative")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class EvalResult:
    """Per-class accuracy and mean loss; NaN where a class is absent."""

    accuracy: np.ndarray
    mean_loss: np.ndarray
    counts: np.ndarray

    @property
    def worst_accuracy(self) -> float:
        return float(self.accuracy.min())

    @property
    def average_accuracy(self) -> float:
        return float(self.accuracy.mean())


def init_learner(arch: Architecture, seed: int) -> LearnerState:
    """Deterministic initial state: zeros for softmax regression,
    scaled-uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero
    biases for the MLP."""
    if arch.d < 1 or arch.C < 2:
        raise InvalidInputError("need d >= 1 and C >= 2")
    if isinstance(arch, SoftmaxRegression):
        params = tuple(np.zeros(s) for s in arch.param_shapes())
    elif isinstance(arch, MLP):
        if arch.h < 1:
            raise InvalidInputError("need h >= 1")
        rng = make_rng(seed)
        lim1 = 1.0 / np.sqrt(arch.d)
        lim2 = 1.0 / np.sqrt(arch.h)
        params = (
            rng.uniform(-lim1, lim1, size=(arch.d, arch.h)),
            np.zeros(arch.h),
            rng.uniform(-lim2, lim2, size=(arch.h, arch.C)),
            np.zeros(arch.C),
        )
    else:
        raise InvalidInputError(f"unknown architecture: {arch!r}")
    return LearnerState(arch=arch, params=params, step_count=0)


def _check_dims(state: LearnerState, X: np.ndarray):
    if X.shape[1] != state.arch.d:
        raise InvalidInputError(
            f"feature dimension {X.shape[1]} != architecture d={state.arch.d}"
        )


def _losses_preds(state: LearnerState, X: np.ndarray, y: np.ndarray):
    _check_dims(state, X)
    if np.any(y < 0) or np.any(y >= state.arch.C):
        raise InvalidInputError("labels out of range for architecture")
    if isinstance(state.arch, SoftmaxRegression):
        return kernels.linear_ce(X, *state.params, y)
    return kernels.mlp_ce(X, *state.params, y)


def per_example_loss(state: LearnerState, batch: WeightedBatch) -> np.ndarray:
    """Cross-entropy of each example under the current parameters.

    Weights are ignored; they only scale gradients.
    """
    losses, _ = _losses_preds(state, batch.features, batch.labels)
    return losses


def predict(state: LearnerState, X: np.ndarray) -> np.ndarray:
    """Argmax-logit class per row."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    dummy = np.zeros(X.shape[0], dtype=np.int64)
    _, preds = _losses_preds(state, X, dummy)
    return preds


def gradient(state: LearnerState, batch: WeightedBatch) -> tuple[np.ndarray, ...]:
    """Analytic gradient of the weight-scaled mean cross-entropy.

    The objective is sum_i w_i * CE_i / n, so all-zero weights give an
    exactly zero gradient.
    """
    _check_dims(state, batch.features)
    if isinstance(state.arch, SoftmaxRegression):
        return kernels.linear_grad(
            batch.features, *state.params, batch.labels, batch.weights
        )
    return kernels.mlp_grad(
        batch.features, *state.params, batch.labels, batch.weights
    )


def sgd_step(
    state: LearnerState, batch: WeightedBatch, learning_rate: float
) -> LearnerState:
    """One plain SGD step: params' = params - lr * grad, step count + 1."""
    if not learning_rate > 0:
        raise InvalidInputError("learning rate must be positive")
    grads = gradient(state, batch)
    new_params = tuple(p - learning_rate * g for p, g in zip(state.params, grads))
    return LearnerState(
        arch=state.arch, params=new_params, step_count=state.step_count + 1
    )


def evaluate(state: LearnerState, X: np.ndarray, y: np.ndarray) -> EvalResult:
    """Per-class accuracy and mean loss over a split.

    Classes with no examples in the split get NaN (undefined), never zero.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if y.shape[0] == 0:
        raise InvalidInputError("cannot evaluate on an empty split")
    losses, preds = _losses_preds(state, X, y)
    C = state.arch.C
    loss_sum, correct, count = kernels.class_sums(losses, preds, y, C)
    with np.errstate(invalid="ignore", divide="ignore"):
        accuracy = np.where(count > 0, correct / count, np.nan)
        mean_loss = np.where(count > 0, loss_sum / count, np.nan)
    return EvalResult(accuracy=accuracy, mean_loss=mean_loss, counts=count)


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

_MAGIC = b"RDCK"
_FORMAT_VERSION = 1
_KIND = {SoftmaxRegression: 0, MLP: 1}


def checkpoint_bytes(state: LearnerState) -> bytes:
    kind = _KIND[type(state.arch)]
    if kind == 0:
        dims = (state.arch.d, state.arch.C)
    else:
        dims = (state.arch.d, state.arch.h, state.arch.C)
    head = struct.pack(
        f"<4sHB{len(dims)}IQ", _MAGIC, _FORMAT_VERSION, kind, *dims,
        state.step_count,
    )
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in state.params)
    return head + body


def save_checkpoint(state: LearnerState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(state))


def load_checkpoint(path) -> LearnerState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise InvalidInputError(f"{path}: not a learner checkpoint")
    (version, kind) = struct.unpack_from("<HB", raw, 4)
    if version != _FORMAT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {version}")
    off = 7
    if kind == 0:
        d, C = struct.unpack_from("<2I", raw, off)
        off += 8
        arch: Architecture = SoftmaxRegression(d, C)
    elif kind == 1:
        d, h, C = struct.unpack_from("<3I", raw, off)
        off += 12
        arch = MLP(d, h, C)
    else:
        raise InvalidInputError(f"{path}: unknown architecture kind {kind}")
    (steps,) = struct.unpack_from("<Q", raw, off)
    off += 8
    params = []
    for shape in arch.param_shapes():
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
        params.append(arr.astype(np.float64))
        off += 8 * n
    if off != len(raw):
        raise InvalidInputError(f"{path}: trailing bytes in checkpoint")
    return LearnerState(arch=arch, params=tuple(params), step_count=steps)
