"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version with explicit loops
(sequential reduction order, compiled with ``cache=True``) and a pure-numpy
vectorized fallback. The active backend is chosen once at import time from
the ``REDUCR_BACKEND`` environment variable:

    REDUCR_BACKEND=numba   force the compiled kernels (error if numba absent)
    REDUCR_BACKEND=numpy   force the numpy fallback
    unset / "auto"         numba when importable, numpy otherwise

Both backends are deterministic for fixed inputs within one process; they
may differ from each other in the last ulp because the numpy fallback sums
through BLAS. ``benchmarks/bench_kernels.py`` compares the two.

All kernels take C-contiguous float64 arrays (int64 labels) and perform no
validation; callers validate.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "REDUCR_BACKEND"


def _resolve_backend() -> str:
    requested = os.environ.get(_ENV_FLAG, "auto").strip().lower() or "auto"
    if requested not in ("auto", "numba", "numpy"):
        raise RuntimeError(
            f"{_ENV_FLAG} must be 'numba', 'numpy' or 'auto', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise RuntimeError(f"{_ENV_FLAG}=numba but numba is not importable")
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _linear_ce_np(X, W, b, y):
    Z = X @ W + b
    m = Z.max(axis=1)
    lse = m + np.log(np.exp(Z - m[:, None]).sum(axis=1))
    losses = lse - Z[np.arange(len(y)), y]
    return losses, Z.argmax(axis=1).astype(np.int64)


def _linear_grad_np(X, W, b, y, wts):
    n = len(y)
    Z = X @ W + b
    Z -= Z.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    P[np.arange(n), y] -= 1.0
    P *= (wts / n)[:, None]
    return X.T @ P, P.sum(axis=0)


def _mlp_ce_np(X, W1, b1, W2, b2, y):
    A = np.tanh(X @ W1 + b1)
    return _linear_ce_np(A, W2, b2, y)


def _mlp_grad_np(X, W1, b1, W2, b2, y, wts):
    n = len(y)
    A = np.tanh(X @ W1 + b1)
    Z = A @ W2 + b2
    Z -= Z.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    P[np.arange(n), y] -= 1.0
    P *= (wts / n)[:, None]
    gW2 = A.T @ P
    gb2 = P.sum(axis=0)
    D1 = (P @ W2.T) * (1.0 - A * A)
    return X.T @ D1, D1.sum(axis=0), gW2, gb2


def _weighted_excess_scores_np(target_losses, expert_losses, weights, clip):
    diff = target_losses[None, :] - expert_losses
    if clip:
        diff = np.maximum(diff, 0.0)
    return weights @ diff


def _min_payoff_scores_np(target_losses, expert_losses, holdout_losses):
    diff = target_losses[None, :] - expert_losses - holdout_losses[:, None]
    return diff.min(axis=0)


def _class_sums_np(losses, preds, labels, n_classes):
    loss_sum = np.bincount(labels, weights=losses, minlength=n_classes)
    correct = np.bincount(labels[preds == labels], minlength=n_classes)
    count = np.bincount(labels, minlength=n_classes)
    return loss_sum, correct.astype(np.int64), count.astype(np.int64)


_NUMPY = {
    "linear_ce": _linear_ce_np,
    "linear_grad": _linear_grad_np,
    "mlp_ce": _mlp_ce_np,
    "mlp_grad": _mlp_grad_np,
    "weighted_excess_scores": _weighted_excess_scores_np,
    "min_payoff_scores": _min_payoff_scores_np,
    "class_sums": _class_sums_np,
}


# ---------------------------------------------------------------------------
# numba implementations (loop form, sequential reductions)
# ---------------------------------------------------------------------------


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def linear_ce(X, W, b, y):
        n, d = X.shape
        C = W.shape[1]
        losses = np.empty(n)
        preds = np.empty(n, dtype=np.int64)
        z = np.empty(C)
        for i in range(n):
            zmax = -np.inf
            arg = 0
            for c in range(C):
                acc = b[c]
                for j in range(d):
                    acc += X[i, j] * W[j, c]
                z[c] = acc
                if acc > zmax:
                    zmax = acc
                    arg = c
            s = 0.0
            for c in range(C):
                s += np.exp(z[c] - zmax)
            losses[i] = np.log(s) - (z[y[i]] - zmax)
            preds[i] = arg
        return losses, preds

    @njit(cache=True)
    def linear_grad(X, W, b, y, wts):
        n, d = X.shape
        C = W.shape[1]
        gW = np.zeros((d, C))
        gb = np.zeros(C)
        p = np.empty(C)
        for i in range(n):
            if wts[i] == 0.0:
                continue
            zmax = -np.inf
            for c in range(C):
                acc = b[c]
                for j in range(d):
                    acc += X[i, j] * W[j, c]
                p[c] = acc
                if acc > zmax:
                    zmax = acc
            s = 0.0
            for c in range(C):
                p[c] = np.exp(p[c] - zmax)
                s += p[c]
            scale = wts[i] / n
            for c in range(C):
                delta = p[c] / s
                if c == y[i]:
                    delta -= 1.0
                t = delta * scale
                gb[c] += t
                for j in range(d):
                    gW[j, c] += X[i, j] * t
        return gW, gb

    @njit(cache=True)
    def mlp_ce(X, W1, b1, W2, b2, y):
        n, d = X.shape
        h = W1.shape[1]
        C = W2.shape[1]
        losses = np.empty(n)
        preds = np.empty(n, dtype=np.int64)
        a = np.empty(h)
        z = np.empty(C)
        for i in range(n):
            for j in range(h):
                acc = b1[j]
                for u in range(d):
                    acc += X[i, u] * W1[u, j]
                a[j] = np.tanh(acc)
            zmax = -np.inf
            arg = 0
            for c in range(C):
                acc = b2[c]
                for j in range(h):
                    acc += a[j] * W2[j, c]
                z[c] = acc
                if acc > zmax:
                    zmax = acc
                    arg = c
            s = 0.0
            for c in range(C):
                s += np.exp(z[c] - zmax)
            losses[i] = np.log(s) - (z[y[i]] - zmax)
            preds[i] = arg
        return losses, preds

    @njit(cache=True)
    def mlp_grad(X, W1, b1, W2, b2, y, wts):
        n, d = X.shape
        h = W1.shape[1]
        C = W2.shape[1]
        gW1 = np.zeros((d, h))
        gb1 = np.zeros(h)
        gW2 = np.zeros((h, C))
        gb2 = np.zeros(C)
        a = np.empty(h)
        p = np.empty(C)
        for i in range(n):
            if wts[i] == 0.0:
                continue
            for j in range(h):
                acc = b1[j]
                for u in range(d):
                    acc += X[i, u] * W1[u, j]
                a[j] = np.tanh(acc)
            zmax = -np.inf
            for c in range(C):
                acc = b2[c]
                for j in range(h):
                    acc += a[j] * W2[j, c]
                p[c] = acc
                if acc > zmax:
                    zmax = acc
            s = 0.0
            for c in range(C):
                p[c] = np.exp(p[c] - zmax)
                s += p[c]
            scale = wts[i] / n
            for c in range(C):
                delta = p[c] / s
                if c == y[i]:
                    delta -= 1.0
                p[c] = delta * scale
            for c in range(C):
                gb2[c] += p[c]
                for j in range(h):
                    gW2[j, c] += a[j] * p[c]
            for j in range(h):
                back = 0.0
                for c in range(C):
                    back += p[c] * W2[j, c]
                back *= 1.0 - a[j] * a[j]
                gb1[j] += back
                for u in range(d):
                    gW1[u, j] += X[i, u] * back
        return gW1, gb1, gW2, gb2

    @njit(cache=True)
    def weighted_excess_scores(target_losses, expert_losses, weights, clip):
        E, n = expert_losses.shape
        scores = np.zeros(n)
        for i in range(n):
            acc = 0.0
            for e in range(E):
                diff = target_losses[i] - expert_losses[e, i]
                if clip and diff < 0.0:
                    diff = 0.0
                acc += weights[e] * diff
            scores[i] = acc
        return scores

    @njit(cache=True)
    def min_payoff_scores(target_losses, expert_losses, holdout_losses):
        E, n = expert_losses.shape
        scores = np.empty(n)
        for i in range(n):
            best = np.inf
            for e in range(E):
                v = target_losses[i] - expert_losses[e, i] - holdout_losses[e]
                if v < best:
                    best = v
            scores[i] = best
        return scores

    @njit(cache=True)
    def class_sums(losses, preds, labels, n_classes):
        loss_sum = np.zeros(n_classes)
        correct = np.zeros(n_classes, dtype=np.int64)
        count = np.zeros(n_classes, dtype=np.int64)
        for i in range(labels.shape[0]):
            c = labels[i]
            loss_sum[c] += losses[i]
            count[c] += 1
            if preds[i] == c:
                correct[c] += 1
        return loss_sum, correct, count

    return {
        "linear_ce": linear_ce,
        "linear_grad": linear_grad,
        "mlp_ce": mlp_ce,
        "mlp_grad": mlp_grad,
        "weighted_excess_scores": weighted_excess_scores,
        "min_payoff_scores": min_payoff_scores,
        "class_sums": class_sums,
    }


_NUMBA = _build_numba() if BACKEND == "numba" else None

_ACTIVE = _NUMBA if BACKEND == "numba" else _NUMPY

linear_ce = _ACTIVE["linear_ce"]
linear_grad = _ACTIVE["linear_grad"]
mlp_ce = _ACTIVE["mlp_ce"]
mlp_grad = _ACTIVE["mlp_grad"]
weighted_excess_scores = _ACTIVE["weighted_excess_scores"]
min_payoff_scores = _ACTIVE["min_payoff_scores"]
class_sums = _ACTIVE["class_sums"]


def implementations() -> dict[str, dict]:
    """Kernel tables for both backends (for tests and the benchmark).

    The numba table is built on demand even when the numpy fallback is
    active, and is None when numba is not importable.
    """
    global _NUMBA
    if _NUMBA is None:
        try:
            _NUMBA = _build_numba()
        except ImportError:
            pass
    return {"numpy": _NUMPY, "numba": _NUMBA}
