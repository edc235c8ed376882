"""Deterministic numeric primitives used by every other module.

Randomness contract: all randomness flows through numpy ``Generator``
objects backed by the PCG64 bit generator, seeded through ``SeedSequence``.
PCG64 is a fixed, published member of the permuted-congruential family with
documented constants, so a given (seed, stream) pair yields the identical
draw sequence on every platform. Independent streams for one seed are
derived with distinct ``spawn_key`` values; no global RNG state is ever
touched.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

Rng = np.random.Generator


def make_rng(seed: int, stream: int = 0) -> Rng:
    """PCG64 generator for the given seed and stream id."""
    if seed < 0 or stream < 0:
        raise InvalidInputError("seed and stream must be nonnegative")
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, stream: int) -> int:
    """Deterministic child seed for handing to APIs that want an int."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log-probabilities of a logit vector, stable via max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 1:
        raise InvalidInputError("logits must be a non-empty 1-D vector")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def cross_entropy(log_probs: np.ndarray, label: int) -> float:
    """Negative log-probability of the labelled class."""
    lp = np.asarray(log_probs, dtype=np.float64)
    if not 0 <= label < lp.shape[-1]:
        raise InvalidInputError(
            f"label {label} out of range for {lp.shape[-1]} classes"
        )
    return float(-lp[label])


def top_k_indices(scores: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """Indices of the k largest scores, exact ties broken uniformly at random.

    The returned set maximizes the score sum over all size-k subsets. Tie
    detection uses exact float equality: indices scoring strictly above the
    k-th value are always included, and the remaining slots are filled by a
    uniform random draw (without replacement) from the indices exactly equal
    to it. ``rng`` is consumed only when such a boundary tie exists. The
    result is sorted ascending; it is a set, order carries no meaning.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise InvalidInputError("scores must be 1-D")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("scores must be finite")
    n = s.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} must satisfy 1 <= k <= {n}")
    order = np.argsort(-s, kind="stable")
    boundary = s[order[k - 1]]
    sure = np.flatnonzero(s > boundary)
    tied = np.flatnonzero(s == boundary)
    need = k - sure.size
    if need == tied.size:
        chosen = tied
    else:
        chosen = rng.choice(tied, size=need, replace=False)
    return np.sort(np.concatenate([sure, chosen])).astype(np.int64)
