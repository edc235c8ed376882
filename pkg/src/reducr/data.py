"""Dataset generation, CSV ingestion, splits, streaming samplers, groups.

A pool stores dense float64 feature rows, integer labels in [0, C), and a
split tag per example (train / holdout / test). Pools are immutable after
construction.

CSV layout: header ``f0,...,f{d-1},label``, UTF-8, newline-delimited, no
quoting. Floats are written with repr so a save/load round-trip reproduces
the exact same values. Exported pools come with a JSON manifest recording
the split counts (rows are written train, then holdout, then test), the
generator parameters, and a content fingerprint.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .numerics import Rng, make_rng

TRAIN, HOLDOUT, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "holdout", "test")


@dataclass(frozen=True)
class DataPool:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, C)
    C: int
    split: np.ndarray  # (n,) int8 in {TRAIN, HOLDOUT, TEST}

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        s = np.ascontiguousarray(self.split, dtype=np.int8)
        if X.ndim != 2 or y.shape != (X.shape[0],) or s.shape != y.shape:
            raise InvalidInputError("features/labels/split shapes disagree")
        if y.size and (y.min() < 0 or y.max() >= self.C):
            raise InvalidInputError(f"labels must lie in [0, {self.C})")
        if s.size and (s.min() < TRAIN or s.max() > TEST):
            raise InvalidInputError("split tags must be train/holdout/test")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "split", s)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def indices(self, split: int) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def subset(self, split: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.indices(split)
        return self.features[idx], self.labels[idx]

    def class_counts(self, split: int) -> np.ndarray:
        return np.bincount(self.labels[self.indices(split)], minlength=self.C)


@dataclass(frozen=True)
class ImbalanceSpec:
    """Streaming class-imbalance: draw the named class with probability p,
    every other class with probability (1 - p) / (C - 1)."""

    class_id: int
    p: float

    def probabilities(self, C: int) -> np.ndarray:
        if not 0 <= self.class_id < C:
            raise InvalidInputError(f"imbalanced class {self.class_id} not in [0, {C})")
        if not 0 < self.p <= 1.0 / C:
            raise InvalidInputError(f"percent imbalance must lie in (0, 1/{C}]")
        probs = np.full(C, (1.0 - self.p) / (C - 1))
        probs[self.class_id] = self.p
        return probs


@dataclass(frozen=True)
class SuperclassMap:
    """Total partition of the classes into groups, as group id per class."""

    group_of: tuple[int, ...]
    n_groups: int

    def __post_init__(self):
        g = self.group_of
        if len(g) < 2:
            raise InvalidInputError("superclass map needs at least 2 classes")
        used = sorted(set(g))
        if used != list(range(self.n_groups)):
            raise InvalidInputError(
                "group ids must be exactly 0..n_groups-1 with every group used"
            )

    @classmethod
    def from_groups(cls, groups: list[list[int]], C: int) -> "SuperclassMap":
        group_of = [-1] * C
        for gid, members in enumerate(groups):
            for c in members:
                if not 0 <= c < C:
                    raise InvalidInputError(f"class {c} not in [0, {C})")
                if group_of[c] != -1:
                    raise InvalidInputError(f"class {c} appears in two groups")
                group_of[c] = gid
        if any(g == -1 for g in group_of):
            missing = [c for c, g in enumerate(group_of) if g == -1]
            raise InvalidInputError(f"classes {missing} are not mapped to any group")
        return cls(group_of=tuple(group_of), n_groups=len(groups))

    def members(self, gid: int) -> list[int]:
        return [c for c, g in enumerate(self.group_of) if g == gid]

    def group_labels(self, labels: np.ndarray) -> np.ndarray:
        lut = np.asarray(self.group_of, dtype=np.int64)
        return lut[labels]


def default_class_means(C: int, d: int, separation: float) -> np.ndarray:
    """One mean per class: separation times the c-th standard basis vector."""
    if C > d:
        raise InvalidInputError(
            f"default means need C <= d (got C={C}, d={d}); pass means explicitly"
        )
    means = np.zeros((C, d))
    means[np.arange(C), np.arange(C)] = separation
    return means


def generate_synthetic(
    C: int,
    d: int,
    n_per_split: tuple[int, int, int],
    class_separation: float,
    label_noise: float,
    seed: int,
    means: np.ndarray | None = None,
) -> DataPool:
    """Isotropic Gaussian cloud per class, balanced within each split.

    Each split holds (as close as possible to) n/C examples per class; after
    sampling, every label is independently flipped to a uniformly chosen
    other class with probability ``label_noise``. ``means`` overrides the
    default scaled-basis class centers (rows are used as-is, so unequal
    pairwise distances give deliberately hard classes).
    """
    if C < 2 or d < 2:
        raise InvalidInputError("need C >= 2 and d >= 2")
    if not class_separation > 0:
        raise InvalidInputError("class separation must be positive")
    if not 0 <= label_noise < 1:
        raise InvalidInputError("label-noise rate must lie in [0, 1)")
    if means is None:
        means = default_class_means(C, d, class_separation)
    else:
        means = np.asarray(means, dtype=np.float64)
        if means.shape != (C, d):
            raise InvalidInputError(f"means must have shape ({C}, {d})")
    rng = make_rng(seed)
    feats, labs, tags = [], [], []
    for tag, n in zip((TRAIN, HOLDOUT, TEST), n_per_split):
        if n < 1:
            raise InvalidInputError("every split needs at least one example")
        counts = np.full(C, n // C)
        counts[: n % C] += 1
        y = np.repeat(np.arange(C), counts)
        X = rng.standard_normal((n, d)) + means[y]
        flip = rng.random(n) < label_noise
        if flip.any():
            offset = rng.integers(1, C, size=int(flip.sum()))
            y = y.copy()
            y[flip] = (y[flip] + offset) % C
        feats.append(X)
        labs.append(y)
        tags.append(np.full(n, tag, dtype=np.int8))
    return DataPool(
        features=np.concatenate(feats),
        labels=np.concatenate(labs),
        C=C,
        split=np.concatenate(tags),
    )


# ---------------------------------------------------------------------------
# CSV + manifest I/O
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """How to turn a bare CSV into a pool: split fractions, split seed,
    class count (inferred from labels when None), optional feature
    standardization (zero mean, unit variance over all rows)."""

    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    C: int | None = None
    standardize: bool = False


def pool_fingerprint(pool: DataPool) -> str:
    h = hashlib.sha256()
    h.update(np.int64(pool.C).tobytes())
    h.update(pool.features.tobytes())
    h.update(pool.labels.tobytes())
    h.update(pool.split.tobytes())
    return h.hexdigest()[:16]


def save_csv(pool: DataPool, csv_path, manifest_path=None, generator: dict | None = None) -> None:
    """Write the pool ordered train, holdout, test, plus a JSON manifest."""
    csv_path = Path(csv_path)
    order = np.concatenate([pool.indices(s) for s in (TRAIN, HOLDOUT, TEST)])
    header = ",".join([f"f{j}" for j in range(pool.d)] + ["label"])
    lines = [header]
    for i in order:
        row = ",".join(repr(float(v)) for v in pool.features[i])
        lines.append(f"{row},{pool.labels[i]}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if manifest_path is not None:
        manifest = {
            "format": 1,
            "csv": csv_path.name,
            "c": pool.C,
            "d": pool.d,
            "counts": {
                name: int(pool.indices(s).size)
                for name, s in zip(SPLIT_NAMES, (TRAIN, HOLDOUT, TEST))
            },
            "order": "train,holdout,test",
            "fingerprint": pool_fingerprint(pool),
        }
        if generator:
            manifest["generator"] = generator
        Path(manifest_path).write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )


def _parse_csv_rows(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if len(cols) < 2 or cols[-1] != "label":
            raise ParseError(f"{path}: header must end with a 'label' column", line=1)
        d = len(cols) - 1
        expected = [f"f{j}" for j in range(d)]
        if cols[:-1] != expected:
            raise ParseError(
                f"{path}: feature columns must be f0..f{d-1}", line=1
            )
        feats, labs = [], []
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            if len(parts) != d + 1:
                raise ParseError(
                    f"{path}: expected {d + 1} fields, got {len(parts)}", line=lineno
                )
            try:
                feats.append([float(v) for v in parts[:-1]])
            except ValueError:
                raise ParseError(f"{path}: non-numeric feature", line=lineno) from None
            try:
                labs.append(int(parts[-1]))
            except ValueError:
                raise ParseError(f"{path}: non-integer label", line=lineno) from None
            if labs[-1] < 0:
                raise ParseError(f"{path}: negative label", line=lineno)
    if not labs:
        raise ParseError(f"{path}: no data rows")
    return np.asarray(feats, dtype=np.float64), np.asarray(labs, dtype=np.int64)


def load_csv(path, schema: CsvSchema = CsvSchema()) -> DataPool:
    """Load a bare CSV and assign splits by the schema's fractions + seed."""
    X, y = _parse_csv_rows(path)
    C = schema.C if schema.C is not None else int(y.max()) + 1
    if y.max() >= C:
        bad = int(np.argmax(y >= C)) + 2
        raise ParseError(f"{path}: label >= C={C}", line=bad)
    if abs(sum(schema.fractions) - 1.0) > 1e-9:
        raise InvalidInputError("split fractions must sum to 1")
    n = y.shape[0]
    n_tr = int(n * schema.fractions[0])
    n_ho = int(n * schema.fractions[1])
    perm = make_rng(schema.seed, stream=7).permutation(n)
    split = np.empty(n, dtype=np.int8)
    split[perm[:n_tr]] = TRAIN
    split[perm[n_tr : n_tr + n_ho]] = HOLDOUT
    split[perm[n_tr + n_ho :]] = TEST
    if schema.standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - mu) / sd
    return DataPool(features=X, labels=y, C=C, split=split)


def load_pool(manifest_path) -> DataPool:
    """Reload an exported pool exactly, splits included."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != 1:
        raise InvalidInputError(f"{manifest_path}: unsupported manifest format")
    X, y = _parse_csv_rows(manifest_path.parent / manifest["csv"])
    counts = manifest["counts"]
    n = sum(counts[name] for name in SPLIT_NAMES)
    if n != y.shape[0]:
        raise InvalidInputError(
            f"{manifest_path}: manifest counts ({n}) != csv rows ({y.shape[0]})"
        )
    split = np.concatenate(
        [
            np.full(counts[name], tag, dtype=np.int8)
            for name, tag in zip(SPLIT_NAMES, (TRAIN, HOLDOUT, TEST))
        ]
    )
    pool = DataPool(features=X, labels=y, C=int(manifest["c"]), split=split)
    expected = manifest.get("fingerprint")
    if expected and pool_fingerprint(pool) != expected:
        raise InvalidInputError(f"{manifest_path}: fingerprint mismatch")
    return pool


# ---------------------------------------------------------------------------
# streaming sampler
# ---------------------------------------------------------------------------


def sample_large_batch(
    pool: DataPool,
    size: int,
    spec: ImbalanceSpec | None,
    rng: Rng,
) -> np.ndarray:
    """Candidate-batch indices drawn with replacement from the train split.

    Without a spec the draw is uniform over train examples. With a spec,
    each draw first picks a class (the imbalanced one with probability p,
    each other with (1 - p) / (C - 1)) and then a uniform train example of
    that class.
    """
    if size < 1:
        raise InvalidInputError("batch size must be >= 1")
    train_idx = pool.indices(TRAIN)
    if train_idx.size == 0:
        raise InvalidInputError("train split is empty")
    if spec is None:
        return train_idx[rng.integers(0, train_idx.size, size=size)]
    probs = spec.probabilities(pool.C)
    per_class = [train_idx[pool.labels[train_idx] == c] for c in range(pool.C)]
    empty = [c for c, idx in enumerate(per_class) if idx.size == 0]
    if empty:
        raise InvalidInputError(f"train split has no examples of classes {empty}")
    classes = rng.choice(pool.C, size=size, p=probs)
    out = np.empty(size, dtype=np.int64)
    for i, c in enumerate(classes):
        bucket = per_class[c]
        out[i] = bucket[rng.integers(0, bucket.size)]
    return out
