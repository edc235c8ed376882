"""Experiment configuration: every scalar knob of a run, plus the flat
key-value config-file format.

Config files are plain text, one ``key = value`` per line, ``#`` comments,
versioned by a mandatory ``spec_version`` key. Unknown keys are errors.
Values given on the command line override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data import DataPool, ImbalanceSpec, SuperclassMap
from .errors import ConfigError, InvalidInputError
from .selection import RULES

SPEC_VERSION = 1

CHECKPOINT_POLICIES = (
    "best-average-validation",
    "best-worst-class-validation",
    "final",
)

ARCHITECTURES = ("softmax", "mlp")
TRACKER_MODES = ("full", "ewma")


@dataclass(frozen=True)
class ExperimentConfig:
    # selection rule and problem shape
    rule: str = "reducr"
    c: int = 4
    d: int = 10
    # synthetic data generation
    data: str = "synthetic"
    n_train: int = 8000
    n_holdout: int = 2000
    n_test: int = 2000
    separation: float = 5.0
    label_noise: float = 0.0
    data_seed: int = 0
    # csv ingestion
    train_frac: float = 0.8
    holdout_frac: float = 0.1
    test_frac: float = 0.1
    standardize: bool = False
    # online selection loop
    large_batch: int = 320
    select_k: int | None = None  # default: select_fraction * large_batch
    select_fraction: float = 0.10
    steps: int = 1000
    eta: float = 1e-4
    gamma: float = 9.0
    selection_pressure: float = 100.0
    clip: bool = True
    # holdout-loss tracker
    tracker_mode: str = "full"
    ewma_decay: float = 0.99
    ewma_batch: int = 320
    eval_every: int = 25
    # streaming imbalance
    imbalance_class: int | None = None
    imbalance_p: float | None = None
    imbalance_experts: bool = True
    # superclasses: group id per class, empty = off
    superclasses: tuple[int, ...] = ()
    # checkpointing and learner
    checkpoint_policy: str = "best-worst-class-validation"
    arch: str = "softmax"
    hidden: int = 32
    learning_rate: float = 0.1
    # expert training
    expert_steps: int = 2000
    expert_batch: int = 64
    expert_lr: float = 0.1
    expert_seed: int = 0
    # ablation switches
    drop_model_loss: bool = False
    drop_expert_term: bool = False
    drop_holdout_term: bool = False
    # seeds
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    rules: tuple[str, ...] = field(default=())

    @property
    def k(self) -> int:
        if self.select_k is not None:
            return self.select_k
        return max(1, round(self.select_fraction * self.large_batch))

    @property
    def superclass_map(self) -> SuperclassMap | None:
        if not self.superclasses:
            return None
        return SuperclassMap(
            group_of=self.superclasses, n_groups=max(self.superclasses) + 1
        )

    @property
    def effective_dim(self) -> int:
        smap = self.superclass_map
        return smap.n_groups if smap is not None else self.c

    @property
    def imbalance(self) -> ImbalanceSpec | None:
        if self.imbalance_class is None:
            return None
        return ImbalanceSpec(class_id=self.imbalance_class, p=self.imbalance_p)

    def validate(self, pool: DataPool | None = None) -> None:
        if self.rule not in RULES:
            raise ConfigError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.c < 2 or self.d < 1:
            raise ConfigError("need c >= 2 and d >= 1")
        if not 1 <= self.k <= self.large_batch:
            raise ConfigError(
                f"select_k={self.k} must satisfy 1 <= k <= large_batch={self.large_batch}"
            )
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if not self.gamma > 0:
            raise ConfigError("gamma must be > 0")
        if not self.selection_pressure > 1:
            raise ConfigError("selection_pressure must be > 1")
        if not self.learning_rate > 0 or not self.expert_lr > 0:
            raise ConfigError("learning rates must be > 0")
        if self.tracker_mode not in TRACKER_MODES:
            raise ConfigError(f"tracker_mode must be one of {TRACKER_MODES}")
        if not 0 <= self.ewma_decay <= 1:
            raise ConfigError("ewma_decay must lie in [0, 1]")
        if self.ewma_batch < 1 or self.eval_every < 1:
            raise ConfigError("ewma_batch and eval_every must be >= 1")
        if not 0 <= self.label_noise < 1:
            raise ConfigError("label_noise must lie in [0, 1)")
        if self.checkpoint_policy not in CHECKPOINT_POLICIES:
            raise ConfigError(
                f"checkpoint_policy must be one of {CHECKPOINT_POLICIES}"
            )
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"arch must be one of {ARCHITECTURES}")
        if self.arch == "mlp" and self.hidden < 1:
            raise ConfigError("hidden must be >= 1 for the mlp architecture")
        if (self.imbalance_class is None) != (self.imbalance_p is None):
            raise ConfigError(
                "imbalance_class and imbalance_p must be set together"
            )
        if self.imbalance is not None:
            try:
                self.imbalance.probabilities(self.c)
            except InvalidInputError as exc:
                raise ConfigError(str(exc)) from None
        if self.superclasses:
            if len(self.superclasses) != self.c:
                raise ConfigError(
                    f"superclasses must list one group per class ({self.c} entries)"
                )
            smap = self.superclass_map  # validates the partition
            if smap.n_groups >= self.c:
                raise ConfigError("superclasses must merge at least two classes")
        for r in self.rules:
            if r not in RULES:
                raise ConfigError(f"unknown rule {r!r} in rules")
        if pool is not None:
            if pool.C != self.c:
                raise ConfigError(f"pool has C={pool.C}, config says c={self.c}")
            if pool.d != self.d:
                raise ConfigError(f"pool has d={pool.d}, config says d={self.d}")
            from .data import HOLDOUT  # local to avoid name clash at module top

            counts = pool.class_counts(HOLDOUT)
            missing = [c for c in range(pool.C) if counts[c] == 0]
            if missing:
                raise ConfigError(
                    f"holdout split has no examples of classes {missing}; "
                    "the per-class holdout loss is undefined"
                )


def apply_superclass_map(
    config: ExperimentConfig, smap: SuperclassMap
) -> ExperimentConfig:
    """Rebase the run on superclasses: weights, experts, and the tracker
    take dimension |G|; per-class evaluation stays at class granularity."""
    if len(smap.group_of) != config.c:
        raise ConfigError("superclass map must cover every class once")
    return dataclasses.replace(config, superclasses=tuple(smap.group_of))


# ---------------------------------------------------------------------------
# flat key-value config files
# ---------------------------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def config_keys() -> list[str]:
    return list(_FIELDS)


def _parse_int_tuple(value: str) -> tuple[int, ...]:
    value = value.strip()
    if not value:
        return ()
    if ".." in value:
        lo, hi = value.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in value.replace(",", " ").split())


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _coerce(key: str, value: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    ftype = _FIELDS[key].type
    value = value.strip()
    try:
        if key in ("seeds", "superclasses"):
            return _parse_int_tuple(value)
        if key == "rules":
            return tuple(v for v in value.replace(",", " ").split())
        if ftype == "bool":
            return _parse_bool(value)
        if ftype.startswith("int | None"):
            return None if value.lower() in ("", "none") else int(value)
        if ftype.startswith("float | None"):
            return None if value.lower() in ("", "none") else float(value)
        if ftype == "int":
            return int(value)
        if ftype == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Key-value lines -> raw string mapping; checks spec_version."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    version = raw.pop("spec_version", None)
    if version is None:
        raise ConfigError(f"{source}: missing spec_version key")
    if int(version) != SPEC_VERSION:
        raise ConfigError(
            f"{source}: spec_version {version} unsupported (expected {SPEC_VERSION})"
        )
    return raw


def build_config(
    file_values: dict | None = None, overrides: dict | None = None
) -> ExperimentConfig:
    """Merge file values and overrides (overrides win) into a config."""
    merged: dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            merged[key] = _coerce(key, value) if isinstance(value, str) else value
    unknown = set(merged) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**merged)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return build_config(parse_config_text(text, source=str(path)), overrides)


def config_to_dict(config: ExperimentConfig) -> dict:
    """JSON-safe flat view (tuples become lists)."""
    out = {}
    for key in _FIELDS:
        value = getattr(config, key)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out
