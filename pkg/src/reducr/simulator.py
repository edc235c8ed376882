"""The online batch-selection loop, checkpoint policies, and sweeps.

Each step t: sample a candidate batch B_t from the train split (with
replacement; optionally class-imbalanced), select b_t with the configured
rule, then - for the class-priority rule - compute the per-class objective
alpha and update the class weights, both with the pre-step model, and only
then take the SGD step on b_t. The holdout-loss tracker is refreshed from
the current model at the start of every epoch (full mode, an epoch being
ceil(|train| / |B_t|) steps) or folded from a random holdout batch every
step (ewma mode). Holdout evaluation runs on its own cadence and feeds the
checkpoint policies.

Every run is single-threaded and fully determined by (config, seed): the
four random streams (candidate sampling, selection tie-breaks, tracker
batches, learner init) are derived from the run seed with fixed stream
ids, so two rules with the same seed see identical candidate streams.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import class_weights as cw
from . import learner, reporting, selection
from .config import ExperimentConfig, config_to_dict
from .data import HOLDOUT, TEST, TRAIN, DataPool, pool_fingerprint, sample_large_batch
from .errors import InvalidInputError
from .experts import ExpertBank
from .numerics import derive_seed, make_rng

STREAM_BATCH = 1
STREAM_SELECT = 2
STREAM_TRACKER = 3
STREAM_INIT = 4

_WEIGHTED_RULES = ("reducr",)
_TRACKER_RULES = ("reducr", "payoff")
_EXPERT_RULES = ("reducr", "payoff")


@dataclass
class BestCheckpoint:
    state: learner.LearnerState
    score: float
    step: int


def checkpoint(
    policy: str,
    current: learner.LearnerState,
    holdout_metrics: learner.EvalResult,
    best: BestCheckpoint | None,
    step: int,
) -> BestCheckpoint:
    """Keep the better state under the policy; ties keep the earlier one."""
    if policy == "best-average-validation":
        score = holdout_metrics.average_accuracy
    elif policy == "best-worst-class-validation":
        score = holdout_metrics.worst_accuracy
    elif policy == "final":
        return BestCheckpoint(state=current, score=float("nan"), step=step)
    else:
        raise InvalidInputError(f"unknown checkpoint policy {policy!r}")
    if best is None or score > best.score:
        return BestCheckpoint(state=current, score=score, step=step)
    return best


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[reporting.MetricsRecord]
    checkpoints: dict[str, learner.LearnerState]
    test_metrics: dict[str, dict]
    selected_indices: list[np.ndarray]  # per step, pool indices
    selected_labels: list[np.ndarray]
    final_weights: np.ndarray | None
    fingerprint: str


def make_arch(config: ExperimentConfig) -> learner.Architecture:
    if config.arch == "softmax":
        return learner.SoftmaxRegression(d=config.d, C=config.c)
    return learner.MLP(d=config.d, h=config.hidden, C=config.c)


def _test_metrics(state, X, y) -> dict:
    ev = learner.evaluate(state, X, y)
    return {
        "accuracy": ev.accuracy.tolist(),
        "worst": ev.worst_accuracy,
        "average": ev.average_accuracy,
    }


def run_experiment(
    config: ExperimentConfig,
    pool: DataPool,
    experts: ExpertBank | None = None,
    reference: learner.LearnerState | None = None,
) -> RunResult:
    config.validate(pool)
    rule = config.rule
    if rule in _EXPERT_RULES:
        if experts is None:
            raise InvalidInputError(f"rule {rule!r} needs an expert bank")
        if len(experts) != config.effective_dim:
            raise InvalidInputError(
                f"expert bank has {len(experts)} experts, "
                f"config needs {config.effective_dim}"
            )
    if rule == "rholoss" and reference is None:
        raise InvalidInputError("rholoss needs a reference model")

    seed = config.seed
    rng_batch = make_rng(seed, STREAM_BATCH)
    rng_select = make_rng(seed, STREAM_SELECT)
    rng_tracker = make_rng(seed, STREAM_TRACKER)
    target = learner.init_learner(make_arch(config), derive_seed(seed, STREAM_INIT))

    holdout_X, holdout_y = pool.subset(HOLDOUT)
    test_X, test_y = pool.subset(TEST)
    smap = config.superclass_map
    group_of = np.asarray(smap.group_of, dtype=np.int64) if smap else None
    dim = config.effective_dim
    epoch_len = math.ceil(pool.indices(TRAIN).size / config.large_batch)

    tracker = None
    if rule in _TRACKER_RULES:
        tracker = cw.HoldoutLossTracker.create(
            config.tracker_mode, dim, decay=config.ewma_decay
        )
        # seeds the values; in ewma mode this is the pre-fold fallback
        tracker = cw.refresh_holdout_full(
            tracker, target, holdout_X, holdout_y, group_of
        )
    weights = cw.init_weights(dim) if rule in _WEIGHTED_RULES else None

    expert_states = experts.states() if experts is not None else None
    policies = ("best-average-validation", "best-worst-class-validation", "final")
    initial = BestCheckpoint(state=target, score=float("-inf"), step=0)
    best: dict[str, BestCheckpoint] = {p: dataclasses.replace(initial) for p in policies}

    records: list[reporting.MetricsRecord] = []
    sel_indices: list[np.ndarray] = []
    sel_labels: list[np.ndarray] = []
    last_eval: tuple[int, learner.EvalResult] | None = None

    for t in range(1, config.steps + 1):
        if tracker is not None:
            if config.tracker_mode == cw.FULL:
                if (t - 1) % epoch_len == 0:
                    tracker = cw.refresh_holdout_full(
                        tracker, target, holdout_X, holdout_y, group_of
                    )
            else:
                tracker = cw.refresh_holdout_ewma(
                    tracker, target, holdout_X, holdout_y,
                    config.ewma_batch, rng_tracker, group_of,
                )

        batch_idx = sample_large_batch(
            pool, config.large_batch, config.imbalance, rng_batch
        )
        X_B = pool.features[batch_idx]
        y_B = pool.labels[batch_idx]
        ctx = selection.SelectionContext(
            k=config.k,
            rng=rng_select,
            target=target,
            expert_states=expert_states,
            reference=reference,
            weights=weights,
            tracker=tracker,
            clip=config.clip,
            selection_pressure=config.selection_pressure,
            drop_model_loss=config.drop_model_loss,
            drop_expert_term=config.drop_expert_term,
        )
        result = selection.select(rule, X_B, y_B, ctx)
        chosen = result.indices
        sel_indices.append(batch_idx[chosen])
        sel_labels.append(y_B[chosen])

        alpha = None
        weights_used = weights.copy() if weights is not None else None
        if rule == "reducr":
            alpha = cw.compute_alpha(
                result.target_losses[chosen],
                result.expert_losses[:, chosen],
                tracker,
                clip=config.clip,
                include_holdout=not config.drop_holdout_term,
            )
            weights = cw.update_weights(weights, alpha, config.eta)

        target = learner.sgd_step(
            target,
            learner.WeightedBatch(X_B[chosen], y_B[chosen]),
            config.learning_rate,
        )

        if t % config.eval_every == 0 or t == config.steps:
            ev = learner.evaluate(target, holdout_X, holdout_y)
            last_eval = (t, ev)
            for policy in policies:
                best[policy] = checkpoint(policy, target, ev, best[policy], t)
        if last_eval is None:
            ev = learner.evaluate(target, holdout_X, holdout_y)
            last_eval = (t, ev)
        eval_step, ev = last_eval
        records.append(
            reporting.MetricsRecord(
                step=t,
                rule=rule,
                seed=seed,
                accuracy=ev.accuracy.tolist(),
                mean_loss=ev.mean_loss.tolist(),
                worst_accuracy=ev.worst_accuracy,
                average_accuracy=ev.average_accuracy,
                eval_step=eval_step,
                weights=None if weights_used is None else weights_used.tolist(),
                alpha=None if alpha is None else alpha.tolist(),
                selected=np.bincount(y_B[chosen], minlength=config.c).tolist(),
            )
        )

    checkpoints = {p: b.state for p, b in best.items()}
    test_metrics = {p: _test_metrics(s, test_X, test_y) for p, s in checkpoints.items()}
    return RunResult(
        config=config,
        records=records,
        checkpoints=checkpoints,
        test_metrics=test_metrics,
        selected_indices=sel_indices,
        selected_labels=sel_labels,
        final_weights=weights,
        fingerprint=pool_fingerprint(pool),
    )


def run_file_rows(result: RunResult):
    """Record-file rows for one run: header, per-step records, result."""
    header = {
        "kind": "run",
        "schema_version": reporting.SCHEMA_VERSION,
        "rule": result.config.rule,
        "seed": result.config.seed,
        "c": result.config.c,
        "fingerprint": result.fingerprint,
        "policy": result.config.checkpoint_policy,
        "config": config_to_dict(result.config),
    }
    footer = {
        "kind": "result",
        "schema_version": reporting.SCHEMA_VERSION,
        "steps": len(result.records),
        "test": result.test_metrics,
    }
    return [header, *result.records, footer]


def write_run_file(result: RunResult, path) -> int:
    return reporting.write_records(run_file_rows(result), path)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    rows: list[reporting.SummaryRow]
    runs: dict[tuple[str, int], RunResult]
    failures: dict[tuple[str, int], str]


def _one_run(args):
    config, pool, experts, reference = args
    return run_experiment(config, pool, experts, reference)


def sweep(
    config: ExperimentConfig,
    pool: DataPool,
    experts: ExpertBank | None = None,
    reference: learner.LearnerState | None = None,
    rules: tuple[str, ...] | None = None,
    seeds: tuple[int, ...] | None = None,
    parallel: int = 1,
) -> SweepResult:
    """All (rule, seed) pairs; failures are recorded and skipped in the
    aggregate, with a warning."""
    rules = rules or config.rules or (config.rule,)
    seeds = seeds or config.seeds
    if not seeds:
        raise InvalidInputError("sweep needs at least one seed")
    jobs = [
        (dataclasses.replace(config, rule=rule, seed=seed), pool, experts, reference)
        for rule in rules
        for seed in seeds
    ]
    runs: dict[tuple[str, int], RunResult] = {}
    failures: dict[tuple[str, int], str] = {}
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool_exec:
            outcomes = []
            futures = [pool_exec.submit(_one_run, job) for job in jobs]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - survivors aggregate
                    outcomes.append(exc)
    else:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append(_one_run(job))
            except Exception as exc:  # noqa: BLE001
                outcomes.append(exc)
    for job, outcome in zip(jobs, outcomes):
        key = (job[0].rule, job[0].seed)
        if isinstance(outcome, Exception):
            failures[key] = f"{type(outcome).__name__}: {outcome}"
            warnings.warn(
                f"run {key} failed and is excluded from the aggregate: "
                f"{failures[key]}",
                stacklevel=2,
            )
        else:
            runs[key] = outcome

    by_rule: dict[str, dict[str, list[float]]] = {}
    for (rule, _), result in runs.items():
        metrics = result.test_metrics[config.checkpoint_policy]
        slot = by_rule.setdefault(rule, {"worst": [], "average": []})
        slot["worst"].append(metrics["worst"])
        slot["average"].append(metrics["average"])
    rows = []
    for rule in sorted(by_rule):
        worst_mean, worst_std = reporting._mean_std(by_rule[rule]["worst"])
        avg_mean, avg_std = reporting._mean_std(by_rule[rule]["average"])
        rows.append(
            reporting.SummaryRow(
                rule=rule,
                n_runs=len(by_rule[rule]["worst"]),
                worst_mean=worst_mean,
                worst_std=worst_std,
                average_mean=avg_mean,
                average_std=avg_std,
            )
        )
    return SweepResult(rows=rows, runs=runs, failures=failures)
