"""Metric persistence, summary tables, and figure emission.

Record files are newline-delimited JSON (one object per line), schema
version 1. A run file contains:

* one ``run`` line    - rule, seed, C, dataset fingerprint, checkpoint
                        policy, full config;
* one ``step`` line   per executed step - per-class holdout accuracy and
                        mean loss (refreshed at the evaluation cadence;
                        ``eval_step`` names the step they were computed
                        at), worst/average holdout accuracy, class weights
                        and alpha (weighted rules only), selected-label
                        histogram;
* one ``result`` line - per-policy test metrics of the kept checkpoints.

Floats use repr round-tripping; files are append-safe and greppable.
Summaries use the sample (n-1) standard deviation, except that a single
run reports 0 rather than NaN.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MetricsRecord:
    """One timestep's observables."""

    step: int
    rule: str
    seed: int
    accuracy: list  # per-class holdout accuracy
    mean_loss: list  # per-class holdout mean loss
    worst_accuracy: float
    average_accuracy: float
    eval_step: int  # step at which the holdout metrics were computed
    weights: list | None = None  # class weights, weighted rules only
    alpha: list | None = None
    selected: list | None = None  # per-class histogram of selected labels

    def __post_init__(self):
        for a in self.accuracy:
            if not (math.isnan(a) or 0.0 <= a <= 1.0):
                raise InvalidInputError(f"accuracy {a} outside [0, 1]")


def _to_jsonable(record) -> dict:
    if isinstance(record, MetricsRecord):
        return {"kind": "step", "schema_version": SCHEMA_VERSION, **asdict(record)}
    return dict(record)


def write_records(records, path) -> int:
    """Write records as JSON lines; returns the row count.

    The sink is opened before anything is serialized, so an unwritable
    path fails before any partial record exists.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_to_jsonable(record), sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_records(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad record ({exc})") from None
    return out


def _split_run_file(path):
    rows = read_records(path)
    run = next((r for r in rows if r.get("kind") == "run"), None)
    result = next((r for r in rows if r.get("kind") == "result"), None)
    steps = [r for r in rows if r.get("kind") == "step"]
    if run is None or result is None:
        raise InvalidInputError(f"{path}: not a complete run record file")
    return run, steps, result


@dataclass(frozen=True)
class SummaryRow:
    rule: str
    n_runs: int
    worst_mean: float
    worst_std: float
    average_mean: float
    average_std: float


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = 0.0 if arr.size < 2 else float(arr.std(ddof=1))
    return mean, std


def summarize(paths) -> list[SummaryRow]:
    """One row per rule from the final-checkpoint test metrics.

    All files must share the class count and dataset fingerprint.
    """
    paths = list(paths)
    if not paths:
        raise InvalidInputError("no record files given")
    by_rule: dict[str, dict[str, list[float]]] = {}
    signature = None
    for path in paths:
        run, _, result = _split_run_file(path)
        sig = (run.get("c"), run.get("fingerprint"))
        if signature is None:
            signature = sig
        elif sig != signature:
            raise InvalidInputError(
                f"{path}: dataset signature {sig} differs from {signature}"
            )
        policy = run["policy"]
        metrics = result["test"][policy]
        slot = by_rule.setdefault(run["rule"], {"worst": [], "average": []})
        slot["worst"].append(metrics["worst"])
        slot["average"].append(metrics["average"])
    rows = []
    for rule in sorted(by_rule):
        worst_mean, worst_std = _mean_std(by_rule[rule]["worst"])
        avg_mean, avg_std = _mean_std(by_rule[rule]["average"])
        rows.append(
            SummaryRow(
                rule=rule,
                n_runs=len(by_rule[rule]["worst"]),
                worst_mean=worst_mean,
                worst_std=worst_std,
                average_mean=avg_mean,
                average_std=avg_std,
            )
        )
    return rows


def format_summary(rows) -> str:
    header = f"{'rule':<12} {'runs':>4}  {'worst-class acc':>20}  {'average acc':>20}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.rule:<12} {r.n_runs:>4}  "
            f"{r.worst_mean:>9.4f} ± {r.worst_std:<8.4f}  "
            f"{r.average_mean:>9.4f} ± {r.average_std:<8.4f}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _series_by_rule(paths):
    """rule -> {seed -> (steps, worst_acc)} plus per-rule weight series."""
    acc: dict[str, list[tuple[list, list]]] = {}
    weights: dict[str, list[tuple[list, list[list]]]] = {}
    for path in paths:
        run, steps, _ = _split_run_file(path)
        rule = run["rule"]
        t = [s["step"] for s in steps]
        acc.setdefault(rule, []).append((t, [s["worst_accuracy"] for s in steps]))
        if steps and steps[0].get("weights") is not None:
            weights.setdefault(rule, []).append((t, [s["weights"] for s in steps]))
    return acc, weights


def _band(series_list):
    """Mean and sample-std band across seeds, aligned by step."""
    steps = series_list[0][0]
    for t, _ in series_list:
        if t != steps:
            raise InvalidInputError("record files have misaligned step grids")
    values = np.asarray([v for _, v in series_list], dtype=np.float64)
    mean = values.mean(axis=0)
    std = np.zeros_like(mean) if values.shape[0] < 2 else values.std(axis=0, ddof=1)
    return steps, mean, std


def emit_plots(paths, out_dir) -> list[Path]:
    """Worst-class accuracy curves (mean ± 1 std band) and per-class weight
    trajectories, as SVG plus a JSON sidecar embedding the plotted values."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = list(paths)
    if not paths:
        raise InvalidInputError("no record files given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    acc, weights = _series_by_rule(paths)
    emitted: list[Path] = []

    with plt.rc_context({"path.simplify": False, "svg.hashsalt": "reducr"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        sidecar = {}
        for rule in sorted(acc):
            steps, mean, std = _band(acc[rule])
            ax.plot(steps, mean, label=rule)
            ax.fill_between(steps, mean - std, mean + std, alpha=0.2)
            sidecar[rule] = {
                "steps": steps,
                "mean": mean.tolist(),
                "band_low": (mean - std).tolist(),
                "band_high": (mean + std).tolist(),
            }
        ax.set_xlabel("step")
        ax.set_ylabel("worst-class holdout accuracy")
        ax.legend()
        fig_path = out_dir / "worst_class_accuracy.svg"
        fig.savefig(fig_path)
        plt.close(fig)
        (out_dir / "worst_class_accuracy.data.json").write_text(
            json.dumps(sidecar, sort_keys=True), encoding="utf-8"
        )
        emitted += [fig_path, out_dir / "worst_class_accuracy.data.json"]

        for rule in sorted(weights):
            steps, mean, _ = _band(acc[rule])
            runs = weights[rule]
            w = np.asarray([trajectory for _, trajectory in runs], dtype=np.float64)
            w_mean = w.mean(axis=0)  # (steps, dim)
            fig, ax = plt.subplots(figsize=(7, 4.5))
            sidecar = {"steps": runs[0][0], "classes": {}}
            for c in range(w_mean.shape[1]):
                ax.plot(runs[0][0], w_mean[:, c], label=f"class {c}")
                sidecar["classes"][str(c)] = w_mean[:, c].tolist()
            ax.set_xlabel("step")
            ax.set_ylabel("class weight")
            ax.legend()
            fig_path = out_dir / f"weights_{rule}.svg"
            fig.savefig(fig_path)
            plt.close(fig)
            (out_dir / f"weights_{rule}.data.json").write_text(
                json.dumps(sidecar, sort_keys=True), encoding="utf-8"
            )
            emitted += [fig_path, out_dir / f"weights_{rule}.data.json"]
    return emitted
