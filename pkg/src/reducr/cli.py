"""Command-line entry point.

Subcommands: generate-data, train-experts, run, sweep, report. Every
command reads an optional flat key-value config file; individual keys can
be overridden with repeatable ``--set key=value`` flags (flags win).
Outputs are only overwritten under ``--force``; otherwise an existing
target is refused. Exit codes: 0 success, 1 usage error, 2 runtime error;
errors are printed as single ``reducr: error: <kind>: <message>`` lines on
stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import experts as experts_mod
from . import learner, reporting, simulator
from .config import (
    ExperimentConfig,
    build_config,
    config_keys,
    load_config,
)
from .data import (
    CsvSchema,
    generate_synthetic,
    load_csv,
    load_pool,
    save_csv,
)
from .errors import ConfigError, ParseError, ReducrError
from .experts import expert_seed, imbalanced_batch_drawer


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - exit code 1, not argparse's 2
        raise UsageError(message)


_GENERATE_KEYS = (
    "c", "d", "n_train", "n_holdout", "n_test", "separation", "label_noise",
    "data_seed",
)
_EXPERT_KEYS = (
    "c", "d", "arch", "hidden", "gamma", "expert_steps", "expert_batch",
    "expert_lr", "expert_seed", "imbalance_class", "imbalance_p",
    "imbalance_experts", "train_frac", "holdout_frac", "test_frac",
    "standardize",
)


def _epilog(keys) -> str:
    return "config keys consumed:\n  " + "\n  ".join(keys)


def _add_common(parser):
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable; flags win over the file)",
    )


def _build_parser() -> _Parser:
    parser = _Parser(prog="reducr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate-data",
        help="write a synthetic CSV pool plus split manifest",
        epilog=_epilog(_GENERATE_KEYS),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser(
        "train-experts",
        help="train per-class (or per-group) experts and the reference model",
        epilog=_epilog(_EXPERT_KEYS + ("superclasses",)),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset manifest or CSV")
    p.add_argument("--out", required=True, help="output directory for checkpoints")
    p.add_argument("--force", action="store_true")

    for name, help_text in (
        ("run", "one online batch-selection run"),
        ("sweep", "all (rule, seed) pairs plus a summary table"),
    ):
        p = sub.add_parser(
            name,
            help=help_text,
            epilog=_epilog(config_keys()),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        _add_common(p)
        p.add_argument("--data", required=True, help="dataset manifest or CSV")
        p.add_argument("--experts", help="directory written by train-experts")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true")
        p.add_argument("--rule", help="selection rule override")
        if name == "run":
            p.add_argument("--seed", type=int, help="run seed override")
        else:
            p.add_argument("--seeds", help="seed list, e.g. 0..9 or 0,1,2")
            p.add_argument("--rules", help="comma-separated rule list")
            p.add_argument("--parallel", type=int, default=1,
                           help="max concurrent runs")

    p = sub.add_parser("report", help="summarize or plot record files")
    p.add_argument("--summary", nargs="+", metavar="FILE",
                   help="print a summary table for these record files")
    p.add_argument("--plots", nargs="+", metavar="FILE",
                   help="emit figures for these record files")
    p.add_argument("--out", help="output directory for --plots")
    return parser


def _load_cfg(args, extra: dict | None = None) -> ExperimentConfig:
    overrides: dict = {}
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if extra:
        overrides.update({k: v for k, v in extra.items() if v is not None})
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = build_config({}, overrides)
    return cfg


def _refuse_existing(paths, force: bool):
    if force:
        return
    for path in paths:
        if Path(path).exists():
            raise UsageError(f"{path} exists; pass --force to overwrite")


def _load_dataset(path, cfg: ExperimentConfig):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"dataset {path} does not exist")
    if path.suffix == ".json":
        return load_pool(path)
    schema = CsvSchema(
        fractions=(cfg.train_frac, cfg.holdout_frac, cfg.test_frac),
        seed=cfg.data_seed,
        C=cfg.c,
        standardize=cfg.standardize,
    )
    return load_csv(path, schema)


def _cmd_generate_data(args) -> int:
    cfg = _load_cfg(args)
    cfg.validate()
    out = Path(args.out)
    csv_path = out / "pool.csv"
    manifest_path = out / "manifest.json"
    _refuse_existing([csv_path, manifest_path], args.force)
    out.mkdir(parents=True, exist_ok=True)
    pool = generate_synthetic(
        cfg.c, cfg.d, (cfg.n_train, cfg.n_holdout, cfg.n_test),
        cfg.separation, cfg.label_noise, cfg.data_seed,
    )
    save_csv(
        pool, csv_path, manifest_path,
        generator={
            "c": cfg.c, "d": cfg.d,
            "n_train": cfg.n_train, "n_holdout": cfg.n_holdout,
            "n_test": cfg.n_test, "separation": cfg.separation,
            "label_noise": cfg.label_noise, "seed": cfg.data_seed,
        },
    )
    print(f"wrote {csv_path} ({len(pool)} rows) and {manifest_path}")
    return 0


def _cmd_train_experts(args) -> int:
    cfg = _load_cfg(args)
    cfg.validate()
    pool = _load_dataset(args.data, cfg)
    cfg.validate(pool)
    out = Path(args.out)
    _refuse_existing([out / "experts.json"], args.force)
    from .data import HOLDOUT

    X, y = pool.subset(HOLDOUT)
    arch = simulator.make_arch(cfg)
    draw = None
    if cfg.imbalance is not None and cfg.imbalance_experts:
        draw = imbalanced_batch_drawer(y, cfg.c, cfg.imbalance, cfg.expert_batch)
    bank = experts_mod.train_group_experts(
        X, y, arch, cfg.superclass_map, cfg.gamma, cfg.expert_steps,
        cfg.expert_batch, cfg.expert_lr, cfg.expert_seed, draw_batch=draw,
    )
    reference = experts_mod.train_reference_model(
        X, y, arch, cfg.expert_steps, cfg.expert_batch, cfg.expert_lr,
        seed=expert_seed(cfg.expert_seed, -1), draw_batch=draw,
    )
    manifest = experts_mod.save_bank(
        bank, reference, out, cfg.expert_seed,
        extra={"arch": cfg.arch, "hidden": cfg.hidden, "c": cfg.c, "d": cfg.d},
    )
    print(f"wrote {len(bank)} experts + reference to {out} (manifest {manifest})")
    return 0


def _load_experts(args, cfg: ExperimentConfig, rules):
    needs_bank = any(r in ("reducr", "payoff") for r in rules)
    needs_reference = needs_bank or "rholoss" in rules
    if not needs_reference:
        return None, None
    if not args.experts:
        raise UsageError(
            f"rules {sorted(set(rules))} need --experts (run train-experts first)"
        )
    bank, reference, _ = experts_mod.load_bank(args.experts)
    return bank if needs_bank else None, reference


def _record_path(out: Path, rule: str, seed: int) -> Path:
    return out / f"records_{rule}_seed{seed}.jsonl"


def _cmd_run(args) -> int:
    cfg = _load_cfg(args, {"rule": args.rule, "seed": args.seed})
    pool = _load_dataset(args.data, cfg)
    cfg.validate(pool)
    bank, reference = _load_experts(args, cfg, [cfg.rule])
    out = Path(args.out)
    record_path = _record_path(out, cfg.rule, cfg.seed)
    _refuse_existing([record_path], args.force)
    out.mkdir(parents=True, exist_ok=True)
    result = simulator.run_experiment(cfg, pool, bank, reference)
    rows = simulator.write_run_file(result, record_path)
    metrics = result.test_metrics[cfg.checkpoint_policy]
    print(
        f"{cfg.rule} seed={cfg.seed}: worst-class {metrics['worst']:.4f}, "
        f"average {metrics['average']:.4f} ({rows} rows -> {record_path})"
    )
    return 0


def _cmd_sweep(args) -> int:
    extra = {"rule": args.rule, "rules": args.rules, "seeds": args.seeds}
    cfg = _load_cfg(args, extra)
    pool = _load_dataset(args.data, cfg)
    cfg.validate(pool)
    rules = cfg.rules or (cfg.rule,)
    bank, reference = _load_experts(args, cfg, rules)
    out = Path(args.out)
    _refuse_existing([out / "summary.json"], args.force)
    out.mkdir(parents=True, exist_ok=True)
    sweep_result = simulator.sweep(
        cfg, pool, bank, reference, rules=rules, seeds=cfg.seeds,
        parallel=args.parallel,
    )
    for (rule, seed), result in sweep_result.runs.items():
        simulator.write_run_file(result, _record_path(out, rule, seed))
    table = reporting.format_summary(sweep_result.rows)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    (out / "summary.json").write_text(
        json.dumps(
            {
                "rows": [dataclasses.asdict(r) for r in sweep_result.rows],
                "failures": {f"{k[0]}:{k[1]}": v
                             for k, v in sweep_result.failures.items()},
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(table)
    if sweep_result.failures:
        print(f"warning: {len(sweep_result.failures)} runs failed", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    if not args.summary and not args.plots:
        raise UsageError("report needs --summary and/or --plots")
    if args.summary:
        print(reporting.format_summary(reporting.summarize(args.summary)))
    if args.plots:
        if not args.out:
            raise UsageError("--plots needs --out")
        emitted = reporting.emit_plots(args.plots, args.out)
        for path in emitted:
            print(path)
    return 0


_COMMANDS = {
    "generate-data": _cmd_generate_data,
    "train-experts": _cmd_train_experts,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"reducr: error: usage: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ParseError) as exc:
        print(f"reducr: error: usage: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"reducr: error: usage: {exc}", file=sys.stderr)
        return 1
    except (ReducrError, OSError) as exc:
        print(f"reducr: error: runtime: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
