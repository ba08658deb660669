"""Experiment runner and command-line interface.

Subcommands: `run` (one training run), `ablate` (variant grid under a shared
seed and split), `sweep` (one hyperparameter over a value list), `dataset
stats` (ingestion statistics as JSON), and `degradation` (consensus-drift
bound verification on synthetic fixtures). Exit codes: 0 ok, 2 configuration
error, 3 data error, 4 runtime failure. The environment variable FED3CR_SEED
overrides the configured seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .config import VERSION, ExperimentConfig, load_config
from .datasets import load_dataset
from .degradation import QuadraticClient, bound_sweep, verify_bound
from .errors import ConfigurationError, DataError, ParseError
from .evaluation import RoundMetrics, metrics_csv_lines
from .federation import ABLATION_LABELS, VariantConfig, run_training
from .checkpoint import save_client_state
from .toy import generate_toy_dataset


@dataclass
class ExperimentRecord:
    """Everything needed to audit and reproduce one run."""

    config: dict
    metrics: list[RoundMetrics]
    wall_clock_per_round: list[float] = field(default_factory=list)
    best_hr: float = 0.0
    best_hr_round: int = -1
    best_ndcg: float = 0.0
    best_ndcg_round: int = -1

    def summary(self) -> dict:
        return {
            "best_hr": self.best_hr,
            "best_hr_round": self.best_hr_round,
            "best_ndcg": self.best_ndcg,
            "best_ndcg_round": self.best_ndcg_round,
            "rounds_evaluated": len(self.metrics),
            "wall_clock_total": sum(self.wall_clock_per_round),
        }


def _prepare_outdir(outdir: str, force: bool) -> None:
    if os.path.exists(os.path.join(outdir, "manifest.json")) and not force:
        raise ConfigurationError(
            f"output directory {outdir!r} already holds a run; pass --force to overwrite"
        )
    os.makedirs(outdir, exist_ok=True)


def run_experiment(
    config: ExperimentConfig,
    outdir: str | None = None,
    workers: int = 1,
    force: bool = False,
    save_checkpoints: bool = True,
) -> ExperimentRecord:
    """Ingest, split, train, evaluate; write manifest, metrics CSV and final
    checkpoints under `outdir` when given."""
    if outdir is not None:
        _prepare_outdir(outdir, force)
        with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(config.resolved(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    ds = config.build_dataset()
    round_times: list[float] = []
    last = time.perf_counter()

    def tick(_round: int) -> None:
        nonlocal last
        now = time.perf_counter()
        round_times.append(now - last)
        last = now

    result = run_training(ds, config.hp, config.variant, workers=workers, on_round=tick)

    record = ExperimentRecord(config=config.resolved(), metrics=result.metrics)
    record.wall_clock_per_round = round_times
    if result.metrics:
        hr_best = max(result.metrics, key=lambda m: m.hr_at_k)
        ndcg_best = max(result.metrics, key=lambda m: m.ndcg_at_k)
        record.best_hr, record.best_hr_round = hr_best.hr_at_k, hr_best.round
        record.best_ndcg, record.best_ndcg_round = ndcg_best.ndcg_at_k, ndcg_best.round

    if outdir is not None:
        with open(os.path.join(outdir, "metrics.csv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(metrics_csv_lines(result.metrics)) + "\n")
        with open(os.path.join(outdir, "record.json"), "w", encoding="utf-8") as fh:
            json.dump(record.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if save_checkpoints:
            ckpt_dir = os.path.join(outdir, "checkpoints")
            os.makedirs(ckpt_dir, exist_ok=True)
            for client in result.clients:
                save_client_state(
                    os.path.join(ckpt_dir, f"client_{client.client_id:05d}.bin"),
                    client,
                    seed=config.hp.seed,
                    round=config.hp.rounds,
                )
    return record


def run_ablation(
    config: ExperimentConfig,
    labels: list[str],
    outdir: str | None = None,
    workers: int = 1,
    force: bool = False,
) -> list[tuple[str, float, float]]:
    """One run per variant label under the shared seed and data split;
    returns (label, final hr, final ndcg) rows."""
    for label in labels:
        if label not in ABLATION_LABELS:
            raise ConfigurationError(f"unknown variant label {label!r}")
    if outdir is not None:
        _prepare_outdir(outdir, force)
    rows = []
    for label in labels:
        variant_config = dataclasses.replace(
            config, variant=VariantConfig.from_label(label), variant_label=label
        )
        sub = os.path.join(outdir, label) if outdir is not None else None
        record = run_experiment(variant_config, sub, workers=workers, force=force, save_checkpoints=False)
        final = record.metrics[-1]
        rows.append((label, final.hr_at_k, final.ndcg_at_k))
    if outdir is not None:
        with open(os.path.join(outdir, "ablation.csv"), "w", encoding="utf-8") as fh:
            fh.write("variant,hr10,ndcg10\n")
            for label, hr, ndcg in rows:
                fh.write(f"{label},{hr!r},{ndcg!r}\n")
    return rows


SWEEP_PARAMS = ("beta_a", "beta_o", "layers")

LAYER_SCHEDULES = {2: (2, 4), 3: (2, 4, 8), 4: (2, 4, 8, 16)}


def run_sweep(
    config: ExperimentConfig,
    param: str,
    values: list[str],
    outdir: str | None = None,
    workers: int = 1,
    force: bool = False,
) -> list[tuple[str, float, float]]:
    """One run per value of `param` (beta_a, beta_o, or transfer-net layer
    count); returns (value, final hr, final ndcg) rows."""
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"unknown sweep parameter {param!r} (expected one of {SWEEP_PARAMS})")
    if outdir is not None:
        _prepare_outdir(outdir, force)
    rows = []
    for value in values:
        hp = config.hp
        if param == "beta_a":
            hp = dataclasses.replace(hp, beta_a=float(value))
        elif param == "beta_o":
            hp = dataclasses.replace(hp, beta_o=float(value))
        else:
            layers = int(value)
            if layers not in LAYER_SCHEDULES:
                raise ConfigurationError(f"layer count must be one of {sorted(LAYER_SCHEDULES)}, got {value}")
            hp = dataclasses.replace(hp, transfer_schedule=LAYER_SCHEDULES[layers])
        sub_config = dataclasses.replace(config, hp=hp)
        sub = os.path.join(outdir, f"{param}_{value}") if outdir is not None else None
        record = run_experiment(sub_config, sub, workers=workers, force=force, save_checkpoints=False)
        final = record.metrics[-1]
        rows.append((str(value), final.hr_at_k, final.ndcg_at_k))
    if outdir is not None:
        with open(os.path.join(outdir, "sweep.csv"), "w", encoding="utf-8") as fh:
            fh.write(f"{param},hr10,ndcg10\n")
            for value, hr, ndcg in rows:
                fh.write(f"{value},{hr!r},{ndcg!r}\n")
    return rows


# -- argument handling -------------------------------------------------------------------


def _split_overrides(extra: list[str]) -> dict[str, str]:
    """Turn trailing `--section.key value` / `--section.key=value` pairs into a dict."""
    overrides: dict[str, str] = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise ConfigurationError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(extra):
                raise ConfigurationError(f"override {token!r} is missing a value")
            value = extra[i + 1]
            i += 2
        if "." not in key:
            raise ConfigurationError(f"override {key!r} must be section.key")
        overrides[key] = value
    return overrides


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fed3cr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one training run")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--force", action="store_true")

    ab_p = sub.add_parser("ablate", help="run a variant grid under one seed/split")
    ab_p.add_argument("--config", required=True)
    ab_p.add_argument("--variants", default=",".join(ABLATION_LABELS))
    ab_p.add_argument("--out", default=None)
    ab_p.add_argument("--workers", type=int, default=1)
    ab_p.add_argument("--force", action="store_true")

    sw_p = sub.add_parser("sweep", help="sweep one hyperparameter")
    sw_p.add_argument("--config", required=True)
    sw_p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw_p.add_argument("--values", required=True)
    sw_p.add_argument("--out", default=None)
    sw_p.add_argument("--workers", type=int, default=1)
    sw_p.add_argument("--force", action="store_true")

    ds_p = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds_p.add_subparsers(dest="dataset_command", required=True)
    stats_p = ds_sub.add_parser("stats", help="print ingestion statistics as JSON")
    stats_p.add_argument("--path", default="")
    stats_p.add_argument("--format", required=True, choices=("movielens-dat", "tsv", "csv", "toy"))
    stats_p.add_argument("--min-interactions", type=int, default=10)

    dg_p = sub.add_parser("degradation", help="verify the consensus-drift bound on fixtures")
    dg_p.add_argument("--fixtures", type=int, default=1000)
    dg_p.add_argument("--seed", type=int, default=0)
    dg_p.add_argument("--max-clients", type=int, default=20)
    dg_p.add_argument("--max-dim", type=int, default=8)
    dg_p.add_argument("--out", default=None)
    dg_p.add_argument("--delta-csv", default=None)
    return parser


def _cmd_run(args, overrides) -> int:
    config = load_config(args.config, overrides)
    record = run_experiment(config, args.out, workers=args.workers, force=args.force)
    print(json.dumps(record.summary(), sort_keys=True))
    return 0


def _cmd_ablate(args, overrides) -> int:
    config = load_config(args.config, overrides)
    labels = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows = run_ablation(config, labels, args.out, workers=args.workers, force=args.force)
    print("variant,hr10,ndcg10")
    for label, hr, ndcg in rows:
        print(f"{label},{hr!r},{ndcg!r}")
    return 0


def _cmd_sweep(args, overrides) -> int:
    config = load_config(args.config, overrides)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows = run_sweep(config, args.param, values, args.out, workers=args.workers, force=args.force)
    print(f"{args.param},hr10,ndcg10")
    for value, hr, ndcg in rows:
        print(f"{value},{hr!r},{ndcg!r}")
    return 0


def _cmd_dataset_stats(args) -> int:
    if args.format == "toy":
        ds = generate_toy_dataset()
    else:
        ds = load_dataset(args.path, args.format, args.min_interactions)
    print(json.dumps(ds.stats(), sort_keys=True))
    return 0


def _cmd_degradation(args) -> int:
    summary = bound_sweep(args.fixtures, args.seed, args.max_clients, args.max_dim)
    worked = verify_bound(
        [
            QuadraticClient(np.array([1.0, 0.0])),
            QuadraticClient(np.array([0.0, 1.0])),
            QuadraticClient(np.array([-1.0, 0.0])),
        ]
    )
    report = {"sweep": summary, "worked_example": worked.to_dict(), "version": VERSION}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    if args.delta_csv:
        with open(args.delta_csv, "w", encoding="utf-8") as fh:
            for row in worked.delta_matrix:
                fh.write(",".join(f"{x:.6g}" for x in row) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _split_overrides(extra)
        if args.command == "run":
            return _cmd_run(args, overrides)
        if args.command == "ablate":
            return _cmd_ablate(args, overrides)
        if args.command == "sweep":
            return _cmd_sweep(args, overrides)
        if args.command == "dataset":
            if overrides:
                raise ConfigurationError("dataset stats takes no config overrides")
            return _cmd_dataset_stats(args)
        if args.command == "degradation":
            if overrides:
                raise ConfigurationError("degradation takes no config overrides")
            return _cmd_degradation(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ParseError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
