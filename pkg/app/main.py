# app/main.py
"""
Command-line entry point for the adaptive-resolution simulator.

    python -m app.main simulate --policy fixed:a2:l=1 --out trace.csv
    python -m app.main train --lambda 0.6 --seed 7 --out-dir runs
    python -m app.main evaluate --checkpoint runs/qnet_lambda0.6_seed7.bin --out-dir eval
    python -m app.main sweep --checkpoint runs/qnet_lambda0.6_seed7.bin --out-dir sweep
    python -m app.main report --sweep-dir sweep --out-dir report
    python -m app.main curves --out curves.csv
    python -m app.main energy-table --out energy.csv

Exit codes: 1 usage or unknown policy, 2 malformed config, 3 missing files or empty inputs.
"""
import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import config
from .ddqn import TrainingError, evaluate, train, write_training_log
from .energy_model import EnergyModelError
from .environment import SimulationError, episode_return
from .harness import (
    HarnessError,
    build_policy,
    energy_reduction,
    load_experiment,
    pareto_sweep,
    report,
    write_aecr_csv,
    write_curves_csv,
    write_energy_table_csv,
    write_sweep_csv,
)
from .models import ConfigError
from .qnet import QNetError, load_params, save_params
from .schedulers import AllKeyPolicy, PolicySpecError, rollout
from .trace import write_trace_csv

logger = logging.getLogger(__name__)

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()


class UsageError(Exception):
    """Raised for command-line usage errors."""
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage is exit code 1 here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text}")
    return value


def _checkpoint_name(lambda_: float, seed: int) -> str:
    return f"qnet_lambda{lambda_:g}_seed{seed}.bin"


# --- Commands ---

def cmd_simulate(args) -> int:
    experiment = load_experiment(args.config)
    policy, ckpt_lambda = build_policy(args.policy, experiment)
    lam = args.lambda_ if args.lambda_ is not None else ckpt_lambda
    env = experiment.make_env(lam)
    trace = rollout(env, policy, args.seed)
    write_trace_csv(trace, args.out)
    logger.info(
        f"{args.policy}: {len(trace)} frames, {trace.key_frames} key, "
        f"{trace.total_energy_mj:.2f} mJ, mean accuracy {trace.mean_accuracy:.4f}"
    )
    return 0


def cmd_train(args) -> int:
    experiment = load_experiment(args.config)
    cfg = experiment.train_config(args.lambda_, args.seed)
    if args.episodes is not None:
        cfg = cfg.model_copy(update={"episodes": args.episodes})
    result = train(lambda: experiment.make_env(cfg.lambda_), cfg, experiment.net_spec())
    out_dir = Path(args.out_dir)
    ckpt = save_params(result.params, out_dir / _checkpoint_name(cfg.lambda_, cfg.seed), metadata={
        "lambda": cfg.lambda_,
        "seed": cfg.seed,
        "episodes": cfg.episodes,
        "preset": experiment.preset.name,
    })
    write_training_log(result.log, out_dir / f"train_log_lambda{cfg.lambda_:g}_seed{cfg.seed}.csv")
    logger.info(f"Training finished after {result.total_steps} steps; checkpoint {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    experiment = load_experiment(args.config)
    params, meta = load_params(args.checkpoint)
    lam = args.lambda_ if args.lambda_ is not None else meta.get("lambda")
    seeds = experiment.eval_seeds(args.seed)
    result = evaluate(
        params, lambda: experiment.make_env(lam), seeds, experiment.overhead, label=Path(args.checkpoint).stem,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "evaluation.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("seed", "mean_accuracy", "total_energy_mj", "energy_reduction", "overhead_fraction", "return"))
        for trace in result.traces:
            reference = rollout(experiment.make_env(lam), AllKeyPolicy(), trace.seed)
            write_trace_csv(trace, out_dir / f"trace_seed{trace.seed}.csv")
            writer.writerow([
                trace.seed, repr(trace.mean_accuracy), repr(trace.total_energy_mj),
                repr(energy_reduction(trace, reference)), repr(trace.overhead_mj / trace.total_energy_mj),
                repr(episode_return(trace, experiment.cfg.reward.gamma)),
            ])
    logger.info(f"Mean return {result.mean_return:.4f} over {len(seeds)} sequences")
    return 0


def cmd_sweep(args) -> int:
    experiment = load_experiment(args.config)
    checkpoints = list(experiment.cfg.sweep.checkpoints) + list(args.checkpoint or [])
    workers = args.workers or experiment.cfg.sweep.workers
    results = pareto_sweep(experiment, experiment.eval_seeds(args.seed), checkpoints, workers)
    out_dir = Path(args.out_dir)
    write_sweep_csv(results, out_dir / "sweep.csv")
    write_aecr_csv(results, out_dir / "aecr.csv")
    return 0


def cmd_report(args) -> int:
    sweep = load_experiment(args.config).cfg.sweep
    report(args.sweep_dir, args.out_dir, sweep.accuracy_tolerance, sweep.reduction_tolerance)
    return 0


def cmd_curves(args) -> int:
    experiment = load_experiment(args.config)
    write_curves_csv(experiment.accuracy, args.out)
    return 0


def cmd_energy_table(args) -> int:
    experiment = load_experiment(args.config)
    write_energy_table_csv(experiment, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=str(config.DEFAULT_EXPERIMENT_PATH), help="Experiment JSON")
    common.add_argument("--seed", type=_non_negative_int, default=None, help="Sequence seed (simulate, evaluate, sweep) or training seed (train)")

    parser = _Parser(prog="app.main", description="Adaptive-resolution video analytics simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="Roll one policy and write a trace CSV")
    p.add_argument("--policy", required=True, help="allkey | scan:cnstrt=0.2 | adaptive:a3:thr=10 | fixed:a2:l=1 | random:r=0.7 | rl:<checkpoint>")
    p.add_argument("--lambda", dest="lambda_", type=_non_negative_float, default=None)
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="Train the DDQN agent")
    p.add_argument("--lambda", dest="lambda_", type=_non_negative_float, default=None)
    p.add_argument("--episodes", type=_positive_int, default=None)
    p.add_argument("--out-dir", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="Greedy rollouts of a checkpoint on held-out sequences")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lambda", dest="lambda_", type=_non_negative_float, default=None)
    p.add_argument("--out-dir", default="eval")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="Evaluate every baseline grid point and checkpoint")
    p.add_argument("--checkpoint", action="append", help="Trained checkpoint; repeatable")
    p.add_argument("--workers", type=_positive_int, default=None)
    p.add_argument("--out-dir", default="sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", parents=[common], help="Aggregate sweep CSVs")
    p.add_argument("--sweep-dir", default="sweep")
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("curves", parents=[common], help="Accuracy vs downsampling ratio and accumulated motion")
    p.add_argument("--out", default="curves.csv")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("energy-table", parents=[common], help="Per-action energy breakdown")
    p.add_argument("--out", default="energy_table.csv")
    p.set_defaults(func=cmd_energy_table)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return config.EXIT_USAGE
    except PolicySpecError as e:
        logger.error(str(e))
        return config.EXIT_USAGE
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return config.EXIT_CONFIG
    except EnergyModelError as e:
        logger.error(f"Configuration error: {e}")
        return config.EXIT_CONFIG
    except (OSError, HarnessError, QNetError) as e:
        logger.error(f"I/O error: {e}")
        return config.EXIT_IO
    except (SimulationError, TrainingError) as e:
        logger.error(f"Run failed: {e}")
        return config.EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
