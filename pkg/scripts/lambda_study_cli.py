import argparse
import csv
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from app import config  # noqa: E402
from app.harness import lambda_study, load_experiment  # noqa: E402
from app.models import ConfigError  # noqa: E402

# --- Configuration ---
DEFAULT_OUT = "lambda_study.csv"
DEFAULT_SEEDS = 5


def write_points(points, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("lambda", "seed", "mean_accuracy", "energy_reduction", "overhead_fraction"))
        for p in points:
            writer.writerow([
                repr(p.lambda_), p.seed, repr(p.mean_accuracy), repr(p.energy_reduction), repr(p.overhead_fraction),
            ])
    return path


# --- Main Script ---
if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Train one agent per (lambda, seed) and tabulate the trade-off.")
    parser.add_argument("--config", default=str(config.DEFAULT_EXPERIMENT_PATH), help="Experiment JSON")
    parser.add_argument("--lambdas", type=float, nargs="+", default=None, help="Lambda values (default: sweep.lambdas from the config)")
    parser.add_argument("--seeds", type=int, default=DEFAULT_SEEDS, help=f"Training seeds 0..N-1 (default: {DEFAULT_SEEDS})")
    parser.add_argument("--episodes", type=int, default=None, help="Override training episodes")
    parser.add_argument("--out", default=DEFAULT_OUT, help=f"Output CSV (default: {DEFAULT_OUT})")
    args = parser.parse_args()
    if args.lambdas and min(args.lambdas) < 0:
        parser.error("--lambdas must be non-negative")
    if args.seeds < 1 or (args.episodes is not None and args.episodes < 1):
        parser.error("--seeds and --episodes must be positive")

    try:
        experiment = load_experiment(args.config)
    except ConfigError as e:
        print(f"Error: {e}")
        sys.exit(config.EXIT_CONFIG)
    except OSError as e:
        print(f"Error: cannot read config: {e}")
        sys.exit(config.EXIT_IO)

    lambdas = args.lambdas or list(experiment.cfg.sweep.lambdas)
    train_cfg = experiment.cfg.training
    if args.episodes is not None:
        train_cfg = train_cfg.model_copy(update={"episodes": args.episodes})

    print(f"CLI: Training {len(lambdas)} lambda values x {args.seeds} seeds ({train_cfg.episodes} episodes each)...")
    points = lambda_study(experiment, lambdas, range(args.seeds), train_cfg)
    out = write_points(points, args.out)

    print("\n--- Result ---")
    for lam in lambdas:
        rows = [p for p in points if p.lambda_ == lam]
        print(
            f"lambda={lam:g}: reduction {np.mean([p.energy_reduction for p in rows]):.4f}, "
            f"accuracy {np.mean([p.mean_accuracy for p in rows]):.4f}"
        )
    print(f"Wrote {out}")
