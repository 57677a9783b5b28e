"""
Experiment harness: loads experiment configs, computes comparison metrics
(energy reduction, AECR, Pareto dominance), runs policy sweeps and the
lambda study, and reads/writes the CSV artifacts.
"""
import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import config
from .accuracy import load_accuracy_params, redundancy_curves
from .ddqn import QPolicy, evaluate, train
from .energy_model import EnergyBreakdown, action_energy_table, load_preset, policy_overhead
from .environment import ResolutionEnv
from .models import ACTIONS, AccuracyParams, ConfigError, ExperimentConfig, HardwarePreset, TrainConfig, read_json_model
from .qnet import NetSpec, load_params
from .schedulers import AllKeyPolicy, Policy, baseline_grid, parse_policy, policy_id, rollout
from .trace import EpisodeTrace

logger = logging.getLogger(__name__)


class HarnessError(Exception):
    """Custom exception for mismatched traces and unusable sweep inputs."""
    pass


@dataclass(frozen=True)
class Experiment:
    """A validated experiment config with its preset and accuracy model resolved."""
    cfg: ExperimentConfig
    preset: HardwarePreset
    accuracy: AccuracyParams

    def reward_cfg(self, lambda_: Optional[float] = None):
        if lambda_ is None:
            return self.cfg.reward
        return self.cfg.reward.model_copy(update={"lambda_": lambda_})

    def make_env(self, lambda_: Optional[float] = None, seed: Optional[int] = None) -> ResolutionEnv:
        seq = self.cfg.sequence if seed is None else self.cfg.sequence.model_copy(update={"rng_seed": seed})
        return ResolutionEnv(seq, self.preset, self.accuracy, self.reward_cfg(lambda_))

    def train_config(self, lambda_: Optional[float] = None, seed: Optional[int] = None) -> TrainConfig:
        update = {}
        if lambda_ is not None:
            update["lambda_"] = lambda_
        if seed is not None:
            update["seed"] = seed
        return self.cfg.training.model_copy(update=update)

    def net_spec(self) -> NetSpec:
        return NetSpec.for_features(self.cfg.sequence.feature_dim, self.cfg.training.trunk_dims)

    @property
    def overhead(self) -> EnergyBreakdown:
        return policy_overhead(self.preset, self.cfg.policy_overhead_s)

    def eval_seeds(self, base_seed: Optional[int] = None) -> List[int]:
        """Held-out sequence seeds, offset from the training seeds."""
        base = self.cfg.sequence.rng_seed if base_seed is None else base_seed
        sweep = self.cfg.sweep
        return [base + sweep.eval_seed_offset + i * sweep.seed_stride for i in range(sweep.seed_count)]


def _resolve(base_dir: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base_dir / p


def load_experiment(path: Union[str, Path] = config.DEFAULT_EXPERIMENT_PATH) -> Experiment:
    """
    Loads an experiment JSON. Preset and accuracy-model paths are resolved
    relative to the config file; when neither path nor inline block is given
    the shipped defaults are used.

    Raises:
        OSError: If a referenced file cannot be read.
        ConfigError: If any document is malformed.
    """
    path = Path(path)
    cfg = read_json_model(path, ExperimentConfig)
    base_dir = path.parent
    if cfg.hardware is not None:
        preset = cfg.hardware
    else:
        preset = load_preset(_resolve(base_dir, cfg.hardware_preset) if cfg.hardware_preset else config.DEFAULT_PRESET_PATH)
    if cfg.accuracy is not None:
        accuracy = cfg.accuracy
    else:
        accuracy = load_accuracy_params(
            _resolve(base_dir, cfg.accuracy_model) if cfg.accuracy_model else config.DEFAULT_ACCURACY_PATH
        )
    frame = cfg.sequence.base_frame
    if frame.resolution_mp > preset.sensor.sensor_resolution_mp:
        raise ConfigError(
            f"{path}: base frame {frame.width_px}x{frame.height_px} ({frame.resolution_mp:.6f} MP) exceeds "
            f"the {preset.name} sensor resolution ({preset.sensor.sensor_resolution_mp:.6f} MP)"
        )
    if cfg.training.lambda_ != cfg.reward.lambda_:
        logger.warning(
            f"{path}: training.lambda ({cfg.training.lambda_:g}) differs from reward.lambda "
            f"({cfg.reward.lambda_:g}); train uses training.lambda, simulate and sweep use reward.lambda"
        )
    logger.info(f"Loaded experiment {path} (preset {preset.name}, {cfg.sequence.length_frames} frames)")
    return Experiment(cfg=cfg, preset=preset, accuracy=accuracy)


# --- Metrics ---

def _check_pair(trace: EpisodeTrace, reference: EpisodeTrace) -> None:
    if trace.seed != reference.seed or len(trace) != len(reference):
        raise HarnessError(
            f"Traces cover different sequences: seed {trace.seed}/{len(trace)} frames vs "
            f"reference seed {reference.seed}/{len(reference)} frames"
        )
    if not trace.records:
        raise HarnessError("Cannot compare empty traces")


def energy_reduction(trace: EpisodeTrace, reference: EpisodeTrace) -> float:
    """1 - E(trace) / E(reference), with probe and inference energy included in E(trace)."""
    _check_pair(trace, reference)
    return 1.0 - trace.total_energy_mj / reference.total_energy_mj


def aecr(trace: EpisodeTrace, reference: EpisodeTrace) -> np.ndarray:
    """Accumulated energy consumption reduction after each frame."""
    _check_pair(trace, reference)
    spent = np.cumsum(trace.charged_totals)
    ref = np.cumsum(reference.charged_totals)
    curve = 1.0 - spent / ref
    # final value is the same expression as energy_reduction
    curve[-1] = energy_reduction(trace, reference)
    return curve


def is_pareto_dominated(
    point: Tuple[float, float],
    others: Iterable[Tuple[float, float]],
    accuracy_tolerance: float = 0.0,
    reduction_tolerance: float = 0.0,
) -> bool:
    """
    (accuracy, reduction) is dominated when some other point is better by at
    least the tolerance on both axes (and strictly better on one).
    """
    acc, red = point
    for o_acc, o_red in others:
        d_acc, d_red = o_acc - acc, o_red - red
        if d_acc >= accuracy_tolerance and d_red >= reduction_tolerance and (d_acc > 0 or d_red > 0):
            return True
    return False


def pareto_front(
    points: Sequence[Tuple[float, float]],
    accuracy_tolerance: float = 0.0,
    reduction_tolerance: float = 0.0,
) -> List[int]:
    """Indices of the non-dominated points, in input order."""
    return [
        i for i, p in enumerate(points)
        if not is_pareto_dominated(
            p, (q for j, q in enumerate(points) if j != i), accuracy_tolerance, reduction_tolerance
        )
    ]


@dataclass(frozen=True)
class SweepResult:
    policy: str
    params: str
    seed: int
    lambda_: float
    mean_accuracy: float
    total_energy_mj: float
    energy_reduction: float
    key_frames: int
    mean_reward: float
    aecr_curve: Tuple[float, ...]

    @classmethod
    def from_traces(cls, trace: EpisodeTrace, reference: EpisodeTrace) -> "SweepResult":
        return cls(
            policy=trace.policy_id, params=trace.params, seed=trace.seed, lambda_=trace.lambda_,
            mean_accuracy=trace.mean_accuracy, total_energy_mj=trace.total_energy_mj,
            energy_reduction=energy_reduction(trace, reference), key_frames=trace.key_frames,
            mean_reward=float(np.mean(trace.rewards)), aecr_curve=tuple(float(x) for x in aecr(trace, reference)),
        )

    @property
    def point(self) -> Tuple[float, float]:
        return (self.mean_accuracy, self.energy_reduction)


# --- Policies by name ---

def build_policy(spec: str, experiment: Experiment) -> Tuple[Policy, Optional[float]]:
    """
    Resolves a CLI policy string. `rl:<checkpoint>` loads a trained network
    and returns the lambda it was trained with (from checkpoint metadata).

    Raises:
        PolicySpecError: For unknown or malformed baseline specs.
        OSError / QNetError: If the checkpoint cannot be read.
    """
    if spec.startswith("rl:"):
        ckpt = Path(spec[3:])
        params, meta = load_params(ckpt)
        policy = QPolicy(params, experiment.overhead, label=ckpt.stem)
        lam = meta.get("lambda")
        return policy, (float(lam) if lam is not None else None)
    return parse_policy(spec, random_seed=experiment.cfg.policies.random_seed), None


def run_policy(experiment: Experiment, policy: Policy, seed: int, lambda_: Optional[float] = None) -> SweepResult:
    """Rolls `policy` and the all-key reference on sequence `seed`."""
    env = experiment.make_env(lambda_)
    reference = rollout(env, AllKeyPolicy(), seed)
    trace = rollout(env, policy, seed)
    return SweepResult.from_traces(trace, reference)


def _sweep_point(task: Tuple[Experiment, str, int]) -> SweepResult:
    experiment, spec, seed = task
    policy, lam = build_policy(spec, experiment)
    return run_policy(experiment, policy, seed, lam)


def sweep_specs(experiment: Experiment, checkpoints: Sequence[Union[str, Path]] = ()) -> List[str]:
    """The all-key anchor, every baseline grid point, then one entry per checkpoint."""
    specs = ["allkey"] + [policy_id(p) for p in baseline_grid(experiment.cfg.policies)]
    specs += [f"rl:{c}" for c in checkpoints]
    return specs


def pareto_sweep(
    experiment: Experiment,
    seeds: Sequence[int],
    checkpoints: Sequence[Union[str, Path]] = (),
    workers: int = 1,
) -> List[SweepResult]:
    """
    Evaluates every policy spec on every seed. Results come back in
    (seed, spec) order whatever the worker count.

    Raises:
        ConfigError: If a configured checkpoint file does not exist.
    """
    missing = [str(c) for c in checkpoints if not Path(c).is_file()]
    if missing:
        raise ConfigError(f"Checkpoint(s) not found: {', '.join(missing)}")
    specs = sweep_specs(experiment, checkpoints)
    tasks = [(experiment, spec, seed) for seed in seeds for spec in specs]
    logger.info(f"Sweeping {len(specs)} policies over {len(seeds)} seeds ({len(tasks)} points, {workers} workers)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    return results


# --- Lambda study ---

@dataclass(frozen=True)
class LambdaPoint:
    lambda_: float
    seed: int
    mean_accuracy: float
    energy_reduction: float
    overhead_fraction: float


def lambda_study(
    experiment: Experiment,
    lambdas: Sequence[float],
    seeds: Sequence[int],
    train_cfg: Optional[TrainConfig] = None,
) -> List[LambdaPoint]:
    """
    Trains one agent per (lambda, seed) and evaluates it greedily on the
    held-out sequences of that seed.
    """
    points = []
    base_cfg = train_cfg or experiment.cfg.training
    spec = NetSpec.for_features(experiment.cfg.sequence.feature_dim, base_cfg.trunk_dims)
    for lam in lambdas:
        for seed in seeds:
            cfg = base_cfg.model_copy(update={"lambda_": lam, "seed": seed})
            result = train(lambda: experiment.make_env(lam), cfg, spec)
            eval_seeds = experiment.eval_seeds(seed)
            ev = evaluate(result.params, lambda: experiment.make_env(lam), eval_seeds, experiment.overhead)
            refs = [rollout(experiment.make_env(lam), AllKeyPolicy(), s) for s in eval_seeds]
            reductions = [energy_reduction(t, r) for t, r in zip(ev.traces, refs)]
            overheads = [t.overhead_mj / t.total_energy_mj for t in ev.traces]
            points.append(LambdaPoint(
                lambda_=lam, seed=seed, mean_accuracy=ev.mean_accuracy,
                energy_reduction=float(np.mean(reductions)), overhead_fraction=float(np.max(overheads)),
            ))
            logger.info(f"lambda={lam} seed={seed}: reduction {points[-1].energy_reduction:.4f}, accuracy {ev.mean_accuracy:.4f}")
    return points


# --- CSV artifacts ---

def _f(x: float) -> str:
    return repr(float(x))


def _open_csv(path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path, path.open("w", newline="", encoding="utf-8")


def write_sweep_csv(results: Sequence[SweepResult], path: Union[str, Path]) -> Path:
    path, f = _open_csv(path)
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(config.SWEEP_COLUMNS)
        for r in results:
            writer.writerow([
                r.policy, r.params, r.seed, _f(r.lambda_), _f(r.mean_accuracy), _f(r.total_energy_mj),
                _f(r.energy_reduction), r.key_frames, _f(r.mean_reward),
            ])
    logger.info(f"Wrote {len(results)} sweep rows to {path}")
    return path


def write_aecr_csv(results: Sequence[SweepResult], path: Union[str, Path]) -> Path:
    path, f = _open_csv(path)
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(config.AECR_COLUMNS)
        for r in results:
            for t, value in enumerate(r.aecr_curve):
                writer.writerow([r.policy, r.params, r.seed, t, _f(value)])
    return path


def write_curves_csv(params: AccuracyParams, path: Union[str, Path]) -> Path:
    path, f = _open_csv(path)
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("difficulty", "pixel_ratio", "accum_motion", "accuracy"))
        for d, ratio, m, acc in redundancy_curves(params):
            writer.writerow([_f(d), _f(ratio), _f(m), _f(acc)])
    return path


def write_energy_table_csv(experiment: Experiment, path: Union[str, Path]) -> Path:
    table = action_energy_table(experiment.preset, experiment.cfg.sequence.base_frame)
    path, f = _open_csv(path)
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("action", "width_px", "height_px", "sensor_mj", "isp_mj", "host_mj", "comm_mj", "total_mj"))
        base = experiment.cfg.sequence.base_frame
        for a in ACTIONS:
            frame = base.downsampled(a.linear_downsample)
            e = table[a]
            writer.writerow([
                a.label, frame.width_px, frame.height_px,
                _f(e.sensor_mj), _f(e.isp_mj), _f(e.host_mj), _f(e.comm_mj), _f(e.total_mj),
            ])
    return path


# --- Report ---

def _read_rows(paths: Sequence[Path]) -> List[Dict[str, str]]:
    rows = []
    for p in paths:
        with p.open(newline="", encoding="utf-8") as f:
            rows.extend(csv.DictReader(f))
    return rows


def report(
    sweep_dir: Union[str, Path],
    out_dir: Union[str, Path],
    accuracy_tolerance: float = 0.0,
    reduction_tolerance: float = 0.0,
) -> Tuple[Path, Optional[Path]]:
    """
    Aggregates every sweep*.csv under `sweep_dir` into table.csv (per-policy
    means plus a Pareto flag under the given dominance margins) and, when
    aecr*.csv files exist, aecr_summary.csv (per-policy mean AECR per frame).

    Raises:
        HarnessError: If the directory holds no sweep rows.
    """
    sweep_dir, out_dir = Path(sweep_dir), Path(out_dir)
    if not sweep_dir.is_dir():
        raise HarnessError(f"Sweep directory {sweep_dir} does not exist")
    sweep_files = sorted(sweep_dir.glob("sweep*.csv"))
    rows = _read_rows(sweep_files)
    if not rows:
        raise HarnessError(f"No sweep rows found in {sweep_dir}")
    missing = set(config.SWEEP_COLUMNS) - set(rows[0])
    if missing:
        raise HarnessError(f"Sweep CSV is missing columns: {sorted(missing)}")

    groups: Dict[Tuple[str, str], List[Dict[str, str]]] = defaultdict(list)
    for r in rows:
        groups[(r["policy"], r["params"])].append(r)
    keys = list(groups)
    means = {
        k: (
            float(np.mean([float(r["mean_accuracy"]) for r in groups[k]])),
            float(np.mean([float(r["energy_reduction"]) for r in groups[k]])),
        )
        for k in keys
    }
    front = {keys[i] for i in pareto_front([means[k] for k in keys], accuracy_tolerance, reduction_tolerance)}

    table_path, f = _open_csv(out_dir / "table.csv")
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("policy", "params", "seeds", "mean_accuracy", "energy_reduction", "key_frames", "pareto"))
        for k in keys:
            acc, red = means[k]
            key_frames = float(np.mean([int(r["key_frames"]) for r in groups[k]]))
            writer.writerow([k[0], k[1], len(groups[k]), _f(acc), _f(red), _f(key_frames), int(k in front)])
    logger.info(f"Wrote report table ({len(keys)} policies) to {table_path}")

    aecr_rows = _read_rows(sorted(sweep_dir.glob("aecr*.csv")))
    if not aecr_rows:
        logger.warning(f"No AECR series in {sweep_dir}; skipping aecr_summary.csv")
        return table_path, None
    series: Dict[Tuple[str, str, int], List[float]] = defaultdict(list)
    for r in aecr_rows:
        series[(r["policy"], r["params"], int(r["t"]))].append(float(r["aecr"]))
    aecr_path, f = _open_csv(out_dir / "aecr_summary.csv")
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("policy", "params", "t", "mean_aecr"))
        for (policy, params, t), values in series.items():
            writer.writerow([policy, params, t, _f(np.mean(values))])
    return table_path, aecr_path
