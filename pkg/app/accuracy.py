"""
Parametric accuracy model standing in for the vision stack.

Key frames run the full analysis and score a difficulty-dependent plateau.
Non-key frames are downsampled and flow-compensated from the last key frame:
their score is the key score times a resolution factor (logistic knee in log
pixel ratio) and a flow factor that decays with motion accumulated since the
key frame.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Tuple, Union

from . import config
from .models import AccuracyParams, Action, read_json_model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameTruth:
    """Hidden per-frame content. Agents only see it through the feature proxies."""
    motion_mag: float
    accum_motion_since_key: float
    frame_difficulty: float


def load_accuracy_params(path: Union[str, Path] = config.DEFAULT_ACCURACY_PATH) -> AccuracyParams:
    params = read_json_model(path, AccuracyParams)
    logger.info(f"Loaded accuracy model v{params.version} from {path}")
    return params


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def key_accuracy(difficulty: float, params: AccuracyParams) -> float:
    return params.key_base - params.key_difficulty_slope * difficulty


def log_knee(difficulty: float, params: AccuracyParams) -> float:
    """Log pixel-ratio knee; moves right (towards 1) as difficulty rises."""
    lo, hi = math.log(params.knee_easy), math.log(params.knee_hard)
    return lo + difficulty * (hi - lo)


def resolution_factor(pixel_ratio: float, difficulty: float, params: AccuracyParams) -> float:
    """S(ratio): exactly 1 at full resolution, flat above the knee, steep below it."""
    knee = log_knee(difficulty, params)
    k = params.knee_steepness
    s = _sigmoid(k * (math.log(pixel_ratio) - knee)) / _sigmoid(-k * knee)
    return min(1.0, s)


def flow_factor(accum_motion: float, params: AccuracyParams) -> float:
    """Decays from 1 (no motion since key) towards `flow_floor`."""
    floor = params.flow_floor
    return floor + (1.0 - floor) * math.exp(-accum_motion / params.flow_decay_scale)


def nonkey_accuracy(truth: FrameTruth, pixel_ratio: float, params: AccuracyParams) -> float:
    if not 0 < pixel_ratio <= 1:
        raise ValueError(f"pixel_ratio must be in (0, 1], got {pixel_ratio}")
    d = truth.frame_difficulty
    return (
        key_accuracy(d, params)
        * resolution_factor(pixel_ratio, d, params)
        * flow_factor(truth.accum_motion_since_key, params)
    )


def accuracy_model(truth: FrameTruth, action: Action, params: AccuracyParams) -> float:
    """Per-frame accuracy proxy in [0, 1] for taking `action` on a frame with hidden `truth`."""
    if action.is_key:
        return key_accuracy(truth.frame_difficulty, params)
    return nonkey_accuracy(truth, action.pixel_ratio, params)


def redundancy_curves(
    params: AccuracyParams,
    difficulties: Iterable[float] = (0.0, 0.5, 1.0),
    ratios: Iterable[float] = (1.0, 0.5, 0.25, 0.1, 1 / 16, 0.03, 1 / 64, 0.01),
    motions: Iterable[float] = (0.0, 10.0, 20.0, 40.0, 80.0),
) -> List[Tuple[float, float, float, float]]:
    """
    Accuracy over a (difficulty, pixel ratio, accumulated motion) grid.

    Zero motion rows give the spatial-redundancy curves (easy/medium/hard);
    the motion axis shows how flow compensation weakens away from the key frame.
    """
    rows = []
    for d in difficulties:
        for m in motions:
            truth = FrameTruth(motion_mag=0.0, accum_motion_since_key=m, frame_difficulty=d)
            for r in ratios:
                rows.append((d, r, m, nonkey_accuracy(truth, r, params)))
    return rows
