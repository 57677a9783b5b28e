"""
Synthetic video-analytics MDP: per-frame states, resolution actions,
parametric accuracy and the accuracy/energy reward.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from . import config
from .accuracy import FrameTruth, accuracy_model
from .energy_model import EnergyBreakdown, action_energy_table
from .models import ACTIONS, AccuracyParams, Action, HardwarePreset, RewardConfig, SequenceConfig
from .trace import EpisodeTrace

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    """Custom exception for simulation domain and state errors."""
    pass


class EpisodeFinishedError(SimulationError):
    """Raised when stepping an episode that is already done."""
    pass


@dataclass(frozen=True)
class HistorySummary:
    """Decision history: the last 10 actions as 2-bit codes (zero padded) and the distance from the last key frame."""
    bits: Tuple[int, ...] = (0,) * config.HISTORY_BITS
    distance_from_key: int = 0

    def pushed(self, action: Action) -> "HistorySummary":
        bits = self.bits[2:] + action.code
        distance = 0 if action.is_key else self.distance_from_key + 1
        return HistorySummary(bits=bits, distance_from_key=distance)

    def to_vector(self) -> np.ndarray:
        return np.array(self.bits + (self.distance_from_key / config.DISTANCE_SCALE,), dtype=np.float64)


@dataclass(frozen=True)
class FrameState:
    feature_proxy: np.ndarray
    feature_diff_proxy: np.ndarray
    history: HistorySummary

    @property
    def feature_dim(self) -> int:
        return self.feature_proxy.shape[0]

    def to_vector(self) -> np.ndarray:
        """[feature proxy | feature difference | 20 history bits | scaled distance]."""
        return np.concatenate([self.feature_proxy, self.feature_diff_proxy, self.history.to_vector()])


@dataclass(frozen=True)
class StepOutcome:
    action: Action
    accuracy: float
    accuracy_best: float
    energy: EnergyBreakdown
    reward: float
    next_state: FrameState
    done: bool
    truth: FrameTruth


def reward(
    accuracy_taken: float,
    accuracy_best: float,
    energy: EnergyBreakdown,
    action: Action,
    cfg: RewardConfig,
) -> float:
    """
    lambda / E_hat + C0 for key frames; the accuracy shortfall against the
    frame's best action is added for non-key frames. E_hat is the energy
    divided by cfg.energy_normalizer.

    Raises:
        SimulationError: On zero energy, an unresolved normalizer, or a
            non-key accuracy above the best accuracy.
    """
    if cfg.energy_normalizer is None:
        raise SimulationError("RewardConfig.energy_normalizer must be resolved before computing rewards")
    if energy.total_mj <= 0:
        raise SimulationError(f"Reward undefined for non-positive energy ({energy.total_mj} mJ)")
    e_hat = energy.total_mj / cfg.energy_normalizer
    r = cfg.lambda_ / e_hat + cfg.c0
    if action.is_key:
        return r
    if accuracy_taken > accuracy_best:
        raise SimulationError(f"accuracy_taken ({accuracy_taken}) exceeds accuracy_best ({accuracy_best})")
    return (accuracy_taken - accuracy_best) + r


def episode_return(trace: Union[EpisodeTrace, Sequence[float]], gamma: float) -> float:
    """Discounted return with gamma^0 on the first frame."""
    rewards = trace.rewards if isinstance(trace, EpisodeTrace) else list(trace)
    if not rewards:
        raise SimulationError("episode_return of an empty trace")
    total, discount = 0.0, 1.0
    for r in rewards:
        total += discount * r
        discount *= gamma
    return total


@lru_cache(maxsize=8)
def _proxy_maps(dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed affine maps for the feature proxies, identical across runs."""
    rng = np.random.default_rng(config.PROXY_MAP_SEED + dim)
    w_feat = rng.normal(0.0, 1.0, size=(dim, 2))
    b_feat = rng.normal(0.0, 0.1, size=dim)
    w_diff = rng.normal(0.0, 1.0, size=dim)
    for a in (w_feat, b_feat, w_diff):
        a.setflags(write=False)
    return w_feat, b_feat, w_diff


class ResolutionEnv:
    """
    One video sequence as an episode. The hidden content (motion, difficulty,
    proxy noise) is drawn from `seq.rng_seed` at reset, so every policy sees
    the same video for a given seed. Not thread-safe; use one instance per worker.
    """

    actions = ACTIONS

    def __init__(
        self,
        seq: SequenceConfig,
        preset: HardwarePreset,
        accuracy_params: AccuracyParams,
        reward_cfg: RewardConfig,
    ):
        self.seq = seq
        self.preset = preset
        self.accuracy_params = accuracy_params
        self.energy_table: Dict[Action, EnergyBreakdown] = action_energy_table(preset, seq.base_frame)
        self.key_energy_mj = self.energy_table[Action.A1].total_mj
        if reward_cfg.energy_normalizer is None:
            reward_cfg = reward_cfg.model_copy(update={"energy_normalizer": self.key_energy_mj})
        self.reward_cfg = reward_cfg
        self._t: Optional[int] = None
        self._done = True

    # --- episode lifecycle ---

    def reset(self, seed: Optional[int] = None) -> FrameState:
        """
        Draws the sequence content and returns the state of the first frame.
        The first frame is always processed as a key frame.
        """
        m = self.seq.length_frames
        if m < 1:
            raise SimulationError(f"Sequence length must be at least 1, got {m}")
        if seed is not None:
            self.seq = self.seq.model_copy(update={"rng_seed": seed})
        rng = np.random.default_rng(self.seq.rng_seed)
        s = self.seq

        # m + 1 frames so the terminal next_state has content too
        steps = rng.normal(0.0, 1.0, size=m)
        motion = np.empty(m + 1)
        motion[0] = rng.uniform(0.0, s.max_motion / 2)
        for t in range(m):
            motion[t + 1] = min(max(motion[t] + s.motion_volatility * steps[t], 0.0), s.max_motion)
        difficulty = np.clip(s.difficulty + s.difficulty_jitter * rng.normal(0.0, 1.0, size=m + 1), 0.0, 1.0)
        self._noise_feat = s.feature_noise * rng.normal(0.0, 1.0, size=(m + 1, s.feature_dim))
        self._noise_diff = s.feature_noise * rng.normal(0.0, 1.0, size=(m + 1, s.feature_dim))
        self._motion = motion
        self._difficulty = difficulty

        self._t = 0
        self._accum = 0.0
        self._history = HistorySummary()
        self._done = False
        self._state = self._observe()
        logger.debug(f"Reset sequence seed={s.rng_seed} length={m}")
        return self._state

    def step(self, action: Union[Action, int, str]) -> StepOutcome:
        """
        Applies `action` to the current frame and advances to the next one.

        Raises:
            EpisodeFinishedError: If the episode is done (or was never reset).
        """
        if self._done:
            raise EpisodeFinishedError("Cannot step a finished episode; call reset() first")
        action = Action.parse(action)
        if self._t == 0:
            action = Action.A1

        truth = self.truth
        acc = accuracy_model(truth, action, self.accuracy_params)
        best = accuracy_model(truth, Action.A1, self.accuracy_params)
        energy = self.energy_table[action]
        r = reward(acc, best, energy, action, self.reward_cfg)

        self._accum = 0.0 if action.is_key else self._accum + float(self._motion[self._t + 1])
        self._history = self._history.pushed(action)
        self._t += 1
        self._done = self._t >= self.seq.length_frames
        self._state = self._observe()
        return StepOutcome(
            action=action, accuracy=acc, accuracy_best=best, energy=energy, reward=r,
            next_state=self._state, done=self._done, truth=truth,
        )

    # --- observation ---

    def _observe(self) -> FrameState:
        t = self._t
        w_feat, b_feat, w_diff = _proxy_maps(self.seq.feature_dim)
        content = np.array([self._difficulty[t], self._motion[t] / self.seq.max_motion])
        feature = w_feat @ content + b_feat + self._noise_feat[t]
        diff = w_diff * (self._accum / self.accuracy_params.flow_decay_scale) + self._noise_diff[t]
        return FrameState(feature_proxy=feature, feature_diff_proxy=diff, history=self._history)

    # --- accessors ---

    @property
    def frame_index(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    @property
    def state(self) -> FrameState:
        return self._state

    @property
    def truth(self) -> FrameTruth:
        t = self._t
        return FrameTruth(
            motion_mag=float(self._motion[t]),
            accum_motion_since_key=self._accum,
            frame_difficulty=float(self._difficulty[t]),
        )

    @property
    def flow_magnitude(self) -> float:
        """Motion accumulated since the last key frame; the flow-magnitude proxy."""
        return self._accum

    def accuracy_of(self, action: Action) -> float:
        return accuracy_model(self.truth, action, self.accuracy_params)

    def energy_of(self, action: Action) -> EnergyBreakdown:
        return self.energy_table[action]
