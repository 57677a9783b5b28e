"""
Pydantic models shared across the simulator: hardware parameters, the action
set, sequence/reward/accuracy configuration, policy grids and training config.
"""
import json
import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import config

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)


class ConfigError(Exception):
    """Custom exception for malformed or invalid configuration documents."""
    pass


def read_json_model(path: Union[str, Path], model_cls: Type[M]) -> M:
    """
    Reads a JSON document and validates it into `model_cls`.

    Raises:
        OSError: If the file cannot be read (missing files are I/O errors, not config errors).
        ConfigError: If the document is not JSON or fails validation.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    try:
        model = model_cls.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid {model_cls.__name__}: {e}") from e
    logger.debug(f"Loaded {model_cls.__name__} from {path}")
    return model


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


# --- Actions ---

class Action(Enum):
    """The resolution action set a^1..a^4. a^1 is the key (full resolution) action."""
    A1 = 1
    A2 = 2
    A3 = 3
    A4 = 4

    @property
    def index(self) -> int:
        return self.value

    @property
    def linear_downsample(self) -> int:
        return config.ACTION_DOWNSAMPLE[self.value]

    @property
    def pixel_ratio(self) -> float:
        return 1.0 / (self.linear_downsample ** 2)

    @property
    def is_key(self) -> bool:
        return self is Action.A1

    @property
    def code(self) -> tuple:
        return config.ACTION_CODES[self.value]

    @property
    def label(self) -> str:
        return f"a{self.value}"

    @classmethod
    def parse(cls, value: Union["Action", int, str]) -> "Action":
        """Accepts an Action, 1..4, '2' or 'a2'."""
        if isinstance(value, Action):
            return value
        text = str(value).strip().lower()
        if text.startswith("a"):
            text = text[1:]
        try:
            return cls(int(text))
        except ValueError:
            raise ValueError(f"Unknown action '{value}'. Use a1, a2, a3 or a4.")


ACTIONS = tuple(Action)
NONKEY_ACTIONS = (Action.A2, Action.A3, Action.A4)


# --- Hardware parameters ---

class SensorParams(_Frozen):
    sensor_resolution_mp: float = Field(..., gt=0, description="Sensor resolution R (MP)")
    clock_hz: float = Field(..., gt=0, description="External clock f (Hz)")
    exposure_s: float = Field(..., gt=0, description="Exposure time T_exp (s)")
    idle_power_mw: float = Field(..., gt=0, description="P_sensor,idle (mW)")
    active_power_slope_mw_per_mp: float = Field(..., gt=0, description="Slope of P_sensor,active in R (mW/MP)")
    active_power_offset_mw: float = Field(..., gt=0, description="Constant part of P_sensor,active (mW)")

    @property
    def active_power_mw(self) -> float:
        return self.active_power_slope_mw_per_mp * self.sensor_resolution_mp + self.active_power_offset_mw


class IspParams(_Frozen):
    active_power_mw: float = Field(..., gt=0, description="P_ISP,active (mW)")
    idle_power_mw: float = Field(..., gt=0, description="P_ISP,idle (mW)")
    isp_time_slope_s_per_mp: float = Field(..., gt=0, description="T_ISP slope (s/MP)")
    isp_time_offset_s: float = Field(..., gt=0, description="T_ISP offset (s)")


class HostParams(_Frozen):
    active_power_mw: float = Field(3000.0, gt=0, description="P_host,active (mW)")
    idle_power_mw: float = Field(300.0, gt=0, description="P_host,idle (mW)")
    app_time_key_s_per_mp: float = Field(0.5, gt=0, description="T_app per MP, key frame full analysis")
    app_time_flow_s_per_mp: float = Field(0.12, gt=0, description="T_app per MP, flow-compensated non-key frame")

    @model_validator(mode="after")
    def check_flow_cheaper(self):
        if not self.app_time_flow_s_per_mp < self.app_time_key_s_per_mp:
            raise ValueError(
                f"app_time_flow_s_per_mp ({self.app_time_flow_s_per_mp}) must be below "
                f"app_time_key_s_per_mp ({self.app_time_key_s_per_mp})"
            )
        return self


class CommParams(_Frozen):
    mj_per_mp: float = Field(..., gt=0, description="Interface constant k (mJ/MP)")


class HardwarePreset(_Frozen):
    name: str = "custom"
    sensor: SensorParams
    isp: IspParams
    host: HostParams = HostParams()
    comm: CommParams


class FrameSpec(_Frozen):
    width_px: int = Field(..., gt=0)
    height_px: int = Field(..., gt=0)

    @property
    def pixels(self) -> int:
        return self.width_px * self.height_px

    @property
    def resolution_mp(self) -> float:
        return self.pixels / config.PIXELS_PER_MP

    def downsampled(self, factor: int) -> "FrameSpec":
        """Frame scaled by 1/factor per linear dimension."""
        return FrameSpec(width_px=max(1, self.width_px // factor), height_px=max(1, self.height_px // factor))


# --- Environment configuration ---

class AccuracyParams(_Frozen):
    """Parameters of the parametric accuracy model (committed as versioned JSON)."""
    version: int = 1
    key_base: float = Field(0.9, gt=0, le=1, description="Key-frame accuracy at difficulty 0")
    key_difficulty_slope: float = Field(0.25, ge=0, description="Key-frame accuracy lost per unit difficulty")
    knee_easy: float = Field(0.005, gt=0, lt=1, description="Pixel-ratio knee at difficulty 0")
    knee_hard: float = Field(0.08, gt=0, lt=1, description="Pixel-ratio knee at difficulty 1")
    knee_steepness: float = Field(2.5, gt=0, description="Logistic steepness in log pixel ratio")
    flow_floor: float = Field(0.5, ge=0, le=1, description="Flow-compensation factor as motion grows without bound")
    flow_decay_scale: float = Field(30.0, gt=0, description="Accumulated motion at which the flow factor has decayed by 1/e")

    @model_validator(mode="after")
    def check_knees(self):
        if not self.knee_easy <= self.knee_hard:
            raise ValueError(f"knee_easy ({self.knee_easy}) must not exceed knee_hard ({self.knee_hard})")
        if self.key_base - self.key_difficulty_slope < 0:
            raise ValueError("key_base - key_difficulty_slope must stay non-negative")
        return self


class SequenceConfig(_Frozen):
    length_frames: int = Field(config.DEFAULT_LENGTH_FRAMES, ge=1, description="Sequence length m")
    base_width_px: int = Field(config.DEFAULT_WIDTH_PX, gt=0)
    base_height_px: int = Field(config.DEFAULT_HEIGHT_PX, gt=0)
    difficulty: float = Field(0.5, ge=0, le=1)
    difficulty_jitter: float = Field(0.05, ge=0, description="Per-frame std of difficulty around the sequence value")
    motion_volatility: float = Field(0.5, ge=0, description="Std of the per-frame motion step")
    max_motion: float = Field(4.0, gt=0, description="Upper clamp M_max of the motion magnitude")
    feature_dim: int = Field(config.DEFAULT_FEATURE_DIM, ge=1, description="Dimension D of each feature proxy")
    feature_noise: float = Field(0.05, ge=0)
    rng_seed: int = Field(0, ge=0)

    @property
    def base_frame(self) -> FrameSpec:
        return FrameSpec(width_px=self.base_width_px, height_px=self.base_height_px)


class RewardConfig(_Frozen):
    lambda_: float = Field(0.6, alias="lambda", ge=0, description="Accuracy/energy trade-off weight")
    c0: float = Field(config.DEFAULT_C0, gt=0, description="Positive offset keeping rewards non-negative")
    gamma: float = Field(1.0, ge=0, le=1)
    energy_normalizer: Optional[float] = Field(
        None, gt=0, description="mJ; None means the a^1 key-frame energy of the active preset"
    )

    @classmethod
    def raw_millijoules(cls, lambda_: float = 0.6) -> "RewardConfig":
        """C0 = 825 with energies in raw millijoules."""
        return cls(lambda_=lambda_, c0=config.RAW_MJ_C0, energy_normalizer=1.0)


# --- Policy grids ---

class ScanConfig(_Frozen):
    cnstrt: float = Field(..., gt=0, lt=1)


class AdaptiveConfig(_Frozen):
    threshold: float = Field(..., gt=0)
    nonkey_action: Action = Action.A2

    @field_validator("nonkey_action", mode="before")
    @classmethod
    def parse_action(cls, v):
        return Action.parse(v)

    @field_validator("nonkey_action")
    @classmethod
    def check_nonkey(cls, v):
        if v.is_key:
            raise ValueError("nonkey_action must be one of a2, a3, a4")
        return v


class FixedIntervalConfig(_Frozen):
    l: int = Field(..., ge=1)
    nonkey_action: Action = Action.A2

    @field_validator("nonkey_action", mode="before")
    @classmethod
    def parse_action(cls, v):
        return Action.parse(v)

    @field_validator("nonkey_action")
    @classmethod
    def check_nonkey(cls, v):
        if v.is_key:
            raise ValueError("nonkey_action must be one of a2, a3, a4")
        return v


class RandomConfig(_Frozen):
    key_prob: float = Field(..., ge=0, le=1)
    rng_seed: int = Field(0, ge=0)


class PolicyGridConfig(_Frozen):
    scan_constraints: List[float] = list(config.SCAN_CONSTRAINTS)
    adaptive_thresholds: List[float] = list(config.ADAPTIVE_THRESHOLDS)
    fixed_intervals: List[int] = list(config.FIXED_INTERVALS)
    random_key_probs: List[float] = list(config.RANDOM_KEY_PROBS)
    nonkey_actions: List[Action] = list(NONKEY_ACTIONS)
    random_seed: int = Field(0, ge=0)

    @field_validator("nonkey_actions", mode="before")
    @classmethod
    def parse_actions(cls, v):
        return [Action.parse(a) for a in v]


# --- Training and sweeps ---

class TrainConfig(_Frozen):
    episodes: int = Field(config.DEFAULT_EPISODES, ge=1, description="Training episodes P")
    max_steps: Optional[int] = Field(None, ge=1, description="Steps per episode T; None means the sequence length")
    batch_size: int = Field(config.DEFAULT_BATCH_SIZE, ge=1)
    buffer_capacity: int = Field(config.DEFAULT_BUFFER_CAPACITY, ge=1)
    target_sync_every: int = Field(config.DEFAULT_TARGET_SYNC, ge=1)
    epsilon_start: float = Field(config.EPSILON_START, ge=0, le=1)
    epsilon_end: float = Field(config.EPSILON_END, ge=0, le=1)
    epsilon_decay_fraction: float = Field(config.EPSILON_DECAY_FRACTION, gt=0, le=1)
    gamma: float = Field(1.0, ge=0, le=1)
    lambda_: float = Field(0.6, alias="lambda", ge=0)
    learning_rate: float = Field(config.DEFAULT_LEARNING_RATE, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_epsilon: float = Field(1e-8, gt=0)
    trunk_dims: List[int] = [64, 32]
    seed: int = Field(0, ge=0)
    log_every: int = Field(config.TRAIN_LOG_EVERY, ge=1)

    @model_validator(mode="after")
    def check_epsilon(self):
        if self.epsilon_end > self.epsilon_start:
            raise ValueError(f"epsilon_end ({self.epsilon_end}) exceeds epsilon_start ({self.epsilon_start})")
        if self.batch_size > self.buffer_capacity:
            raise ValueError(f"batch_size ({self.batch_size}) exceeds buffer_capacity ({self.buffer_capacity})")
        return self


class SweepConfig(_Frozen):
    seed_count: int = Field(5, ge=1)
    seed_stride: int = Field(1, ge=1)
    eval_seed_offset: int = Field(10_000, ge=0, description="Evaluation sequences start this far from training seeds")
    lambdas: List[float] = list(config.LAMBDA_GRID)
    checkpoints: List[str] = []
    workers: int = Field(1, ge=1)
    accuracy_tolerance: float = Field(0.02, ge=0)
    reduction_tolerance: float = Field(0.02, ge=0)


class ExperimentConfig(_Frozen):
    hardware_preset: Optional[str] = Field(None, description="Path to a preset JSON; relative to the config file")
    hardware: Optional[HardwarePreset] = None
    accuracy_model: Optional[str] = Field(None, description="Path to accuracy-model JSON; relative to the config file")
    accuracy: Optional[AccuracyParams] = None
    sequence: SequenceConfig = SequenceConfig()
    reward: RewardConfig = RewardConfig()
    policies: PolicyGridConfig = PolicyGridConfig()
    training: TrainConfig = TrainConfig()
    sweep: SweepConfig = SweepConfig()
    policy_overhead_s: float = Field(config.DEFAULT_POLICY_OVERHEAD_S, ge=0)

    @model_validator(mode="after")
    def check_sources(self):
        if self.hardware_preset and self.hardware:
            raise ValueError("Give either hardware_preset or hardware, not both")
        if self.accuracy_model and self.accuracy:
            raise ValueError("Give either accuracy_model or accuracy, not both")
        return self
