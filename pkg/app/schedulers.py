"""
Baseline resolution schedulers and the policy interface shared with the RL agent.

Each baseline is a pure decision function plus a thin Policy wrapper that
the rollout loop drives frame by frame.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol

import numpy as np
from pydantic import ValidationError

from .energy_model import EnergyBreakdown
from .environment import FrameState, ResolutionEnv
from .models import (
    NONKEY_ACTIONS,
    Action,
    AdaptiveConfig,
    FixedIntervalConfig,
    PolicyGridConfig,
    RandomConfig,
    ScanConfig,
)
from .trace import EpisodeTrace, FrameRecord

logger = logging.getLogger(__name__)

# Downsampling Scan probes from the cheapest resolution upwards
SCAN_ORDER = (Action.A4, Action.A3, Action.A2, Action.A1)


class PolicySpecError(Exception):
    """Custom exception for unknown or malformed policy specifications."""
    pass


@dataclass(frozen=True)
class PolicyDecision:
    action: Action
    extra_energy: EnergyBreakdown = EnergyBreakdown.zero()


@dataclass(frozen=True)
class DecisionContext:
    """What a policy may observe when deciding on frame `frame_index`."""
    frame_index: int
    state: FrameState
    flow_magnitude: float
    accuracy_of: Callable[[Action], float]
    energy_of: Callable[[Action], EnergyBreakdown]


class Policy(Protocol):
    name: str
    params: str

    def reset(self, sequence_seed: int) -> None: ...

    def decide(self, ctx: DecisionContext) -> PolicyDecision: ...


# --- Pure decision functions ---

def downsampling_scan(
    accuracy_of: Callable[[Action], float],
    energy_of: Callable[[Action], EnergyBreakdown],
    cfg: ScanConfig,
) -> PolicyDecision:
    """
    Probes a^4, a^3, a^2, a^1 and keeps the first action whose relative
    accuracy reduction against a^1 is within `cnstrt`. Every rejected round
    is charged its full frame energy.
    """
    reference = accuracy_of(Action.A1)
    extra = EnergyBreakdown.zero()
    for action in SCAN_ORDER:
        if action.is_key:
            return PolicyDecision(action, extra)
        reduction = 1.0 - accuracy_of(action) / reference if reference > 0 else 0.0
        if reduction <= cfg.cnstrt:
            return PolicyDecision(action, extra)
        extra = extra + energy_of(action)
    return PolicyDecision(Action.A1, extra)


def adaptive_hfs(flow_magnitude: float, cfg: AdaptiveConfig) -> PolicyDecision:
    """Key frame iff the flow magnitude since the last key frame exceeds the threshold."""
    if flow_magnitude > cfg.threshold:
        return PolicyDecision(Action.A1)
    return PolicyDecision(cfg.nonkey_action)


def fixed_interval_hfs(frame_index: int, cfg: FixedIntervalConfig) -> PolicyDecision:
    """Period l + 1: one key frame followed by l non-key frames."""
    if frame_index < 0:
        raise ValueError(f"frame_index must be non-negative, got {frame_index}")
    if frame_index % (cfg.l + 1) == 0:
        return PolicyDecision(Action.A1)
    return PolicyDecision(cfg.nonkey_action)


def random_hfs(rng: np.random.Generator, cfg: RandomConfig) -> PolicyDecision:
    """a^1 with probability r, otherwise a^2/a^3/a^4 uniformly. One draw per decision."""
    u = rng.random()
    if u < cfg.key_prob:
        return PolicyDecision(Action.A1)
    k = int((u - cfg.key_prob) / (1.0 - cfg.key_prob) * 3)
    return PolicyDecision(NONKEY_ACTIONS[min(k, 2)])


def counter_rng(*keys: int) -> np.random.Generator:
    """Counter-based stream (Philox) keyed by the given integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(keys))))


# --- Policy wrappers ---

class AllKeyPolicy:
    """Every frame at full resolution; the upper-bound reference."""

    name = "allkey"
    params = ""

    def reset(self, sequence_seed: int) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        return PolicyDecision(Action.A1)


class ScanPolicy:
    name = "scan"

    def __init__(self, cfg: ScanConfig):
        self.cfg = cfg
        self.params = f"cnstrt={cfg.cnstrt:g}"

    def reset(self, sequence_seed: int) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        return downsampling_scan(ctx.accuracy_of, ctx.energy_of, self.cfg)


class AdaptivePolicy:
    name = "adaptive"

    def __init__(self, cfg: AdaptiveConfig):
        self.cfg = cfg
        self.params = f"{cfg.nonkey_action.label}:thr={cfg.threshold:g}"

    def reset(self, sequence_seed: int) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        return adaptive_hfs(ctx.flow_magnitude, self.cfg)


class FixedIntervalPolicy:
    name = "fixed"

    def __init__(self, cfg: FixedIntervalConfig):
        self.cfg = cfg
        self.params = f"{cfg.nonkey_action.label}:l={cfg.l}"

    def reset(self, sequence_seed: int) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        return fixed_interval_hfs(ctx.frame_index, self.cfg)


class RandomPolicy:
    name = "random"

    def __init__(self, cfg: RandomConfig):
        self.cfg = cfg
        self.params = f"r={cfg.key_prob:g}"
        self._rng = counter_rng(cfg.rng_seed)

    def reset(self, sequence_seed: int) -> None:
        self._rng = counter_rng(self.cfg.rng_seed, sequence_seed)

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        return random_hfs(self._rng, self.cfg)


def policy_id(policy: Policy) -> str:
    return f"{policy.name}:{policy.params}" if policy.params else policy.name


def baseline_grid(grid: PolicyGridConfig) -> List[Policy]:
    """Every baseline parameter point, in a fixed order."""
    policies: List[Policy] = [ScanPolicy(ScanConfig(cnstrt=c)) for c in grid.scan_constraints]
    for a in grid.nonkey_actions:
        policies += [AdaptivePolicy(AdaptiveConfig(threshold=thr, nonkey_action=a)) for thr in grid.adaptive_thresholds]
    for a in grid.nonkey_actions:
        policies += [FixedIntervalPolicy(FixedIntervalConfig(l=l, nonkey_action=a)) for l in grid.fixed_intervals]
    policies += [RandomPolicy(RandomConfig(key_prob=r, rng_seed=grid.random_seed)) for r in grid.random_key_probs]
    return policies


def _split_spec(text: str):
    """'fixed:a2:l=1' -> ('fixed', [Action.A2], {'l': '1'})"""
    name, *tokens = [t.strip() for t in text.strip().split(":")]
    actions, options = [], {}
    for tok in tokens:
        if "=" in tok:
            k, v = tok.split("=", 1)
            options[k.strip().lower()] = v.strip()
        elif tok:
            try:
                actions.append(Action.parse(tok))
            except ValueError:
                options.setdefault("_", tok)
    return name.lower(), actions, options


def parse_policy(text: str, random_seed: int = 0) -> Policy:
    """
    Builds a baseline policy from the CLI grammar:
    allkey | scan:cnstrt=0.2 | adaptive:a3:thr=10 | fixed:a2:l=1 | random:r=0.7

    Raises:
        PolicySpecError: If the name is unknown or parameters are invalid.
    """
    name, actions, opts = _split_spec(text)
    nonkey: Dict[str, Action] = {"nonkey_action": actions[0]} if actions else {}
    try:
        if name == "allkey":
            return AllKeyPolicy()
        if name == "scan":
            return ScanPolicy(ScanConfig(cnstrt=float(opts.get("cnstrt", opts.get("_")))))
        if name == "adaptive":
            return AdaptivePolicy(AdaptiveConfig(threshold=float(opts["thr"]), **nonkey))
        if name == "fixed":
            return FixedIntervalPolicy(FixedIntervalConfig(l=int(opts["l"]), **nonkey))
        if name == "random":
            seed = int(opts.get("seed", random_seed))
            return RandomPolicy(RandomConfig(key_prob=float(opts["r"]), rng_seed=seed))
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise PolicySpecError(f"Invalid parameters for policy '{text}': {e}") from e
    raise PolicySpecError(f"Unknown policy '{text}'. Use allkey, scan, adaptive, fixed, random or rl.")


# --- Rollout ---

def rollout(env: ResolutionEnv, policy: Policy, seed: Optional[int] = None) -> EpisodeTrace:
    """
    Runs one episode. The first frame is a key frame without consulting the
    policy; afterwards the policy decides every frame.
    """
    env.reset(seed)
    policy.reset(env.seq.rng_seed)
    trace = EpisodeTrace(
        seed=env.seq.rng_seed, policy_id=policy.name, params=policy.params,
        lambda_=env.reward_cfg.lambda_,
    )
    while not env.done:
        t = env.frame_index
        if t == 0:
            decision = PolicyDecision(Action.A1)
        else:
            ctx = DecisionContext(
                frame_index=t, state=env.state, flow_magnitude=env.flow_magnitude,
                accuracy_of=env.accuracy_of, energy_of=env.energy_of,
            )
            decision = policy.decide(ctx)
        outcome = env.step(decision.action)
        trace.records.append(FrameRecord(
            t=t, action=outcome.action, accuracy=outcome.accuracy, energy=outcome.energy,
            reward=outcome.reward, extra_energy=decision.extra_energy,
        ))
    logger.debug(f"Rollout {policy_id(policy)} seed={trace.seed}: {trace.key_frames} key frames")
    return trace
