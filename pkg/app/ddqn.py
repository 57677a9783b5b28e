"""
Double Q-learning trainer: epsilon-greedy exploration, a replay ring buffer,
one Adam step per environment step and periodic target-network syncs.

The online network selects the next action and the target network
evaluates it. Training is single-threaded; the trainer owns its buffer,
optimizer state and random streams.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, List, Optional, Protocol, Sequence, Union

import numpy as np

from . import config
from .energy_model import EnergyBreakdown
from .environment import ResolutionEnv, episode_return
from .models import ACTIONS, TrainConfig
from .qnet import AdamState, NetParams, NetSpec, adam_step, backward, forward, init_params
from .schedulers import DecisionContext, PolicyDecision, rollout
from .trace import EpisodeTrace

logger = logging.getLogger(__name__)


class TrainingError(Exception):
    """Custom exception for invalid training inputs or diverging training."""
    pass


class TrainableEnv(Protocol):
    """Anything the trainer can drive: the resolution environment or a small test MDP."""
    actions: Sequence[Any]

    def reset(self, seed: Optional[int] = None) -> Any: ...

    def step(self, action: Any) -> Any: ...


@dataclass(frozen=True)
class Transition:
    """Experience tuple; states are stored as network input vectors, the action as its index."""
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise TrainingError(f"Non-finite reward {self.reward} in transition")


class ReplayBuffer:
    """Fixed-capacity ring; once full, each push overwrites the oldest transition."""

    def __init__(self, capacity: int = config.DEFAULT_BUFFER_CAPACITY):
        if capacity < 1:
            raise TrainingError(f"Replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        """Uniform sample without replacement within the batch."""
        if batch_size > len(self._items):
            raise TrainingError(f"Cannot sample {batch_size} transitions from a buffer of {len(self._items)}")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    return_: float
    epsilon: float
    mean_td_error: float


@dataclass
class TrainResult:
    params: NetParams
    log: List[EpisodeLog] = field(default_factory=list)
    total_steps: int = 0


def epsilon_at(cfg: TrainConfig, episode: int) -> float:
    """Linear decay from epsilon_start over the first decay_fraction of episodes, then epsilon_end."""
    horizon = max(1, int(cfg.epsilon_decay_fraction * cfg.episodes))
    if episode >= horizon:
        return cfg.epsilon_end
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * episode / horizon


def select_action(q_values, epsilon: float, rng: np.random.Generator, actions: Sequence[Any] = ACTIONS):
    """
    Epsilon-greedy over `actions`; greedy ties go to the lowest index.
    Consumes one uniform draw per call, plus one integer draw when exploring.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise TrainingError(f"epsilon must be in [0, 1], got {epsilon}")
    q = np.asarray(q_values, dtype=np.float64)
    if rng.random() < epsilon:
        return actions[int(rng.integers(len(actions)))]
    return actions[int(np.argmax(q))]


def td_targets(
    rewards: np.ndarray,
    next_states: np.ndarray,
    dones: np.ndarray,
    online: NetParams,
    target: NetParams,
    gamma: float,
) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); r alone on terminal transitions."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if gamma == 0.0:
        return rewards.copy()
    best = np.argmax(forward(online, next_states), axis=1)
    evaluated = forward(target, next_states)[np.arange(len(rewards)), best]
    return rewards + gamma * np.where(dones, 0.0, evaluated)


def td_target(transition: Transition, online: NetParams, target: NetParams, gamma: float) -> float:
    return float(td_targets(
        np.array([transition.reward]), transition.next_state[None, :], np.array([transition.done]),
        online, target, gamma,
    )[0])


def episode_seed(train_seed: int, episode: int) -> int:
    """Sequence seed of a training episode, derived from the run seed."""
    return int(np.random.SeedSequence([train_seed, episode]).generate_state(1)[0])


class DDQNTrainer:
    """
    Owns the online/target networks, Adam state, replay buffer and random
    streams for one training run.
    """

    def __init__(self, spec: NetSpec, cfg: TrainConfig, initial: Optional[NetParams] = None):
        self.cfg = cfg
        init_seq, explore_seq, replay_seq = np.random.SeedSequence(cfg.seed).spawn(3)
        self.online = initial.copy() if initial is not None else init_params(spec, np.random.default_rng(init_seq))
        self.target = self.online.copy()
        self.opt = AdamState.for_params(
            self.online, learning_rate=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.adam_epsilon,
        )
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.explore_rng = np.random.default_rng(explore_seq)
        self.replay_rng = np.random.default_rng(replay_seq)
        self.total_steps = 0

    def sync_target(self) -> None:
        self.target = self.online.copy()

    def learn(self) -> float:
        """One Adam step on a sampled batch; returns the mean absolute TD error."""
        batch = self.buffer.sample(self.cfg.batch_size, self.replay_rng)
        states = np.stack([t.state for t in batch])
        actions = np.array([t.action for t in batch], dtype=np.int64)
        rewards = np.array([t.reward for t in batch])
        next_states = np.stack([t.next_state for t in batch])
        dones = np.array([t.done for t in batch])

        y = td_targets(rewards, next_states, dones, self.online, self.target, self.cfg.gamma)
        q = forward(self.online, states)[np.arange(len(batch)), actions]
        td = q - y
        grads = backward(self.online, states, actions, td)
        self.online = adam_step(self.online, grads, self.opt)
        if not self.online.is_finite():
            raise TrainingError(f"Network parameters became non-finite at step {self.total_steps}")
        return float(np.mean(np.abs(td)))

    def run_episode(self, env: TrainableEnv, episode: int) -> EpisodeLog:
        cfg = self.cfg
        eps = epsilon_at(cfg, episode)
        actions = list(env.actions)
        state = env.reset(seed=episode_seed(cfg.seed, episode))
        ret, discount, td_errors, steps = 0.0, 1.0, [], 0
        while True:
            x = state.to_vector()
            chosen = select_action(forward(self.online, x), eps, self.explore_rng, actions)
            outcome = env.step(chosen)
            self.buffer.push(Transition(
                state=x, action=actions.index(outcome.action), reward=float(outcome.reward),
                next_state=outcome.next_state.to_vector(), done=bool(outcome.done),
            ))
            ret += discount * outcome.reward
            discount *= cfg.gamma
            self.total_steps += 1
            steps += 1

            if len(self.buffer) >= cfg.batch_size:
                td_errors.append(self.learn())
            if self.total_steps % cfg.target_sync_every == 0:
                self.sync_target()

            state = outcome.next_state
            if outcome.done or (cfg.max_steps is not None and steps >= cfg.max_steps):
                break
        mean_td = float(np.mean(td_errors)) if td_errors else 0.0
        return EpisodeLog(episode=episode, return_=ret, epsilon=eps, mean_td_error=mean_td)


def train(
    env_factory: Callable[[], TrainableEnv],
    cfg: TrainConfig,
    spec: NetSpec,
    on_episode: Optional[Callable[[EpisodeLog], None]] = None,
) -> TrainResult:
    """
    Runs cfg.episodes episodes and returns the online network with the
    per-episode log. Deterministic for a given config and seed.

    Raises:
        TrainingError: If parameters diverge or a reward is non-finite.
        SimulationError: Propagated from the environment.
    """
    env = env_factory()
    trainer = DDQNTrainer(spec, cfg)
    log: List[EpisodeLog] = []
    logger.info(
        f"Training {cfg.episodes} episodes (lambda={cfg.lambda_}, seed={cfg.seed}, "
        f"lr={cfg.learning_rate}, batch={cfg.batch_size})"
    )
    for episode in range(cfg.episodes):
        entry = trainer.run_episode(env, episode)
        log.append(entry)
        if on_episode is not None:
            on_episode(entry)
        if (episode + 1) % cfg.log_every == 0:
            recent = log[-cfg.log_every:]
            logger.info(
                f"Episode {episode + 1}/{cfg.episodes}: mean return {np.mean([e.return_ for e in recent]):.4f}, "
                f"epsilon {entry.epsilon:.3f}, mean |td| {np.mean([e.mean_td_error for e in recent]):.4f}"
            )
    return TrainResult(params=trainer.online, log=log, total_steps=trainer.total_steps)


# --- Greedy inference ---

class QPolicy:
    """Greedy policy over trained parameters; every decision is charged `overhead`."""

    name = "rl"

    def __init__(self, params: NetParams, overhead: EnergyBreakdown = EnergyBreakdown.zero(), label: str = ""):
        if params.spec.n_actions != len(ACTIONS):
            raise TrainingError(f"Policy network has {params.spec.n_actions} outputs, need {len(ACTIONS)}")
        self.qparams = params
        self.overhead = overhead
        self.params = label

    def reset(self, sequence_seed: int) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        q = forward(self.qparams, ctx.state)
        return PolicyDecision(ACTIONS[int(np.argmax(q))], self.overhead)


@dataclass
class EvaluationResult:
    traces: List[EpisodeTrace]
    returns: List[float]

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([t.mean_accuracy for t in self.traces]))

    @property
    def mean_energy_mj(self) -> float:
        return float(np.mean([t.total_energy_mj for t in self.traces]))


def evaluate(
    params: NetParams,
    env_factory: Callable[[], ResolutionEnv],
    seeds: Sequence[int],
    overhead: EnergyBreakdown = EnergyBreakdown.zero(),
    label: str = "",
) -> EvaluationResult:
    """Greedy (epsilon = 0) rollouts on the given sequence seeds. Does not modify `params`."""
    if not seeds:
        raise TrainingError("evaluate needs at least one sequence seed")
    env = env_factory()
    policy = QPolicy(params, overhead, label)
    traces = [rollout(env, policy, seed) for seed in seeds]
    returns = [episode_return(t, env.reward_cfg.gamma) for t in traces]
    logger.info(f"Evaluated {len(traces)} sequences: mean return {np.mean(returns):.4f}")
    return EvaluationResult(traces=traces, returns=returns)


def write_training_log(log: Sequence[EpisodeLog], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(config.TRAIN_LOG_COLUMNS)
        for e in log:
            writer.writerow([e.episode, repr(float(e.return_)), repr(float(e.epsilon)), repr(float(e.mean_td_error))])
    logger.info(f"Wrote training log ({len(log)} episodes) to {path}")
    return path
