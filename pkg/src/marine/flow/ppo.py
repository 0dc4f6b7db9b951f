"""Proximal policy optimization over batched navigation environments"""
import logging
import math
from collections import deque
from typing import Deque, List, Optional, Sequence, Tuple

import attr
import numpy as np

from . import Outcome
from .env import NavigationEnv
from .policy import MarineFormer, ObservationBatch
from .tensor import ParameterStore, Tape, Tensor, clip, exp, mean, minimum, mul, scale
from .world import Observation

_LOGGER = logging.getLogger(__name__)


def _unit_interval(instance, attribute, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError("{} must lie in [0, 1], got {}".format(attribute.name, value))


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _non_negative(instance, attribute, value):
    if value < 0:
        raise ValueError("{} must not be negative, got {}".format(attribute.name, value))


@attr.s(frozen=True)
class PpoConfig:
    gamma = attr.ib(type=float, default=0.99, converter=float)
    lam = attr.ib(type=float, default=0.95, converter=float, validator=_unit_interval)
    clip = attr.ib(type=float, default=0.2, converter=float, validator=_positive)
    entropy_coef = attr.ib(type=float, default=0.01, converter=float, validator=_non_negative)
    value_coef = attr.ib(type=float, default=0.5, converter=float, validator=_non_negative)
    learning_rate = attr.ib(type=float, default=3e-4, converter=float, validator=_non_negative)
    epochs = attr.ib(type=int, default=4, converter=int, validator=_positive)
    minibatch_size = attr.ib(type=int, default=256, converter=int, validator=_positive)
    steps_per_update = attr.ib(type=int, default=2048, converter=int, validator=_positive)
    env_count = attr.ib(type=int, default=8, converter=int, validator=_positive)
    max_grad_norm = attr.ib(type=float, default=0.5, converter=float, validator=_positive)
    adam_beta1 = attr.ib(type=float, default=0.9, converter=float, validator=_unit_interval)
    adam_beta2 = attr.ib(type=float, default=0.999, converter=float, validator=_unit_interval)
    adam_eps = attr.ib(type=float, default=1e-8, converter=float, validator=_positive)

    @gamma.validator
    def _check_gamma(self, attribute, value):
        if not 0.0 < value <= 1.0:
            raise ValueError("gamma must lie in (0, 1], got {}".format(value))

    @property
    def n_steps(self) -> int:
        return max(1, self.steps_per_update // self.env_count)


class Adam:
    def __init__(
        self,
        params: ParameterStore,
        learning_rate: float = 3e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    @classmethod
    def from_config(cls, params: ParameterStore, cfg: PpoConfig) -> "Adam":
        return cls(params, cfg.learning_rate, (cfg.adam_beta1, cfg.adam_beta2), cfg.adam_eps)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for p, m, v in zip(self.params, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            if self.learning_rate == 0.0:
                continue
            p.value = p.value - self.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.eps
            )


def clip_grad_norm(params: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so their joint norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * factor
    return total


@attr.s(frozen=True)
class FinishedEpisode:
    seed = attr.ib(type=int)
    outcome = attr.ib(type=Outcome)
    total_return = attr.ib(type=float)
    steps = attr.ib(type=int)
    path_length = attr.ib(type=float)


class EnvGroup:
    """Parallel environments with their observation histories.

    Each environment keeps the window of observations since its episode
    started; the window restarts on every reset.
    """

    def __init__(self, envs: Sequence[NavigationEnv], context_length: int) -> None:
        if not envs:
            raise ValueError("EnvGroup needs at least one environment")
        self.envs = list(envs)
        self.context_length = context_length
        self._histories: List[Deque[Observation]] = []
        self.context_index = np.zeros(len(self.envs), dtype=np.int64)
        for env in self.envs:
            self._histories.append(deque([env.reset()], maxlen=context_length))

    def __len__(self) -> int:
        return len(self.envs)

    def histories(self) -> List[Tuple[Observation, ...]]:
        return [tuple(h) for h in self._histories]

    def step(self, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[FinishedEpisode]]:
        rewards = np.zeros(len(self.envs))
        dones = np.zeros(len(self.envs), dtype=bool)
        finished = []
        for i, (env, action) in enumerate(zip(self.envs, actions)):
            result = env.step(action)
            rewards[i] = result.reward.total
            dones[i] = result.done
            if result.done:
                finished.append(
                    FinishedEpisode(
                        seed=env.episode_seed,
                        outcome=Outcome.from_flag(result.flag),
                        total_return=env.episode_return,
                        steps=result.world.t,
                        path_length=env.path_length,
                    )
                )
                self._histories[i] = deque([env.reset()], maxlen=self.context_length)
                self.context_index[i] = 0
            else:
                self._histories[i].append(result.observation)
                self.context_index[i] += 1
        return rewards, dones, finished


@attr.s(eq=False)
class RolloutBuffer:
    n_steps = attr.ib(type=int)
    env_count = attr.ib(type=int)
    histories = attr.ib(type=List[List[Tuple[Observation, ...]]], factory=list)
    actions = attr.ib(type=np.ndarray, default=None)
    log_probs = attr.ib(type=np.ndarray, default=None)
    values = attr.ib(type=np.ndarray, default=None)
    rewards = attr.ib(type=np.ndarray, default=None)
    dones = attr.ib(type=np.ndarray, default=None)
    context_index = attr.ib(type=np.ndarray, default=None)
    last_values = attr.ib(type=np.ndarray, default=None)
    advantages = attr.ib(type=Optional[np.ndarray], default=None)
    returns = attr.ib(type=Optional[np.ndarray], default=None)
    episodes = attr.ib(type=List[FinishedEpisode], factory=list)

    def __attrs_post_init__(self) -> None:
        self.clear()

    def clear(self) -> None:
        shape = (self.n_steps, self.env_count)
        self.histories = []
        self.actions = np.zeros(shape + (2,))
        self.log_probs = np.zeros(shape)
        self.values = np.zeros(shape)
        self.rewards = np.zeros(shape)
        self.dones = np.zeros(shape, dtype=bool)
        self.context_index = np.zeros(shape, dtype=np.int64)
        self.last_values = np.zeros(self.env_count)
        self.advantages = None
        self.returns = None
        self.episodes = []

    def __len__(self) -> int:
        return len(self.histories) * self.env_count

    @property
    def full(self) -> bool:
        return len(self.histories) == self.n_steps

    def add(self, histories, actions, log_probs, values, rewards, dones, context_index) -> None:
        t = len(self.histories)
        if t >= self.n_steps:
            raise IndexError("Rollout buffer holds only {} steps".format(self.n_steps))
        self.histories.append(list(histories))
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.context_index[t] = context_index
        self.advantages = self.returns = None

    def flat_histories(self) -> List[Tuple[Observation, ...]]:
        return [h for step in self.histories for h in step]


def collect_rollouts(
    policy: MarineFormer,
    envs: EnvGroup,
    n_steps: int,
    rng: Optional[np.random.Generator] = None,
    deterministic: bool = False,
) -> RolloutBuffer:
    buffer = RolloutBuffer(n_steps, len(envs))
    for _ in range(n_steps):
        histories = envs.histories()
        context_index = envs.context_index.copy()
        actions, log_probs, values = policy.act(histories, rng, deterministic)
        rewards, dones, finished = envs.step(actions)
        buffer.add(histories, actions, log_probs, values, rewards, dones, context_index)
        buffer.episodes.extend(finished)
    buffer.last_values = policy.act(envs.histories(), deterministic=True)[2]
    return buffer


def gae(rewards, values, dones, last_values, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates along axis 0; timeouts count as terminal."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(dones, dtype=np.float64)
    advantages = np.zeros_like(rewards)
    next_value = np.asarray(last_values, dtype=np.float64)
    running = np.zeros_like(next_value)
    for t in reversed(range(len(rewards))):
        delta = rewards[t] + gamma * next_value * nonterminal[t] - values[t]
        running = delta + gamma * lam * nonterminal[t] * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    buffer.advantages, buffer.returns = gae(
        buffer.rewards, buffer.values, buffer.dones, buffer.last_values, gamma, lam
    )
    return buffer.advantages, buffer.returns


@attr.s(frozen=True)
class UpdateStats:
    policy_loss = attr.ib(type=float)
    value_loss = attr.ib(type=float)
    entropy = attr.ib(type=float)
    approx_kl = attr.ib(type=float)
    clip_fraction = attr.ib(type=float)
    grad_norm = attr.ib(type=float)
    initial_surrogate = attr.ib(type=float)
    initial_advantage_mean = attr.ib(type=float)
    epoch_losses = attr.ib(type=Tuple[float, ...], converter=tuple)


def update(
    policy: MarineFormer,
    optimizer: Adam,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    rng: Optional[np.random.Generator] = None,
) -> UpdateStats:
    if not buffer.full:
        raise ValueError("Rollout buffer must be full before an update")
    if buffer.advantages is None:
        compute_gae(buffer, cfg.gamma, cfg.lam)
    rng = rng or np.random.default_rng(0)

    histories = buffer.flat_histories()
    count = len(histories)
    actions = buffer.actions.reshape(count, 2)
    old_log_probs = buffer.log_probs.reshape(count)
    returns = buffer.returns.reshape(count)
    advantages = buffer.advantages.reshape(count)
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    totals = {"policy": [], "value": [], "entropy": [], "kl": [], "clipped": [], "norm": []}
    epoch_losses = []
    initial_surrogate = initial_advantage = None
    for _ in range(cfg.epochs):
        order = rng.permutation(count)
        losses = []
        for start in range(0, count, cfg.minibatch_size):
            index = order[start : start + cfg.minibatch_size]
            batch = ObservationBatch.from_histories([histories[i] for i in index], policy.config)
            adv = Tensor(advantages[index])
            optimizer.zero_grad()
            with Tape() as tape:
                output = policy.forward(batch)
                new_log_probs = output.log_prob(actions[index])
                ratio = exp(new_log_probs - Tensor(old_log_probs[index]))
                surrogate = minimum(
                    mul(ratio, adv), mul(clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv)
                )
                policy_loss = scale(mean(surrogate), -1.0)
                error = output.value - Tensor(returns[index])
                value_loss = scale(mean(mul(error, error)), 0.5)
                entropy = output.entropy()
                loss = (
                    policy_loss
                    + scale(value_loss, cfg.value_coef)
                    + scale(entropy, -cfg.entropy_coef)
                )
                tape.backward(loss)

            if initial_surrogate is None:
                initial_surrogate = float(np.mean(ratio.value * adv.value))
                initial_advantage = float(np.mean(adv.value))
            totals["norm"].append(clip_grad_norm(policy.params, cfg.max_grad_norm))
            optimizer.step()

            totals["policy"].append(policy_loss.item())
            totals["value"].append(value_loss.item())
            totals["entropy"].append(entropy.item())
            totals["kl"].append(float(np.mean(old_log_probs[index] - new_log_probs.value)))
            totals["clipped"].append(float(np.mean(np.abs(ratio.value - 1.0) > cfg.clip)))
            losses.append(loss.item() * len(index))
        epoch_losses.append(float(np.sum(losses) / count))

    stats = UpdateStats(
        policy_loss=float(np.mean(totals["policy"])),
        value_loss=float(np.mean(totals["value"])),
        entropy=float(np.mean(totals["entropy"])),
        approx_kl=float(np.mean(totals["kl"])),
        clip_fraction=float(np.mean(totals["clipped"])),
        grad_norm=float(np.mean(totals["norm"])),
        initial_surrogate=initial_surrogate,
        initial_advantage_mean=initial_advantage,
        epoch_losses=epoch_losses,
    )
    _LOGGER.debug(
        "PPO update: policy %.4f value %.4f entropy %.4f clip %.3f",
        stats.policy_loss,
        stats.value_loss,
        stats.entropy,
        stats.clip_fraction,
    )
    return stats
