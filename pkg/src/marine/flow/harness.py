"""Configuration, evaluation, training and export for navigation runs"""
import asyncio
import csv
import functools
import json
import logging
from collections import deque
from pathlib import Path
from typing import Any, Callable, Deque, Dict, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from . import (
    ConfigError,
    Outcome,
    PolicyName,
    PolicyNotAvailable,
    RunMode,
    StepFlag,
)
from .env import NavigationEnv
from .planners import ApfConfig, OrcaPlannerConfig, apf_action, orca_planner_action, random_action
from .policy import MarineFormer, ObservationBatch, PolicyConfig, load_checkpoint, save_checkpoint
from .ppo import Adam, EnvGroup, FinishedEpisode, PpoConfig, collect_rollouts, compute_gae, update
from .reward import RewardBreakdown, RewardConfig
from .tensor import Tensor, grad_check, mul, reduce_sum
from .utils import WorkerPool
from .world import EpisodeConfig, Observation

_LOGGER = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
EPISODES_FILE = "episodes.jsonl"
CURVE_FILE = "train_curve.csv"
GRADCHECK_FILE = "gradcheck.json"
CURVE_COLUMNS = (
    "update",
    "env_steps",
    "mean_return",
    "success_rate",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
)
TRAJECTORY_COLUMNS = ("t", "x", "y", "v_steer", "theta_steer", "reward", "flag")
EVAL_SEED_OFFSET = 1_000_000
RECENT_EPISODES = 100

PRESETS: Dict[str, Dict[str, Any]] = {
    "test1": {"ao_count": 10, "so_count": 5, "so_radius_range": (1.0, 1.5)},
    "test2": {"ao_count": 25, "so_count": 10, "so_radius_range": (0.2, 0.3)},
    "simple": {
        "ao_count": 0,
        "so_count": 0,
        "vortex_count": 0,
        "source_sink_count": 0,
        "arena_size": 20.0,
    },
    "custom": {},
}


def _optional_path(value) -> Optional[str]:
    return None if value is None else str(value)


def _sweep(value) -> Optional[Tuple[Tuple[int, int], ...]]:
    if value is None:
        return None
    return tuple((int(ao), int(so)) for ao, so in value)


def _preset(instance, attribute, value):
    if value not in PRESETS:
        raise ValueError("Unknown preset {}, expected one of {}".format(value, sorted(PRESETS)))


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


@attr.s(frozen=True)
class RunConfig:
    mode = attr.ib(type=RunMode, default=RunMode.EVAL, converter=RunMode)
    preset = attr.ib(type=str, default="custom", validator=_preset)
    policy = attr.ib(type=PolicyName, default=PolicyName.APF, converter=PolicyName)
    seed = attr.ib(type=int, default=0, converter=int)
    seeds = attr.ib(
        type=Optional[Tuple[int, ...]],
        default=None,
        converter=attr.converters.optional(lambda v: tuple(int(s) for s in v)),
    )
    episodes = attr.ib(type=int, default=100, converter=int, validator=_positive)
    disable_flow_input = attr.ib(type=bool, default=False)
    disable_alignment = attr.ib(type=bool, default=False)
    disable_r_ao = attr.ib(type=bool, default=False)
    disable_r_so = attr.ib(type=bool, default=False)
    disable_r_cf = attr.ib(type=bool, default=False)
    out_dir = attr.ib(type=Optional[str], default=None, converter=_optional_path)
    checkpoint = attr.ib(type=Optional[str], default=None, converter=_optional_path)
    sweep = attr.ib(type=Optional[Tuple[Tuple[int, int], ...]], default=None, converter=_sweep)
    workers = attr.ib(type=int, default=4, converter=int, validator=_positive)
    updates = attr.ib(type=int, default=150, converter=int, validator=_positive)
    eval_interval = attr.ib(type=int, default=10, converter=int, validator=_positive)
    eval_episodes = attr.ib(type=int, default=20, converter=int, validator=_positive)
    gradcheck_histories = attr.ib(type=int, default=10, converter=int, validator=_positive)
    gradcheck_samples = attr.ib(type=Optional[int], default=8)

    @property
    def episode_seeds(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(self.seed, self.seed + self.episodes))

    @property
    def ablations(self) -> Dict[str, bool]:
        return {
            name: getattr(self, name)
            for name in (
                "disable_flow_input",
                "disable_alignment",
                "disable_r_ao",
                "disable_r_so",
                "disable_r_cf",
            )
        }


_SECTIONS = {
    "env": EpisodeConfig,
    "reward": RewardConfig,
    "policy": PolicyConfig,
    "ppo": PpoConfig,
    "run": RunConfig,
}


def _build(section: str, data: Dict[str, Any]):
    cls = _SECTIONS[section]
    known = {a.name for a in attr.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError("Unknown {} keys: {}".format(section, ", ".join(unknown)))
    try:
        return cls(**data)
    except (TypeError, ValueError) as exception:
        raise ConfigError("Invalid {} section: {}".format(section, exception)) from exception


@attr.s(frozen=True)
class HarnessConfig:
    env = attr.ib(type=EpisodeConfig, factory=EpisodeConfig)
    reward = attr.ib(type=RewardConfig, factory=RewardConfig)
    policy = attr.ib(type=PolicyConfig, factory=PolicyConfig)
    ppo = attr.ib(type=PpoConfig, factory=PpoConfig)
    run = attr.ib(type=RunConfig, factory=RunConfig)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HarnessConfig":
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError("Unknown config sections: {}".format(", ".join(unknown)))
        config = cls(**{name: _build(name, data.get(name, {})) for name in _SECTIONS})
        return config.with_preset(config.run.preset)

    def with_preset(self, preset: str) -> "HarnessConfig":
        if preset not in PRESETS:
            raise ConfigError("Unknown preset {}".format(preset))
        try:
            env = attr.evolve(self.env, **PRESETS[preset])
        except (TypeError, ValueError) as exception:
            raise ConfigError("Preset {} does not apply: {}".format(preset, exception)) from exception
        return attr.evolve(self, env=env, run=attr.evolve(self.run, preset=preset))

    def with_run(self, **changes) -> "HarnessConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            return attr.evolve(self, run=attr.evolve(self.run, **changes))
        except (TypeError, ValueError) as exception:
            raise ConfigError("Invalid run override: {}".format(exception)) from exception

    def policy_config(self) -> PolicyConfig:
        """Network config sized to the sensors and honoring ablations."""
        return attr.evolve(
            self.policy,
            ao_capacity=self.env.ao_capacity,
            prediction_horizon=self.env.prediction_horizon,
            beam_count=self.env.beam_count,
            flow_grid_size=self.env.flow_grid_size,
            sensor_range=self.env.sensor_range,
            sensor_fov=self.env.sensor_fov,
            speed_scale=self.env.v_max,
            use_flow_input=self.policy.use_flow_input and not self.run.disable_flow_input,
            use_alignment=self.policy.use_alignment and not self.run.disable_alignment,
        )

    def reward_config(self) -> RewardConfig:
        return attr.evolve(
            self.reward,
            use_r_ao=self.reward.use_r_ao and not self.run.disable_r_ao,
            use_r_so=self.reward.use_r_so and not self.run.disable_r_so,
            use_r_cf=self.reward.use_r_cf and not self.run.disable_r_cf,
        )

    def densities(self) -> List[Tuple[int, int]]:
        if self.run.sweep:
            return list(self.run.sweep)
        return [(self.env.ao_count, self.env.so_count)]


def load_config(path: Union[str, Path, None]) -> HarnessConfig:
    if path is None:
        return HarnessConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exception:
        raise ConfigError("Unable to read config {}".format(path)) from exception
    if not isinstance(data, dict):
        raise ConfigError("Config {} must hold a JSON object".format(path))
    return HarnessConfig.from_dict(data)


class Controller:
    """Maps observations to actions over one episode."""

    def reset(self) -> None:
        pass

    def act(self, obs: Observation) -> np.ndarray:
        raise NotImplementedError()


class ApfController(Controller):
    def __init__(self, config: Optional[ApfConfig] = None):
        self.config = config or ApfConfig()

    def act(self, obs):
        return apf_action(obs, obs.goal, self.config)


class OrcaController(Controller):
    def __init__(self, config: Optional[OrcaPlannerConfig] = None):
        self.config = config or OrcaPlannerConfig()

    def act(self, obs):
        return orca_planner_action(obs, obs.goal, self.config)


class RandomController(Controller):
    def __init__(self, seed: int):
        self._seed = seed
        self._rng = np.random.default_rng(seed)

    def reset(self):
        self._rng = np.random.default_rng(self._seed)

    def act(self, obs):
        return random_action(self._rng)


class MarineFormerController(Controller):
    """Deterministic policy mean over a sliding observation window."""

    def __init__(self, model: MarineFormer):
        self.model = model
        self._history: Deque[Observation] = deque(maxlen=model.config.context_length)

    def reset(self):
        self._history.clear()

    def act(self, obs):
        self._history.append(obs)
        actions, _, _ = self.model.act([tuple(self._history)], deterministic=True)
        return actions[0]


def make_controller(
    name: PolicyName, env: EpisodeConfig, seed: int, model: Optional[MarineFormer] = None
) -> Controller:
    if name is PolicyName.APF:
        return ApfController(
            ApfConfig(
                speed_cap=env.v_max,
                obstacle_radius=env.ao_radius,
                hull_radius=env.hull_radius,
                sensor_range=env.sensor_range,
                sensor_fov=env.sensor_fov,
            )
        )
    if name is PolicyName.ORCA:
        return OrcaController(
            OrcaPlannerConfig(
                cruise_speed=env.v_max,
                hull_radius=env.hull_radius,
                obstacle_radius=env.ao_radius,
                neighbor_max_speed=env.ao_max_speed,
                time_horizon=env.orca_time_horizon,
                neighbor_dist=env.orca_neighbor_dist,
                dt=env.dt,
            )
        )
    if name is PolicyName.RANDOM:
        return RandomController(seed)
    if model is None:
        raise PolicyNotAvailable("MarineFormer needs a trained checkpoint")
    return MarineFormerController(model)


@attr.s(frozen=True)
class StepLog:
    t = attr.ib(type=int)
    position = attr.ib(type=Tuple[float, float])
    v_steer = attr.ib(type=float)
    theta_steer = attr.ib(type=float)
    action = attr.ib(type=Tuple[float, float])
    reward = attr.ib(type=RewardBreakdown)
    flag = attr.ib(type=StepFlag)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "position": list(self.position),
            "action": list(self.action),
            "reward": self.reward.to_dict(),
            "flags": self.flag.value,
        }


@attr.s(frozen=True)
class EpisodeRecord:
    seed = attr.ib(type=int)
    ao = attr.ib(type=int)
    so = attr.ib(type=int)
    outcome = attr.ib(type=Outcome)
    path_length = attr.ib(type=float)
    steps = attr.ib(type=int)
    total_return = attr.ib(type=float)
    log = attr.ib(type=Tuple[StepLog, ...], default=(), converter=tuple)
    scene = attr.ib(type=Optional[Dict[str, Any]], default=None, eq=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "ao": self.ao,
            "so": self.so,
            "outcome": self.outcome.value,
            "path_length": self.path_length,
            "steps": self.steps,
            "return": self.total_return,
        }


def run_episode(
    env_cfg: EpisodeConfig,
    reward_cfg: RewardConfig,
    controller: Controller,
    seed: int,
    keep_log: bool = False,
) -> EpisodeRecord:
    env = NavigationEnv(env_cfg, reward_cfg, seed)
    obs = env.reset(seed)
    scene = env.world.to_scene() if keep_log else None
    controller.reset()
    log = []
    while True:
        result = env.step(controller.act(obs))
        if keep_log:
            usv = result.world.usv
            log.append(
                StepLog(
                    t=result.world.t,
                    position=(float(usv.position[0]), float(usv.position[1])),
                    v_steer=usv.steer_speed,
                    theta_steer=usv.steer_heading,
                    action=(float(result.action[0]), float(result.action[1])),
                    reward=result.reward,
                    flag=result.flag,
                )
            )
        obs = result.observation
        if result.done:
            break
    return EpisodeRecord(
        seed=seed,
        ao=env_cfg.ao_count,
        so=env_cfg.so_count,
        outcome=Outcome.from_flag(result.flag),
        path_length=env.path_length,
        steps=result.world.t,
        total_return=env.episode_return,
        log=log,
        scene=scene,
    )


@attr.s(frozen=True)
class DensityResult:
    ao = attr.ib(type=int)
    so = attr.ib(type=int)
    episodes = attr.ib(type=int)
    success_rate = attr.ib(type=float)
    path_length = attr.ib(type=Optional[float])
    collisions = attr.ib(type=int)
    timeouts = attr.ib(type=int)

    @classmethod
    def from_records(cls, ao: int, so: int, records: Sequence[EpisodeRecord]) -> "DensityResult":
        successes = [r for r in records if r.outcome is Outcome.SUCCESS]
        return cls(
            ao=ao,
            so=so,
            episodes=len(records),
            success_rate=len(successes) / len(records) if records else 0.0,
            path_length=float(np.mean([r.path_length for r in successes])) if successes else None,
            collisions=sum(r.outcome is Outcome.COLLISION for r in records),
            timeouts=sum(r.outcome is Outcome.TIMEOUT for r in records),
        )


@attr.s(frozen=True)
class EvalSummary:
    metadata = attr.ib(type=Dict[str, Any])
    results = attr.ib(type=Tuple[DensityResult, ...], converter=tuple)
    records = attr.ib(type=Tuple[EpisodeRecord, ...], converter=tuple, eq=False)

    def to_dict(self) -> Dict[str, Any]:
        return {"metadata": self.metadata, "results": [attr.asdict(r) for r in self.results]}


def _metadata(cfg: HarnessConfig, seeds: Sequence[int], model: Optional[MarineFormer]) -> Dict[str, Any]:
    metadata = {
        "policy": cfg.run.policy.value,
        "preset": cfg.run.preset,
        "seeds": {"first": seeds[0] if seeds else None, "count": len(seeds)},
        "path_length": "mean over successful episodes",
        "timeout_counts_as": "failure",
        "ablations": cfg.run.ablations,
        "max_steps": cfg.env.max_steps,
    }
    if model is not None:
        metadata["policy_config_hash"] = model.config.digest()
    return metadata


def _load_model(cfg: HarnessConfig, model: Optional[MarineFormer]) -> Optional[MarineFormer]:
    if cfg.run.policy is not PolicyName.MARINEFORMER or model is not None:
        return model
    if cfg.run.checkpoint is None:
        raise PolicyNotAvailable("Evaluating marineformer requires --checkpoint")
    model, _ = load_checkpoint(cfg.run.checkpoint)
    expected = cfg.policy_config()
    for name in ("ao_capacity", "prediction_horizon", "beam_count", "flow_grid_size"):
        if getattr(model.config, name) != getattr(expected, name):
            raise ConfigError(
                "Checkpoint {} is {} but environment needs {}".format(
                    name, getattr(model.config, name), getattr(expected, name)
                )
            )
    return model


async def evaluate(
    cfg: HarnessConfig,
    seeds: Sequence[int],
    model: Optional[MarineFormer] = None,
    keep_log: bool = False,
) -> EvalSummary:
    reward_cfg = cfg.reward_config()
    results = []
    records: List[EpisodeRecord] = []
    async with WorkerPool(cfg.run.workers) as pool:
        for ao, so in cfg.densities():
            env_cfg = attr.evolve(cfg.env, ao_count=ao, so_count=so)

            def job(seed, env_cfg=env_cfg):
                controller = make_controller(cfg.run.policy, env_cfg, seed, model)
                return run_episode(env_cfg, reward_cfg, controller, seed, keep_log)

            batch = sorted(await pool.map(job, seeds), key=lambda r: r.seed)
            results.append(DensityResult.from_records(ao, so, batch))
            records.extend(batch)
            _LOGGER.info(
                "Density %d/%d: SR %.3f over %d episodes",
                ao,
                so,
                results[-1].success_rate,
                len(batch),
            )
    return EvalSummary(_metadata(cfg, list(seeds), model), results, records)


def write_summary(summary: EvalSummary, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / SUMMARY_FILE
    path.write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    with (directory / EPISODES_FILE).open("w") as stream:
        for record in summary.records:
            stream.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return path


async def run_eval(cfg: HarnessConfig, model: Optional[MarineFormer] = None) -> EvalSummary:
    model = _load_model(cfg, model)
    summary = await evaluate(cfg, cfg.run.episode_seeds, model)
    if cfg.run.out_dir:
        write_summary(summary, cfg.run.out_dir)
    return summary


def export_trajectory(record: EpisodeRecord, directory: Union[str, Path]) -> List[Path]:
    """Write trajectory CSV, scene JSON and per-step JSON lines for one episode."""
    if not record.log:
        raise ValueError("Episode {} was run without a step log".format(record.seed))
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    trajectory = directory / "traj_{}.csv".format(record.seed)
    with trajectory.open("w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(TRAJECTORY_COLUMNS)
        for step in record.log:
            writer.writerow(
                [
                    step.t,
                    repr(step.position[0]),
                    repr(step.position[1]),
                    repr(step.v_steer),
                    repr(step.theta_steer),
                    repr(step.reward.total),
                    step.flag.value,
                ]
            )

    scene = directory / "scene_{}.json".format(record.seed)
    scene.write_text(json.dumps(record.scene or {}, indent=2, sort_keys=True) + "\n")

    steps = directory / "steps_{}.jsonl".format(record.seed)
    with steps.open("w") as stream:
        for step in record.log:
            stream.write(json.dumps(step.to_dict(), sort_keys=True) + "\n")
    return [trajectory, scene, steps]


async def run_rollout(cfg: HarnessConfig, model: Optional[MarineFormer] = None) -> List[EpisodeRecord]:
    model = _load_model(cfg, model)
    summary = await evaluate(cfg, cfg.run.episode_seeds, model, keep_log=True)
    if cfg.run.out_dir:
        for record in summary.records:
            export_trajectory(record, cfg.run.out_dir)
        write_summary(summary, cfg.run.out_dir)
    return list(summary.records)


@attr.s(frozen=True)
class TrainResult:
    checkpoint = attr.ib(type=Optional[Path])
    best_success_rate = attr.ib(type=float)
    curve = attr.ib(type=Tuple[Dict[str, float], ...], converter=tuple)
    env_steps = attr.ib(type=int)


def _append_curve(path: Path, row: Dict[str, float]) -> None:
    fresh = not path.exists()
    with path.open("a", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=CURVE_COLUMNS)
        if fresh:
            writer.writeheader()
        writer.writerow(row)


async def run_train(cfg: HarnessConfig) -> TrainResult:
    policy_cfg = attr.evolve(cfg.policy_config(), seed=cfg.run.seed)
    model = MarineFormer(policy_cfg)
    reward_cfg = cfg.reward_config()
    ppo = cfg.ppo
    envs = EnvGroup(
        [NavigationEnv(cfg.env, reward_cfg, seed=cfg.run.seed * 1009 + i) for i in range(ppo.env_count)],
        policy_cfg.context_length,
    )
    optimizer = Adam.from_config(model.params, ppo)
    rng = np.random.default_rng(cfg.run.seed)
    out_dir = Path(cfg.run.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_path = out_dir / CURVE_FILE
    if curve_path.exists():
        curve_path.unlink()

    eval_seeds = list(range(EVAL_SEED_OFFSET + cfg.run.seed, EVAL_SEED_OFFSET + cfg.run.seed + cfg.run.eval_episodes))
    eval_cfg = attr.evolve(cfg, run=attr.evolve(cfg.run, policy=PolicyName.MARINEFORMER, sweep=None))
    recent: Deque[FinishedEpisode] = deque(maxlen=RECENT_EPISODES)
    loop = asyncio.get_running_loop()
    checkpoint = None
    best = -1.0
    env_steps = 0
    rows = []
    for index in range(1, cfg.run.updates + 1):
        buffer = await loop.run_in_executor(
            None, functools.partial(collect_rollouts, model, envs, ppo.n_steps, rng)
        )
        env_steps += len(buffer)
        compute_gae(buffer, ppo.gamma, ppo.lam)
        stats = await loop.run_in_executor(
            None, functools.partial(update, model, optimizer, buffer, ppo, rng)
        )
        recent.extend(buffer.episodes)
        row = {
            "update": index,
            "env_steps": env_steps,
            "mean_return": float(np.mean([e.total_return for e in recent])) if recent else 0.0,
            "success_rate": float(np.mean([e.outcome is Outcome.SUCCESS for e in recent])) if recent else 0.0,
            "policy_loss": stats.policy_loss,
            "value_loss": stats.value_loss,
            "entropy": stats.entropy,
            "clip_fraction": stats.clip_fraction,
        }
        rows.append(row)
        _append_curve(curve_path, row)
        _LOGGER.debug("Update %d: %s", index, row)

        if index % cfg.run.eval_interval == 0 or index == cfg.run.updates:
            summary = await evaluate(eval_cfg, eval_seeds, model)
            success_rate = summary.results[0].success_rate
            _LOGGER.info("Update %d held-out SR %.3f (best %.3f)", index, success_rate, best)
            if success_rate >= best:
                best = success_rate
                checkpoint = save_checkpoint(model, out_dir, step_count=env_steps)
    return TrainResult(checkpoint, best, rows, env_steps)


def probe_loss(output_weights: Dict[str, np.ndarray]) -> Callable:
    """Scalar test loss mixing every policy output with fixed weights."""

    def loss(output) -> Tensor:
        return (
            reduce_sum(mul(output.mean, output_weights["mean"]))
            + reduce_sum(mul(output.value, output_weights["value"]))
            + reduce_sum(mul(output.log_std, output_weights["log_std"]))
        )

    return loss


def sample_histories(cfg: HarnessConfig, count: int, length: int, seed: int = 0) -> List[Tuple[Observation, ...]]:
    """Observation windows from random-action episodes."""
    rng = np.random.default_rng(seed)
    histories = []
    for i in range(count):
        env = NavigationEnv(cfg.env, cfg.reward_config(), seed + i)
        window = [env.reset(seed + i)]
        for _ in range(int(rng.integers(0, length))):
            result = env.step(random_action(rng))
            if result.done:
                break
            window.append(result.observation)
        histories.append(tuple(window[-length:]))
    return histories


def run_gradcheck(cfg: HarnessConfig) -> float:
    policy_cfg = attr.evolve(cfg.policy_config(), seed=cfg.run.seed)
    model = MarineFormer(policy_cfg)
    histories = sample_histories(cfg, cfg.run.gradcheck_histories, policy_cfg.context_length, cfg.run.seed)
    batch = ObservationBatch.from_histories(histories, policy_cfg)
    rng = np.random.default_rng(cfg.run.seed)
    loss = probe_loss(
        {
            "mean": rng.standard_normal((len(histories), 2)),
            "value": rng.standard_normal(len(histories)),
            "log_std": rng.standard_normal(2),
        }
    )
    error = grad_check(
        lambda: loss(model.forward(batch)),
        list(model.params),
        samples=cfg.run.gradcheck_samples,
        rng=rng,
    )
    if cfg.run.out_dir:
        out_dir = Path(cfg.run.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / GRADCHECK_FILE).write_text(
            json.dumps(
                {
                    "max_relative_error": error,
                    "parameters": model.params.size,
                    "histories": len(histories),
                    "samples_per_tensor": cfg.run.gradcheck_samples,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return error
