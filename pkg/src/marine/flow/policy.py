"""MarineFormer policy: graph attention over sensor modalities and a temporal transformer"""
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from . import ACTION_LIMIT, CheckpointError
from .tensor import (
    ParameterStore,
    Tensor,
    as_tensor,
    concat,
    conv2d,
    exp,
    layer_norm,
    masked_fill,
    matmul,
    mul,
    reduce_sum,
    reshape,
    scale,
    softmax,
    tanh,
    transpose,
)
from .world import Observation

_LOGGER = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bin"
MANIFEST_FILE = "manifest.json"

EGO_WIDTH = 9
SO_WIDTH = 3
LOG_2PI = math.log(2.0 * math.pi)


def _positive(instance, attribute, value):
    if not value > 0:
        raise ValueError("{} must be positive, got {}".format(attribute.name, value))


def _exactly_one(instance, attribute, value):
    if value != 1:
        raise ValueError("Only a single {} is supported, got {}".format(attribute.name, value))


def _int_tuple(value) -> Tuple[int, ...]:
    return tuple(int(v) for v in value)


@attr.s(frozen=True)
class PolicyConfig:
    embed_dim = attr.ib(type=int, default=64, converter=int, validator=_positive)
    hidden_dim = attr.ib(type=int, default=64, converter=int, validator=_positive)
    conv_channels = attr.ib(type=Tuple[int, ...], default=(8, 16), converter=_int_tuple)
    conv_kernel = attr.ib(type=int, default=3, converter=int, validator=_positive)
    context_length = attr.ib(type=int, default=8, converter=int, validator=_positive)
    heads = attr.ib(type=int, default=1, converter=int, validator=_exactly_one)
    layers = attr.ib(type=int, default=1, converter=int, validator=_exactly_one)
    prediction_horizon = attr.ib(type=int, default=5, converter=int, validator=_positive)
    ao_capacity = attr.ib(type=int, default=30, converter=int, validator=_positive)
    beam_count = attr.ib(type=int, default=11, converter=int, validator=_positive)
    flow_grid_size = attr.ib(type=int, default=8, converter=int, validator=_positive)
    sensor_range = attr.ib(type=float, default=5.0, converter=float, validator=_positive)
    sensor_fov = attr.ib(type=float, default=2 * math.pi / 3, converter=float, validator=_positive)
    arena_scale = attr.ib(type=float, default=20.0, converter=float, validator=_positive)
    speed_scale = attr.ib(type=float, default=2.0, converter=float, validator=_positive)
    init_log_std = attr.ib(type=float, default=math.log(0.05), converter=float)
    use_flow_input = attr.ib(type=bool, default=True)
    use_alignment = attr.ib(type=bool, default=True)
    seed = attr.ib(type=int, default=0, converter=int)

    @conv_channels.validator
    def _check_conv(self, attribute, value):
        if not value or any(c < 1 for c in value):
            raise ValueError("conv_channels must be positive, got {}".format(value))
        if self.flow_grid_size - len(value) * (self.conv_kernel - 1) < 1:
            raise ValueError(
                "Flow grid {} too small for {} conv layers of kernel {}".format(
                    self.flow_grid_size, len(value), self.conv_kernel
                )
            )

    @property
    def ao_feature_width(self) -> int:
        return 4 + 2 * self.prediction_horizon

    @property
    def cf_tokens(self) -> int:
        side = self.flow_grid_size - len(self.conv_channels) * (self.conv_kernel - 1)
        return side * side

    def to_dict(self) -> Dict:
        return attr.asdict(self, retain_collection_types=False)

    @classmethod
    def from_dict(cls, data: Dict) -> "PolicyConfig":
        return cls(**data)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def beam_directions(config: PolicyConfig) -> np.ndarray:
    if config.beam_count == 1:
        return np.zeros(1)
    return np.linspace(-0.5 * config.sensor_fov, 0.5 * config.sensor_fov, config.beam_count)


def ego_node(obs: Observation, config: PolicyConfig) -> np.ndarray:
    position = obs.ego[:2]
    return np.concatenate(
        [
            position / config.arena_scale,
            obs.ego[2:] / config.speed_scale,
            (obs.goal - position) / config.arena_scale,
            [
                obs.steer_speed / config.speed_scale,
                math.cos(obs.steer_heading),
                math.sin(obs.steer_heading),
            ],
        ]
    )


def so_nodes(obs: Observation, config: PolicyConfig) -> np.ndarray:
    angles = beam_directions(config)
    return np.stack(
        [obs.so / config.sensor_range, np.cos(angles), np.sin(angles)], axis=-1
    )


def ao_nodes(obs: Observation, config: PolicyConfig) -> np.ndarray:
    nodes = obs.ao / config.sensor_range
    nodes[:, 2:4] = obs.ao[:, 2:4] / config.speed_scale
    return nodes * obs.ao_mask[:, None]


@attr.s(frozen=True, eq=False)
class ObservationBatch:
    """Scaled node features for B histories of length tau, left padded."""

    ego = attr.ib(type=np.ndarray)
    so = attr.ib(type=np.ndarray)
    ao = attr.ib(type=np.ndarray)
    ao_mask = attr.ib(type=np.ndarray)
    cf = attr.ib(type=np.ndarray)
    step_mask = attr.ib(type=np.ndarray)

    @property
    def batch_size(self) -> int:
        return self.step_mask.shape[0]

    @property
    def context_length(self) -> int:
        return self.step_mask.shape[1]

    @classmethod
    def from_histories(
        cls, histories: Sequence[Sequence[Observation]], config: PolicyConfig
    ) -> "ObservationBatch":
        batch, tau, m = len(histories), config.context_length, config.flow_grid_size
        ego = np.zeros((batch, tau, EGO_WIDTH))
        so = np.zeros((batch, tau, config.beam_count, SO_WIDTH))
        ao = np.zeros((batch, tau, config.ao_capacity, config.ao_feature_width))
        ao_mask = np.zeros((batch, tau, config.ao_capacity), dtype=bool)
        cf = np.zeros((batch, tau, m, m, 2))
        step_mask = np.zeros((batch, tau), dtype=bool)
        for b, history in enumerate(histories):
            window = list(history)[-tau:]
            if not window:
                raise ValueError("History {} is empty".format(b))
            offset = tau - len(window)
            for i, obs in enumerate(window):
                t = offset + i
                ego[b, t] = ego_node(obs, config)
                so[b, t] = so_nodes(obs, config)
                ao[b, t] = ao_nodes(obs, config)
                ao_mask[b, t] = obs.ao_mask
                cf[b, t] = obs.cf
                step_mask[b, t] = True
        return cls(ego, so, ao, ao_mask, cf, step_mask)


@attr.s(frozen=True, eq=False)
class AlignmentMatrix:
    weights = attr.ib(type=Tensor)
    mask = attr.ib(type=np.ndarray)


@attr.s(frozen=True, eq=False)
class GraphEdges:
    cf = attr.ib(type=Tensor)
    ao = attr.ib(type=Tensor)
    so = attr.ib(type=Tensor)

    @property
    def h0(self) -> Tensor:
        return concat([self.cf, self.ao, self.so], axis=-1)


@attr.s(frozen=True, eq=False)
class PolicyOutput:
    mean = attr.ib(type=Tensor)
    log_std = attr.ib(type=Tensor)
    value = attr.ib(type=Tensor)
    attention = attr.ib(type=Dict[str, np.ndarray], factory=dict)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal(self.mean.shape)
        return self.mean.value + np.exp(self.log_std.value) * noise

    def log_prob(self, actions) -> Tensor:
        z = mul(as_tensor(actions) - self.mean, exp(scale(self.log_std, -1.0)))
        dims = self.mean.shape[-1]
        return reduce_sum(scale(mul(z, z), -0.5) - self.log_std, axis=-1) + (
            -0.5 * LOG_2PI * dims
        )

    def entropy(self) -> Tensor:
        dims = self.log_std.size
        return reduce_sum(self.log_std) + 0.5 * (1.0 + LOG_2PI) * dims


class Linear:
    def __init__(
        self,
        store: ParameterStore,
        name: str,
        fan_in: int,
        fan_out: int,
        rng,
        gain: float = 1.0,
        bias: bool = True,
    ):
        bound = gain / math.sqrt(fan_in)
        self.weight = store.add(name + ".weight", rng.uniform(-bound, bound, (fan_in, fan_out)))
        self.bias = store.add(name + ".bias", np.zeros(fan_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out if self.bias is None else out + self.bias


class Mlp:
    def __init__(self, store: ParameterStore, name: str, sizes: Sequence[int], rng, bias: bool = True):
        last = len(sizes) - 2
        self.layers = [
            Linear(store, "{}.{}".format(name, i), fan_in, fan_out, rng, bias=bias or i < last)
            for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = tanh(layer(x))
        return self.layers[-1](x)


class Conv2d:
    def __init__(
        self,
        store: ParameterStore,
        name: str,
        channels_in: int,
        channels_out: int,
        kernel: int,
        rng,
        bias: bool = True,
    ):
        bound = 1.0 / math.sqrt(channels_in * kernel * kernel)
        self.weight = store.add(
            name + ".weight", rng.uniform(-bound, bound, (channels_out, channels_in, kernel, kernel))
        )
        self.bias = (
            store.add(name + ".bias", rng.uniform(-bound, bound, channels_out)) if bias else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, width: int):
        self.gain = store.add(name + ".gain", np.ones(width))
        self.shift = store.add(name + ".shift", np.zeros(width))

    def __call__(self, x: Tensor) -> Tensor:
        return mul(layer_norm(x), self.gain) + self.shift


def _attend(q: Tensor, k: Tensor, v: Tensor, valid: Optional[np.ndarray]) -> Tuple[Tensor, Tensor]:
    logits = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[-1]))
    if valid is not None:
        logits = masked_fill(logits, ~valid)
    weights = softmax(logits, axis=-1)
    if valid is not None:
        # rows without a single valid key attend to nothing
        weights = mul(weights, valid.any(axis=-1, keepdims=True).astype(np.float64))
    return matmul(weights, v), weights


def spatial_attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Attend from a single query over n slots; ``mask`` marks valid slots."""
    valid = None if mask is None else np.asarray(mask, dtype=bool)[..., None, :]
    return _attend(q, k, v, valid)[0]


def compute_alignment(slots, mask, diag: Optional[Tensor] = None) -> AlignmentMatrix:
    """Row-wise softmax of slot similarities; ``diag`` of None gives uniform rows."""
    slots = as_tensor(slots)
    mask = np.asarray(mask, dtype=bool)
    if diag is None:
        logits = Tensor(np.zeros(slots.shape[:-1] + (slots.shape[-2],)))
    else:
        projected = mul(slots, diag)
        logits = matmul(projected, transpose(projected))
    logits = masked_fill(logits, ~mask[..., None, :])
    weights = mul(softmax(logits, axis=-1), mask[..., :, None].astype(np.float64))
    return AlignmentMatrix(weights, mask)


def positional_encoding(length: int, width: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    rates = np.power(10000.0, -(np.arange(0, width, 2) / width))
    encoding = np.zeros((length, width))
    encoding[:, 0::2] = np.sin(positions * rates)
    encoding[:, 1::2] = np.cos(positions * rates[: width // 2])
    return encoding


class MarineFormer:
    """Actor-critic network over observation histories.

    Per step the ego node queries the flow tokens, the resulting flow edge
    queries the above-water and submerged obstacle nodes, and the three edges
    form the token fed to a causal single-layer transformer over the last
    ``context_length`` steps.
    """

    def __init__(self, config: Optional[PolicyConfig] = None) -> None:
        self.config = config = config or PolicyConfig()
        self.params = store = ParameterStore()
        rng = np.random.default_rng(config.seed)
        d, hidden = config.embed_dim, config.hidden_dim
        width = config.ao_feature_width

        self.q_cf = Mlp(store, "cf.query", (EGO_WIDTH, hidden, d), rng)
        channels = (2,) + config.conv_channels
        self.cf_convs = [
            Conv2d(store, "cf.conv{}".format(i), c_in, c_out, config.conv_kernel, rng)
            for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:]))
        ]
        self.k_cf = Conv2d(store, "cf.key", channels[-1], d, 1, rng, bias=False)
        self.v_cf = Conv2d(store, "cf.value", channels[-1], d, 1, rng)

        self.alignment_diag = store.add("ao.alignment", np.full(width, 1.0 / math.sqrt(width)))
        node = width + config.ao_capacity
        self.q_ao = Mlp(store, "ao.query", (d, hidden, d), rng)
        self.k_ao = Mlp(store, "ao.key", (node, hidden, d), rng, bias=False)
        self.v_ao = Mlp(store, "ao.value", (node, hidden, d), rng)

        self.q_so = Mlp(store, "so.query", (d, hidden, d), rng)
        self.k_so = Mlp(store, "so.key", (SO_WIDTH, hidden, d), rng, bias=False)
        self.v_so = Mlp(store, "so.value", (SO_WIDTH, hidden, d), rng)

        self.project = Linear(store, "temporal.project", 3 * d, d, rng)
        self.norm_attention = LayerNorm(store, "temporal.norm1", d)
        self.wq = Linear(store, "temporal.query", d, d, rng)
        self.wk = Linear(store, "temporal.key", d, d, rng, bias=False)
        self.wv = Linear(store, "temporal.value", d, d, rng)
        self.wo = Linear(store, "temporal.out", d, d, rng)
        self.norm_feedforward = LayerNorm(store, "temporal.norm2", d)
        self.feedforward = Mlp(store, "temporal.ffn", (d, 2 * d, d), rng)
        self.norm_final = LayerNorm(store, "temporal.norm3", d)
        self.encoding = positional_encoding(config.context_length, d)

        self.actor = Linear(store, "actor.mean", d, 2, rng, gain=0.01)
        self.log_std = store.add("actor.log_std", np.full(2, config.init_log_std))
        self.critic = Linear(store, "critic", d, 1, rng)
        _LOGGER.debug("Built policy with %d parameters", store.size)

    def encode_cf(self, cf) -> Tensor:
        """Latent flow map of shape (S, C, h, w) from (S, m, m, 2) grids."""
        cf = as_tensor(cf)
        if not self.config.use_flow_input:
            cf = Tensor(np.zeros(cf.shape))
        x = tanh(transpose(cf, (0, 3, 1, 2)))
        for conv in self.cf_convs:
            x = tanh(conv(x))
        return x

    @staticmethod
    def _tokens(x: Tensor) -> Tensor:
        samples, channels = x.shape[:2]
        return transpose(reshape(x, (samples, channels, -1)), (0, 2, 1))

    def edges(
        self, ego, cf, ao, ao_mask, so, attention: Optional[Dict[str, np.ndarray]] = None
    ) -> GraphEdges:
        """Spatial attention edges for S independent observations."""
        ego, so = as_tensor(ego), as_tensor(so)
        ao_mask = np.asarray(ao_mask, dtype=bool)
        samples, d = ego.shape[0], self.config.embed_dim

        latent = self.encode_cf(cf)
        q_cf = reshape(self.q_cf(ego), (samples, 1, d))
        eps_cf, w_cf = _attend(
            q_cf, self._tokens(self.k_cf(latent)), self._tokens(self.v_cf(latent)), None
        )

        slots = mul(as_tensor(ao), ao_mask[..., None].astype(np.float64))
        alignment = compute_alignment(
            slots, ao_mask, self.alignment_diag if self.config.use_alignment else None
        )
        nodes = concat([slots, alignment.weights], axis=-1)
        eps_ao, w_ao = _attend(
            self.q_ao(eps_cf), self.k_ao(nodes), self.v_ao(nodes), ao_mask[..., None, :]
        )
        eps_so, w_so = _attend(self.q_so(eps_cf), self.k_so(so), self.v_so(so), None)

        if attention is not None:
            attention.update(
                cf=w_cf.value, ao=w_ao.value, so=w_so.value, alignment=alignment.weights.value
            )
        return GraphEdges(
            reshape(eps_cf, (samples, d)),
            reshape(eps_ao, (samples, d)),
            reshape(eps_so, (samples, d)),
        )

    def temporal_encode(
        self, h0: Tensor, step_mask, attention: Optional[Dict[str, np.ndarray]] = None
    ) -> Tensor:
        """Causal pre-norm transformer block; returns every position's state."""
        step_mask = np.asarray(step_mask, dtype=bool)
        length = h0.shape[1]
        x = self.project(h0) + self.encoding[-length:]
        y = self.norm_attention(x)
        causal = np.tril(np.ones((length, length), dtype=bool))
        valid = causal[None, :, :] & step_mask[:, None, :]
        mixed, weights = _attend(self.wq(y), self.wk(y), self.wv(y), valid)
        x = x + self.wo(mixed)
        x = x + self.feedforward(self.norm_feedforward(x))
        if attention is not None:
            attention["temporal"] = weights.value
        return self.norm_final(x)

    def forward(self, batch: ObservationBatch) -> PolicyOutput:
        cfg = self.config
        batch_size, length = batch.step_mask.shape
        samples = batch_size * length
        attention: Dict[str, np.ndarray] = {}

        edges = self.edges(
            batch.ego.reshape(samples, EGO_WIDTH),
            batch.cf.reshape((samples,) + batch.cf.shape[2:]),
            batch.ao.reshape((samples,) + batch.ao.shape[2:]),
            batch.ao_mask.reshape(samples, -1),
            batch.so.reshape((samples,) + batch.so.shape[2:]),
            attention,
        )
        h0 = reshape(edges.h0, (batch_size, length, 3 * cfg.embed_dim))
        hidden = self.temporal_encode(h0, batch.step_mask, attention)
        current = hidden[:, -1, :]

        mean = scale(tanh(self.actor(current)), ACTION_LIMIT)
        value = reshape(self.critic(current), (batch_size,))
        return PolicyOutput(mean, self.log_std, value, attention)

    __call__ = forward

    def act(
        self,
        histories: Sequence[Sequence[Observation]],
        rng: Optional[np.random.Generator] = None,
        deterministic: bool = False,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Actions, log-probabilities and values for a batch of histories."""
        output = self.forward(ObservationBatch.from_histories(histories, self.config))
        if deterministic or rng is None:
            actions = output.mean.value.copy()
        else:
            actions = output.sample(rng)
        return actions, output.log_prob(actions).value, output.value.value


def save_checkpoint(model: MarineFormer, directory: Union[str, Path], step_count: int = 0) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / CHECKPOINT_FILE
    model.params.flatten().astype("<f8").tofile(str(path))
    manifest = {
        "names": model.params.names,
        "shapes": [list(s) for s in model.params.shapes],
        "config": model.config.to_dict(),
        "config_hash": model.config.digest(),
        "step_count": int(step_count),
    }
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    _LOGGER.info("Wrote checkpoint %s at step %d", path, step_count)
    return path


def load_checkpoint(directory: Union[str, Path]) -> Tuple[MarineFormer, int]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_FILE).read_text())
        config = PolicyConfig.from_dict(manifest["config"])
        buffer = np.fromfile(str(directory / CHECKPOINT_FILE), dtype="<f8")
    except (OSError, KeyError, TypeError, ValueError) as exception:
        raise CheckpointError("Unable to read checkpoint in {}".format(directory)) from exception

    if config.digest() != manifest.get("config_hash"):
        raise CheckpointError("Config hash mismatch in {}".format(directory))
    model = MarineFormer(config)
    shapes: List[List[int]] = [list(s) for s in model.params.shapes]
    if manifest.get("names") != model.params.names or manifest.get("shapes") != shapes:
        raise CheckpointError("Parameter layout mismatch in {}".format(directory))
    if buffer.size != model.params.size:
        raise CheckpointError(
            "Checkpoint holds {} values, expected {}".format(buffer.size, model.params.size)
        )
    model.params.load_flat(buffer)
    return model, int(manifest.get("step_count", 0))
