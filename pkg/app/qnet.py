"""
Small dense Q-network in numpy with hand-written backpropagation and Adam.

Layout: the feature proxies go through a ReLU trunk; the decision history
vector is concatenated onto the trunk output right before the final (linear)
layer, which emits one Q value per action.
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import config

logger = logging.getLogger(__name__)

# magic(4) | version u16 | header length u32, little endian
_PREAMBLE = struct.Struct("<4sHI")


class QNetError(Exception):
    """Custom exception for network shape and checkpoint errors."""
    pass


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    trunk_dims: Tuple[int, ...] = (64, 32)
    history_dim: int = config.HISTORY_DIM
    n_actions: int = config.NUM_ACTIONS

    def __post_init__(self):
        object.__setattr__(self, "trunk_dims", tuple(int(d) for d in self.trunk_dims))
        if self.input_dim < 1:
            raise QNetError(f"input_dim must be positive, got {self.input_dim}")
        if any(d < 1 for d in self.trunk_dims):
            raise QNetError(f"trunk widths must be positive, got {list(self.trunk_dims)}")
        if self.history_dim < 0 or self.n_actions < 1:
            raise QNetError(f"Invalid history_dim={self.history_dim} or n_actions={self.n_actions}")

    @classmethod
    def for_features(cls, feature_dim: int, trunk_dims: Sequence[int] = (64, 32)) -> "NetSpec":
        """Spec for the resolution agent: two D-dimensional proxies in, four Q values out."""
        return cls(input_dim=2 * feature_dim, trunk_dims=tuple(trunk_dims))

    @property
    def state_dim(self) -> int:
        return self.input_dim + self.history_dim

    @property
    def head_dim(self) -> int:
        trunk_out = self.trunk_dims[-1] if self.trunk_dims else self.input_dim
        return trunk_out + self.history_dim

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        widths = (self.input_dim,) + self.trunk_dims
        shapes = list(zip(widths[:-1], widths[1:]))
        shapes.append((self.head_dim, self.n_actions))
        return shapes

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "trunk_dims": list(self.trunk_dims),
            "history_dim": self.history_dim,
            "n_actions": self.n_actions,
        }


@dataclass(frozen=True)
class NetParams:
    """Weights (fan_in x fan_out) and biases per layer; the last layer is the head."""
    spec: NetSpec
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.spec.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise QNetError(f"Expected {len(shapes)} layers, got {len(self.weights)} weights / {len(self.biases)} biases")
        for i, ((fan_in, fan_out), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise QNetError(f"Layer {i}: expected W{(fan_in, fan_out)} b{(fan_out,)}, got W{w.shape} b{b.shape}")

    def arrays(self) -> List[np.ndarray]:
        """Flat list in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, spec: NetSpec, arrays: Sequence[np.ndarray]) -> "NetParams":
        return cls(spec=spec, weights=tuple(arrays[0::2]), biases=tuple(arrays[1::2]))

    def copy(self) -> "NetParams":
        return NetParams.from_arrays(self.spec, [a.copy() for a in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class ForwardTrace:
    """Per-layer values kept for backward: layer inputs, trunk pre-activations, and Q."""
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    q: np.ndarray


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    learning_rate: float = config.DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: NetParams, **kwargs) -> "AdamState":
        arrays = params.arrays()
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays], **kwargs)


def init_params(spec: NetSpec, rng: np.random.Generator) -> NetParams:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetParams(spec=spec, weights=tuple(weights), biases=tuple(biases))


def _as_batch(params: NetParams, x) -> Tuple[np.ndarray, bool]:
    if hasattr(x, "to_vector"):
        x = x.to_vector()
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.spec.state_dim:
        raise QNetError(f"State width {x.shape[-1]} does not match network input {params.spec.state_dim}")
    return x, single


def forward_trace(params: NetParams, x) -> ForwardTrace:
    """Forward pass over a batch (B x state_dim), keeping what backward needs."""
    x, _ = _as_batch(params, x)
    spec = params.spec
    h, history = x[:, :spec.input_dim], x[:, spec.input_dim:]
    inputs, pre = [], []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0)
    head_in = np.concatenate([h, history], axis=1)
    inputs.append(head_in)
    q = head_in @ params.weights[-1] + params.biases[-1]
    return ForwardTrace(inputs=inputs, pre_activations=pre, q=q)


def forward(params: NetParams, x) -> np.ndarray:
    """
    Q values for one state (FrameState or vector) or a batch of vectors.
    Returns shape (n_actions,) for a single state, (B, n_actions) for a batch.

    Raises:
        QNetError: If the state width does not match the spec.
    """
    _, single = _as_batch(params, x)
    q = forward_trace(params, x).q
    return q[0] if single else q


def backward(params: NetParams, x, actions, td_errors) -> NetParams:
    """
    Gradient of mean(0.5 * td^2) over the batch, where td = Q(s, a) - target.
    Only the chosen action's output unit carries gradient.
    """
    trace = forward_trace(params, x)
    batch = trace.q.shape[0]
    actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
    td_errors = np.atleast_1d(np.asarray(td_errors, dtype=np.float64))
    if actions.shape != (batch,) or td_errors.shape != (batch,):
        raise QNetError(f"Expected {batch} actions and td errors, got {actions.shape} / {td_errors.shape}")

    dq = np.zeros_like(trace.q)
    dq[np.arange(batch), actions] = td_errors / batch

    n = len(params.weights)
    grad_w: List[np.ndarray] = [None] * n
    grad_b: List[np.ndarray] = [None] * n

    grad_w[-1] = trace.inputs[-1].T @ dq
    grad_b[-1] = dq.sum(axis=0)
    # history columns end here
    dh = (dq @ params.weights[-1].T)[:, :params.spec.head_dim - params.spec.history_dim]

    for i in range(n - 2, -1, -1):
        dz = dh * (trace.pre_activations[i] > 0)
        grad_w[i] = trace.inputs[i].T @ dz
        grad_b[i] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T

    return NetParams(spec=params.spec, weights=tuple(grad_w), biases=tuple(grad_b))


def adam_step(params: NetParams, grads: NetParams, opt: AdamState) -> NetParams:
    """Bias-corrected Adam update. Returns new params; `opt` moments and step advance in place."""
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    updated = []
    for i, (p, g) in enumerate(zip(params.arrays(), grads.arrays())):
        if p.shape != g.shape:
            raise QNetError(f"Gradient shape {g.shape} does not match parameter shape {p.shape}")
        opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * g
        opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * g * g
        m_hat = opt.m[i] / c1
        v_hat = opt.v[i] / c2
        updated.append(p - opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.epsilon))
    return NetParams.from_arrays(params.spec, updated)


# --- Checkpoints ---

def save_params(params: NetParams, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Writes a versioned checkpoint: preamble, JSON header (spec, shapes, metadata), float64 LE payload."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = params.arrays()
    header = {
        "spec": params.spec.to_dict(),
        "shapes": [list(a.shape) for a in arrays],
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    with path.open("wb") as f:
        f.write(_PREAMBLE.pack(config.CHECKPOINT_MAGIC, config.CHECKPOINT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
    logger.info(f"Saved checkpoint ({sum(a.size for a in arrays)} parameters) to {path}")
    return path


def load_params(path: Union[str, Path]) -> Tuple[NetParams, Dict[str, Any]]:
    """
    Reads a checkpoint written by save_params.

    Raises:
        OSError: If the file cannot be read.
        QNetError: On bad magic, unsupported version, or a truncated payload.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _PREAMBLE.size:
        raise QNetError(f"{path}: too short to be a checkpoint")
    magic, version, header_len = _PREAMBLE.unpack_from(data)
    if magic != config.CHECKPOINT_MAGIC:
        raise QNetError(f"{path}: bad magic {magic!r}")
    if version != config.CHECKPOINT_VERSION:
        raise QNetError(f"{path}: unsupported checkpoint version {version}")
    start = _PREAMBLE.size
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
        spec = NetSpec(**header["spec"])
        shapes = [tuple(s) for s in header["shapes"]]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise QNetError(f"{path}: corrupt header ({e})") from e

    offset = start + header_len
    arrays = []
    for shape in shapes:
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(data):
            raise QNetError(f"{path}: truncated payload")
        arrays.append(np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        raise QNetError(f"{path}: {len(data) - offset} trailing bytes")
    params = NetParams.from_arrays(spec, arrays)
    logger.debug(f"Loaded checkpoint from {path} with metadata {header.get('metadata')}")
    return params, header.get("metadata", {})
