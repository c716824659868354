"""Trainable toy model partitioned across layers.

An MLP with tanh hidden layers and MSE loss: per-layer forward/backward
math, plain SGD updates, a synthetic regression data stream, and a
centralized reference trainer used as the equivalence oracle for whole
swarm runs. All simulation math is float64; serialized payloads are
little-endian float32.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidConfigError, ShapeError
from .simkernel import RngStream

__all__ = [
    "LayerWeights",
    "Activation",
    "Batch",
    "TrainConfig",
    "init_model",
    "layer_forward",
    "layer_backward",
    "compute_loss",
    "apply_update",
    "serialize_weights",
    "deserialize_weights",
    "make_task_matrix",
    "batch_stream",
    "reference_train",
]


@dataclass
class LayerWeights:
    """One pipeline layer: ``d_out x d_in`` matrix plus bias."""

    matrix: np.ndarray
    bias: np.ndarray
    layer_index: int

    @property
    def d_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def d_out(self) -> int:
        return self.matrix.shape[0]

    def copy(self) -> "LayerWeights":
        return LayerWeights(self.matrix.copy(), self.bias.copy(), self.layer_index)


@dataclass(frozen=True)
class Activation:
    sample_id: str
    layer_index: int
    direction: str  # "forward" | "backward"
    values: np.ndarray


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray  # (batch, d_in)
    targets: np.ndarray  # (batch, d_out)
    batch_id: int


def init_model(seed: int, dims: list[int]) -> list[LayerWeights]:
    """Deterministic init: entries uniform in [-1/sqrt(d_in), 1/sqrt(d_in)]."""
    if len(dims) < 2:
        raise InvalidConfigError(f"need at least 2 layer sizes, got {dims}")
    if any(d < 1 for d in dims):
        raise InvalidConfigError(f"all layer sizes must be >= 1, got {dims}")
    rng = RngStream(seed, "model-init")
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        scale = 1.0 / np.sqrt(d_in)
        sub = rng.fork(f"layer{i}")
        matrix = sub.uniform(-scale, scale, size=(d_out, d_in))
        bias = sub.uniform(-scale, scale, size=d_out)
        layers.append(LayerWeights(matrix=matrix, bias=bias, layer_index=i))
    return layers


def layer_forward(w: LayerWeights, x: np.ndarray, is_last: bool) -> np.ndarray:
    """tanh(Wx + b) for hidden layers, Wx + b for the output layer."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (w.d_in,):
        raise ShapeError(f"layer {w.layer_index}: expected input shape ({w.d_in},), got {x.shape}")
    if is_last:
        return kernels.linear_forward(w.matrix, w.bias, x)
    return kernels.hidden_forward(w.matrix, w.bias, x)


def layer_backward(
    w: LayerWeights, cached_x: np.ndarray, upstream: np.ndarray, is_last: bool
) -> tuple[np.ndarray, LayerWeights]:
    """Analytic gradients of the layer function.

    Returns (gradient w.r.t. the layer input, LayerWeights-shaped gradient).
    """
    cached_x = np.asarray(cached_x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if cached_x.shape != (w.d_in,):
        raise ShapeError(f"layer {w.layer_index}: cached input shape {cached_x.shape} != ({w.d_in},)")
    if upstream.shape != (w.d_out,):
        raise ShapeError(f"layer {w.layer_index}: upstream shape {upstream.shape} != ({w.d_out},)")
    if is_last:
        input_grad, d_matrix, d_bias = kernels.linear_backward(w.matrix, w.bias, cached_x, upstream)
    else:
        input_grad, d_matrix, d_bias = kernels.hidden_backward(w.matrix, w.bias, cached_x, upstream)
    return input_grad, LayerWeights(matrix=d_matrix, bias=d_bias, layer_index=w.layer_index)


def compute_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient 2(pred - target)/n."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    return kernels.mse_loss(pred, target)


def apply_update(w: LayerWeights, grad: LayerWeights, lr: float) -> LayerWeights:
    """Plain SGD step: w' = w - lr * grad."""
    if grad.matrix.shape != w.matrix.shape or grad.bias.shape != w.bias.shape:
        raise ShapeError(
            f"layer {w.layer_index}: grad shapes {grad.matrix.shape}/{grad.bias.shape} "
            f"!= weight shapes {w.matrix.shape}/{w.bias.shape}"
        )
    return LayerWeights(
        matrix=w.matrix - lr * grad.matrix,
        bias=w.bias - lr * grad.bias,
        layer_index=w.layer_index,
    )


# Weight payload layout: little-endian header (layer_index, d_in, d_out,
# optimizer-state length in floats) followed by the row-major matrix, the
# bias, and the optimizer segment, all little-endian float32. Plain SGD
# carries an empty optimizer segment; the slot exists so richer optimizer
# states have a home in the payload format.
_HEADER = struct.Struct("<iiii")


def serialize_weights(w: LayerWeights, optimizer_state: np.ndarray | None = None) -> bytes:
    opt = np.asarray(optimizer_state if optimizer_state is not None else [], dtype="<f4")
    header = _HEADER.pack(w.layer_index, w.d_in, w.d_out, opt.size)
    body = w.matrix.astype("<f4").tobytes() + w.bias.astype("<f4").tobytes() + opt.tobytes()
    return header + body


def deserialize_weights(payload: bytes) -> tuple[LayerWeights, np.ndarray]:
    layer_index, d_in, d_out, opt_len = _HEADER.unpack_from(payload)
    offset = _HEADER.size
    n_mat = d_in * d_out
    flat = np.frombuffer(payload, dtype="<f4", count=n_mat + d_out + opt_len, offset=offset)
    matrix = flat[:n_mat].astype(np.float64).reshape(d_out, d_in)
    bias = flat[n_mat : n_mat + d_out].astype(np.float64)
    opt = flat[n_mat + d_out :].astype(np.float64)
    return LayerWeights(matrix=matrix, bias=bias, layer_index=layer_index), opt


@dataclass(frozen=True)
class TrainConfig:
    """Shared knobs for the reference trainer and swarm scenarios."""

    dims: tuple[int, ...]
    seed: int
    steps: int = 200
    lr: float = 0.05
    batch_size: int = 8
    noise_std: float = 0.01

    def __post_init__(self):
        if len(self.dims) < 2:
            raise InvalidConfigError(f"need at least 2 layer sizes, got {self.dims}")


def make_task_matrix(config: TrainConfig) -> np.ndarray:
    """Ground-truth linear map of the synthetic regression task y = Ax + noise."""
    rng = RngStream(config.seed, "task")
    return rng.uniform(-1.0, 1.0, size=(config.dims[-1], config.dims[0]))


def batch_stream(config: TrainConfig):
    """Deterministic micro-batch generator shared by swarm and oracle runs."""
    a = make_task_matrix(config)
    rng = RngStream(config.seed, "data")
    batch_id = 0
    while True:
        x = rng.uniform(-1.0, 1.0, size=(config.batch_size, config.dims[0]))
        noise = rng.normal(0.0, config.noise_std, size=(config.batch_size, config.dims[-1]))
        y = x @ a.T + noise
        yield Batch(inputs=x, targets=y, batch_id=batch_id)
        batch_id += 1


def train_batch(layers: list[LayerWeights], batch: Batch, lr: float) -> tuple[list[LayerWeights], float]:
    """One SGD step over a micro-batch. Returns (updated layers, mean loss).

    Gradients are accumulated per sample, then scaled by 1/batch once --
    the exact operation order the distributed pipeline must reproduce.
    """
    n_layers = len(layers)
    grad_mats = [np.zeros_like(w.matrix) for w in layers]
    grad_biases = [np.zeros_like(w.bias) for w in layers]
    total_loss = 0.0
    n = batch.inputs.shape[0]
    for s in range(n):
        x = batch.inputs[s]
        cached = []
        h = x
        for li, w in enumerate(layers):
            cached.append(h)
            h = layer_forward(w, h, is_last=(li == n_layers - 1))
        loss, upstream = compute_loss(h, batch.targets[s])
        total_loss += loss
        for li in range(n_layers - 1, -1, -1):
            upstream, grad = layer_backward(
                layers[li], cached[li], upstream, is_last=(li == n_layers - 1)
            )
            grad_mats[li] += grad.matrix
            grad_biases[li] += grad.bias
    updated = []
    for li, w in enumerate(layers):
        grad = LayerWeights(matrix=grad_mats[li] / n, bias=grad_biases[li] / n, layer_index=li)
        updated.append(apply_update(w, grad, lr))
    return updated, total_loss / n


def reference_train(config: TrainConfig) -> np.ndarray:
    """Centralized single-process SGD over the identical micro-batch sequence.

    Equivalence oracle: a fault-free swarm run with one honest miner per
    layer must reproduce this loss curve step for step.
    """
    layers = init_model(config.seed, list(config.dims))
    stream = batch_stream(config)
    losses = np.empty(config.steps, dtype=np.float64)
    for step in range(config.steps):
        batch = next(stream)
        layers, loss = train_batch(layers, batch, config.lr)
        losses[step] = loss
    return losses
