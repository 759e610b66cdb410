"""Lightweight perceptron detector: shared ReLU stack, sigmoid output.

The network applies the same Z-layer hidden stack to each of its T input
signals, concatenates the T feature vectors, and maps them through one
affine-plus-sigmoid layer to K per-device activity scores.  Training is
plain mini-batch Adam on binary cross-entropy with analytic gradients;
everything runs in float64 so gradients can be checked against central
finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataFormatError, MismatchError, NumericError
from .seeds import rng_for

MODEL_MAGIC = b"CFMD"
MODEL_FORMAT_VERSION = 1

BCE_CLIP = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    """Architecture descriptor for the detector."""

    input_dim: int        # 2 * L * N reals per signal
    hidden_layers: int    # Z
    hidden_width: int     # V
    num_devices: int      # K
    cluster_inputs: int = 1  # T; 1 for the decentralized deployment

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "hidden_width",
                     "num_devices", "cluster_inputs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class SlpModel:
    """Parameter set: hidden stack (shared over inputs) plus output layer.

    input_scale multiplies every input before the first layer; it is a
    training-time normalization constant carried with the weights.
    """

    config: ModelConfig
    hidden_weights: list[np.ndarray]  # [ (V, input_dim), (V, V) * (Z-1) ]
    hidden_biases: list[np.ndarray]   # Z vectors of length V
    out_weight: np.ndarray            # (K, T*V)
    out_bias: np.ndarray              # (K,)
    input_scale: float = 1.0

    def copy(self) -> "SlpModel":
        return SlpModel(config=self.config,
                        hidden_weights=[w.copy() for w in self.hidden_weights],
                        hidden_biases=[b.copy() for b in self.hidden_biases],
                        out_weight=self.out_weight.copy(),
                        out_bias=self.out_bias.copy(),
                        input_scale=self.input_scale)

    def parameters(self) -> list[np.ndarray]:
        return (self.hidden_weights + self.hidden_biases
                + [self.out_weight, self.out_bias])


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 200
    early_stop_patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ConfigError("batch_size, max_epochs, patience must be >= 1")


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]
    stopped_epoch: int
    param_count: int


def flatten_signal(block: np.ndarray) -> np.ndarray:
    """(L, N) complex block -> length 2*L*N real vector.

    Layout: symbol-major, then antenna, then (real, imag).  Bijective;
    see unflatten_signal.
    """
    block = np.asarray(block)
    if block.ndim != 2:
        raise MismatchError(f"expected a 2-D signal block, got shape {block.shape}")
    out = np.empty(block.shape + (2,), dtype=np.float64)
    out[..., 0] = block.real
    out[..., 1] = block.imag
    return out.reshape(-1)


def unflatten_signal(vec: np.ndarray, pilot_len: int, num_antennas: int) -> np.ndarray:
    """Inverse of flatten_signal."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != 2 * pilot_len * num_antennas:
        raise MismatchError(
            f"vector of size {vec.size} does not match 2*{pilot_len}*{num_antennas}")
    pairs = vec.reshape(pilot_len, num_antennas, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def flatten_blocks(blocks: np.ndarray) -> np.ndarray:
    """Flatten a (..., L, N) complex array to shape (..., 2*L*N)."""
    blocks = np.asarray(blocks)
    out = np.empty(blocks.shape + (2,), dtype=np.float64)
    out[..., 0] = blocks.real
    out[..., 1] = blocks.imag
    return out.reshape(blocks.shape[:-2] + (-1,))


def init_model(cfg: ModelConfig, seed: int, input_scale: float = 1.0) -> SlpModel:
    """He-style fan-in init for the ReLU stack, zero biases."""
    rng = rng_for(seed, "init")
    weights, biases = [], []
    fan_in = cfg.input_dim
    for _ in range(cfg.hidden_layers):
        weights.append(rng.standard_normal((cfg.hidden_width, fan_in))
                       * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(cfg.hidden_width))
        fan_in = cfg.hidden_width
    concat = cfg.cluster_inputs * cfg.hidden_width
    out_w = rng.standard_normal((cfg.num_devices, concat)) * np.sqrt(1.0 / concat)
    out_b = np.zeros(cfg.num_devices)
    return SlpModel(config=cfg, hidden_weights=weights, hidden_biases=biases,
                    out_weight=out_w, out_bias=out_b,
                    input_scale=float(input_scale))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _hidden_stack(model: SlpModel, x: np.ndarray) -> np.ndarray:
    """Apply the shared ReLU stack to rows of x, shape (B, input_dim)."""
    h = x * model.input_scale
    for w, b in zip(model.hidden_weights, model.hidden_biases):
        h = np.maximum(0.0, h @ w.T + b)
    return h


def forward_logits(model: SlpModel, inputs: np.ndarray) -> np.ndarray:
    """Pre-sigmoid outputs for a batch of shape (B, T, input_dim)."""
    b, t, d = inputs.shape
    cfg = model.config
    if t != cfg.cluster_inputs or d != cfg.input_dim:
        raise MismatchError(
            f"inputs ({t} signals of dim {d}) do not match model "
            f"(T={cfg.cluster_inputs}, input_dim={cfg.input_dim})")
    h = _hidden_stack(model, inputs.reshape(b * t, d))
    return h.reshape(b, t * cfg.hidden_width) @ model.out_weight.T + model.out_bias


def forward_batch(model: SlpModel, inputs: np.ndarray) -> np.ndarray:
    """Sigmoid scores in (0, 1) for a batch of shape (B, T, input_dim)."""
    return _sigmoid(forward_logits(model, inputs))


def forward(model: SlpModel, inputs) -> np.ndarray:
    """Activity scores for one sample given its T flattened signals."""
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise MismatchError(f"expected T vectors, got shape {arr.shape}")
    return forward_batch(model, arr[None, :, :])[0]


def bce_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Binary cross-entropy summed over all devices and samples.

    Predictions are clipped to [1e-7, 1 - 1e-7] before the logs.
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise MismatchError(f"shape mismatch {p.shape} vs {y.shape}")
    p = np.clip(p, BCE_CLIP, 1.0 - BCE_CLIP)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _bce_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Numerically stable summed BCE, log-sum-exp form."""
    z, y = logits, labels
    return float(np.sum(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def loss_and_grads(model: SlpModel, inputs: np.ndarray, labels: np.ndarray):
    """Mean per-sample BCE over a batch plus gradients for every parameter.

    inputs: (B, T, input_dim); labels: (B, K).  Returns (loss, grads) with
    grads ordered like SlpModel.parameters().
    """
    b, t, d = inputs.shape
    cfg = model.config
    v = cfg.hidden_width

    x = inputs.reshape(b * t, d) * model.input_scale
    acts = [x]
    h = x
    for w, bias in zip(model.hidden_weights, model.hidden_biases):
        h = np.maximum(0.0, h @ w.T + bias)
        acts.append(h)
    h_cat = h.reshape(b, t * v)
    logits = h_cat @ model.out_weight.T + model.out_bias
    probs = _sigmoid(logits)
    loss = _bce_from_logits(logits, labels) / b

    dlogits = (probs - labels) / b
    d_out_w = dlogits.T @ h_cat
    d_out_b = dlogits.sum(axis=0)
    dh = (dlogits @ model.out_weight).reshape(b * t, v)

    d_ws: list[np.ndarray] = []
    d_bs: list[np.ndarray] = []
    for z in range(cfg.hidden_layers - 1, -1, -1):
        dz = dh * (acts[z + 1] > 0.0)
        d_ws.append(dz.T @ acts[z])
        d_bs.append(dz.sum(axis=0))
        if z > 0:
            dh = dz @ model.hidden_weights[z]
    d_ws.reverse()
    d_bs.reverse()
    return loss, d_ws + d_bs + [d_out_w, d_out_b]


class _Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.adam_beta1 ** self.t
        b2t = 1.0 - c.adam_beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.adam_beta1
            m += (1.0 - c.adam_beta1) * g
            v *= c.adam_beta2
            v += (1.0 - c.adam_beta2) * g * g
            p -= c.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + c.adam_epsilon)


def _dataset_loss(model: SlpModel, inputs, labels, chunk: int = 4096) -> float:
    total = 0.0
    for i in range(0, inputs.shape[0], chunk):
        total += _bce_from_logits(forward_logits(model, inputs[i:i + chunk]),
                                  labels[i:i + chunk])
    return total / inputs.shape[0]


def train(model: SlpModel, inputs: np.ndarray, labels: np.ndarray,
          cfg: TrainConfig, val_inputs: np.ndarray | None = None,
          val_labels: np.ndarray | None = None) -> tuple[SlpModel, TrainReport]:
    """Mini-batch Adam with early stopping on validation BCE.

    inputs: (num, T, input_dim); labels: (num, K).  When no validation
    set is supplied, validation_fraction of the samples is split off
    (seeded shuffle).  Returns the best-validation-loss weights.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if inputs.ndim == 2:
        inputs = inputs[:, None, :]
    if inputs.shape[0] != labels.shape[0] or inputs.shape[0] == 0:
        raise MismatchError("inputs and labels must be non-empty and aligned")

    rng = rng_for(cfg.seed, "train")
    if val_inputs is None:
        order = rng.permutation(inputs.shape[0])
        n_val = int(round(cfg.validation_fraction * inputs.shape[0]))
        val_idx, tr_idx = order[:n_val], order[n_val:]
        val_inputs, val_labels = inputs[val_idx], labels[val_idx]
        inputs, labels = inputs[tr_idx], labels[tr_idx]
    else:
        val_inputs = np.asarray(val_inputs, dtype=np.float64)
        if val_inputs.ndim == 2:
            val_inputs = val_inputs[:, None, :]
        val_labels = np.asarray(val_labels, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise MismatchError("validation split left no training samples")
    have_val = val_inputs.shape[0] > 0

    work = model.copy()
    params = work.parameters()
    opt = _Adam(params, cfg)
    best = work.copy()
    best_val = np.inf
    since_best = 0
    train_losses: list[float] = []
    val_losses: list[float] = []
    n = inputs.shape[0]

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = loss_and_grads(work, inputs[idx], labels[idx])
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch}")
            if cfg.learning_rate > 0:
                opt.step(params, grads)
            epoch_loss += loss * len(idx)
        train_losses.append(epoch_loss / n)

        monitored = _dataset_loss(work, val_inputs, val_labels) if have_val \
            else train_losses[-1]
        val_losses.append(monitored)
        if not np.isfinite(monitored):
            raise NumericError(f"validation loss non-finite at epoch {epoch}")
        if monitored < best_val:
            best_val = monitored
            best = work.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break

    report = TrainReport(train_losses=train_losses, val_losses=val_losses,
                         stopped_epoch=len(train_losses),
                         param_count=param_count(model.config))
    return best, report


def param_count(cfg: ModelConfig) -> int:
    """Trainable parameter count: shared hidden stack plus output layer."""
    count = (cfg.input_dim + 1) * cfg.hidden_width
    count += (cfg.hidden_layers - 1) * (cfg.hidden_width + 1) * cfg.hidden_width
    count += (cfg.cluster_inputs * cfg.hidden_width + 1) * cfg.num_devices
    return count


def pareto_front(points):
    """Non-dominated subset of (param_count, loss) pairs, sorted by count.

    A point is dominated when another point is <= in both coordinates and
    strictly < in at least one; exact duplicates of a front point are kept.
    """
    pts = list(points)
    if not pts:
        raise ConfigError("pareto_front needs at least one point")
    ordered = sorted(pts, key=lambda p: (p[0], p[1]))
    front = []
    best_loss = np.inf
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j][0] == ordered[i][0]:
            j += 1
        group_min = ordered[i][1]
        if group_min < best_loss:
            front.extend(p for p in ordered[i:j] if p[1] == group_min)
            best_loss = group_min
        i = j
    return front


_MODEL_HEADER_FMT = "<4sI5Id"


def save_model(model: SlpModel, path) -> None:
    """Write the CFMD model file (header, then float64 parameter blocks)."""
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(struct.pack(_MODEL_HEADER_FMT, MODEL_MAGIC, MODEL_FORMAT_VERSION,
                             cfg.input_dim, cfg.hidden_layers, cfg.hidden_width,
                             cfg.num_devices, cfg.cluster_inputs,
                             model.input_scale))
        for arr in model.parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_model_config(path) -> tuple[ModelConfig, float]:
    """Parse architecture and input scale without loading the weights."""
    size = struct.calcsize(_MODEL_HEADER_FMT)
    with open(path, "rb") as fh:
        raw = fh.read(size)
    if len(raw) < size:
        raise DataFormatError("file truncated inside the model header")
    magic, version, d, z, v, k, t, scale = struct.unpack(_MODEL_HEADER_FMT, raw)
    if magic != MODEL_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}; not a CFMD model")
    if version != MODEL_FORMAT_VERSION:
        raise DataFormatError(f"unsupported model version {version}")
    return ModelConfig(input_dim=d, hidden_layers=z, hidden_width=v,
                       num_devices=k, cluster_inputs=t), scale


def load_model(path) -> SlpModel:
    cfg, scale = read_model_config(path)
    model = init_model(cfg, seed=0, input_scale=scale)
    with open(path, "rb") as fh:
        fh.seek(struct.calcsize(_MODEL_HEADER_FMT))
        for arr in model.parameters():
            raw = fh.read(arr.size * 8)
            if len(raw) != arr.size * 8:
                raise DataFormatError("model file truncated inside a weight block")
            arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
        if fh.read(1):
            raise DataFormatError("trailing bytes after the last weight block")
    return model
