import json
import os
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import InvalidArgumentError, NumericFailureError
from app.schemas.market import Label
from app.schemas.predictor import LstmCheckpoint, TrainConfig, WeightBlock
from app.utils.logger import LOGGER

GATES = ("i", "f", "o", "g")
BLOCKS = ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g", "w_out", "b_out")
INIT_SCALE = 0.08
# * keeps probabilities strictly inside (0, 1)
PROB_EPS = 1e-15


@dataclass(frozen=True, eq=False)
class SequenceSample:
    """
    * L prior days of one stock (oldest first) and the target day's direction
    """

    stock_id: str
    target_date: date
    input_dates: Tuple[date, ...]
    inputs: np.ndarray  # (L, D)
    target: Label

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise InvalidArgumentError(f"inputs must be a nonempty (L, D) array, got {self.inputs.shape}")
        if len(self.input_dates) != self.inputs.shape[0]:
            raise InvalidArgumentError("one input date per input vector is required")
        if self.target not in (Label.up, Label.down):
            raise InvalidArgumentError(f"sequence target must be Up or Down, got {self.target}")
        if self.input_dates[-1] >= self.target_date:
            raise InvalidArgumentError(
                f"{self.stock_id}: input {self.input_dates[-1]} does not predate target {self.target_date}"
            )

    @property
    def y(self) -> float:
        return 1.0 if self.target == Label.up else 0.0


@dataclass(eq=False)
class LstmParams:
    """
    Single-layer lstm. Gate weights act on [x_t, h_{t-1}] and have shape
    (hidden, input + hidden); readout maps the last hidden state to one logit.
    """

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    w_out: np.ndarray  # (1, hidden)
    b_out: np.ndarray  # (1,)

    @property
    def hidden_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1] - self.w_i.shape[0]

    def blocks(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BLOCKS}

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: v.copy() for k, v in self.blocks().items()})

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        width = input_dim + hidden_dim
        gates = {f"w_{g}": np.zeros((hidden_dim, width)) for g in GATES}
        biases = {f"b_{g}": np.zeros(hidden_dim) for g in GATES}
        return cls(**gates, **biases, w_out=np.zeros((1, hidden_dim)), b_out=np.zeros(1))

    @classmethod
    def random(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmParams":
        shapes = cls.zeros(input_dim, hidden_dim).blocks()
        return cls(**{k: rng.uniform(-INIT_SCALE, INIT_SCALE, size=v.shape) for k, v in shapes.items()})


@dataclass(frozen=True, eq=False)
class LstmModel:
    params: LstmParams
    loss_trace: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray  # (L * D,)
    bias: float
    loss_trace: Tuple[float, ...] = field(default=())


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _stack(samples: Sequence[SequenceSample]) -> Tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise InvalidArgumentError("no samples given")
    shapes = {s.inputs.shape for s in samples}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"samples disagree on (L, D): {sorted(shapes)}")
    return np.stack([s.inputs for s in samples]), np.array([s.y for s in samples])


def _check_classes(y: np.ndarray):
    if y.min() == y.max():
        raise InvalidArgumentError("training samples hold a single class, both Up and Down are required")


def forward_batch(
    params: LstmParams,
    x: np.ndarray,
    h0: Optional[np.ndarray] = None,
    c0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Dict[str, list]]:
    """
    * run the recurrence over a (B, L, D) batch, returns P(Up) and the bptt cache
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != params.input_dim:
        raise InvalidArgumentError(f"expected (B, L, {params.input_dim}) inputs, got {x.shape}")
    batch, steps, _ = x.shape
    hidden = params.hidden_dim
    h = np.zeros((batch, hidden)) if h0 is None else np.broadcast_to(h0, (batch, hidden)).astype(np.float64)
    c = np.zeros((batch, hidden)) if c0 is None else np.broadcast_to(c0, (batch, hidden)).astype(np.float64)

    cache: Dict[str, list] = {k: [] for k in ("z", "i", "f", "o", "g", "c_prev", "c", "tanh_c", "h")}
    for t in range(steps):
        z = np.concatenate([x[:, t], h], axis=1)
        i = _sigmoid(z @ params.w_i.T + params.b_i)
        f = _sigmoid(z @ params.w_f.T + params.b_f)
        o = _sigmoid(z @ params.w_o.T + params.b_o)
        g = np.tanh(z @ params.w_g.T + params.b_g)
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        step = {"z": z, "i": i, "f": f, "o": o, "g": g, "c_prev": c_prev, "c": c, "tanh_c": tanh_c, "h": h}
        for key, value in step.items():
            cache[key].append(value)

    logit = (h @ params.w_out.T + params.b_out)[:, 0]
    prob = np.clip(_sigmoid(logit), PROB_EPS, 1.0 - PROB_EPS)
    cache["logit"] = [logit]
    cache["prob"] = [prob]
    return prob, cache


def batch_loss(prob: np.ndarray, y: np.ndarray) -> float:
    """mean binary cross-entropy"""
    return float(np.mean(-(y * np.log(prob) + (1.0 - y) * np.log(1.0 - prob))))


def backward_batch(params: LstmParams, cache: Dict[str, list], y: np.ndarray) -> LstmParams:
    """
    * bptt gradients of the mean bce loss over the batch
    """
    prob = cache["prob"][0]
    batch = prob.shape[0]
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (batch,):
        raise InvalidArgumentError(f"expected {batch} targets, got shape {y.shape}")
    inputs = params.input_dim
    grads = LstmParams.zeros(inputs, params.hidden_dim)

    d_logit = (_sigmoid(cache["logit"][0]) - y) / batch  # (B,)
    h_last = cache["h"][-1]
    grads.w_out[:] = d_logit @ h_last
    grads.b_out[:] = d_logit.sum()
    dh = d_logit[:, None] * params.w_out[0][None, :]
    dc_next = np.zeros_like(dh)

    for t in reversed(range(len(cache["h"]))):
        i, f, o, g = cache["i"][t], cache["f"][t], cache["o"][t], cache["g"][t]
        tanh_c = cache["tanh_c"][t]
        d_o = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        d_i = dc * g
        d_g = dc * i
        d_f = dc * cache["c_prev"][t]
        dc_next = dc * f

        pre = {
            "i": d_i * i * (1.0 - i),
            "f": d_f * f * (1.0 - f),
            "o": d_o * o * (1.0 - o),
            "g": d_g * (1.0 - g * g),
        }
        z = cache["z"][t]
        dz = np.zeros_like(z)
        for gate in GATES:
            getattr(grads, f"w_{gate}")[:] += pre[gate].T @ z
            getattr(grads, f"b_{gate}")[:] += pre[gate].sum(axis=0)
            dz += pre[gate] @ getattr(params, f"w_{gate}")
        dh = dz[:, inputs:]

    return grads


def lstm_forward(params: LstmParams, sample: SequenceSample) -> Tuple[float, Dict[str, list]]:
    prob, cache = forward_batch(params, sample.inputs[None])
    return float(prob[0]), cache


def lstm_backward(params: LstmParams, sample: SequenceSample, cache: Dict[str, list]) -> LstmParams:
    return backward_batch(params, cache, np.array([sample.y]))


def global_norm(grads: LstmParams) -> float:
    return float(np.sqrt(sum(np.sum(v * v) for v in grads.blocks().values())))


def clip_gradients(grads: LstmParams, max_norm: float) -> LstmParams:
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return LstmParams(**{k: v * scale for k, v in grads.blocks().items()})


def train_lstm(samples: Sequence[SequenceSample], cfg: TrainConfig) -> LstmModel:
    """
    * minibatch sgd with gradient clipping, deterministic under cfg.seed
    """
    x, y = _stack(samples)
    _check_classes(y)
    rng = np.random.default_rng(cfg.seed)
    params = LstmParams.random(x.shape[2], cfg.hidden_dim, rng)

    trace: List[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            prob, cache = forward_batch(params, x[idx])
            total += batch_loss(prob, y[idx]) * len(idx)
            grads = clip_gradients(backward_batch(params, cache, y[idx]), cfg.clip_norm)
            for name, grad in grads.blocks().items():
                getattr(params, name)[...] -= cfg.learning_rate * grad
        epoch_loss = total / len(y)
        if not np.isfinite(epoch_loss):
            raise NumericFailureError(
                "lstm training loss is not finite", iteration=epoch + 1, last_value=trace[-1] if trace else None
            )
        trace.append(epoch_loss)
        if (epoch + 1) % 25 == 0:
            LOGGER.debug(f"[LSTM] epoch={epoch + 1} loss={epoch_loss:.6f}")

    LOGGER.info(f"[LSTM] trained on {len(y)} samples, loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return LstmModel(params=params, loss_trace=tuple(trace))


def predict_proba(params: LstmParams, samples: Sequence[SequenceSample]) -> np.ndarray:
    x, _ = _stack(samples)
    return forward_batch(params, x)[0]


def to_label(probability_up: float, cutoff: float = 0.5) -> Label:
    # * ties go to Down
    return Label.up if probability_up > cutoff else Label.down


def predict(params: LstmParams, sample: SequenceSample, cutoff: float = 0.5) -> Label:
    return to_label(lstm_forward(params, sample)[0], cutoff)


def logistic_proba(model: LogisticModel, samples: Sequence[SequenceSample]) -> np.ndarray:
    x, _ = _stack(samples)
    flat = x.reshape(len(x), -1)
    if flat.shape[1] != model.weights.shape[0]:
        raise InvalidArgumentError(f"logistic model expects {model.weights.shape[0]} features, got {flat.shape[1]}")
    return np.clip(_sigmoid(flat @ model.weights + model.bias), PROB_EPS, 1.0 - PROB_EPS)


def train_logistic(samples: Sequence[SequenceSample], cfg: TrainConfig) -> LogisticModel:
    """
    * logistic regression on the concatenated L input vectors, zero init
    """
    x, y = _stack(samples)
    _check_classes(y)
    flat = x.reshape(len(x), -1)
    rng = np.random.default_rng(cfg.seed)
    weights = np.zeros(flat.shape[1])
    bias = 0.0

    trace: List[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            prob = np.clip(_sigmoid(flat[idx] @ weights + bias), PROB_EPS, 1.0 - PROB_EPS)
            total += batch_loss(prob, y[idx]) * len(idx)
            residual = (prob - y[idx]) / len(idx)
            g_w = residual @ flat[idx]
            g_b = float(residual.sum())
            norm = float(np.sqrt(g_w @ g_w + g_b * g_b))
            if norm > cfg.clip_norm:
                g_w, g_b = g_w * (cfg.clip_norm / norm), g_b * (cfg.clip_norm / norm)
            weights -= cfg.learning_rate * g_w
            bias -= cfg.learning_rate * g_b
        trace.append(total / len(y))

    LOGGER.info(f"[Logistic] trained on {len(y)} samples, loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return LogisticModel(weights=weights, bias=bias, loss_trace=tuple(trace))


def logistic_baseline(
    samples: Sequence[SequenceSample],
    cfg: TrainConfig,
    eval_samples: Optional[Sequence[SequenceSample]] = None,
) -> Tuple[LogisticModel, List[Label]]:
    """
    * train on samples, predict eval_samples (the training samples by default)
    """
    model = train_logistic(samples, cfg)
    targets = samples if eval_samples is None else eval_samples
    probs = logistic_proba(model, targets)
    return model, [to_label(float(p), cfg.cutoff) for p in probs]


def fit_scaler(samples: Sequence[SequenceSample]) -> FeatureScaler:
    """
    * per-feature mean/std over every time step of the training samples
    """
    x, _ = _stack(samples)
    pooled = x.reshape(-1, x.shape[2])
    std = pooled.std(axis=0)
    std[std == 0.0] = 1.0
    return FeatureScaler(mean=pooled.mean(axis=0), std=std)


def scale_samples(samples: Sequence[SequenceSample], scaler: FeatureScaler) -> List[SequenceSample]:
    return [
        SequenceSample(
            stock_id=s.stock_id,
            target_date=s.target_date,
            input_dates=s.input_dates,
            inputs=(s.inputs - scaler.mean) / scaler.std,
            target=s.target,
        )
        for s in samples
    ]


def save_lstm_checkpoint(path: str, params: LstmParams) -> str:
    blocks = []
    for name, value in params.blocks().items():
        matrix = value if value.ndim == 2 else value.reshape(-1, 1)
        blocks.append(
            WeightBlock(name=name, rows=matrix.shape[0], cols=matrix.shape[1], row_major_values=matrix.ravel().tolist())
        )
    checkpoint = LstmCheckpoint(input_dim=params.input_dim, hidden_dim=params.hidden_dim, blocks=blocks)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(checkpoint.model_dump_json(indent=2))
    return path


def load_lstm_checkpoint(path: str) -> LstmParams:
    with open(path, encoding="utf-8") as f:
        checkpoint = LstmCheckpoint.model_validate(json.load(f))
    template = LstmParams.zeros(checkpoint.input_dim, checkpoint.hidden_dim).blocks()
    loaded = {}
    for block in checkpoint.blocks:
        if block.name not in template:
            raise InvalidArgumentError(f"unknown lstm block {block.name}")
        expected = template[block.name]
        values = np.asarray(block.row_major_values, dtype=np.float64)
        if values.size != expected.size:
            raise InvalidArgumentError(f"block {block.name} holds {values.size} values, expected {expected.size}")
        loaded[block.name] = values.reshape(expected.shape)
    missing = set(template) - set(loaded)
    if missing:
        raise InvalidArgumentError(f"checkpoint lacks blocks {sorted(missing)}")
    return LstmParams(**loaded)
