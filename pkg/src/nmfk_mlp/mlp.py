"""Multilayer perceptron classifier for scan windows, written against numpy.

ReLU hidden layers, softmax output, cross-entropy loss with an L2 penalty
on the weight matrices, mini-batch ADAM with a validation-driven learning
rate schedule and early stopping.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, Divergence, FormatError, ShapeMismatch
from .numerics import make_rng
from .windows import FEATURE_NORMALIZATION, N_CLASSES, N_FEATURES

log = logging.getLogger(__name__)

MODEL_FORMAT = "nmfk-mlp-model"
MODEL_VERSION = 1
HIDDEN = (300, 200, 100)
LOG_CLAMP = 1e-15


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 200
    tolerance: float = 2e-4
    lr_initial: float = 1e-3
    lr_decay_factor: float = 5.0
    patience_decay: int = 2
    patience_stop: int = 10
    max_epochs: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    l2_lambda: float = 0.01
    hidden: tuple[int, ...] = HIDDEN
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.patience_decay < 1 or self.patience_stop < 1 or self.max_epochs < 1:
            raise DataError("batch_size, patience values and max_epochs must be >= 1")


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    l2_lambda: float = 0.01
    feature_normalization_tag: str = FEATURE_NORMALIZATION
    metadata: dict = field(default_factory=dict)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def activations(self) -> list[str]:
        return ["relu"] * (len(self.weights) - 1) + ["softmax"]

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.l2_lambda, self.feature_normalization_tag, dict(self.metadata))


def init_model(layer_dims=(N_FEATURES, *HIDDEN, N_CLASSES), seed=0, l2_lambda=0.01) -> MlpModel:
    """He-uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    rng = make_rng(seed, 11)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, l2_lambda)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_trace(model, x):
    acts = [x]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    logits = acts[-1] @ model.weights[-1] + model.biases[-1]
    return acts, _softmax(logits)


def forward(model: MlpModel, features) -> np.ndarray:
    """Class probabilities for one window ``(21,)`` or a batch ``(N, 21)``."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.layer_dims[0]:
        raise ShapeMismatch(f"expected {model.layer_dims[0]} features, got {x.shape[1]}")
    _, p = _forward_trace(model, x)
    return p[0] if single else p


def predict(model: MlpModel, features) -> np.ndarray:
    return np.argmax(np.atleast_2d(forward(model, features)), axis=1)


def _l2_term(model):
    return sum(float(np.sum(w * w)) for w in model.weights)


def loss(model: MlpModel, features, labels) -> float:
    """Mean cross-entropy plus ``l2_lambda / (2 N)`` times the summed squared weights.

    ``N`` is the number of samples in the batch, so ``l2_lambda`` plays the
    role of the usual ``alpha`` of a per-batch averaged objective.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    if len(y) == 0:
        raise DataError("loss needs a non-empty batch")
    p = forward(model, x)
    ce = -np.mean(np.log(np.maximum(p[np.arange(len(y)), y], LOG_CLAMP)))
    return float(ce + 0.5 * model.l2_lambda / len(y) * _l2_term(model))


def gradient(model: MlpModel, features, labels):
    """Exact gradient of :func:`loss`; returns ``(weight_grads, bias_grads)``.

    Where the log clamp is active the cross-entropy is flat, so those samples
    contribute no gradient.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    n = len(y)
    if n == 0:
        raise DataError("gradient needs a non-empty batch")
    acts, p = _forward_trace(model, x)
    delta = p.copy()
    delta[np.arange(n), y] -= 1.0
    clamped = p[np.arange(n), y] < LOG_CLAMP
    delta[clamped] = 0.0
    delta /= n
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for layer in range(len(model.weights) - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta + (model.l2_lambda / n) * model.weights[layer]
        gb[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0)
    return gw, gb


def accuracy(model: MlpModel, features, labels) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(predict(model, features) == np.asarray(labels)))


class _Adam:
    def __init__(self, params, cfg):
        self.b1, self.b2, self.eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fingerprint(features, labels) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(features, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(labels, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def train(train_x, train_y, cfg: TrainConfig = TrainConfig(), val_x=None, val_y=None,
          init: MlpModel | None = None) -> MlpModel:
    """Mini-batch ADAM on the cross-entropy + L2 objective.

    The tracked accuracy is validation accuracy when a validation set is
    given, otherwise training accuracy. The learning rate is divided by
    ``lr_decay_factor`` after ``patience_decay`` consecutive epochs without an
    improvement larger than ``tolerance``; training stops after
    ``patience_stop`` such epochs or ``max_epochs``. Returns the snapshot with
    the best tracked accuracy.
    """
    x = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=int)
    if len(y) == 0:
        raise DataError("cannot train on an empty set")
    if x.ndim != 2 or (init is not None and x.shape[1] != init.layer_dims[0]):
        raise ShapeMismatch(f"training features have shape {x.shape}")
    missing = sorted(set(range(N_CLASSES)) - set(np.unique(y).tolist()))
    if missing:
        warnings.warn(f"classes absent from training labels: {missing}", stacklevel=2)
    has_val = val_x is not None and len(val_y) > 0
    if has_val:
        val_x = np.asarray(val_x, dtype=np.float64)
        val_y = np.asarray(val_y, dtype=int)

    model = init.copy() if init is not None else init_model((x.shape[1], *cfg.hidden, N_CLASSES), cfg.seed, cfg.l2_lambda)
    model.l2_lambda = cfg.l2_lambda
    params = model.weights + model.biases
    opt = _Adam(params, cfg)
    rng = make_rng(cfg.seed, 12)
    lr = cfg.lr_initial

    best_acc, best, best_epoch = -np.inf, model.copy(), 0
    since_improve = since_decay = 0
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            gw, gb = gradient(model, x[idx], y[idx])
            opt.step(params, gw + gb, lr)
        epoch_loss = loss(model, x, y)
        if not np.isfinite(epoch_loss):
            raise Divergence(f"training loss became non-finite at epoch {epoch}")
        acc = accuracy(model, val_x, val_y) if has_val else accuracy(model, x, y)
        history.append({"epoch": epoch, "loss": epoch_loss, "accuracy": acc, "lr": lr})
        log.debug("epoch %d loss %.5f acc %.4f lr %.2e", epoch, epoch_loss, acc, lr)

        if acc > best_acc + cfg.tolerance:
            since_improve = since_decay = 0
        else:
            since_improve += 1
            since_decay += 1
        if acc > best_acc:
            best_acc, best, best_epoch = acc, model.copy(), epoch
        if since_improve >= cfg.patience_stop:
            break
        if since_decay >= cfg.patience_decay:
            lr /= cfg.lr_decay_factor
            since_decay = 0

    best.metadata = {
        "train_config": _config_dict(cfg),
        "epochs_trained": epoch,
        "best_epoch": best_epoch,
        "best_accuracy": float(best_acc),
        "accuracy_source": "validation" if has_val else "training",
        "n_train": int(len(y)),
        "n_validation": int(len(val_y)) if has_val else 0,
        "corpus_fingerprint": fingerprint(x, y),
        "history": history,
    }
    return best


def _config_dict(cfg):
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_dims": model.layer_dims,
        "activations": model.activations,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "l2_lambda": model.l2_lambda,
        "feature_normalization_tag": model.feature_normalization_tag,
        "metadata": model.metadata,
    }


def dumps_model(model: MlpModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True) + "\n"


def save(model: MlpModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def load(path) -> MlpModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read model file {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path} is not a {MODEL_FORMAT} file")
    if d.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {d.get('version')!r}")
    try:
        weights = [np.array(w, dtype=np.float64) for w in d["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
        model = MlpModel(weights, biases, float(d["l2_lambda"]), str(d["feature_normalization_tag"]),
                         d.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field ({exc})") from exc
    if model.layer_dims != list(d["layer_dims"]) or any(
        w.ndim != 2 or b.shape != (w.shape[1],) for w, b in zip(weights, biases)
    ) or any(a.shape[1] != c.shape[0] for a, c in zip(weights[:-1], weights[1:])):
        raise FormatError(f"{path}: layer shapes do not chain")
    if not all(np.all(np.isfinite(p)) for p in weights + biases):
        raise FormatError(f"{path}: non-finite parameters")
    return model
