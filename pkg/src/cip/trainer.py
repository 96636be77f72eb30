"""Desk-scale classifier training and risk/accuracy evaluation.

Momentum SGD on a cross-entropy surrogate with weight decay and a step
learning-rate schedule; reports use the 0-1 risk and its conjugate
accuracy. The default schedule keeps the published recipe's shape
(200 epochs, lr 0.1, momentum 0.9, weight decay 5e-4, x0.2 every 50,
batch 128) transplanted to the toy models.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, InvariantError

MODEL_LINEAR = "linear-softmax"
MODEL_MLP = "mlp-1-hidden"

# Published full-scale recipes, shipped for documentation only; nothing at
# desk scale executes these.
FULL_SCALE_PRESETS = {
    "resnet50-small-datasets": {
        "optimizer": "sgd", "epochs": 200, "lr": 0.1, "momentum": 0.9,
        "weight_decay": 5e-4, "lr_decay_factor": 0.2, "lr_decay_every": 50,
        "batch_size": 128, "augmentation": ["crop", "flip"],
    },
    "resnet50-imagenet1k": {
        "optimizer": "lamb", "epochs": 300, "warmup_epochs": 5, "lr": 0.005,
        "weight_decay": 0.01, "schedule": "cosine", "batch_size": 2048,
        "loss": "bce", "label_smoothing": 0.1,
        "augmentation": ["randaugment", "mixup:0.2", "cutmix:1.0"],
    },
    "vit-b16-imagenet1k": {
        "optimizer": "lamb", "epochs": 300, "warmup_epochs": 5, "lr": 0.003,
        "weight_decay": 0.02, "schedule": "cosine", "batch_size": 2048,
        "loss": "bce", "label_smoothing": 0.0,
        "augmentation": ["randaugment", "mixup:0.8", "cutmix:1.0", "colorjitter:0.3"],
    },
}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay_factor: float = 0.2
    lr_decay_every: int = 50
    batch_size: int = 128
    model: str = MODEL_LINEAR
    hidden: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError("lr_decay_factor must be in (0, 1]")
        if self.lr_decay_every < 1:
            raise ConfigError("lr_decay_every must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.model not in (MODEL_LINEAR, MODEL_MLP):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.model == MODEL_MLP and self.hidden < 1:
            raise ConfigError("mlp model needs hidden width >= 1")


@dataclass
class Classifier:
    kind: str
    d: int
    k: int
    hidden: int
    params: dict[str, np.ndarray]
    train_seed: int
    epoch_losses: list[float] = field(default_factory=list, repr=False)

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == MODEL_LINEAR:
            return X @ self.params["W"].T + self.params["b"]
        H = np.tanh(X @ self.params["W1"].T + self.params["b1"])
        return H @ self.params["W2"].T + self.params["b2"]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.logits(X).argmax(axis=1)


@dataclass(frozen=True)
class RiskReport:
    risk: float
    n_eval: int
    std_error: float
    eval_kind: str

    @property
    def accuracy(self) -> float:
        return 1.0 - self.risk

    def to_dict(self) -> dict:
        return {
            "risk": self.risk,
            "accuracy": self.accuracy,
            "n_eval": self.n_eval,
            "std_error": self.std_error,
            "eval_kind": self.eval_kind,
        }


def _init_params(config: TrainConfig, d: int, k: int,
                 rng: np.random.Generator) -> dict[str, np.ndarray]:
    if config.model == MODEL_LINEAR:
        return {
            "W": rng.standard_normal((k, d)) / np.sqrt(d),
            "b": np.zeros(k),
        }
    h = config.hidden
    return {
        "W1": rng.standard_normal((h, d)) / np.sqrt(d),
        "b1": np.zeros(h),
        "W2": rng.standard_normal((k, h)) / np.sqrt(h),
        "b2": np.zeros(k),
    }


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(params: dict[str, np.ndarray], kind: str, X: np.ndarray,
                   y: np.ndarray, weight_decay: float
                   ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy plus (wd/2)*||theta||^2, with analytic gradients."""
    n = len(X)
    if kind == MODEL_LINEAR:
        logits = X @ params["W"].T + params["b"]
    else:
        A1 = X @ params["W1"].T + params["b1"]
        H = np.tanh(A1)
        logits = H @ params["W2"].T + params["b2"]
    lse = logits.max(axis=1)
    lse = lse + np.log(np.exp(logits - lse[:, None]).sum(axis=1))
    ce = float(np.mean(lse - logits[np.arange(n), y]))
    reg = 0.5 * weight_decay * sum(float(np.sum(p * p)) for p in params.values())
    loss = ce + reg

    P = _softmax(logits)
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    grads: dict[str, np.ndarray] = {}
    if kind == MODEL_LINEAR:
        grads["W"] = G.T @ X + weight_decay * params["W"]
        grads["b"] = G.sum(axis=0) + weight_decay * params["b"]
    else:
        grads["W2"] = G.T @ H + weight_decay * params["W2"]
        grads["b2"] = G.sum(axis=0) + weight_decay * params["b2"]
        dH = (G @ params["W2"]) * (1.0 - H * H)
        grads["W1"] = dH.T @ X + weight_decay * params["W1"]
        grads["b1"] = dH.sum(axis=0) + weight_decay * params["b1"]
    return loss, grads


def _coerce_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 2:
        X, y = samples
    else:
        X = np.stack([np.asarray(x, dtype=float) for x, _ in samples])
        y = np.array([int(label) for _, label in samples])
    return np.asarray(X, dtype=float), np.asarray(y, dtype=int)


def train(samples, config: TrainConfig, seed: int,
          k: int | None = None) -> Classifier:
    """Fit a classifier; deterministic given (sample order, config, seed).

    When k is inferred from the labels, every class 0..k-1 must be
    present; an explicit k tolerates empty classes (synthetic draws may
    legitimately miss one).
    """
    X, y = _coerce_samples(samples)
    if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
        raise InvariantError("need a non-empty (m, d) sample matrix with labels")
    inferred = int(y.max()) + 1 if len(y) else 0
    if k is None:
        k = inferred
        present = np.unique(y)
        if len(present) != k:
            missing = sorted(set(range(k)) - set(present.tolist()))
            raise InvariantError(f"missing training classes: {missing}")
    elif inferred > k:
        raise InvariantError(f"labels exceed k={k}")
    d = X.shape[1]

    rng = np.random.default_rng(seed)
    params = _init_params(config, d, k, rng)
    velocity = {name: np.zeros_like(p) for name, p in params.items()}
    m = len(X)
    losses: list[float] = []

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            lr = config.lr * config.lr_decay_factor ** (epoch // config.lr_decay_every)
            perm = rng.permutation(m)
            for start in range(0, m, config.batch_size):
                idx = perm[start:start + config.batch_size]
                _, grads = loss_and_grads(params, config.model, X[idx], y[idx],
                                          config.weight_decay)
                for name in params:
                    velocity[name] = config.momentum * velocity[name] + grads[name]
                    params[name] = params[name] - lr * velocity[name]
            loss, _ = loss_and_grads(params, config.model, X, y, config.weight_decay)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            losses.append(loss)

    return Classifier(config.model, d, k, config.hidden, params, seed, losses)


def eval_on_set(classifier: Classifier, eval_samples) -> RiskReport:
    """Exact empirical 0-1 risk on a labeled set."""
    X, y = _coerce_samples(eval_samples)
    if len(X) == 0:
        raise InvariantError("evaluation set must be non-empty")
    risk = float(np.mean(classifier.predict(X) != y))
    acc = 1.0 - risk
    se = float(np.sqrt(acc * (1.0 - acc) / len(X)))
    return RiskReport(risk, len(X), se, "empirical-set")


def _risk_report(classifier: Classifier, X: np.ndarray, y: np.ndarray) -> RiskReport:
    risk = float(np.mean(classifier.predict(X) != y))
    acc = 1.0 - risk
    se = float(np.sqrt(max(acc * (1.0 - acc), 0.0) / len(X)))
    return RiskReport(risk, len(X), se, "monte-carlo-world")


def eval_on_world(classifier: Classifier, world, n_mc: int, seed: int,
                  labeler: str = "joint") -> RiskReport:
    """Monte-Carlo expected risk against the real distribution.

    labeler "joint" draws (x, y) from the real generative process, giving
    the expected 0-1 risk (whose floor is the world's Bayes risk); labeler
    "bayes-argmax" relabels features with the Bayes-argmax rule, the
    shared deterministic labeling bound checks assume (the Bayes rule
    itself then scores risk 0).
    """
    from .synthworld import bayes_argmax, class_conditional, true_mixture

    if n_mc < 1:
        raise ConfigError("n_mc must be >= 1")
    rng = np.random.default_rng(seed)
    if labeler == "joint":
        y = rng.integers(world.k, size=n_mc)
        X = np.empty((n_mc, world.d))
        for c in range(world.k):
            idx = np.flatnonzero(y == c)
            if len(idx):
                X[idx] = class_conditional(world, c).sample(len(idx), rng)
    elif labeler == "bayes-argmax":
        X = true_mixture(world).sample(n_mc, rng)
        y = bayes_argmax(world, X)
    else:
        raise ConfigError(f"unknown labeler {labeler!r}")
    return _risk_report(classifier, X, y)


def eval_on_mixture(classifier: Classifier, mixture, world, n_mc: int,
                    seed: int, labeler: str = "bayes-argmax") -> RiskReport:
    """Expected risk over an arbitrary feature mixture (e.g. the induced
    distribution). Labels come from the world's Bayes posterior: argmax
    for the deterministic shared labeler, or "bayes-sample" to draw
    y ~ P(y|x)."""
    from .synthworld import bayes_argmax, bayes_posterior

    rng = np.random.default_rng(seed)
    X = mixture.sample(n_mc, rng)
    if labeler == "bayes-argmax":
        y = bayes_argmax(world, X)
    elif labeler == "bayes-sample":
        post = np.atleast_2d(bayes_posterior(world, X))
        u = rng.random(n_mc)
        y = (post.cumsum(axis=1) < u[:, None]).sum(axis=1)
    else:
        raise ConfigError(f"unknown labeler {labeler!r}")
    return _risk_report(classifier, X, y)


# ---------------------------------------------------------------------------
# checkpoints: versioned text, shape header + shortest-repr decimals

_CKPT_MAGIC = "cip-classifier-v1"


def save_classifier(classifier: Classifier, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        _CKPT_MAGIC,
        f"kind={classifier.kind} d={classifier.d} k={classifier.k} "
        f"h={classifier.hidden} train_seed={classifier.train_seed}",
    ]
    for name in sorted(classifier.params):
        p = classifier.params[name]
        shape = " ".join(str(s) for s in p.shape)
        lines.append(f"param {name} {shape}")
        flat = p.reshape(-1)
        lines.append(" ".join(repr(float(v)) for v in flat))
    lines.append("end")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def load_classifier(path: str | Path) -> Classifier:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _CKPT_MAGIC:
        raise InvariantError(f"not a classifier checkpoint: {path}")
    header = dict(kv.split("=") for kv in lines[1].split())
    params: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines) and lines[i] != "end":
        tag, name, *shape = lines[i].split()
        if tag != "param":
            raise InvariantError(f"bad checkpoint line: {lines[i][:40]!r}")
        values = np.array([float(v) for v in lines[i + 1].split()])
        params[name] = values.reshape(tuple(int(s) for s in shape))
        i += 2
    return Classifier(header["kind"], int(header["d"]), int(header["k"]),
                      int(header["h"]), params, int(header["train_seed"]))
