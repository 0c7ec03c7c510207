"""Minimal dense network with explicit forward/backward passes.

The network is a stack of ReLU hidden layers followed by a linear
classification head. The head grows as new classes arrive; everything
before the head doubles as the feature extractor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DenseLayer:
    w: np.ndarray  # (in_dim, out_dim)
    b: np.ndarray  # (out_dim,)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.w.copy(), self.b.copy())


@dataclass
class Model:
    hidden: list[DenseLayer]
    head: DenseLayer
    seeds: list[int] = field(default_factory=list)

    @property
    def in_dim(self) -> int:
        first = self.hidden[0] if self.hidden else self.head
        return first.w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.head.w.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.head.w.shape[0]

    def layers(self) -> list[DenseLayer]:
        return self.hidden + [self.head]

    def n_params(self) -> int:
        return sum(l.w.size + l.b.size for l in self.layers())

    def copy(self) -> "Model":
        return Model([l.copy() for l in self.hidden], self.head.copy(),
                     list(self.seeds))


@dataclass
class LossConfig:
    temperature: float = 2.0
    alpha_override: float | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.alpha_override is not None and not 0.0 <= self.alpha_override <= 1.0:
            raise ValueError("alpha_override must lie in [0, 1]")

    def alpha(self, m: int, n: int) -> float:
        if self.alpha_override is not None:
            return self.alpha_override
        return m / (m + n)


@dataclass
class GradientSet:
    hidden: list[DenseLayer]
    head: DenseLayer


def _uniform_init(rng: np.random.Generator, in_dim: int, out_dim: int) -> DenseLayer:
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(in_dim, out_dim))
    b = rng.uniform(-bound, bound, size=out_dim)
    return DenseLayer(w, b)


def init_model(in_dim: int, hidden_width: int, n_hidden: int, out_dim: int,
               seed: int) -> Model:
    """Create a seeded MLP: in_dim -> hidden_width x n_hidden -> out_dim."""
    rng = np.random.default_rng(seed)
    hidden = []
    d = in_dim
    for _ in range(n_hidden):
        hidden.append(_uniform_init(rng, d, hidden_width))
        d = hidden_width
    head = _uniform_init(rng, d, out_dim)
    return Model(hidden, head, seeds=[seed])


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def extract_features(model: Model, x: np.ndarray) -> np.ndarray:
    """Activations feeding the head; the model minus its final layer."""
    xb, single = _as_batch(x)
    if xb.shape[1] != model.in_dim:
        raise ValueError(
            f"input dim {xb.shape[1]} does not match model dim {model.in_dim}")
    a = xb
    for layer in model.hidden:
        a = np.maximum(a @ layer.w + layer.b, 0.0)
    return a[0] if single else a


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    feats = extract_features(model, x)
    return feats @ model.head.w + model.head.b


def softened_probs(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Temperature-softened softmax, numerically stabilised."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=float) / temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def distillation_loss(student_logits: np.ndarray, teacher_logits: np.ndarray,
                      temperature: float, m: int) -> float:
    """Cross-entropy between softened teacher and student over old classes."""
    if m < 1:
        raise ValueError("need at least one old class")
    s = np.asarray(student_logits, dtype=float)
    t = np.asarray(teacher_logits, dtype=float)
    if s.shape[-1] < m or t.shape[-1] < m:
        raise ValueError("logit vectors shorter than m")
    p = softened_probs(s[..., :m], temperature)
    p_hat = softened_probs(t[..., :m], temperature)
    return float(-np.sum(p_hat * np.log(p)))


def cross_entropy_pseudo(logits: np.ndarray, pseudo_label: int) -> float:
    logits = np.asarray(logits, dtype=float)
    if not 0 <= pseudo_label < logits.shape[-1]:
        raise ValueError(f"label {pseudo_label} out of range")
    z = logits - np.max(logits)
    log_probs = z - np.log(np.sum(np.exp(z)))
    return float(-log_probs[pseudo_label])


def cross_distillation_loss(student_logits: np.ndarray,
                            teacher_logits: np.ndarray, pseudo_label: int,
                            cfg: LossConfig, m: int, n: int) -> float:
    """Convex combination of distillation and pseudo-label cross-entropy."""
    alpha = cfg.alpha(m, n)
    l_c = cross_entropy_pseudo(student_logits, pseudo_label)
    if alpha == 0.0:
        return l_c
    l_d = distillation_loss(student_logits, teacher_logits, cfg.temperature, m)
    return alpha * l_d + (1.0 - alpha) * l_c


def _forward_cached(model: Model, x: np.ndarray):
    acts = [x]  # pre-head activations, acts[i] feeds layer i
    a = x
    for layer in model.hidden:
        a = np.maximum(a @ layer.w + layer.b, 0.0)
        acts.append(a)
    logits = a @ model.head.w + model.head.b
    return acts, logits


def backward(model: Model, x: np.ndarray, teacher_logits: np.ndarray | None,
             pseudo_labels: np.ndarray, cfg: LossConfig, m: int,
             n: int) -> tuple[float, GradientSet]:
    """Mean cross-distillation loss over a batch and its analytic gradients.

    With m == 0 (first task) the distillation term vanishes and
    teacher_logits may be None.
    """
    x, _ = _as_batch(x)
    batch = x.shape[0]
    if batch == 0:
        raise ValueError("empty batch")
    y = np.asarray(pseudo_labels, dtype=int)
    if y.shape != (batch,):
        raise ValueError("pseudo label count does not match batch")
    out_dim = model.out_dim
    if np.any(y < 0) or np.any(y >= out_dim):
        raise ValueError("pseudo label out of range")
    alpha = cfg.alpha(m, n) if (m + n) > 0 else 0.0
    temperature = cfg.temperature

    acts, logits = _forward_cached(model, x)

    # cross-entropy term over all logits at T=1
    z = logits - np.max(logits, axis=1, keepdims=True)
    log_probs = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    probs = np.exp(log_probs)
    l_c = -log_probs[np.arange(batch), y]
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(batch), y] = 1.0
    d_logits = (1.0 - alpha) * (probs - one_hot) / batch

    l_d = np.zeros(batch)
    if alpha > 0.0:
        if teacher_logits is None:
            raise ValueError("teacher logits required when alpha > 0")
        t = np.asarray(teacher_logits, dtype=float)
        if t.ndim == 1:
            t = t[None, :]
        if t.shape[0] != batch or t.shape[1] < m:
            raise ValueError("teacher logits shape mismatch")
        p = softened_probs(logits[:, :m], temperature)
        p_hat = softened_probs(t[:, :m], temperature)
        l_d = -np.sum(p_hat * np.log(p), axis=1)
        d_logits[:, :m] += alpha * (p - p_hat) / (temperature * batch)

    loss = float(np.mean(alpha * l_d + (1.0 - alpha) * l_c))

    # backprop through hidden stack
    grads_hidden: list[DenseLayer] = [None] * len(model.hidden)  # type: ignore
    g_head = DenseLayer(acts[-1].T @ d_logits, d_logits.sum(axis=0))
    delta = d_logits @ model.head.w.T
    for i in range(len(model.hidden) - 1, -1, -1):
        delta = delta * (acts[i + 1] > 0)
        grads_hidden[i] = DenseLayer(acts[i].T @ delta, delta.sum(axis=0))
        delta = delta @ model.hidden[i].w.T
    return loss, GradientSet(grads_hidden, g_head)


def sgd_step(model: Model, grads: GradientSet, lr: float,
             weight_decay: float = 0.0) -> Model:
    """w <- w - lr * (g + weight_decay * w), returning a new model."""
    if len(grads.hidden) != len(model.hidden):
        raise ValueError("gradient structure does not match model")

    def upd(layer: DenseLayer, g: DenseLayer) -> DenseLayer:
        if layer.w.shape != g.w.shape or layer.b.shape != g.b.shape:
            raise ValueError("gradient shape mismatch")
        return DenseLayer(layer.w - lr * (g.w + weight_decay * layer.w),
                          layer.b - lr * (g.b + weight_decay * layer.b))

    hidden = [upd(l, g) for l, g in zip(model.hidden, grads.hidden)]
    return Model(hidden, upd(model.head, grads.head), list(model.seeds))


def expand_head(model: Model, n_new: int, seed: int) -> Model:
    """Grow the head by n_new classes; old logits are preserved exactly."""
    if n_new < 1:
        raise ValueError("n_new must be >= 1")
    rng = np.random.default_rng(seed)
    fan_in = model.feature_dim
    bound = 1.0 / np.sqrt(fan_in)
    new_w = rng.uniform(-bound, bound, size=(fan_in, n_new))
    new_b = rng.uniform(-bound, bound, size=n_new)
    head = DenseLayer(np.hstack([model.head.w, new_w]),
                      np.concatenate([model.head.b, new_b]))
    return Model([l.copy() for l in model.hidden], head,
                 list(model.seeds) + [seed])


def weight_align(model: Model, m: int, n: int) -> Model:
    """Scale new-class head weights so mean norms of old and new rows match."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    if model.out_dim != m + n:
        raise ValueError("head size does not equal m + n")
    norms = np.linalg.norm(model.head.w, axis=0)
    mean_new = float(np.mean(norms[m:]))
    if mean_new == 0.0:
        raise ValueError("all-zero new-class weights; cannot align")
    gamma = float(np.mean(norms[:m])) / mean_new
    out = model.copy()
    out.head.w[:, m:] *= gamma
    return out
