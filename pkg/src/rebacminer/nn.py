"""Two-layer network for labeling feature vectors, trained with full-batch
backpropagation under ADADELTA, plus edge-weight feature scoring and
useful-feature selection.

Architecture: ReLU hidden layer (no biases), softmax over two outputs
(deny, permit).  The class-weighted cross-entropy compensates for the
scarcity of permitted pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rebacminer.features import Feature, LabeledFeatureVector
from rebacminer.model import BOOLEAN, OP_IN, AtomicCondition

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 64
    n_tr: int = 10000  # max training iterations
    rho: float = 0.9
    eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size < 1 or self.n_tr < 1:
            raise ValueError("hidden_size and n_tr must be >= 1")


@dataclass
class NetworkWeights:
    w_in: np.ndarray  # (n_features, hidden)
    w_out: np.ndarray  # (hidden, 2)


@dataclass
class TrainResult:
    weights: NetworkWeights
    iterations: int
    accuracy: float  # fraction classified correctly (unclassified counts wrong)
    converged: bool


@dataclass
class FeatureScores:
    s0: np.ndarray  # per-feature deny score
    s1: np.ndarray  # per-feature permit score


def init_weights(n_features: int, cfg: TrainConfig) -> NetworkWeights:
    # uniform in +-1/sqrt(fan_in), from the run seed
    rng = np.random.default_rng(cfg.seed)
    bound_in = 1.0 / math.sqrt(max(n_features, 1))
    bound_out = 1.0 / math.sqrt(cfg.hidden_size)
    w_in = rng.uniform(-bound_in, bound_in, size=(n_features, cfg.hidden_size))
    w_out = rng.uniform(-bound_out, bound_out, size=(cfg.hidden_size, 2))
    return NetworkWeights(w_in, w_out)


def forward(w: NetworkWeights, x: np.ndarray):
    """Hidden activations and output probabilities for input rows ``x``.

    ``x`` may be a single vector or a batch; returns (z, p) of matching rank.
    """
    single = x.ndim == 1
    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if xb.shape[1] != w.w_in.shape[0]:
        raise ValueError(f"input width {xb.shape[1]} != {w.w_in.shape[0]} features")
    z = np.maximum(0.0, xb @ w.w_in)
    b = z @ w.w_out
    b = b - b.max(axis=1, keepdims=True)  # stabilized softmax
    e = np.exp(b)
    p = e / e.sum(axis=1, keepdims=True)
    if single:
        return z[0], p[0]
    return z, p


def classify(p: np.ndarray) -> np.ndarray:
    """1 permit, 0 deny, -1 unclassified (equal probabilities)."""
    p = np.atleast_2d(p)
    out = np.full(p.shape[0], -1, dtype=np.int8)
    out[p[:, 1] > p[:, 0]] = 1
    out[p[:, 0] > p[:, 1]] = 0
    return out


def class_weights(labels: np.ndarray) -> tuple[float, float]:
    n = len(labels)
    n1 = int(np.sum(labels))
    w1 = (n - n1) / n
    return 1.0 - w1, w1


def loss(vectors: list[LabeledFeatureVector], w: NetworkWeights) -> float:
    if not vectors:
        raise ValueError("empty batch")
    x = np.stack([v.bits for v in vectors]).astype(np.float64)
    y = np.array([v.label for v in vectors])
    w0, w1 = class_weights(y)
    _, p = forward(w, x)
    return _loss_from_p(p, y, w0, w1)


def _loss_from_p(p, y, w0, w1) -> float:
    p0 = np.clip(p[:, 0], _LOG_CLAMP, None)
    p1 = np.clip(p[:, 1], _LOG_CLAMP, None)
    return float(np.sum(-w0 * (y == 0) * np.log(p0) - w1 * (y == 1) * np.log(p1)))


def train(vectors: list[LabeledFeatureVector], cfg: TrainConfig) -> TrainResult:
    """Full-batch training until every vector is classified correctly (and
    none unclassified) or ``n_tr`` iterations elapse."""
    if not vectors:
        raise ValueError("no training vectors")
    x = np.stack([v.bits for v in vectors]).astype(np.float64)
    y = np.array([v.label for v in vectors])
    w0, w1 = class_weights(y)
    sample_w = np.where(y == 1, w1, w0)[:, None]
    onehot = np.zeros((len(y), 2))
    onehot[np.arange(len(y)), y] = 1.0

    weights = init_weights(x.shape[1], cfg)
    params = [weights.w_in, weights.w_out]
    acc_grad = [np.zeros_like(p) for p in params]
    acc_upd = [np.zeros_like(p) for p in params]
    rho, eps = cfg.rho, cfg.eps

    iterations = 0
    accuracy = _accuracy(weights, x, y)
    for it in range(1, cfg.n_tr + 1):
        z = np.maximum(0.0, x @ weights.w_in)
        b = z @ weights.w_out
        b = b - b.max(axis=1, keepdims=True)
        e = np.exp(b)
        p = e / e.sum(axis=1, keepdims=True)

        iterations = it
        decisions = classify(p)
        if np.array_equal(decisions, y):
            accuracy = 1.0
            iterations = it - 1
            return TrainResult(weights, iterations, accuracy, True)

        # gradient of the weighted cross-entropy
        dlogits = sample_w * (p - onehot)
        grad_out = z.T @ dlogits
        dz = (dlogits @ weights.w_out.T) * (z > 0)
        grad_in = x.T @ dz
        grads = [grad_in, grad_out]

        if not all(np.isfinite(g).all() for g in grads):
            raise FloatingPointError(f"non-finite gradient at iteration {it}")

        for prm, g, ag, au in zip(params, grads, acc_grad, acc_upd):
            ag *= rho
            ag += (1 - rho) * g * g
            delta = -np.sqrt(au + eps) / np.sqrt(ag + eps) * g
            prm += delta
            au *= rho
            au += (1 - rho) * delta * delta

    accuracy = _accuracy(weights, x, y)
    return TrainResult(weights, iterations, accuracy, accuracy == 1.0)


def _accuracy(w: NetworkWeights, x: np.ndarray, y: np.ndarray) -> float:
    _, p = forward(w, x)
    return float(np.mean(classify(p) == y))


def score_features(w: NetworkWeights) -> FeatureScores:
    """Edge-weight scores: per hidden node, the signed output-weight
    difference; per input, the rectified-weight sum of those."""
    s1_z = w.w_out[:, 1] - w.w_out[:, 0]
    s0_z = -s1_z
    pos = np.maximum(0.0, w.w_in)
    return FeatureScores(s0=pos @ s0_z, s1=pos @ s1_z)


@dataclass
class UsefulFeatureSet:
    features: list[Feature]
    indices: list[int]
    f_u: float


def _complement_condition(cond: AtomicCondition) -> Optional[AtomicCondition]:
    if cond.op == OP_IN and cond.val in (frozenset({True}), frozenset({False})):
        flipped = frozenset({not next(iter(cond.val))})
        return AtomicCondition(cond.path, OP_IN, flipped)
    return None


def select_useful(scores: FeatureScores, features: list[Feature],
                  f_u: float) -> UsefulFeatureSet:
    """Union of the top third by deny score and top two thirds by permit
    score of ceil(f_u * n) features, closed under Boolean complements."""
    if not 0 < f_u <= 1:
        raise ValueError("f_u must be in (0, 1]")
    n = len(features)
    n_uf = math.ceil(f_u * n)
    if n_uf >= n:
        return UsefulFeatureSet(list(features), list(range(n)), f_u)
    n0 = math.ceil(n_uf / 3)
    n1 = math.ceil(2 * n_uf / 3)

    def top(score: np.ndarray, k: int) -> list[int]:
        order = sorted(range(n), key=lambda j: (-score[j], j))
        return order[:k]

    chosen = set(top(scores.s0, n0)) | set(top(scores.s1, n1))

    # close under Boolean complementation
    by_payload = {(f.kind, f.payload): j for j, f in enumerate(features)}
    frontier = list(chosen)
    for j in frontier:
        f = features[j]
        if isinstance(f.payload, AtomicCondition):
            comp = _complement_condition(f.payload)
            if comp is not None:
                cj = by_payload.get((f.kind, comp))
                if cj is not None and cj not in chosen:
                    chosen.add(cj)
    idx = sorted(chosen)
    return UsefulFeatureSet([features[j] for j in idx], idx, f_u)
