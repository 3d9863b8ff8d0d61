"""End-to-end transferability scoring: latent map, head, and training loop.

A linear latent map f projects the raw features into the target space,
the batch is evolved toward its pseudo-cluster targets by the closed-form
recurrence, and a linear head h classifies the evolved state. f and h are
trained jointly with AdamW on softmax cross-entropy; the reported score is
the best evaluation-set accuracy seen at the periodic checkpoints.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from . import dva
from .dva import DvaConfig, FixedN, AdaptiveN, EvolutionCache
from .embedstore import EmbeddingSet, feature_stats
from .errors import ArgumentError, NumericError
from .pseudocluster import PseudoClusters, targets_for
from .rand import stream

log = logging.getLogger("itm.trainer")

_BETA1, _BETA2, _EPS = 0.9, 0.999, 1e-8
_PARAM_NAMES = ("w_z", "b_z", "w_h", "b_h")


class EvalMode(enum.Enum):
    EVOLVED_WITH_LABELS = "evolved"
    STATIC_LOGITS = "static"


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    eval_every: int = 100
    lr: float = 5e-3
    weight_decay: float = 0.01
    dva: DvaConfig = field(default_factory=DvaConfig)
    seed: int = 0
    eval_mode: EvalMode = EvalMode.EVOLVED_WITH_LABELS
    bias: bool = True
    standardize: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ArgumentError("iterations must be >= 1")
        if not 1 <= self.eval_every:
            raise ArgumentError("eval_every must be >= 1")
        if self.lr <= 0.0:
            raise ArgumentError("lr must be positive")
        if self.weight_decay < 0.0:
            raise ArgumentError("weight_decay must be >= 0")


@dataclass
class ItmModelState:
    """Learnable parameters and their AdamW moments."""

    w_z: np.ndarray
    b_z: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step_count: int = 0

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}


@dataclass(frozen=True)
class HistoryPoint:
    iteration: int
    score: float
    train_loss: float


@dataclass(frozen=True)
class ScoreReport:
    name: str
    best_score: float
    history: tuple[HistoryPoint, ...]
    n_used: int
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "best_score": self.best_score,
            "n_used": self.n_used,
            "history": [
                {"iter": h.iteration, "score": h.score, "loss": h.train_loss}
                for h in self.history
            ],
            "config": self.config,
        }


def init_state(d: int, d_c: int, num_classes: int, seed: int) -> ItmModelState:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases/moments."""
    if min(d, d_c, num_classes) < 1:
        raise ArgumentError("dimensions must be >= 1")
    rng = stream(seed, "init")
    lim_z = 1.0 / math.sqrt(d)
    lim_h = 1.0 / math.sqrt(d_c)
    params = {
        "w_z": rng.uniform(-lim_z, lim_z, size=(d, d_c)),
        "b_z": np.zeros(d_c),
        "w_h": rng.uniform(-lim_h, lim_h, size=(d_c, num_classes)),
        "b_h": np.zeros(num_classes),
    }
    return ItmModelState(
        **params,
        adam_m={k: np.zeros_like(v) for k, v in params.items()},
        adam_v={k: np.zeros_like(v) for k, v in params.items()},
    )


@dataclass
class ForwardCache:
    features: np.ndarray
    labels: np.ndarray
    evolution: EvolutionCache
    state_n: np.ndarray
    softmax: np.ndarray


def forward_batch(
    state: ItmModelState,
    batch_features: np.ndarray,
    batch_labels: np.ndarray,
    centers: PseudoClusters,
    cfg: TrainConfig,
    n: int,
    mixing: np.ndarray | None = None,
) -> tuple[np.ndarray, float, ForwardCache]:
    """Latent projection, n-step evolution, head logits, and mean CE loss.

    ``n`` is the resolved iteration count (adaptive n is frozen on the
    training split by the caller). ``mixing`` optionally pins the Gram
    matrix, which is what the stop-gradient mode differentiates.
    """
    x = np.asarray(batch_features, dtype=np.float64)
    y = np.asarray(batch_labels)
    theta = x @ state.w_z
    if cfg.bias:
        theta = theta + state.b_z
    targets = targets_for(centers, y)
    state_n, evo = dva.evolve_closed_form(theta, targets, cfg.dva.eta, n, mixing=mixing)
    logits = state_n @ state.w_h + state.b_h
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)
    b = x.shape[0]
    nll = -shifted[np.arange(b), y] + np.log(exp.sum(axis=1))
    loss = float(nll.mean())
    if not np.isfinite(loss):
        bound = float(np.linalg.eigvalsh(evo.mixing)[-1]) if evo.mixing.size else 0.0
        raise NumericError(
            f"non-finite loss (eta={cfg.dva.eta}, n={n}, "
            f"eta*lambda_max={cfg.dva.eta * bound:.3g}, diverged={evo.diverged})"
        )
    cache = ForwardCache(features=x, labels=y, evolution=evo, state_n=state_n, softmax=softmax)
    return logits, loss, cache


def backward_batch(
    state: ItmModelState, cache: ForwardCache, cfg: TrainConfig
) -> dict[str, np.ndarray]:
    """Exact gradients of the batch loss for every learnable parameter."""
    b = cache.features.shape[0]
    dlogits = cache.softmax.copy()
    dlogits[np.arange(b), cache.labels] -= 1.0
    dlogits /= b
    grads = {
        "w_h": cache.state_n.T @ dlogits,
        "b_h": dlogits.sum(axis=0),
    }
    dstate = dlogits @ state.w_h.T
    dtheta = dva.evolve_backward(cache.evolution, dstate, cfg.dva.grad_through_c)
    grads["w_z"] = cache.features.T @ dtheta
    grads["b_z"] = dtheta.sum(axis=0) if cfg.bias else np.zeros_like(state.b_z)
    return grads


def adamw_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float = _BETA1,
    beta2: float = _BETA2,
    eps: float = _EPS,
    weight_decay: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One decoupled-weight-decay Adam update; returns (param, m, v)."""
    if param.shape != grad.shape:
        raise ArgumentError("param and grad shapes must match")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * weight_decay * param
    return param, m, v


def _batch_indices(n: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Shuffled batches, reshuffled each epoch; the last batch may be short."""
    rng = stream(seed, "batches")
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def resolve_n(cfg: TrainConfig, train: EmbeddingSet) -> int:
    """Iteration count for the recurrence, frozen on the training split."""
    mode = cfg.dva.n_mode
    if isinstance(mode, FixedN):
        return mode.n
    dispersion = feature_stats(train).dispersion
    if dispersion <= 0.0:
        return 0  # perfectly collapsed classes: the formula's limit
    return dva.adaptive_n(dispersion, mode.eta0, mode.n_b, mode.dis_b)


def evaluate_score(
    state: ItmModelState,
    eval_set: EmbeddingSet,
    centers: PseudoClusters,
    cfg: TrainConfig,
    n: int,
) -> float:
    """Fraction of evaluation samples classified correctly.

    EVOLVED_WITH_LABELS runs the training forward unchanged, so each eval
    batch is evolved toward the targets its own labels select; STATIC_LOGITS
    skips evolution (n = 0) and scores the plain head-on-latent logits.
    Batches are consecutive slices in stored order. Argmax ties resolve to
    the lowest class index.
    """
    n_eff = n if cfg.eval_mode is EvalMode.EVOLVED_WITH_LABELS else 0
    correct = 0
    total = eval_set.num_samples
    bs = cfg.dva.batch_size
    for start in range(0, total, bs):
        stop = min(start + bs, total)
        x = eval_set.features[start:stop]
        y = eval_set.labels[start:stop]
        logits, _, _ = forward_batch(state, x, y, centers, cfg, n_eff)
        correct += int((logits.argmax(axis=1) == y).sum())
    return correct / total


def train_itm(
    train: EmbeddingSet,
    eval_set: EmbeddingSet,
    centers: PseudoClusters,
    cfg: TrainConfig,
) -> ScoreReport:
    """Train the latent map and head, checkpoint scores, return the best.

    Evaluation runs after every ``eval_every`` iterations and once more at
    the end when the total is not a multiple. Deterministic per seed.
    """
    if train.dim != eval_set.dim or train.num_classes != eval_set.num_classes:
        raise ArgumentError("train and eval sets must share (d, C)")
    n = resolve_n(cfg, train)
    state = init_state(train.dim, centers.dim, train.num_classes, cfg.seed)
    batches = _batch_indices(train.num_samples, cfg.dva.batch_size, cfg.seed)
    history: list[HistoryPoint] = []
    loss = math.nan
    for iteration in range(1, cfg.iterations + 1):
        idx = next(batches)
        try:
            _, loss, cache = forward_batch(
                state, train.features[idx], train.labels[idx], centers, cfg, n
            )
        except NumericError as exc:
            raise NumericError(f"iteration {iteration}: {exc}") from exc
        grads = backward_batch(state, cache, cfg)
        state.step_count += 1
        for name, grad in grads.items():
            decay = cfg.weight_decay if name.startswith("w_") else 0.0
            param, m, v = adamw_step(
                getattr(state, name),
                grad,
                state.adam_m[name],
                state.adam_v[name],
                state.step_count,
                cfg.lr,
                weight_decay=decay,
            )
            setattr(state, name, param)
            state.adam_m[name] = m
            state.adam_v[name] = v
        if iteration % cfg.eval_every == 0 or iteration == cfg.iterations:
            score = evaluate_score(state, eval_set, centers, cfg, n)
            history.append(HistoryPoint(iteration=iteration, score=score, train_loss=loss))
            log.debug("%s iter %d: score=%.4f loss=%.4f", train.name, iteration, score, loss)
    best = max(point.score for point in history)
    config = asdict(cfg)
    config["eval_mode"] = cfg.eval_mode.value
    config["dva"]["pc_loss"] = cfg.dva.pc_loss.value
    config["dva"]["n_mode"] = _describe_n_mode(cfg.dva.n_mode)
    log.info(
        "%s: best score %.4f with n=%d (eval mode: %s)",
        train.name, best, n, cfg.eval_mode.value,
    )
    return ScoreReport(
        name=train.name.split("[")[0],
        best_score=best,
        history=tuple(history),
        n_used=n,
        config=config,
    )


def _describe_n_mode(mode: FixedN | AdaptiveN) -> dict:
    if isinstance(mode, FixedN):
        return {"kind": "fixed", "n": mode.n}
    return {"kind": "adaptive", "eta0": mode.eta0, "n_b": mode.n_b, "dis_b": mode.dis_b}
