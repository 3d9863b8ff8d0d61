"""Batch-subspace evolution by a closed-form gradient-descent recurrence.

For a batch Theta (B×d_c) with target rows T (B×d_c), one inner
gradient-descent step of a linear map toward the targets under MSE is
algebraically identical to

    E(k+1) = (I - eta*C) E(k) + eta*C T,     C = Theta Theta^T / B

with E(0) = Theta. ``evolve_closed_form`` runs that recurrence directly
(no inner parameters); ``evolve_explicit`` keeps the inner linear map and
truly gradient-descends it, serving as the equivalence reference and the
only path supporting MAE/CE inner losses. ``evolve_backward`` is the exact
reverse-mode derivative of the unrolled recurrence, optionally including
the dependence of C on Theta.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigurationError
from .rand import stream


class PcLoss(enum.Enum):
    MSE = "mse"
    MAE = "mae"
    CE = "ce"


@dataclass(frozen=True)
class FixedN:
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ArgumentError("fixed n must be >= 0")


@dataclass(frozen=True)
class AdaptiveN:
    eta0: float = 0.01
    n_b: int = 20
    dis_b: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta0 < 1.0:
            raise ArgumentError("eta0 must lie in (0, 1)")
        if self.n_b < 0:
            raise ArgumentError("n_b must be >= 0")
        if self.dis_b <= 0.0:
            raise ArgumentError("dis_b must be positive")


@dataclass(frozen=True)
class DvaConfig:
    """Hyperparameters of the subspace evolution."""

    eta: float = 0.01
    n_mode: FixedN | AdaptiveN = field(default_factory=AdaptiveN)
    batch_size: int = 256
    pc_loss: PcLoss = PcLoss.MSE
    grad_through_c: bool = True

    def __post_init__(self) -> None:
        if self.eta <= 0.0:
            raise ArgumentError("eta must be positive")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")


@dataclass
class EvolutionCache:
    """Everything the backward pass needs from a forward evolution.

    ``intermediates`` has n+1 stacked states with intermediates[0] = theta;
    ``diverged`` flags eta * lambda_max(mixing) > 2.
    """

    theta: np.ndarray
    targets: np.ndarray
    intermediates: np.ndarray
    mixing: np.ndarray
    eta: float
    diverged: bool
    mixing_from_theta: bool

    @property
    def n(self) -> int:
        return self.intermediates.shape[0] - 1


def mixing_matrix(theta: np.ndarray) -> np.ndarray:
    """Batch Gram matrix C = theta theta^T / B (symmetric PSD)."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.isfinite(theta).all():
        raise ArgumentError("theta must be finite")
    b = theta.shape[0]
    return theta @ theta.T / b


def evolve_closed_form(
    theta: np.ndarray,
    targets: np.ndarray,
    eta: float,
    n: int,
    mixing: np.ndarray | None = None,
) -> tuple[np.ndarray, EvolutionCache]:
    """Run n recurrence steps from E(0) = theta toward the targets.

    Steps are applied sequentially (never as a matrix power) and every
    intermediate state is retained for the backward pass. ``mixing``
    overrides the Gram matrix, which freezes it with respect to theta.
    """
    theta = np.asarray(theta, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if theta.shape != targets.shape:
        raise ArgumentError(
            f"theta {theta.shape} and targets {targets.shape} must match"
        )
    if n < 0:
        raise ArgumentError("n must be >= 0")
    from_theta = mixing is None
    c = mixing_matrix(theta) if from_theta else np.asarray(mixing, dtype=np.float64)
    b = theta.shape[0]
    # trace bounds lambda_max, so the eigensolve only runs when it could trip
    diverged = False
    if eta * np.trace(c) > 2.0:
        diverged = bool(eta * np.linalg.eigvalsh(c)[-1] > 2.0)

    states = np.empty((n + 1,) + theta.shape, dtype=np.float64)
    states[0] = theta
    step = np.eye(b) - eta * c
    pull = eta * (c @ targets)
    for k in range(n):
        np.matmul(step, states[k], out=states[k + 1])
        states[k + 1] += pull
    cache = EvolutionCache(
        theta=theta,
        targets=targets,
        intermediates=states,
        mixing=c,
        eta=eta,
        diverged=diverged,
        mixing_from_theta=from_theta,
    )
    return states[n].copy(), cache


def evolve_backward(
    cache: EvolutionCache, grad_state: np.ndarray, grad_through_c: bool = True
) -> np.ndarray:
    """Gradient of a scalar loss at the final state with respect to theta.

    With grad_through_c the contribution of C(theta) at every step is
    included; without it C is treated as a constant and only the chain
    through the states remains. The result is exact (not approximate)
    reverse-mode differentiation of the unrolled recurrence.
    """
    grad_state = np.asarray(grad_state, dtype=np.float64)
    if grad_state.shape != cache.theta.shape:
        raise ArgumentError("grad_state shape must match the evolved state")
    n = cache.n
    if n == 0:
        return grad_state.copy()
    eta, c = cache.eta, cache.mixing
    through_c = grad_through_c and cache.mixing_from_theta
    step = np.eye(c.shape[0]) - eta * c  # symmetric, its own transpose
    adjoints = np.empty_like(cache.intermediates)
    adjoints[n] = grad_state
    for k in range(n - 1, -1, -1):
        np.matmul(step, adjoints[k + 1], out=adjoints[k])
    grad_theta = adjoints[0].copy()
    if through_c:
        # dL/dC = -eta * sum_k adjoint(k+1) (E(k) - targets)^T, split so the
        # (n, B, d_c) residual stack is never materialized; then
        # C = theta theta^T / B gives dL/dtheta += (dC + dC^T) theta / B
        grad_c = np.tensordot(adjoints[1:], cache.intermediates[:-1], axes=([0, 2], [0, 2]))
        grad_c -= adjoints[1:].sum(axis=0) @ cache.targets.T
        grad_c *= -eta
        grad_theta += (grad_c + grad_c.T) @ cache.theta / cache.theta.shape[0]
    return grad_theta


def evolve_explicit(
    theta: np.ndarray,
    targets: np.ndarray,
    eta: float,
    n: int,
    pc_loss: PcLoss = PcLoss.MSE,
    wg_init_seed: int | None = None,
) -> np.ndarray:
    """Reference path: gradient-descend an explicit inner linear map.

    Starts from the identity map (requires square input/output) unless
    ``wg_init_seed`` asks for a random init, runs n plain gradient steps
    on W minimizing the chosen loss of theta @ W against the targets, and
    returns theta @ W. Under MSE with identity init this reproduces
    ``evolve_closed_form`` to floating-point accuracy.
    """
    theta = np.asarray(theta, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    b, d_in = theta.shape
    d_out = targets.shape[1]
    if targets.shape[0] != b:
        raise ArgumentError("theta and targets must agree on the batch size")
    if wg_init_seed is None:
        if d_in != d_out:
            raise ArgumentError(
                f"identity init requires square shapes, got {d_in} -> {d_out}"
            )
        w = np.eye(d_in)
    else:
        limit = 1.0 / math.sqrt(d_in)
        w = stream(wg_init_seed, "wg").uniform(-limit, limit, size=(d_in, d_out))

    if pc_loss is PcLoss.CE:
        class_idx = _one_hot_classes(targets)

    for _ in range(n):
        output = theta @ w
        if pc_loss is PcLoss.MSE:
            grad_out = (output - targets) / b
        elif pc_loss is PcLoss.MAE:
            grad_out = np.sign(output - targets) / b  # subgradient 0 at 0
        else:
            shifted = output - output.max(axis=1, keepdims=True)
            softmax = np.exp(shifted)
            softmax /= softmax.sum(axis=1, keepdims=True)
            softmax[np.arange(b), class_idx] -= 1.0
            grad_out = softmax / b
        w = w - eta * (theta.T @ grad_out)
    return theta @ w


def _one_hot_classes(targets: np.ndarray) -> np.ndarray:
    """Class index of each target row, defined only for exact one-hot rows."""
    idx = targets.argmax(axis=1)
    expected = np.zeros_like(targets)
    expected[np.arange(targets.shape[0]), idx] = 1.0
    if not np.array_equal(targets, expected):
        raise ConfigurationError(
            "cross-entropy inner loss needs exact one-hot target rows; "
            "other or shifted center schemes leave the class identity undefined"
        )
    return idx


def adaptive_n(dispersion: float, eta0: float = 0.01, n_b: int = 20, dis_b: float = 1.0) -> int:
    """Iteration count equalizing convergence across feature qualities.

    n = max(0, ceil(log_{1-eta0}(dis_b / dispersion)) + n_b). The log term
    is snapped to the nearest integer when within 1e-9 relative, so exact
    powers of the base land on their integer value on every platform.
    """
    if dispersion <= 0.0:
        raise ArgumentError("dispersion must be positive")
    if not 0.0 < eta0 < 1.0:
        raise ArgumentError("eta0 must lie in (0, 1)")
    if dis_b <= 0.0:
        raise ArgumentError("dis_b must be positive")
    term = math.log(dis_b / dispersion) / math.log(1.0 - eta0)
    nearest = round(term)
    if abs(term - nearest) <= 1e-9 * max(1.0, abs(term)):
        term = float(nearest)
    return max(0, math.ceil(term) + n_b)
