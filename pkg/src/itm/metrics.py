"""Rank-correlation metrics, the subset-stability protocol, and latent-map
similarity analysis.

Ranks are assigned descending (rank 1 = highest value) with ties averaged,
so the weighted coefficient emphasizes agreement among the top-ranked
models. Degenerate inputs (a constant vector, hence no ordering signal)
return 0 and emit :class:`DegenerateRankingWarning` rather than raising.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError
from .rand import stream
from .trainer import ItmModelState


class DegenerateRankingWarning(UserWarning):
    """A correlation was requested on a vector with no rank variation."""


@dataclass(frozen=True)
class RankResult:
    """Predicted-vs-true scores for a model collection plus correlations."""

    model_names: tuple[str, ...]
    truth: np.ndarray
    predicted: np.ndarray
    tau_w: float
    tau: float
    rho: float

    @classmethod
    def compute(
        cls, model_names: Sequence[str], truth: np.ndarray, predicted: np.ndarray
    ) -> "RankResult":
        truth = np.asarray(truth, dtype=np.float64)
        predicted = np.asarray(predicted, dtype=np.float64)
        if len(model_names) != truth.size or truth.size != predicted.size:
            raise ArgumentError("names, truth, and predicted must align")
        if truth.size < 2:
            raise ArgumentError("correlation needs at least 2 models")
        if not (np.isfinite(truth).all() and np.isfinite(predicted).all()):
            raise ArgumentError("scores must be finite")
        return cls(
            model_names=tuple(model_names),
            truth=truth,
            predicted=predicted,
            tau_w=weighted_kendall_tau(truth, predicted),
            tau=kendall_tau(truth, predicted),
            rho=spearman_rho(truth, predicted),
        )

    def to_json_dict(self) -> dict:
        return {
            "models": [
                {"name": n, "ground_truth": t, "score": p}
                for n, t, p in zip(self.model_names, self.truth, self.predicted)
            ],
            "tau_w": self.tau_w,
            "tau": self.tau,
            "rho": self.rho,
        }


def ranks_descending(values: np.ndarray) -> np.ndarray:
    """Average ranks with 1 assigned to the highest value."""
    return rankdata(-np.asarray(values, dtype=np.float64), method="average")


def _check_pair(truth: np.ndarray, predicted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise ArgumentError("truth and predicted must be equal-length vectors")
    if truth.size < 2:
        raise ArgumentError("need at least 2 entries")
    return truth, predicted


def _warn_if_degenerate(truth: np.ndarray, predicted: np.ndarray) -> bool:
    degenerate = bool(np.all(truth == truth[0]) or np.all(predicted == predicted[0]))
    if degenerate:
        warnings.warn(
            "constant score vector: rank correlation is undefined, returning 0",
            DegenerateRankingWarning,
            stacklevel=3,
        )
    return degenerate


def weighted_kendall_tau(truth: np.ndarray, predicted: np.ndarray) -> float:
    """Pairwise rank agreement weighted by 1/(G_i + G_j).

    G and P are descending average ranks of the true and predicted scores;
    each pair i<j contributes weight/(G_i+G_j) times the sign of
    (G_i-G_j)(P_i-P_j), normalized by the total weight. Tied pairs
    contribute sign 0.
    """
    truth, predicted = _check_pair(truth, predicted)
    if _warn_if_degenerate(truth, predicted):
        return 0.0
    g = ranks_descending(truth)
    p = ranks_descending(predicted)
    numer = 0.0
    denom = 0.0
    m = truth.size
    for i in range(m):
        for j in range(i + 1, m):
            w = 1.0 / (g[i] + g[j])
            denom += w
            numer += w * np.sign((g[i] - g[j]) * (p[i] - p[j]))
    return float(numer / denom)


def kendall_tau(truth: np.ndarray, predicted: np.ndarray) -> float:
    """Unweighted (concordant - discordant) / (M choose 2); ties add 0."""
    truth, predicted = _check_pair(truth, predicted)
    if _warn_if_degenerate(truth, predicted):
        return 0.0
    g = ranks_descending(truth)
    p = ranks_descending(predicted)
    m = truth.size
    total = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            total += np.sign((g[i] - g[j]) * (p[i] - p[j]))
    return float(total / (m * (m - 1) / 2))


def spearman_rho(truth: np.ndarray, predicted: np.ndarray) -> float:
    """Pearson correlation of the average-rank vectors."""
    truth, predicted = _check_pair(truth, predicted)
    if _warn_if_degenerate(truth, predicted):
        return 0.0
    g = ranks_descending(truth)
    p = ranks_descending(predicted)
    gc = g - g.mean()
    pc = p - p.mean()
    return float((gc @ pc) / math.sqrt((gc @ gc) * (pc @ pc)))


@dataclass(frozen=True)
class StabilityResult:
    """Subsets evaluated and the per-method tau_w value on each."""

    subsets: tuple[tuple[int, ...], ...]
    values: dict[str, list[float]]


def stability_subsample(
    truth: Sequence[float],
    predicted_per_method: Mapping[str, Sequence[float]],
    k: int,
    mode: str = "exhaustive",
    count: int | None = None,
    seed: int | None = None,
) -> StabilityResult:
    """tau_w of every method over k-subsets of the model pool.

    ``mode='exhaustive'`` enumerates all C(|pool|, k) subsets in
    lexicographic order (guarded at 1e6); ``mode='sampled'`` draws ``count``
    random subsets with the given seed. The same subsets are applied to
    every method.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pool = truth.size
    if k > pool:
        raise ArgumentError(f"subset size {k} exceeds pool size {pool}")
    if k < 2:
        raise ArgumentError("subsets need at least 2 models")
    preds = {name: np.asarray(v, dtype=np.float64) for name, v in predicted_per_method.items()}
    for name, vec in preds.items():
        if vec.shape != truth.shape:
            raise ArgumentError(f"method {name!r} scores do not match the pool size")
    if mode == "exhaustive":
        if math.comb(pool, k) > 10**6:
            raise ArgumentError(
                f"C({pool},{k}) = {math.comb(pool, k)} subsets; use sampled mode"
            )
        subsets = tuple(itertools.combinations(range(pool), k))
    elif mode == "sampled":
        if count is None or seed is None:
            raise ArgumentError("sampled mode requires count and seed")
        rng = stream(seed, "stability")
        subsets = tuple(
            tuple(sorted(rng.choice(pool, size=k, replace=False).tolist()))
            for _ in range(count)
        )
    else:
        raise ArgumentError(f"unknown mode {mode!r}")
    values: dict[str, list[float]] = {name: [] for name in preds}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateRankingWarning)
        for subset in subsets:
            rows = list(subset)
            for name, vec in preds.items():
                values[name].append(weighted_kendall_tau(truth[rows], vec[rows]))
    return StabilityResult(subsets=subsets, values=values)


def wz_similarity(states: Sequence[ItmModelState], top_k: int) -> np.ndarray:
    """Pairwise similarity of learned latent maps via their singular spaces.

    Each map's left singular vectors (descending singular value) are
    compared index-to-index by absolute cosine, averaged over the top_k
    leading vectors. Right-orthogonal changes of a map leave its left
    singular vectors, and hence this similarity, unchanged.
    """
    if not states:
        raise ArgumentError("need at least one state")
    shapes = {s.w_z.shape for s in states}
    if len(shapes) != 1:
        raise ArgumentError(f"all latent maps must share a shape, got {shapes}")
    d, d_c = shapes.pop()
    if top_k < 1 or top_k > min(d, d_c):
        raise ArgumentError(f"top_k must lie in [1, {min(d, d_c)}]")
    lefts = []
    for s in states:
        u, _, _ = np.linalg.svd(s.w_z, full_matrices=False)
        lefts.append(u[:, :top_k])
    m = len(states)
    sim = np.eye(m)
    for a in range(m):
        for b in range(a + 1, m):
            cosines = np.abs(np.sum(lefts[a] * lefts[b], axis=0))
            sim[a, b] = sim[b, a] = cosines.mean()
    return sim
