"""Pseudo-cluster target centers: generation schemes and distribution shifting.

The centers play the role of the converged embedding state: one
well-separated vector per class, orthonormal as a set before any shift.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, StateError, ValidationError
from .rand import stream


class CenterScheme(enum.Enum):
    ONE_HOT = "onehot"
    RANDOM_ORTHO = "random"
    PCA_ORTHO = "pca"
    LAPLACIAN_ORTHO = "laplacian"


@dataclass(frozen=True)
class PseudoClusters:
    """C×d_c matrix of per-class target centers.

    Rows are orthonormal while ``shifted`` is False; shifting trades that
    for alignment with the observed feature distribution.
    """

    centers: np.ndarray
    scheme: CenterScheme
    shifted: bool = False

    def __post_init__(self) -> None:
        centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        if centers.ndim != 2:
            raise ValidationError("centers must be a 2-D matrix")
        if not np.isfinite(centers).all():
            raise ValidationError("centers contain non-finite values")
        if not self.shifted:
            gram = centers @ centers.T
            if not np.allclose(gram, np.eye(centers.shape[0]), atol=1e-9):
                raise ValidationError("unshifted center rows must be orthonormal")
        object.__setattr__(self, "centers", centers)
        self.centers.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _orthonormal_rows(matrix: np.ndarray, count: int) -> np.ndarray:
    """First ``count`` orthonormalized rows via QR with sign-fixed diagonal."""
    q, r = np.linalg.qr(matrix.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return (q * signs).T[:count]


def _fix_vector_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (determinism)."""
    idx = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0.0] = 1.0
    return vectors * signs


def generate_centers(
    num_classes: int, dim: int, scheme: CenterScheme, seed: int
) -> PseudoClusters:
    """Build C orthonormal center rows in R^dim under the chosen scheme.

    ONE_HOT uses the standard basis. RANDOM_ORTHO orthonormalizes a
    Gaussian draw. PCA_ORTHO takes the top-C covariance eigenvectors of a
    4C-point Gaussian sample. LAPLACIAN_ORTHO maps the first C nontrivial
    eigenvectors of the sample's symmetric normalized kNN-graph Laplacian
    back through the sample and re-orthonormalizes. All are deterministic
    per seed.
    """
    if dim < num_classes:
        raise ArgumentError(f"dim ({dim}) must be >= num_classes ({num_classes})")
    rng = stream(seed, "centers", scheme.value)
    if scheme is CenterScheme.ONE_HOT:
        centers = np.eye(num_classes, dim)
    elif scheme is CenterScheme.RANDOM_ORTHO:
        centers = _orthonormal_rows(rng.standard_normal((num_classes, dim)), num_classes)
    elif scheme is CenterScheme.PCA_ORTHO:
        sample = rng.standard_normal((4 * num_classes, dim))
        cov = np.cov(sample, rowvar=False, bias=True)
        eigvals, eigvecs = np.linalg.eigh(cov)
        top = _fix_vector_signs(eigvecs[:, np.argsort(eigvals)[::-1][:num_classes]])
        centers = top.T
    elif scheme is CenterScheme.LAPLACIAN_ORTHO:
        sample = rng.standard_normal((4 * num_classes, dim))
        centers = _laplacian_centers(sample, num_classes)
    else:  # pragma: no cover - enum is closed
        raise ArgumentError(f"unknown scheme {scheme!r}")
    return PseudoClusters(centers=centers, scheme=scheme, shifted=False)


def _laplacian_centers(sample: np.ndarray, num_classes: int) -> np.ndarray:
    n = sample.shape[0]
    k = min(10, n - 1)
    deltas = sample[:, None, :] - sample[None, :, :]
    dist = np.linalg.norm(deltas, axis=2)
    bandwidth = np.median(dist[np.triu_indices(n, k=1)])
    if bandwidth == 0.0:
        bandwidth = 1.0
    weights = np.exp(-(dist**2) / (2.0 * bandwidth**2))
    # keep only each node's k nearest neighbours, then symmetrize
    order = np.argsort(dist, axis=1, kind="stable")
    mask = np.zeros_like(weights, dtype=bool)
    rows = np.repeat(np.arange(n), k)
    mask[rows, order[:, 1 : k + 1].ravel()] = True
    mask |= mask.T
    adjacency = np.where(mask, weights, 0.0)
    degree = adjacency.sum(axis=1)
    degree[degree == 0.0] = 1.0
    inv_sqrt = 1.0 / np.sqrt(degree)
    laplacian = np.eye(n) - inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]
    eigvals, eigvecs = np.linalg.eigh(laplacian)
    nontrivial = _fix_vector_signs(eigvecs[:, 1 : num_classes + 1])
    return _orthonormal_rows(nontrivial.T @ sample, num_classes)


def shift_centers(
    clusters: PseudoClusters, mu: np.ndarray, sigma: np.ndarray
) -> PseudoClusters:
    """Relocate centers to the feature distribution: c' = mu + mean(sigma)*c."""
    if clusters.shifted:
        raise StateError("centers are already shifted")
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if mu.shape != (clusters.dim,) or sigma.shape != (clusters.dim,):
        raise ArgumentError("mu and sigma must be vectors of the center dimension")
    if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
        raise ArgumentError("mu and sigma must be finite")
    if (sigma < 0).any():
        raise ArgumentError("sigma entries must be >= 0")
    scale = float(sigma.mean())
    return PseudoClusters(
        centers=mu + scale * clusters.centers, scheme=clusters.scheme, shifted=True
    )


def targets_for(clusters: PseudoClusters, labels: np.ndarray) -> np.ndarray:
    """Per-sample target rows: row j is the center of class labels[j]."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= clusters.num_classes):
        raise ValidationError(
            f"label out of range [0, {clusters.num_classes}) in targets_for"
        )
    return clusters.centers[labels]
