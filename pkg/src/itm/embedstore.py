"""Embedding datasets: ITMF file I/O, splitting, statistics, and synthesis.

The ITMF binary layout (all little-endian):

    bytes 0-3   magic ``ITMF``
    u32         version (currently 1)
    u32         N   number of samples
    u32         d   feature dimension
    u32         C   number of classes
    N*d f32     features, row-major
    N   u32     labels in [0, C)

A sidecar manifest (JSON array) lists models for the ranking commands:
``[{"name": str, "features": path, "ground_truth": number|null}, ...]``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression

from .errors import ArgumentError, FormatError, ValidationError
from .rand import stream

_MAGIC = b"ITMF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class EmbeddingSet:
    """A feature matrix with integer class labels.

    ``features`` is N×d float64, ``labels`` length-N integers in
    [0, num_classes). Instances are immutable; share them freely.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValidationError("features must be a 2-D matrix")
        if labels.shape != (features.shape[0],):
            raise ValidationError("labels must be a vector with one entry per row")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be at least 2")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValidationError(
                f"label out of range [0, {self.num_classes}) in set {self.name!r}"
            )
        if not np.isfinite(features).all():
            raise ValidationError(f"non-finite feature values in set {self.name!r}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def check_class_coverage(self) -> None:
        """Raise unless every class appears at least once and N >= C."""
        if self.num_samples < self.num_classes:
            raise ValidationError(
                f"{self.name!r}: fewer samples ({self.num_samples}) than "
                f"classes ({self.num_classes})"
            )
        present = np.unique(self.labels)
        if present.size != self.num_classes:
            missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
            raise ValidationError(f"{self.name!r}: classes {missing} have no samples")


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension mean/std and the class-distance dispersion of a set."""

    mu: np.ndarray
    sigma: np.ndarray
    dispersion: float


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the synthetic Gaussian-mixture benchmark generator."""

    num_models: int
    num_classes: int
    dim: int
    samples_per_class: int = 200
    separability_range: tuple[float, float] = (0.5, 3.5)
    noise_sigma: float = 1.0

    def __post_init__(self) -> None:
        low, high = self.separability_range
        if low > high:
            raise ArgumentError("separability_range must satisfy low <= high")
        if low < 0:
            raise ArgumentError("separability must be non-negative")
        if min(self.num_models, self.num_classes, self.dim, self.samples_per_class) < 1:
            raise ArgumentError("all counts must be >= 1")
        if self.num_classes < 2:
            raise ArgumentError("num_classes must be at least 2")
        if self.noise_sigma <= 0:
            raise ArgumentError("noise_sigma must be positive")


def load_embedding_set(path: str | Path, name: str | None = None) -> EmbeddingSet:
    """Read an ITMF file, validating format and content invariants."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, d, c = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + n * d * 4 + n * 4
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} does not match header ({expected})")
    features = np.frombuffer(raw, dtype="<f4", count=n * d, offset=_HEADER.size)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=_HEADER.size + n * d * 4)
    dataset = EmbeddingSet(
        features=features.reshape(n, d).astype(np.float64),
        labels=labels.astype(np.int64),
        num_classes=int(c),
        name=name if name is not None else path.stem,
    )
    dataset.check_class_coverage()
    return dataset


def save_embedding_set(dataset: EmbeddingSet, path: str | Path) -> None:
    """Write an ITMF file. Features are stored as f32, labels as u32."""
    path = Path(path)
    n, d = dataset.features.shape
    header = _HEADER.pack(_MAGIC, _VERSION, n, d, dataset.num_classes)
    body = dataset.features.astype("<f4").tobytes(order="C")
    tail = dataset.labels.astype("<u4").tobytes()
    path.write_bytes(header + body + tail)


def split(
    dataset: EmbeddingSet, train_fraction: float, seed: int
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Stratified disjoint train/eval partition, deterministic per seed.

    Each class with >= 2 samples contributes at least one sample to both
    splits; classes with a single sample go to train.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ArgumentError("train_fraction must lie strictly between 0 and 1")
    rng = stream(seed, "split")
    train_idx: list[np.ndarray] = []
    eval_idx: list[np.ndarray] = []
    for cls in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == cls)
        if members.size == 0:
            continue
        perm = members[rng.permutation(members.size)]
        if members.size == 1:
            n_train = 1
        else:
            n_train = int(round(train_fraction * members.size))
            n_train = min(max(n_train, 1), members.size - 1)
        train_idx.append(perm[:n_train])
        eval_idx.append(perm[n_train:])
    train_rows = np.sort(np.concatenate(train_idx))
    eval_rows = np.sort(np.concatenate(eval_idx)) if eval_idx else np.array([], dtype=np.int64)
    if train_rows.size == 0 or eval_rows.size == 0:
        raise ArgumentError("train_fraction produces an empty split")
    def take(rows: np.ndarray, tag: str) -> EmbeddingSet:
        return EmbeddingSet(
            features=dataset.features[rows],
            labels=dataset.labels[rows],
            num_classes=dataset.num_classes,
            name=f"{dataset.name}[{tag}]",
        )

    return take(train_rows, "train"), take(eval_rows, "eval")


def feature_stats(dataset: EmbeddingSet) -> FeatureStats:
    """Mean, standard deviation (divisor N), and class-distance dispersion.

    Dispersion is the average distance of z-scored features to their class
    mean (also in z-scored space); zero-variance dimensions are given unit
    scale before division so constant features contribute nothing.
    """
    if dataset.num_samples < 2:
        raise ArgumentError("feature statistics require at least 2 samples")
    features = dataset.features
    mu = features.mean(axis=0)
    sigma = features.std(axis=0)  # population convention
    safe_sigma = np.where(sigma == 0.0, 1.0, sigma)
    standardized = (features - mu) / safe_sigma
    dispersion = 0.0
    for cls in range(dataset.num_classes):
        members = standardized[dataset.labels == cls]
        if members.shape[0] == 0:
            continue
        center = members.mean(axis=0)
        dispersion += np.linalg.norm(members - center, axis=1).sum()
    dispersion /= dataset.num_samples
    return FeatureStats(mu=mu, sigma=sigma, dispersion=float(dispersion))


def standardize(dataset: EmbeddingSet, stats: FeatureStats) -> EmbeddingSet:
    """Apply (mu, sigma) z-scoring; zero-sigma dimensions get unit scale."""
    safe_sigma = np.where(stats.sigma == 0.0, 1.0, stats.sigma)
    return EmbeddingSet(
        features=(dataset.features - stats.mu) / safe_sigma,
        labels=dataset.labels,
        num_classes=dataset.num_classes,
        name=dataset.name,
    )


def synth_generate(spec: SynthSpec, seed: int) -> list[tuple[EmbeddingSet, float]]:
    """Synthetic model zoo with linear-probe ground truth.

    Model ``i`` places its class centers uniformly on a sphere whose radius
    is a stratified jittered draw from ``separability_range`` (model i draws
    within the i-th of num_models equal sub-intervals, so radii are spread
    over the range rather than clumped), then samples isotropic Gaussian
    features around the per-class centers. The returned oracle accuracy is
    the held-out accuracy of a converged multinomial logistic-regression
    probe (lbfgs, tol 1e-6) on a 4/5 stratified split, standing in for
    fine-tuned performance. Features round-trip through f32 so in-memory
    values match an ITMF save/load exactly.
    """
    low, high = spec.separability_range
    results: list[tuple[EmbeddingSet, float]] = []
    for model_idx in range(spec.num_models):
        rng = stream(seed, "synth", model_idx)
        width = (high - low) / spec.num_models
        radius = low + (model_idx + rng.uniform()) * width
        directions = rng.standard_normal((spec.num_classes, spec.dim))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        centers = radius * directions / norms
        n = spec.num_classes * spec.samples_per_class
        labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
        noise = rng.standard_normal((n, spec.dim)) * spec.noise_sigma
        features = centers[labels] + noise
        features = features.astype(np.float32).astype(np.float64)
        dataset = EmbeddingSet(
            features=features,
            labels=labels,
            num_classes=spec.num_classes,
            name=f"synth_{model_idx:02d}",
        )
        probe_train, probe_eval = split(dataset, 0.8, derive_probe_seed(seed, model_idx))
        probe = LogisticRegression(max_iter=10_000, tol=1e-6)
        probe.fit(probe_train.features, probe_train.labels)
        accuracy = float(probe.score(probe_eval.features, probe_eval.labels))
        results.append((dataset, accuracy))
    return results


def derive_probe_seed(seed: int, model_idx: int) -> int:
    """Probe split seed, independent of the feature-sampling stream."""
    return int(stream(seed, "probe-split", model_idx).integers(0, 2**31 - 1))


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    features: Path
    ground_truth: float | None = None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read a manifest; feature paths resolve relative to the manifest."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(entries, list):
        raise FormatError(f"{path}: manifest must be a JSON array")
    out: list[ManifestEntry] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "name" not in entry or "features" not in entry:
            raise FormatError(f"{path}: entry {i} must have 'name' and 'features'")
        name = str(entry["name"])
        if name in seen:
            raise FormatError(f"{path}: duplicate model name {name!r}")
        seen.add(name)
        truth = entry.get("ground_truth")
        out.append(
            ManifestEntry(
                name=name,
                features=(path.parent / entry["features"]).resolve(),
                ground_truth=None if truth is None else float(truth),
            )
        )
    return out


def save_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    """Write a manifest, relativizing feature paths that sit beside it."""
    path = Path(path)
    base = path.parent.resolve()
    payload = []
    for e in entries:
        features = Path(e.features)
        if features.is_absolute() and features.is_relative_to(base):
            features = features.relative_to(base)
        payload.append(
            {"name": e.name, "features": str(features), "ground_truth": e.ground_truth}
        )
    path.write_text(json.dumps(payload, indent=2) + "\n")
