"""Dataset loading, splitting, statistics, and synthesis."""

import numpy as np
import pytest

from itm.embedstore import (
    EmbeddingSet,
    SynthSpec,
    feature_stats,
    load_embedding_set,
    load_manifest,
    save_embedding_set,
    save_manifest,
    ManifestEntry,
    split,
    standardize,
    synth_generate,
)
from itm.errors import ArgumentError, FormatError, ValidationError


def small_set(name="tiny"):
    return EmbeddingSet(
        features=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]]),
        labels=np.array([0, 1, 0, 1]),
        num_classes=2,
        name=name,
    )


class TestItmfFormat:
    def test_round_trip_identity(self, tmp_path):
        original = small_set()
        path = tmp_path / "m.itmf"
        save_embedding_set(original, path)
        loaded = load_embedding_set(path)
        np.testing.assert_array_equal(loaded.features, original.features)
        np.testing.assert_array_equal(loaded.labels, original.labels)
        assert loaded.num_classes == 2

    def test_save_load_save_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        dataset = EmbeddingSet(
            features=rng.standard_normal((20, 7)).astype(np.float32).astype(np.float64),
            labels=rng.integers(0, 3, 20),
            num_classes=3,
        )
        # ensure every class is present
        dataset = EmbeddingSet(
            features=dataset.features,
            labels=np.concatenate([[0, 1, 2], dataset.labels[3:]]),
            num_classes=3,
        )
        a, b = tmp_path / "a.itmf", tmp_path / "b.itmf"
        save_embedding_set(dataset, a)
        save_embedding_set(load_embedding_set(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_is_format_error(self, tmp_path):
        path = tmp_path / "bad.itmf"
        save_embedding_set(small_set(), path)
        corrupted = b"XXXX" + path.read_bytes()[4:]
        path.write_bytes(corrupted)
        with pytest.raises(FormatError):
            load_embedding_set(path)

    def test_bad_version_is_format_error(self, tmp_path):
        path = tmp_path / "bad.itmf"
        save_embedding_set(small_set(), path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_embedding_set(path)

    def test_truncated_file_is_format_error(self, tmp_path):
        path = tmp_path / "bad.itmf"
        save_embedding_set(small_set(), path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_embedding_set(path)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            EmbeddingSet(
                features=np.zeros((3, 2)),
                labels=np.array([0, 1, 5]),
                num_classes=3,
            )

    def test_non_finite_feature_rejected(self):
        with pytest.raises(ValidationError):
            EmbeddingSet(
                features=np.array([[0.0, np.nan]]),
                labels=np.array([0]),
                num_classes=2,
            )

    def test_missing_class_fails_coverage(self, tmp_path):
        dataset = EmbeddingSet(
            features=np.zeros((4, 2)), labels=np.array([0, 0, 1, 1]), num_classes=3
        )
        path = tmp_path / "gap.itmf"
        save_embedding_set(dataset, path)
        with pytest.raises(ValidationError):
            load_embedding_set(path)


class TestSplit:
    def test_cardinality(self):
        rng = np.random.default_rng(3)
        dataset = EmbeddingSet(
            features=rng.standard_normal((10, 4)),
            labels=np.array([0] * 5 + [1] * 5),
            num_classes=2,
        )
        train, eval_set = split(dataset, 0.8, seed=7)
        assert train.num_samples == 8 and eval_set.num_samples == 2
        joined = np.vstack([train.features, eval_set.features])
        assert {tuple(r) for r in joined} == {tuple(r) for r in dataset.features}

    def test_determinism(self):
        rng = np.random.default_rng(4)
        dataset = EmbeddingSet(
            features=rng.standard_normal((30, 3)),
            labels=rng.integers(0, 3, 30),
            num_classes=3,
        )
        a = split(dataset, 0.7, seed=11)
        b = split(dataset, 0.7, seed=11)
        np.testing.assert_array_equal(a[0].features, b[0].features)
        np.testing.assert_array_equal(a[1].features, b[1].features)

    def test_stratified_counts(self):
        # derived by brute-force counting: 20 per class * 0.8 = 16 train, 4 eval
        rng = np.random.default_rng(5)
        labels = np.repeat(np.arange(5), 20)
        dataset = EmbeddingSet(
            features=rng.standard_normal((100, 6)), labels=labels, num_classes=5
        )
        train, eval_set = split(dataset, 0.8, seed=1)
        for cls in range(5):
            assert (train.labels == cls).sum() == 16
            assert (eval_set.labels == cls).sum() == 4

    def test_extreme_fraction_rejected(self):
        with pytest.raises(ArgumentError):
            split(small_set(), 1.0, seed=0)

    def test_disjoint(self):
        rng = np.random.default_rng(6)
        features = rng.standard_normal((40, 2))
        dataset = EmbeddingSet(
            features=features, labels=rng.integers(0, 2, 40), num_classes=2
        )
        train, eval_set = split(dataset, 0.5, seed=2)
        train_rows = {tuple(r) for r in train.features}
        eval_rows = {tuple(r) for r in eval_set.features}
        assert not train_rows & eval_rows


class TestFeatureStats:
    def test_hand_example(self):
        dataset = EmbeddingSet(
            features=np.array([[0.0, 0.0], [2.0, 2.0]]),
            labels=np.array([0, 0]),
            num_classes=2,
        )
        stats = feature_stats(dataset)
        np.testing.assert_allclose(stats.mu, [1.0, 1.0])
        np.testing.assert_allclose(stats.sigma, [1.0, 1.0])
        assert stats.dispersion == pytest.approx(np.sqrt(2.0))

    def test_identical_samples_zero_dispersion(self):
        dataset = EmbeddingSet(
            features=np.ones((5, 3)), labels=np.array([0, 0, 1, 1, 1]), num_classes=2
        )
        assert feature_stats(dataset).dispersion == 0.0

    def test_standardization_idempotent_for_dispersion(self):
        rng = np.random.default_rng(8)
        dataset = EmbeddingSet(
            features=rng.standard_normal((50, 6)) * 3 + 1,
            labels=rng.integers(0, 4, 50),
            num_classes=4,
        )
        stats = feature_stats(dataset)
        once = standardize(dataset, stats)
        assert feature_stats(once).dispersion == pytest.approx(
            stats.dispersion, abs=1e-9
        )

    def test_affine_invariance(self):
        rng = np.random.default_rng(9)
        dataset = EmbeddingSet(
            features=rng.standard_normal((60, 5)),
            labels=rng.integers(0, 3, 60),
            num_classes=3,
        )
        base = feature_stats(dataset).dispersion
        scale = rng.uniform(0.1, 10.0, 5)
        offset = rng.uniform(-5.0, 5.0, 5)
        rescaled = EmbeddingSet(
            features=dataset.features * scale + offset,
            labels=dataset.labels,
            num_classes=3,
        )
        assert feature_stats(rescaled).dispersion == pytest.approx(base, abs=1e-9)

    def test_too_few_samples(self):
        dataset = EmbeddingSet(
            features=np.zeros((1, 2)), labels=np.array([0]), num_classes=2
        )
        with pytest.raises(ArgumentError):
            feature_stats(dataset)


class TestSynthGenerate:
    def test_high_separability_near_perfect(self):
        spec = SynthSpec(
            num_models=1,
            num_classes=4,
            dim=8,
            samples_per_class=100,
            separability_range=(10.0, 10.0),
            noise_sigma=0.01,
        )
        (_, accuracy), = synth_generate(spec, seed=0)
        assert accuracy >= 0.99

    def test_zero_separability_chance_level(self):
        spec = SynthSpec(
            num_models=1,
            num_classes=4,
            dim=8,
            samples_per_class=300,
            separability_range=(0.0, 0.0),
            noise_sigma=1.0,
        )
        (_, accuracy), = synth_generate(spec, seed=1)
        assert accuracy == pytest.approx(0.25, abs=0.05)

    def test_monotone_in_separability(self):
        spec = SynthSpec(
            num_models=8,
            num_classes=5,
            dim=16,
            samples_per_class=120,
            separability_range=(0.5, 8.0),
            noise_sigma=1.0,
        )
        accuracies = [acc for _, acc in synth_generate(spec, seed=2)]
        # radii are stratified ascending by model index; allow one inversion
        # within 0.01 near saturation
        inversions = [
            (a, b) for a, b in zip(accuracies, accuracies[1:]) if b < a - 0.01
        ]
        assert not inversions, inversions
        assert sum(b < a for a, b in zip(accuracies, accuracies[1:])) <= 1

    def test_determinism(self):
        spec = SynthSpec(num_models=2, num_classes=3, dim=6, samples_per_class=40)
        a = synth_generate(spec, seed=5)
        b = synth_generate(spec, seed=5)
        for (da, aa), (db, ab) in zip(a, b):
            np.testing.assert_array_equal(da.features, db.features)
            assert aa == ab

    def test_invalid_spec(self):
        with pytest.raises(ArgumentError):
            SynthSpec(num_models=1, num_classes=3, dim=4, separability_range=(2.0, 1.0))
        with pytest.raises(ArgumentError):
            SynthSpec(num_models=1, num_classes=3, dim=4, noise_sigma=0.0)


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = [
            ManifestEntry(name="a", features=tmp_path / "a.itmf", ground_truth=0.5),
            ManifestEntry(name="b", features=tmp_path / "b.itmf", ground_truth=None),
        ]
        path = tmp_path / "manifest.json"
        save_manifest(entries, path)
        loaded = load_manifest(path)
        assert [e.name for e in loaded] == ["a", "b"]
        assert loaded[0].ground_truth == 0.5
        assert loaded[1].ground_truth is None
        assert loaded[0].features == (tmp_path / "a.itmf").resolve()

    def test_duplicate_names_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(
            '[{"name": "a", "features": "x.itmf"}, {"name": "a", "features": "y.itmf"}]'
        )
        with pytest.raises(FormatError):
            load_manifest(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            load_manifest(path)
