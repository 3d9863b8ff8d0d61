"""Rank correlations against brute-force oracles, stability, W_z similarity."""

import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itm.errors import ArgumentError
from itm.metrics import (
    DegenerateRankingWarning,
    RankResult,
    kendall_tau,
    ranks_descending,
    spearman_rho,
    stability_subsample,
    weighted_kendall_tau,
    wz_similarity,
)
from itm.trainer import init_state


# ---------------------------------------------------------------------------
# independent oracles: own rank computation, literal pairwise sums
# ---------------------------------------------------------------------------

def oracle_ranks(values):
    values = list(values)
    ranks = []
    for v in values:
        higher = sum(1 for u in values if u > v)
        ties = sum(1 for u in values if u == v)
        # average of ranks higher+1 .. higher+ties
        ranks.append(higher + (ties + 1) / 2)
    return ranks


def sign(x):
    return (x > 0) - (x < 0)


def oracle_tau_w(truth, predicted):
    g = oracle_ranks(truth)
    p = oracle_ranks(predicted)
    m = len(g)
    num = den = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            w = 1.0 / (g[i] + g[j])
            den += w
            num += w * sign((g[i] - g[j]) * (p[i] - p[j]))
    return num / den


def oracle_tau(truth, predicted):
    g = oracle_ranks(truth)
    p = oracle_ranks(predicted)
    m = len(g)
    total = sum(
        sign((g[i] - g[j]) * (p[i] - p[j]))
        for i in range(m)
        for j in range(i + 1, m)
    )
    return total / (m * (m - 1) / 2)


def oracle_rho(truth, predicted):
    g = oracle_ranks(truth)
    p = oracle_ranks(predicted)
    m = len(g)
    gm = sum(g) / m
    pm = sum(p) / m
    cov = sum((a - gm) * (b - pm) for a, b in zip(g, p))
    vg = sum((a - gm) ** 2 for a in g)
    vp = sum((b - pm) ** 2 for b in p)
    return cov / (vg * vp) ** 0.5


class TestWeightedKendall:
    def test_identity_is_one(self):
        truth = np.array([5.0, 4.0, 3.0, 2.0])
        assert weighted_kendall_tau(truth, truth) == 1.0

    def test_reversal_is_minus_one(self):
        truth = np.array([5.0, 4.0, 3.0, 2.0])
        assert weighted_kendall_tau(truth, -truth) == -1.0

    def test_worked_three_model_case(self):
        # rank vectors G=[1,2,3], P=[2,1,3]; weights 1/3, 1/4, 1/5
        truth = np.array([3.0, 2.0, 1.0])
        predicted = np.array([2.0, 3.0, 1.0])
        assert weighted_kendall_tau(truth, predicted) == pytest.approx(7 / 47)

    def test_constant_vector_degenerate(self):
        with pytest.warns(DegenerateRankingWarning):
            value = weighted_kendall_tau(np.ones(4), np.array([1.0, 2.0, 3.0, 4.0]))
        assert value == 0.0

    def test_matches_oracle_on_random_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            m = int(rng.integers(2, 11))
            truth = rng.integers(0, 6, m).astype(float)  # ties likely
            predicted = rng.integers(0, 6, m).astype(float)
            if (truth == truth[0]).all() or (predicted == predicted[0]).all():
                continue
            assert weighted_kendall_tau(truth, predicted) == pytest.approx(
                oracle_tau_w(truth, predicted), abs=1e-12
            )


class TestKendall:
    def test_identity_and_reversal(self):
        truth = np.array([1.0, 2.0, 3.0, 4.0])
        assert kendall_tau(truth, truth) == 1.0
        assert kendall_tau(truth, -truth) == -1.0

    def test_worked_case(self):
        truth = np.array([3.0, 2.0, 1.0])
        predicted = np.array([2.0, 3.0, 1.0])
        assert kendall_tau(truth, predicted) == pytest.approx(1 / 3)

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            m = int(rng.integers(2, 11))
            truth = rng.integers(0, 6, m).astype(float)
            predicted = rng.integers(0, 6, m).astype(float)
            if (truth == truth[0]).all() or (predicted == predicted[0]).all():
                continue
            assert kendall_tau(truth, predicted) == pytest.approx(
                oracle_tau(truth, predicted), abs=1e-12
            )


class TestSpearman:
    def test_identity_and_reversal(self):
        truth = np.array([0.1, 0.4, 0.2, 0.9])
        assert spearman_rho(truth, truth) == pytest.approx(1.0)
        assert spearman_rho(truth, -truth) == pytest.approx(-1.0)

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            m = int(rng.integers(2, 9))
            truth = rng.integers(0, 5, m).astype(float)
            predicted = rng.integers(0, 5, m).astype(float)
            if (truth == truth[0]).all() or (predicted == predicted[0]).all():
                continue
            assert spearman_rho(truth, predicted) == pytest.approx(
                oracle_rho(truth, predicted), abs=1e-12
            )

    def test_constant_degenerate(self):
        with pytest.warns(DegenerateRankingWarning):
            assert spearman_rho(np.array([1.0, 2.0]), np.ones(2)) == 0.0


@st.composite
def _score_pair(draw):
    m = draw(st.integers(min_value=2, max_value=10))
    truth = draw(
        st.lists(st.integers(-1000, 1000), min_size=m, max_size=m, unique=True)
    )
    predicted = draw(
        st.lists(st.integers(-1000, 1000), min_size=m, max_size=m, unique=True)
    )
    return np.array(truth, dtype=float), np.array(predicted, dtype=float)


@settings(max_examples=200, deadline=None)
@given(_score_pair())
def test_antisymmetry_and_monotone_invariance(pair):
    truth, predicted = pair
    for metric in (weighted_kendall_tau, kendall_tau, spearman_rho):
        base = metric(truth, predicted)
        assert metric(truth, -predicted) == pytest.approx(-base, abs=1e-12)
        # strictly increasing transform leaves ranks unchanged; integer-valued
        # inputs keep the transform collision-free in floating point
        transformed = 3.0 * predicted + np.tanh(predicted) + 7.0
        assert metric(truth, transformed) == pytest.approx(base, abs=1e-12)


class TestRankResult:
    def test_compute_fills_all_metrics(self):
        result = RankResult.compute(
            ["a", "b", "c"], [0.9, 0.5, 0.2], [0.8, 0.6, 0.1]
        )
        assert result.tau_w == 1.0 and result.tau == 1.0 and result.rho == 1.0
        payload = result.to_json_dict()
        assert [m["name"] for m in payload["models"]] == ["a", "b", "c"]

    def test_needs_two_models(self):
        with pytest.raises(ArgumentError):
            RankResult.compute(["a"], [1.0], [1.0])


class TestStability:
    def test_exhaustive_14_choose_10(self):
        rng = np.random.default_rng(3)
        truth = rng.uniform(0, 1, 14)
        methods = {"perfect": truth.copy(), "noisy": truth + rng.normal(0, 0.05, 14)}
        result = stability_subsample(truth, methods, k=10)
        assert len(result.subsets) == 1001
        assert all(len(v) == 1001 for v in result.values.values())
        assert all(v == pytest.approx(1.0) for v in result.values["perfect"])

    def test_full_pool_subset_is_plain_tau_w(self):
        rng = np.random.default_rng(4)
        truth = rng.uniform(0, 1, 6)
        predicted = rng.uniform(0, 1, 6)
        result = stability_subsample(truth, {"m": predicted}, k=6)
        assert len(result.subsets) == 1
        assert result.values["m"][0] == pytest.approx(
            weighted_kendall_tau(truth, predicted)
        )

    def test_union_covers_pool_and_permutation_invariance(self):
        rng = np.random.default_rng(5)
        truth = rng.uniform(0, 1, 7)
        predicted = rng.uniform(0, 1, 7)
        result = stability_subsample(truth, {"m": predicted}, k=4)
        assert set(itertools.chain.from_iterable(result.subsets)) == set(range(7))
        perm = rng.permutation(7)
        permuted = stability_subsample(truth[perm], {"m": predicted[perm]}, k=4)
        assert sorted(np.round(permuted.values["m"], 12)) == pytest.approx(
            sorted(np.round(result.values["m"], 12))
        )

    def test_sampled_mode_deterministic(self):
        rng = np.random.default_rng(6)
        truth = rng.uniform(0, 1, 9)
        a = stability_subsample(
            truth, {"m": truth}, k=5, mode="sampled", count=20, seed=3
        )
        b = stability_subsample(
            truth, {"m": truth}, k=5, mode="sampled", count=20, seed=3
        )
        assert a.subsets == b.subsets

    def test_k_too_large(self):
        with pytest.raises(ArgumentError):
            stability_subsample(np.ones(3), {"m": np.ones(3)}, k=4)


class TestWzSimilarity:
    def _state_with(self, w_z):
        state = init_state(w_z.shape[0], w_z.shape[1], 2, seed=0)
        state.w_z = np.asarray(w_z, dtype=np.float64)
        return state

    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(7)
        state = self._state_with(rng.standard_normal((12, 8)))
        sim = wz_similarity([state, state], top_k=4)
        np.testing.assert_allclose(sim, np.ones((2, 2)), atol=1e-12)

    def test_right_orthogonal_action_invariant(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((16, 10))
        q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        sim = wz_similarity([self._state_with(w), self._state_with(w @ q)], top_k=5)
        assert sim[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_independent_maps_score_low(self):
        rng = np.random.default_rng(9)
        values = []
        for _ in range(10):
            a = self._state_with(rng.standard_normal((64, 64)))
            b = self._state_with(rng.standard_normal((64, 64)))
            values.append(wz_similarity([a, b], top_k=8)[0, 1])
        assert np.mean(values) <= 0.5

    def test_symmetric_unit_diagonal(self):
        rng = np.random.default_rng(10)
        states = [self._state_with(rng.standard_normal((9, 6))) for _ in range(4)]
        sim = wz_similarity(states, top_k=3)
        np.testing.assert_allclose(sim, sim.T)
        np.testing.assert_allclose(np.diag(sim), 1.0)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(11)
        a = self._state_with(rng.standard_normal((5, 4)))
        b = self._state_with(rng.standard_normal((6, 4)))
        with pytest.raises(ArgumentError):
            wz_similarity([a, b], top_k=2)


def test_ranks_descending_average_ties():
    ranks = ranks_descending(np.array([3.0, 1.0, 3.0, 0.5]))
    np.testing.assert_allclose(ranks, [1.5, 3.0, 1.5, 4.0])
