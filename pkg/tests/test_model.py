"""Core model contracts, with direct enumeration as the oracle throughout."""

import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealrbm.errors import (DimensionMismatch, DomainError,
                              EnumerationCapExceeded)
from annealrbm.model import (Configuration, RbmModel, UnitKind, cond_hidden,
                             cond_visible, copy_model, enumerate_binary,
                             energy, exact_log_likelihood, exact_moments,
                             free_energy, free_energy_batch, gibbs_chain,
                             gibbs_step, initialize_model, joint_prob_exact,
                             load_model, partition_exact, save_model)
from conftest import random_bernoulli_model, random_grbm


def tiny_model():
    return RbmModel(np.array([[2.0]]), np.array([0.5]), np.array([0.25]),
                    (UnitKind.BERNOULLI,))


def zero_model(nv=1, nh=1, kinds=None):
    kinds = kinds or (UnitKind.BERNOULLI,) * nv
    return RbmModel(np.zeros((nv, nh)), np.zeros(nv), np.zeros(nh), kinds)


def brute_energy(model, v, h):
    # oracle: term-by-term sum, no matrix algebra
    e = 0.0
    for i in range(model.n_visible):
        for j in range(model.n_hidden):
            e -= v[i] * model.weights[i, j] * h[j]
    for j in range(model.n_hidden):
        e -= model.hidden_bias[j] * h[j]
    for i in range(model.n_visible):
        if model.kinds[i] is UnitKind.BERNOULLI:
            e -= model.visible_bias[i] * v[i]
        else:
            e += (v[i] - model.visible_bias[i]) ** 2 / 2.0
    return e


class TestEnergy:
    def test_zero_model_any_config(self):
        assert energy(zero_model(2, 2), Configuration([1, 0], [0, 1])) == 0.0

    def test_direct_substitution(self):
        assert energy(tiny_model(), Configuration([1], [1])) == -2.75

    def test_gaussian_quadratic_self_term(self):
        m = RbmModel(np.array([[1.0]]), np.array([0.0]), np.array([0.0]),
                     (UnitKind.GAUSSIAN,))
        assert energy(m, Configuration([2.0], [0])) == 2.0

    def test_matches_brute_force_on_random_models(self, rng):
        for _ in range(15):
            m = random_grbm(2, 2, 3, rng)
            v = np.where(m.gaussian_mask, rng.normal(size=4),
                         (rng.random(4) < 0.5).astype(float))
            h = (rng.random(3) < 0.5).astype(float)
            assert energy(m, Configuration(v, h)) == pytest.approx(
                brute_energy(m, v, h), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            energy(tiny_model(), Configuration([1, 0], [1]))

    def test_non_binary_bernoulli_entry(self):
        with pytest.raises(DomainError):
            energy(tiny_model(), Configuration([0.3], [1]))

    def test_hidden_permutation_invariance(self, rng):
        m = random_bernoulli_model(3, 4, rng)
        perm = rng.permutation(4)
        permuted = RbmModel(m.weights[:, perm], m.visible_bias,
                            m.hidden_bias[perm], m.kinds)
        v = (rng.random(3) < 0.5).astype(float)
        h = (rng.random(4) < 0.5).astype(float)
        assert energy(m, Configuration(v, h)) == pytest.approx(
            energy(permuted, Configuration(v, h[perm])), abs=1e-12)


class TestPartition:
    def test_zero_model_1x1(self):
        assert partition_exact(zero_model()) == pytest.approx(4.0)

    def test_zero_model_2x2(self):
        assert partition_exact(zero_model(2, 2)) == pytest.approx(16.0)

    def test_enumerated_four_terms(self):
        expected = sum(math.exp(x) for x in (0.0, 0.25, 0.5, 2.75))
        assert partition_exact(tiny_model()) == pytest.approx(expected,
                                                              rel=1e-12)

    def test_cap_refusal_names_cap(self):
        big = zero_model(20, 5, (UnitKind.BERNOULLI,) * 20)
        with pytest.raises(EnumerationCapExceeded, match="24"):
            partition_exact(big)

    def test_positive_on_random_models(self, rng):
        for _ in range(5):
            assert partition_exact(random_bernoulli_model(3, 3, rng)) > 0


class TestJointProb:
    def test_uniform_at_zero_energy(self):
        m = zero_model()
        for v, h in product((0.0, 1.0), repeat=2):
            assert joint_prob_exact(m, Configuration([v], [h])) == \
                pytest.approx(0.25)

    def test_ratio_of_enumerated_terms(self):
        z = sum(math.exp(x) for x in (0.0, 0.25, 0.5, 2.75))
        p = joint_prob_exact(tiny_model(), Configuration([1], [1]))
        assert p == pytest.approx(math.exp(2.75) / z, rel=1e-12)

    def test_normalization(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        total = sum(
            joint_prob_exact(m, Configuration(list(v), list(h)))
            for v in product((0.0, 1.0), repeat=2)
            for h in product((0.0, 1.0), repeat=2))
        assert total == pytest.approx(1.0, abs=1e-10)


class TestLogLikelihood:
    def test_single_symmetric_point(self):
        assert exact_log_likelihood(zero_model(), [[0]]) == pytest.approx(
            -math.log(0.5), rel=1e-12)

    def test_additivity(self):
        assert exact_log_likelihood(zero_model(), [[0], [1]]) == \
            pytest.approx(2 * 0.6931471805599453, rel=1e-9)

    def test_duplicated_dataset_doubles(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        data = (rng.random((4, 3)) < 0.5).astype(float)
        single = exact_log_likelihood(m, data)
        doubled = exact_log_likelihood(m, np.vstack([data, data]))
        assert doubled == pytest.approx(2 * single, rel=1e-12)

    def test_empty_dataset(self):
        with pytest.raises(DomainError):
            exact_log_likelihood(zero_model(), [])

    def test_nonnegative_for_bernoulli(self, rng):
        m = random_bernoulli_model(3, 3, rng)
        data = (rng.random((6, 3)) < 0.5).astype(float)
        assert exact_log_likelihood(m, data) >= 0.0


class TestConditionals:
    def test_zero_model_half(self):
        np.testing.assert_allclose(cond_hidden(zero_model(2, 3), np.zeros(2)),
                                   0.5)

    def test_saturation(self):
        m = RbmModel(np.zeros((1, 1)), np.zeros(1), np.array([30.0]),
                     (UnitKind.BERNOULLI,))
        assert cond_hidden(m, np.array([0.0]))[0] == pytest.approx(1.0,
                                                                   abs=1e-9)

    def test_direct_substitution(self):
        p = cond_hidden(tiny_model(), np.array([1.0]))[0]
        assert p == pytest.approx(1 / (1 + math.exp(-2.25)), rel=1e-12)

    def test_matches_exact_conditional(self, rng):
        # Bayes-ratio oracle: p(h_j=1|v) from the enumerated joint
        m = random_bernoulli_model(2, 2, rng)
        v = np.array([1.0, 0.0])
        probs = cond_hidden(m, v)
        for j in range(2):
            num = sum(joint_prob_exact(m, Configuration(v, list(h)))
                      for h in product((0.0, 1.0), repeat=2) if h[j] == 1.0)
            den = sum(joint_prob_exact(m, Configuration(v, list(h)))
                      for h in product((0.0, 1.0), repeat=2))
            assert probs[j] == pytest.approx(num / den, abs=1e-10)

    def test_cond_visible_gaussian_mean(self):
        m = RbmModel(np.array([[2.0]]), np.array([1.0]), np.array([0.0]),
                     (UnitKind.GAUSSIAN,))
        assert cond_visible(m, np.array([1.0]))[0] == pytest.approx(3.0)

    def test_cond_visible_zero_model(self):
        gauss = RbmModel(np.zeros((1, 1)), np.zeros(1), np.zeros(1),
                         (UnitKind.GAUSSIAN,))
        assert cond_visible(gauss, np.array([0.0]))[0] == 0.0
        bern = zero_model()
        assert cond_visible(bern, np.array([0.0]))[0] == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cond_hidden(tiny_model(), np.zeros(2))
        with pytest.raises(DimensionMismatch):
            cond_visible(tiny_model(), np.zeros(2))


class TestGibbs:
    def test_replays_seeded_stream(self):
        # oracle: replay the exact uniform draws the step consumes
        m = zero_model()
        seed = 77
        expected_rng = np.random.default_rng(seed)
        u_h = expected_rng.random(1)
        u_v = expected_rng.random(1)
        expected = (float(u_h[0] < 0.5), float(u_v[0] < 0.5))
        got = gibbs_step(m, Configuration([0.0], [0.0]),
                         np.random.default_rng(seed))
        assert (got.h[0], got.v[0]) == (expected[0], expected[1])

    def test_saturated_biases_force_ones(self, rng):
        m = RbmModel(np.zeros((1, 1)), np.array([30.0]), np.array([30.0]),
                     (UnitKind.BERNOULLI,))
        cfg = Configuration([0.0], [0.0])
        for _ in range(50):
            cfg = gibbs_step(m, cfg, rng)
            assert (cfg.v[0], cfg.h[0]) == (1.0, 1.0)

    def test_long_chain_marginals(self):
        m = zero_model(2, 2)
        states = gibbs_chain(m, Configuration([0.0, 0.0], [0.0, 0.0]),
                             100_000, np.random.default_rng(5))
        marginals = states.mean(axis=0)
        assert np.all(marginals >= 0.49) and np.all(marginals <= 0.51)

    def test_chain_rejects_gaussian_models(self, rng):
        g = random_grbm(1, 1, 1, rng)
        with pytest.raises(DomainError):
            gibbs_chain(g, Configuration([0.0, 0.0], [0.0]), 10, rng)

    def test_detailed_balance_exact_kernel(self, rng):
        # apply the two-block kernel exactly to the exact distribution
        m = random_bernoulli_model(3, 3, rng)
        v_all = enumerate_binary(3)
        h_all = enumerate_binary(3)
        joint = np.array([
            [joint_prob_exact(m, Configuration(v, h)) for h in h_all]
            for v in v_all])  # (8, 8) over (v, h)
        # kernel: (v,h) -> (v',h') with prob p(h'|v) p(v'|h')
        p_h_given_v = np.array([cond_hidden(m, v) for v in v_all])
        ph = np.array([
            [np.prod(np.where(h == 1.0, p, 1 - p)) for h in h_all]
            for p in p_h_given_v])  # (v, h')
        p_v_given_h = np.array([cond_visible(m, h) for h in h_all])
        pv = np.array([
            [np.prod(np.where(v == 1.0, p, 1 - p)) for v in v_all]
            for p in p_v_given_h])  # (h', v')
        after_h = joint.sum(axis=1)[:, None] * ph   # (v, h') before v resample
        new_joint = np.einsum("vh,hw->wh", after_h, pv)  # (v', h')
        np.testing.assert_allclose(new_joint, joint, atol=1e-9)


class TestFreeEnergy:
    def test_zero_model(self):
        assert free_energy(zero_model(), np.array([0.0])) == pytest.approx(
            -math.log(2), rel=1e-12)

    def test_matches_enumeration(self, rng):
        m = random_grbm(1, 1, 2, rng)
        v = np.array([0.7, 1.0])
        brute = -math.log(sum(
            math.exp(-energy(m, Configuration(v, list(h))))
            for h in product((0.0, 1.0), repeat=2)))
        assert free_energy(m, v) == pytest.approx(brute, abs=1e-10)

    def test_probability_identity(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        z = partition_exact(m)
        for v in enumerate_binary(2):
            p_marginal = sum(joint_prob_exact(m, Configuration(v, list(h)))
                             for h in product((0.0, 1.0), repeat=2))
            assert math.exp(-free_energy(m, v)) / z == pytest.approx(
                p_marginal, abs=1e-10)

    def test_batch_matches_scalar(self, rng):
        m = random_grbm(2, 1, 3, rng)
        rows = rng.normal(size=(4, 3))
        rows[:, 2] = (rows[:, 2] > 0).astype(float)
        batch = free_energy_batch(m, rows)
        for row, fe in zip(rows, batch):
            assert fe == pytest.approx(free_energy(m, row), abs=1e-12)


class TestExactMoments:
    def test_matches_brute_enumeration(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        v_mean, h_mean, vh_mean = exact_moments(m)
        bv = np.zeros(2)
        bh = np.zeros(2)
        bvh = np.zeros((2, 2))
        for v in product((0.0, 1.0), repeat=2):
            for h in product((0.0, 1.0), repeat=2):
                p = joint_prob_exact(m, Configuration(list(v), list(h)))
                va, ha = np.array(v), np.array(h)
                bv += p * va
                bh += p * ha
                bvh += p * np.outer(va, ha)
        np.testing.assert_allclose(v_mean, bv, atol=1e-10)
        np.testing.assert_allclose(h_mean, bh, atol=1e-10)
        np.testing.assert_allclose(vh_mean, bvh, atol=1e-10)


class TestModelStructure:
    def test_label_block_must_be_bernoulli(self):
        with pytest.raises(DomainError):
            RbmModel(np.zeros((3, 1)), np.zeros(3), np.zeros(1),
                     (UnitKind.GAUSSIAN, UnitKind.BERNOULLI,
                      UnitKind.BERNOULLI), label_span=(0, 2))

    def test_label_block_minimum_size(self):
        with pytest.raises(DomainError):
            RbmModel(np.zeros((3, 1)), np.zeros(3), np.zeros(1),
                     (UnitKind.BERNOULLI,) * 3, label_span=(0, 1))

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            RbmModel(np.array([[np.nan]]), np.zeros(1), np.zeros(1),
                     (UnitKind.BERNOULLI,))

    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_initialization_deterministic(self, seed):
        kinds = (UnitKind.BERNOULLI,) * 3
        a = initialize_model(kinds, 2, seed)
        b = initialize_model(kinds, 2, seed)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert np.abs(a.weights).max() <= 0.01

    def test_serialization_round_trip(self, rng, tmp_path):
        m = random_grbm(2, 3, 4, rng)
        m = RbmModel(m.weights, m.visible_bias, m.hidden_bias, m.kinds,
                     label_span=(3, 2))
        path = tmp_path / "model.json"
        save_model(m, path)
        back = load_model(path)
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(back.visible_bias, m.visible_bias)
        np.testing.assert_array_equal(back.hidden_bias, m.hidden_bias)
        assert back.kinds == m.kinds
        assert back.label_span == (3, 2)

    def test_copy_is_deep(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        c = copy_model(m)
        c.weights[0, 0] += 1.0
        assert m.weights[0, 0] != c.weights[0, 0]
