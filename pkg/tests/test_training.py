"""PCD training contracts; finite differences on the exact loss as oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealrbm.errors import (ContractViolation, DivergenceError, DomainError)
from annealrbm.model import (RbmModel, UnitKind, copy_model,
                             exact_log_likelihood, exact_moments,
                             initialize_model)
from annealrbm.samplers import AnnealConfig, SampleSet
from annealrbm.training import (Constant, EpochTrace, ExactNegative,
                                ExpToZero, GibbsEstimator,
                                GradientEstimate, SamplerNegative, SmoothExp,
                                TrainConfig,
                                grad_negative_from_samples, grad_positive,
                                init_chains, lr_value, pcd_update,
                                read_trace_csv, train, traces_to_csv,
                                traces_to_json)
from conftest import random_bernoulli_model


def finite_difference_gradient(model, data, step=1e-4):
    """Central differences of the mean log-likelihood, parameter by parameter."""
    n = len(data)

    def mean_loglik(m):
        return -exact_log_likelihood(m, data) / n

    grads = {}
    for attr in ("weights", "hidden_bias", "visible_bias"):
        arr = getattr(model, attr)
        grad = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            bumped = copy_model(model)
            getattr(bumped, attr)[idx] += step
            up = mean_loglik(bumped)
            bumped = copy_model(model)
            getattr(bumped, attr)[idx] -= step
            down = mean_loglik(bumped)
            grad[idx] = (up - down) / (2 * step)
        grads[attr] = grad
    return grads


class TestLrValue:
    def test_smooth_exp_start(self):
        assert lr_value(SmoothExp(0.1, 0.1, 0.01), 1) == pytest.approx(0.11,
                                                                       rel=1e-12)

    def test_smooth_exp_asymptote(self):
        assert lr_value(SmoothExp(0.1, 0.1, 0.01), 10_000) == pytest.approx(
            0.01, rel=1e-9)

    def test_smooth_exp_closed_form(self):
        assert lr_value(SmoothExp(0.1, 0.1, 0.01), 11) == pytest.approx(
            0.1 * math.exp(-1) + 0.01, rel=1e-12)

    def test_exp_to_zero_reaches_below_tenthousandth(self):
        schedule = ExpToZero(0.5, 50)
        final = lr_value(schedule, 50)
        assert final < 1e-4 * 0.5
        assert lr_value(schedule, 1) == 0.5

    def test_exp_to_zero_single_epoch(self):
        assert lr_value(ExpToZero(0.3, 1), 1) == 0.3

    def test_monotone_non_increasing(self):
        for schedule in (SmoothExp(0.2, 0.05, 0.01), ExpToZero(0.1, 30),
                         Constant(0.05)):
            values = [lr_value(schedule, t) for t in range(1, 31)]
            assert all(a >= b for a, b in zip(values, values[1:]))

    def test_epoch_zero_rejected(self):
        with pytest.raises(DomainError):
            lr_value(Constant(0.1), 0)

    @given(st.floats(0.01, 1.0), st.floats(0.005, 0.5), st.floats(0.0, 0.1),
           st.integers(1, 50))
    @settings(max_examples=50, deadline=None)
    def test_smooth_exp_strictly_decreasing(self, eta0, lam, etaf, t):
        # t capped where the analytic decrement still exceeds one ulp
        schedule = SmoothExp(eta0, lam, etaf)
        assert lr_value(schedule, t) > lr_value(schedule, t + 1)


class TestGradPositive:
    def test_zero_model_single_one(self):
        m = RbmModel(np.zeros((1, 1)), np.zeros(1), np.zeros(1),
                     (UnitKind.BERNOULLI,))
        g = grad_positive(m, np.array([[1.0]]))
        assert g.dW[0, 0] == pytest.approx(0.5)
        assert g.db[0] == pytest.approx(0.5)
        assert g.dc[0] == pytest.approx(1.0)

    def test_zero_batch_annihilates(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        g = grad_positive(m, np.zeros((4, 3)))
        assert not g.dW.any()
        assert not g.dc.any()

    def test_duplicated_batch_invariant(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        batch = (rng.random((5, 3)) < 0.5).astype(float)
        single = grad_positive(m, batch)
        doubled = grad_positive(m, np.vstack([batch, batch]))
        np.testing.assert_allclose(single.dW, doubled.dW, atol=1e-14)
        np.testing.assert_allclose(single.db, doubled.db, atol=1e-14)

    def test_empty_batch_rejected(self, rng):
        with pytest.raises(DomainError):
            grad_positive(random_bernoulli_model(2, 2, rng),
                          np.zeros((0, 2)))


class TestGradNegative:
    def test_single_sample(self, rng):
        m = random_bernoulli_model(1, 1, rng)
        g = grad_negative_from_samples(m, (np.array([[1.0]]),
                                           np.array([[1.0]])))
        assert g.dW[0, 0] == 1.0
        assert g.db[0] == 1.0
        assert g.dc[0] == 1.0

    def test_two_samples_equal_weight(self, rng):
        m = random_bernoulli_model(1, 1, rng)
        v = np.array([[0.0], [1.0]])
        h = np.array([[0.0], [1.0]])
        g = grad_negative_from_samples(m, (v, h))
        assert g.dW[0, 0] == 0.5
        assert g.db[0] == 0.5
        assert g.dc[0] == 0.5

    def test_read_count_weighting(self, rng):
        m = random_bernoulli_model(1, 1, rng)
        g = grad_negative_from_samples(
            m, (np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]),
                np.array([1.0, 3.0])))
        assert g.dc[0] == pytest.approx(0.75)

    def test_large_oracle_sample_within_three_sigma(self, rng):
        # exact-oracle samples: draw joint configurations from enumeration
        m = random_bernoulli_model(2, 2, rng)
        from itertools import product as iproduct
        states = [(np.array(v), np.array(h))
                  for v in iproduct((0.0, 1.0), repeat=2)
                  for h in iproduct((0.0, 1.0), repeat=2)]
        from annealrbm.model import Configuration, joint_prob_exact
        probs = np.array([joint_prob_exact(m, Configuration(v, h))
                          for v, h in states])
        n = 100_000
        picks = rng.choice(len(states), size=n, p=probs)
        v = np.array([states[i][0] for i in picks])
        h = np.array([states[i][1] for i in picks])
        g = grad_negative_from_samples(m, (v, h))
        ev, eh, evh = exact_moments(m)
        bound = 3 * 0.5 / math.sqrt(n)
        assert np.abs(g.dc - ev).max() < bound
        assert np.abs(g.db - eh).max() < bound
        assert np.abs(g.dW - evh).max() < bound

    def test_empty_rejected(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        with pytest.raises(DomainError):
            grad_negative_from_samples(m, (np.zeros((0, 2)),
                                           np.zeros((0, 2))))

    def test_qubo_space_sample_set_rejected(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        samples = SampleSet(np.ones((1, 4)), [1], [0.0], "ising", 1.0, "t")
        with pytest.raises(ContractViolation):
            grad_negative_from_samples(m, samples)

    def test_model_space_sample_set_accepted(self, rng):
        m = random_bernoulli_model(2, 1, rng)
        configs = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        samples = SampleSet(configs, [1, 1], [0.0, 0.0], "model", 1.0, "t")
        g = grad_negative_from_samples(m, samples)
        np.testing.assert_allclose(g.dc, [0.5, 0.0])
        np.testing.assert_allclose(g.db, [0.5])


class TestExactGradient:
    def test_matches_finite_differences(self, rng):
        # spec invariant: (positive - exact negative) vs central differences
        for _ in range(6):
            nv, nh = int(rng.integers(2, 5)), int(rng.integers(1, 4))
            m = random_bernoulli_model(nv, nh, rng, scale=0.6)
            data = (rng.random((8, nv)) < 0.5).astype(float)
            pos = grad_positive(m, data)
            ev, eh, evh = exact_moments(m)
            fd = finite_difference_gradient(m, data)
            np.testing.assert_allclose(pos.dW - evh, fd["weights"],
                                       rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(pos.db - eh, fd["hidden_bias"],
                                       rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(pos.dc - ev, fd["visible_bias"],
                                       rtol=1e-5, atol=1e-8)


class TestPcdUpdate:
    def test_zero_lr_is_identity(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        chains = init_chains(m, 4, rng)
        updated, _ = pcd_update(m, (rng.random((4, 2)) < 0.5).astype(float),
                                chains, 0.0, 1, rng)
        np.testing.assert_array_equal(updated.weights, m.weights)
        np.testing.assert_array_equal(updated.visible_bias, m.visible_bias)

    def test_identical_estimates_cancel(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        g = grad_positive(m, (rng.random((4, 2)) < 0.5).astype(float))
        from annealrbm.training import apply_update
        updated = apply_update(m, g, g, 0.5)
        np.testing.assert_array_equal(updated.weights, m.weights)

    def test_update_direction_aligns_with_exact_gradient(self, rng):
        hits = 0
        trials = 40
        for _ in range(trials):
            m = random_bernoulli_model(2, 2, rng, scale=0.7)
            data = (rng.random((6, 2)) < 0.5).astype(float)
            pos = grad_positive(m, data)
            ev, eh, evh = exact_moments(m)
            direction = np.concatenate([
                (pos.dW - evh).ravel(), (pos.db - eh), (pos.dc - ev)])
            fd = finite_difference_gradient(m, data)
            gradient = np.concatenate([
                fd["weights"].ravel(), fd["hidden_bias"],
                fd["visible_bias"]])
            if direction @ gradient > 0:
                hits += 1
        assert hits >= 0.95 * trials

    def test_chains_never_reset_to_data(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        chains = init_chains(m, 5, rng)
        before = chains.v.copy()
        batch = np.ones((5, 3))
        _, advanced = pcd_update(m, batch, chains, 0.1, 1, rng)
        # advanced states derive from the previous chain state, not the batch
        assert advanced.v.shape == before.shape
        assert not np.array_equal(advanced.v, batch)

    def test_divergent_update_aborts(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        chains = init_chains(m, 4, rng)
        batch = np.ones((4, 2))
        with pytest.raises(DivergenceError):
            pcd_update(m, batch, chains, 1e12, 1, rng)

    def test_non_finite_update_aborts(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        pos = grad_positive(m, np.ones((2, 2)))
        bad = GradientEstimate(np.full((2, 2), np.nan), np.zeros(2),
                               np.zeros(2))
        from annealrbm.training import apply_update
        with pytest.raises(DivergenceError):
            apply_update(m, pos, bad, 0.1)


class RecordingEstimator(GibbsEstimator):
    """Instrumentation hook: logs chain states entering and leaving updates."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.entered = []
        self.left = []

    def negative_moments(self, model, rng):
        self.entered.append(self.chains.v.copy())
        estimate = super().negative_moments(model, rng)
        self.left.append(self.chains.v.copy())
        return estimate


class TestTrain:
    def test_zero_lr_returns_input_model(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        data = (rng.random((10, 3)) < 0.5).astype(float)
        config = TrainConfig(epochs=1, batch_size=5, lr=Constant(0.0), seed=3)
        trained, traces = train(m, data, config)
        np.testing.assert_array_equal(trained.weights, m.weights)
        assert len(traces) == 1
        assert traces[0].epoch == 1

    def test_same_seed_identical_runs(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        data = (rng.random((20, 3)) < 0.5).astype(float)
        config = TrainConfig(epochs=3, batch_size=4, lr=Constant(0.05),
                             seed=11)
        a, traces_a = train(m, data, config)
        b, traces_b = train(m, data, config)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.visible_bias, b.visible_bias)
        assert [t.lr for t in traces_a] == [t.lr for t in traces_b]

    def test_chains_persist_across_epochs(self, rng):
        m = random_bernoulli_model(3, 2, rng)
        data = (rng.random((8, 3)) < 0.5).astype(float)
        run_rng = np.random.default_rng(7)
        estimator = RecordingEstimator(m, 4, 1, run_rng)
        train(m, data, TrainConfig(epochs=2, batch_size=4, lr=Constant(0.02),
                                   seed=7), estimator=estimator)
        # 2 epochs x 2 batches: the state entering each update is exactly
        # the state the previous update left, across the epoch boundary too
        assert len(estimator.entered) == 4
        for left, entered in zip(estimator.left, estimator.entered[1:]):
            np.testing.assert_array_equal(left, entered)

    def test_exact_negative_training_increases_likelihood(self, rng):
        m = initialize_model((UnitKind.BERNOULLI,) * 3, 2, seed=5)
        data = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        config = TrainConfig(epochs=30, batch_size=3, lr=Constant(0.5),
                             negative=ExactNegative(), seed=9, shuffle=False)
        before = exact_log_likelihood(m, data)
        trained, _ = train(m, data, config)
        after = exact_log_likelihood(trained, data)
        assert after < before

    def test_sampler_negative_smoke(self, rng):
        m = random_bernoulli_model(2, 2, rng, scale=0.1)
        data = (rng.random((8, 2)) < 0.5).astype(float)
        spec = SamplerNegative("simulated-anneal",
                               AnnealConfig(sweeps=20), num_reads=40)
        config = TrainConfig(epochs=2, batch_size=4, lr=Constant(0.05),
                             negative=spec, seed=13)
        a, _ = train(m, data, config)
        b, _ = train(m, data, config)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_replay_negative_single_update(self, rng, tmp_path):
        # a recording made for the initial compiled problem supports
        # exactly one update; the integrity check pins it to that model
        from annealrbm.qubo import qubo_to_ising, rbm_to_qubo
        from annealrbm.samplers import simulated_anneal, write_sample_set

        m = random_bernoulli_model(2, 2, rng, scale=0.1)
        ising = qubo_to_ising(rbm_to_qubo(m))
        recorded = simulated_anneal(ising, AnnealConfig(num_reads=40,
                                                        sweeps=20, seed=31))
        path = tmp_path / "negative.samples"
        write_sample_set(recorded, path)
        data = (rng.random((6, 2)) < 0.5).astype(float)
        spec = SamplerNegative("annealer-replay", AnnealConfig(sweeps=20),
                               num_reads=40, replay_path=str(path))
        config = TrainConfig(epochs=1, batch_size=6, lr=Constant(0.1),
                             negative=spec, seed=32)
        trained, traces = train(m, data, config)
        assert len(traces) == 1
        assert not np.array_equal(trained.weights, m.weights)

    def test_empty_dataset_rejected(self, rng):
        m = random_bernoulli_model(2, 2, rng)
        with pytest.raises(DomainError):
            train(m, np.zeros((0, 2)), TrainConfig(epochs=1, batch_size=1,
                                                   lr=Constant(0.1)))

    def test_config_validation(self):
        with pytest.raises(DomainError):
            TrainConfig(epochs=0)
        with pytest.raises(DomainError):
            TrainConfig(batch_size=0)
        with pytest.raises(DomainError):
            TrainConfig(gibbs_k=0)


class TestTraceExport:
    def test_csv_round_trip(self, tmp_path):
        traces = [EpochTrace(1, 0.9, 0.8, 0.7, 0.74, 0.1, 12.5),
                  EpochTrace(2, 0.91, 0.82, 0.72, 0.766, 0.09, 11.25)]
        path = tmp_path / "trace.csv"
        traces_to_csv(traces, path)
        back = read_trace_csv(path)
        assert back == traces

    def test_json_fields_match_csv_columns(self, tmp_path):
        import json

        traces = [EpochTrace(1, 0.9, 0.8, 0.7, 0.74, 0.1, 12.5)]
        path = tmp_path / "trace.json"
        traces_to_json(traces, path)
        payload = json.loads(path.read_text())
        assert set(payload[0]) == {"epoch", "accuracy", "precision", "recall",
                                   "f1", "lr", "wall_time_ms"}
