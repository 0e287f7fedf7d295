"""Persistent contrastive divergence with pluggable negative phases.

The update rule is plain likelihood ascent, W <- W + lr * (positive -
negative), with no momentum or weight decay. The negative phase comes
from one of three estimators: persistent Gibbs chains, a sampler over
the compiled Ising problem (simulated annealing or an annealer client),
or exact enumeration for small test models.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (ContractViolation, DimensionMismatch, DivergenceError,
                     DomainError)
from .metrics import MetricsReport
from .model import (RbmModel, cond_hidden_batch, copy_model, exact_moments)
from .qubo import BinaryExpansion, DEFAULT_EXPANSION, qubo_to_ising, rbm_to_qubo
from .samplers import (AnnealConfig, MockAnnealer, ReplayAnnealer, SampleSet,
                       estimate_moments, simulated_anneal)

PARAMETER_LIMIT = 1e6
_SEED_SPAN = 2 ** 63


@dataclass(frozen=True)
class SmoothExp:
    """eta0 * exp(-lam * (t - 1)) + etaf; starts at eta0 + etaf, ends at etaf."""

    eta0: float
    lam: float
    etaf: float

    def __post_init__(self):
        if self.eta0 < 0 or self.etaf < 0 or self.lam < 0:
            raise DomainError("SmoothExp parameters must be nonnegative")


@dataclass(frozen=True)
class ExpToZero:
    """Exponential decay sized to land below 1e-4 * initial at the last epoch."""

    initial: float
    epochs: int

    def __post_init__(self):
        if self.initial < 0:
            raise DomainError("initial rate must be nonnegative")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise DomainError("rate must be nonnegative")


LrSchedule = SmoothExp | ExpToZero | Constant

# final ExpToZero value is initial / 2e4 = 5e-5 * initial, safely under 1e-4
_EXP_TO_ZERO_DROP = math.log(2e4)


def lr_value(schedule: LrSchedule, t: int) -> float:
    """Learning rate at epoch t (1-based)."""
    if t < 1:
        raise DomainError("epoch index starts at 1")
    if isinstance(schedule, SmoothExp):
        return schedule.eta0 * math.exp(-schedule.lam * (t - 1)) + schedule.etaf
    if isinstance(schedule, ExpToZero):
        if schedule.epochs == 1:
            return schedule.initial
        rate = _EXP_TO_ZERO_DROP / (schedule.epochs - 1)
        return schedule.initial * math.exp(-rate * (t - 1))
    if isinstance(schedule, Constant):
        return schedule.value
    raise DomainError(f"unknown schedule {schedule!r}")


@dataclass(frozen=True)
class GibbsNegative:
    """Persistent chains advanced by block Gibbs; chain count = batch size."""


@dataclass(frozen=True)
class SamplerNegative:
    """Negative phase from one sampler invocation of num_reads per batch."""

    method: str = "simulated-anneal"  # or "annealer-mock" | "annealer-replay"
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    num_reads: int = 100
    replay_path: str | None = None
    expansion: BinaryExpansion = DEFAULT_EXPANSION


@dataclass(frozen=True)
class ExactNegative:
    """Enumerated model expectations; test oracle for small models."""


NegativeSpec = GibbsNegative | SamplerNegative | ExactNegative


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: LrSchedule = field(default_factory=lambda: Constant(0.01))
    gibbs_k: int = 1
    negative: NegativeSpec = field(default_factory=GibbsNegative)
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.gibbs_k < 1:
            raise DomainError("gibbs_k must be >= 1")


@dataclass
class GradientEstimate:
    """Parameter-shaped gradient pieces: dW, hidden db, visible dc."""

    dW: np.ndarray
    db: np.ndarray
    dc: np.ndarray

    def check(self, model: RbmModel):
        if self.dW.shape != model.weights.shape:
            raise DimensionMismatch("dW shape does not match the model")
        if self.db.shape != model.hidden_bias.shape:
            raise DimensionMismatch("db shape does not match the model")
        if self.dc.shape != model.visible_bias.shape:
            raise DimensionMismatch("dc shape does not match the model")


@dataclass
class PersistentChains:
    """Fantasy particles carried across updates; never reset to data."""

    v: np.ndarray  # (m, n_visible)
    h: np.ndarray  # (m, n_hidden)


@dataclass
class EpochTrace:
    epoch: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    lr: float
    wall_time_ms: float


TRACE_COLUMNS = ("epoch", "accuracy", "precision", "recall", "f1", "lr",
                 "wall_time_ms")


def grad_positive(model: RbmModel, batch: np.ndarray) -> GradientEstimate:
    """Data-phase moments with mean-field hidden units (no sampling noise)."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[0] == 0:
        raise DomainError("empty batch")
    if batch.shape[1] != model.n_visible:
        raise DimensionMismatch(
            f"batch rows have {batch.shape[1]} entries, "
            f"expected {model.n_visible}")
    p_h = cond_hidden_batch(model, batch)
    m = batch.shape[0]
    return GradientEstimate(batch.T @ p_h / m, p_h.mean(axis=0),
                            batch.mean(axis=0))


def grad_negative_from_samples(model: RbmModel, samples) -> GradientEstimate:
    """Model-phase moments as read-weighted means over samples.

    ``samples`` is either a ``(v, h)`` / ``(v, h, weights)`` tuple of
    arrays in model space, or a model-space :class:`SampleSet` whose
    rows concatenate v and h. QUBO- or Ising-space sample sets must go
    through ``estimate_moments`` first, since decoding them needs the
    compiled problem's index map.
    """
    if isinstance(samples, SampleSet):
        if samples.space != "model":
            raise ContractViolation(
                f"sample set is in {samples.space} space; decode it with "
                "estimate_moments and the compiled problem")
        configs = samples.configurations
        if configs.shape[1] != model.n_visible + model.n_hidden:
            raise DimensionMismatch(
                "model-space rows must concatenate visible and hidden units")
        v = configs[:, :model.n_visible]
        h = configs[:, model.n_visible:]
        w = samples.read_counts.astype(float)
    else:
        v, h, *rest = samples
        v = np.atleast_2d(np.asarray(v, dtype=float))
        h = np.atleast_2d(np.asarray(h, dtype=float))
        w = (np.asarray(rest[0], dtype=float) if rest
             else np.ones(v.shape[0]))
    if v.shape[0] == 0:
        raise DomainError("empty sample set")
    if v.shape[0] != h.shape[0] or w.shape != (v.shape[0],):
        raise DimensionMismatch("sample arrays disagree on record count")
    if v.shape[1] != model.n_visible or h.shape[1] != model.n_hidden:
        raise DimensionMismatch("sample widths do not match the model")
    w = w / w.sum()
    return GradientEstimate((v * w[:, None]).T @ h, w @ h, w @ v)


def init_chains(model: RbmModel, n_chains: int,
                rng: np.random.Generator) -> PersistentChains:
    """Random fantasy particles: Bernoulli(0.5) bits, standard-normal Gaussians."""
    v = (rng.random((n_chains, model.n_visible)) < 0.5).astype(float)
    gauss = model.gaussian_mask
    if gauss.any():
        noise = rng.standard_normal((n_chains, model.n_visible))
        v = np.where(gauss, noise, v)
    h = (rng.random((n_chains, model.n_hidden)) < 0.5).astype(float)
    return PersistentChains(v, h)


def advance_chains(model: RbmModel, chains: PersistentChains, k: int,
                   rng: np.random.Generator) -> PersistentChains:
    """k block-Gibbs steps on every chain, batched."""
    v, h = chains.v, chains.h
    gauss = model.gaussian_mask
    for _ in range(k):
        p_h = cond_hidden_batch(model, v)
        h = (rng.random(p_h.shape) < p_h).astype(float)
        pre = model.visible_bias + h @ model.weights.T
        p_v = 0.5 * (1.0 + np.tanh(0.5 * pre))
        v = (rng.random(p_v.shape) < p_v).astype(float)
        if gauss.any():
            noise = rng.standard_normal(pre.shape)
            v = np.where(gauss, pre + noise, v)
    return PersistentChains(v, h)


def apply_update(model: RbmModel, positive: GradientEstimate,
                 negative: GradientEstimate, lr: float) -> RbmModel:
    """Ascent step on the log-likelihood; guards against divergence."""
    positive.check(model)
    negative.check(model)
    updated = copy_model(model)
    updated.weights += lr * (positive.dW - negative.dW)
    updated.hidden_bias += lr * (positive.db - negative.db)
    updated.visible_bias += lr * (positive.dc - negative.dc)
    for arr, name in ((updated.weights, "weights"),
                      (updated.hidden_bias, "hidden bias"),
                      (updated.visible_bias, "visible bias")):
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"non-finite {name} after update (lr={lr})")
        peak = np.abs(arr).max() if arr.size else 0.0
        if peak > PARAMETER_LIMIT:
            raise DivergenceError(
                f"{name} reached |{peak:.3g}| > {PARAMETER_LIMIT:g} (lr={lr}); "
                "reduce the learning rate")
    return updated


def pcd_update(model: RbmModel, batch: np.ndarray, chains: PersistentChains,
               lr: float, gibbs_k: int, rng: np.random.Generator):
    """One PCD step: advance the fantasy chains, then update parameters.

    Chains continue from their previous state and are never reset to
    the data. Returns the updated model and chains.
    """
    positive = grad_positive(model, batch)
    chains = advance_chains(model, chains, gibbs_k, rng)
    negative = grad_negative_from_samples(model, (chains.v, chains.h))
    return apply_update(model, positive, negative, lr), chains


class GibbsEstimator:
    """Owns the persistent chains for classical PCD training."""

    def __init__(self, model: RbmModel, n_chains: int, gibbs_k: int,
                 rng: np.random.Generator):
        self.gibbs_k = gibbs_k
        self.chains = init_chains(model, n_chains, rng)

    def negative_moments(self, model, rng) -> GradientEstimate:
        self.chains = advance_chains(model, self.chains, self.gibbs_k, rng)
        return grad_negative_from_samples(model, (self.chains.v, self.chains.h))


class SamplerEstimator:
    """Compiles the model per batch and samples the Ising problem."""

    def __init__(self, spec: SamplerNegative):
        self.spec = spec
        if spec.method == "annealer-mock":
            self.client = MockAnnealer(spec.anneal)
        elif spec.method == "annealer-replay":
            if not spec.replay_path:
                raise DomainError("annealer-replay needs a replay_path")
            self.client = ReplayAnnealer(spec.replay_path)
        elif spec.method == "simulated-anneal":
            self.client = None
        else:
            raise DomainError(f"unknown sampler method {spec.method!r}")

    def negative_moments(self, model, rng) -> GradientEstimate:
        problem = rbm_to_qubo(model, self.spec.expansion)
        ising = qubo_to_ising(problem)
        seed = int(rng.integers(_SEED_SPAN))
        if self.client is None:
            cfg = AnnealConfig(self.spec.num_reads, self.spec.anneal.sweeps,
                               self.spec.anneal.beta_initial,
                               self.spec.anneal.beta_final,
                               self.spec.anneal.interpolation, seed)
            samples = simulated_anneal(ising, cfg)
        else:
            samples = self.client.submit(ising, self.spec.num_reads, seed)
        v_mean, h_mean, vh_mean = estimate_moments(
            samples, problem, model.n_visible, model.n_hidden)
        return GradientEstimate(vh_mean, h_mean, v_mean)


class ExactEstimator:
    """Enumerated expectations; exact but only viable for tiny models."""

    def negative_moments(self, model, rng) -> GradientEstimate:
        v_mean, h_mean, vh_mean = exact_moments(model)
        return GradientEstimate(vh_mean, h_mean, v_mean)


def make_estimator(spec: NegativeSpec, model: RbmModel, config: TrainConfig,
                   rng: np.random.Generator):
    if isinstance(spec, GibbsNegative):
        return GibbsEstimator(model, config.batch_size, config.gibbs_k, rng)
    if isinstance(spec, SamplerNegative):
        return SamplerEstimator(spec)
    if isinstance(spec, ExactNegative):
        return ExactEstimator()
    raise DomainError(f"unknown negative-phase spec {spec!r}")


def train(model: RbmModel, dataset: np.ndarray, config: TrainConfig,
          eval_hook=None, estimator=None):
    """Mini-batch PCD training over ``config.epochs`` epochs.

    ``dataset`` rows are full visible vectors (features plus any label
    block). ``eval_hook(model, epoch)`` runs after each epoch and
    returns a :class:`MetricsReport`; its values land in the trace.
    Returns the final-epoch model and the list of epoch traces.
    Best-epoch selection is the caller's job.
    """
    dataset = np.asarray(dataset, dtype=float)
    if dataset.ndim != 2 or dataset.shape[0] == 0:
        raise DomainError("dataset must be a non-empty (n, n_visible) matrix")
    if dataset.shape[1] != model.n_visible:
        raise DimensionMismatch(
            f"dataset rows have {dataset.shape[1]} entries, "
            f"expected {model.n_visible}")
    rng = np.random.default_rng(config.seed)
    if estimator is None:
        estimator = make_estimator(config.negative, model, config, rng)
    model = copy_model(model)
    traces = []
    n = dataset.shape[0]
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        lr = lr_value(config.lr, epoch)
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for at in range(0, n, config.batch_size):
            batch = dataset[order[at:at + config.batch_size]]
            positive = grad_positive(model, batch)
            negative = estimator.negative_moments(model, rng)
            model = apply_update(model, positive, negative, lr)
        report = eval_hook(model, epoch) if eval_hook else None
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if report is None:
            report = MetricsReport.zero()
        traces.append(EpochTrace(epoch, report.accuracy, report.precision,
                                 report.recall, report.f1, lr, elapsed_ms))
    return model, traces


def traces_to_csv(traces, path):
    """One CSV row per epoch: epoch, the four metrics, lr, wall_time_ms."""
    lines = [",".join(TRACE_COLUMNS)]
    for t in traces:
        lines.append(",".join([
            str(t.epoch), repr(t.accuracy), repr(t.precision), repr(t.recall),
            repr(t.f1), repr(t.lr), repr(t.wall_time_ms)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def traces_to_json(traces, path):
    import json

    payload = [{col: getattr(t, col) for col in TRACE_COLUMNS} for t in traces]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_trace_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if lines[0] != ",".join(TRACE_COLUMNS):
        raise DomainError(f"{path}: unexpected trace header")
    traces = []
    for ln in lines[1:]:
        parts = ln.split(",")
        traces.append(EpochTrace(int(parts[0]), *map(float, parts[1:])))
    return traces
