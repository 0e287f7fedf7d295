"""RBM / GRBM model: energy, conditionals, and exact small-model oracles.

Units take values in {0, 1} in this layer; the spin encoding lives in
:mod:`annealrbm.qubo`. Gaussian visible units use the unit-variance
energy with a quadratic self-term ``(v - c)^2 / 2``, the only form whose
exact visible conditional is the identity-covariance normal used here.

Model files are JSON with a version tag; floats round-trip exactly via
``repr``-based JSON encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from itertools import product

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, DomainError, EnumerationCapExceeded

ENUMERATION_CAP = 24
GAUSSIAN_GRID_POINTS = 41
GAUSSIAN_GRID_RANGE = (-5.0, 5.0)

MODEL_FORMAT = "annealrbm-model/1"


class UnitKind(Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


def default_gaussian_grid() -> np.ndarray:
    """Quadrature grid used by the exact oracles for Gaussian units."""
    lo, hi = GAUSSIAN_GRID_RANGE
    return np.linspace(lo, hi, GAUSSIAN_GRID_POINTS)


@dataclass
class RbmModel:
    """Bipartite energy model with per-visible-unit kinds.

    ``weights`` is (n_visible, n_hidden); ``visible_bias`` and
    ``hidden_bias`` match the layer sizes. ``label_span`` is an optional
    ``(start, size)`` block of Bernoulli visible units holding a one-hot
    class label.
    """

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    kinds: tuple[UnitKind, ...]
    label_span: tuple[int, int] | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.visible_bias = np.asarray(self.visible_bias, dtype=float)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=float)
        self.kinds = tuple(self.kinds)
        self.validate()

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    @property
    def gaussian_mask(self) -> np.ndarray:
        return np.array([k is UnitKind.GAUSSIAN for k in self.kinds])

    @property
    def has_gaussian(self) -> bool:
        return any(k is UnitKind.GAUSSIAN for k in self.kinds)

    def validate(self):
        if self.weights.ndim != 2:
            raise DimensionMismatch("weights must be a 2-d matrix")
        nv, nh = self.weights.shape
        if self.visible_bias.shape != (nv,):
            raise DimensionMismatch(
                f"visible bias has shape {self.visible_bias.shape}, expected ({nv},)")
        if self.hidden_bias.shape != (nh,):
            raise DimensionMismatch(
                f"hidden bias has shape {self.hidden_bias.shape}, expected ({nh},)")
        if len(self.kinds) != nv:
            raise DimensionMismatch(
                f"{len(self.kinds)} unit kinds for {nv} visible units")
        for arr, name in ((self.weights, "weights"),
                          (self.visible_bias, "visible bias"),
                          (self.hidden_bias, "hidden bias")):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite entries")
        if self.label_span is not None:
            start, size = self.label_span
            if size < 2:
                raise DomainError("label block must have size >= 2")
            if start < 0 or start + size > nv:
                raise DimensionMismatch("label block exceeds the visible layer")
            for i in range(start, start + size):
                if self.kinds[i] is not UnitKind.BERNOULLI:
                    raise DomainError("label block units must be Bernoulli")


@dataclass
class Configuration:
    """One joint state: visible values ``v`` and binary hidden values ``h``."""

    v: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.h = np.asarray(self.h, dtype=float)


def initialize_model(kinds, n_hidden, seed, scale=1.0, visible_means=None,
                     label_span=None) -> RbmModel:
    """Fresh model: small uniform weights, zero hidden bias, data-mean visible bias."""
    kinds = tuple(kinds)
    nv = len(kinds)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-0.01, 0.01, size=(nv, n_hidden)) * scale
    if visible_means is None:
        visible_bias = np.zeros(nv)
    else:
        visible_bias = np.asarray(visible_means, dtype=float).copy()
    return RbmModel(weights, visible_bias, np.zeros(n_hidden), kinds, label_span)


def _check_configuration(model: RbmModel, cfg: Configuration):
    if cfg.v.shape != (model.n_visible,):
        raise DimensionMismatch(
            f"visible vector has shape {cfg.v.shape}, expected ({model.n_visible},)")
    if cfg.h.shape != (model.n_hidden,):
        raise DimensionMismatch(
            f"hidden vector has shape {cfg.h.shape}, expected ({model.n_hidden},)")
    bern = ~model.gaussian_mask
    if bern.any() and not np.isin(cfg.v[bern], (0.0, 1.0)).all():
        raise DomainError("Bernoulli visible entries must be 0 or 1")
    if not np.isin(cfg.h, (0.0, 1.0)).all():
        raise DomainError("hidden entries must be 0 or 1")


def _visible_self_energy(model: RbmModel, v: np.ndarray) -> float:
    """Visible-only energy terms: linear for Bernoulli, quadratic for Gaussian."""
    gauss = model.gaussian_mask
    bern = ~gauss
    e = -float(v[bern] @ model.visible_bias[bern])
    if gauss.any():
        d = v[gauss] - model.visible_bias[gauss]
        e += 0.5 * float(d @ d)
    return e


def energy(model: RbmModel, cfg: Configuration) -> float:
    """Joint energy of one configuration."""
    _check_configuration(model, cfg)
    e = -float(cfg.v @ model.weights @ cfg.h) - float(model.hidden_bias @ cfg.h)
    return e + _visible_self_energy(model, cfg.v)


def enumerate_binary(n: int) -> np.ndarray:
    """All {0,1}^n vectors; row r encodes r with unit i as bit i."""
    if n == 0:
        return np.zeros((1, 0))
    codes = np.arange(2 ** n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


def _visible_enumeration(model: RbmModel, grid=None):
    """All visible combinations and their quadrature weights.

    Bernoulli units range over {0, 1}; Gaussian units over the grid,
    with the grid cell width entering the weight once per Gaussian unit.
    """
    if grid is None:
        grid = default_gaussian_grid()
    grid = np.asarray(grid, dtype=float)
    axes = []
    for kind in model.kinds:
        axes.append((0.0, 1.0) if kind is UnitKind.BERNOULLI else tuple(grid))
    combos = np.array(list(product(*axes)), dtype=float)
    n_gauss = int(model.gaussian_mask.sum())
    cell = float(grid[1] - grid[0]) if len(grid) > 1 else 1.0
    weight = cell ** n_gauss
    return combos, weight


def _enumeration_guard(model: RbmModel):
    n_bernoulli = int((~model.gaussian_mask).sum()) + model.n_hidden
    if n_bernoulli > ENUMERATION_CAP:
        raise EnumerationCapExceeded(
            f"{n_bernoulli} Bernoulli units exceed the enumeration cap of "
            f"{ENUMERATION_CAP}")


def _energy_table(model: RbmModel, v_all: np.ndarray) -> np.ndarray:
    """Energies of every (visible row, hidden configuration) pair."""
    h_all = enumerate_binary(model.n_hidden)
    cross = -(v_all @ model.weights) @ h_all.T
    hidden_lin = -(h_all @ model.hidden_bias)
    gauss = model.gaussian_mask
    bern = ~gauss
    vis = -(v_all[:, bern] @ model.visible_bias[bern])
    if gauss.any():
        d = v_all[:, gauss] - model.visible_bias[gauss]
        vis = vis + 0.5 * (d * d).sum(axis=1)
    return cross + vis[:, None] + hidden_lin[None, :]


def partition_exact(model: RbmModel, grid=None) -> float:
    """Normalizing constant by direct enumeration (Gaussian units on a grid)."""
    _enumeration_guard(model)
    v_all, weight = _visible_enumeration(model, grid)
    table = _energy_table(model, v_all)
    return float(weight * np.exp(-table).sum())


def joint_prob_exact(model: RbmModel, cfg: Configuration, grid=None) -> float:
    """exp(-E(cfg)) / Z for enumerable models."""
    z = partition_exact(model, grid)
    return float(np.exp(-energy(model, cfg)) / z)


def exact_log_likelihood(model: RbmModel, data, grid=None) -> float:
    """Negative log-likelihood of the visible rows under the exact model."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    if data.size == 0:
        raise DomainError("log-likelihood of an empty dataset is undefined")
    _enumeration_guard(model)
    if data.shape[1] != model.n_visible:
        raise DimensionMismatch(
            f"data rows have {data.shape[1]} entries, expected {model.n_visible}")
    z = partition_exact(model, grid)
    table = _energy_table(model, data)
    m = (-table).max(axis=1)
    log_numerators = m + np.log(np.exp(-table - m[:, None]).sum(axis=1))
    return float(-(log_numerators - np.log(z)).sum())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form saturates cleanly for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def cond_hidden(model: RbmModel, v: np.ndarray) -> np.ndarray:
    """p(h_j = 1 | v) for every hidden unit."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.n_visible,):
        raise DimensionMismatch(
            f"visible vector has shape {v.shape}, expected ({model.n_visible},)")
    return _sigmoid(model.hidden_bias + v @ model.weights)


def cond_hidden_batch(model: RbmModel, v_rows: np.ndarray) -> np.ndarray:
    """Row-wise hidden activation probabilities for a (n, n_visible) matrix."""
    return _sigmoid(model.hidden_bias + v_rows @ model.weights)


def cond_visible(model: RbmModel, h: np.ndarray) -> np.ndarray:
    """Per-unit visible parameters given a binary hidden vector.

    Bernoulli entries hold activation probabilities; Gaussian entries
    hold the conditional mean (the variance is fixed at one).
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (model.n_hidden,):
        raise DimensionMismatch(
            f"hidden vector has shape {h.shape}, expected ({model.n_hidden},)")
    if not np.isin(h, (0.0, 1.0)).all():
        raise DomainError("hidden entries must be 0 or 1")
    pre = model.visible_bias + model.weights @ h
    gauss = model.gaussian_mask
    params = _sigmoid(pre)
    if gauss.any():
        params = np.where(gauss, pre, params)
    return params


def gibbs_step(model: RbmModel, cfg: Configuration,
               rng: np.random.Generator) -> Configuration:
    """One block-Gibbs step: resample h given v, then v given the new h.

    Consumes ``rng.random(n_hidden)`` followed by ``rng.random(n_visible)``,
    plus ``rng.standard_normal(n_visible)`` when Gaussian units exist.
    """
    _check_configuration(model, cfg)
    u_h = rng.random(model.n_hidden)
    h_new = (u_h < cond_hidden(model, cfg.v)).astype(float)
    params = cond_visible(model, h_new)
    u_v = rng.random(model.n_visible)
    v_new = (u_v < params).astype(float)
    gauss = model.gaussian_mask
    if gauss.any():
        noise = rng.standard_normal(model.n_visible)
        v_new = np.where(gauss, params + noise, v_new)
    return Configuration(v_new, h_new)


def gibbs_chain(model: RbmModel, cfg: Configuration, steps: int,
                rng: np.random.Generator) -> np.ndarray:
    """Visited (v, h) states of a long chain on an all-Bernoulli model.

    Returns a (steps, n_visible + n_hidden) int8 array. The per-step
    uniforms are pre-drawn as ``rng.random((steps, n_hidden))`` then
    ``rng.random((steps, n_visible))`` and fed to the jitted kernel.
    """
    if model.has_gaussian:
        raise DomainError("gibbs_chain supports all-Bernoulli models only")
    _check_configuration(model, cfg)
    if steps < 1:
        raise DomainError("steps must be >= 1")
    u_h = rng.random((steps, model.n_hidden))
    u_v = rng.random((steps, model.n_visible))
    states = np.empty((steps, model.n_visible + model.n_hidden), dtype=np.int8)
    _kernels.gibbs_chain(model.weights, model.hidden_bias, model.visible_bias,
                         cfg.v, u_h, u_v, states)
    return states


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def free_energy(model: RbmModel, v: np.ndarray) -> float:
    """F(v) = -log sum_h exp(-E(v, h)), via softplus over hidden units."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.n_visible,):
        raise DimensionMismatch(
            f"visible vector has shape {v.shape}, expected ({model.n_visible},)")
    pre = model.hidden_bias + v @ model.weights
    return _visible_self_energy(model, v) - float(_softplus(pre).sum())


def free_energy_batch(model: RbmModel, v_rows: np.ndarray) -> np.ndarray:
    """Free energies of many visible rows at once."""
    v_rows = np.asarray(v_rows, dtype=float)
    if v_rows.ndim != 2 or v_rows.shape[1] != model.n_visible:
        raise DimensionMismatch(
            f"rows have shape {v_rows.shape}, expected (n, {model.n_visible})")
    pre = model.hidden_bias + v_rows @ model.weights
    gauss = model.gaussian_mask
    bern = ~gauss
    vis = -(v_rows[:, bern] @ model.visible_bias[bern])
    if gauss.any():
        d = v_rows[:, gauss] - model.visible_bias[gauss]
        vis = vis + 0.5 * (d * d).sum(axis=1)
    return vis - _softplus(pre).sum(axis=1)


def exact_moments(model: RbmModel, grid=None):
    """Model expectations of v, h, and v h^T by direct enumeration."""
    _enumeration_guard(model)
    v_all, weight = _visible_enumeration(model, grid)
    h_all = enumerate_binary(model.n_hidden)
    table = np.exp(-_energy_table(model, v_all)) * weight
    z = table.sum()
    p_v = table.sum(axis=1) / z
    p_h = table.sum(axis=0) / z
    v_mean = p_v @ v_all
    h_mean = p_h @ h_all
    vh_mean = v_all.T @ (table / z) @ h_all
    return v_mean, h_mean, vh_mean


def save_model(model: RbmModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> RbmModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_to_dict(model: RbmModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "n_visible": model.n_visible,
        "n_hidden": model.n_hidden,
        "kinds": [k.value for k in model.kinds],
        "label_span": list(model.label_span) if model.label_span else None,
        "weights": model.weights.tolist(),
        "visible_bias": model.visible_bias.tolist(),
        "hidden_bias": model.hidden_bias.tolist(),
    }


def model_from_dict(payload: dict) -> RbmModel:
    if payload.get("format") != MODEL_FORMAT:
        raise DomainError(f"unsupported model format: {payload.get('format')!r}")
    span = payload.get("label_span")
    return RbmModel(
        np.array(payload["weights"], dtype=float),
        np.array(payload["visible_bias"], dtype=float),
        np.array(payload["hidden_bias"], dtype=float),
        tuple(UnitKind(k) for k in payload["kinds"]),
        tuple(span) if span else None,
    )


def copy_model(model: RbmModel) -> RbmModel:
    return replace(model, weights=model.weights.copy(),
                   visible_bias=model.visible_bias.copy(),
                   hidden_bias=model.hidden_bias.copy())
