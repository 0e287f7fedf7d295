"""Sample sets, exact Boltzmann enumeration, simulated annealing, clients.

A SampleSet is the unit of exchange between samplers and the trainer: a
multiset of configurations with read counts and energies. Sample files
are line-oriented text::

    # annealrbm samples v1
    problem_hash <hex or ->
    n 3
    space ising
    total_reads 100
    beta_effective 1.0
    source simulated-anneal
    records 2
    ++- 63 -1.5
    --+ 37 -0.5

Configurations are encoded as '+'/'-' characters in ising space and
'0'/'1' in qubo space; model-space rows are space-separated floats.

Reads are independent: read r of a run seeded with ``seed`` draws from
``numpy.random.default_rng([seed, r])``, so results do not depend on
scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (ContractViolation, DomainError, EnumerationCapExceeded,
                     ReplayIntegrityError)
from .qubo import IsingProblem, QuboProblem, ising_energies, ising_problem_hash

SAMPLES_HEADER = "# annealrbm samples v1"
BOLTZMANN_ENUMERATION_CAP = 20
ENERGY_TOLERANCE = 1e-9


@dataclass
class SampleSet:
    """Configurations with read counts, energies, and sampling metadata."""

    configurations: np.ndarray  # (k, n) float64; spins, bits, or model values
    read_counts: np.ndarray     # (k,) positive ints
    energies: np.ndarray        # (k,)
    space: str                  # "ising" | "qubo" | "model"
    beta_effective: float
    source: str
    problem_hash: str | None = None

    def __post_init__(self):
        self.configurations = np.asarray(self.configurations, dtype=float)
        self.read_counts = np.asarray(self.read_counts, dtype=np.int64)
        self.energies = np.asarray(self.energies, dtype=float)
        if self.configurations.ndim != 2:
            raise DomainError("configurations must be a (k, n) matrix")
        k = self.configurations.shape[0]
        if self.read_counts.shape != (k,) or self.energies.shape != (k,):
            raise DomainError("read counts and energies must match record count")
        if k and self.read_counts.min() < 1:
            raise DomainError("read counts must be >= 1")
        if self.space not in ("ising", "qubo", "model"):
            raise DomainError(f"unknown sample space {self.space!r}")

    @property
    def n(self) -> int:
        return self.configurations.shape[1]

    @property
    def total_reads(self) -> int:
        return int(self.read_counts.sum())


@dataclass(frozen=True)
class AnnealConfig:
    """Simulated-annealing run settings."""

    num_reads: int = 100
    sweeps: int = 1000
    beta_initial: float = 0.1
    beta_final: float = 1.0
    interpolation: str = "linear"
    seed: int = 0

    def __post_init__(self):
        if self.num_reads < 1:
            raise DomainError("num_reads must be >= 1")
        if self.sweeps < 1:
            raise DomainError("sweeps must be >= 1")
        if not 0 < self.beta_initial <= self.beta_final:
            raise DomainError("need 0 < beta_initial <= beta_final")
        if self.interpolation not in ("linear", "geometric"):
            raise DomainError(f"unknown interpolation {self.interpolation!r}")


def beta_schedule(cfg: AnnealConfig) -> np.ndarray:
    """Per-sweep inverse temperatures from initial to final inclusive."""
    if cfg.sweeps == 1:
        return np.array([cfg.beta_final])
    t = np.linspace(0.0, 1.0, cfg.sweeps)
    if cfg.interpolation == "linear":
        return cfg.beta_initial + (cfg.beta_final - cfg.beta_initial) * t
    return cfg.beta_initial * (cfg.beta_final / cfg.beta_initial) ** t


def enumerate_spins(n: int) -> np.ndarray:
    """All 2^n spin vectors; row r maps bit i of r to spin i via 2x-1."""
    codes = np.arange(2 ** n, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


def spin_index(spins: np.ndarray) -> np.ndarray:
    """Row index of spin vectors in the :func:`enumerate_spins` ordering."""
    bits = ((np.asarray(spins) + 1) // 2).astype(np.int64)
    return bits @ (1 << np.arange(bits.shape[-1], dtype=np.int64))


def boltzmann_exact(problem: IsingProblem, beta: float,
                    cap: int = BOLTZMANN_ENUMERATION_CAP):
    """Exact distribution P(s) = exp(-beta H(s)) / Z over all spin vectors.

    Returns ``(configurations, probabilities)`` with rows ordered as in
    :func:`enumerate_spins`. This is the fidelity oracle for every
    sampler test.
    """
    if problem.n > cap:
        raise EnumerationCapExceeded(
            f"{problem.n} spins exceed the enumeration cap of {cap}")
    if beta <= 0:
        raise DomainError("beta must be positive")
    spins = enumerate_spins(problem.n)
    energies = ising_energies(problem, spins)
    logw = -beta * energies
    logw -= logw.max()
    w = np.exp(logw)
    return spins, w / w.sum()


def simulated_anneal(problem: IsingProblem, cfg: AnnealConfig) -> SampleSet:
    """num_reads independent anneals; final states recorded as a SampleSet.

    Each read starts from uniform spins and performs ``cfg.sweeps`` full
    Metropolis sweeps while beta follows the schedule. Identical final
    configurations merge into one record (lexicographic order), which
    keeps the result independent of read scheduling.
    """
    betas = beta_schedule(cfg)
    full = problem.couplings + problem.couplings.T
    n = problem.n
    finals = np.empty((cfg.num_reads, n), dtype=np.int8)
    for r in range(cfg.num_reads):
        rng = np.random.default_rng([cfg.seed, r])
        init_u = rng.random(n)
        accept_u = rng.random((cfg.sweeps, n))
        _kernels.anneal_read(problem.fields, full, betas, init_u, accept_u,
                             finals[r])
    unique, counts = np.unique(finals, axis=0, return_counts=True)
    energies = ising_energies(problem, unique)
    return SampleSet(unique.astype(float), counts, energies, "ising",
                     cfg.beta_final, "simulated-anneal",
                     ising_problem_hash(problem))


class AnnealerClient:
    """Uniform sampler interface; the trainer only sees ``submit``."""

    def submit(self, problem: IsingProblem, num_reads: int,
               seed: int | None = None) -> SampleSet:
        raise NotImplementedError


class MockAnnealer(AnnealerClient):
    """Stands in for hardware by delegating to simulated annealing."""

    def __init__(self, config: AnnealConfig | None = None):
        self.config = config or AnnealConfig()

    def submit(self, problem, num_reads, seed=None):
        cfg = replace(self.config, num_reads=num_reads,
                      seed=self.config.seed if seed is None else seed)
        return simulated_anneal(problem, cfg)


class ReplayAnnealer(AnnealerClient):
    """Serves a recorded SampleSet, validating it against the problem.

    Any mismatch (problem hash, stored energies, read count) raises
    :class:`ReplayIntegrityError`; a recording is never silently
    substituted for a different problem.
    """

    def __init__(self, path):
        self.path = Path(path)

    def submit(self, problem, num_reads, seed=None):
        samples = read_sample_set(self.path)
        expected = ising_problem_hash(problem)
        if samples.problem_hash != expected:
            raise ReplayIntegrityError(
                f"{self.path}: recorded for problem {samples.problem_hash}, "
                f"submitted problem is {expected}")
        if samples.space != "ising" or samples.n != problem.n:
            raise ReplayIntegrityError(
                f"{self.path}: sample space/size does not match the problem")
        recomputed = ising_energies(problem, samples.configurations)
        drift = np.abs(recomputed - samples.energies).max() if samples.energies.size else 0.0
        if drift > ENERGY_TOLERANCE:
            raise ReplayIntegrityError(
                f"{self.path}: stored energies off by {drift:.3g}")
        if samples.total_reads != num_reads:
            raise ReplayIntegrityError(
                f"{self.path}: has {samples.total_reads} reads, "
                f"{num_reads} requested")
        return samples


def annealer_submit(client: AnnealerClient, problem: IsingProblem,
                    num_reads: int, seed: int | None = None) -> SampleSet:
    return client.submit(problem, num_reads, seed)


def moments_from_bits(bits: np.ndarray, weights: np.ndarray,
                      problem: QuboProblem, n_visible: int, n_hidden: int):
    """Weighted model-space moments of QUBO-space bit rows."""
    from .qubo import split_expanded

    v, h = split_expanded(problem, bits, n_visible, n_hidden)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise DomainError("weights must have positive total")
    w = weights / total
    v_mean = w @ v
    h_mean = w @ h
    vh_mean = (v * w[:, None]).T @ h
    return v_mean, h_mean, vh_mean


def estimate_moments(samples: SampleSet, problem: QuboProblem,
                     n_visible: int, n_hidden: int):
    """Read-weighted means of v, h, and v h^T from annealer samples.

    Spins map to bits via (s + 1) / 2; Gaussian bit groups collapse to
    their decoded values; label units stay inside the visible block.
    """
    if samples.space == "model":
        raise ContractViolation(
            "samples are already in model space; take means directly")
    if samples.n != problem.n:
        raise ContractViolation(
            f"samples over {samples.n} variables, problem has {problem.n}")
    if samples.configurations.shape[0] == 0:
        raise DomainError("empty sample set")
    bits = samples.configurations
    if samples.space == "ising":
        bits = (bits + 1.0) / 2.0
    return moments_from_bits(bits, samples.read_counts.astype(float),
                             problem, n_visible, n_hidden)


def _encode_row(row: np.ndarray, space: str) -> str:
    if space == "ising":
        return "".join("+" if s > 0 else "-" for s in row)
    if space == "qubo":
        return "".join("1" if b > 0.5 else "0" for b in row)
    return " ".join(repr(float(x)) for x in row)


def _decode_row(text: str, space: str) -> np.ndarray:
    if space == "ising":
        return np.array([1.0 if ch == "+" else -1.0 for ch in text])
    if space == "qubo":
        return np.array([1.0 if ch == "1" else 0.0 for ch in text])
    return np.array([float(tok) for tok in text.split()])


def write_sample_set(samples: SampleSet, path):
    lines = [
        SAMPLES_HEADER,
        f"problem_hash {samples.problem_hash or '-'}",
        f"n {samples.n}",
        f"space {samples.space}",
        f"total_reads {samples.total_reads}",
        f"beta_effective {repr(float(samples.beta_effective))}",
        f"source {samples.source}",
        f"records {samples.configurations.shape[0]}",
    ]
    for row, count, e in zip(samples.configurations, samples.read_counts,
                             samples.energies):
        cfg = _encode_row(row, samples.space)
        if samples.space == "model":
            lines.append(f"{count} {repr(float(e))} {cfg}")
        else:
            lines.append(f"{cfg} {count} {repr(float(e))}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sample_set(path) -> SampleSet:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != SAMPLES_HEADER:
        raise DomainError(f"{path}: not an annealrbm samples file")
    header = {}
    body_at = None
    for i, ln in enumerate(lines[1:], start=1):
        key, _, value = ln.partition(" ")
        header[key] = value
        if key == "records":
            body_at = i + 1
            break
    if body_at is None:
        raise DomainError(f"{path}: missing records header")
    n = int(header["n"])
    space = header["space"]
    k = int(header["records"])
    configs = np.zeros((k, n))
    counts = np.zeros(k, dtype=np.int64)
    energies = np.zeros(k)
    rows = [ln for ln in lines[body_at:] if ln.strip()]
    if len(rows) != k:
        raise DomainError(f"{path}: expected {k} records, found {len(rows)}")
    for r, ln in enumerate(rows):
        if space == "model":
            count_s, energy_s, cfg_s = ln.split(" ", 2)
        else:
            cfg_s, count_s, energy_s = ln.split()
        configs[r] = _decode_row(cfg_s, space)
        counts[r] = int(count_s)
        energies[r] = float(energy_s)
    phash = header.get("problem_hash", "-")
    samples = SampleSet(configs, counts, energies, space,
                        float(header["beta_effective"]), header["source"],
                        None if phash == "-" else phash)
    if samples.total_reads != int(header["total_reads"]):
        raise DomainError(f"{path}: read counts do not sum to total_reads")
    return samples
