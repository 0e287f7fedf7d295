"""Compile the RBM energy into QUBO form and convert QUBO to Ising.

Variable order in a compiled problem: visible units first (a Gaussian
unit contributes ``bit_count`` consecutive variables, least significant
bit first), then hidden units. The Q matrix follows the construction
rules for x = (v, y, h): biases on the diagonal, weights off-diagonal,
symmetric, and zero coupling between variables of the same role. Bits
of one Gaussian unit are the lone documented exception: its quadratic
self-term produces couplings between its own bits, which encode a
single logical unit rather than two units of the same type.

Problem files are line-oriented text::

    # annealrbm qubo v1
    n 3
    offset 0.0
    var 0 visible 0 0        (index, role, unit, bit; optional)
    expand 0 4 -4.0 0.5333.. (unit, bits, offset, scale; optional)
    Q 0 0 -0.5               (row, col, value; col >= row)

    # annealrbm ising v1
    n 3
    offset 0.25
    h 0 -0.5
    J 0 1 0.25               (i < j)

Floats are written with ``repr`` and round-trip exactly.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .model import RbmModel, UnitKind

QUBO_HEADER = "# annealrbm qubo v1"
ISING_HEADER = "# annealrbm ising v1"


class ClampWarning(UserWarning):
    """A value fell outside a binary expansion's representable range."""


@dataclass(frozen=True)
class BinaryExpansion:
    """Fixed-point code for one continuous unit: offset + scale * sum 2^k b_k."""

    bit_count: int
    offset: float
    scale: float

    def __post_init__(self):
        if self.bit_count < 1:
            raise DomainError("bit_count must be >= 1")
        if self.scale <= 0:
            raise DomainError("scale must be positive")

    @property
    def max_code(self) -> int:
        return 2 ** self.bit_count - 1

    @property
    def max_value(self) -> float:
        return self.offset + self.scale * self.max_code


# z-scored data rarely leaves [-4, 4]; 4 bits give 16 levels over that range
DEFAULT_EXPANSION = BinaryExpansion(4, -4.0, 8.0 / 15.0)


def binary_expand(value: float, exp: BinaryExpansion) -> np.ndarray:
    """Bit pattern whose decoded value is nearest the input (half rounds up).

    Out-of-range values clamp to the nearest endpoint and raise a
    :class:`ClampWarning`.
    """
    code = int(np.floor((value - exp.offset) / exp.scale + 0.5))
    if code < 0 or code > exp.max_code:
        warnings.warn(
            f"value {value} outside [{exp.offset}, {exp.max_value}]; clamped",
            ClampWarning, stacklevel=2)
        code = min(max(code, 0), exp.max_code)
    return ((code >> np.arange(exp.bit_count)) & 1).astype(np.int8)


def binary_collapse(bits, exp: BinaryExpansion) -> float:
    """Decode a bit vector; exact inverse of :func:`binary_expand` on codes."""
    bits = np.asarray(bits)
    if bits.shape != (exp.bit_count,):
        raise DimensionMismatch(
            f"expected {exp.bit_count} bits, got shape {bits.shape}")
    return float(exp.offset + exp.scale * (bits * 2 ** np.arange(exp.bit_count)).sum())


@dataclass(frozen=True)
class VarInfo:
    """Where one QUBO variable came from."""

    role: str  # "visible" | "label" | "hidden"
    unit: int  # visible or hidden unit index in the model
    bit: int   # bit position within a Gaussian expansion, else 0


@dataclass
class QuboProblem:
    """Symmetric coefficient matrix plus bookkeeping for decoding."""

    matrix: np.ndarray
    constant_offset: float = 0.0
    index_map: tuple[VarInfo, ...] | None = None
    expansions: dict[int, BinaryExpansion] | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch("Q must be square")
        if not np.array_equal(self.matrix, self.matrix.T):
            raise DomainError("Q must be symmetric")
        if self.index_map is not None and len(self.index_map) != self.n:
            raise DimensionMismatch("index map length must equal n")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass
class IsingProblem:
    """Offset C, fields h, and strictly upper-triangular couplings J."""

    offset: float
    fields: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=float)
        self.couplings = np.asarray(self.couplings, dtype=float)
        n = self.fields.shape[0]
        if self.couplings.shape != (n, n):
            raise DimensionMismatch("couplings must be (n, n)")
        if np.tril(self.couplings).any():
            raise DomainError("couplings must be strictly upper-triangular")
        if not (np.isfinite(self.fields).all()
                and np.isfinite(self.couplings).all()
                and np.isfinite(self.offset)):
            raise DomainError("Ising coefficients must be finite")

    @property
    def n(self) -> int:
        return self.fields.shape[0]


def rbm_to_qubo(model: RbmModel, expansions=None) -> QuboProblem:
    """Compile the model energy into a QUBO over x = (v, y, h).

    ``expansions`` maps Gaussian visible unit index to its
    :class:`BinaryExpansion`; a single expansion applies to every
    Gaussian unit; ``None`` uses :data:`DEFAULT_EXPANSION`. For every
    expanded bit vector x, the objective plus offset equals the model
    energy at the decoded configuration.
    """
    if expansions is None:
        expansions = DEFAULT_EXPANSION
    if isinstance(expansions, BinaryExpansion):
        expansions = {i: expansions for i, k in enumerate(model.kinds)
                      if k is UnitKind.GAUSSIAN}

    index_map: list[VarInfo] = []
    visible_vars: list[list[int]] = []
    label_units = set()
    if model.label_span is not None:
        start, size = model.label_span
        label_units = set(range(start, start + size))
    for i, kind in enumerate(model.kinds):
        role = "label" if i in label_units else "visible"
        if kind is UnitKind.BERNOULLI:
            visible_vars.append([len(index_map)])
            index_map.append(VarInfo(role, i, 0))
        else:
            exp = expansions.get(i)
            if exp is None:
                raise DomainError(f"no binary expansion for Gaussian unit {i}")
            cols = []
            for k in range(exp.bit_count):
                cols.append(len(index_map))
                index_map.append(VarInfo(role, i, k))
            visible_vars.append(cols)
    hidden_vars = []
    for j in range(model.n_hidden):
        hidden_vars.append(len(index_map))
        index_map.append(VarInfo("hidden", j, 0))

    n = len(index_map)
    q = np.zeros((n, n))
    offset = 0.0

    def add_pair(p, r, w):
        q[p, r] += 0.5 * w
        q[r, p] += 0.5 * w

    for j, hv in enumerate(hidden_vars):
        q[hv, hv] += -model.hidden_bias[j]
    for i, kind in enumerate(model.kinds):
        cols = visible_vars[i]
        if kind is UnitKind.BERNOULLI:
            p = cols[0]
            q[p, p] += -model.visible_bias[i]
            for j, hv in enumerate(hidden_vars):
                add_pair(p, hv, -model.weights[i, j])
        else:
            exp = expansions[i]
            powers = 2.0 ** np.arange(exp.bit_count)
            for j, hv in enumerate(hidden_vars):
                # -v_i W_ij h_j with v_i = offset + scale * sum 2^k b_k
                q[hv, hv] += -exp.offset * model.weights[i, j]
                for k, p in enumerate(cols):
                    add_pair(p, hv, -exp.scale * powers[k] * model.weights[i, j])
            # (v_i - c_i)^2 / 2 expanded over the bits
            d = exp.offset - model.visible_bias[i]
            offset += 0.5 * d * d
            for k, p in enumerate(cols):
                q[p, p] += d * exp.scale * powers[k] + 0.5 * (exp.scale * powers[k]) ** 2
                for l in range(k + 1, exp.bit_count):
                    add_pair(p, cols[l], exp.scale ** 2 * powers[k] * powers[l])

    gauss_exps = {i: expansions[i] for i, k in enumerate(model.kinds)
                  if k is UnitKind.GAUSSIAN}
    return QuboProblem(q, offset, tuple(index_map), gauss_exps or None)


def qubo_objective(problem: QuboProblem, x) -> float:
    """sum_i Q_ii x_i + sum_{i<j} (Q_ij + Q_ji) x_i x_j + offset."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise DimensionMismatch(
            f"x has shape {x.shape}, expected ({problem.n},)")
    if not np.isin(x, (0.0, 1.0)).all():
        raise DomainError("QUBO variables must be 0 or 1")
    # x binary makes x_i^2 = x_i, so the quadratic form covers both sums
    return float(x @ problem.matrix @ x + problem.constant_offset)


def split_expanded(problem: QuboProblem, bits: np.ndarray,
                   n_visible: int, n_hidden: int):
    """Map QUBO-space bit rows back to model-space (V, H) matrices.

    ``bits`` is (k, n). Gaussian bit groups collapse to their decoded
    real values; label units land inside the visible block.
    """
    if problem.index_map is None:
        raise DomainError("problem has no index map to decode with")
    bits = np.asarray(bits, dtype=float)
    if bits.ndim != 2 or bits.shape[1] != problem.n:
        raise DimensionMismatch(
            f"bit rows have shape {bits.shape}, expected (k, {problem.n})")
    v = np.zeros((bits.shape[0], n_visible))
    h = np.zeros((bits.shape[0], n_hidden))
    expansions = problem.expansions or {}
    for idx, info in enumerate(problem.index_map):
        if info.role == "hidden":
            h[:, info.unit] = bits[:, idx]
        elif info.unit in expansions:
            exp = expansions[info.unit]
            v[:, info.unit] += exp.scale * 2.0 ** info.bit * bits[:, idx]
        else:
            v[:, info.unit] = bits[:, idx]
    for unit, exp in expansions.items():
        v[:, unit] += exp.offset
    return v, h


def qubo_to_ising(problem: QuboProblem) -> IsingProblem:
    """Exact change of variables x_i = (1 + s_i) / 2."""
    q = problem.matrix
    a = q.diagonal().copy()
    pair = q + q.T
    np.fill_diagonal(pair, 0.0)  # pair[i, j] = Q_ij + Q_ji for i != j
    upper = np.triu(pair, 1)
    fields = a / 2.0 + pair.sum(axis=1) / 4.0
    offset = problem.constant_offset + a.sum() / 2.0 + upper.sum() / 4.0
    return IsingProblem(offset, fields, upper / 4.0)


def ising_energy(problem: IsingProblem, s) -> float:
    """C + sum h_i s_i + sum_{i<j} J_ij s_i s_j."""
    s = np.asarray(s, dtype=float)
    if s.shape != (problem.n,):
        raise DimensionMismatch(
            f"s has shape {s.shape}, expected ({problem.n},)")
    if not np.isin(s, (-1.0, 1.0)).all():
        raise DomainError("spins must be -1 or +1")
    return float(problem.offset + problem.fields @ s + s @ problem.couplings @ s)


def ising_energies(problem: IsingProblem, spins: np.ndarray) -> np.ndarray:
    """Vectorized Ising energies of many spin rows."""
    s = np.asarray(spins, dtype=float)
    return (problem.offset + s @ problem.fields
            + np.einsum("ki,ij,kj->k", s, problem.couplings, s))


def _fmt(x: float) -> str:
    return repr(float(x))


def ising_to_text(problem: IsingProblem) -> str:
    lines = [ISING_HEADER, f"n {problem.n}", f"offset {_fmt(problem.offset)}"]
    for i, hi in enumerate(problem.fields):
        if hi != 0.0:
            lines.append(f"h {i} {_fmt(hi)}")
    rows, cols = np.nonzero(problem.couplings)
    for i, j in zip(rows, cols):
        lines.append(f"J {i} {j} {_fmt(problem.couplings[i, j])}")
    return "\n".join(lines) + "\n"


def ising_from_text(text: str) -> IsingProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != ISING_HEADER:
        raise DomainError("not an annealrbm ising file")
    n = None
    offset = 0.0
    entries = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "n":
            n = int(parts[1])
        elif parts[0] == "offset":
            offset = float(parts[1])
        elif parts[0] == "h":
            entries.append(("h", int(parts[1]), 0, float(parts[2])))
        elif parts[0] == "J":
            entries.append(("J", int(parts[1]), int(parts[2]), float(parts[3])))
        else:
            raise DomainError(f"unrecognized ising line: {ln!r}")
    if n is None:
        raise DomainError("ising file missing n")
    fields = np.zeros(n)
    couplings = np.zeros((n, n))
    for tag, i, j, val in entries:
        if tag == "h":
            fields[i] = val
        else:
            couplings[i, j] = val
    return IsingProblem(offset, fields, couplings)


def qubo_to_text(problem: QuboProblem) -> str:
    lines = [QUBO_HEADER, f"n {problem.n}",
             f"offset {_fmt(problem.constant_offset)}"]
    if problem.index_map is not None:
        for idx, info in enumerate(problem.index_map):
            lines.append(f"var {idx} {info.role} {info.unit} {info.bit}")
    if problem.expansions:
        for unit in sorted(problem.expansions):
            e = problem.expansions[unit]
            lines.append(
                f"expand {unit} {e.bit_count} {_fmt(e.offset)} {_fmt(e.scale)}")
    rows, cols = np.nonzero(np.triu(problem.matrix))
    for i, j in zip(rows, cols):
        lines.append(f"Q {i} {j} {_fmt(problem.matrix[i, j])}")
    return "\n".join(lines) + "\n"


def qubo_from_text(text: str) -> QuboProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != QUBO_HEADER:
        raise DomainError("not an annealrbm qubo file")
    n = None
    offset = 0.0
    var_lines = {}
    expansions = {}
    q_entries = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "n":
            n = int(parts[1])
        elif parts[0] == "offset":
            offset = float(parts[1])
        elif parts[0] == "var":
            var_lines[int(parts[1])] = VarInfo(parts[2], int(parts[3]),
                                               int(parts[4]))
        elif parts[0] == "expand":
            expansions[int(parts[1])] = BinaryExpansion(
                int(parts[2]), float(parts[3]), float(parts[4]))
        elif parts[0] == "Q":
            q_entries.append((int(parts[1]), int(parts[2]), float(parts[3])))
        else:
            raise DomainError(f"unrecognized qubo line: {ln!r}")
    if n is None:
        raise DomainError("qubo file missing n")
    matrix = np.zeros((n, n))
    for i, j, val in q_entries:
        matrix[i, j] = val
        matrix[j, i] = val
    index_map = None
    if var_lines:
        index_map = tuple(var_lines[i] for i in range(n))
    return QuboProblem(matrix, offset, index_map, expansions or None)


def write_ising_file(problem: IsingProblem, path):
    with open(path, "w") as fh:
        fh.write(ising_to_text(problem))


def read_ising_file(path) -> IsingProblem:
    with open(path) as fh:
        return ising_from_text(fh.read())


def write_qubo_file(problem: QuboProblem, path):
    with open(path, "w") as fh:
        fh.write(qubo_to_text(problem))


def read_qubo_file(path) -> QuboProblem:
    with open(path) as fh:
        return qubo_from_text(fh.read())


def ising_problem_hash(problem: IsingProblem) -> str:
    """Stable content hash used to pin recorded sample sets to a problem."""
    return hashlib.sha256(ising_to_text(problem).encode()).hexdigest()


def check_structure(problem: QuboProblem):
    """Assert the Q-matrix construction rules on a compiled problem.

    Symmetry, diagonal-only biases, and zero coupling between distinct
    units of the same role (bits of one Gaussian unit are exempt).
    Raises :class:`DomainError` on violation.
    """
    if problem.index_map is None:
        raise DomainError("structure check requires an index map")
    q = problem.matrix
    if not np.array_equal(q, q.T):
        raise DomainError("Q is not symmetric")
    for i in range(problem.n):
        for j in range(i + 1, problem.n):
            a, b = problem.index_map[i], problem.index_map[j]
            same_role = (a.role == b.role) or (
                {a.role, b.role} <= {"visible", "label"})
            same_unit = a.role == b.role and a.unit == b.unit
            if same_role and not same_unit and q[i, j] != 0.0:
                raise DomainError(
                    f"coupling between same-role variables {i} and {j}")
