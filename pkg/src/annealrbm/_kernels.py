"""Hot inner loops: Metropolis anneal reads and block-Gibbs chains.

The loops below are written in nopython-compatible style and compiled
with numba's ``@njit`` when available. Setting the environment variable
``ANNEALRBM_DISABLE_NUMBA=1`` (or any value other than ``0``) selects
the pure-Python fallback, which runs the very same functions
undecorated, so both backends produce bit-identical results. The
``benchmarks/bench_kernels.py`` script compares the two paths.
"""

import math
import os

import numpy as np

DISABLE_ENV_VAR = "ANNEALRBM_DISABLE_NUMBA"


def numba_requested() -> bool:
    """True unless the env flag disables the jitted backend."""
    return os.environ.get(DISABLE_ENV_VAR, "0").strip() in ("", "0")


def _anneal_read(fields, couplings_full, betas, init_u, accept_u, spins_out):
    """Run one simulated-annealing read with sequential Metropolis sweeps.

    ``fields``: (n,) linear terms; ``couplings_full``: (n, n) symmetric
    coupling matrix with zero diagonal; ``betas``: (sweeps,) inverse
    temperatures, one per sweep; ``init_u``: (n,) uniforms deciding the
    initial spins; ``accept_u``: (sweeps, n) acceptance uniforms indexed
    by (sweep, spin). The final spin configuration is written into
    ``spins_out`` (int8, values in {-1, +1}).
    """
    n = fields.shape[0]
    sweeps = betas.shape[0]
    for i in range(n):
        spins_out[i] = 1 if init_u[i] < 0.5 else -1
    # local[i] = fields[i] + sum_j couplings_full[i, j] * s_j
    local = np.empty(n)
    for i in range(n):
        acc = fields[i]
        for j in range(n):
            acc += couplings_full[i, j] * spins_out[j]
        local[i] = acc
    for t in range(sweeps):
        beta = betas[t]
        for i in range(n):
            delta = -2.0 * spins_out[i] * local[i]
            if delta <= 0.0 or accept_u[t, i] < math.exp(-beta * delta):
                spins_out[i] = -spins_out[i]
                for j in range(n):
                    local[j] += 2.0 * couplings_full[j, i] * spins_out[i]


def _gibbs_chain(weights, hidden_bias, visible_bias, v_init, u_hidden,
                 u_visible, states_out):
    """Advance a block-Gibbs chain on an all-Bernoulli model.

    Each step samples the hidden layer given the visible one and then
    the visible layer given the new hidden one. ``u_hidden``
    (steps, n_hidden) and ``u_visible`` (steps, n_visible) hold the
    uniforms consumed at each step. Row t of ``states_out``
    (steps, n_visible + n_hidden, int8) receives the state after step
    t + 1, visible units first.
    """
    steps = u_hidden.shape[0]
    n_visible = weights.shape[0]
    n_hidden = weights.shape[1]
    v = np.empty(n_visible)
    h = np.empty(n_hidden)
    for i in range(n_visible):
        v[i] = v_init[i]
    for t in range(steps):
        for j in range(n_hidden):
            x = hidden_bias[j]
            for i in range(n_visible):
                x += v[i] * weights[i, j]
            if x >= 0.0:
                p = 1.0 / (1.0 + math.exp(-x))
            else:
                e = math.exp(x)
                p = e / (1.0 + e)
            h[j] = 1.0 if u_hidden[t, j] < p else 0.0
        for i in range(n_visible):
            x = visible_bias[i]
            for j in range(n_hidden):
                x += weights[i, j] * h[j]
            if x >= 0.0:
                p = 1.0 / (1.0 + math.exp(-x))
            else:
                e = math.exp(x)
                p = e / (1.0 + e)
            v[i] = 1.0 if u_visible[t, i] < p else 0.0
        for i in range(n_visible):
            states_out[t, i] = 1 if v[i] > 0.5 else 0
        for j in range(n_hidden):
            states_out[t, n_visible + j] = 1 if h[j] > 0.5 else 0


def _jit_kernels():
    from numba import njit

    wrap = njit(cache=True)
    return wrap(_anneal_read), wrap(_gibbs_chain)


if numba_requested():
    try:
        anneal_read, gibbs_chain = _jit_kernels()
        NUMBA_ACTIVE = True
    except ImportError:
        anneal_read, gibbs_chain = _anneal_read, _gibbs_chain
        NUMBA_ACTIVE = False
else:
    anneal_read, gibbs_chain = _anneal_read, _gibbs_chain
    NUMBA_ACTIVE = False
