"""Independent reference computations used by the tests.

Everything here is deliberately naive: plain loops over every disorder and
spin configuration, with no reuse of the package's conditional machinery.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from gibbslab.gibbs import exact_gibbs
from gibbslab.lattice import Volume


def brute_disorder_conditional(K, x, lam):
    """``K(eta_x | sigma_{lam\\x}, eta_{lam\\x})`` by summing the full joint table.

    Layout matches ``lemma1_table``: ``[inner row, rest state, symbol]`` with
    inner rows in ``itertools.product`` order over ``(support & lam) - x``.
    """
    x = tuple(x)
    xv = Volume(lam.d, (x,))
    rest = lam - xv
    inner = (K.support & lam) - xv
    symbols = K.law.alphabet
    A = len(symbols)
    sup = list(K.support)
    joint = np.zeros((A ** len(inner), A, 2 ** len(rest)))
    lam_pos = [K.volume.index(s) for s in lam]
    rest_pos_in_lam = [lam.index(s) for s in rest]
    for combo in itertools.product(range(A), repeat=len(sup)):
        eta = {s: symbols[i] for s, i in zip(sup, combo)}
        w = math.prod(K.law.probs[i] for i in combo)
        if w == 0:
            continue
        t = exact_gibbs(K.pot, K.volume, K.bc, eta)
        p = t.probs()
        r = 0
        for s in inner:
            r = r * A + symbols.index(eta[s])
        k = symbols.index(eta[x])
        for idx in range(len(p)):
            lam_bits = [(idx >> q) & 1 for q in lam_pos]
            rs = sum(lam_bits[q] << j for j, q in enumerate(rest_pos_in_lam))
            joint[r, k, rs] += w * p[idx]
    tot = joint.sum(axis=1, keepdims=True)
    return np.transpose(joint / tot, (0, 2, 1))


def _apply(T, mat, q, n):
    ax = n - 1 - q
    return np.moveaxis(np.tensordot(mat, T, axes=([1], [ax])), 0, ax)


def rfim_kron_conditional(J, h, vol, bc_spin, law_probs, x, lam, symbols=(-1.0, 1.0)):
    """Same conditional for the random field model via a Kronecker-factorised sum.

    The field part of the Boltzmann weight factorises over sites, so
    ``Z(eta)`` for every ``eta`` is ``(kron_q M) w`` with ``M[a, s] = exp(h a s)``
    and ``w`` the field-free weights.  Summing the disorder outside ``lam``
    against ``IP / Z`` is another partial Kronecker transform.  Binary
    alphabets only; ``bc_spin`` is +1, -1 or 0 (open).
    """
    n = len(vol)
    S = 2**n
    bits = (np.arange(S)[:, None] >> np.arange(n)[None, :]) & 1
    spins = 2.0 * bits - 1.0
    inter = np.zeros(S)
    for i, s in enumerate(vol):
        for e in range(vol.d):
            for step in (-1, 1):
                y = list(s)
                y[e] += step
                y = tuple(y)
                if y in vol:
                    if step == 1:
                        inter += J * spins[:, i] * spins[:, vol.index(y)]
                elif bc_spin != 0:
                    inter += J * bc_spin * spins[:, i]
    w = np.exp(inter - inter.max())
    M = np.array([[math.exp(h * a * (2 * b - 1)) for b in range(2)] for a in symbols])
    Z = w.reshape((2,) * n)
    for q in range(n):
        Z = _apply(Z, M, q, n)
    P = np.ones((2,) * n)
    for q in range(n):
        shape = [1] * n
        shape[n - 1 - q] = 2
        P = P * np.asarray(law_probs).reshape(shape)
    G = P / Z
    inside = [vol.index(s) for s in lam]
    outside = [q for q in range(n) if q not in inside]
    for q in outside:
        G = _apply(G, M.T, q, n)
    in_idx = sum(bits[:, q] << j for j, q in enumerate(inside))
    out_idx = sum((bits[:, q] << j for j, q in enumerate(outside)), np.zeros(S, dtype=np.int64))
    Gm = np.zeros((2 ** len(inside), 2 ** len(outside)))
    # C-order flattening puts site 0 on the fastest axis: little-endian
    Gm[in_idx, out_idx] = G.reshape(-1)
    Wm = np.zeros_like(Gm)
    Wm[in_idx, out_idx] = w
    C = Gm @ Wm.T
    lb = (np.arange(2 ** len(inside))[:, None] >> np.arange(len(inside))[None, :]) & 1
    F = np.ones_like(C)
    for j in range(len(inside)):
        F *= M[lb[:, j][:, None], lb[:, j][None, :]]
    joint = C * F  # [eta over lam, sigma over lam], little-endian in lam order
    xj = list(lam).index(tuple(x))
    rest_j = [j for j in range(len(inside)) if j != xj]
    n_r = len(rest_j)
    eta_rest = sum(lb[:, j] << k for k, j in enumerate(rest_j))
    # inner rows follow itertools.product order: first site most significant
    eta_row = sum(lb[:, j] << (n_r - 1 - k) for k, j in enumerate(rest_j))
    sig_rest = eta_rest
    out = np.zeros((2**n_r, 2**n_r, 2))
    np.add.at(out, (eta_row[:, None], sig_rest[None, :], lb[:, xj][:, None]), joint)
    return out / out.sum(axis=2, keepdims=True)


def naive_ising_probs(sites, J, fields, bc_spins=None):
    """Boltzmann probabilities of a nearest-neighbour Ising model by plain loops.

    ``J(s, t)`` gives the coupling of a bond, ``fields`` maps site to external
    field (energy ``-f s``), ``bc_spins`` maps outside sites to fixed spins or
    is None for the free boundary.  Configurations are little-endian in
    ``sites`` order.
    """
    sites = list(sites)
    inside = set(sites)
    n = len(sites)
    out = np.empty(2**n)
    for idx in range(2**n):
        sig = {s: (1 if (idx >> i) & 1 else -1) for i, s in enumerate(sites)}
        e = 0.0
        for s in sites:
            e -= fields.get(s, 0.0) * sig[s]
            for k in range(len(s)):
                for step in (1, -1):
                    t = list(s)
                    t[k] += step
                    t = tuple(t)
                    if t in inside:
                        if step == 1:
                            e -= J(s, t) * sig[s] * sig[t]
                    elif bc_spins is not None:
                        e -= J(s, t) * sig[s] * bc_spins[t]
        out[idx] = -e
    out = np.exp(out - out.max())
    return out / out.sum()


def transfer_chain_up(J, h, fields, left, right, at=0):
    """``P(sigma_at = +1)`` on a 1D chain ``0..n-1`` with fixed end spins, by 2x2 matrices."""
    n = len(fields)
    s = np.array([-1.0, 1.0])
    T = np.exp(J * np.outer(s, s))
    loc = [np.exp(h * f * s) for f in fields]
    fwd = np.exp(J * left * s) * loc[0]
    for i in range(1, at + 1):
        fwd = (fwd @ T) * loc[i]
    bwd = np.exp(J * right * s)
    for i in range(n - 1, at, -1):
        bwd = T @ (loc[i] * bwd)
    w = fwd * bwd
    return w[1] / w.sum()
