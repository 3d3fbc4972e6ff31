"""Dense full-CI in the Sz = 0 determinant space (verification oracle).

Determinants are products of an alpha and a beta occupation string
(``|I_alpha> (x) |I_beta>``, alpha operators ordered first), so spin-summed
excitation operators split as ``E_pq = E^a_pq (x) 1 + 1 (x) E^b_pq`` without
extra phases.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .integrals import IntegralSet

MAX_DIM = 5000


class FCIDimensionError(ValueError):
    pass


@lru_cache(maxsize=None)
def strings(n_orb: int, n_el: int) -> tuple[int, ...]:
    """Occupation bitstrings with ``n_el`` of ``n_orb`` orbitals filled, lowest first."""
    return tuple(sum(1 << i for i in occ) for occ in combinations(range(n_orb), n_el))


@lru_cache(maxsize=None)
def _excitation_matrices(n_orb: int, n_el: int) -> np.ndarray:
    """``E[p, q]`` = matrix of ``a+_p a_q`` on one spin's string space."""
    strs = strings(n_orb, n_el)
    index = {s: k for k, s in enumerate(strs)}
    e = np.zeros((n_orb, n_orb, len(strs), len(strs)))
    for col, s in enumerate(strs):
        for q in range(n_orb):
            if not s >> q & 1:
                continue
            s1 = s & ~(1 << q)
            sign_q = (-1) ** bin(s1 & ((1 << q) - 1)).count("1")
            for p in range(n_orb):
                if s1 >> p & 1:
                    continue
                sign_p = (-1) ** bin(s1 & ((1 << p) - 1)).count("1")
                e[p, q, index[s1 | (1 << p)], col] = sign_p * sign_q
    e.setflags(write=False)
    return e


def excitation_operators(n_orb: int, n_occ: int) -> np.ndarray:
    """Spin-summed ``E_pq`` on the full Sz = 0 space, shape (n, n, dim, dim)."""
    e = _excitation_matrices(n_orb, n_occ)
    ident = np.eye(e.shape[-1])
    n = n_orb
    dim = e.shape[-1] ** 2
    out = np.empty((n, n, dim, dim))
    for p in range(n):
        for q in range(n):
            out[p, q] = np.kron(e[p, q], ident) + np.kron(ident, e[p, q])
    return out


def fci_dimension(n_orb: int, n_occ: int) -> int:
    return comb(n_orb, n_occ) ** 2


def fci_hamiltonian(ints: IntegralSet) -> np.ndarray:
    """Electronic Hamiltonian (core energy excluded) over the Sz = 0 determinants."""
    n, k = ints.n_orb, ints.n_occ
    dim = fci_dimension(n, k)
    if dim > MAX_DIM:
        raise FCIDimensionError(f"FCI space of dimension {dim} exceeds {MAX_DIM}")
    e = _excitation_matrices(n, k)
    ns = e.shape[-1]
    eri = ints.eri
    hk = ints.h - 0.5 * np.einsum("pqqs->ps", eri)
    ef = e.reshape(n * n, ns, ns)
    w = np.tensordot(eri.reshape(n * n, n * n), ef, axes=(1, 0))  # W_pq = sum_rs (pq|rs) E_rs
    h_same = np.tensordot(hk.ravel(), ef, axes=(0, 0)) + 0.5 * np.einsum("xij,xjk->ik", ef, w)
    ident = np.eye(ns)
    ham = np.kron(h_same, ident) + np.kron(ident, h_same)
    for x in range(n * n):
        if np.any(ef[x]):
            ham += np.kron(ef[x], w[x])
    return ham


def fci_oracle(ints: IntegralSet) -> float:
    """Lowest Sz = 0 eigenvalue plus the core energy."""
    ham = fci_hamiltonian(ints)
    return float(np.linalg.eigvalsh(ham)[0] + ints.core_energy)
