"""Brute-force coupled cluster in the determinant space (test oracle).

Builds ``T`` as an explicit matrix from spin-summed excitation operators and
evaluates ``e^{-T} H e^{T}|HF>`` exactly; independent of any residual algebra.
"""

import numpy as np

from ccmole.cc.fci import excitation_operators, fci_hamiltonian


def _exp_apply(op, vec, sign=1.0):
    out = vec.copy()
    term = vec.copy()
    for k in range(1, 64):
        term = sign * (op @ term) / k
        if not np.any(term):
            break
        out = out + term
    return out


def similarity_projections(ints, t):
    """Return (E, R1[i,a], R2[i,a,j,b]) with R = <HF| E_ia (E_jb) Hbar |HF>."""
    n, no = ints.n_orb, ints.n_occ
    e = excitation_operators(n, no)
    ham = fci_hamiltonian(ints)
    o, v = range(no), range(no, n)
    top = np.zeros_like(ham)
    for i in o:
        for a in v:
            top += t.t1[i, a - no] * e[a, i]
    for i in o:
        for j in o:
            for a in v:
                for b in v:
                    c = t.t2[i, j, a - no, b - no]
                    if c:
                        top += 0.5 * c * (e[a, i] @ e[b, j])
    hf = np.zeros(ham.shape[0])
    hf[0] = 1.0
    r = _exp_apply(top, ham @ _exp_apply(top, hf), -1.0)
    energy = r[0] + ints.core_energy
    nv = n - no
    r1 = np.zeros((no, nv))
    r2 = np.zeros((no, nv, no, nv))
    for i in o:
        for a in v:
            left = e[i, a].T @ hf  # <HF| E_ia  as a row vector
            r1[i, a - no] = left @ r
            for j in o:
                for b in v:
                    left2 = (e[i, a] @ e[j, b]).T @ hf
                    r2[i, a - no, j, b - no] = left2 @ r
    return energy, r1, r2
