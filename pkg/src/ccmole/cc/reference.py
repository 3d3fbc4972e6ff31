"""Loop-level reference implementations for small systems (n_orb <= 6).

Every sum is written out term by term with no shared intermediates, so these
serve as an independent check of the tensor-contraction code in
:mod:`ccmole.cc.ccsd`. They are slow by design.
"""

from __future__ import annotations

import numpy as np

from .ccsd import AmplitudeSet
from .integrals import IntegralSet


def naive_t1_transform(ints: IntegralSet, t1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, no = ints.n_orb, ints.n_occ

    def amp(r, p):
        # t_r^p: r occupied, p virtual
        if r < no <= p:
            return t1[r, p - no]
        return 0.0

    def bra(p, r):
        return (1.0 if p == r else 0.0) - amp(r, p)

    def ket(q, s):
        return (1.0 if q == s else 0.0) + amp(q, s)

    h = np.zeros((n, n))
    for p in range(n):
        for q in range(n):
            acc = 0.0
            for r in range(n):
                for s in range(n):
                    acc += bra(p, r) * ket(q, s) * ints.h[r, s]
            h[p, q] = acc

    # one index at a time: (tu|mn) -> (pu|mn) -> (pq|mn) -> (pq|rn) -> (pq|rs)
    eri = ints.eri
    stage = np.zeros_like(eri)
    for p in range(n):
        for u in range(n):
            for m in range(n):
                for nn in range(n):
                    stage[p, u, m, nn] = sum(bra(p, tt) * eri[tt, u, m, nn] for tt in range(n))
    eri, stage = stage, np.zeros_like(eri)
    for p in range(n):
        for q in range(n):
            for m in range(n):
                for nn in range(n):
                    stage[p, q, m, nn] = sum(ket(q, u) * eri[p, u, m, nn] for u in range(n))
    eri, stage = stage, np.zeros_like(eri)
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for nn in range(n):
                    stage[p, q, r, nn] = sum(bra(r, m) * eri[p, q, m, nn] for m in range(n))
    eri, stage = stage, np.zeros_like(eri)
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    stage[p, q, r, s] = sum(ket(s, nn) * eri[p, q, r, nn] for nn in range(n))
    return h, stage


def naive_residual(ints: IntegralSet, t: AmplitudeSet) -> tuple[np.ndarray, np.ndarray]:
    """Singles/doubles residuals evaluated entry by entry.

    ``G(p, q, r, s)`` below is the dressed chemists' integral ``(pq|rs)~``;
    the physicists' bracket ``<pr|qs>~`` of the printed equations equals
    ``G(p, q, r, s)``.
    """
    no, nv = ints.n_occ, ints.n_virt
    h, g = naive_t1_transform(ints, t.t1)
    O = range(no)
    V = range(no, no + nv)

    def T2(i, j, a, b):
        return t.t2[i, j, a - no, b - no]

    def U(i, j, a, b):
        return 2.0 * T2(i, j, a, b) - T2(j, i, a, b)

    def G(p, q, r, s):
        return g[p, q, r, s]

    def F(p, q):
        return h[p, q] + sum(2.0 * G(p, q, k, k) - G(p, k, k, q) for k in O)

    r1 = np.zeros((no, nv))
    for i in O:
        for a in V:
            acc = 0.0
            for c in V:
                for k in O:
                    for d in V:
                        acc += (2.0 * T2(k, i, c, d) - T2(i, k, c, d)) * G(a, d, k, c)
            for c in V:
                for k in O:
                    for l in O:
                        acc -= (2.0 * T2(k, l, a, c) - T2(l, k, a, c)) * G(k, i, l, c)
            for c in V:
                for k in O:
                    fkc = h[k, c] + sum(2.0 * G(k, c, l, l) - G(k, l, l, c) for l in O)
                    acc += (2.0 * T2(i, k, a, c) - T2(k, i, a, c)) * fkc
            acc += h[a, i] + sum(2.0 * G(a, i, j, j) - G(a, j, j, i) for j in O)
            r1[i, a - no] = acc

    def permuted_part(i, j, a, b):
        acc = 0.0
        for c in V:
            for k in O:
                inner1 = G(k, i, a, c) - 0.5 * sum(T2(l, i, a, d) * G(k, d, l, c) for d in V for l in O)
                inner2 = G(k, j, a, c) - 0.5 * sum(T2(l, j, a, d) * G(k, d, l, c) for d in V for l in O)
                acc -= 0.5 * T2(k, j, b, c) * inner1 + T2(k, i, b, c) * inner2
        for c in V:
            for k in O:
                bracket = 2.0 * G(a, i, k, c) - G(a, c, k, i)
                bracket += 0.5 * sum(
                    U(i, l, a, d) * (2.0 * G(l, d, k, c) - G(l, c, k, d)) for d in V for l in O
                )
                acc += 0.5 * U(j, k, b, c) * bracket
        for c in V:
            fbc = F(b, c)
            fbc -= sum(U(k, l, b, d) * G(l, d, k, c) for d in V for k in O for l in O)
            acc += T2(i, j, a, c) * fbc
        for k in O:
            fkj = F(k, j)
            fkj += sum(U(l, j, c, d) * G(k, d, l, c) for c in V for d in V for l in O)
            acc -= T2(i, k, a, b) * fkj
        return acc

    r2 = np.zeros((no, no, nv, nv))
    for i in O:
        for j in O:
            for a in V:
                for b in V:
                    acc = G(a, i, b, j)
                    acc += sum(T2(i, j, c, d) * G(a, c, b, d) for c in V for d in V)
                    for k in O:
                        for l in O:
                            inner = G(k, i, l, j) + sum(T2(i, j, c, d) * G(k, c, l, d) for c in V for d in V)
                            acc += T2(k, l, a, b) * inner
                    acc += permuted_part(i, j, a, b) + permuted_part(j, i, b, a)
                    r2[i, j, a - no, b - no] = acc
    return r1, r2
