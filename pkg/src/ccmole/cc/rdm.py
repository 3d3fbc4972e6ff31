"""Amplitude-only (XCCSD-style) one-particle density matrix."""

from __future__ import annotations

import numpy as np

from .ccsd import AmplitudeSet


def xccsd_1rdm(t: AmplitudeSet) -> np.ndarray:
    """MO-basis ``gamma`` assembled from T1/T2 without Lambda amplitudes.

    Blocks::

        gamma_ij = delta_ij - sum_a t_i^a t_j^a - 1/2 sum_abk t_ik^ab t_jk^ab
        gamma_ab = sum_i t_i^a t_i^b + 1/2 sum_ijc t_ij^ac t_ij^bc
        gamma_ia = gamma_ai = t_i^a + sum_jb t_ij^ab t_j^b

    followed by ``gamma <- (gamma + gamma^T) / 2``. Amplitudes are real, so
    complex conjugation is dropped.
    """
    t1, t2 = t.t1, t.t2
    no, nv = t1.shape
    gamma = np.zeros((no + nv, no + nv))
    o, v = slice(0, no), slice(no, no + nv)
    gamma[o, o] = np.eye(no) - t1 @ t1.T - 0.5 * np.einsum("ikab,jkab->ij", t2, t2)
    gamma[v, v] = t1.T @ t1 + 0.5 * np.einsum("ijac,ijbc->ab", t2, t2)
    gamma[o, v] = t1 + np.einsum("ijab,jb->ia", t2, t1)
    gamma[v, o] = gamma[o, v].T
    return 0.5 * (gamma + gamma.T)
