"""Closed-shell CCSD on T1-transformed integrals with a diagonal quasi-Newton solver."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np

from .integrals import IntegralSet

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-10


class DegenerateGapError(ArithmeticError):
    """An orbital-energy denominator is (numerically) zero."""


class DivergenceError(ArithmeticError):
    """The amplitude iteration produced non-finite values."""


@dataclass
class AmplitudeSet:
    """``t1[i, a]`` and ``t2[i, j, a, b]`` (closed-shell, spatial orbitals)."""

    t1: np.ndarray
    t2: np.ndarray

    def __post_init__(self):
        self.t1 = np.asarray(self.t1, dtype=np.float64)
        self.t2 = np.asarray(self.t2, dtype=np.float64)
        o, v = self.t1.shape
        if self.t2.shape != (o, o, v, v):
            raise ValueError(f"t2 shape {self.t2.shape} does not match t1 shape {self.t1.shape}")

    @property
    def n_occ(self) -> int:
        return self.t1.shape[0]

    @property
    def n_virt(self) -> int:
        return self.t1.shape[1]

    @classmethod
    def zeros(cls, n_occ: int, n_virt: int) -> "AmplitudeSet":
        return cls(np.zeros((n_occ, n_virt)), np.zeros((n_occ, n_occ, n_virt, n_virt)))

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.t1.ravel(), self.t2.ravel()])

    @classmethod
    def unravel(cls, vec: np.ndarray, n_occ: int, n_virt: int) -> "AmplitudeSet":
        k = n_occ * n_virt
        return cls(vec[:k].reshape(n_occ, n_virt).copy(), vec[k:].reshape(n_occ, n_occ, n_virt, n_virt).copy())

    def pair_asymmetry(self) -> float:
        return float(np.abs(self.t2 - self.t2.transpose(1, 0, 3, 2)).max(initial=0.0))

    def copy(self) -> "AmplitudeSet":
        return AmplitudeSet(self.t1.copy(), self.t2.copy())


AMPJSON_FORMAT = "ampjson/1"


def save_amplitudes(t: AmplitudeSet, path: "str | os.PathLike") -> None:
    doc = {
        "format": AMPJSON_FORMAT,
        "n_occ": t.n_occ,
        "n_virt": t.n_virt,
        "t1": t.t1.tolist(),
        "t2": t.t2.tolist(),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc))
    os.replace(tmp, path)


def load_amplitudes(path: "str | os.PathLike") -> AmplitudeSet:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != AMPJSON_FORMAT:
        raise ValueError(f"{path}: not an {AMPJSON_FORMAT} document")
    t = AmplitudeSet(np.array(doc["t1"], dtype=float).reshape(doc["n_occ"], doc["n_virt"]), np.array(doc["t2"], dtype=float))
    if t.t2.shape != (doc["n_occ"],) * 2 + (doc["n_virt"],) * 2:
        raise ValueError(f"{path}: t2 has shape {t.t2.shape}")
    return t


def _denominators(ints: IntegralSet) -> tuple[np.ndarray, np.ndarray]:
    eo = ints.eps[ints.occ]
    ev = ints.eps[ints.virt]
    d1 = eo[:, None] - ev[None, :]
    # (e_i - e_a) + (e_j - e_b): bitwise symmetric under (i,a) <-> (j,b)
    d2 = d1[:, None, :, None] + d1[None, :, None, :]
    return d1, d2


def orbital_energy_denominators(ints: IntegralSet, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``eps_i - eps_a`` and ``eps_i + eps_j - eps_a - eps_b``, optionally pushed away from zero by ``shift``."""
    d1, d2 = _denominators(ints)
    if shift:
        d1 = d1 - shift * np.sign(d1)
        d2 = d2 - shift * np.sign(d2)
    small = min(np.abs(d1).min(initial=np.inf), np.abs(d2).min(initial=np.inf))
    if small < DEGENERATE_TOL:
        raise DegenerateGapError(f"orbital-energy denominator {small:.3e} below {DEGENERATE_TOL}")
    return d1, d2


def mp2_amplitudes(ints: IntegralSet) -> AmplitudeSet:
    """``t2[i,j,a,b] = (ia|jb) / (eps_i + eps_j - eps_a - eps_b)``, ``t1 = 0``."""
    _, d2 = orbital_energy_denominators(ints)
    t2 = ints.ovov.transpose(0, 2, 1, 3) / d2
    return AmplitudeSet(np.zeros((ints.n_occ, ints.n_virt)), t2)


def mp2_energy(ints: IntegralSet) -> float:
    """Closed-shell MP2 correlation energy by direct summation."""
    _, d2 = orbital_energy_denominators(ints)
    g = ints.ovov  # [i, a, j, b]
    num = g * (2.0 * g - g.transpose(0, 3, 2, 1))
    return float((num / d2.transpose(0, 2, 1, 3)).sum())


def correlation_energy(ints: IntegralSet, t: AmplitudeSet) -> float:
    """``sum (t_ij^ab + t_i^a t_j^b)(2(ia|jb) - (ib|ja)) + 2 sum f_ia t_i^a``.

    The Fock term vanishes for canonical Hartree-Fock references.
    """
    g = ints.ovov.transpose(0, 2, 1, 3)  # [i, j, a, b] = (ia|jb)
    tau = t.t2 + np.einsum("ia,jb->ijab", t.t1, t.t1)
    e = np.einsum("ijab,ijab->", tau, 2.0 * g - g.transpose(0, 1, 3, 2))
    e += 2.0 * np.einsum("ia,ia->", ints.fock[ints.occ, ints.virt], t.t1)
    return float(e)


def total_energy(ints: IntegralSet, t: AmplitudeSet) -> float:
    return ints.reference_energy() + correlation_energy(ints, t)


def _embed_t1(t1: np.ndarray, n_orb: int) -> np.ndarray:
    n_occ = t1.shape[0]
    full = np.zeros((n_orb, n_orb))
    full[n_occ:, :n_occ] = t1.T
    return full


def t1_transform(ints: IntegralSet, t1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """T1-dressed ``h~`` and ``(pq|rs)~``.

    With ``T[a, i] = t1[i, a]`` embedded in an ``n_orb x n_orb`` matrix,
    bra indices (p, r) are dressed by ``X = 1 - T`` and ket indices (q, s) by
    ``Y = 1 + T^T``.
    """
    t = _embed_t1(t1, ints.n_orb)
    x = np.eye(ints.n_orb) - t
    y = np.eye(ints.n_orb) + t.T
    h = x @ ints.h @ y.T
    g = np.tensordot(x, ints.eri, axes=(1, 0))  # p q r s
    g = np.tensordot(g, y, axes=(1, 1)).transpose(0, 3, 1, 2)
    g = np.tensordot(g, x, axes=(2, 1)).transpose(0, 1, 3, 2)
    g = np.tensordot(g, y, axes=(3, 1))
    return h, g


def ccsd_residual(ints: IntegralSet, t: AmplitudeSet) -> tuple[np.ndarray, np.ndarray]:
    """Singles and doubles residuals ``(Omega1[i,a], Omega2[i,j,a,b])``.

    Closed-shell equations on T1-transformed integrals, with
    ``u_ij^ab = 2 t_ij^ab - t_ji^ab`` and ``L_pqrs = 2(pq|rs) - (ps|rq)``.
    """
    o, v = ints.occ, ints.virt
    t1, t2 = t.t1, t.t2
    h, g = t1_transform(ints, t1)
    # generalized Fock of the dressed Hamiltonian
    f = h + 2.0 * np.einsum("pqkk->pq", g[:, :, o, o]) - np.einsum("pkkq->pq", g[:, o, o, :])
    u = 2.0 * t2 - t2.transpose(1, 0, 2, 3)

    g_vvov = g[v, v, o, v]  # (ad|kc) -> [a, d, k, c]
    g_ooov = g[o, o, o, v]  # (ki|lc) -> [k, i, l, c]
    g_ovov = g[o, v, o, v]  # (kc|ld) -> [k, c, l, d]

    r1 = f[v, o].T.copy()
    r1 += np.einsum("kicd,adkc->ia", u, g_vvov)
    r1 -= np.einsum("klac,kilc->ia", u, g_ooov)
    r1 += np.einsum("ikac,kc->ia", u, f[o, v])

    # doubles: terms already symmetric under (i,a)<->(j,b)
    r2 = g[v, o, v, o].transpose(1, 3, 0, 2).copy()  # (ai|bj)
    r2 += np.einsum("ijcd,acbd->ijab", t2, g[v, v, v, v], optimize=True)
    w_oooo = g[o, o, o, o].transpose(0, 2, 1, 3) + np.einsum("ijcd,kcld->klij", t2, g_ovov)  # [k, l, i, j]
    r2 += np.einsum("klab,klij->ijab", t2, w_oooo)

    # P_ij^ab part
    l_ovov = 2.0 * g_ovov - g_ovov.transpose(0, 3, 2, 1)  # L_kcld -> [k, c, l, d]
    # C: -sum_ck [1/2 t_kj^bc (g_kiac - 1/2 sum_dl t_li^ad g_kdlc) + t_ki^bc (g_kjac - 1/2 sum_dl t_lj^ad g_kdlc)]
    x_kiac = g[o, o, v, v] - 0.5 * np.einsum("liad,kdlc->kiac", t2, g_ovov)  # [k, i, a, c]
    p2 = -0.5 * np.einsum("kjbc,kiac->ijab", t2, x_kiac)
    p2 -= np.einsum("kibc,kjac->ijab", t2, x_kiac)
    # D: 1/2 sum_ck u_jk^bc [L_aikc + 1/2 sum_dl u_il^ad L_ldkc]
    l_aikc = 2.0 * g[v, o, o, v] - g[v, v, o, o].transpose(0, 3, 2, 1)  # 2(ai|kc) - (ac|ki)
    y_aikc = l_aikc + 0.5 * np.einsum("ilad,ldkc->aikc", u, l_ovov.transpose(0, 1, 2, 3))
    p2 += 0.5 * np.einsum("jkbc,aikc->ijab", u, y_aikc)
    # E: sum_c t_ij^ac [F_bc - sum_dkl u_kl^bd (ld|kc)] - sum_k t_ik^ab [F_kj + sum_cdl u_lj^cd (kd|lc)]
    f_vv = f[v, v] - np.einsum("klbd,ldkc->bc", u, g_ovov)
    f_oo = f[o, o] + np.einsum("ljcd,kdlc->kj", u, g_ovov)
    p2 += np.einsum("ijac,bc->ijab", t2, f_vv)
    p2 -= np.einsum("ikab,kj->ijab", t2, f_oo)

    r2 += p2 + p2.transpose(1, 0, 3, 2)
    return r1, r2


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 100
    guess: Union[Literal["zeros", "mp2"], AmplitudeSet] = "mp2"
    level_shift: float = 0.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if isinstance(self.guess, str) and self.guess not in ("zeros", "mp2"):
            raise ValueError(f"unknown guess {self.guess!r}")


@dataclass
class SolveReport:
    amplitudes: AmplitudeSet
    energy: float  # correlation energy, Hartree
    iterations: int
    converged: bool
    residual_norm_history: list[float] = field(default_factory=list)
    update_norm_history: list[float] = field(default_factory=list)


def initial_amplitudes(ints: IntegralSet, guess) -> AmplitudeSet:
    if isinstance(guess, AmplitudeSet):
        if guess.t1.shape != (ints.n_occ, ints.n_virt):
            raise ValueError(f"guess amplitudes have shape {guess.t1.shape}, expected {(ints.n_occ, ints.n_virt)}")
        return guess.copy()
    if guess == "zeros":
        return AmplitudeSet.zeros(ints.n_occ, ints.n_virt)
    if guess == "mp2":
        return mp2_amplitudes(ints)
    raise ValueError(f"unknown guess {guess!r}")


def quasi_newton_step(ints: IntegralSet, t: AmplitudeSet, d1: np.ndarray, d2: np.ndarray):
    """One update ``t + Omega / D``; returns (new amplitudes, residual norm, update norm).

    ``D`` holds the orbital-energy differences, i.e. minus the diagonal of the
    residual Jacobian, so this is ``t - J_diag^{-1} Omega``.
    """
    # a diverging iteration overflows before it turns non-finite; report that as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        r1, r2 = ccsd_residual(ints, t)
        if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
            raise DivergenceError("non-finite CCSD residual")
        dt1 = r1 / d1
        dt2 = r2 / d2
        new = AmplitudeSet(t.t1 + dt1, t.t2 + dt2)
        rnorm = float(np.sqrt((r1 * r1).sum() + (r2 * r2).sum()))
        dnorm = float(np.sqrt((dt1 * dt1).sum() + (dt2 * dt2).sum()))
    return new, rnorm, dnorm


def ccsd_solve(ints: IntegralSet, cfg: SolverConfig | None = None) -> SolveReport:
    """Iterate ``t <- t + Omega(t) / D`` until the update norm is <= ``cfg.tol``.

    ``iterations`` counts residual evaluations (= applied updates). The update
    whose norm first drops below the tolerance is applied before stopping.
    """
    cfg = cfg or SolverConfig()
    d1, d2 = orbital_energy_denominators(ints, cfg.level_shift)
    t = initial_amplitudes(ints, cfg.guess)
    rhist, dhist = [], []
    converged = False
    it = 0
    while it < cfg.max_iter:
        t, rnorm, dnorm = quasi_newton_step(ints, t, d1, d2)
        it += 1
        rhist.append(rnorm)
        dhist.append(dnorm)
        if not np.isfinite(dnorm):
            raise DivergenceError("non-finite amplitude update")
        log.debug("ccsd iter %d |Omega|=%.3e |dt|=%.3e", it, rnorm, dnorm)
        if dnorm <= cfg.tol:
            converged = True
            break
    energy = correlation_energy(ints, t)
    if not np.isfinite(energy):
        raise DivergenceError("non-finite CCSD energy")
    return SolveReport(t, energy, it, converged, rhist, dhist)
