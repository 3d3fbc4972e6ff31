"""Closed-shell MO Hamiltonian data and reproducible synthetic instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def symmetrize_eri(eri: np.ndarray) -> np.ndarray:
    """Average over the 8 permutations of real chemists'-notation (pq|rs)."""
    g = eri + eri.transpose(1, 0, 2, 3)
    g = g + g.transpose(0, 1, 3, 2)
    g = g + g.transpose(2, 3, 0, 1)
    return g / 8.0


def fock_matrix(h: np.ndarray, eri: np.ndarray, n_occ: int) -> np.ndarray:
    """MO Fock matrix ``F_pq = h_pq + sum_i 2(pq|ii) - (pi|iq)`` of the closed-shell reference."""
    o = slice(0, n_occ)
    return h + 2.0 * np.einsum("pqii->pq", eri[:, :, o, o]) - np.einsum("piiq->pq", eri[:, o, o, :])


@dataclass(frozen=True, eq=False)
class IntegralSet:
    """One- and two-electron MO integrals of a closed-shell system (Hartree).

    ``eri[p, q, r, s] = (pq|rs)`` in chemists' notation; ``2 * n_occ`` electrons.
    """

    n_orb: int
    n_occ: int
    core_energy: float
    h: np.ndarray
    eri: np.ndarray
    eps: np.ndarray
    canonical: bool = field(default=True)

    def __post_init__(self):
        if not 0 < self.n_occ < self.n_orb:
            raise ValueError(f"need 0 < n_occ < n_orb, got n_occ={self.n_occ}, n_orb={self.n_orb}")
        n = self.n_orb
        if self.h.shape != (n, n) or self.eri.shape != (n, n, n, n) or self.eps.shape != (n,):
            raise ValueError("integral shapes do not match n_orb")
        for arr in (self.h, self.eri, self.eps):
            arr.setflags(write=False)

    @property
    def n_virt(self) -> int:
        return self.n_orb - self.n_occ

    @property
    def occ(self) -> slice:
        return slice(0, self.n_occ)

    @property
    def virt(self) -> slice:
        return slice(self.n_occ, self.n_orb)

    @property
    def fock(self) -> np.ndarray:
        return fock_matrix(self.h, self.eri, self.n_occ)

    @property
    def ovov(self) -> np.ndarray:
        """``(ia|jb)`` indexed ``[i, a, j, b]``."""
        o, v = self.occ, self.virt
        return self.eri[o, v, o, v]

    def reference_energy(self) -> float:
        """Closed-shell determinant energy, core included."""
        o = self.occ
        e = 2.0 * np.trace(self.h[o, o])
        e += 2.0 * np.einsum("iijj->", self.eri[o, o, o, o]) - np.einsum("ijji->", self.eri[o, o, o, o])
        return float(self.core_energy + e)

    def check_symmetry(self, atol: float = 1e-12) -> None:
        if np.abs(self.h - self.h.T).max(initial=0.0) > atol:
            raise ValueError("h is not symmetric")
        if np.abs(self.eri - symmetrize_eri(self.eri)).max(initial=0.0) > atol:
            raise ValueError("eri lacks 8-fold permutation symmetry")

    def __eq__(self, other):
        if not isinstance(other, IntegralSet):
            return NotImplemented
        return (
            self.n_orb == other.n_orb
            and self.n_occ == other.n_occ
            and self.core_energy == other.core_energy
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.eri, other.eri)
            and np.array_equal(self.eps, other.eps)
        )


def flip_orbital_sign(ints: IntegralSet, p: int) -> IntegralSet:
    """Integrals after ``phi_p -> -phi_p``: every index equal to ``p`` contributes a sign."""
    s = np.ones(ints.n_orb)
    s[p] = -1.0
    h = ints.h * s[:, None] * s[None, :]
    eri = ints.eri * s[:, None, None, None] * s[None, :, None, None] * s[None, None, :, None] * s[None, None, None, :]
    return IntegralSet(ints.n_orb, ints.n_occ, ints.core_energy, h, eri, ints.eps.copy(), ints.canonical)


def combine_noninteracting(a: IntegralSet, b: IntegralSet) -> IntegralSet:
    """Integrals of two fragments with no cross-fragment interaction.

    Orbital order is ``occ(a), occ(b), virt(a), virt(b)``; every integral that
    mixes the two fragments is exactly zero.
    """
    ia = list(range(a.n_occ)) + list(range(a.n_occ + b.n_occ, a.n_occ + b.n_occ + a.n_virt))
    no = a.n_occ + b.n_occ
    ib = list(range(a.n_occ, no)) + list(range(no + a.n_virt, a.n_orb + b.n_orb))
    # orbitals of each fragment in its own order: occ first, then virt
    n = a.n_orb + b.n_orb
    h = np.zeros((n, n))
    eri = np.zeros((n,) * 4)
    eps = np.zeros(n)
    for frag, idx in ((a, ia), (b, ib)):
        ix = np.ix_(idx, idx)
        h[ix] = frag.h
        eri[np.ix_(idx, idx, idx, idx)] = frag.eri
        eps[idx] = frag.eps
    return IntegralSet(n, no, a.core_energy + b.core_energy, h, eri, eps, a.canonical and b.canonical)


# Chosen so that correlation energies span roughly 1e-3 .. 0.5 Eh over the
# bundled coupling range; above ~0.6 the strongest fixtures stop converging.
NOISE_SCALE = 0.5


def generate_synthetic(seed: int, n_orb: int, n_occ: int, coupling_scale: float) -> IntegralSet:
    """Deterministic canonical test Hamiltonian.

    Orbital energies are drawn with an occupied-virtual gap of at least 1 Eh.
    The two-electron integrals are a symmetrized random tensor (a positive
    Coulomb-like diagonal plus noise) times ``coupling_scale``; ``h`` is then
    chosen so that the reference Fock matrix equals ``diag(eps)`` exactly up to
    roundoff, i.e. the orbitals are canonical Hartree-Fock orbitals of the
    model Hamiltonian.
    """
    if not 0 < n_occ < n_orb:
        raise ValueError(f"need 0 < n_occ < n_orb, got n_occ={n_occ}, n_orb={n_orb}")
    if coupling_scale < 0:
        raise ValueError("coupling_scale must be non-negative")
    rng = np.random.default_rng(seed)
    n_virt = n_orb - n_occ
    eps_occ = np.sort(rng.uniform(-1.6, -0.6, n_occ))
    eps_virt = np.sort(eps_occ[-1] + 1.0 + rng.uniform(0.05, 1.5, n_virt))
    eps = np.concatenate([eps_occ, eps_virt])

    noise = rng.normal(size=(n_orb,) * 4)
    coulomb = rng.uniform(0.3, 0.8, size=(n_orb, n_orb))
    coulomb = 0.5 * (coulomb + coulomb.T)
    eri = NOISE_SCALE * noise
    idx = np.arange(n_orb)
    eri[idx[:, None], idx[:, None], idx[None, :], idx[None, :]] += coulomb
    eri = coupling_scale * symmetrize_eri(eri)

    h = np.diag(eps) - (fock_matrix(np.zeros((n_orb, n_orb)), eri, n_occ))
    h = 0.5 * (h + h.T)
    core = float(rng.uniform(0.5, 5.0))
    return IntegralSet(n_orb, n_occ, core, h, eri, eps)
