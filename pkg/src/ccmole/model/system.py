"""Molecular systems: atoms, per-element AO layouts, and MO coefficients.

Coefficient layout: ``coeffs[p][A]`` is the flat :class:`IrrepsArray` value
vector of MO ``p`` on atom ``A`` in that atom's element signature. In the
``molsys/1`` file each MO is one flat list: the per-atom vectors concatenated
in atom order, i.e. ``(A, k, l, m)`` order with the signature fixing
``(k, l)`` within an atom.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..irreps import Irrep, Irreps, from_blocks, to_blocks, wigner_d
from .config import DEFAULT_BASIS

MOLSYS_FORMAT = "molsys/1"


class UnknownElementError(KeyError):
    pass


@dataclass(frozen=True)
class BasisLayout:
    """AO shell signature per element, plus the padding target."""

    shells: Mapping[str, Irreps]

    def __post_init__(self):
        object.__setattr__(self, "shells", {el: Irreps.parse(sig) for el, sig in self.shells.items()})

    def signature(self, element: str) -> Irreps:
        try:
            return self.shells[element]
        except KeyError:
            raise UnknownElementError(f"element {element!r} not in basis layout") from None

    @property
    def padded(self) -> Irreps:
        mults: dict[Irrep, int] = {}
        for sig in self.shells.values():
            for ir, m in sig.mults().items():
                mults[ir] = max(mults.get(ir, 0), m)
        return Irreps.from_blocks(mults)

    def to_json(self) -> dict:
        return {el: [[m, ir.l, "e" if ir.p == 1 else "o"] for m, ir in sig] for el, sig in self.shells.items()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "BasisLayout":
        shells = {}
        for el, entries in doc.items():
            shells[el] = Irreps(tuple((int(m), Irrep(int(l), 1 if par in ("e", 1, "+1") else -1)) for m, l, par in entries))
        return cls(shells)


TOY_LAYOUT = BasisLayout(DEFAULT_BASIS)


@dataclass
class MolecularSystem:
    elements: list[str]
    positions: np.ndarray  # [n_atoms, 3], Angstrom
    layout: BasisLayout
    n_occ: int
    coeffs: list[list[np.ndarray]]  # [p][A] -> flat values
    orbital_energies: "np.ndarray | None" = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if len(self.elements) != len(self.positions):
            raise ValueError("one position per atom required")
        self.coeffs = [[np.asarray(c, dtype=np.float64) for c in mo] for mo in self.coeffs]
        for p, mo in enumerate(self.coeffs):
            if len(mo) != self.n_atoms:
                raise ValueError(f"MO {p} has {len(mo)} atom blocks, expected {self.n_atoms}")
            for a, c in enumerate(mo):
                want = self.layout.signature(self.elements[a]).dim
                if c.shape != (want,):
                    raise ValueError(f"MO {p}, atom {a}: {c.shape[0]} coefficients, layout needs {want}")
        if not 0 < self.n_occ < self.n_mo:
            raise ValueError(f"need 0 < n_occ < n_mo, got {self.n_occ} of {self.n_mo}")
        if self.orbital_energies is not None:
            self.orbital_energies = np.asarray(self.orbital_energies, dtype=np.float64)
            if self.orbital_energies.shape != (self.n_mo,):
                raise ValueError("one orbital energy per MO required")

    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    @property
    def n_mo(self) -> int:
        return len(self.coeffs)

    def copy(self) -> "MolecularSystem":
        return MolecularSystem(
            list(self.elements),
            self.positions.copy(),
            self.layout,
            self.n_occ,
            [[c.copy() for c in mo] for mo in self.coeffs],
            None if self.orbital_energies is None else self.orbital_energies.copy(),
        )

    # -- symmetry operations ------------------------------------------------

    def rotated(self, R: np.ndarray) -> "MolecularSystem":
        """Rotate positions and every coefficient block by ``R`` jointly."""
        out = self.copy()
        out.positions = self.positions @ np.asarray(R).T
        d = {}
        for p, mo in enumerate(out.coeffs):
            for a, c in enumerate(mo):
                sig = self.layout.signature(self.elements[a])
                blocks = to_blocks(c, sig)
                for ir in blocks:
                    if ir.l not in d:
                        d[ir.l] = wigner_d(ir.l, R)
                    blocks[ir] = blocks[ir] @ d[ir.l].T
                mo[a] = from_blocks(blocks, sig)
        return out

    def translated(self, shift: Sequence[float]) -> "MolecularSystem":
        out = self.copy()
        out.positions = self.positions + np.asarray(shift, dtype=np.float64)
        return out

    def sign_flipped(self, p: int) -> "MolecularSystem":
        out = self.copy()
        out.coeffs[p] = [-c for c in out.coeffs[p]]
        return out

    def atoms_permuted(self, perm: Sequence[int]) -> "MolecularSystem":
        """New atom ``k`` is old atom ``perm[k]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n_atoms)):
            raise ValueError("not a permutation of the atoms")
        out = self.copy()
        out.elements = [self.elements[k] for k in perm]
        out.positions = self.positions[perm]
        out.coeffs = [[mo[k] for k in perm] for mo in out.coeffs]
        return out

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format": MOLSYS_FORMAT,
            "atoms": [{"el": el, "xyz": [float(v) for v in xyz]} for el, xyz in zip(self.elements, self.positions)],
            "basis": self.layout.to_json(),
            "n_occ": self.n_occ,
            "mo_coeffs": [np.concatenate(mo).tolist() for mo in self.coeffs],
            "orbital_energies": None if self.orbital_energies is None else self.orbital_energies.tolist(),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "MolecularSystem":
        if doc.get("format") != MOLSYS_FORMAT:
            raise ValueError(f"not a {MOLSYS_FORMAT} document")
        layout = BasisLayout.from_json(doc["basis"])
        elements = [a["el"] for a in doc["atoms"]]
        positions = np.array([a["xyz"] for a in doc["atoms"]], dtype=np.float64).reshape(-1, 3)
        dims = [layout.signature(el).dim for el in elements]
        bounds = np.cumsum([0] + dims)
        coeffs = []
        for p, flat in enumerate(doc["mo_coeffs"]):
            flat = np.asarray(flat, dtype=np.float64)
            if flat.shape != (bounds[-1],):
                raise ValueError(f"MO {p}: {flat.size} coefficients, layout needs {bounds[-1]}")
            coeffs.append([flat[bounds[a] : bounds[a + 1]] for a in range(len(elements))])
        return cls(elements, positions, layout, int(doc["n_occ"]), coeffs, doc.get("orbital_energies"))


def save_system(sys: MolecularSystem, path: "str | os.PathLike") -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(sys.to_json()))
    os.replace(tmp, path)


def load_system(path: "str | os.PathLike") -> MolecularSystem:
    return MolecularSystem.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# padding


def pad_coefficients(sys: MolecularSystem, layout: "BasisLayout | None" = None) -> dict[Irrep, np.ndarray]:
    """Padded coefficient blocks ``{irrep: [n_mo, n_atoms, k_max, 2l+1]}``.

    Each atom's channels occupy the leading slots of its irrep block; the rest
    are zero.
    """
    layout = layout or sys.layout
    target = layout.padded.mults()
    out = {ir: np.zeros((sys.n_mo, sys.n_atoms, k, ir.dim)) for ir, k in target.items()}
    for a, el in enumerate(sys.elements):
        sig = layout.signature(el)
        stacked = np.stack([mo[a] for mo in sys.coeffs])  # [n_mo, dim]
        for ir, block in to_blocks(stacked, sig).items():
            out[ir][:, a, : block.shape[-2], :] = block
    return out


def unpad_coefficients(padded: Mapping[Irrep, np.ndarray], elements: Sequence[str], layout: BasisLayout) -> list[list[np.ndarray]]:
    n_mo = next(iter(padded.values())).shape[0]
    coeffs: list[list[np.ndarray]] = [[None] * len(elements) for _ in range(n_mo)]
    for a, el in enumerate(elements):
        sig = layout.signature(el)
        blocks = {ir: padded[ir][:, a, :k, :] for ir, k in sig.mults().items()}
        flat = from_blocks(blocks, sig)
        for p in range(n_mo):
            coeffs[p][a] = flat[p].copy()
    return coeffs


# ---------------------------------------------------------------------------
# synthetic systems


def random_positions(rng: np.random.Generator, n_atoms: int, min_dist: float = 0.9, box: float = 2.5) -> np.ndarray:
    pos = []
    while len(pos) < n_atoms:
        cand = rng.uniform(-box, box, 3)
        if all(np.linalg.norm(cand - q) >= min_dist for q in pos):
            pos.append(cand)
    return np.array(pos)


def random_system(
    seed: int,
    n_mo: int,
    n_occ: int,
    elements: "Sequence[str] | None" = None,
    layout: BasisLayout = TOY_LAYOUT,
    support: "Sequence[int] | None" = None,
) -> MolecularSystem:
    """Random geometry with random MO coefficients.

    ``support`` optionally restricts each MO to a subset of atoms (indices);
    coefficients on other atoms are exactly zero.
    """
    rng = np.random.default_rng(seed)
    if elements is None:
        elements = list(rng.choice(["H", "C", "O"], size=3))
    elements = list(elements)
    positions = random_positions(rng, len(elements))
    coeffs = []
    for _ in range(n_mo):
        mo = []
        for a, el in enumerate(elements):
            dim = layout.signature(el).dim
            if support is not None and a not in support:
                mo.append(np.zeros(dim))
            else:
                mo.append(rng.normal(size=dim) / np.sqrt(dim))
        coeffs.append(mo)
    return MolecularSystem(elements, positions, layout, n_occ, coeffs)


def combine_fragments(a: MolecularSystem, b: MolecularSystem, shift: Sequence[float]) -> MolecularSystem:
    """Place ``b`` (translated by ``shift``) next to ``a`` as one system.

    MO order is ``occ(a), occ(b), virt(a), virt(b)``; each fragment's MOs are
    zero on the other fragment's atoms.
    """
    if a.layout.shells != b.layout.shells:
        raise ValueError("fragments must share a basis layout")
    za = [np.zeros_like(c) for c in a.coeffs[0]]
    zb = [np.zeros_like(c) for c in b.coeffs[0]]
    occ = [mo + zb for mo in a.coeffs[: a.n_occ]] + [za + mo for mo in b.coeffs[: b.n_occ]]
    virt = [mo + zb for mo in a.coeffs[a.n_occ :]] + [za + mo for mo in b.coeffs[b.n_occ :]]
    positions = np.concatenate([a.positions, b.positions + np.asarray(shift, dtype=np.float64)])
    return MolecularSystem(a.elements + b.elements, positions, a.layout, a.n_occ + b.n_occ, [[c.copy() for c in mo] for mo in occ + virt])


def fragment_mo_order(n_occ_a: int, n_virt_a: int, n_occ_b: int, n_virt_b: int) -> tuple[list[int], list[int]]:
    """Combined MO indices belonging to fragment a and to fragment b."""
    no = n_occ_a + n_occ_b
    frag_a = list(range(n_occ_a)) + list(range(no, no + n_virt_a))
    frag_b = list(range(n_occ_a, no)) + list(range(no + n_virt_a, no + n_virt_a + n_virt_b))
    return frag_a, frag_b
