"""Atom graphs shared by all MO graphs of a system, with radial and angular edge features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..irreps import sh_blocks
from .config import ModelConfig
from .system import MolecularSystem


def polynomial_cutoff(r, r_max: float, p: int):
    """Smooth envelope, 1 at r = 0 and vanishing with two derivatives at ``r_max``."""
    r = np.asarray(r, dtype=np.float64)
    x = r / r_max
    env = (
        1.0
        - 0.5 * (p + 1) * (p + 2) * x**p
        + p * (p + 2) * x ** (p + 1)
        - 0.5 * p * (p + 1) * x ** (p + 2)
    )
    return np.where(r < r_max, env, 0.0)


def bessel_basis(r, r_max: float, n: int) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    k = np.arange(1, n + 1)
    return np.sqrt(2.0 / r_max) * np.sin(k * np.pi * r[..., None] / r_max) / r[..., None]


def radial_embedding(d, cfg: ModelConfig) -> np.ndarray:
    """``f_cut(d) * [phi_1(d) .. phi_N(d)]``; zero for ``d >= r_max``."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    return polynomial_cutoff(d, cfg.r_max, cfg.cutoff_p)[..., None] * bessel_basis(d, cfg.r_max, cfg.n_bessel)


@dataclass(frozen=True)
class MOGraph:
    """Edge list ``receiver <- sender`` plus per-edge features.

    The topology depends only on the geometry, so one instance serves every
    MO graph of the system (``n_graphs`` copies, one per MO).
    """

    n_graphs: int
    n_nodes: int
    receivers: np.ndarray  # A
    senders: np.ndarray  # B
    distances: np.ndarray
    directions: np.ndarray  # unit (r_B - r_A) / |r_B - r_A|
    radial: np.ndarray  # [n_edges, n_bessel]
    sh: tuple[np.ndarray, ...]  # per degree, [n_edges, 2l+1]
    species: np.ndarray  # one-hot [n_nodes, n_elements]

    @property
    def n_edges(self) -> int:
        return len(self.receivers)


def species_one_hot(elements, cfg: ModelConfig) -> np.ndarray:
    out = np.zeros((len(elements), len(cfg.elements)))
    for a, el in enumerate(elements):
        try:
            out[a, cfg.elements.index(el)] = 1.0
        except ValueError:
            raise ValueError(f"element {el!r} not known to the model ({cfg.elements})") from None
    return out


def build_mo_graphs(sys: MolecularSystem, cfg: ModelConfig) -> MOGraph:
    pos = sys.positions
    diff = pos[None, :, :] - pos[:, None, :]  # [A, B] = r_B - r_A
    dist = np.linalg.norm(diff, axis=-1)
    mask = dist < cfg.r_max
    np.fill_diagonal(mask, False)
    recv, send = np.nonzero(mask)
    d = dist[recv, send]
    if np.any(d <= 0):
        raise ValueError("coincident atoms")
    u = diff[recv, send] / d[:, None] if len(d) else np.zeros((0, 3))
    return MOGraph(
        n_graphs=sys.n_mo,
        n_nodes=sys.n_atoms,
        receivers=recv,
        senders=send,
        distances=d,
        directions=u,
        radial=radial_embedding(d, cfg) if len(d) else np.zeros((0, cfg.n_bessel)),
        sh=tuple(sh_blocks(cfg.sh_lmax, u)),
        species=species_one_hot(sys.elements, cfg),
    )
