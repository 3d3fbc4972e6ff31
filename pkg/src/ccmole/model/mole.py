"""The full amplitude model: embedding, transformer stack, and T1/T2 readouts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..cc.ccsd import AmplitudeSet, mp2_amplitudes
from ..cc.integrals import IntegralSet
from ..irreps import Irrep, Irreps, cg_torch, norm_eps
from .config import ModelConfig
from .graph import MOGraph, build_mo_graphs
from .layers import DTYPE, EquivariantLinear, OddMLP, TransformerLayer, _paths, init_parameters, new_param, uniform
from .system import BasisLayout, MolecularSystem, pad_coefficients


def _invariant_pairing(u: dict, v: dict) -> torch.Tensor:
    """``y[p, q, (ir, k)] = sum_A sum_m u[p,A,k,m] v[q,A,k,m] / sqrt(2l+1)``.

    The m-diagonal sum scaled by ``1/sqrt(2l+1)`` is the ``l (x) l -> 0``
    Clebsch-Gordan coupling in this basis.
    """
    parts = [torch.einsum("pakm,qakm->pqk", u[ir], v[ir]) / math.sqrt(ir.dim) for ir in u]
    return torch.cat(parts, -1)


class T1Readout(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        out = Irreps.parse(cfg.t1_irreps)
        self.shared = cfg.shared_single
        self.single_occ = EquivariantLinear(cfg.hidden_irreps, out)
        self.single_virt = None if self.shared else EquivariantLinear(cfg.hidden_irreps, out)
        self.eps = new_param(1, init=("const", 1e-3))
        n_feat = sum(m for ir, m in out.mults().items() if ir in cfg.hidden_irreps.mults())
        self.mlp = OddMLP(n_feat, cfg.t1_mlp)

    def features(self, x_occ: dict, x_virt: dict) -> torch.Tensor:
        xo = norm_eps(x_occ, self.eps[0], n_reduce=3)
        xv = norm_eps(x_virt, self.eps[0], n_reduce=3)
        yo = self.single_occ(xo)
        yv = (self.single_occ if self.shared else self.single_virt)(xv)
        keep = [ir for ir in yo if str(ir) in self.single_occ.weights]
        return _invariant_pairing({ir: yo[ir] for ir in keep}, {ir: yv[ir] for ir in keep})

    def forward(self, x_occ: dict, x_virt: dict) -> torch.Tensor:
        return self.mlp(self.features(x_occ, x_virt))


class T2Readout(nn.Module):
    """Pair features ``f_ia`` from channel-mixing CG products, then quadruple invariants.

    Inputs are first projected to the pair width so the channel-mixing product
    stays small (``w[k, kbar, path]``).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        pair = Irreps.parse(cfg.pair_irreps)
        kp = next(iter(pair.mults().values()))
        src = Irreps(tuple((kp, ir) for ir in cfg.hidden_irreps.irreps()))
        self.pair = pair
        self.project = EquivariantLinear(cfg.hidden_irreps, src)
        self.paths = _paths(src.irreps(), src.irreps(), pair.irreps())
        self.w = new_param(kp, kp, len(self.paths), init=uniform(kp * max(len(self.paths), 1)))
        self.eps = new_param(1, init=("const", 1e-3))
        quad = Irreps.parse(cfg.quad_irreps)
        self.quad = EquivariantLinear(pair, quad)
        self.quad_kept = [ir for ir in quad.irreps() if ir in pair.mults()]
        self.mlp = OddMLP(sum(quad.mults()[ir] for ir in self.quad_kept), cfg.t2_mlp)

    def pair_features(self, x_occ: dict, x_virt: dict) -> dict:
        """``f'[i, a]`` blocks ``{ir: [o, v, A, K, 2l+1]}``."""
        xi = self.project(x_occ)
        xa = self.project(x_virt)
        ref = next(iter(xi.values()))
        o, v = ref.shape[0], next(iter(xa.values())).shape[0]
        n_at, kp = ref.shape[1], ref.shape[2]
        f = {ir: ref.new_zeros(o, v, n_at, kp, ir.dim) for ir in self.pair.irreps()}
        for k, (a, b, c) in enumerate(self.paths):
            mixed = torch.einsum("kj,vAjy->vAky", self.w[:, :, k], xa[b])
            f[c] = f[c] + torch.einsum("oAkx,vAky,xyz->ovAkz", xi[a], mixed, cg_torch(a.l, b.l, c.l))
        f = norm_eps(f, self.eps[0], n_reduce=3)
        return self.quad(f)

    def forward(self, x_occ: dict, x_virt: dict) -> torch.Tensor:
        fp = self.pair_features(x_occ, x_virt)
        o, v = next(iter(fp.values())).shape[:2]
        flat = {ir: fp[ir].reshape(o * v, *fp[ir].shape[2:]) for ir in self.quad_kept}
        n = o * v
        iu, ju = torch.triu_indices(n, n)
        # evaluate each unordered pair once and mirror: exact (ia)<->(jb) symmetry
        y = torch.cat(
            [torch.einsum("nakm,nakm->nk", flat[ir][iu], flat[ir][ju]) / math.sqrt(ir.dim) for ir in self.quad_kept], -1
        )
        vals = self.mlp(y)
        net = vals.new_zeros(n, n)
        net = net.index_put((iu, ju), vals).index_put((ju, iu), vals)
        return net.reshape(o, v, o, v).permute(0, 2, 1, 3)


@dataclass(frozen=True)
class PreparedInput:
    """Geometry-dependent tensors for one system (no trainable state)."""

    coeffs: dict  # {Irrep: [n_mo, n_atoms, k_max, 2l+1]}
    graph: MOGraph
    species: torch.Tensor
    n_occ: int


class MoleModel(nn.Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.layout = BasisLayout(cfg.basis)
        self.embed = EquivariantLinear(self.layout.padded, cfg.hidden_irreps)
        self.layers = nn.ModuleList(TransformerLayer(cfg) for _ in range(cfg.n_layers))
        self.t1 = T1Readout(cfg)
        self.t2 = T2Readout(cfg)
        init_parameters(self, seed)

    # -- inputs -------------------------------------------------------------

    def prepare(self, sys: MolecularSystem) -> PreparedInput:
        for el in set(sys.elements):
            if el not in self.layout.shells:
                raise ValueError(f"element {el!r} is not in the model basis")
            if sys.layout.signature(el) != self.layout.signature(el):
                raise ValueError(f"basis layout for {el!r} differs from the model's")
        padded = pad_coefficients(sys, self.layout)
        graph = build_mo_graphs(sys, self.cfg)
        return PreparedInput(
            {ir: torch.as_tensor(b, dtype=DTYPE) for ir, b in padded.items()},
            graph,
            torch.as_tensor(graph.species, dtype=DTYPE),
            sys.n_occ,
        )

    # -- forward ------------------------------------------------------------

    def features(self, inp: PreparedInput) -> dict:
        x = self.embed(inp.coeffs)
        for layer in self.layers:
            x = layer(x, inp.graph, inp.species)
        return x

    def network_amplitudes(self, inp: PreparedInput) -> tuple[torch.Tensor, torch.Tensor]:
        """Network terms ``(t1[i,a], dt2[i,j,a,b])`` without the MP2 baseline."""
        x = self.features(inp)
        o = inp.n_occ
        x_occ = {ir: b[:o] for ir, b in x.items()}
        x_virt = {ir: b[o:] for ir, b in x.items()}
        return self.t1(x_occ, x_virt), self.t2(x_occ, x_virt)

    def forward(self, inp: PreparedInput, mp2_t2: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        t1, dt2 = self.network_amplitudes(inp)
        return t1, dt2 + mp2_t2

    # -- flat parameter vector ----------------------------------------------

    def index_map(self) -> list[dict]:
        out, off = [], 0
        for name, p in self.named_parameters():
            out.append({"name": name, "offset": off, "shape": list(p.shape)})
            off += p.numel()
        return out

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def get_flat(self) -> np.ndarray:
        return nn.utils.parameters_to_vector(self.parameters()).detach().numpy().copy()

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params(),):
            raise ValueError(f"flat vector has {vec.size} entries, model has {self.n_params()}")
        with torch.no_grad():
            nn.utils.vector_to_parameters(torch.as_tensor(vec.copy(), dtype=DTYPE), self.parameters())

    def zero_(self) -> "MoleModel":
        self.set_flat(np.zeros(self.n_params()))
        return self


def check_consistent(sys: MolecularSystem, ints: IntegralSet) -> None:
    if sys.n_mo != ints.n_orb or sys.n_occ != ints.n_occ:
        raise ValueError(
            f"system has {sys.n_mo} MOs / {sys.n_occ} occupied, integrals have {ints.n_orb} / {ints.n_occ}"
        )


def predict(model: MoleModel, sys: MolecularSystem, ints: IntegralSet) -> AmplitudeSet:
    """``t1`` from the network; ``t2`` = network term + MP2 amplitudes."""
    check_consistent(sys, ints)
    mp2 = mp2_amplitudes(ints).t2
    with torch.no_grad():
        t1, t2 = model(model.prepare(sys), torch.as_tensor(mp2, dtype=DTYPE))
    return AmplitudeSet(t1.numpy().copy(), t2.numpy().copy())
