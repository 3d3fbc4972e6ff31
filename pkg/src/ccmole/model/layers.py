"""Equivariant building blocks operating on block dicts ``{Irrep: [P, A, C, 2l+1]}``.

``P`` indexes MOs (one graph each), ``A`` atoms, ``C`` channels. Every map
here is odd in its feature input, so flipping the sign of one MO's features
flips that MO's output and nothing else.
"""

from __future__ import annotations

import math
from typing import Iterable

import torch
from torch import nn

from ..irreps import Irrep, Irreps, cg_torch, equivariant_linear, norm_eps, separable_layer_norm
from .config import ModelConfig
from .graph import MOGraph

DTYPE = torch.float64


def new_param(*shape: int, init: tuple) -> nn.Parameter:
    """Parameter tagged with its initialization rule (see :func:`init_parameters`)."""
    p = nn.Parameter(torch.zeros(*shape, dtype=DTYPE))
    p.init_rule = init
    return p


def uniform(fan_in: int) -> tuple:
    return ("uniform", 1.0 / math.sqrt(max(fan_in, 1)))


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic init: scaled uniform weights, constants for norm parameters."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for _, p in module.named_parameters():
            kind, value = getattr(p, "init_rule", ("uniform", 1.0))
            if kind == "uniform":
                p.copy_((torch.rand(p.shape, generator=gen, dtype=DTYPE) * 2.0 - 1.0) * value)
            elif kind == "const":
                p.fill_(value)
            else:
                raise ValueError(f"unknown init rule {kind!r}")


class EquivariantLinear(nn.Module):
    def __init__(self, irreps_in: "str | Irreps", irreps_out: "str | Irreps"):
        super().__init__()
        self.irreps_in = Irreps.parse(irreps_in)
        self.irreps_out = Irreps.parse(irreps_out)
        m_in = self.irreps_in.mults()
        self.weights = nn.ParameterDict()
        for ir, m_out in self.irreps_out.mults().items():
            if ir in m_in:
                self.weights[str(ir)] = new_param(m_out, m_in[ir], init=uniform(m_in[ir]))

    def forward(self, x: dict) -> dict:
        w = {Irrep.parse(k): v for k, v in self.weights.items()}
        return equivariant_linear(w, x, self.irreps_out)


def _paths(in1: Iterable[Irrep], in2: Iterable[Irrep], out: Iterable[Irrep]) -> list[tuple[Irrep, Irrep, Irrep]]:
    out = set(out)
    return [(a, b, c) for a in in1 for b in in2 for c in a * b if c in out]


def _all_irreps(lmax: int) -> list[Irrep]:
    return [Irrep(l, p) for l in range(lmax + 1) for p in (1, -1)]


class RadialMLP(nn.Module):
    """Bias-free MLP with SiLU, mapping radial features to per-path channel weights."""

    def __init__(self, n_in: int, hidden: int, n_out: int):
        super().__init__()
        self.w1 = new_param(hidden, n_in, init=uniform(n_in))
        self.w2 = new_param(hidden, hidden, init=uniform(hidden))
        self.w3 = new_param(n_out, hidden, init=uniform(hidden))

    def forward(self, e: torch.Tensor) -> torch.Tensor:
        h = nn.functional.silu(e @ self.w1.T)
        h = nn.functional.silu(h @ self.w2.T)
        return h @ self.w3.T


class OddMACE(nn.Module):
    """Message passing followed by a channel-wise odd tensor polynomial.

    The polynomial is evaluated Horner-style as
    ``((x (x) x) . w2 + w1) (x) x . w3``: an even order-2 intermediate (with a
    constant scalar term) coupled once more with ``x``, giving monomials of
    order 1 and 3 only. Weights depend on the receiving atom's species.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        hidden = cfg.hidden_irreps
        self.irreps = hidden.irreps()
        c = cfg.channels
        n_el = len(cfg.elements)
        sh = [Irrep(l, (-1) ** l) for l in range(cfg.sh_lmax + 1)]
        self.msg_paths = _paths(self.irreps, sh, self.irreps)
        self.linear_up = EquivariantLinear(hidden, hidden)
        self.radial = RadialMLP(cfg.n_bessel, cfg.radial_hidden, len(self.msg_paths) * c)
        self.linear_msg = EquivariantLinear(hidden, hidden)
        self.cubic = cfg.correlation_order == 3
        if self.cubic:
            inter = _all_irreps(hidden.lmax)
            self.paths2 = _paths(self.irreps, self.irreps, inter)
            self.inter = sorted({p[2] for p in self.paths2})
            self.paths3 = _paths(self.inter, self.irreps, self.irreps)
            self.w2 = new_param(n_el, c, len(self.paths2), init=uniform(len(self.paths2)))
            self.w3 = new_param(n_el, c, len(self.paths3), init=uniform(len(self.inter)))
            self.w1 = new_param(n_el, c, init=("uniform", 1.0))
        else:
            self.w_lin = new_param(n_el, c, len(self.irreps), init=("uniform", 1.0))
        self.linear_out = EquivariantLinear(hidden, hidden)

    def messages(self, x: dict, graph: MOGraph) -> dict:
        c = self.cfg.channels
        n_mo, n_at = graph.n_graphs, graph.n_nodes
        out = {ir: x[ir].new_zeros(n_mo, n_at, c, ir.dim) for ir in self.irreps}
        if graph.n_edges == 0:
            return out
        send = torch.as_tensor(graph.senders)
        recv = torch.as_tensor(graph.receivers)
        radial = torch.as_tensor(graph.radial)
        w = self.radial(radial).reshape(graph.n_edges, len(self.msg_paths), c)
        sh = [torch.as_tensor(y) for y in graph.sh]
        for k, (ir1, ir2, ir3) in enumerate(self.msg_paths):
            src = x[ir1][:, send]  # [P, E, C, d1]
            cg = cg_torch(ir1.l, ir2.l, ir3.l)
            m = torch.einsum("pecx,ey,xyz->pecz", src, sh[ir2.l], cg) * w[None, :, k, :, None]
            out[ir3] = out[ir3].index_add(1, recv, m)
        return {ir: v / self.cfg.avg_num_neighbors for ir, v in out.items()}

    def polynomial(self, x: dict, species: torch.Tensor) -> dict:
        if not self.cubic:
            w = torch.einsum("ae,ecq->acq", species, self.w_lin)
            return {ir: x[ir] * w[None, :, :, k, None] for k, ir in enumerate(self.irreps)}
        w2 = torch.einsum("ae,ecq->acq", species, self.w2)[None, ..., None]
        w3 = torch.einsum("ae,ecq->acq", species, self.w3)[None, ..., None]
        w1 = torch.einsum("ae,ec->ac", species, self.w1)[None, ..., None]
        ref = x[self.irreps[0]]
        mid = {ir: ref.new_zeros(*ref.shape[:-1], ir.dim) for ir in self.inter}
        for k, (a, b, c) in enumerate(self.paths2):
            mid[c] = mid[c] + w2[..., k, :] * torch.einsum("...x,...y,xyz->...z", x[a], x[b], cg_torch(a.l, b.l, c.l))
        scalar = Irrep(0, 1)
        mid[scalar] = mid[scalar] + w1
        out = {ir: ref.new_zeros(*ref.shape[:-1], ir.dim) for ir in self.irreps}
        if self.cfg.debug_even_monomial:
            out = {ir: mid.get(ir, out[ir]) for ir in self.irreps}
        for k, (a, b, c) in enumerate(self.paths3):
            out[c] = out[c] + w3[..., k, :] * torch.einsum("...x,...y,xyz->...z", mid[a], x[b], cg_torch(a.l, b.l, c.l))
        return out

    def forward(self, x: dict, graph: MOGraph, species: torch.Tensor) -> dict:
        h = self.linear_up(x)
        m = self.linear_msg(self.messages(h, graph))
        return self.linear_out(self.polynomial(m, species))


class MOAttention(nn.Module):
    """Softmax-free multi-head attention across MOs.

    Scores are inner products of norm-scaled queries and keys over all atoms,
    channels and components, so ``|S_pq| <= 1``.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        hidden, latent = cfg.hidden_irreps, Irreps.parse(cfg.latent)
        self.q = nn.ModuleList(EquivariantLinear(hidden, latent) for _ in range(cfg.n_heads))
        self.k = nn.ModuleList(EquivariantLinear(hidden, latent) for _ in range(cfg.n_heads))
        self.v = nn.ModuleList(EquivariantLinear(hidden, hidden) for _ in range(cfg.n_heads))
        self.eps_q = new_param(cfg.n_heads, init=("const", 1e-3))
        self.eps_k = new_param(cfg.n_heads, init=("const", 1e-3))
        self.eps_o = new_param(cfg.n_heads, init=("const", 1e-3))
        self.head_weights = new_param(cfg.n_heads, init=("uniform", 1.0))

    def scores(self, x: dict, h: int) -> torch.Tensor:
        q = norm_eps(self.q[h](x), self.eps_q[h], n_reduce=3)
        k = norm_eps(self.k[h](x), self.eps_k[h], n_reduce=3)
        return sum(torch.einsum("pacm,qacm->pq", q[ir], k[ir]) for ir in q)

    def forward(self, x: dict) -> dict:
        out = None
        for h in range(len(self.q)):
            s = self.scores(x, h)
            v = self.v[h](x)
            o = norm_eps({ir: torch.einsum("pq,qacm->pacm", s, b) for ir, b in v.items()}, self.eps_o[h], n_reduce=3)
            term = {ir: self.head_weights[h] * b for ir, b in o.items()}
            out = term if out is None else {ir: out[ir] + term[ir] for ir in out}
        return out


class LayerNorm(nn.Module):
    def __init__(self, irreps: "str | Irreps"):
        super().__init__()
        irreps = Irreps.parse(irreps)
        c = next(iter(irreps.mults().values()))
        self.gamma = nn.ParameterDict({str(ir): new_param(m, init=("const", 1.0)) for ir, m in irreps.mults().items()})
        self.eps0 = new_param(c, init=("const", 1e-3))
        self.eps_gt0 = new_param(c, init=("const", 1e-3))

    def forward(self, x: dict) -> dict:
        gamma = {Irrep.parse(k): v for k, v in self.gamma.items()}
        return separable_layer_norm(x, gamma, self.eps0, self.eps_gt0)


class TransformerLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.post = cfg.norm_placement == "post"
        self.attention = MOAttention(cfg)
        self.norm1 = LayerNorm(cfg.hidden_irreps)
        self.mace = OddMACE(cfg)
        self.norm2 = LayerNorm(cfg.hidden_irreps)

    def forward(self, x: dict, graph: MOGraph, species: torch.Tensor) -> dict:
        if self.post:
            a = self.attention(x)
            x = self.norm1({ir: x[ir] + a[ir] for ir in x})
            m = self.mace(x, graph, species)
            return self.norm2({ir: x[ir] + m[ir] for ir in x})
        a = self.attention(self.norm1(x))
        x = {ir: x[ir] + a[ir] for ir in x}
        m = self.mace(self.norm2(x), graph, species)
        return {ir: x[ir] + m[ir] for ir in x}


class OddMLP(nn.Module):
    """Bias-free MLP with tanh between layers; odd in its input."""

    def __init__(self, n_in: int, widths: tuple[int, ...]):
        super().__init__()
        sizes = (n_in, *widths, 1)
        self.weights = nn.ParameterList(new_param(b, a, init=uniform(a)) for a, b in zip(sizes[:-1], sizes[1:]))

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        for k, w in enumerate(self.weights):
            if k:
                y = torch.tanh(y)
            y = y @ w.T
        return y[..., 0]
