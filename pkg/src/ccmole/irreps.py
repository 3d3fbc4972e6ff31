"""Rotation-group tensor algebra on real spherical-harmonic bases.

Conventions (fixed for the whole package):

* Real spherical harmonics, orthonormal on the unit sphere, no Condon-Shortley
  phase. Components are ordered ``m = -l, ..., l``; ``m < 0`` carries
  ``sin(|m| phi)`` and ``m > 0`` carries ``cos(m phi)``. For ``l = 1`` this
  gives the axis order ``(y, z, x)``.
* A flat :class:`IrrepsArray` stores each signature entry ``mult x irrep`` as a
  contiguous ``(mult, 2l+1)`` block in row-major order, i.e. index
  ``offset + k * (2l+1) + (m + l)`` for channel ``k``.
* Clebsch-Gordan coefficients are real and orthonormal:
  ``sum_{m1 m2} C[m1, m2, m3] C[m1, m2, m3'] = delta_{m3 m3'}``. The overall
  sign of each ``(l1, l2, l3)`` table is chosen so that its first nonzero entry
  (in ``m1, m2, m3`` row-major order) is positive.

Model code works on "block dicts": ``{Irrep: tensor[..., mult, 2l+1]}``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping

import numpy as np
import torch

L_MAX = 4

Blocks = dict  # {Irrep: tensor[..., mult, 2l+1]}


@dataclass(frozen=True, order=True)
class Irrep:
    l: int
    p: int  # +1 even, -1 odd

    def __post_init__(self):
        if self.l < 0:
            raise ValueError(f"negative degree {self.l}")
        if self.p not in (1, -1):
            raise ValueError(f"parity must be +1 or -1, got {self.p}")

    @property
    def dim(self) -> int:
        return 2 * self.l + 1

    @classmethod
    def parse(cls, text: str) -> "Irrep":
        m = re.fullmatch(r"\s*(\d+)([eo])\s*", text)
        if m is None:
            raise ValueError(f"cannot parse irrep {text!r}")
        return cls(int(m.group(1)), 1 if m.group(2) == "e" else -1)

    def __mul__(self, other: "Irrep") -> Iterator["Irrep"]:
        """Irreps reachable by coupling ``self`` and ``other``."""
        p = self.p * other.p
        for l in range(abs(self.l - other.l), self.l + other.l + 1):
            yield Irrep(l, p)

    def __str__(self) -> str:
        return f"{self.l}{'e' if self.p == 1 else 'o'}"

    __repr__ = __str__


@dataclass(frozen=True)
class Irreps:
    """Ordered direct sum ``mult_1 x ir_1 + mult_2 x ir_2 + ...``."""

    entries: tuple[tuple[int, Irrep], ...]

    def __post_init__(self):
        for mult, ir in self.entries:
            if mult < 1:
                raise ValueError(f"multiplicity must be >= 1, got {mult}x{ir}")

    @classmethod
    def parse(cls, text: "str | Irreps") -> "Irreps":
        if isinstance(text, Irreps):
            return text
        text = text.strip()
        if not text:
            return cls(())
        entries = []
        for part in text.split("+"):
            m = re.fullmatch(r"\s*(?:(\d+)x)?(\d+[eo])\s*", part)
            if m is None:
                raise ValueError(f"cannot parse irreps {text!r}")
            entries.append((int(m.group(1) or 1), Irrep.parse(m.group(2))))
        return cls(tuple(entries))

    @classmethod
    def from_blocks(cls, mults: Mapping[Irrep, int]) -> "Irreps":
        return cls(tuple((mults[ir], ir) for ir in sorted(mults) if mults[ir] > 0))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __str__(self) -> str:
        return "+".join(f"{mult}x{ir}" for mult, ir in self.entries)

    @property
    def dim(self) -> int:
        return sum(mult * ir.dim for mult, ir in self.entries)

    @property
    def lmax(self) -> int:
        return max((ir.l for _, ir in self.entries), default=0)

    def mults(self) -> dict[Irrep, int]:
        """Total multiplicity per irrep, in sorted irrep order."""
        out: dict[Irrep, int] = {}
        for mult, ir in sorted(self.entries, key=lambda e: e[1]):
            out[ir] = out.get(ir, 0) + mult
        return out

    def irreps(self) -> list[Irrep]:
        return list(self.mults())

    def slices(self) -> list[slice]:
        out, start = [], 0
        for mult, ir in self.entries:
            out.append(slice(start, start + mult * ir.dim))
            start += mult * ir.dim
        return out


@dataclass
class IrrepsArray:
    """A flat array split into irrep blocks by ``signature``.

    ``values`` may carry leading batch axes; the last axis has length
    ``signature.dim``.
    """

    signature: Irreps
    values: np.ndarray

    def __post_init__(self):
        self.signature = Irreps.parse(self.signature)
        if self.values.shape[-1] != self.signature.dim:
            raise ValueError(
                f"values have length {self.values.shape[-1]}, "
                f"signature {self.signature} needs {self.signature.dim}"
            )

    def blocks(self) -> Blocks:
        return to_blocks(self.values, self.signature)

    @classmethod
    def from_blocks(cls, blocks: Blocks, signature: "Irreps | str") -> "IrrepsArray":
        signature = Irreps.parse(signature)
        return cls(signature, from_blocks(blocks, signature))


def _xp(x):
    return torch if isinstance(x, torch.Tensor) else np


def to_blocks(values, signature: Irreps) -> Blocks:
    """Split flat ``values[..., dim]`` into ``{irrep: [..., mult, 2l+1]}``.

    Entries sharing an irrep are concatenated along the channel axis in
    signature order.
    """
    xp = _xp(values)
    parts: dict[Irrep, list] = {}
    for (mult, ir), sl in zip(signature, signature.slices()):
        block = values[..., sl].reshape(*values.shape[:-1], mult, ir.dim)
        parts.setdefault(ir, []).append(block)
    cat = torch.cat if xp is torch else np.concatenate
    return {
        ir: (ps[0] if len(ps) == 1 else cat(ps, -2))
        for ir, ps in sorted(parts.items(), key=lambda kv: kv[0])
    }


def from_blocks(blocks: Blocks, signature: Irreps):
    """Inverse of :func:`to_blocks`; missing irreps are filled with zeros."""
    signature = Irreps.parse(signature)
    ref = next(iter(blocks.values()))
    xp = _xp(ref)
    batch = ref.shape[:-2]
    used: dict[Irrep, int] = {}
    out = []
    for mult, ir in signature:
        start = used.get(ir, 0)
        used[ir] = start + mult
        if ir in blocks:
            block = blocks[ir][..., start : start + mult, :]
        elif xp is torch:
            block = ref.new_zeros(*batch, mult, ir.dim)
        else:
            block = np.zeros((*batch, mult, ir.dim), dtype=ref.dtype)
        out.append(block.reshape(*batch, mult * ir.dim))
    if xp is torch:
        return torch.cat(out, -1)
    return np.concatenate(out, -1)


# ---------------------------------------------------------------------------
# spherical harmonics


def _real_sh_values(lmax: int, vecs: np.ndarray) -> list[np.ndarray]:
    """Real orthonormal spherical harmonics of unit vectors ``vecs[..., 3]``.

    Uses ``P_l^m(z) (1-z^2)^{m/2} cos(m phi) = Q_l^m(z) Re((x+iy)^m)`` with
    ``Q_l^m = d^m P_l / dz^m`` from the three-term recursion, so no angles are
    ever formed.
    """
    x, y, z = vecs[..., 0], vecs[..., 1], vecs[..., 2]
    # Re/Im of (x + iy)^m
    cos_m = [np.ones_like(x)]
    sin_m = [np.zeros_like(x)]
    for m in range(1, lmax + 1):
        c, s = cos_m[-1], sin_m[-1]
        cos_m.append(c * x - s * y)
        sin_m.append(s * x + c * y)
    q = {}
    for m in range(lmax + 1):
        q[m, m] = np.full_like(z, float(math.prod(range(1, 2 * m, 2))))
        if m + 1 <= lmax:
            q[m + 1, m] = (2 * m + 1) * z * q[m, m]
        for l in range(m + 2, lmax + 1):
            q[l, m] = ((2 * l - 1) * z * q[l - 1, m] - (l + m - 1) * q[l - 2, m]) / (l - m)
    out = []
    for l in range(lmax + 1):
        comps = []
        for m in range(-l, l + 1):
            am = abs(m)
            norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
            if m == 0:
                comps.append(norm * q[l, 0])
            elif m > 0:
                comps.append(math.sqrt(2) * norm * q[l, am] * cos_m[am])
            else:
                comps.append(math.sqrt(2) * norm * q[l, am] * sin_m[am])
        out.append(np.stack(comps, -1))
    return out


def sh_signature(lmax: int) -> Irreps:
    return Irreps(tuple((1, Irrep(l, (-1) ** l)) for l in range(lmax + 1)))


def spherical_harmonics(lmax: int, u, *, atol: float = 1e-12) -> IrrepsArray:
    """Real spherical harmonics ``Y_l(u)`` for ``l = 0..lmax``.

    ``u`` may be a single unit 3-vector or a stack ``[..., 3]``. Degree ``l``
    carries parity ``(-1)^l``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != 3:
        raise ValueError("expected 3-vectors")
    norms = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(norms - 1.0) > atol):
        raise ValueError("spherical_harmonics needs unit vectors")
    vals = np.concatenate(_real_sh_values(lmax, u), -1)
    return IrrepsArray(sh_signature(lmax), vals)


def sh_blocks(lmax: int, vecs: np.ndarray) -> list[np.ndarray]:
    """Per-degree SH arrays ``[..., 2l+1]`` of already-normalized vectors."""
    return _real_sh_values(lmax, np.asarray(vecs, dtype=np.float64))


# ---------------------------------------------------------------------------
# Wigner D


@lru_cache(maxsize=None)
def _sample_points(l: int) -> tuple[np.ndarray, np.ndarray]:
    n = 4 * (2 * l + 1) + 8
    i = np.arange(n) + 0.5
    golden = math.pi * (3.0 - math.sqrt(5.0))
    zc = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - zc * zc)
    pts = np.stack([r * np.cos(golden * i), r * np.sin(golden * i), zc], -1)
    y = _real_sh_values(l, pts)[l]
    return pts, np.linalg.pinv(y)


def wigner_d(l: int, R) -> np.ndarray:
    """Real Wigner matrix ``D`` with ``Y_l(R u) = D Y_l(u)``.

    Obtained by least squares over a fixed, well-conditioned point set; for
    ``l <= 4`` the result is orthogonal to ~1e-15.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if l == 0:
        return np.ones((1, 1))
    pts, pinv = _sample_points(l)
    rotated = _real_sh_values(l, pts @ R.T)[l]
    # rotated = Y(pts) @ D.T  ->  D.T = pinv @ rotated
    return (pinv @ rotated).T


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )


def check_rotation(R, atol: float = 1e-12) -> None:
    R = np.asarray(R)
    if R.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.abs(R @ R.T - np.eye(3)).max() > atol or abs(np.linalg.det(R) - 1.0) > atol:
        raise ValueError("not a proper rotation")


def rotate_array(x: IrrepsArray, R) -> IrrepsArray:
    """Apply ``D_l(R)`` to every block of ``x``."""
    blocks = x.blocks()
    out = {ir: b @ wigner_d(ir.l, R).T for ir, b in blocks.items()}
    return IrrepsArray.from_blocks(out, x.signature)


# ---------------------------------------------------------------------------
# Clebsch-Gordan


def _complex_cg(j1: int, m1: int, j2: int, m2: int, j: int, m: int) -> float:
    if m != m1 + m2 or not abs(j1 - j2) <= j <= j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m) > j:
        return 0.0
    f = math.factorial
    pre = math.sqrt(
        (2 * j + 1) * f(j + j1 - j2) * f(j - j1 + j2) * f(j1 + j2 - j) / f(j1 + j2 + j + 1)
    )
    pre *= math.sqrt(f(j + m) * f(j - m) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2))
    total = 0.0
    for k in range(0, j1 + j2 - j + 1):
        denoms = (j1 + j2 - j - k, j1 - m1 - k, j2 + m2 - k, j - j2 + m1 + k, j - j1 - m2 + k)
        if min(denoms) < 0:
            continue
        term = f(k)
        for d in denoms:
            term *= f(d)
        total += (-1) ** k / term
    return pre * total


def _real_from_complex(l: int) -> np.ndarray:
    """``Q`` with ``Y_real = Q @ Y_complex`` (complex basis with CS phase)."""
    q = np.zeros((2 * l + 1, 2 * l + 1), dtype=complex)
    s = 1 / math.sqrt(2)
    for m in range(-l, l + 1):
        r = m + l
        if m == 0:
            q[r, l] = 1.0
        elif m > 0:
            q[r, l + m] = s * (-1) ** m
            q[r, l - m] = s
        else:
            mu = -m
            q[r, l + mu] = s * (-1) ** mu / 1j
            q[r, l - mu] = -s / 1j
    return q


@lru_cache(maxsize=None)
def _cg_table(l1: int, l2: int, l3: int) -> np.ndarray:
    shape = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1)
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        return np.zeros(shape)
    c = np.zeros(shape)
    for m1 in range(-l1, l1 + 1):
        for m2 in range(-l2, l2 + 1):
            m3 = m1 + m2
            if abs(m3) <= l3:
                c[m1 + l1, m2 + l2, m3 + l3] = _complex_cg(l1, m1, l2, m2, l3, m3)
    q1, q2, q3 = _real_from_complex(l1), _real_from_complex(l2), _real_from_complex(l3)
    # features transform like the SH coefficient vectors; the real coupling is
    # the complex one conjugated into the real basis on every leg
    real = np.einsum("ai,bj,ck,ijk->abc", q1, q2, q3.conj(), c)
    if np.abs(real.imag).max() > np.abs(real.real).max():
        real = real.imag
    else:
        real = real.real
    real[np.abs(real) < 1e-14] = 0.0
    real /= np.sqrt((real**2).sum() / (2 * l3 + 1))
    first = real.ravel()[np.flatnonzero(np.abs(real.ravel()) > 1e-12)[0]]
    if first < 0:
        real = -real
    real.setflags(write=False)
    return real


def cg_table(l1: int, l2: int, l3: int) -> np.ndarray:
    """Real coupling tensor ``C[m1, m2, m3]`` for ``l1 (x) l2 -> l3``.

    Returns zeros when the triangle inequality fails.
    """
    if max(l1, l2, l3) > L_MAX:
        raise ValueError(f"degrees above {L_MAX} are not tabulated")
    return _cg_table(l1, l2, l3)


def cg_coefficient(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> float:
    for l, m in ((l1, m1), (l2, m2), (l3, m3)):
        if abs(m) > l:
            raise ValueError(f"|m|={abs(m)} exceeds l={l}")
    return float(cg_table(l1, l2, l3)[m1 + l1, m2 + l2, m3 + l3])


@lru_cache(maxsize=None)
def _cg_torch(l1: int, l2: int, l3: int) -> torch.Tensor:
    return torch.tensor(cg_table(l1, l2, l3), dtype=torch.float64)


def cg_torch(l1: int, l2: int, l3: int) -> torch.Tensor:
    return _cg_torch(l1, l2, l3)


# ---------------------------------------------------------------------------
# equivariant operations


def tensor_product(x, y, l3: int):
    """Couple a degree-``l1`` block ``x[..., 2l1+1]`` with ``y[..., 2l2+1]``.

    Triangle-violating paths return the zero block.
    """
    l1 = (x.shape[-1] - 1) // 2
    l2 = (y.shape[-1] - 1) // 2
    if _xp(x) is torch:
        return torch.einsum("ijk,...i,...j->...k", cg_torch(l1, l2, l3).to(x.dtype), x, y)
    return np.einsum("ijk,...i,...j->...k", cg_table(l1, l2, l3), x, y)


def equivariant_linear(weights: Mapping[Irrep, "torch.Tensor | np.ndarray"], x: Blocks, out: Irreps) -> Blocks:
    """Mix channels within each irrep; ``weights[ir]`` has shape (mult_out, mult_in).

    Output irreps without a matching input block (or without weights) are zero.
    """
    out = Irreps.parse(out)
    ref = next(iter(x.values()))
    xp = _xp(ref)
    batch = ref.shape[:-2]
    res = {}
    for ir, mult_out in out.mults().items():
        w = weights.get(ir)
        if w is not None and ir in x:
            if w.shape != (mult_out, x[ir].shape[-2]):
                raise ValueError(
                    f"weight for {ir} has shape {tuple(w.shape)}, "
                    f"expected {(mult_out, x[ir].shape[-2])}"
                )
            res[ir] = xp.einsum("uv,...vm->...um", w, x[ir])
        elif xp is torch:
            res[ir] = ref.new_zeros(*batch, mult_out, ir.dim)
        else:
            res[ir] = np.zeros((*batch, mult_out, ir.dim))
    return res


def _safe_rsqrt_scale(sq: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    pos = sq > 0
    return pos, torch.where(pos, sq, torch.ones_like(sq))


def norm_eps(x: Blocks, eps, n_reduce: "int | None" = None) -> Blocks:
    """Divide every entry by ``sqrt(sum |x|^2 + |eps|)``.

    The sum runs over the trailing ``n_reduce`` axes of every block, summed
    across blocks (``None``: channel and m axes only, i.e. 2). A zero input
    with ``eps == 0`` maps to zero.
    """
    n_reduce = 2 if n_reduce is None else n_reduce
    blocks = {ir: (b if isinstance(b, torch.Tensor) else torch.as_tensor(b)) for ir, b in x.items()}
    dims = tuple(range(-n_reduce, 0))
    sq = sum((b * b).sum(dim=dims, keepdim=True) for b in blocks.values())
    denom_sq = sq + torch.as_tensor(eps, dtype=torch.float64).abs()
    pos, safe = _safe_rsqrt_scale(denom_sq)
    scale = torch.where(pos, safe.rsqrt(), torch.zeros_like(safe))
    res = {ir: b * scale for ir, b in blocks.items()}
    if not isinstance(next(iter(x.values())), torch.Tensor):
        return {ir: b.numpy() for ir, b in res.items()}
    return res


def separable_layer_norm(x: Blocks, gamma: Mapping[Irrep, torch.Tensor], eps0, eps_gt0) -> Blocks:
    """Layer norm over channels, scalars and higher degrees separately.

    Scalar blocks are mean-centred and divided by ``sigma + |eps0|``; all
    ``l >= 1`` blocks share one ``sigma`` (RMS averaged over degrees) and are
    divided by ``sigma + |eps_gt0|``. ``gamma[ir]``, ``eps0`` and ``eps_gt0``
    are per-channel vectors (scalars broadcast). Blocks are ``[..., C, 2l+1]``.
    """
    numpy_in = not isinstance(next(iter(x.values())), torch.Tensor)
    x = {ir: torch.as_tensor(b) for ir, b in x.items()}
    eps0 = torch.as_tensor(eps0, dtype=torch.float64).abs()
    eps_gt0 = torch.as_tensor(eps_gt0, dtype=torch.float64).abs()

    def _channel_vec(v):
        return v if v.dim() == 0 else v.unsqueeze(-1)

    out = {}
    higher = [ir for ir in x if ir.l > 0]
    for ir in x:
        if ir.l != 0:
            continue
        s = x[ir][..., 0]
        centred = s - s.mean(-1, keepdim=True)
        var = (centred * centred).mean(-1, keepdim=True)
        pos, safe = _safe_rsqrt_scale(var)
        sigma = torch.where(pos, safe.sqrt(), torch.zeros_like(var))
        denom = sigma + eps0
        dpos = denom > 0
        inv = torch.where(dpos, 1.0 / torch.where(dpos, denom, torch.ones_like(denom)), torch.zeros_like(denom))
        out[ir] = (torch.as_tensor(gamma[ir]) * centred * inv).unsqueeze(-1)
    if higher:
        var = sum((x[ir] ** 2).mean(dim=(-2, -1)) for ir in higher) / len(higher)
        var = var[..., None, None]
        pos, safe = _safe_rsqrt_scale(var)
        sigma = torch.where(pos, safe.sqrt(), torch.zeros_like(var))
        denom = sigma + _channel_vec(eps_gt0)
        dpos = denom > 0
        inv = torch.where(dpos, 1.0 / torch.where(dpos, denom, torch.ones_like(denom)), torch.zeros_like(denom))
        for ir in higher:
            out[ir] = _channel_vec(torch.as_tensor(gamma[ir])) * x[ir] * inv
    out = {ir: out[ir] for ir in x}
    if numpy_in:
        return {ir: b.numpy() for ir, b in out.items()}
    return out
