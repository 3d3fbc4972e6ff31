"""Model hyperparameters and named presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Literal, Mapping

from ..irreps import Irreps


# toy s/p/d shell layout with true parity (-1)^l
DEFAULT_BASIS: Mapping[str, str] = {
    "H": "2x0e+1x1o",
    "C": "3x0e+2x1o+1x2e",
    "N": "3x0e+2x1o+1x2e",
    "O": "3x0e+2x1o+1x2e",
}


@dataclass(frozen=True)
class ModelConfig:
    # element -> AO shell signature; fixes the species one-hot order and padding
    basis: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_BASIS))
    n_layers: int = 2
    hidden: str = "16x0e+16x1o+16x2e"
    latent: str = "8x0e+8x1o+8x2e"
    n_heads: int = 2
    # message passing
    n_bessel: int = 8
    r_max: float = 4.0
    cutoff_p: int = 5
    sh_lmax: int = 2
    radial_hidden: int = 16
    avg_num_neighbors: float = 3.0
    correlation_order: int = 3
    # readouts
    t1_irreps: str = "8x0e+8x1o+8x2e"
    t1_mlp: tuple[int, ...] = (16,)
    pair_irreps: str = "8x0e+8x0o+8x1e+8x1o+8x2e+8x2o"
    quad_irreps: str = "8x0e+4x1e+2x2e"
    t2_mlp: tuple[int, ...] = (8,)
    shared_single: bool = True
    norm_placement: Literal["post", "pre"] = "post"
    # negative control only: adds an even (order-2) monomial to every Odd-MACE output
    debug_even_monomial: bool = False

    def __post_init__(self):
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.n_heads < 1:
            raise ValueError("n_heads must be >= 1")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if self.correlation_order < 1 or self.correlation_order > 3:
            raise ValueError("correlation_order must be 1 or 3 (odd monomials only, at most cubic)")
        if self.correlation_order % 2 == 0:
            raise ValueError("only odd correlation orders are supported")
        if self.norm_placement not in ("post", "pre"):
            raise ValueError(f"unknown norm placement {self.norm_placement!r}")
        if len(set(Irreps.parse(self.hidden).mults().values())) != 1:
            raise ValueError("hidden irreps must have one common multiplicity")
        if len(set(Irreps.parse(self.pair_irreps).mults().values())) != 1:
            raise ValueError("pair irreps must have one common multiplicity")
        # tuples survive JSON round-trips as lists
        object.__setattr__(self, "basis", {el: str(Irreps.parse(sig)) for el, sig in dict(self.basis).items()})
        object.__setattr__(self, "t1_mlp", tuple(self.t1_mlp))
        object.__setattr__(self, "t2_mlp", tuple(self.t2_mlp))

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(self.basis)

    @property
    def hidden_irreps(self) -> Irreps:
        return Irreps.parse(self.hidden)

    @property
    def channels(self) -> int:
        return next(iter(self.hidden_irreps.mults().values()))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


DESK = ModelConfig()

FULL = ModelConfig(
    n_layers=4,
    hidden="128x0e+128x1o+128x2e",
    latent="32x0e+32x1o+32x2e",
    n_heads=4,
    n_bessel=10,
    r_max=4.0,
    cutoff_p=5,
    radial_hidden=64,
    t1_irreps="16x0e+16x1o+16x2e",
    t1_mlp=(16,),
    pair_irreps="16x0e+16x0o+16x1e+16x1o+16x2e+16x2o",
    quad_irreps="8x0e+4x1e+2x2e",
    t2_mlp=(8,),
)

# small enough for finite-difference gradient checks (< 500 parameters)
TINY = ModelConfig(
    basis={"H": "1x0e+1x1o", "O": "2x0e+1x1o"},
    n_layers=1,
    hidden="2x0e+2x1o",
    latent="1x0e+1x1o",
    n_heads=1,
    n_bessel=2,
    sh_lmax=1,
    radial_hidden=2,
    t1_irreps="1x0e+1x1o",
    t1_mlp=(2,),
    pair_irreps="1x0e+1x1o+1x1e",
    quad_irreps="2x0e+1x1e",
    t2_mlp=(2,),
)

PRESETS: dict[str, ModelConfig] = {"desk": DESK, "full": FULL, "tiny": TINY}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    decay_step: int = 24
    gamma: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # optimizer steps; the scheduler ticks once per epoch (one pass over the samples)
    steps: int = 2000
    checkpoint_every: int = 0
    log_every: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.decay_step < 1:
            raise ValueError("decay_step must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)

