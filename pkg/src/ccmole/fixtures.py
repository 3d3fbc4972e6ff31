"""Bundled synthetic fixtures and training-sample builders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cc.ccsd import AmplitudeSet, SolverConfig, ccsd_solve
from .cc.integrals import IntegralSet, generate_synthetic
from .model.system import TOY_LAYOUT, BasisLayout, random_system


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    seed: int
    n_orb: int
    n_occ: int
    coupling: float

    def build(self) -> IntegralSet:
        return generate_synthetic(self.seed, self.n_orb, self.n_occ, self.coupling)


def _bench_spec(seed: int) -> FixtureSpec:
    k = seed - 1
    return FixtureSpec(f"bench-{seed:02d}", seed, (8, 12)[k % 2], (1, 2, 3)[k % 3], (0.05, 0.1, 0.2)[k % 3])


BENCH_FIXTURES: tuple[FixtureSpec, ...] = tuple(_bench_spec(s) for s in range(1, 11))

TWO_ELECTRON_FIXTURES: tuple[FixtureSpec, ...] = (
    FixtureSpec("two-e-1", 101, 4, 1, 0.1),
    FixtureSpec("two-e-2", 102, 5, 1, 0.2),
    FixtureSpec("two-e-3", 103, 6, 1, 0.3),
    FixtureSpec("two-e-4", 104, 6, 1, 0.5),
)

FIXTURE_SETS = {"bench": BENCH_FIXTURES, "two-electron": TWO_ELECTRON_FIXTURES}


def fixture_set(name: str) -> tuple[FixtureSpec, ...]:
    if name == "all":
        return BENCH_FIXTURES + TWO_ELECTRON_FIXTURES
    try:
        return FIXTURE_SETS[name]
    except KeyError:
        raise ValueError(f"unknown fixture set {name!r}; choose from {sorted(FIXTURE_SETS)} or 'all'") from None


def converged_amplitudes(ints: IntegralSet, tol: float = 1e-10, max_iter: int = 300) -> AmplitudeSet:
    rep = ccsd_solve(ints, SolverConfig(tol=tol, max_iter=max_iter))
    if not rep.converged:
        raise ArithmeticError(f"reference CCSD did not converge in {max_iter} iterations")
    return rep.amplitudes


def perturbed(t: AmplitudeSet, noise: float, seed: int) -> AmplitudeSet:
    """``t * (1 + noise * xi)`` with standard normal ``xi``; the t2 noise keeps pair symmetry."""
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=t.t1.shape)
    x2 = rng.normal(size=t.t2.shape)
    x2 = 0.5 * (x2 + x2.transpose(1, 0, 3, 2))
    return AmplitudeSet(t.t1 * (1.0 + noise * x1), t.t2 * (1.0 + noise * x2))


def training_sample(seed: int, n_mo: int = 8, n_occ: int = 2, coupling: float = 0.1, elements=None, layout: BasisLayout = TOY_LAYOUT):
    """Random geometry and coefficients paired with synthetic integrals and their CCSD amplitudes.

    The geometry and the integrals are not physically linked; the sample
    exercises the regression machinery, not chemistry.
    """
    from .training import TrainingSample

    sys = random_system(seed, n_mo, n_occ, elements=elements, layout=layout)
    ints = generate_synthetic(seed, n_mo, n_occ, coupling)
    return TrainingSample(sys, ints, converged_amplitudes(ints))
