"""Symmetry checks for a model on one system: rotation, orbital sign, atom order, fragments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cc.ccsd import AmplitudeSet
from .cc.integrals import IntegralSet, combine_noninteracting, flip_orbital_sign
from .irreps import random_rotation
from .model.mole import MoleModel, predict
from .model.system import MolecularSystem, combine_fragments

ROTATION_TOL = 1e-9
SIGN_TOL = 1e-12
PERMUTATION_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float
    trials: int = 1
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def to_json(self) -> dict:
        return {"name": self.name, "residual": self.residual, "tol": self.tol, "trials": self.trials, "passed": self.passed}


def _maxdiff(a: AmplitudeSet, b: AmplitudeSet) -> float:
    return float(max(np.abs(a.t1 - b.t1).max(initial=0.0), np.abs(a.t2 - b.t2).max(initial=0.0)))


def rotation_check(model: MoleModel, sys: MolecularSystem, ints: IntegralSet, trials: int, seed: int = 0) -> CheckResult:
    """Amplitudes must not change when geometry and coefficients rotate together."""
    base = predict(model, sys, ints)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        worst = max(worst, _maxdiff(predict(model, sys.rotated(random_rotation(rng)), ints), base))
    return CheckResult("rotation", worst, ROTATION_TOL, trials)


def sign_factors(n_mo: int, n_occ: int, flipped: int) -> tuple[np.ndarray, np.ndarray]:
    s = np.ones(n_mo)
    s[flipped] = -1.0
    so, sv = s[:n_occ], s[n_occ:]
    return so[:, None] * sv[None, :], np.einsum("i,j,a,b->ijab", so, so, sv, sv)


def sign_check(model: MoleModel, sys: MolecularSystem, ints: IntegralSet, trials: int, seed: int = 0) -> CheckResult:
    """Flipping MO ``p`` (coefficients and integrals) multiplies each amplitude by the product of its index signs."""
    base = predict(model, sys, ints)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = int(rng.integers(sys.n_mo))
        t = predict(model, sys.sign_flipped(p), flip_orbital_sign(ints, p))
        f1, f2 = sign_factors(sys.n_mo, sys.n_occ, p)
        worst = max(worst, _maxdiff(t, AmplitudeSet(base.t1 * f1, base.t2 * f2)))
    return CheckResult("sign", worst, SIGN_TOL, trials)


def permutation_check(model: MoleModel, sys: MolecularSystem, ints: IntegralSet, trials: int, seed: int = 0) -> CheckResult:
    base = predict(model, sys, ints)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        worst = max(worst, _maxdiff(predict(model, sys.atoms_permuted(rng.permutation(sys.n_atoms)), ints), base))
    return CheckResult("permutation", worst, PERMUTATION_TOL, trials)


def pair_symmetry_check(model: MoleModel, sys: MolecularSystem, ints: IntegralSet) -> CheckResult:
    t = predict(model, sys, ints)
    return CheckResult("pair-exchange", t.pair_asymmetry(), 0.0)


def fragment_masks(no_a: int, nv_a: int, no_b: int, nv_b: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of t1/t2 entries whose indices all lie on one fragment."""
    fo = np.array([0] * no_a + [1] * no_b)
    fv = np.array([0] * nv_a + [1] * nv_b)
    m1 = fo[:, None] == fv[None, :]
    i, j, a, b = np.ix_(fo, fo, fv, fv)
    m2 = (i == j) & (i == a) & (i == b)
    return m1, m2


def size_extensivity_check(
    model: MoleModel,
    a: tuple[MolecularSystem, IntegralSet],
    b: tuple[MolecularSystem, IntegralSet],
    separation: "float | None" = None,
) -> CheckResult:
    """Two fragments beyond the cutoff: every amplitude mixing them must be exactly zero.

    The reported residual is the largest cross amplitude; ``details`` also
    carries the deviation of the intra-fragment blocks from the isolated
    fragments (not part of pass/fail).
    """
    (sa, ha), (sb, hb) = a, b
    r_max = model.cfg.r_max
    if separation is None:
        separation = float(sa.positions[:, 0].max() - sb.positions[:, 0].min()) + r_max + 1.0
    joint = combine_fragments(sa, sb, [separation, 0.0, 0.0])
    gap = np.linalg.norm(joint.positions[: sa.n_atoms, None] - joint.positions[None, sa.n_atoms :], axis=-1).min()
    if gap <= r_max:
        raise ValueError(f"fragments are only {gap:.3f} apart; need more than r_max = {r_max}")
    t = predict(model, joint, combine_noninteracting(ha, hb))
    m1, m2 = fragment_masks(sa.n_occ, sa.n_mo - sa.n_occ, sb.n_occ, sb.n_mo - sb.n_occ)
    cross = float(max(np.abs(t.t1[~m1]).max(initial=0.0), np.abs(t.t2[~m2]).max(initial=0.0)))
    ta, tb = predict(model, sa, ha), predict(model, sb, hb)
    oa, va = sa.n_occ, sa.n_mo - sa.n_occ
    intra = max(
        np.abs(t.t1[:oa, :va] - ta.t1).max(),
        np.abs(t.t1[oa:, va:] - tb.t1).max(),
        np.abs(t.t2[:oa, :oa, :va, :va] - ta.t2).max(),
        np.abs(t.t2[oa:, oa:, va:, va:] - tb.t2).max(),
    )
    return CheckResult("size-extensivity", cross, 0.0, 1, {"intra_deviation": float(intra), "gap": float(gap)})


def run_suite(
    model: MoleModel, sys: MolecularSystem, ints: IntegralSet, trials: int, seed: int = 0
) -> list[CheckResult]:
    """All checks on one system; the fragment check pairs the system with a translated copy of itself."""
    if trials <= 0:
        return []
    return [
        rotation_check(model, sys, ints, trials, seed),
        sign_check(model, sys, ints, trials, seed),
        permutation_check(model, sys, ints, trials, seed),
        pair_symmetry_check(model, sys, ints),
        size_extensivity_check(model, (sys, ints), (sys, ints)),
    ]
