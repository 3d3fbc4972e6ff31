"""Acceptance criteria. Each test prints one PASS/FAIL line with the measured value."""

import time

import numpy as np
import pytest

from ccmole.bench import cycle_bench, loglog_slope, residual_timings
from ccmole.cc.ccsd import (
    AmplitudeSet,
    SolverConfig,
    ccsd_residual,
    ccsd_solve,
    correlation_energy,
    mp2_amplitudes,
)
from ccmole.cc.fci import fci_oracle
from ccmole.cc.integrals import generate_synthetic
from ccmole.cc.rdm import xccsd_1rdm
from ccmole.cc.reference import naive_residual
from ccmole.checks import pair_symmetry_check, rotation_check, sign_check, size_extensivity_check
from ccmole.fixtures import BENCH_FIXTURES, TWO_ELECTRON_FIXTURES, training_sample
from ccmole.model.config import DESK, TINY, TrainConfig
from ccmole.model.mole import MoleModel, predict
from ccmole.model.system import BasisLayout, random_system
from ccmole.training import finite_difference_gradient, gradient, gradient_relative_error, random_parameters, train

# pinned tolerances
TWO_ELECTRON_TOL = 1e-9
TWO_ELECTRON_SECONDS = 10.0
MP2_TOL = 1e-12
RESIDUAL_TOL = 1e-12
ROTATION_TOL = 1e-9
ROTATIONS = 20
SIGN_TOL = 1e-12
FD_STEP = 1e-4
FD_TOL = 1e-5
FD_MAX_PARAMS = 500
FD_SEEDS = 5
RDM_TOL = 1e-12
RDM_SETS = 20
CYCLE_TOL = 1e-3
CYCLE_NOISE = 0.01
CYCLE_MIN_WINS = 8
OVERFIT_STEPS = 2000
OVERFIT_FACTOR = 100.0
OVERFIT_SECONDS = 600.0
SCALING_SIZES = (16, 24, 32, 48)
SCALING_BAND = (4.5, 7.0)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return emit


def test_01_two_electron_exactness(verdict):
    t0 = time.perf_counter()
    errors = []
    for f in TWO_ELECTRON_FIXTURES:
        ints = f.build()
        rep = ccsd_solve(ints, SolverConfig(tol=1e-12, max_iter=500))
        errors.append(abs(ints.reference_energy() + rep.energy - fci_oracle(ints)))
    elapsed = time.perf_counter() - t0
    ok = len(errors) == 4 and max(errors) <= TWO_ELECTRON_TOL and elapsed < TWO_ELECTRON_SECONDS
    verdict(1, "two-electron CCSD = FCI", ok, f"max |dE| = {max(errors):.2e} Eh over {len(errors)} fixtures in {elapsed:.2f} s")


def _mp2_energy_loops(ints):
    o, n, e, g = ints.n_occ, ints.n_orb, ints.eps, ints.eri
    total = 0.0
    for i in range(o):
        for j in range(o):
            for a in range(o, n):
                for b in range(o, n):
                    total += g[i, a, j, b] * (2 * g[i, a, j, b] - g[i, b, j, a]) / (e[i] + e[j] - e[a] - e[b])
    return total


def test_02_mp2_identity(verdict):
    step_err, energy_err = 0.0, 0.0
    for f in BENCH_FIXTURES:
        ints = f.build()
        first = ccsd_solve(ints, SolverConfig(guess="zeros", max_iter=1)).amplitudes
        mp2 = mp2_amplitudes(ints)
        step_err = max(step_err, np.abs(first.t2 - mp2.t2).max(), np.abs(first.t1).max())
        energy_err = max(energy_err, abs(correlation_energy(ints, mp2) - _mp2_energy_loops(ints)))
    ok = step_err <= MP2_TOL and energy_err <= MP2_TOL
    verdict(2, "first step from zero = MP2", ok, f"amplitude diff {step_err:.2e}, energy diff {energy_err:.2e}")


def test_03_residual_oracle(verdict):
    worst = 0.0
    cases = [(4, 1), (4, 2), (5, 2), (6, 2), (6, 3)]
    for k, (n, o) in enumerate(cases):
        ints = generate_synthetic(100 + k, n, o, 0.3)
        rng = np.random.default_rng(k)
        t2 = rng.normal(scale=0.1, size=(o, o, n - o, n - o))
        t = AmplitudeSet(rng.normal(scale=0.1, size=(o, n - o)), 0.5 * (t2 + t2.transpose(1, 0, 3, 2)))
        r1, r2 = ccsd_residual(ints, t)
        n1, n2 = naive_residual(ints, t)
        worst = max(worst, np.abs(r1 - n1).max(), np.abs(r2 - n2).max())
    verdict(3, "residual vs nested loops", worst <= RESIDUAL_TOL, f"max diff {worst:.2e} over {len(cases)} instances")


def test_04_symmetry_suite(verdict):
    model = MoleModel(DESK, seed=7)
    sys = random_system(21, 8, 3, elements=["O", "C", "H", "H"])
    ints = generate_synthetic(21, 8, 3, 0.1)
    rot = rotation_check(model, sys, ints, ROTATIONS, seed=1)
    sign = sign_check(model, sys, ints, sys.n_mo, seed=1)
    pair = pair_symmetry_check(model, sys, ints)
    a = (random_system(22, 5, 2, elements=["O", "H"]), generate_synthetic(22, 5, 2, 0.1))
    b = (random_system(23, 6, 2, elements=["C", "H", "H"]), generate_synthetic(23, 6, 2, 0.1))
    frag = size_extensivity_check(model, a, b)
    ok = rot.residual <= ROTATION_TOL and sign.residual <= SIGN_TOL and frag.residual == 0.0 and pair.residual == 0.0
    detail = (
        f"rotation {rot.residual:.1e} ({ROTATIONS} rotations), sign {sign.residual:.1e}, "
        f"cross-fragment max {frag.residual:.1e}, pair asymmetry {pair.residual:.1e}"
    )
    verdict(4, "equivariance and size extensivity", ok, detail)


def test_05_gradient_check(verdict):
    layout = BasisLayout(TINY.basis)
    worst, n_params = 0.0, 0
    for seed in range(FD_SEEDS):
        sample = training_sample(200 + seed, n_mo=5, n_occ=2, coupling=0.2, elements=["O", "H", "H"], layout=layout)
        model = MoleModel(TINY, seed=seed)
        model.set_flat(random_parameters(model, seed))
        n_params = model.n_params()
        g = gradient(model, sample)
        worst = max(worst, gradient_relative_error(g, finite_difference_gradient(model, sample, FD_STEP)))
    ok = worst <= FD_TOL and n_params <= FD_MAX_PARAMS
    verdict(5, "gradient vs central differences", ok, f"max relative error {worst:.2e}, {n_params} parameters, {FD_SEEDS} seeds")


def test_06_zero_model_identity(verdict):
    sys = random_system(31, 9, 3, elements=["O", "C", "N", "H"])
    ints = generate_synthetic(31, 9, 3, 0.2)
    t = predict(MoleModel(DESK).zero_(), sys, ints)
    ok = not np.any(t.t1) and np.array_equal(t.t2, mp2_amplitudes(ints).t2)
    verdict(6, "zero parameters give (0, MP2)", ok, "bit-for-bit" if ok else "mismatch")


def test_07_rdm_trace(verdict):
    worst = 0.0
    rng = np.random.default_rng(7)
    for _ in range(RDM_SETS):
        o, v = int(rng.integers(1, 5)), int(rng.integers(1, 8))
        t2 = rng.normal(scale=0.2, size=(o, o, v, v))
        t = AmplitudeSet(rng.normal(scale=0.2, size=(o, v)), 0.5 * (t2 + t2.transpose(1, 0, 3, 2)))
        worst = max(worst, abs(np.trace(xccsd_1rdm(t)) - o))
    verdict(7, "1-RDM trace = n_occ", worst <= RDM_TOL, f"max deviation {worst:.2e} over {RDM_SETS} sets")


def test_08_cycle_reduction(verdict):
    rows = cycle_bench(BENCH_FIXTURES, CYCLE_NOISE, CYCLE_TOL)
    wins = sum(r.warm_wins for r in rows)
    mp2 = np.mean([r.mp2_iterations for r in rows])
    warm = np.mean([r.warm_iterations for r in rows])
    verdict(8, "warm start beats MP2 guess", wins >= CYCLE_MIN_WINS, f"{wins}/{len(rows)} fixtures; average cycles {mp2:.2f} -> {warm:.2f}")


@pytest.mark.slow
def test_09_overfit_one(verdict):
    sample = training_sample(0, n_mo=8, n_occ=2, coupling=0.2)
    t0 = time.perf_counter()
    ck = train([sample], DESK, TrainConfig(steps=OVERFIT_STEPS), seed=0)
    elapsed = time.perf_counter() - t0
    h = ck.loss_history
    factor = h[0] / h[-1]
    ok = len(h) == OVERFIT_STEPS and factor >= OVERFIT_FACTOR and elapsed < OVERFIT_SECONDS
    verdict(9, "overfit one sample", ok, f"loss {h[0]:.3e} -> {h[-1]:.3e} ({factor:.0f}x) in {elapsed:.0f} s")


def test_10_scaling(verdict):
    times = residual_timings(SCALING_SIZES, reps=3)
    slope = loglog_slope(SCALING_SIZES, times)
    lo, hi = SCALING_BAND
    detail = ", ".join(f"n={n}: {t * 1e3:.1f} ms" for n, t in zip(SCALING_SIZES, times))
    verdict(10, "residual scaling exponent", lo <= slope <= hi, f"slope {slope:.2f} ({detail})")
