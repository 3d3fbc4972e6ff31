"""Solver cycle counts from cold and warm guesses, and wall-time scaling fits."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .cc.ccsd import SolverConfig, ccsd_residual, ccsd_solve, mp2_amplitudes
from .cc.integrals import generate_synthetic
from .fixtures import FixtureSpec, converged_amplitudes, perturbed
from .model.config import ModelConfig
from .model.layers import DTYPE
from .model.mole import MoleModel
from .model.system import random_system


@dataclass
class CycleRow:
    fixture: str
    n_orb: int
    n_occ: int
    coupling: float
    mp2_iterations: int
    mp2_converged: bool
    warm_iterations: int
    warm_converged: bool
    energy: float

    @property
    def warm_wins(self) -> bool:
        return self.warm_converged and (not self.mp2_converged or self.warm_iterations < self.mp2_iterations)


def cycle_bench(fixtures: Sequence[FixtureSpec], noise: float = 0.01, tol: float = 1e-3, max_iter: int = 100) -> list[CycleRow]:
    """Iterations to ``tol`` from the MP2 guess and from converged amplitudes with relative noise."""
    rows = []
    for f in fixtures:
        ints = f.build()
        ref = converged_amplitudes(ints)
        warm = perturbed(ref, noise, f.seed)
        cold = ccsd_solve(ints, SolverConfig(tol=tol, max_iter=max_iter, guess="mp2"))
        hot = ccsd_solve(ints, SolverConfig(tol=tol, max_iter=max_iter, guess=warm))
        rows.append(
            CycleRow(f.name, f.n_orb, f.n_occ, f.coupling, cold.iterations, cold.converged, hot.iterations, hot.converged, hot.energy)
        )
    return rows


def summarize_cycles(rows: Sequence[CycleRow]) -> dict:
    def avg(key):
        return float(np.mean([getattr(r, key) for r in rows])) if rows else 0.0

    return {
        "fixtures": len(rows),
        "mp2_average_cycles": avg("mp2_iterations"),
        "warm_average_cycles": avg("warm_iterations"),
        "mp2_not_converged": sum(not r.mp2_converged for r in rows),
        "warm_not_converged": sum(not r.warm_converged for r in rows),
        "warm_wins": sum(r.warm_wins for r in rows),
        "rows": [asdict(r) | {"warm_wins": r.warm_wins} for r in rows],
    }


def best_time(fn: Callable[[], object], reps: int) -> float:
    """Minimum wall time in seconds over ``reps`` calls."""
    best = np.inf
    for _ in range(max(reps, 1)):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return float(best)


def loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def residual_timings(sizes: Sequence[int], reps: int = 3, seed: int = 0) -> list[float]:
    """Best-of-``reps`` wall time of one residual evaluation at ``n_occ = n_orb // 4``."""
    out = []
    for n in sizes:
        ints = generate_synthetic(seed, n, max(n // 4, 1), 0.1)
        t = mp2_amplitudes(ints)
        out.append(best_time(lambda: ccsd_residual(ints, t), reps))
    return out


def model_timings(sizes: Sequence[int], cfg: ModelConfig, reps: int = 1, seed: int = 0) -> list[float]:
    model = MoleModel(cfg, seed=seed)
    out = []
    for n in sizes:
        elements = [cfg.elements[k % len(cfg.elements)] for k in range(4)]
        sys = random_system(seed, n, max(n // 4, 1), elements=elements, layout=model.layout)
        inp = model.prepare(sys)
        o, v = sys.n_occ, n - sys.n_occ
        mp2 = torch.zeros(o, o, v, v, dtype=DTYPE)

        def run():
            with torch.no_grad():
                model(inp, mp2)

        out.append(best_time(run, reps))
    return out


def is_monotone(times: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(times, times[1:]))
