"""``ccmole`` command line: CC engine, model prediction/training, checks and benchmarks.

Exit codes: 0 success, 1 input or parse error, 2 numerical failure
(divergence, non-finite values, or a solve that did not converge),
3 check-suite failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import __version__
from .cc.ccsd import (
    DivergenceError,
    SolverConfig,
    ccsd_solve,
    correlation_energy,
    load_amplitudes,
    mp2_energy,
    save_amplitudes,
)
from .cc.fcidump import FCIDumpError, load_fcidump, write_fcidump
from .model.config import PRESETS, ModelConfig, TrainConfig

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
THREADS_ENV = "CCMOLE_NUM_THREADS"
MANIFEST_FORMAT = "manifest/1"

log = logging.getLogger("ccmole")


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


class Report:
    """Text lines for stdout plus the JSON document behind ``--json``."""

    def __init__(self, command: str, inputs: dict, config: "dict | None" = None):
        self.command = command
        self.inputs = inputs
        self.config = config or {}
        self.outputs: dict = {}
        self.checks: list[dict] = []
        self.timings_ms: dict[str, float] = {}
        self.exit_code = EXIT_OK
        self._t0 = time.perf_counter()

    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> dict:
        self.timings_ms.setdefault("total", (time.perf_counter() - self._t0) * 1e3)
        return {
            "command": self.command,
            "inputs": self.inputs,
            "config_hash": self.config_hash(),
            "outputs": self.outputs,
            "checks": self.checks,
            "timings_ms": self.timings_ms,
            "version": __version__,
        }


def _load_ints(path: str):
    try:
        return load_fcidump(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except FCIDumpError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_json_file(path: str, loader, what: str):
    try:
        return loader(path)
    except FileNotFoundError:
        raise InputError(f"{what} {path}: no such file") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{what} {path}: {exc}") from None


def _model_config(preset: str, config_path: "str | None") -> tuple[ModelConfig, TrainConfig]:
    if preset not in PRESETS:
        raise InputError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    model_cfg, train_cfg = PRESETS[preset], TrainConfig()
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
            if "model" in doc:
                model_cfg = ModelConfig.from_dict(model_cfg.to_dict() | doc["model"])
            if "train" in doc:
                train_cfg = TrainConfig.from_dict(train_cfg.to_dict() | doc["train"])
        except FileNotFoundError:
            raise InputError(f"config {config_path}: no such file") from None
        except (ValueError, TypeError, KeyError) as exc:
            raise InputError(f"config {config_path}: {exc}") from None
    return model_cfg, train_cfg


# ---------------------------------------------------------------------------
# commands


def cmd_mp2(args) -> Report:
    ints = _load_ints(args.fcidump)
    rep = Report("mp2", {"fcidump": args.fcidump})
    e = mp2_energy(ints)
    rep.outputs = {"correlation_energy": e, "total_energy": ints.reference_energy() + e, "reference_energy": ints.reference_energy()}
    print(f"MP2 correlation energy  {e: .12f} Eh")
    print(f"MP2 total energy        {rep.outputs['total_energy']: .12f} Eh")
    return rep


def cmd_ccsd(args) -> Report:
    ints = _load_ints(args.fcidump)
    guess = args.guess
    if guess == "file":
        if not args.guess_file:
            raise InputError("--guess file needs --guess-file PATH")
        guess = _load_json_file(args.guess_file, load_amplitudes, "amplitudes")
    try:
        cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter, guess=guess)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rep = Report("ccsd", {"fcidump": args.fcidump, "guess": args.guess, "guess_file": args.guess_file}, {"tol": args.tol, "max_iter": args.max_iter})
    t0 = time.perf_counter()
    try:
        res = ccsd_solve(ints, cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    except (DivergenceError, ArithmeticError) as exc:
        raise NumericalError(str(exc)) from None
    rep.timings_ms["solve"] = (time.perf_counter() - t0) * 1e3
    total = ints.reference_energy() + res.energy
    rep.outputs = {
        "correlation_energy": res.energy,
        "total_energy": total,
        "iterations": res.iterations,
        "converged": res.converged,
        "residual_norms": res.residual_norm_history,
    }
    print(f"CCSD correlation energy {res.energy: .12f} Eh")
    print(f"CCSD total energy       {total: .12f} Eh")
    print(f"iterations {res.iterations}  converged {'yes' if res.converged else 'no'}")
    if args.out:
        save_amplitudes(res.amplitudes, args.out)
    if not res.converged:
        rep.exit_code = EXIT_NUMERICAL
    return rep


def cmd_predict(args) -> Report:
    from .model.mole import check_consistent, predict
    from .model.system import load_system
    from .training import load_checkpoint

    ints = _load_ints(args.fcidump)
    system = _load_json_file(args.system, load_system, "system")
    ck = _load_json_file(args.checkpoint, load_checkpoint, "checkpoint")
    try:
        check_consistent(system, ints)
        t0 = time.perf_counter()
        t = predict(ck.model(), system, ints)
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    if not (np.all(np.isfinite(t.t1)) and np.all(np.isfinite(t.t2))):
        raise NumericalError("non-finite predicted amplitudes")
    rep = Report("predict", {"system": args.system, "fcidump": args.fcidump, "checkpoint": args.checkpoint}, ck.model_config.to_dict())
    rep.timings_ms["forward"] = (time.perf_counter() - t0) * 1e3
    e = correlation_energy(ints, t)
    rep.outputs = {"correlation_energy": e, "total_energy": ints.reference_energy() + e, "out": args.out}
    print(f"predicted correlation energy {e: .12f} Eh")
    if args.out:
        save_amplitudes(t, args.out)
        print(f"amplitudes written to {args.out}")
    return rep


def load_manifest(path: str) -> list:
    """Training samples listed in a ``manifest/1`` JSON file (paths relative to it)."""
    from .model.system import load_system
    from .training import TrainingSample

    doc = _load_json_file(path, lambda p: json.loads(Path(p).read_text()), "manifest")
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        raise InputError(f"manifest {path}: not a {MANIFEST_FORMAT} document")
    root = Path(path).parent
    samples = []
    for k, entry in enumerate(doc.get("samples", [])):
        try:
            system = load_system(root / entry["system"])
            ints = load_fcidump(root / entry["fcidump"])
            target = load_amplitudes(root / entry["target"])
            samples.append(TrainingSample(system, ints, target))
        except (KeyError, ValueError, FileNotFoundError) as exc:
            raise InputError(f"manifest {path}, sample {k}: {exc}") from None
    if not samples:
        raise InputError(f"manifest {path} lists no samples")
    return samples


def cmd_train(args) -> Report:
    from .training import NonFiniteError, load_checkpoint, train

    model_cfg, train_cfg = _model_config(args.preset, args.config)
    if args.steps is not None:
        train_cfg = TrainConfig.from_dict(train_cfg.to_dict() | {"steps": args.steps})
    samples = load_manifest(args.manifest)
    resume = _load_json_file(args.resume, load_checkpoint, "checkpoint") if args.resume else None
    rep = Report(
        "train",
        {"manifest": args.manifest, "seed": args.seed, "resume": args.resume},
        {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "seed": args.seed},
    )
    t0 = time.perf_counter()
    try:
        ck = train(samples, model_cfg, train_cfg, args.seed, resume=resume, log_path=args.log, checkpoint_path=args.out)
    except NonFiniteError as exc:
        raise NumericalError(str(exc)) from None
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    rep.timings_ms["train"] = (time.perf_counter() - t0) * 1e3
    hist = ck.loss_history
    rep.outputs = {
        "steps": len(hist),
        "initial_loss": hist[0] if hist else None,
        "final_loss": hist[-1] if hist else None,
        "n_params": int(ck.params.size),
        "checkpoint": args.out,
    }
    if hist:
        print(f"steps {len(hist)}  loss {hist[0]:.6e} -> {hist[-1]:.6e}  ({hist[0] / max(hist[-1], 1e-300):.1f}x)")
    print(f"checkpoint written to {args.out}")
    return rep


def cmd_equiv_check(args) -> Report:
    from .checks import run_suite
    from .model.mole import MoleModel, check_consistent
    from .model.system import load_system
    from .training import load_checkpoint

    ints = _load_ints(args.fcidump)
    system = _load_json_file(args.system, load_system, "system")
    if args.checkpoint:
        ck = _load_json_file(args.checkpoint, load_checkpoint, "checkpoint")
        cfg, params = ck.model_config, ck.params
    else:
        cfg, params = _model_config(args.preset, None)[0], None
    if args.debug_even_monomial:
        cfg = cfg.with_(debug_even_monomial=True)
    model = MoleModel(cfg, seed=args.seed)
    if params is not None:
        model.set_flat(params)
    try:
        check_consistent(system, ints)
        results = run_suite(model, system, ints, args.trials, args.seed)
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    rep = Report("equiv-check", {"system": args.system, "fcidump": args.fcidump, "checkpoint": args.checkpoint, "trials": args.trials}, cfg.to_dict())
    rep.checks = [r.to_json() for r in results]
    if not results:
        print("no trials requested; nothing checked")
    for r in results:
        print(f"{r.name:<18} max residual {r.residual:.3e}  tol {r.tol:.0e}  {'PASS' if r.passed else 'FAIL'}")
    if not all(r.passed for r in results):
        rep.exit_code = EXIT_CHECK
    return rep


def cmd_cycle_bench(args) -> Report:
    from .bench import cycle_bench, summarize_cycles
    from .fixtures import fixture_set

    try:
        fixtures = fixture_set(args.fixtures)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.noise < 0 or args.tol <= 0:
        raise InputError("--noise must be >= 0 and --tol > 0")
    t0 = time.perf_counter()
    try:
        rows = cycle_bench(fixtures, args.noise, args.tol, args.max_iter)
    except ArithmeticError as exc:
        raise NumericalError(str(exc)) from None
    rep = Report("cycle-bench", {"fixtures": args.fixtures}, {"noise": args.noise, "tol": args.tol, "max_iter": args.max_iter})
    rep.timings_ms["bench"] = (time.perf_counter() - t0) * 1e3
    rep.outputs = summarize_cycles(rows)
    print(f"{'fixture':<10} {'n_orb':>5} {'n_occ':>5} {'coupling':>8} {'MP2 guess':>10} {'warm':>6}")
    for r in rows:
        mark = "*" if r.warm_wins else " "
        print(f"{r.fixture:<10} {r.n_orb:>5} {r.n_occ:>5} {r.coupling:>8.2f} {r.mp2_iterations:>10} {r.warm_iterations:>6} {mark}")
    s = rep.outputs
    print(f"average cycles: MP2 guess {s['mp2_average_cycles']:.2f}, warm {s['warm_average_cycles']:.2f}")
    print(f"not converged: MP2 guess {s['mp2_not_converged']}, warm {s['warm_not_converged']}")
    print(f"warm start fewer iterations on {s['warm_wins']}/{s['fixtures']} fixtures")
    return rep


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 2 for v in vals):
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return vals


def cmd_bench_scaling(args) -> Report:
    from .bench import is_monotone, loglog_slope, model_timings, residual_timings

    sizes = args.sizes
    rep = Report("bench-scaling", {"sizes": sizes, "reps": args.reps}, {"sizes": sizes, "reps": args.reps, "model": args.model})
    res = residual_timings(sizes, args.reps)
    out = {
        "sizes": sizes,
        "residual_seconds": res,
        "residual_slope": loglog_slope(sizes, res) if len(sizes) > 1 else None,
        "residual_monotone": is_monotone(res),
    }
    print(f"{'n_orb':>6} {'residual ms':>12}")
    for n, t in zip(sizes, res):
        print(f"{n:>6} {t * 1e3:>12.3f}")
    if out["residual_slope"] is not None:
        print(f"residual log-log slope {out['residual_slope']:.2f}")
    if args.model != "none":
        cfg = _model_config(args.model, None)[0]
        mt = model_timings(sizes, cfg, max(args.reps // 3, 1))
        out.update(model_seconds=mt, model_slope=loglog_slope(sizes, mt) if len(sizes) > 1 else None)
        for n, t in zip(sizes, mt):
            print(f"{n:>6} model forward {t * 1e3:>10.1f} ms")
        if out["model_slope"] is not None:
            print(f"model forward log-log slope {out['model_slope']:.2f}")
    rep.outputs = out
    return rep


def _parse_fixture_spec(text: str, seed: int, count: "int | None"):
    """Named set, or ``[train:]NORB:NOCC:COUPLING`` for ``count`` seeds from ``seed``."""
    from .fixtures import FixtureSpec, fixture_set

    if ":" not in text:
        return list(fixture_set(text))[:count], False
    parts = text.split(":")
    with_systems = parts[0] == "train"
    if with_systems:
        parts = parts[1:]
    if len(parts) != 3:
        raise ValueError(f"fixture spec {text!r}: expected [train:]NORB:NOCC:COUPLING")
    n_orb, n_occ, coupling = int(parts[0]), int(parts[1]), float(parts[2])
    n = 1 if count is None else count
    return [FixtureSpec(f"synthetic-{seed + k}", seed + k, n_orb, n_occ, coupling) for k in range(n)], with_systems


def cmd_gen_fixtures(args) -> Report:
    from .fixtures import converged_amplitudes
    from .model.system import random_system, save_system

    try:
        specs, with_systems = _parse_fixture_spec(args.spec, args.seed, args.count)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written, manifest = [], []
    try:
        for f in specs:
            ints = f.build()
            path = out / f"{f.name}.fcidump"
            write_fcidump(ints, path)
            written.append(str(path))
            if with_systems:
                system = random_system(f.seed, f.n_orb, f.n_occ)
                save_system(system, out / f"{f.name}.molsys.json")
                save_amplitudes(converged_amplitudes(ints), out / f"{f.name}.target.json")
                manifest.append({"system": f"{f.name}.molsys.json", "fcidump": path.name, "target": f"{f.name}.target.json"})
    except ValueError as exc:
        raise InputError(str(exc)) from None
    except ArithmeticError as exc:
        raise NumericalError(str(exc)) from None
    if with_systems:
        (out / "manifest.json").write_text(json.dumps({"format": MANIFEST_FORMAT, "samples": manifest}, indent=1))
    rep = Report("gen-fixtures", {"seed": args.seed, "count": args.count, "spec": args.spec}, {"spec": args.spec, "seed": args.seed})
    rep.outputs = {"files": written, "manifest": str(out / "manifest.json") if with_systems else None}
    for p in written:
        print(p)
    return rep


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccmole", description=__doc__.splitlines()[0])
    p.add_argument("--json", metavar="PATH", help="write a machine-readable report ('-' for stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mp2", help="MP2 energy of an FCIDUMP")
    s.add_argument("fcidump")
    s.set_defaults(func=cmd_mp2)

    s = sub.add_parser("ccsd", help="solve the closed-shell CCSD equations")
    s.add_argument("fcidump")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--guess", choices=["zeros", "mp2", "file"], default="mp2")
    s.add_argument("--guess-file", help="ampjson file used with --guess file")
    s.add_argument("--out", help="write converged amplitudes (ampjson)")
    s.set_defaults(func=cmd_ccsd)

    s = sub.add_parser("predict", help="predict amplitudes with a trained model")
    s.add_argument("system")
    s.add_argument("fcidump")
    s.add_argument("checkpoint")
    s.add_argument("--out", help="write predicted amplitudes (ampjson)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("train", help="fit the model to a manifest of samples")
    s.add_argument("manifest")
    s.add_argument("--config", help="JSON with optional 'model' and 'train' overrides")
    s.add_argument("--preset", default="desk", help=f"model preset ({', '.join(PRESETS)})")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--log", help="append JSON-lines training log here")
    s.add_argument("--resume", help="continue from this checkpoint")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("equiv-check", help="rotation, sign, permutation and size-extensivity checks")
    s.add_argument("system")
    s.add_argument("fcidump")
    s.add_argument("checkpoint", nargs="?", help="omit to check a randomly initialized model")
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--preset", default="desk")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--debug-even-monomial", action="store_true", help="inject an even term (negative control)")
    s.set_defaults(func=cmd_equiv_check)

    s = sub.add_parser("cycle-bench", help="solver iterations from MP2 versus warm guesses")
    s.add_argument("--fixtures", default="bench", help="bench, two-electron or all")
    s.add_argument("--noise", type=float, default=0.01)
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--max-iter", type=int, default=100)
    s.set_defaults(func=cmd_cycle_bench)

    s = sub.add_parser("bench-scaling", help="wall-time scaling of the residual and model forward")
    s.add_argument("--sizes", type=_int_list, default=[16, 24, 32, 48])
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--model", default="none", help="model preset to time as well, or 'none'")
    s.set_defaults(func=cmd_bench_scaling)

    s = sub.add_parser("gen-fixtures", help="write synthetic FCIDUMPs (and training samples)")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--count", type=int)
    s.add_argument("--spec", default="bench", help="bench | two-electron | all | [train:]NORB:NOCC:COUPLING")
    s.add_argument("--out", default="fixtures")
    s.set_defaults(func=cmd_gen_fixtures)
    return p


def _apply_threads() -> None:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            n = int(value)
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
        if n < 1:
            raise InputError(f"{THREADS_ENV} must be positive")
        torch.set_num_threads(n)


def main(argv: "Sequence[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_threads()
        rep = args.func(args)
        code = rep.exit_code
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.json:
        doc = rep.to_json() | {"exit_code": code}
        text = json.dumps(doc, indent=1, default=float)
        if args.json == "-":
            print(text)
        else:
            Path(args.json).write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
