"""Wall-time scaling of the CCSD residual (and optionally the model forward pass)."""

import argparse

from ccmole.bench import loglog_slope, model_timings, residual_timings
from ccmole.model.config import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 24, 32, 48])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--model", choices=sorted(PRESETS), help="also time this model preset")
    args = ap.parse_args()

    res = residual_timings(args.sizes, args.reps)
    for n, t in zip(args.sizes, res):
        print(f"n_orb {n:>3}  residual {t * 1e3:9.2f} ms")
    print(f"residual slope {loglog_slope(args.sizes, res):.2f}")
    if args.model:
        mt = model_timings(args.sizes, PRESETS[args.model])
        for n, t in zip(args.sizes, mt):
            print(f"n_orb {n:>3}  forward  {t * 1e3:9.2f} ms")
        print(f"forward slope {loglog_slope(args.sizes, mt):.2f}")


if __name__ == "__main__":
    main()
