"""Fit the desk-scale model to a single synthetic sample and report the loss drop."""

import argparse
import time

from ccmole.fixtures import training_sample
from ccmole.model.config import PRESETS, TrainConfig
from ccmole.training import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=TrainConfig.lr)
    ap.add_argument("--decay-step", type=int, default=TrainConfig.decay_step)
    ap.add_argument("--sample-seed", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", help="JSON-lines training log")
    ap.add_argument("--checkpoint")
    args = ap.parse_args()

    sample = training_sample(args.sample_seed, n_mo=8, n_occ=2, coupling=0.2)
    cfg = TrainConfig(lr=args.lr, decay_step=args.decay_step, steps=args.steps)
    t0 = time.perf_counter()
    ck = train([sample], PRESETS[args.preset], cfg, args.seed, log_path=args.log, checkpoint_path=args.checkpoint)
    h = ck.loss_history
    for k in sorted({0, *range(0, len(h), max(len(h) // 10, 1)), len(h) - 1}):
        print(f"step {k:>5}  loss {h[k]:.4e}")
    print(f"{h[0] / h[-1]:.1f}x reduction in {time.perf_counter() - t0:.1f} s ({ck.params.size} parameters)")


if __name__ == "__main__":
    main()
