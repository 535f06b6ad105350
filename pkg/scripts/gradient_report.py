"""Per-parameter gradient-check errors for the micro model over several seeds."""

import argparse
import time

from mbch.cli import micro_gradcheck


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--step", type=float, default=1e-5)
    args = parser.parse_args()

    start = time.perf_counter()
    worst = {}
    for seed in range(args.seeds):
        report = micro_gradcheck(seed, step=args.step)
        for name, err in report.max_rel_error.items():
            worst[name] = max(worst.get(name, 0.0), err)
    for name, err in sorted(worst.items(), key=lambda kv: -kv[1]):
        print(f"{err:.3e}  {name}")
    print(f"{len(worst)} parameters, {args.seeds} seeds, {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
