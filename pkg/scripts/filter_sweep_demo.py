"""Filter-size and feature-map sweep on a generated corpus.

Scaled down so it finishes in about a minute on a laptop:

    python3 scripts/filter_sweep_demo.py --combos A..H --feature-maps 4,8 --folds 5
"""

import argparse

from mbch.model import ModelConfig
from mbch.synthetic import embed_plain, keyword_corpus
from mbch.training import TrainConfig, resolve_combos, run_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sentences", type=int, default=60)
    parser.add_argument("--combos", default="A..H")
    parser.add_argument("--feature-maps", default="")
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--parallel", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="write sweep.csv here")
    args = parser.parse_args()

    data = keyword_corpus(args.sentences, seed=args.seed)
    X = embed_plain(data, args.dim, seed=args.seed)
    base = ModelConfig(feature_maps=8, bottleneck_dim=4, highway_depth=2, embed_dim=args.dim)
    fms = [int(f) for f in args.feature_maps.split(",") if f]
    res = run_sweep(
        X, data.labels, base, TrainConfig(learning_rate=1e-2, epochs=args.epochs, seed=args.seed),
        resolve_combos(args.combos) if args.combos else (), fms, args.folds, args.seed, args.parallel,
    )
    for name, cell in res.cells.items():
        print(f"{name:>4}  {cell.mean:.3f} +/- {cell.std:.3f}")
    if args.out:
        res.to_csv(args.out)


if __name__ == "__main__":
    main()
