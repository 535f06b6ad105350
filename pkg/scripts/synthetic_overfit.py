"""Overfit the keyword corpus at the micro configuration and print the learning curve.

    python3 scripts/synthetic_overfit.py --epochs 200 --lr 1e-2
"""

import argparse
import time

from mbch.cli import MICRO
from mbch.model import init_model
from mbch.synthetic import embed_plain, keyword_corpus
from mbch.training import TrainConfig, evaluate, train


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sentences", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--every", type=int, default=10, help="print every N epochs")
    args = parser.parse_args()

    data = keyword_corpus(args.sentences, seed=args.seed)
    X = embed_plain(data, MICRO.embed_dim, seed=args.seed)
    model = init_model(MICRO, seed=args.seed)
    start = time.perf_counter()
    history = train(model, X, data.labels, TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed))
    for m in history:
        if m.epoch % args.every == 0 or m.epoch == 1:
            print(f"epoch {m.epoch:4d}  loss {m.train_loss:.5f}  acc {m.train_acc:.3f}")
    acc, nll = evaluate(model, X, data.labels)
    print(f"infer-mode accuracy {acc:.3f}  nll {nll:.5f}  ({time.perf_counter() - start:.1f}s)")


if __name__ == "__main__":
    main()
