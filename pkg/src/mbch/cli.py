"""Command-line entry point: ``mbch <subcommand> [--config PATH] [flags]``.

Exit codes: 0 success, 1 divergence or failed check, 2 missing input,
3 parse error, 4 invalid configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import grad_check
from .config import RunConfig, dump_config, load_run_config
from .data import Dataset, embed_dataset, load_dataset, stratified_kfold
from .embeddings import (
    IwvTable,
    LexiconSet,
    PosTagset,
    WordVectorTable,
    load_lexicon,
    load_word_vectors,
    read_iwv_cache,
    write_iwv_cache,
)
from .errors import ConfigError, MbchError, MissingInputError
from .model import ModelConfig, init_model, load_checkpoint, save_checkpoint
from .training import evaluate, run_cv, run_sweep, train, write_metrics_csv

log = logging.getLogger("mbch")

MICRO = ModelConfig(filter_sizes=(2, 3), feature_maps=4, bottleneck_dim=3, highway_depth=2, num_classes=2, embed_dim=6)


# -- helpers ------------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, **extra) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "inputs": {k: {"path": p, "sha256": sha256(p)} for k, p in sorted(cfg.input_paths().items())},
        **extra,
    }
    (out / f"manifest_{command}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / f"resolved_{command}.cfg").write_text(dump_config(cfg))


def build_tables(cfg: RunConfig) -> IwvTable:
    if cfg.word_vectors:
        words = load_word_vectors(cfg.word_vectors, oov_seed=cfg.seed)
    else:
        words = WordVectorTable.random(cfg.word_dim, oov_seed=cfg.seed)
    lexicons = None
    if cfg.lexicons:
        lexicons = LexiconSet(tuple(load_lexicon(p, n) for n, p in zip(cfg.lexicon_names, cfg.lexicons)))
    tagset = PosTagset(cfg.tagset) if cfg.tagset else PosTagset()
    return IwvTable(words, tagset, lexicons)


def embed(cfg: RunConfig, data: Dataset, tables: IwvTable | None) -> tuple[list[np.ndarray], int]:
    if cfg.iwv_cache:
        cache = read_iwv_cache(cfg.iwv_cache)
        missing = {(w, t) for s in data.sentences for w, t in zip(s.tokens, s.tags)} - cache.entries.keys()
        if missing:
            raise ConfigError(f"IWV cache lacks {len(missing)} (word, tag) pairs, e.g. {sorted(missing)[0]}")
        return [np.stack([cache.entries[p] for p in zip(s.tokens, s.tags)]) for s in data.sentences], cache.dim
    return embed_dataset(data, tables), tables.dim


def require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if not getattr(cfg, k)]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(cfg: RunConfig):
    require(cfg, "dataset")
    data = load_dataset(cfg.dataset, cfg.dataset_format)
    tables = None if cfg.iwv_cache else build_tables(cfg)
    X, dim = embed(cfg, data, tables)
    return data, X, dim


# -- subcommands --------------------------------------------------------------


def cmd_build_iwv(cfg: RunConfig) -> int:
    out = _out(cfg)
    tables = build_tables(cfg)
    if cfg.dataset:
        data = load_dataset(cfg.dataset, cfg.dataset_format)
        pairs = {(w, t) for s in data.sentences for w, t in zip(s.tokens, s.tags)}
    else:
        pairs = {(w, "X") for w in tables.words.entries}
    vocab = sorted({w for w, _ in pairs})
    report = {
        "M": tables.dim,
        "word_dim": tables.words.dim,
        "pos_dim": tables.tagset.dim,
        "lexicon_dim": 7,
        "vocabulary": len(vocab),
        "oov": sum(w not in tables.words for w in vocab),
        "duplicate_word_vectors": tables.words.duplicates,
        "lexicon_coverage": {},
        "lexicon_part_zeroed": tables.lexicons is None,
    }
    if tables.lexicons:
        for lex in tables.lexicons.lexicons:
            hits = sum(w in lex.entries for w in vocab)
            report["lexicon_coverage"][lex.name] = hits / len(vocab) if vocab else 0.0
    n = write_iwv_cache(out / "iwv.txt", tables, pairs)
    report["entries"] = n
    (out / "iwv_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "build-iwv", cfg)
    print(f"M={report['M']} entries={n} oov={report['oov']}")
    if report["lexicon_part_zeroed"]:
        print("lexicon part zeroed (no lexicons configured)")
    for name, cov in report["lexicon_coverage"].items():
        print(f"coverage {name}: {cov:.4f}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    out = _out(cfg)
    data, X, dim = _load_data(cfg)
    model = init_model(cfg.model_config(data.num_classes, dim))
    eval_data = None
    if cfg.eval_dataset:
        ev = load_dataset(cfg.eval_dataset, cfg.dataset_format)
        ev_X, _ = embed(cfg, ev, None if cfg.iwv_cache else build_tables(cfg))
        eval_data = (ev_X, ev.labels)
    history = train(model, X, data.labels, cfg.train_config(), eval_data)
    save_checkpoint(model, out / "model.npz", {"label_names": data.label_names})
    write_metrics_csv(out / "metrics.csv", history)
    write_manifest(out, "train", cfg, label_names=data.label_names)
    last = history[-1]
    print(f"epoch {last.epoch}: loss {last.train_loss:.6f} train_acc {last.train_acc:.4f}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    require(cfg, "checkpoint")
    out = _out(cfg)
    model, extra = load_checkpoint(cfg.checkpoint)
    data, X, dim = _load_data(cfg)
    if dim != model.config.embed_dim:
        raise ConfigError(f"embedding width {dim} does not match checkpoint ({model.config.embed_dim})")
    acc, loss = evaluate(model, X, data.labels)
    (out / "eval.json").write_text(json.dumps({"accuracy": acc, "loss": loss}, sort_keys=True) + "\n")
    write_manifest(out, "eval", cfg, label_names=data.label_names)
    print(f"accuracy {acc!r}")
    return 0


def cmd_cv(cfg: RunConfig) -> int:
    out = _out(cfg)
    data, X, dim = _load_data(cfg)
    folds = stratified_kfold(data.labels, cfg.folds, cfg.seed)
    folds.to_csv(out / "folds.csv")
    res = run_cv(
        X, data.labels, cfg.model_config(data.num_classes, dim), cfg.train_config(),
        cfg.folds, cfg.seed, cfg.parallel, folds,
    )
    res.to_csv(out / "cv_summary.csv")
    for i, hist in enumerate(res.fold_histories):
        write_metrics_csv(out / f"metrics_fold{i}.csv", hist)
    write_manifest(out, "cv", cfg, label_names=data.label_names)
    print(f"mean {res.mean:.4f} std {res.std:.4f} over {len(res.fold_accuracies)} folds")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    if not cfg.combos and not cfg.sweep_feature_maps:
        raise ConfigError("sweep needs --combos and/or --feature-maps")
    out = _out(cfg)
    data, X, dim = _load_data(cfg)
    res = run_sweep(
        X, data.labels, cfg.model_config(data.num_classes, dim), cfg.train_config(),
        cfg.combos, cfg.sweep_feature_maps, cfg.folds, cfg.seed, cfg.parallel,
    )
    res.to_csv(out / "sweep.csv")
    for name, cell in res.cells.items():
        cell.to_csv(out / f"cv_{name}.csv")
    write_manifest(out, "sweep", cfg, label_names=data.label_names)
    for name, cell in res.cells.items():
        print(f"{name}: {cell.mean:.4f} +/- {cell.std:.4f}")
    return 0


def micro_gradcheck(seed: int = 0, step: float = 1e-5, tol: float = 1e-4, batch: int = 4, n: int = 5):
    """Gradient check of the whole model at the micro configuration, train mode."""
    model = init_model(MICRO, seed)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(batch, n, MICRO.embed_dim))
    lens = rng.integers(MICRO.max_filter, n + 1, batch)
    labels = np.arange(batch) % MICRO.num_classes
    return grad_check(lambda: model.loss(X, lens, labels, "train")[0], model.params, step, tol)


def cmd_gradcheck(cfg: RunConfig) -> int:
    report = micro_gradcheck(cfg.seed)
    for name, err in report.max_rel_error.items():
        flag = "FAIL" if report.failures[name] else "ok"
        print(f"{flag:4} {name:32} {err:.3e}")
    print(f"max relative error {report.worst:.3e} (tol {report.tol:g})")
    return 0 if report.ok else 1


COMMANDS = {
    "build-iwv": cmd_build_iwv,
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--parallel", help="worker processes for folds")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("cv", "sweep"):
            p.add_argument("--k", dest="folds", help="number of CV folds")
        if name == "sweep":
            p.add_argument("--combos", help="filter-size combos, e.g. A,E,H or A..H")
            p.add_argument("--feature-maps", dest="sweep_feature_maps", help="e.g. 100,200,300")
        if name == "eval":
            p.add_argument("--checkpoint", help="model.npz written by train")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 4
        overrides[key.strip()] = value
    for key in ("seed", "out", "parallel", "folds", "combos", "sweep_feature_maps", "checkpoint"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    try:
        cfg = load_run_config(args.config, overrides).validate()
        return COMMANDS[args.command](cfg)
    except MbchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return MissingInputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
