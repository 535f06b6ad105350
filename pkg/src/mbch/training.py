"""Adam with a max-norm constraint, the epoch loop, cross-validation and sweeps."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .data import batch_order, pad_stack, stratified_kfold
from .errors import ConfigError, ContractError, DivergenceError, EmptyInputError, UsageError
from .model import MbchModel, ModelConfig, init_model

logger = logging.getLogger(__name__)

# filter-size combinations compared in the filter-size experiment
COMBOS: dict[str, tuple[int, ...]] = {
    "A": (2, 3, 4),
    "B": (3, 4, 5),
    "C": (4, 5, 6),
    "D": (5, 6, 7),
    "E": (2, 3, 4, 5),
    "F": (3, 4, 5, 6),
    "G": (4, 5, 6, 7),
    "H": (2, 3, 4, 5, 6, 7),
}
FEATURE_MAP_GRID = (100, 200, 300, 400, 500)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 16
    epochs: int = 25
    # None disables the constraint
    l2_norm_constraint: float | None = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2_norm_constraint is not None and not self.l2_norm_constraint > 0:
            problems.append(f"l2_norm_constraint must be > 0, got {self.l2_norm_constraint}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if problems:
            raise ConfigError(problems)


# -- optimiser ----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    t = state.step
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ContractError(f"adam_step: gradient {g.shape} for parameter {name} {w.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def max_norm_constrain(W: np.ndarray, s: float) -> np.ndarray:
    """Rescale rows whose Euclidean norm exceeds ``s`` to norm ``s``."""
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=-1, keepdims=True)
    scale = np.where(norms > s, s / np.where(norms > 0, norms, 1.0), 1.0)
    return W * scale


def constrain_head(model: MbchModel, s: float) -> None:
    # head.W is [P, k]; each class's weight vector is a column
    W = model.params["head.W"].data
    W[...] = max_norm_constrain(W.T, s).T


# -- epoch loop ---------------------------------------------------------------


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    eval_acc: float | None = None


def _batches(n: int, batch_size: int, seed) -> list[np.ndarray]:
    idx = batch_order(n, batch_size, seed)
    # a lone trailing sentence may not give batch norm two rows to work with
    if len(idx) > 1 and len(idx[-1]) == 1:
        idx[-2:] = [np.concatenate(idx[-2:])]
    return idx


def train(
    model: MbchModel,
    X: Sequence[np.ndarray],
    y,
    config: TrainConfig,
    eval_data: tuple[Sequence[np.ndarray], object] | None = None,
    on_step: Callable[[int, int, MbchModel], None] | None = None,
) -> list[EpochMetrics]:
    """Train ``model`` in place on embedded sentences ``X`` with labels ``y``.

    ``on_step(epoch, batch, model)`` runs after every update, constraint included.
    """
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise EmptyInputError("train: empty training set")
    if X[0].shape[1] != model.config.embed_dim:
        raise ContractError(f"train: embeddings have width {X[0].shape[1]}, model expects {model.config.embed_dim}")
    pad_to = model.config.max_filter
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    names = list(model.params)
    history = []
    for epoch in range(1, config.epochs + 1):
        total_loss = 0.0
        correct = 0
        for b, idx in enumerate(_batches(len(X), config.batch_size, rng.integers(2**63))):
            batch, lens = pad_stack([X[i] for i in idx], pad_to)
            model.zero_grad()
            loss, probs = model.loss(batch, lens, y[idx], mode="train")
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(epoch, b, value)
            ad.backward(loss, model.params.values())
            adam_step(
                {n: model.params[n].data for n in names},
                {n: model.params[n].grad for n in names},
                state,
                config.learning_rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_eps,
            )
            if config.l2_norm_constraint is not None:
                constrain_head(model, config.l2_norm_constraint)
            if on_step is not None:
                on_step(epoch, b, model)
            total_loss += value * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
        eval_acc = evaluate(model, *eval_data)[0] if eval_data is not None else None
        m = EpochMetrics(epoch, total_loss / len(X), correct / len(X), eval_acc)
        logger.debug("epoch %d loss %.5f acc %.4f", epoch, m.train_loss, m.train_acc)
        history.append(m)
    return history


def predict_proba(model: MbchModel, X: Sequence[np.ndarray], batch_size: int = 64) -> np.ndarray:
    out = []
    for start in range(0, len(X), batch_size):
        batch, lens = pad_stack(X[start : start + batch_size], model.config.max_filter)
        logits, _ = model.forward(batch, lens, mode="infer")
        out.append(ad.softmax(logits.data))
    return np.concatenate(out)


def evaluate(model: MbchModel, X: Sequence[np.ndarray], y, batch_size: int = 64) -> tuple[float, float]:
    """Accuracy and mean cross-entropy in infer mode. Mutates nothing."""
    if len(X) == 0:
        raise EmptyInputError("evaluate: empty dataset")
    y = np.asarray(y, dtype=np.int64)
    probs = predict_proba(model, X, batch_size)
    acc = float((probs.argmax(axis=1) == y).mean())
    nll = float(-np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300)).mean())
    return acc, nll


def write_metrics_csv(path, history: Sequence[EpochMetrics]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "eval_acc"])
        for m in history:
            w.writerow([m.epoch, repr(m.train_loss), repr(m.train_acc), "" if m.eval_acc is None else repr(m.eval_acc)])


# -- cross-validation ---------------------------------------------------------


def child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass(frozen=True)
class FoldResult:
    fold: int
    accuracy: float
    history: tuple[EpochMetrics, ...]


@dataclass(frozen=True)
class CvResult:
    fold_accuracies: tuple[float, ...]
    config: dict
    fold_histories: tuple[tuple[EpochMetrics, ...], ...] = ()

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracies, ddof=1)) if len(self.fold_accuracies) > 1 else 0.0

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "accuracy"])
            for i, a in enumerate(self.fold_accuracies):
                w.writerow([i, repr(a)])
            w.writerow(["mean", repr(self.mean)])
            w.writerow(["std", repr(self.std)])


def _run_fold(args) -> FoldResult:
    fold, X, y, train_idx, test_idx, model_cfg, train_cfg, seed = args
    s = child_seed(seed, fold)
    model = init_model(replace(model_cfg, seed=s))
    history = train(model, [X[i] for i in train_idx], y[train_idx], replace(train_cfg, seed=s))
    acc, _ = evaluate(model, [X[i] for i in test_idx], y[test_idx])
    return FoldResult(fold, acc, tuple(history))


def run_cv(
    X: Sequence[np.ndarray],
    y,
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int = 10,
    seed: int = 0,
    parallel: int = 1,
    folds=None,
) -> CvResult:
    """k-fold CV: a fresh model per fold, seeded from ``(seed, fold)``.

    ``parallel > 1`` runs folds in worker processes; results are identical
    because every fold owns its model, optimiser state and RNG.
    """
    y = np.asarray(y, dtype=np.int64)
    folds = folds if folds is not None else stratified_kfold(y, k, seed)
    jobs = [
        (i, X, y, folds.train_indices(i), folds.test_indices(i), model_config, train_config, seed)
        for i in range(len(folds))
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    results.sort(key=lambda r: r.fold)
    snapshot = {"model": asdict(model_config), "train": asdict(train_config), "k": len(folds), "seed": seed}
    return CvResult(tuple(r.accuracy for r in results), snapshot, tuple(r.history for r in results))


# -- sweeps -------------------------------------------------------------------


def resolve_combos(spec: str | Sequence[str]) -> list[str]:
    """Parse ``"A,E,H"`` or a range such as ``"A..H"`` into combo names."""
    if not isinstance(spec, str):
        spec = ",".join(spec)
    parts = []
    for piece in spec.split(","):
        piece = piece.strip().upper()
        if not piece:
            continue
        if ".." in piece:
            lo, _, hi = piece.partition("..")
            names = list(COMBOS)
            if lo not in COMBOS or hi not in COMBOS:
                raise UsageError(f"unknown combo in {piece!r}; valid names: {', '.join(COMBOS)}")
            parts.extend(names[names.index(lo) : names.index(hi) + 1])
        else:
            parts.append(piece)
    bad = [p for p in parts if p not in COMBOS]
    if bad:
        raise UsageError(f"unknown combo(s) {', '.join(bad)}; valid names: {', '.join(COMBOS)}")
    return parts


@dataclass(frozen=True)
class SweepResult:
    cells: dict[str, CvResult]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "mean_acc", "std_acc"])
            for name, res in self.cells.items():
                w.writerow([name, repr(res.mean), repr(res.std)])


def sweep_grid(
    base: ModelConfig, combos: Sequence[str] = (), feature_maps: Sequence[int] = ()
) -> dict[str, ModelConfig]:
    """Grid cells: one per combo (filter sizes swapped in) and one per feature-map count."""
    grid: dict[str, ModelConfig] = {}
    for name in resolve_combos(list(combos)) if combos else []:
        grid[name] = replace(base, filter_sizes=COMBOS[name])
    for fm in feature_maps:
        fm = int(fm)
        grid[str(fm)] = replace(base, feature_maps=fm, bottleneck_dim=min(base.bottleneck_dim, fm))
    if not grid:
        raise UsageError("empty sweep: give combos and/or feature-map counts")
    return grid


def run_sweep(
    X: Sequence[np.ndarray],
    y,
    base: ModelConfig,
    train_config: TrainConfig,
    combos: Sequence[str] = (),
    feature_maps: Sequence[int] = (),
    k: int = 10,
    seed: int = 0,
    parallel: int = 1,
) -> SweepResult:
    y = np.asarray(y, dtype=np.int64)
    folds = stratified_kfold(y, k, seed)
    cells = {}
    for name, cfg in sweep_grid(base, combos, feature_maps).items():
        logger.info("sweep cell %s: filters %s, %d feature maps", name, cfg.filter_sizes, cfg.feature_maps)
        cells[name] = run_cv(X, y, cfg, train_config, k, seed, parallel, folds)
    return SweepResult(cells)
