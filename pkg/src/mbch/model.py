"""Multiple Block Convolutional Highways.

One branch per filter size. Each branch runs

    conv(h) -> BN -> ReLU -> 1x1 bottleneck -> dense block of highway layers
    -> masked max-over-time

and the pooled branch vectors are concatenated in ascending filter-size
order and fed to a softmax layer.

Inside a block, highway layer ``j`` sees ``bottleneck(concat(c0, y_1, ...,
y_{j-1}))`` for ``j > 1`` and ``c0`` for ``j = 1``; the block returns the last
layer's output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, RunningStats, Tensor
from .errors import ConfigError, ContractError, DimensionError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
GATE_BIAS_INIT = -1.0


@dataclass(frozen=True)
class ModelConfig:
    filter_sizes: tuple[int, ...] = (2, 3, 4, 5)
    feature_maps: int = 500
    bottleneck_dim: int = 100
    highway_depth: int = 2
    num_classes: int = 2
    embed_dim: int = 344
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "filter_sizes", tuple(int(h) for h in self.filter_sizes))
        problems = []
        fs = self.filter_sizes
        if not fs:
            problems.append("filter_sizes must not be empty")
        if any(h < 1 for h in fs):
            problems.append(f"filter sizes must be >= 1: {fs}")
        if any(b <= a for a, b in zip(fs, fs[1:])):
            problems.append(f"filter_sizes must be strictly increasing: {fs}")
        for name in ("feature_maps", "bottleneck_dim", "highway_depth", "embed_dim"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.bottleneck_dim > self.feature_maps:
            problems.append(f"bottleneck_dim {self.bottleneck_dim} exceeds feature_maps {self.feature_maps}")
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2, got {self.num_classes}")
        if problems:
            raise ConfigError(problems)

    @property
    def pooled_dim(self) -> int:
        return len(self.filter_sizes) * self.bottleneck_dim

    @property
    def max_filter(self) -> int:
        return max(self.filter_sizes)


class MbchModel:
    """Parameters, BN running statistics and the forward pass."""

    def __init__(self, config: ModelConfig, params: dict[str, Parameter], stats: dict[str, RunningStats]):
        self.config = config
        self.params = params
        self.stats = stats

    # -- layers ---------------------------------------------------------------

    def _p(self, name: str) -> Parameter:
        return self.params[name]

    def _bn(self, prefix: str, x: Tensor, mode: str, mask, shift: Parameter) -> Tensor:
        return ad.batch_norm(
            x, self._p(f"{prefix}.gamma"), self._p(f"{prefix}.beta"), BN_EPS, mode, self.stats[prefix], mask, shift
        )

    def _linear(self, prefix: str, x: Tensor) -> Tensor:
        return ad.affine(x, self._p(f"{prefix}.W"), self._p(f"{prefix}.b"))

    def initial_conv(self, h: int, X: Tensor, mode: str, mask=None) -> Tensor:
        pre = f"branch{h}.conv"
        # the conv bias is applied inside BN (see batch_norm's ``shift``)
        c = ad.conv1d_valid(X, self._p(f"{pre}.W"))
        return ad.relu(self._bn(f"{pre}.bn", c, mode, mask, self._p(f"{pre}.b")))

    def highway(self, prefix: str, c: Tensor, mode: str, mask=None, gates: list | None = None) -> Tensor:
        d = self.config.bottleneck_dim
        if c.shape[-1] != d:
            raise DimensionError(f"highway: input width {c.shape[-1]} != bottleneck_dim {d}")
        H = ad.affine(c, self._p(f"{prefix}.H.W"))
        T = ad.affine(c, self._p(f"{prefix}.T.W"))
        a = ad.relu(self._bn(f"{prefix}.bn_H", H, mode, mask, self._p(f"{prefix}.H.b")))
        t = ad.sigmoid(self._bn(f"{prefix}.bn_T", T, mode, mask, self._p(f"{prefix}.T.b")))
        if gates is not None:
            gates.append((t.data, a.data))
        return t * a + (1.0 - t) * c

    def block(self, h: int, c0: Tensor, mode: str, mask=None, trace: list | None = None) -> Tensor:
        outputs = [c0]
        y = c0
        for j in range(1, self.config.highway_depth + 1):
            prefix = f"branch{h}.hw{j}"
            if j == 1:
                inp = c0
            else:
                cat = ad.concat_channels(outputs)
                if trace is not None:
                    trace.append(cat.shape[-1])
                inp = self._linear(f"{prefix}.bottleneck", cat)
            y = self.highway(prefix, inp, mode, mask)
            outputs.append(y)
        return y

    # -- forward --------------------------------------------------------------

    def forward(self, X, valid_lens, mode: str = "infer") -> tuple[Tensor, Tensor]:
        """Batched forward pass.

        ``X`` is ``[B, n, M]`` (rows past ``valid_lens`` are padding) and the
        result is ``(logits [B, k], pooled [B, P])``.
        """
        X = X if isinstance(X, Tensor) else Tensor(X)
        if X.data.ndim != 3 or X.shape[-1] != self.config.embed_dim:
            raise DimensionError(f"forward: expected [B, n, {self.config.embed_dim}], got {X.shape}")
        B, n, _ = X.shape
        lens = np.asarray(valid_lens, dtype=np.int64).reshape(B)
        if n < self.config.max_filter:
            raise ContractError(f"forward: length {n} shorter than largest filter {self.config.max_filter}")
        if np.any(lens < 1) or np.any(lens > n):
            raise ContractError(f"forward: valid lengths {lens.tolist()} outside [1, {n}]")
        pooled = []
        for h in self.config.filter_sizes:
            L = n - h + 1
            windows = np.maximum(lens - h + 1, 1)
            mask = np.arange(L)[None, :] < windows[:, None]
            c = self.initial_conv(h, X, mode, mask)
            c0 = self._linear(f"branch{h}.entry", c)
            y = self.block(h, c0, mode, mask)
            pooled.append(ad.max_over_time(y, windows))
        feats = ad.concat_channels(pooled)
        return self._linear("head", feats), feats

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def loss(self, X, valid_lens, labels, mode: str = "train") -> tuple[Tensor, np.ndarray]:
        logits, _ = self.forward(X, valid_lens, mode)
        return ad.softmax_cross_entropy(logits, labels)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param:{k}": p.data for k, p in self.params.items()}
        for k, s in self.stats.items():
            out[f"stat:{k}.mean"] = s.mean
            out[f"stat:{k}.var"] = s.var
        return out

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for k, v in sorted(self.state_arrays().items()):
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()


# -- construction -------------------------------------------------------------


def _he(rng, shape, fan_in):
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, shape)


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, shape)


def init_model(config: ModelConfig, seed: int | None = None) -> MbchModel:
    """Fresh model; identical ``(config, seed)`` give bit-identical parameters."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params: dict[str, Parameter] = {}
    stats: dict[str, RunningStats] = {}
    M, F, d = config.embed_dim, config.feature_maps, config.bottleneck_dim

    def add(name, value):
        params[name] = Parameter(value, name)

    def add_bn(prefix, channels):
        add(f"{prefix}.gamma", np.ones(channels))
        add(f"{prefix}.beta", np.zeros(channels))
        stats[prefix] = RunningStats.fresh(channels, BN_MOMENTUM)

    def add_linear(prefix, fan_in, fan_out, bias=0.0):
        add(f"{prefix}.W", _he(rng, (fan_in, fan_out), fan_in))
        add(f"{prefix}.b", np.full(fan_out, bias))

    for h in config.filter_sizes:
        add(f"branch{h}.conv.W", _he(rng, (F, h, M), h * M))
        add(f"branch{h}.conv.b", np.zeros(F))
        add_bn(f"branch{h}.conv.bn", F)
        add_linear(f"branch{h}.entry", F, d)
        for j in range(1, config.highway_depth + 1):
            pre = f"branch{h}.hw{j}"
            if j > 1:
                add_linear(f"{pre}.bottleneck", j * d, d)
            add_linear(f"{pre}.H", d, d)
            add_bn(f"{pre}.bn_H", d)
            add_linear(f"{pre}.T", d, d, bias=GATE_BIAS_INIT)
            add_bn(f"{pre}.bn_T", d)
    P, k = config.pooled_dim, config.num_classes
    add("head.W", _glorot(rng, (P, k), P, k))
    add("head.b", np.zeros(k))
    return MbchModel(config, params, stats)


# -- single-sentence interface ------------------------------------------------


def model_forward(model: MbchModel, X, valid_len: int, mode: str = "infer") -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities ``[k]`` and pooled features ``[P]`` for one ``[n, M]`` sentence."""
    data = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=float)
    logits, pooled = model.forward(data[None], [valid_len], mode)
    return ad.softmax(logits.data)[0], pooled.data[0]


def argmax_first(probs) -> int:
    return int(np.argmax(np.asarray(probs)))


def predict(model: MbchModel, X, valid_len: int | None = None) -> int:
    data = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=float)
    probs, _ = model_forward(model, data, data.shape[0] if valid_len is None else valid_len)
    return argmax_first(probs)


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(model: MbchModel, path, extra: dict | None = None) -> None:
    meta = {"config": asdict(model.config), "momentum": BN_MOMENTUM, "extra": extra or {}}
    arrays = model.state_arrays()
    with Path(path).open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[MbchModel, dict]:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        arrays = {k: z[k].copy() for k in z.files if k != "__meta__"}
    cfg = meta["config"]
    cfg["filter_sizes"] = tuple(cfg["filter_sizes"])
    config = ModelConfig(**cfg)
    params = {k[6:]: Parameter(v, k[6:]) for k, v in arrays.items() if k.startswith("param:")}
    stats = {}
    for k in arrays:
        if k.startswith("stat:") and k.endswith(".mean"):
            name = k[5:-5]
            stats[name] = RunningStats(arrays[k], arrays[f"stat:{name}.var"], meta["momentum"])
    return MbchModel(config, params, stats), meta.get("extra", {})
