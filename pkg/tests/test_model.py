import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbch import autodiff as ad
from mbch.autodiff import RunningStats, Tensor
from mbch.errors import ConfigError, ContractError, DimensionError
from mbch.model import (
    GATE_BIAS_INIT,
    ModelConfig,
    argmax_first,
    init_model,
    load_checkpoint,
    model_forward,
    predict,
    save_checkpoint,
)


def test_config_validation():
    with pytest.raises(ConfigError) as err:
        ModelConfig(filter_sizes=(3, 2), bottleneck_dim=600, num_classes=1)
    assert len(err.value.violations) == 3


def test_baseline_widths():
    cfg = ModelConfig()
    assert cfg.pooled_dim == 400 and cfg.max_filter == 5
    model = init_model(ModelConfig(feature_maps=8, bottleneck_dim=4, embed_dim=5))
    assert model.params["head.W"].shape == (16, 2)


def test_init_deterministic(micro_config):
    a, b = init_model(micro_config, 3), init_model(micro_config, 3)
    assert a.checksum() == b.checksum()
    assert init_model(micro_config, 4).checksum() != a.checksum()


def test_gate_bias_init(micro_config):
    model = init_model(micro_config)
    gates = [p for n, p in model.params.items() if n.endswith(".T.b")]
    assert len(gates) == 4
    assert all(np.all(g.data == GATE_BIAS_INIT) for g in gates)
    assert model.params["branch3.hw2.bottleneck.W"].shape == (6, 3)


def _infer_ready(model):
    # fresh running statistics: mean 0, var 1
    for key, s in model.stats.items():
        model.stats[key] = RunningStats.fresh(len(s.mean))
    return model


def test_highway_carry_limit(micro_config, rng):
    model = _infer_ready(init_model(micro_config))
    model.params["branch2.hw1.T.b"].data[...] = -40.0
    for _ in range(20):
        c = Tensor(rng.normal(size=(4, 3)))
        y = model.highway("branch2.hw1", c, "infer")
        np.testing.assert_allclose(y.data, c.data, atol=1e-9, rtol=0)


def test_highway_transform_limit(micro_config, rng):
    model = _infer_ready(init_model(micro_config))
    model.params["branch2.hw1.T.b"].data[...] = 40.0
    c = Tensor(rng.normal(size=(4, 3)))
    gates = []
    y = model.highway("branch2.hw1", c, "infer", gates=gates)
    t, a = gates[0]
    np.testing.assert_allclose(y.data, a, atol=1e-9)


def test_highway_interpolation(micro_config, rng):
    model = init_model(micro_config)
    c = Tensor(rng.normal(size=(6, 3)))
    gates = []
    y = model.highway("branch3.hw2", c, "train", gates=gates)
    t, a = gates[0]
    np.testing.assert_allclose(y.data, t * a + (1 - t) * c.data, atol=1e-12)
    assert np.all((t > 0) & (t < 1))


def test_highway_width_mismatch(micro_config):
    with pytest.raises(DimensionError):
        init_model(micro_config).highway("branch2.hw1", Tensor(np.ones((4, 5))), "train")


def test_depth_one_block_is_one_highway(rng):
    cfg = ModelConfig(filter_sizes=(2,), feature_maps=4, bottleneck_dim=3, highway_depth=1, embed_dim=5)
    model = init_model(cfg)
    c0 = Tensor(rng.normal(size=(5, 3)))
    trace = []
    y = model.block(2, c0, "train", trace=trace)
    np.testing.assert_array_equal(y.data, init_model(cfg).highway("branch2.hw1", c0, "train").data)
    assert trace == []


def test_dense_concat_widths(rng):
    cfg = ModelConfig(filter_sizes=(2,), feature_maps=6, bottleneck_dim=3, highway_depth=3, embed_dim=5)
    trace = []
    init_model(cfg).block(2, Tensor(rng.normal(size=(5, 3))), "train", trace=trace)
    assert trace == [6, 9]


def test_forward_shapes(micro_config, rng):
    model = init_model(micro_config)
    logits, pooled = model.forward(rng.normal(size=(4, 7, 6)), [7, 3, 5, 2], "train")
    assert logits.shape == (4, 2) and pooled.shape == (4, 6)


def test_forward_contracts(micro_config, rng):
    model = init_model(micro_config)
    with pytest.raises(ContractError):
        model.forward(rng.normal(size=(2, 2, 6)), [2, 2])
    with pytest.raises(DimensionError):
        model.forward(rng.normal(size=(2, 5, 7)), [5, 5])
    with pytest.raises(ContractError):
        model.forward(rng.normal(size=(2, 5, 6)), [5, 6])


def test_infer_mode_is_pure(micro_config, rng):
    model = init_model(micro_config)
    model.forward(rng.normal(size=(4, 6, 6)), [6] * 4, "train")
    before = model.checksum()
    model.forward(rng.normal(size=(4, 6, 6)), [6] * 4, "infer")
    assert model.checksum() == before


def test_padding_invariance(micro_config, rng):
    model = init_model(micro_config)
    model.forward(rng.normal(size=(8, 6, 6)), [6, 5, 4, 6, 3, 6, 6, 2], "train")
    X = rng.normal(size=(4, 6))
    ref, _ = model_forward(model, X, 4)
    for pad in (1, 3, 10):
        Xp = np.vstack([X, np.zeros((pad, 6))])
        np.testing.assert_allclose(model_forward(model, Xp, 4)[0], ref, atol=1e-9, rtol=0)


def test_short_sentence_uses_one_window(micro_config, rng):
    # a 1-token sentence padded to the largest filter still classifies
    model = init_model(micro_config)
    X = np.vstack([rng.normal(size=(1, 6)), np.zeros((2, 6))])
    probs, _ = model_forward(model, X, 1)
    assert probs.shape == (2,) and probs.sum() == pytest.approx(1.0)


def test_argmax_ties():
    assert argmax_first([0.5, 0.5]) == 0
    assert argmax_first([0.2, 0.4, 0.4]) == 1


def test_predict_matches_probs(micro_config, rng):
    model = init_model(micro_config)
    X = rng.normal(size=(5, 6))
    assert predict(model, X) == int(np.argmax(model_forward(model, X, 5)[0]))


def test_checkpoint_round_trip(micro_config, tmp_path, rng):
    model = init_model(micro_config, 7)
    model.forward(rng.normal(size=(4, 5, 6)), [5] * 4, "train")
    save_checkpoint(model, tmp_path / "m.npz", {"label_names": ["a", "b"]})
    loaded, extra = load_checkpoint(tmp_path / "m.npz")
    assert extra == {"label_names": ["a", "b"]}
    assert loaded.config == model.config and loaded.checksum() == model.checksum()
    X = rng.normal(size=(5, 6))
    np.testing.assert_array_equal(model_forward(loaded, X, 5)[0], model_forward(model, X, 5)[0])


def test_model_gradients_micro(micro_config, rng):
    model = init_model(micro_config, 1)
    X = rng.normal(size=(4, 5, 6))
    lens = np.array([5, 3, 4, 5])
    report = ad.grad_check(lambda: model.loss(X, lens, [0, 1, 1, 0])[0], model.params)
    assert report.ok, report.worst


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 4),
    st.integers(1, 3),
    st.integers(2, 5),
    st.integers(1, 3),
    st.integers(2, 4),
    st.integers(0, 3),
    st.integers(0, 2**31),
)
def test_shape_laws(n_filters, lowest, fm, depth, k, extra_len, seed):
    sizes = tuple(range(lowest, lowest + n_filters))
    bd = max(1, fm - 1)
    cfg = ModelConfig(sizes, fm, bd, depth, k, embed_dim=3, seed=seed)
    model = init_model(cfg)
    rng = np.random.default_rng(seed)
    n = max(sizes) + extra_len
    lens = rng.integers(1, n + 1, 3)
    logits, pooled = model.forward(rng.normal(size=(3, n, 3)), lens, "train")
    assert pooled.shape == (3, n_filters * bd) and logits.shape == (3, k)
    for h in sizes:
        c = model.initial_conv(h, Tensor(rng.normal(size=(2, n, 3))), "train")
        assert c.shape == (2, n - h + 1, fm)
