from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puflab import nn
from puflab.nn import HeadSpec, NetConfig, NetError, TrainConfig

from oracles import off_kink_inputs

THREE = (HeadSpec("response", "binary", 1, 1.0), HeadSpec("power", "categorical", 4, 0.8),
         HeadSpec("reliability", "categorical", 3, 0.5))


def small_net(seed=0, activation="relu", heads=THREE, hidden=(6, 5), input_dim=5):
    return nn.init(NetConfig(input_dim, hidden, heads, activation), seed)


def random_targets(rng, rows, heads):
    out = {}
    for h in heads:
        if h.kind == "binary":
            out[h.name] = rng.integers(0, 2, rows).astype(np.float64)
        else:
            out[h.name] = rng.integers(0, h.classes, rows)
    return out


def zero_net(net):
    net.set_params([np.zeros_like(p) for p in net.params()])
    return net


def test_init_deterministic_and_shapes():
    cfg = NetConfig(97, (64, 64), THREE)
    a, b = nn.init(cfg, 3), nn.init(cfg, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    assert a.shared[0][0].shape == (64, 97)
    assert all(np.all(np.isfinite(p)) for p in a.params())
    assert all(np.all(layer[1] == 0) for layer in a.shared + a.heads)


def test_config_validation():
    with pytest.raises(NetError):
        NetConfig(5, (), THREE)
    with pytest.raises(NetError):
        NetConfig(5, (4,), THREE, "sigmoid")
    with pytest.raises(NetError):
        NetConfig(5, (4,), THREE + (HeadSpec("response2", "binary"),))
    with pytest.raises(NetError):
        HeadSpec("power", "categorical", 1)
    with pytest.raises(NetError):
        HeadSpec("response", "binary", 1, float("inf"))
    with pytest.raises(NetError):
        TrainConfig(max_epochs=5, patience=6)


def test_zero_net_outputs():
    net = zero_net(small_net())
    out = nn.forward(net, np.ones((3, 5)))
    assert np.all(out["response"] == 0.5)
    assert np.allclose(out["power"], 0.25, atol=0, rtol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50))
def test_softmax_rows_normalised(seed, scale):
    net = small_net(seed)
    x = np.random.default_rng(seed).normal(0, scale, (20, 5))
    out = nn.forward(net, x)
    for name in ("power", "reliability"):
        assert np.all(out[name] >= 0)
        assert np.max(np.abs(out[name].sum(axis=1) - 1)) <= 1e-9
    assert np.all((out["response"] >= 0) & (out["response"] <= 1))


def test_batch_row_independence():
    net = small_net(4)
    x = np.random.default_rng(0).normal(size=(10, 5))
    full = nn.forward(net, x)
    one = nn.forward(net, x[3:4])
    for k in full:
        assert np.allclose(full[k][3], one[k][0], rtol=0, atol=1e-15)


def test_forward_shape_error():
    with pytest.raises(NetError):
        nn.forward(small_net(), np.ones((2, 4)))


def test_weighted_total_loss():
    heads = (HeadSpec("response", "binary", 1, 1.0), HeadSpec("power", "categorical", 2, 0.8))
    # Probabilities chosen so the per-head losses are exactly 0.5 and 0.25.
    outs = {"response": np.array([np.exp(-0.5)]), "power": np.array([[np.exp(-0.25), 1 - np.exp(-0.25)]])}
    total, per = nn.loss(outs, {"response": np.array([1.0]), "power": np.array([0])}, heads)
    assert per["response"] == pytest.approx(0.5, abs=1e-15)
    assert per["power"] == pytest.approx(0.25, abs=1e-15)
    assert total == pytest.approx(0.7, abs=1e-15)


def test_perfect_and_uniform_losses():
    h = HeadSpec("c", "categorical", 5)
    assert nn.head_loss(np.eye(5), np.arange(5), h) <= 1e-11
    assert nn.head_loss(np.full((4, 5), 0.2), np.array([0, 1, 2, 3]), h) == pytest.approx(np.log(5), abs=1e-12)
    b = HeadSpec("r", "binary")
    assert nn.head_loss(np.array([1.0, 0.0]), np.array([1, 0]), b) <= 1e-11
    assert np.isfinite(nn.head_loss(np.array([0.0]), np.array([1]), b))


@pytest.mark.parametrize("seed", range(20))
def test_gradient_check_three_heads(seed):
    net = small_net(seed, "relu" if seed % 2 == 0 else "tanh")
    rng = np.random.default_rng(100 + seed)
    x = off_kink_inputs(net, rng, 7)
    errors = nn.gradient_check(net, x, random_targets(rng, 7, THREE))
    assert max(errors) < 1e-4


def test_gradient_check_spec_example():
    heads = THREE[:2]
    net = small_net(9, heads=heads, hidden=(4,))
    rng = np.random.default_rng(0)
    x = off_kink_inputs(net, rng, 6)
    assert max(nn.gradient_check(net, x, random_targets(rng, 6, heads))) < 1e-4


def test_zero_weight_head_leaves_shared_gradient_alone():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(9, 5))
    tg = random_targets(rng, 9, THREE)
    net = small_net(2)
    _, _, g_zero = nn.backward(net, x, tg, weights={"power": 0.0, "reliability": 0.0})
    solo = small_net(2, heads=THREE[:1])
    _, _, g_solo = nn.backward(solo, x, {"response": tg["response"]})
    shared = 2 * len(net.shared)
    for a, b in zip(g_zero[:shared], g_solo[:shared]):
        assert np.array_equal(a, b)
    assert np.array_equal(g_zero[shared], g_solo[shared])
    assert not np.any(g_zero[shared + 2])


def test_loss_linearity_and_degeneration():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 5))
    tg = random_targets(rng, 8, THREE)
    net = small_net(3)
    outs = nn.forward(net, x)
    base, per = nn.loss(outs, tg, THREE)
    scaled, _ = nn.loss(outs, tg, THREE, {h.name: 3 * h.loss_weight for h in THREE})
    assert scaled == pytest.approx(3 * base, rel=1e-14)
    only, _ = nn.loss(outs, tg, THREE, {"response": 1.0, "power": 0.0, "reliability": 0.0})
    solo = nn.loss(outs, {"response": tg["response"]}, THREE[:1])[0]
    assert only == solo == per["response"]


def test_duplicated_rows_double_summed_gradient():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 5))
    tg = random_targets(rng, 5, THREE)
    net = small_net(5, "tanh")
    _, _, g1 = nn.backward(net, x, tg)
    x2 = np.concatenate([x, x])
    tg2 = {k: np.concatenate([v, v]) for k, v in tg.items()}
    _, _, g2 = nn.backward(net, x2, tg2)
    # Gradients are batch means, so the summed gradient is mean * rows.
    for a, b in zip(g1, g2):
        assert np.allclose(10 * b, 2 * (5 * a), rtol=1e-12, atol=1e-15)


def test_adam_zero_gradient_and_first_step():
    net = small_net(6)
    before = net.copy_params()
    nn.adam_step(net, [np.zeros_like(p) for p in net.params()], 1, TrainConfig())
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))
    net = small_net(6)
    before = net.copy_params()
    cfg = TrainConfig(learning_rate=1e-3)
    nn.adam_step(net, [np.full_like(p, 0.37) for p in net.params()], 1, cfg)
    for a, b in zip(before, net.params()):
        assert np.allclose(a - b, 1e-3, rtol=1e-6)
    with pytest.raises(NetError):
        nn.adam_step(net, [np.zeros_like(p) for p in net.params()], 0, cfg)


def test_adam_deterministic_and_rejects_non_finite():
    a, b = small_net(7), small_net(7)
    grads = [np.random.default_rng(0).normal(size=p.shape) for p in a.params()]
    for t in (1, 2, 3):
        nn.adam_step(a, grads, t, TrainConfig())
        nn.adam_step(b, grads, t, TrainConfig())
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    bad = [np.full_like(p, np.nan) for p in a.params()]
    with pytest.raises(FloatingPointError):
        nn.adam_step(a, bad, 4, TrainConfig())


def test_predict_threshold():
    net = zero_net(small_net(heads=THREE[:1]))
    assert nn.predict_response(net, np.ones((2, 5))).tolist() == [1, 1]
    head_b = net.heads[0][1]
    head_b[:] = np.log(0.7 / 0.3)
    assert nn.predict_response(net, np.ones((1, 5)))[0] == 1
    head_b[:] = np.log(0.3 / 0.7)
    assert nn.predict_response(net, np.ones((1, 5)))[0] == 0
    with pytest.raises(NetError):
        nn.predict_response(small_net(heads=THREE[1:]), np.ones((1, 5)))


def _linear_task(seed, rows=3000, dim=16):
    rng = np.random.default_rng(seed)
    x = rng.choice([-1.0, 1.0], size=(rows, dim))
    w = rng.normal(size=dim)
    y = (x @ w < 0).astype(np.float64)
    def part(s, e, tag):
        return SimpleNamespace(inputs=x[s:e], targets={"response": y[s:e]}, response=y[s:e].astype(np.uint8),
                               split=tag)
    return part(0, 2000, "train"), part(2000, 2500, "validation"), part(2500, 3000, "test")


def test_train_deterministic_and_bounded():
    tr, va, _ = _linear_task(0)
    cfg = NetConfig(16, (16,), THREE[:1])
    tc = TrainConfig(batch_size=100, max_epochs=6, patience=3, seed=4)
    _, h1 = nn.train(nn.init(cfg, 1), tr, va, tc)
    _, h2 = nn.train(nn.init(cfg, 1), tr, va, tc)
    assert len(h1) <= 6
    assert [e["train_loss"] for e in h1.epochs] == [e["train_loss"] for e in h2.epochs]
    assert h1.best_response_acc == max(e["response_acc"] for e in h1.epochs)


def test_train_refuses_test_split_and_empty():
    tr, va, te = _linear_task(1)
    net = nn.init(NetConfig(16, (8,), THREE[:1]), 0)
    with pytest.raises(NetError):
        nn.train(net, tr, te, TrainConfig(max_epochs=1, patience=1))
    empty = SimpleNamespace(inputs=np.zeros((0, 16)), targets={"response": np.zeros(0)}, response=np.zeros(0),
                            split="train")
    with pytest.raises(NetError):
        nn.train(net, empty, va, TrainConfig(max_epochs=1, patience=1))


def test_train_early_stop_restores_best():
    tr, va, _ = _linear_task(2)
    net = nn.init(NetConfig(16, (32,), THREE[:1]), 0)
    net, hist = nn.train(net, tr, va, TrainConfig(batch_size=50, max_epochs=40, patience=2, seed=1))
    assert len(hist) - hist.best_epoch <= 2
    got = nn.evaluate_heads(net, va)["response_acc"]
    assert got == hist.best_response_acc


def test_checkpoint_round_trip(tmp_path):
    net = small_net(8, "tanh")
    net.step = 17
    path = tmp_path / "net.ckpt"
    nn.save(net, path)
    back = nn.load(path)
    assert back.cfg == net.cfg and back.step == 17
    assert all(np.array_equal(a, b) for a, b in zip(net.params(), back.params()))
    x = np.random.default_rng(0).normal(size=(4, 5))
    for k, v in nn.forward(net, x).items():
        assert np.array_equal(v, nn.forward(back, x)[k])
    raw = path.read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(raw[:-8])
    with pytest.raises(NetError):
        nn.load(tmp_path / "cut.ckpt")
    assert nn.param_count(net) == sum(p.size for p in net.params())
