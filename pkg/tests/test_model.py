import math

import numpy as np
import pytest

from said.corpus import Interaction
from said.metrics import auc
from said.model import (
    CtrModel,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    save_checkpoint,
    train,
    weighted_bce,
)
from said.reweight import WeightedSample

TINY = TrainConfig(embedding_dim=4, hidden_layers=(8, 4), seed=3, epochs=1, batch_size=8)


def tiny_model(seed=3):
    cfg = TrainConfig(embedding_dim=4, hidden_layers=(8, 4), seed=seed, epochs=1)
    return CtrModel.initialize(range(5), range(5), cfg)


def reference_forward(model, user_id, item_id):
    """Scalar re-evaluation of the scoring formula with plain Python loops."""
    p = model.params
    u = list(model.user_ids).index(user_id)
    i = list(model.item_ids).index(item_id)
    vu = [float(v) for v in p["v_user"][u]]
    vi = [float(v) for v in p["v_item"][i]]
    fm = sum(a * b for a, b in zip(vu, vi))
    h = vu + vi
    n_hidden = len(model.hidden_layers)
    for layer in range(n_hidden):
        w, b = p[f"mlp_w{layer}"], p[f"mlp_b{layer}"]
        h = [
            max(0.0, sum(h[r] * float(w[r, c]) for r in range(len(h))) + float(b[c]))
            for c in range(w.shape[1])
        ]
    w, b = p[f"mlp_w{n_hidden}"], p[f"mlp_b{n_hidden}"]
    out = sum(h[r] * float(w[r, 0]) for r in range(len(h))) + float(b[0])
    z = float(p["global_bias"][0]) + float(p["w_user"][u]) + float(p["w_item"][i]) + fm + out
    return 1.0 / (1.0 + math.exp(-z))


class TestForward:
    def test_zero_parameters_give_half(self):
        model = tiny_model()
        for name in model.params:
            model.params[name][...] = 0.0
        assert model.forward(2, 3) == 0.5

    def test_fm_term_is_single_dot_product(self):
        model = tiny_model()
        for name in model.params:
            if name.startswith(("mlp_", "w_", "global")):
                model.params[name][...] = 0.0
        u, i = 1, 4
        expected = float(model.params["v_user"][u] @ model.params["v_item"][i])
        prob = model.forward(u, i)
        assert math.log(prob / (1 - prob)) == pytest.approx(expected, abs=1e-9)

    def test_matches_reference_formula(self):
        model = tiny_model(seed=9)
        rng = np.random.default_rng(1)
        for _ in range(25):
            u = int(rng.integers(0, 5))
            i = int(rng.integers(0, 5))
            assert model.forward(u, i) == pytest.approx(reference_forward(model, u, i), abs=1e-10)

    def test_out_of_range_id(self):
        model = tiny_model()
        with pytest.raises(ValueError, match="item"):
            model.forward(0, 99)
        with pytest.raises(ValueError, match="user"):
            model.forward(99, 0)

    def test_predictions_clipped(self):
        model = tiny_model()
        model.params["global_bias"][0] = 80.0
        prob = model.forward(0, 0)
        assert prob == 1.0 - model.clip_epsilon


class TestWeightedBce:
    def test_minus_log_half(self):
        assert weighted_bce([0.5], [1.0], [1.0], reduction="mean") == pytest.approx(0.693147, abs=1e-6)

    def test_all_ones_equals_unweighted(self):
        rng = np.random.default_rng(2)
        p = rng.uniform(0.05, 0.95, size=50)
        y = rng.integers(0, 2, size=50).astype(float)
        assert weighted_bce(p, y, np.ones(50)) == weighted_bce(p, y)

    def test_halving_one_weight_halves_its_contribution(self):
        p = np.array([0.3, 0.8, 0.6])
        y = np.array([0.0, 1.0, 1.0])
        w = np.array([1.0, 1.0, 1.0])
        base = weighted_bce(p, y, w)
        w2 = w.copy()
        w2[1] = 0.5
        contribution = -math.log(p[1])
        assert weighted_bce(p, y, w2) == pytest.approx(base - 0.5 * contribution, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            weighted_bce([0.5, 0.5], [1.0], None)
        with pytest.raises(ValueError):
            weighted_bce([0.5], [1.0], [1.0, 1.0])


class TestBackward:
    def batch(self, rng, n=12):
        users = rng.integers(0, 5, size=n)
        items = rng.integers(0, 5, size=n)
        labels = rng.integers(0, 2, size=n).astype(float)
        weights = rng.uniform(0.2, 1.0, size=n)
        return users, items, labels, weights

    def test_matches_central_finite_differences(self):
        model = tiny_model(seed=5)
        rng = np.random.default_rng(5)
        users, items, labels, weights = self.batch(rng)
        grads = model.backward(users, items, labels, weights)

        def loss():
            preds = [model.forward(int(u), int(i)) for u, i in zip(users, items)]
            return weighted_bce(preds, labels, weights, reduction="sum")

        h = 1e-5
        worst = 0.0
        for _ in range(100):
            names = model.param_names()
            name = names[int(rng.integers(0, len(names)))]
            arr = model.params[name]
            idx = int(rng.integers(0, arr.size))
            orig = arr.flat[idx]
            arr.flat[idx] = orig + h
            up = loss()
            arr.flat[idx] = orig - h
            down = loss()
            arr.flat[idx] = orig
            fd = (up - down) / (2 * h)
            analytic = grads[name].flat[idx]
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
            worst = max(worst, rel)
        assert worst < 1e-4

    def test_zero_weight_sample_contributes_nothing(self):
        model = tiny_model(seed=6)
        rng = np.random.default_rng(6)
        users, items, labels, weights = self.batch(rng)
        zeroed = weights.copy()
        zeroed[4] = 0.0
        with_zero = model.backward(users, items, labels, zeroed)
        keep = np.arange(len(users)) != 4
        without = model.backward(users[keep], items[keep], labels[keep], weights[keep] * 0 + zeroed[keep])
        for name in with_zero:
            np.testing.assert_allclose(with_zero[name], without[name], atol=1e-15)

    def test_doubling_weights_doubles_gradients(self):
        model = tiny_model(seed=7)
        rng = np.random.default_rng(7)
        users, items, labels, weights = self.batch(rng)
        g1 = model.backward(users, items, labels, weights)
        g2 = model.backward(users, items, labels, 2.0 * weights)
        for name in g1:
            np.testing.assert_allclose(g2[name], 2.0 * g1[name], rtol=1e-14, atol=0)


def toy_samples():
    # two users with opposite single-item tastes; linearly separable
    rows = [
        Interaction(0, 0, 1, 0),
        Interaction(0, 1, 0, 0),
        Interaction(1, 1, 1, 0),
        Interaction(1, 0, 0, 0),
    ]
    return rows


class TestTrain:
    def cfg(self, **kw):
        base = dict(
            learning_rate=0.05, batch_size=4, epochs=50, seed=0,
            embedding_dim=4, hidden_layers=(8,), patience=3,
        )
        base.update(kw)
        return TrainConfig(**base)

    def test_same_seed_identical_trace_and_params(self):
        cfg = self.cfg(epochs=5)
        samples = [WeightedSample(it, 0.9 if it.label else 1.0) for it in toy_samples()]
        m1, t1 = train(CtrModel.initialize([0, 1], [0, 1], cfg), samples, cfg)
        m2, t2 = train(CtrModel.initialize([0, 1], [0, 1], cfg), samples, cfg)
        assert t1 == t2
        for name in m1.params:
            assert np.array_equal(m1.params[name], m2.params[name])

    def test_alpha_one_bit_identical_to_unweighted(self):
        cfg = self.cfg(epochs=8)
        rows = toy_samples()
        weighted = [WeightedSample(it, 1.0) for it in rows]
        m_w, _ = train(CtrModel.initialize([0, 1], [0, 1], cfg), weighted, cfg)
        m_u, _ = train(CtrModel.initialize([0, 1], [0, 1], cfg), rows, cfg)
        for name in m_w.params:
            assert np.array_equal(m_w.params[name], m_u.params[name]), name

    def test_toy_set_reaches_perfect_train_auc(self):
        cfg = self.cfg()
        rows = toy_samples()
        model, trace = train(CtrModel.initialize([0, 1], [0, 1], cfg), rows, cfg)
        scores = model.predict([r.user_id for r in rows], [r.item_id for r in rows])
        assert auc(scores, [r.label for r in rows]) == 1.0
        assert len(trace) <= 50

    def test_loss_trace_decreases(self):
        cfg = self.cfg(epochs=30)
        rows = toy_samples()
        _, trace = train(CtrModel.initialize([0, 1], [0, 1], cfg), rows, cfg)
        assert trace[-1].train_loss < trace[0].train_loss

    def test_early_stopping_restores_best(self):
        cfg = self.cfg(epochs=40, patience=2)
        rows = toy_samples()
        val = toy_samples()
        model, trace = train(CtrModel.initialize([0, 1], [0, 1], cfg), rows, cfg, validation=val)
        assert len(trace) <= 40
        best = max(t.val_auc for t in trace)
        scores = model.predict([r.user_id for r in val], [r.item_id for r in val])
        assert auc(scores, [r.label for r in val]) == pytest.approx(best, abs=1e-12)

    def test_divergence_raises_with_location(self):
        cfg = self.cfg(learning_rate=1e200, epochs=3)
        rows = toy_samples()
        with np.errstate(all="ignore"), pytest.raises(TrainingError, match=r"epoch"):
            train(CtrModel.initialize([0, 1], [0, 1], cfg), rows, cfg)

    def test_empty_samples_rejected(self):
        cfg = self.cfg()
        with pytest.raises(ValueError):
            train(CtrModel.initialize([0], [0], cfg), [], cfg)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        cfg = TrainConfig(embedding_dim=6, hidden_layers=(12, 5), seed=8, epochs=2, batch_size=4, learning_rate=0.01)
        model = CtrModel.initialize([3, 7, 9], [10, 20], cfg)
        rows = [Interaction(3, 10, 1, 0), Interaction(7, 20, 0, 1), Interaction(9, 10, 1, 2)]
        model, _ = train(model, rows, cfg)
        path = tmp_path / "model.saidckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.user_ids, model.user_ids)
        assert np.array_equal(loaded.item_ids, model.item_ids)
        assert loaded.hidden_layers == model.hidden_layers
        for name in model.params:
            assert np.array_equal(loaded.params[name], model.params[name])
        assert loaded.forward(7, 20) == model.forward(7, 20)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.saidckpt"
        path.write_bytes(b"WRONGMAG" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)


class TestGradientCheckHelper:
    def test_packaged_gradcheck_passes(self):
        from said.model import gradient_check

        assert gradient_check(n_points=50, seed=1) < 1e-4
