from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import norm

from cip.errors import ConfigError, DivergenceError, InvariantError
from cip.synthworld import Mode, WorldSpec
from cip.trainer import (
    Classifier,
    TrainConfig,
    eval_on_set,
    eval_on_world,
    load_classifier,
    loss_and_grads,
    save_classifier,
    train,
)


def separable_fixture():
    rng = np.random.default_rng(0)
    X0 = rng.normal([-1.0, 0.0], 0.3, size=(40, 2))
    X1 = rng.normal([1.0, 0.0], 0.3, size=(40, 2))
    X = np.vstack([X0, X1])
    y = np.array([0] * 40 + [1] * 40)
    return X, y


def finite_difference_grads(params, kind, X, y, wd, h=1e-6):
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grads(params, kind, X, y, wd)
            flat[i] = orig - h
            dn, _ = loss_and_grads(params, kind, X, y, wd)
            flat[i] = orig
            gflat[i] = (up - dn) / (2 * h)
        grads[name] = g
    return grads


class TestConfig:
    def test_invalid_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(momentum=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(lr=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(model="mlp-1-hidden", hidden=0)

    def test_desk_defaults_follow_published_schedule(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.lr, cfg.momentum) == (200, 0.1, 0.9)
        assert (cfg.weight_decay, cfg.lr_decay_factor, cfg.lr_decay_every,
                cfg.batch_size) == (5e-4, 0.2, 50, 128)

    def test_full_scale_presets_documented(self):
        from cip.trainer import FULL_SCALE_PRESETS

        preset = FULL_SCALE_PRESETS["resnet50-imagenet1k"]
        assert preset["optimizer"] == "lamb"
        assert preset["lr"] == 0.005 and preset["weight_decay"] == 0.01


class TestGradients:
    @pytest.mark.parametrize("kind,hidden", [("linear-softmax", 0),
                                             ("mlp-1-hidden", 4)])
    def test_analytic_matches_central_differences(self, kind, hidden):
        rng = np.random.default_rng(42)
        X = rng.standard_normal((8, 3))
        y = rng.integers(0, 3, size=8)
        cfg = TrainConfig(model=kind, hidden=hidden)
        from cip.trainer import _init_params

        params = _init_params(cfg, 3, 3, rng)
        _, analytic = loss_and_grads(params, kind, X, y, 1e-3)
        fd = finite_difference_grads(params, kind, X, y, 1e-3)
        for name in params:
            num = np.linalg.norm(analytic[name] - fd[name])
            den = np.linalg.norm(fd[name]) + 1e-12
            assert num / den < 1e-5, f"{kind}/{name}: rel err {num / den}"


class TestTrain:
    def test_separable_reaches_perfect_train_accuracy(self):
        X, y = separable_fixture()
        clf = train((X, y), TrainConfig(epochs=50), seed=1)
        assert eval_on_set(clf, (X, y)).accuracy == 1.0

    def test_bitwise_determinism(self):
        X, y = separable_fixture()
        cfg = TrainConfig(epochs=20)
        a = train((X, y), cfg, seed=5)
        b = train((X, y), cfg, seed=5)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])
        c = train((X, y), cfg, seed=6)
        assert any(not np.array_equal(a.params[n], c.params[n]) for n in a.params)

    def test_loss_monotone_after_burn_in(self):
        X, y = separable_fixture()
        clf = train((X, y), TrainConfig(epochs=40), seed=2)
        losses = clf.epoch_losses
        assert all(losses[i + 1] <= losses[i] + 1e-12
                   for i in range(3, len(losses) - 1))

    def test_divergence_reports_epoch(self):
        X, y = separable_fixture()
        with pytest.raises(DivergenceError, match="epoch"):
            train((X, y), TrainConfig(epochs=100, lr=1e6), seed=0)

    def test_missing_class_detected(self):
        X = np.zeros((4, 2))
        y = np.array([0, 0, 2, 2])
        with pytest.raises(InvariantError, match="missing training classes"):
            train((X, y), TrainConfig(epochs=1), seed=0)
        # explicit k tolerates an empty class
        clf = train((X, y), TrainConfig(epochs=1), seed=0, k=3)
        assert clf.k == 3

    def test_two_gaussians_reach_bayes_accuracy(self):
        rng = np.random.default_rng(11)
        m = 4000
        y = rng.integers(0, 2, size=m)
        X = rng.normal(2.0 * y - 1.0, 1.0)[:, None]
        clf = train((X, y), TrainConfig(), seed=3)
        y_test = rng.integers(0, 2, size=100_000)
        X_test = rng.normal(2.0 * y_test - 1.0, 1.0)[:, None]
        acc = eval_on_set(clf, (X_test, y_test)).accuracy
        assert abs(acc - norm.cdf(1.0)) < 0.02

    def test_list_of_tuples_accepted(self):
        samples = [(np.array([-1.0]), 0), (np.array([1.0]), 1)] * 10
        clf = train(samples, TrainConfig(epochs=30, batch_size=4), seed=0)
        assert clf.predict(np.array([[-1.0]]))[0] == 0


class TestEvalOnSet:
    def _constant_classifier(self, k=2, pick=0):
        W = np.zeros((k, 1))
        b = np.zeros(k)
        b[pick] = 10.0
        return Classifier("linear-softmax", 1, k, 0, {"W": W, "b": b}, 0)

    def test_all_correct(self):
        clf = self._constant_classifier(pick=0)
        X = np.zeros((20, 1))
        report = eval_on_set(clf, (X, np.zeros(20, dtype=int)))
        assert report.risk == 0.0 and report.accuracy == 1.0

    def test_all_wrong(self):
        clf = self._constant_classifier(pick=0)
        X = np.zeros((20, 1))
        report = eval_on_set(clf, (X, np.ones(20, dtype=int)))
        assert report.risk == 1.0 and report.accuracy == 0.0

    def test_conjugacy_exact(self):
        rng = np.random.default_rng(0)
        clf = self._constant_classifier()
        X = np.zeros((37, 1))
        y = rng.integers(0, 2, size=37)
        report = eval_on_set(clf, (X, y))
        assert report.accuracy == 1.0 - report.risk

    def test_uniform_predictor_quarter_accuracy(self):
        # predictions independent of uniform labels over k=4
        rng = np.random.default_rng(1)
        k, n = 4, 40_000
        clf = Classifier("linear-softmax", 8, k, 0,
                         {"W": rng.standard_normal((k, 8)), "b": np.zeros(k)}, 0)
        X = rng.standard_normal((n, 8))
        y = rng.integers(0, k, size=n)
        report = eval_on_set(clf, (X, y))
        assert abs(report.accuracy - 0.25) < 0.01

    def test_std_error_formula(self):
        clf = self._constant_classifier()
        X = np.zeros((100, 1))
        y = np.array([0] * 80 + [1] * 20)
        report = eval_on_set(clf, (X, y))
        assert report.std_error == pytest.approx(np.sqrt(0.8 * 0.2 / 100))

    def test_empty_rejected(self):
        with pytest.raises(InvariantError):
            eval_on_set(self._constant_classifier(), (np.zeros((0, 1)), np.zeros(0)))


class TestEvalOnWorld:
    def _world(self, a=1.0, sigma=1.0):
        modes = (
            (Mode((-a,), 1.0, "meadowaa", "restingaa"),),
            (Mode((a,), 1.0, "meadowba", "restingba"),),
        )
        return WorldSpec(k=2, d=1, modes=modes, sigma=sigma, polysemy=(None, None))

    def _bayes_rule_classifier(self):
        # boundary at x = 0: w1 - w0 > 0 for x > 0
        return Classifier("linear-softmax", 1, 2, 0,
                          {"W": np.array([[-1.0], [1.0]]), "b": np.zeros(2)}, 0)

    def test_bayes_rule_matches_closed_form_risk(self):
        world = self._world(a=1.0, sigma=1.0)
        clf = self._bayes_rule_classifier()
        report = eval_on_world(clf, world, 200_000, seed=4, labeler="joint")
        closed_form = norm.cdf(-1.0)  # mass on the wrong side of 0
        assert abs(report.risk - closed_form) <= 3 * report.std_error

    def test_bayes_rule_perfect_under_argmax_labeler(self):
        # the shared deterministic labeler makes the Bayes rule noise-free
        world = self._world(a=1.0, sigma=1.0)
        clf = self._bayes_rule_classifier()
        report = eval_on_world(clf, world, 50_000, seed=4, labeler="bayes-argmax")
        assert report.risk == 0.0

    def test_single_sample_std_error_finite(self):
        report = eval_on_world(self._bayes_rule_classifier(), self._world(), 1, 0)
        assert np.isfinite(report.std_error)

    def test_std_error_scales_with_n(self):
        clf = self._bayes_rule_classifier()
        world = self._world()
        r1 = eval_on_world(clf, world, 10_000, 1)
        r2 = eval_on_world(clf, world, 20_000, 1)
        assert 1.2 < r1.std_error / r2.std_error < 1.7


class TestCheckpoints:
    def test_round_trip_bitwise(self, tmp_path):
        X, y = separable_fixture()
        clf = train((X, y), TrainConfig(epochs=10, model="mlp-1-hidden", hidden=5),
                    seed=9)
        path = tmp_path / "clf.txt"
        save_classifier(clf, path)
        loaded = load_classifier(path)
        assert loaded.kind == clf.kind and loaded.train_seed == 9
        for name in clf.params:
            assert np.array_equal(loaded.params[name], clf.params[name])
        assert np.array_equal(loaded.predict(X), clf.predict(X))

    def test_text_format(self, tmp_path):
        X, y = separable_fixture()
        clf = train((X, y), TrainConfig(epochs=2), seed=0)
        path = tmp_path / "clf.txt"
        save_classifier(clf, path)
        text = path.read_text()
        assert text.startswith("cip-classifier-v1\n")
        assert "param W 2 2" in text
