import math

import numpy as np
import pytest

from mstan import model as M
from mstan.synthgen import GenConfig, generate_dataset
from mstan.training import (
    Optimizer,
    TrainConfig,
    bce_loss,
    fit_memorize,
    grad_check,
    optimizer_step,
    stratified_split,
    train,
)
from mstan import numkernel as nk


def test_bce_half():
    loss, _ = bce_loss([0.5], [1])
    assert abs(loss - math.log(2)) < 1e-15


def test_bce_perfect_clamped():
    loss, _ = bce_loss([1.0, 0.0], [1, 0])
    assert loss < 1e-10


def test_bce_gradient_finite_differences():
    y = np.array([1.0, 0.0, 1.0, 0.0])
    p = {"q": np.array([0.3, 0.6, 0.9, 0.05])}
    _, g = bce_loss(p["q"], y)
    fd = nk.finite_diff_grad(lambda d: bce_loss(d["q"], y)[0], p, eps=1e-7)
    assert nk.max_relative_error(g, fd["q"]) < 1e-6


def test_bce_length_mismatch():
    with pytest.raises(ValueError):
        bce_loss([0.5, 0.5], [1])


def test_sgd_step():
    cfg = TrainConfig(optimizer="sgd", learning_rate=0.1)
    p = {"a": np.array(1.0)}
    optimizer_step(p, {"a": np.array(2.0)}, Optimizer(cfg), cfg)
    assert abs(float(p["a"]) - 0.8) < 1e-15


def test_zero_gradient_steps():
    for opt in ("sgd", "adam"):
        cfg = TrainConfig(optimizer=opt)
        p = {"a": np.array([1.0, -2.0])}
        optimizer_step(p, {"a": np.zeros(2)}, Optimizer(cfg), cfg)
        np.testing.assert_allclose(p["a"], [1.0, -2.0], atol=1e-12, rtol=0)


def test_adam_first_step_bias_corrected():
    cfg = TrainConfig(learning_rate=1e-3)
    p = {"a": np.array([0.5, 3.0])}
    optimizer_step(p, {"a": np.ones(2)}, Optimizer(cfg), cfg)
    # m_hat = v_hat = 1 at t=1, so the step is lr / (1 + eps)
    np.testing.assert_allclose(p["a"], np.array([0.5, 3.0]) - 1e-3 / (1 + 1e-8), atol=1e-15)


def test_optimizer_shape_mismatch():
    cfg = TrainConfig()
    with pytest.raises(nk.ShapeError):
        optimizer_step({"a": np.ones(2)}, {"a": np.ones(3)}, Optimizer(cfg), cfg)


@pytest.mark.parametrize("kw", [dict(epochs=0), dict(batch_size=0), dict(learning_rate=0.0),
                                dict(optimizer="rmsprop"), dict(split=(0.5, 0.5, 0.5))])
def test_invalid_train_config(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_stratified_split_has_both_classes():
    labels = np.array([0] * 14 + [1] * 6)
    s = stratified_split(labels, (0.7, 0.15, 0.15), 0)
    assert sorted(np.concatenate(list(s.values())).tolist()) == list(range(20))
    for part in s.values():
        assert set(labels[part].tolist()) == {0, 1}


def small_data(n=40, seed=0):
    return generate_dataset(GenConfig(n_items=n, T_min=10, T_max=30, seed=seed))


def test_single_class_training_split_rejected():
    ds = small_data()
    ds.items = [(s, 1) for s, _ in ds.items]
    with pytest.raises(ValueError, match="both classes"):
        train(M.ModelConfig(d=8, d_h=4, scales=(1,)), TrainConfig(epochs=1), ds)


def test_train_deterministic_and_best_epoch():
    ds = small_data()
    mc = M.ModelConfig(d=8, d_h=6, scales=(1, 2), L_max=30)
    tc = TrainConfig(epochs=6, batch_size=8, learning_rate=1e-2, early_stop_patience=3)
    p1, h1 = train(mc, tc, ds)
    p2, h2 = train(mc, tc, ds)
    assert h1.train_loss == h2.train_loss and h1.val_loss == h2.val_loss
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)
    f1s = [m.f1 for m in h1.val_metrics]
    assert h1.best_f1 == max(f1s)
    assert len(h1.train_loss) == len(h1.val_metrics)


def test_learning_happens_in_50_epochs():
    ds = generate_dataset(GenConfig(n_items=20, seed=5))
    mc = M.ModelConfig(d=8, d_h=8, scales=(1, 3))
    _, losses = fit_memorize(mc, TrainConfig(epochs=50, batch_size=8), ds)
    assert losses[-1] < losses[0]


def test_grad_check_examples():
    cfg = M.ModelConfig(d=3, d_h=4, scales=(1, 2), seed=0)
    assert grad_check(cfg, 0) < 1e-4
    assert grad_check(M.ModelConfig(d=3, d_h=4, scales=(1, 2), tau_learnable=True), 0) < 1e-4


def test_grad_check_catches_broken_sigma_gradient():
    def broken(params, cache, d_y, config):
        g = M.backward(params, cache, d_y, config)
        g["sigma_raw"] = g["sigma_raw"] * 1.5 + 0.1
        return g

    cfg = M.ModelConfig(d=3, d_h=4, scales=(1, 2), seed=0)
    assert grad_check(cfg, 0, backward_fn=broken) > 1e-2
