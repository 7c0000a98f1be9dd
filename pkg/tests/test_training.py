import math

import numpy as np
import pytest

import oracles
from archrep import autodiff as ad
from archrep.blocks import BlockConfig
from archrep.data import SyntheticConfig, generate_synthetic
from archrep.errors import ConfigurationError, NumericalError
from archrep.predictor import Model, ModelConfig
from archrep.training import (
    Adam,
    TrainConfig,
    batch_gradients,
    evaluate,
    graph_loss_and_grads,
    history_csv,
    lr_at,
    mse_loss,
    train,
)

SMALL = BlockConfig(d_model=8, d_attn=4, d_hidden=16, groups=2)


def small_model(seed=0, **kw):
    return Model(ModelConfig(block=SMALL, head_hidden=(8, 4), **kw), seed=seed)


@pytest.fixture(scope="module")
def tiny_set():
    ds = generate_synthetic(SyntheticConfig(count=12, depth_min=5, depth_max=12, seed=5))
    return ds.graphs


def test_mse_loss_values():
    assert mse_loss(ad.constant([[1.0], [3.0]]), [0.0, 1.0]).item() == 2.5
    with pytest.raises(ConfigurationError):
        mse_loss(ad.constant([[1.0]]), [1.0, 2.0])


def test_lr_schedule_shape():
    assert lr_at(0, 100) == 0.0
    assert lr_at(5, 100, 1e-3) == pytest.approx(5e-4)
    assert lr_at(10, 100, 1e-3) == pytest.approx(1e-3)
    assert lr_at(55, 100, 1e-3) == pytest.approx(5e-4)
    assert lr_at(100, 100, 1e-3) == 0.0
    with pytest.raises(ConfigurationError):
        lr_at(101, 100)


def test_adam_first_step_matches_hand_formula():
    p = ad.parameter([[0.5, -2.0]], "p")
    g = np.array([[0.3, -4.0]])
    Adam().step({"p": p}, {"p": g}, 1e-2)
    ref = [oracles.adam_first_step(0.5, 0.3, 1e-2), oracles.adam_first_step(-2.0, -4.0, 1e-2)]
    np.testing.assert_allclose(p.data[0], ref, rtol=0, atol=1e-15)


def test_adam_rejects_nonfinite_gradient():
    p = ad.parameter([[1.0]], "p")
    with pytest.raises(NumericalError, match="p"):
        Adam().step({"p": p}, {"p": np.array([[np.nan]])}, 1e-3)


def test_train_step_count_and_history(tiny_set):
    res = train(tiny_set, small_model(), TrainConfig(epochs=3, batch_size=5))
    assert res.steps == 3 * 3
    assert [h.epoch for h in res.history] == [0, 1, 2]
    csv = history_csv(res.history)
    assert csv.splitlines()[0] == "epoch,loss,lr" and len(csv.splitlines()) == 4


def test_training_reduces_loss(tiny_set):
    res = train(tiny_set, small_model(target_scale=float(np.median([g.target for g in tiny_set]))),
                TrainConfig(epochs=30, batch_size=4, peak_lr=3e-3))
    assert res.history[-1].loss < res.history[0].loss


def test_training_is_deterministic(tiny_set):
    a = train(tiny_set, small_model(), TrainConfig(epochs=2, batch_size=4, seed=7))
    b = train(tiny_set, small_model(), TrainConfig(epochs=2, batch_size=4, seed=7))
    assert history_csv(a.history) == history_csv(b.history)
    for k, v in a.model.state().items():
        assert np.array_equal(v, b.model.state()[k])


def test_batch_gradient_is_mean_of_per_graph_gradients(tiny_set):
    m = small_model()
    pgs = [m.prepare(g) for g in tiny_set[:3]]
    loss, grads = batch_gradients(m, pgs)
    singles = [graph_loss_and_grads(m, pg, m.parameters()) for pg in pgs]
    assert loss == pytest.approx(np.mean([s[0] for s in singles]), rel=1e-14)
    for k in grads:
        np.testing.assert_allclose(grads[k], np.mean([s[1][k] for s in singles], axis=0), rtol=1e-12, atol=1e-15)


def test_divergence_rolls_back_and_raises(tiny_set):
    m = small_model()
    seen = []
    bad = list(tiny_set)
    original = bad[0].target
    bad[0].target = 1e300  # squared error overflows to inf
    try:
        with np.errstate(over="ignore"):
            with pytest.raises(NumericalError):
                train(bad, m, TrainConfig(epochs=1, batch_size=len(bad)), on_divergence=seen.append)
    finally:
        bad[0].target = original
    assert seen and seen[0].steps == 0
    assert all(np.all(np.isfinite(v)) for v in m.state().values())


def test_train_guards(tiny_set):
    with pytest.raises(ConfigurationError):
        train([], small_model(), TrainConfig())
    with pytest.raises(ConfigurationError):
        train(tiny_set, small_model(), TrainConfig(task="accuracy"))
    with pytest.raises(ConfigurationError):
        TrainConfig(warmup_fraction=0.0)


def test_validation_tracks_best_epoch(tiny_set):
    res = train(tiny_set[:8], small_model(), TrainConfig(epochs=3, batch_size=4), val=tiny_set[8:])
    assert res.best_epoch is not None and res.best_state is not None
    assert all(h.val_metric is not None for h in res.history)


def test_evaluate_report(tiny_set):
    rep = evaluate(small_model(), tiny_set)
    assert rep.task == "latency" and rep.n == len(tiny_set)
    assert math.isfinite(rep.mape) and 0 <= rep.acc_10 <= 100
    with pytest.raises(ConfigurationError):
        evaluate(small_model(), tiny_set, task="accuracy")
