import numpy as np
import pytest

from grupfg import autodiff as ad
from grupfg.baselines import make_variant
from grupfg.data import FactorPanel, SplitSpec, gen_synthetic, split
from grupfg.errors import CheckpointError, ContractError, DivergenceError, EmptyInputError, SpecError
from grupfg.train import (
    SGD,
    Adam,
    TrainConfig,
    clip_grad_norm,
    day_loss,
    evaluate,
    total_loss,
    train,
)


@pytest.fixture(scope="module")
def splits():
    panel = gen_synthetic(8, 30, 2, 0.7, 0.3, seed=11)
    return split(panel, SplitSpec.from_counts(panel.dates, 16, 7, 7))


def small_config(**kw):
    base = dict(hidden_size=4, epochs=3, learning_rate=1e-2, early_stop_patience=5, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_day_loss_examples():
    y = np.array([0.1, -0.3, 0.2])
    assert day_loss(ad.constant(y), y).item() == 0.0
    assert day_loss(ad.constant([1.0, 1.0]), [0.0, 2.0]).item() == 1.0
    rng = np.random.default_rng(0)
    p, g = rng.normal(size=6), rng.normal(size=6)
    brute = sum((a - b) ** 2 for a, b in zip(p, g)) / 6
    assert day_loss(ad.constant(p), g).item() == pytest.approx(brute, abs=1e-12)
    with pytest.raises(ContractError):
        day_loss(ad.constant([1.0, 2.0]), [1.0])


def test_config_validation():
    with pytest.raises(SpecError):
        TrainConfig(early_stop_patience=0)
    with pytest.raises(SpecError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(SpecError):
        TrainConfig(learning_rate=-1.0)


def test_patience_one_with_zero_learning_rate_stops_after_two_epochs(splits):
    tr, va, _ = splits
    _, log = train(tr, va, small_config(epochs=10, learning_rate=0.0, early_stop_patience=1))
    assert len(log.epochs) == 2
    assert log.best_epoch == 1
    assert log.epochs[0].valid_ic == log.epochs[1].valid_ic
    assert "no valid IC improvement" in log.stopping_reason


def test_epoch_loss_equals_brute_force_double_sum(splits):
    tr, va, _ = splits
    cfg = small_config(epochs=1, learning_rate=0.0)
    variant, log = train(tr, va, cfg)
    brute = 0.0
    for batch in tr.batches():
        preds = variant.predict(batch)
        brute += sum((p - g) ** 2 for p, g in zip(preds, batch.labels)) / batch.size
    assert log.epochs[0].train_loss * len(tr) == pytest.approx(brute, abs=1e-10)
    assert total_loss(variant, tr.batches()) == pytest.approx(brute, abs=1e-10)


def test_training_is_deterministic(splits):
    tr, va, _ = splits
    a, log_a = train(tr, va, small_config())
    b, log_b = train(tr, va, small_config())
    assert log_a.deterministic_view() == log_b.deterministic_view()
    for k in a.params:
        assert a.params[k].values.tobytes() == b.params[k].values.tobytes()
    _, log_c = train(tr, va, small_config(seed=4))
    assert log_c.deterministic_view() != log_a.deterministic_view()


def test_best_parameters_are_restored(splits):
    tr, va, _ = splits
    variant, log = train(tr, va, small_config(epochs=6, learning_rate=5e-2, early_stop_patience=6))
    ics = [e.valid_ic for e in log.epochs]
    assert log.best_valid_ic == max(ics)
    assert log.epochs[log.best_epoch - 1].valid_ic == log.best_valid_ic
    from grupfg.train import mean_ic

    assert mean_ic(variant, va.batches()) == pytest.approx(log.best_valid_ic, abs=1e-12)


def test_train_log_csv(splits):
    tr, va, _ = splits
    _, log = train(tr, va, small_config(epochs=2))
    lines = log.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,valid_ic,seconds"
    assert len(lines) == 3 and lines[1].startswith("1,")


def test_divergence_names_epoch_and_day(splits):
    tr, va, _ = splits
    variant = make_variant("gru-pfg", 4, 0)
    variant.params["head.w"].values = np.full(4, 1e200)
    variant.params["head.b"].values = np.array(1e200)
    with pytest.raises(DivergenceError, match="epoch 1, day"):
        train(tr, va, small_config(), variant=variant)


def test_empty_splits_rejected(splits):
    tr, _, _ = splits
    with pytest.raises(EmptyInputError):
        train(tr, FactorPanel([]), small_config())


def test_optimiser_step_changes_parameters_iff_gradient_nonzero():
    for opt in (SGD(0.1), Adam(0.1)):
        moving = ad.parameter([1.0, 2.0])
        still = ad.parameter([3.0, 4.0])
        untouched = ad.parameter([5.0])
        moving.grad = np.array([0.5, 0.0])
        still.grad = np.zeros(2)
        params = {"a": moving, "b": still, "c": untouched}
        opt.step(params)
        assert moving.values[0] != 1.0 and moving.values[1] == 2.0
        assert still.values.tolist() == [3.0, 4.0]
        assert untouched.values.tolist() == [5.0]


def test_adam_keeps_scalar_parameters_as_arrays():
    p = ad.parameter(0.1)
    p.grad = np.array(1.0)
    Adam(0.01).step({"p": p})
    assert isinstance(p.values, np.ndarray) and p.values.shape == ()
    assert p.values < 0.1


def test_clip_grad_norm():
    a, b = ad.parameter([0.0, 0.0]), ad.parameter(0.0)
    a.grad, b.grad = np.array([3.0, 0.0]), np.array(4.0)
    assert clip_grad_norm({"a": a, "b": b}, 1.0) == 5.0
    np.testing.assert_allclose(a.grad, [0.6, 0.0])
    np.testing.assert_allclose(b.grad, 0.8)
    a.grad = np.array([0.3, 0.4])
    b.grad = None
    clip_grad_norm({"a": a, "b": b}, 1.0)
    assert a.grad.tolist() == [0.3, 0.4]


def test_evaluate(splits, tmp_path):
    tr, va, te = splits
    variant, _ = train(tr, va, small_config(epochs=1))
    r1 = evaluate(variant, te)
    r2 = evaluate(variant, te)
    assert r1.to_csv() == r2.to_csv() and r1.num_days == len(te)
    with pytest.raises(EmptyInputError):
        evaluate(variant, FactorPanel([]))
    with pytest.raises(CheckpointError):
        evaluate(variant, te, hidden_size=8)
