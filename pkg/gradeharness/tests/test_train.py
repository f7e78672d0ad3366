"""Training recipe: config validation, sampler weighting, schedule, determinism."""

import numpy as np
import pytest
import torch

from gradeharness.dataset import Sample
from gradeharness.errors import ConfigError, TrainingError
from gradeharness.models import build_model
from gradeharness.train import (TrainConfig, class_weights, make_sampler,
                                predict, train_one)


def _samples(n, dims=(6, 6, 3), seed=0, contrast=2.0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % 2
        data = rng.normal(0, 0.3, (2,) + dims).astype(np.float32)
        data[0, 1:-1, 1:-1, :] += contrast * (2 * label - 1)
        out.append(Sample(f"P{i:03d}", "III" if label else "II", label, data))
    return out


@pytest.mark.parametrize("kwargs,tag", [
    ({"learning_rate": 0.0}, "config.learning-rate"),
    ({"learning_rate": -1e-3}, "config.learning-rate"),
    ({"epochs": 0}, "config.epochs"),
    ({"batch_size": 0}, "config.batch-size"),
    ({"freeze_layers": "head"}, "config.freeze-layers"),
    ({"optimizer": "sgd"}, "config.optimizer"),
    ({"loss": "hinge"}, "config.loss"),
    ({"scheduler": "step"}, "config.scheduler"),
    ({"sampler": "uniform"}, "config.sampler"),
])
def test_config_validation(kwargs, tag):
    with pytest.raises(ConfigError) as exc:
        TrainConfig(**kwargs)
    assert exc.value.tag == tag


def test_config_defaults():
    cfg = TrainConfig()
    assert cfg.learning_rate == 0.001
    assert cfg.freeze_layers == "none"
    assert cfg.as_dict()["optimizer"] == "adamw"


def test_class_weights_equalize_class_mass():
    labels = np.array([0] * 109 + [1] * 200)
    w = class_weights(labels)
    assert np.allclose(w[labels == 0], 1 / 109)
    assert np.allclose(w[labels == 1], 1 / 200)
    assert w[labels == 0].sum() == pytest.approx(w[labels == 1].sum())


def test_class_weights_single_class_error():
    with pytest.raises(TrainingError) as exc:
        class_weights(np.array([1, 1, 1]))
    assert exc.value.tag == "train.single-class"


def test_sampler_roughly_balances_draws():
    labels = np.array([0] * 20 + [1] * 180)
    sampler = make_sampler(labels, torch.Generator().manual_seed(1))
    draws = []
    while len(draws) < 2000:
        draws.extend(labels[i] for i in sampler)
    frac1 = np.mean(draws[:2000])
    assert 0.4 < frac1 < 0.6  # nowhere near the 0.9 class share


def test_cosine_schedule_endpoints():
    model = build_model(2, "toy")
    res = train_one(model, _samples(4), TrainConfig(epochs=50, seed=2))
    assert res.lrs[0] == 0.001
    assert res.lrs[-1] <= 1e-5
    assert res.epochs_run == 50
    assert len(res.losses) == 50


def test_single_class_split_rejected():
    model = build_model(2, "toy")
    split = [s for s in _samples(6) if s.label == 1]
    with pytest.raises(TrainingError) as exc:
        train_one(model, split, TrainConfig(epochs=1))
    assert exc.value.tag == "train.single-class"


def test_training_is_deterministic_given_seed():
    runs = []
    for _ in range(2):
        torch.manual_seed(5)
        model = build_model(2, "toy")
        res = train_one(model, _samples(6), TrainConfig(epochs=3, seed=5))
        runs.append((res.losses, model.state_dict()))
    assert runs[0][0] == runs[1][0]
    for key in runs[0][1]:
        assert torch.equal(runs[0][1][key], runs[1][1][key])


def test_different_seed_changes_draws():
    losses = []
    for seed in (1, 2):
        torch.manual_seed(seed)
        model = build_model(2, "toy")
        losses.append(train_one(model, _samples(6),
                                TrainConfig(epochs=3, seed=seed)).losses)
    assert losses[0] != losses[1]


def test_loss_decreases_on_separable_data():
    torch.manual_seed(3)
    model = build_model(2, "toy")
    res = train_one(model, _samples(8), TrainConfig(epochs=10, seed=3))
    assert res.losses[-1] < res.losses[0]


def test_early_stop_truncates_epochs():
    torch.manual_seed(4)
    model = build_model(2, "toy")
    res = train_one(model, _samples(8), TrainConfig(epochs=100, seed=4),
                    stop_at_train_accuracy=1.0)
    assert res.epochs_run < 100
    predicted, _ = predict(model, _samples(8))
    assert (predicted == np.array([s.label for s in _samples(8)])).all()


def test_predict_scores_sum_to_one():
    torch.manual_seed(6)
    model = build_model(2, "toy")
    samples = _samples(5)
    _, scores = predict(model, samples)
    assert scores.shape == (5, 2)
    assert np.allclose(scores.sum(axis=1), 1.0, atol=1e-6)
