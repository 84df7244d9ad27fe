import math

import numpy as np
import pytest
import torch
from torch import nn

from citpred.checkpoint import load_checkpoint
from citpred.core.config import RunConfig
from citpred.core.errors import TrainingDivergedError
from citpred.evaluation import evaluate
from citpred.nn.batching import SceneBatch
from citpred.nn.predictor import build_model
from citpred.training import batch_loss, grad_check, loss, target_losses, train

from conftest import make_instance, prediction_set, synthetic_corpus


def tiny_batch(instances, cfg):
    return SceneBatch.from_instances(instances, plan_rate=5, t_pred=cfg.t_pred, dtype=torch.float64)

# --- Objective ---

def test_uniform_maneuvers_and_exact_means():
    pred = prediction_set(np.zeros((2, 6, 4, 2)), p_lat=(1 / 3, 1 / 3, 1 / 3), p_lon=(0.5, 0.5))
    futures = torch.zeros(2, 4, 2, dtype=torch.float64)
    per_target = target_losses(pred, futures, torch.tensor([0, 5]))
    expected = 4 * math.log(2 * math.pi) + math.log(6)
    torch.testing.assert_close(per_target, torch.full((2,), expected, dtype=torch.float64))
    assert float(loss(pred, futures, torch.tensor([0, 5]))) == pytest.approx(2 * expected)


def test_loss_uses_the_true_maneuver_only():
    mu = np.zeros((1, 6, 1, 2))
    mu[0, 3, 0] = [1.0, 0.0]  # left/brake misses by one sigma
    pred = prediction_set(mu, p_lat=(0.5, 0.5, 0.0), p_lon=(0.5, 0.5))
    futures = torch.zeros(1, 1, 2, dtype=torch.float64)
    hit = float(target_losses(pred, futures, torch.tensor([0]))[0])
    miss = float(target_losses(pred, futures, torch.tensor([3]))[0])
    assert hit == pytest.approx(math.log(2 * math.pi) + math.log(4))
    assert miss == pytest.approx(hit + 0.5)


def test_one_maneuver_per_target_is_required():
    pred = prediction_set(np.zeros((2, 6, 4, 2)))
    with pytest.raises(ValueError):
        target_losses(pred, torch.zeros(2, 4, 2, dtype=torch.float64), torch.tensor([0]))

# --- Training loop ---

def test_training_is_deterministic(tiny_cfg, tiny_instances):
    a = train(tiny_instances[:3], tiny_instances[3:], tiny_cfg)
    b = train(tiny_instances[:3], tiny_instances[3:], tiny_cfg)
    for name, tensor in a.model.state_dict().items():
        assert torch.equal(b.model.state_dict()[name], tensor), name
    assert a.meta.train_losses == b.meta.train_losses
    assert len(a.meta.train_losses) == tiny_cfg.epochs


def test_zero_epochs_keep_the_initialisation(tiny_cfg, tiny_instances):
    result = train(tiny_instances, [], tiny_cfg.with_overrides(epochs=0))
    fresh = build_model(tiny_cfg)
    for name, tensor in fresh.state_dict().items():
        assert torch.equal(result.model.state_dict()[name], tensor), name
    assert result.meta.epoch == 0
    assert result.meta.train_losses == []
    with torch.no_grad():
        untrained = float(batch_loss(fresh, tiny_batch(tiny_instances, tiny_cfg)))
    assert result.meta.initial_train_loss == pytest.approx(untrained)


def test_best_validation_epoch_is_kept(tiny_cfg, tiny_instances):
    result = train(tiny_instances[:3], tiny_instances[3:], tiny_cfg.with_overrides(epochs=3))
    assert len(result.meta.val_losses) == 3
    candidates = [result.meta.val_losses[e - 1] for e in range(1, 4)]
    if result.meta.epoch:
        assert result.meta.val_loss == min(candidates)
    val = tiny_batch(tiny_instances[3:], tiny_cfg)
    with torch.no_grad():
        assert float(batch_loss(result.model, val)) == pytest.approx(result.meta.val_loss)


def test_checkpoint_is_written(tmp_path, tiny_cfg, tiny_instances):
    result = train(tiny_instances, [], tiny_cfg, checkpoint_path=tmp_path / "model.ckpt")
    assert result.checkpoint.exists()
    _, meta = load_checkpoint(result.checkpoint, tiny_cfg)
    assert meta.train_losses == result.meta.train_losses


def test_empty_training_set(tiny_cfg):
    with pytest.raises(ValueError):
        train([make_instance("1:0", target_positions=[])], [], tiny_cfg)


def test_non_finite_loss_stops_training(tiny_cfg, tiny_instances):
    model = build_model(tiny_cfg)
    with torch.no_grad():
        model.decoder.output.bias.fill_(float("nan"))
    with pytest.raises(TrainingDivergedError):
        train(tiny_instances, [], tiny_cfg, model=model)


@pytest.mark.slow
def test_loss_falls_on_a_tiny_set(tiny_cfg, tiny_instances):
    result = train(tiny_instances, [], tiny_cfg.with_overrides(epochs=150))
    assert result.meta.train_losses[-1] < result.meta.train_losses[0] - 5.0


@pytest.mark.slow
def test_overfits_a_small_synthetic_corpus():
    cfg = RunConfig(seed=0, synth_scenes=4, epochs=200, plan_rate_hz=5)
    instances = synthetic_corpus(cfg)[:64]
    assert len(instances) == 64
    result = train(instances, [], cfg)
    assert result.meta.initial_train_loss > 0
    assert result.meta.train_losses[-1] <= 0.1 * result.meta.initial_train_loss
    report = evaluate(result.model, instances, cfg, plan_rate=5)
    assert report.horizons_s[-1] == 5.0
    assert report.rmse[-1] < 0.5

# --- Gradient verification ---

def test_analytic_gradients_match_finite_differences(tiny_cfg, tiny_instances):
    model = build_model(tiny_cfg)
    report = grad_check(model, tiny_batch(tiny_instances, tiny_cfg))
    assert report.max_rel_error <= 1e-4, report.worst()
    assert set(report.per_parameter) == {name for name, _ in model.named_parameters()}


def test_quadratic_control_is_exact():
    layer = nn.Linear(3, 2)
    x = torch.randn(5, 3, dtype=torch.float64)
    report = grad_check(layer, closure=lambda m: (m(x) ** 2).sum())
    assert report.max_rel_error <= 1e-8


def test_corrupted_gradients_are_detected(tiny_cfg, tiny_instances):
    report = grad_check(build_model(tiny_cfg), tiny_batch(tiny_instances, tiny_cfg), grad_transform=lambda g: g * 2)
    assert report.max_rel_error > 1e-2


def test_grad_check_needs_something_to_differentiate():
    with pytest.raises(ValueError):
        grad_check(nn.Linear(2, 2))
