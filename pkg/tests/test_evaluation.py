import math

import numpy as np
import pytest
import torch

from citpred.checkpoint import save_checkpoint
from citpred.core.config import RunConfig
from citpred.data.instances import split_dataset
from citpred.evaluation import (
    VARIANTS,
    ablation_frame,
    ablation_suite,
    compare_plan_rates,
    evaluate,
    horizon_frames,
    nll_horizons,
    report_frame,
    rmse_horizons,
)
from citpred.nn.decoder import PredictionSet
from citpred.nn.predictor import build_model

from conftest import make_instance, prediction_set, synthetic_corpus

LOG_2PI = math.log(2 * math.pi)


def test_horizon_frames():
    assert horizon_frames(25).tolist() == [4, 9, 14, 19, 24]
    assert horizon_frames(10).tolist() == [4, 9, 9, 9, 9]

# --- RMSE ---

def test_exact_prediction_has_zero_rmse():
    assert rmse_horizons(prediction_set(np.zeros((3, 6, 25, 2))), torch.zeros(3, 25, 2)) == [0.0] * 6


def test_constant_offset():
    futures = torch.zeros(2, 25, 2, dtype=torch.float64)
    futures[..., 1] = 1.0
    assert rmse_horizons(prediction_set(np.zeros((2, 6, 25, 2))), futures) == pytest.approx([1.0] * 6)


def test_rmse_matches_brute_force():
    rng = np.random.default_rng(0)
    mu = rng.normal(size=(7, 6, 25, 2)) * 3
    futures = rng.normal(size=(7, 25, 2)) * 3
    pred = prediction_set(mu, p_lat=(0.2, 0.5, 0.3), p_lon=(0.6, 0.4))
    best = 1 * 2 + 0
    expected = []
    for frame in (4, 9, 14, 19, 24):
        sq = [np.sum((mu[n, best, frame] - futures[n, frame]) ** 2) for n in range(7)]
        expected.append(math.sqrt(np.mean(sq)))
    expected.append(np.mean(expected))
    assert rmse_horizons(pred, torch.as_tensor(futures)) == pytest.approx(expected, abs=1e-12)


def test_metrics_accept_lists_of_batches():
    rng = np.random.default_rng(1)
    mu = rng.normal(size=(4, 6, 25, 2))
    futures = torch.as_tensor(rng.normal(size=(4, 25, 2)))
    whole = prediction_set(mu)
    parts = [prediction_set(mu[:1]), prediction_set(mu[1:])]
    assert rmse_horizons(parts, [futures[:1], futures[1:]]) == pytest.approx(rmse_horizons(whole, futures))
    assert nll_horizons(parts, [futures[:1], futures[1:]]) == pytest.approx(nll_horizons(whole, futures))


def test_empty_set_is_rejected():
    with pytest.raises(ValueError):
        rmse_horizons([], [])

# --- NLL ---

@pytest.mark.parametrize("mode", ["mixture", "best-maneuver"])
def test_nll_at_the_mean_with_unit_sigma(mode):
    nll = nll_horizons(prediction_set(np.zeros((2, 6, 25, 2))), torch.zeros(2, 25, 2), mode=mode)
    assert nll == pytest.approx([LOG_2PI] * 6, abs=1e-12)


def test_nll_decreases_when_sigma_shrinks_at_the_truth():
    wide = nll_horizons(prediction_set(np.zeros((1, 6, 25, 2)), sigma=1.0), torch.zeros(1, 25, 2))
    narrow = nll_horizons(prediction_set(np.zeros((1, 6, 25, 2)), sigma=0.1), torch.zeros(1, 25, 2))
    assert all(n < w for n, w in zip(narrow, wide))


def test_mixture_against_hand_computation():
    mu = np.zeros((1, 6, 5, 2))
    mu[0, 2, :] = [1.0, 0.0]
    pred = prediction_set(mu, p_lat=(0.3, 0.7, 0.0))
    futures = torch.zeros(1, 5, 2)
    mixture = -math.log(0.3 * math.exp(-LOG_2PI) + 0.7 * math.exp(-LOG_2PI - 0.5))
    assert nll_horizons(pred, futures, mode="mixture") == pytest.approx([mixture] * 6, abs=1e-12)
    assert nll_horizons(pred, futures, mode="best-maneuver") == pytest.approx([LOG_2PI + 0.5] * 6, abs=1e-12)


def test_unknown_nll_mode():
    with pytest.raises(ValueError):
        nll_horizons(prediction_set(np.zeros((1, 6, 5, 2))), torch.zeros(1, 5, 2), mode="median")

# --- Evaluating a model ---

def test_evaluate_is_deterministic(tiny_cfg, tiny_instances):
    model = build_model(tiny_cfg)
    first = evaluate(model, tiny_instances, tiny_cfg)
    second = evaluate(model, tiny_instances, tiny_cfg)
    assert first == second
    assert first.target_count == 6
    assert first.instance_count == 4
    assert first.horizons_s == [1.0] * 5
    assert first.conventions["plan_rate_hz"] == 5
    assert len(first.rmse) == len(first.nll) == 5


def test_evaluate_from_a_checkpoint_file(tmp_path, tiny_cfg, tiny_instances):
    model = build_model(tiny_cfg)
    path = save_checkpoint(tmp_path / "model.ckpt", model)
    assert evaluate(path, tiny_instances, tiny_cfg) == evaluate(model, tiny_instances, tiny_cfg)


def test_worker_count_does_not_change_metrics(tiny_cfg, tiny_instances):
    model = build_model(tiny_cfg)
    one = evaluate(model, tiny_instances, tiny_cfg.with_overrides(batch_size=1))
    many = evaluate(model, tiny_instances, tiny_cfg.with_overrides(batch_size=1, workers=4))
    assert many.rmse == pytest.approx(one.rmse, abs=1e-12)
    assert many.nll == pytest.approx(one.nll, abs=1e-12)


def test_coarse_plan_protocol(tiny_cfg):
    cfg = tiny_cfg.with_overrides(t_pred=10, plan_rate_hz=1)
    instances = [
        make_instance("1:0", target_positions=[(10.0, 0.0)], t_pred=10),
        make_instance("2:5", target_positions=[(-12.0, 3.0)], t_pred=10, target_speed=18.0),
    ]
    comparison = compare_plan_rates(build_model(cfg), instances, cfg)
    assert comparison.full_rate.conventions["plan_rate_hz"] == 5
    assert comparison.coarse.conventions["plan_rate_hz"] == 1
    assert comparison.coarse.horizons_s == [1.0, 2.0, 2.0, 2.0, 2.0]
    assert len(comparison.rmse_diff) == len(comparison.nll_diff) == 6
    assert comparison.rmse_diff[-1] == pytest.approx(comparison.coarse.rmse_avg - comparison.full_rate.rmse_avg)

# --- Ablations ---

def test_variant_table():
    assert list(VARIANTS) == ["Variant1", "Variant2", "Variant3", "Variant4", "Variant5", "full"]
    assert VARIANTS["Variant4"]["icd"] == "self"
    assert VARIANTS["full"] == dict(info_c=True, info_f=True, icd="cross", iie=True, fusion=True)


def test_single_variant_suite(tiny_cfg, tiny_instances):
    rows = ablation_suite(tiny_cfg.with_overrides(epochs=1), ["Variant1"], tiny_instances[:2], [], tiny_instances[2:])
    assert [r.method for r in rows] == ["Variant1"]
    assert rows[0].icd == "off" and not rows[0].info_c
    assert rows[0].report.target_count == 3
    table = ablation_frame(rows)
    assert table.loc["Variant1", "ICD"] == ""
    assert "/" in table.loc["Variant1", "avg"]


@pytest.mark.slow
def test_full_model_is_no_worse_than_the_baseline():
    cfg = RunConfig(seed=0, synth_scenes=16, epochs=40)
    train_set, val_set, test_set = split_dataset(synthetic_corpus(cfg), cfg.split)
    rows = {r.method: r for r in ablation_suite(cfg, ["Variant1", "full"], train_set, val_set, test_set)}
    assert rows["full"].report.target_count == rows["Variant1"].report.target_count > 0
    assert rows["full"].report.rmse_avg <= rows["Variant1"].report.rmse_avg


def test_unknown_variant(tiny_cfg, tiny_instances):
    with pytest.raises(ValueError):
        ablation_suite(tiny_cfg, ["Variant9"], tiny_instances, [], tiny_instances)


def test_report_frame_cells(tiny_cfg, tiny_instances):
    report = evaluate(build_model(tiny_cfg), tiny_instances, tiny_cfg)
    frame = report_frame({"full": report})
    assert frame.loc["full", "avg"] == f"{report.rmse_avg:.2f}/{report.nll_avg:.2f}"


def test_prediction_sets_concatenate_in_order():
    a, b = prediction_set(np.zeros((1, 6, 2, 2))), prediction_set(np.ones((2, 6, 2, 2)))
    merged = PredictionSet.concat([a, b])
    assert len(merged) == 3
    assert torch.equal(merged.trajectories.mu[1:], b.trajectories.mu)
