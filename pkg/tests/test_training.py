import os

import numpy as np
import pytest

from dscca.cca.deep import DsccaModel, estimate_covariances
from dscca.cca.linear import fit_linear_cca
from dscca.cca.ranking import RankingModel
from dscca.config import with_overrides
from dscca.config.constants import ABLATIONS
from dscca.data import make_splits, read_idx_images, split_halves, synth_correlated
from dscca.evaluation import recall_both_directions, total_correlation_protocol
from dscca.nn.dsl import build_dsl_network
from dscca.persistence.checkpoint import checkpoint_bytes
from dscca.telemetry import EpochEvent, MetricTracker
from dscca.training import train_ds_ranking, train_dsdcca
from dscca.training.common import (
    build_networks,
    check_batching,
    iterate_batches,
    mlp_parameter_count,
    optimizer_step,
    scaler_parameter_count,
    widen_hidden,
)
from dscca.nn.core import RmspropState
from dscca.utils.exception_handler import ShapeError, TrainingAbortedError

# read at import, the autouse environment fixture clears DSCCA_* variables
MNIST_IMAGES = os.getenv("DSCCA_MNIST_IMAGES")


class TestBatching:
    def test_batches_cover_every_sample_once(self, rng):
        batches = list(iterate_batches(10, 3, rng))
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))
        assert [b.size for b in batches] == [4, 3, 3]

    def test_small_split_is_one_batch(self, rng):
        assert [b.size for b in iterate_batches(5, 8, rng)] == [5]

    def test_check_batching(self):
        check_batching(100, 20, 10)
        with pytest.raises(ShapeError):
            check_batching(100, 10, 10)
        with pytest.raises(ShapeError):
            check_batching(8, 20, 10)


class TestWidening:
    @pytest.mark.parametrize("which", ["wide2", "wide12"])
    @pytest.mark.parametrize("hidden", [[64, 64], [800, 800], [40]])
    def test_matches_scaler_parameter_count(self, which, hidden):
        target = scaler_parameter_count(30, hidden, 10, [256], "z_only")
        sizes, added = widen_hidden(30, hidden, 10, target, which)
        assert abs(added - target) <= 0.05 * target
        assert added == mlp_parameter_count([30, *sizes, 10]) - mlp_parameter_count([30, *hidden, 10])
        if which == "wide2":
            assert sizes[:-1] == hidden[:-1]

    def test_scaler_count_matches_built_network(self):
        net = build_dsl_network(7, [6], 3, "dynamic", scaler_hidden=[5, 4], conditioning="z_and_x")
        assert scaler_parameter_count(7, [6], 3, [5, 4], "z_and_x") == net.scaler_parameter_count()

    def test_wide_ablation_builds_conventional_heads(self, tiny_config):
        config = with_overrides(tiny_config, {"training.ablation": "wide2", "architecture.hidden1": [8, 8]})
        net1, net2, resolved = build_networks(config, (6, 5))
        assert resolved.widen == "wide2"
        assert net1.head.variant == "conventional"
        sizes = net1.backbone.sizes
        assert sizes[1] == 8 and sizes[2] > 8
        assert net2.backbone.sizes[1] > 8


class TestDsdcca:
    def test_smoke(self, tiny_config, tiny_data):
        tracker = MetricTracker()
        model = train_dsdcca(tiny_config, tiny_data, tracker)
        assert isinstance(model, DsccaModel)
        assert [h["epoch"] for h in model.history] == [0, 1, 2, 3]
        assert [h["phase"] for h in model.history] == ["warmup", "warmup", "dynamic", "dynamic"]
        assert model.best_epoch <= 3
        assert model.best_val_loss == min(h["val_loss"] for h in model.history[1:])
        assert model.best_epoch >= 1
        assert len(tracker.epochs()) == 3
        assert model.d == 2

        X1, X2 = tiny_data.views("train")
        F1 = model.features(X1, 1)
        cov, _, _ = estimate_covariances(F1, model.features(X2, 2), 1e-3, 1e-3)
        np.testing.assert_allclose(model.A1.T @ cov.sigma11 @ model.A1, np.eye(2), atol=1e-8)
        P1 = model.project(X1, 1)
        np.testing.assert_allclose(model.project(X1[:, 5:6], 1)[:, 0], P1[:, 5], atol=1e-10)

    def test_deterministic(self, tiny_config, tiny_data):
        assert checkpoint_bytes(train_dsdcca(tiny_config, tiny_data)) == checkpoint_bytes(
            train_dsdcca(tiny_config, tiny_data)
        )

    def test_warmup_matches_plain_dcca(self, tiny_config, tiny_data):
        plain = train_dsdcca(with_overrides(tiny_config, {"training.mode": "dcca", "training.epochs": 2}), tiny_data)
        scaled = train_dsdcca(
            with_overrides(tiny_config, {"training.epochs": 3, "training.warmup_epochs": 2}), tiny_data
        )
        for a, b in zip(plain.history, scaled.history[:3]):
            assert (a["epoch"], a["phase"], a["val_loss"]) == (b["epoch"], b["phase"], b["val_loss"])
            if a["epoch"]:
                assert a["train_loss"] == b["train_loss"]
        assert scaled.history[3]["phase"] == "dynamic"

    def test_no_warmup_starts_dynamic(self, tiny_config, tiny_data):
        model = train_dsdcca(with_overrides(tiny_config, {"training.ablation": "no_warmup"}), tiny_data)
        assert model.history[1]["phase"] == "dynamic"

    @pytest.mark.parametrize("ablation", ABLATIONS)
    def test_every_ablation_trains(self, ablation, tiny_config, tiny_data):
        model = train_dsdcca(with_overrides(tiny_config, {"training.ablation": ablation}), tiny_data)
        assert len(model.history) == 4
        assert np.all(np.isfinite(model.project(tiny_data.subset("test").view1, 1)))

    def test_without_validation_split(self, tiny_config, tiny_data):
        data = make_splits(tiny_data, [200, 0, 50])
        model = train_dsdcca(tiny_config, data)
        assert model.best_val_loss == min(h["train_loss"] for h in model.history[1:])

    def test_batch_not_larger_than_d(self, tiny_config, tiny_data):
        with pytest.raises(ShapeError):
            train_dsdcca(with_overrides(tiny_config, {"training.batch_size": 2}), tiny_data)


class TestRanking:
    def test_smoke(self, tiny_config, tiny_data):
        config = with_overrides(tiny_config, {"training.mode": "ds_ranking"})
        events = []
        model = train_ds_ranking(config, tiny_data, MetricTracker(listeners=[events.append]))
        assert isinstance(model, RankingModel)
        assert len(model.history) == 3
        assert set(model.best_epoch_per_k) == {1, 5}
        assert 0.0 <= model.best_val_recall <= 1.0
        assert model.cca_state.initialized
        assert sum(isinstance(e, EpochEvent) for e in events) == 3
        reports = recall_both_directions(model, tiny_data.subset("test"), [1, 5])
        assert all(0.0 <= r.recall(1) <= r.recall(5) <= 1.0 for r in reports)

    def test_plain_ranking_keeps_conventional_heads(self, tiny_config, tiny_data):
        model = train_ds_ranking(with_overrides(tiny_config, {"training.mode": "ranking"}), tiny_data)
        assert model.net1.head.variant == "conventional"
        assert {h["phase"] for h in model.history} == {"warmup"}


def test_non_finite_gradient_aborts(tiny_config):
    net1, net2, _ = build_networks(tiny_config, (6, 5))
    grads1 = {name: np.zeros_like(p) for name, p in net1.trainable_parameters().items()}
    grads2 = {name: np.zeros_like(p) for name, p in net2.trainable_parameters().items()}
    grads1["head.base.W"][0, 0] = np.nan
    with pytest.raises(TrainingAbortedError) as info:
        optimizer_step(net1, net2, grads1, grads2, RmspropState(), epoch=3, batch=2)
    assert (info.value.epoch, info.value.batch) == (3, 2)
    assert "view1.head.base.W" in str(info.value)



@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_dcca_beats_linear_cca_on_folded_views(tiny_config, seed):
    config = with_overrides(
        tiny_config,
        {
            "training.mode": "dcca",
            "training.seed": seed,
            "dataset.n_samples": 8000,
            "dataset.latent_dim": 4,
            "dataset.dims": [8, 8],
            "dataset.target_correlations": [0.9] * 4,
            "dataset.nonlinearity": "tanh_mix",
            "architecture.hidden1": [64, 64],
            "architecture.hidden2": [64, 64],
            "architecture.output_dim": 4,
            "eval.d": 4,
            "training.epochs": 40,
            "training.batch_size": 400,
        },
    )
    ds = config.dataset
    data = make_splits(
        synth_correlated(ds.n_samples, 4, (8, 8), ds.target_correlations, ds.nonlinearity, seed=seed), [0.7, 0.15, 0.15]
    )
    train, val, test = (data.subset(name) for name in ("train", "val", "test"))
    linear = fit_linear_cca(train.view1, train.view2, 1e-6, 1e-6, 4)
    linear_total = total_correlation_protocol(linear, train, test, 4, config.eval.reg_grid, val=val).total

    model = train_dsdcca(config, data)
    assert model.best_val_loss < model.history[0]["val_loss"]
    deep_total = total_correlation_protocol(model, train, test, 4, config.eval.reg_grid, val=val).total
    assert deep_total >= linear_total + 0.2


@pytest.mark.slow
def test_ranking_separates_perfectly_paired_views(tiny_config):
    config = with_overrides(
        tiny_config,
        {
            "training.mode": "ds_ranking",
            "dataset.n_samples": 200,
            "dataset.latent_dim": 5,
            "dataset.dims": [5, 5],
            "dataset.target_correlations": [1.0] * 5,
            "architecture.hidden1": [32],
            "architecture.hidden2": [32],
            "architecture.output_dim": 8,
            "eval.d": 5,
            "eval.k_values": [1],
            "training.epochs": 200,
            "training.warmup_epochs": 100,
            "training.batch_size": 40,
        },
    )
    ds = config.dataset
    data = make_splits(synth_correlated(ds.n_samples, 5, (5, 5), ds.target_correlations, seed=2), [0.7, 0.15, 0.15])
    model = train_ds_ranking(config, data)
    reports = recall_both_directions(model, data.subset("val"), [1])
    assert [r.direction for r in reports] == ["1to2", "2to1"]
    assert all(r.recall(1) >= 0.95 for r in reports)


@pytest.mark.slow
@pytest.mark.skipif(not MNIST_IMAGES, reason="DSCCA_MNIST_IMAGES points at no IDX image file")
def test_dynamic_scaling_keeps_up_with_dcca_on_mnist_halves(tiny_config):
    images = read_idx_images(MNIST_IMAGES, max_samples=7000)
    data = make_splits(split_halves(images, 28, 28), [5000, 1000, 1000])
    train, val, test = (data.subset(name) for name in ("train", "val", "test"))
    shared = {
        "architecture.hidden1": [128, 128],
        "architecture.hidden2": [128, 128],
        "architecture.output_dim": 10,
        "architecture.scaler_hidden": [256],
        "eval.d": 10,
        "training.epochs": 60,
        "training.warmup_epochs": 30,
        "training.batch_size": 500,
    }
    totals = {"dcca": [], "dsdcca": []}
    for seed in range(3):
        for mode, runs in totals.items():
            config = with_overrides(tiny_config, {**shared, "training.mode": mode, "training.seed": seed})
            model = train_dsdcca(config, data)
            runs.append(total_correlation_protocol(model, train, test, 10, config.eval.reg_grid, val=val).total)
    assert np.mean(totals["dsdcca"]) >= np.mean(totals["dcca"])
