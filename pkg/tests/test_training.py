from adapters.dataset_adapter import DatasetAdapter
from dataclasses import replace
from interfaces.errors import ConfigError, TrainingError
import jsonlines
import numpy as np
from models import training
from models.manifest import CHECKPOINT_FILE, MANIFEST_FILE, load_model, model_to_bytes
from models.training import TRACE_FILE, TrainConfig, train, train_confide0
import pytest


def test_training_writes_model_directory(trained_constant, constant_dataset):
    for filename in (CHECKPOINT_FILE, MANIFEST_FILE, TRACE_FILE):
        assert (trained_constant / filename).exists()
    model, manifest = load_model(trained_constant)
    assert manifest.family_id == "constant"
    assert manifest.n_ctx == model.n_ctx == 4
    assert manifest.dataset_hash == DatasetAdapter(constant_dataset).provenance_hash
    with jsonlines.open(trained_constant / TRACE_FILE) as reader:
        records = list(reader)
    assert 1 <= len(records) <= 2
    assert [r["epoch"] for r in records] == list(range(len(records)))
    assert set(records[0]) >= {"loss", "loss_ae", "loss_coef", "val_loss", "best"}


def test_training_is_reproducible(constant_dataset, tiny_train_config, tmp_path):
    ds = DatasetAdapter(constant_dataset)
    first = train(ds, tiny_train_config, out_dir=tmp_path / "a", progress=False)
    second = train(ds, tiny_train_config, out_dir=tmp_path / "b", progress=False)
    assert model_to_bytes(first.model) == model_to_bytes(second.model)
    assert (tmp_path / "a" / CHECKPOINT_FILE).read_bytes() == (tmp_path / "b" / CHECKPOINT_FILE).read_bytes()
    assert [r.to_dict() for r in first.trace] == [r.to_dict() for r in second.trace]
    with jsonlines.open(tmp_path / "a" / TRACE_FILE) as reader:
        assert len(list(reader)) == len(first.trace)


def test_training_without_output_directory(constant_dataset, tiny_train_config):
    result = train(DatasetAdapter(constant_dataset), replace(tiny_train_config, epochs=1), progress=False)
    assert len(result.trace) == 1
    assert result.manifest.train_config["epochs"] == 1


def test_prefix_policy_and_signal_cap(constant_dataset, tiny_train_config):
    config = replace(tiny_train_config, epochs=1, patch_policy="prefix-only", max_signals=5)
    result = train(DatasetAdapter(constant_dataset), config, progress=False)
    assert result.manifest.train_config["max_signals"] == 5


def test_confide0_training(constant_dataset, tiny_train_config):
    result = train_confide0(DatasetAdapter(constant_dataset), replace(tiny_train_config, epochs=1), progress=False)
    assert result.model.kind == "confide0"
    assert result.manifest.kind == "confide0"


def test_non_finite_batches_abort_training(constant_dataset, tiny_train_config, monkeypatch):
    monkeypatch.setattr(training, "_batch_losses", lambda model, fields, alpha, initial: None)
    with pytest.raises(TrainingError):
        train(DatasetAdapter(constant_dataset), tiny_train_config, progress=False)


def test_no_ae_forces_zero_alpha():
    assert TrainConfig(variant="no-ae", alpha=0.7).alpha == 0.0


@pytest.mark.parametrize(
    "settings",
    [
        {"alpha": 1.5},
        {"alpha": -0.1},
        {"rho": 0.0},
        {"variant": "ae"},
        {"patch_policy": "suffix"},
        {"model_kind": "sindy"},
        {"epochs": 0},
        {"patience": 0},
        {"batch_size": 0},
    ],
)
def test_invalid_train_config(settings):
    with pytest.raises(ConfigError):
        TrainConfig(**settings)


def test_config_from_dict(tiny_train_config):
    restored = TrainConfig.from_dict(tiny_train_config.to_dict())
    assert restored == tiny_train_config
    assert restored.config_hash() == tiny_train_config.config_hash()
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 0.1})


def test_without_patience_every_epoch_runs(constant_dataset, tiny_train_config, monkeypatch):
    monkeypatch.setattr(training, "evaluate_loss", lambda model, signals, alpha, batch_size: 1.0)
    config = replace(tiny_train_config, epochs=3, patience=None)
    result = train(DatasetAdapter(constant_dataset), config, progress=False)
    assert [record.epoch for record in result.trace] == [0, 1, 2]
    assert result.best_epoch == 0


def test_patience_stops_after_stale_epochs(constant_dataset, tiny_train_config, monkeypatch):
    monkeypatch.setattr(training, "evaluate_loss", lambda model, signals, alpha, batch_size: 1.0)
    config = replace(tiny_train_config, epochs=10, patience=2)
    result = train(DatasetAdapter(constant_dataset), config, progress=False)
    assert len(result.trace) == 3


def test_training_patches_carry_their_signal_start(rng):
    signals = [rng.standard_normal((1, 21, 9)) for _ in range(3)]
    fields, initial = training._patch_batch(signals, [2, 0], [7, 11], 4)
    assert fields.shape == (2, 1, 4, 9)
    np.testing.assert_array_equal(fields[0], signals[2][:, 7:11])
    np.testing.assert_array_equal(initial[0], signals[2][:, 0])
    np.testing.assert_array_equal(initial[1], signals[0][:, 0])
    assert not np.array_equal(initial[0], fields[0][:, 0])
