# tests/test_trainer.py
import numpy as np
import pandas as pd
import pytest

from core.molgraph import FEATURE_DIM, parse_smiles
from models.gcnn import Readout, build_model, default_layer_specs, loss, predict
from training.trainer import Adam, TrainConfig, train, write_loss_history


def _model(seed=0):
    return build_model(default_layer_specs(FEATURE_DIM, (16, 16), (16,)), readout=Readout.SUM, seed=seed)


def test_training_reduces_loss(small_dataset):
    result = train(_model(), small_dataset, TrainConfig(epochs=60, batch_size=4, learning_rate=0.01, seed=0))
    assert len(result.loss_history) == 60
    assert result.final_loss < 0.5 * result.loss_history[0]


def test_training_is_deterministic(small_dataset):
    config = TrainConfig(epochs=5, batch_size=4, seed=3)
    a = train(_model(), small_dataset, config)
    b = train(_model(), small_dataset, config)
    assert a.loss_history == b.loss_history
    for (_, x), (_, y) in zip(a.model.named_parameters(), b.model.named_parameters()):
        assert np.array_equal(x, y)


def test_input_model_is_left_unchanged(small_dataset):
    model = _model()
    before = [value.copy() for _, value in model.named_parameters()]
    train(model, small_dataset, TrainConfig(epochs=2, seed=0))
    for original, (_, value) in zip(before, model.named_parameters()):
        assert np.array_equal(original, value)


def test_frozen_layers_stay_bit_identical(small_dataset):
    model = _model()
    result = train(model, small_dataset, TrainConfig(epochs=5, frozen_layers={0, 1}, seed=0))
    for layer in (0, 1):
        for name, value in model.params[layer].items():
            assert np.array_equal(result.model.params[layer][name], value)
    assert not np.array_equal(result.model.params[2]['w'], model.params[2]['w'])


def test_config_validation(small_dataset):
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        train(_model(), small_dataset, TrainConfig(epochs=0))
    with pytest.raises(ValueError):
        train(_model(), small_dataset, TrainConfig(epochs=1, frozen_layers={9}))


def test_adam_first_step_moves_by_learning_rate():
    params = {'w': np.array([1.0, -2.0])}
    Adam(lr=0.1).step(params, {'w': np.array([3.0, -0.5])})
    # bias-corrected first step is lr * sign(g) up to eps
    assert np.allclose(params['w'], [0.9, -1.9], atol=1e-6)


def test_loss_history_csv(tmp_path):
    path = write_loss_history([3.0, 2.0, 1.5], tmp_path / 'log.csv')
    frame = pd.read_csv(path)
    assert frame.columns.tolist() == ['epoch', 'loss']
    assert frame.epoch.tolist() == [1, 2, 3]


def test_trained_model_predicts_training_targets(small_dataset):
    result = train(_model(1), small_dataset, TrainConfig(epochs=300, batch_size=8, learning_rate=0.01, seed=1))
    predictions = predict(result.model, small_dataset.graphs)
    assert np.corrcoef(predictions, small_dataset.targets)[0, 1] > 0.9


def test_five_molecules_are_fit_almost_exactly():
    mols = [parse_smiles(s) for s in ('CCO', 'c1ccccc1', 'CC(=O)O', 'CCN(CC)CC', 'c1ccsc1')]
    pairs = [(mol, mol.n_atoms / 10.0) for mol in mols]
    result = train(_model(2), pairs, TrainConfig(epochs=1500, batch_size=5, learning_rate=0.01, seed=0, log_every=0))
    assert loss(result.model, pairs) < 1e-3
