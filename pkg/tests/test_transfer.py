# tests/test_transfer.py
import numpy as np
import pytest

from core.datasets import Task
from core.molgraph import FEATURE_DIM, parse_smiles
from models.gcnn import Activation, LayerKind, LayerSpec, Readout, build_model, default_layer_specs, predict
from models.weight_archive import export_weights, load_archive, save_archive
from modules.sampling import binarize_endpoint
from training.trainer import TrainConfig
from training.transfer import (PlanError, ShapeIncompatible, TransferMode, TransferPlan, default_plan,
                               import_weights, resolve_copied_layers, transfer_train)

from tests.conftest import SMALL_SMILES

SPECS = default_layer_specs(FEATURE_DIM, (8, 8), (8,), Activation.RELU)


def _archive(seed=5, task=Task.REGRESSION):
    return export_weights(build_model(SPECS, task=task, readout=Readout.SUM, seed=seed))


def test_resolve_selectors():
    assert resolve_copied_layers('graph_conv', SPECS) == {0, 1}
    assert resolve_copied_layers('all_but_head', SPECS) == {0, 1, 2}
    assert resolve_copied_layers('all', SPECS) == {0, 1, 2, 3}
    assert resolve_copied_layers('0, 2', SPECS) == {0, 2}
    assert resolve_copied_layers([1], SPECS) == {1}
    with pytest.raises(PlanError):
        resolve_copied_layers('everything', SPECS)
    with pytest.raises(PlanError):
        TransferPlan(copied_layers=frozenset())


def test_import_copies_and_freezes_planned_layers():
    archive = _archive()
    model = import_weights(archive, SPECS, default_plan(SPECS), seed=99)
    for index in (0, 1):
        for name, value in archive.layers[index].arrays.items():
            assert np.array_equal(model.params[index][name], value)
    assert not np.array_equal(model.params[2]['w'], archive.layers[2].arrays['w'])
    assert model.frozen_layers == {0, 1}


def test_fine_tuning_freezes_nothing():
    model = import_weights(_archive(), SPECS, default_plan(SPECS, TransferMode.FINE_TUNING), seed=1)
    assert model.frozen_layers == frozenset()


def test_head_is_reinitialized_when_tasks_differ():
    archive = _archive()
    plan = TransferPlan(copied_layers=resolve_copied_layers('all', SPECS), reinit_head=False)
    same_task = import_weights(archive, SPECS, plan, seed=1)
    assert np.array_equal(same_task.params[3]['w'], archive.layers[3].arrays['w'])
    other_task = import_weights(archive, SPECS, plan, seed=1, task=Task.BINARY_CLASSIFICATION)
    assert not np.array_equal(other_task.params[3]['w'], archive.layers[3].arrays['w'])
    assert other_task.task is Task.BINARY_CLASSIFICATION


def test_incompatible_layers_name_the_index():
    archive = _archive()
    wider = default_layer_specs(FEATURE_DIM, (8, 12), (8,))
    with pytest.raises(ShapeIncompatible) as excinfo:
        import_weights(archive, wider, default_plan(wider), seed=0)
    assert excinfo.value.layer_index == 1

    dense_first = [LayerSpec(LayerKind.DENSE, FEATURE_DIM, 8), LayerSpec(LayerKind.DENSE, 8, 1, Activation.LINEAR)]
    with pytest.raises(ShapeIncompatible):
        import_weights(archive, dense_first, TransferPlan(copied_layers={0}), seed=0)


def test_zero_epochs_returns_imported_model(small_dataset):
    archive = _archive()
    plan = default_plan(SPECS)
    result = transfer_train(archive, small_dataset, plan, TrainConfig(epochs=0, seed=4), readout=Readout.SUM)
    expected = import_weights(archive, SPECS, plan, seed=4, readout=Readout.SUM)
    assert result.loss_history == []
    for got, want in zip(result.model.params, expected.params):
        for name in want:
            assert np.array_equal(got[name], want[name])


def test_feature_extraction_keeps_copied_layers_bit_identical(small_dataset):
    archive = _archive()
    result = transfer_train(archive, small_dataset, default_plan(SPECS), TrainConfig(epochs=10, seed=2),
                            readout=Readout.SUM)
    for index in (0, 1):
        for name, value in archive.layers[index].arrays.items():
            assert np.array_equal(result.model.params[index][name], value)
    assert len(result.loss_history) == 10


def test_fine_tuning_updates_copied_layers(small_dataset):
    archive = _archive()
    plan = default_plan(SPECS, TransferMode.FINE_TUNING)
    result = transfer_train(archive, small_dataset, plan, TrainConfig(epochs=5, seed=2), readout=Readout.SUM)
    assert not np.array_equal(result.model.params[0]['w_self'], archive.layers[0].arrays['w_self'])


def test_classification_acceptor_gets_classification_head(small_dataset):
    acceptor = binarize_endpoint(small_dataset, 6.0)
    result = transfer_train(_archive(), acceptor, default_plan(SPECS), TrainConfig(epochs=3, seed=0))
    assert result.model.task is Task.BINARY_CLASSIFICATION


def _full_copy():
    return TransferPlan(copied_layers=resolve_copied_layers('all', SPECS), mode=TransferMode.FINE_TUNING,
                        reinit_head=False)


def test_exported_then_imported_model_predicts_identically(tmp_path):
    donor = build_model(SPECS, readout=Readout.SUM, seed=5)
    loaded = load_archive(save_archive(export_weights(donor), tmp_path / 'donor.weights.json'))
    acceptor = import_weights(loaded, SPECS, _full_copy(), seed=123)
    mols = [parse_smiles(s) for s in SMALL_SMILES[:10]]
    assert acceptor.readout is Readout.SUM
    assert np.array_equal(predict(acceptor, mols), predict(donor, mols))


def test_full_copy_without_head_reset_reproduces_donor_outputs(small_dataset):
    donor = build_model(SPECS, readout=Readout.SUM, seed=5)
    result = transfer_train(export_weights(donor), small_dataset, _full_copy(), TrainConfig(epochs=0, seed=8))
    mols = [mol for mol, _ in small_dataset.pairs()]
    assert np.array_equal(predict(result.model, mols), predict(donor, mols))
    assert result.model.frozen_layers == frozenset()
