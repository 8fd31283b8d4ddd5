# tests/test_gcnn.py
import numpy as np
import pytest

from core.datasets import Task
from core.molgraph import FEATURE_DIM, atom_feature_matrix, parse_smiles
from models.gcnn import (Activation, BadTarget, EmptyBatch, LayerKind, LayerSpec, Readout, ShapeMismatch,
                         build_model, default_layer_specs, forward, gradients, loss, predict)

from tests.conftest import SMALL_SMILES

ARCHITECTURES = [
    ((4,), (3,)),
    ((5, 3), (4,)),
    ((3, 3, 2), (3, 2)),
    ((4, 4), ()),
]


def _numeric_gradients(model, pairs, eps=1e-6):
    numeric = []
    for layer in model.params:
        layer_grads = {}
        for name, value in layer.items():
            grad = np.zeros_like(value)
            for index in np.ndindex(value.shape):
                original = value[index]
                value[index] = original + eps
                plus = loss(model, pairs)
                value[index] = original - eps
                minus = loss(model, pairs)
                value[index] = original
                grad[index] = (plus - minus) / (2 * eps)
            layer_grads[name] = grad
        numeric.append(layer_grads)
    return numeric


def _max_relative_error(analytic, numeric):
    worst = 0.0
    for a_layer, n_layer in zip(analytic, numeric):
        for name in a_layer:
            a, n = a_layer[name], n_layer[name]
            error = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-3)
            worst = max(worst, float(error.max()))
    return worst


@pytest.mark.parametrize('task', [Task.REGRESSION, Task.BINARY_CLASSIFICATION])
@pytest.mark.parametrize('readout', [Readout.MEAN, Readout.SUM])
def test_analytic_gradients_match_finite_differences(task, readout):
    rng = np.random.default_rng(7)
    for trial, (graph_conv, dense) in enumerate(ARCHITECTURES):
        specs = default_layer_specs(FEATURE_DIM, graph_conv, dense, Activation.SIGMOID)
        model = build_model(specs, task=task, readout=readout, seed=trial)
        chosen = rng.choice(len(SMALL_SMILES), size=3, replace=False)
        mols = [parse_smiles(SMALL_SMILES[i]) for i in chosen]
        if task is Task.REGRESSION:
            targets = rng.normal(size=3)
        else:
            targets = np.array([0.0, 1.0, 1.0])
        pairs = list(zip(mols, targets.tolist()))

        analytic = gradients(model, pairs)
        numeric = _numeric_gradients(model, pairs)
        assert _max_relative_error(analytic, numeric) < 1e-4


def test_relu_gradients_match_away_from_kinks():
    specs = default_layer_specs(FEATURE_DIM, (6, 4), (4,), Activation.RELU)
    model = build_model(specs, seed=3)
    pairs = [(parse_smiles('CC(=O)Nc1ccccc1'), 1.5), (parse_smiles('CCN(CC)CC'), -0.5)]
    assert _max_relative_error(gradients(model, pairs), _numeric_gradients(model, pairs)) < 1e-4


def test_batched_prediction_equals_single_forward():
    model = build_model(default_layer_specs(FEATURE_DIM, (8, 8), (8,)), readout=Readout.SUM, seed=1)
    mols = [parse_smiles(s) for s in SMALL_SMILES]
    batched = predict(model, mols, batch_size=5)
    single = np.array([forward(model, mol) for mol in mols])
    assert np.allclose(batched, single, rtol=1e-12, atol=1e-12)


def test_atom_order_does_not_change_prediction():
    model = build_model(default_layer_specs(FEATURE_DIM, (8,), (4,)), seed=2)
    assert forward(model, parse_smiles('CCO')) == pytest.approx(forward(model, parse_smiles('OCC')), abs=1e-12)


def test_classification_outputs_are_probabilities():
    model = build_model(default_layer_specs(FEATURE_DIM, (8,), (4,)), task=Task.BINARY_CLASSIFICATION, seed=4)
    outputs = predict(model, [parse_smiles(s) for s in SMALL_SMILES])
    assert np.all((outputs > 0.0) & (outputs < 1.0))


def test_same_seed_same_weights():
    specs = default_layer_specs()
    a, b = build_model(specs, seed=11), build_model(specs, seed=11)
    for (_, x), (_, y) in zip(a.named_parameters(), b.named_parameters()):
        assert np.array_equal(x, y)
    c = build_model(specs, seed=12)
    assert not np.array_equal(a.params[0]['w_self'], c.params[0]['w_self'])


def test_default_architecture_shape():
    specs = default_layer_specs()
    assert [spec.kind for spec in specs] == [LayerKind.GRAPH_CONV] * 2 + [LayerKind.DENSE] * 3
    assert specs[0].in_dim == FEATURE_DIM
    assert specs[-1].out_dim == 1
    assert specs[-1].activation is Activation.LINEAR


@pytest.mark.parametrize('specs', [
    [],
    [LayerSpec(LayerKind.GRAPH_CONV, FEATURE_DIM, 4)],
    [LayerSpec(LayerKind.GRAPH_CONV, FEATURE_DIM, 4), LayerSpec(LayerKind.DENSE, 5, 1)],
    [LayerSpec(LayerKind.DENSE, FEATURE_DIM, 4), LayerSpec(LayerKind.GRAPH_CONV, 4, 4),
     LayerSpec(LayerKind.DENSE, 4, 1)],
    [LayerSpec(LayerKind.GRAPH_CONV, FEATURE_DIM, 4), LayerSpec(LayerKind.DENSE, 4, 2)],
])
def test_invalid_layer_chains(specs):
    with pytest.raises(ShapeMismatch):
        build_model(specs)


def test_bad_targets_and_empty_batches():
    model = build_model(default_layer_specs(FEATURE_DIM, (4,), (4,)), task=Task.BINARY_CLASSIFICATION)
    with pytest.raises(BadTarget):
        loss(model, [(parse_smiles('CCO'), 0.5)])
    with pytest.raises(EmptyBatch):
        loss(model, [])


def _zeroed(model):
    for layer in model.params:
        for value in layer.values():
            value[...] = 0.0
    return model


def test_identity_self_weights_pass_single_atom_features_through():
    specs = [LayerSpec(LayerKind.GRAPH_CONV, FEATURE_DIM, FEATURE_DIM, Activation.LINEAR),
             LayerSpec(LayerKind.DENSE, FEATURE_DIM, 1, Activation.LINEAR)]
    model = build_model(specs, seed=0)
    model.params[0]['w_self'] = np.eye(FEATURE_DIM)
    model.params[0]['b'] = np.zeros(FEATURE_DIM)
    methane = parse_smiles('C')
    features = atom_feature_matrix(methane)[0]
    for k in range(FEATURE_DIM):
        model.params[1]['w'] = np.eye(FEATURE_DIM)[:, k:k + 1]
        assert forward(model, methane) == features[k]


def test_all_zero_weights_give_zero_output():
    mols = [parse_smiles(s) for s in SMALL_SMILES]
    regression = _zeroed(build_model(default_layer_specs(), seed=1))
    assert np.all(predict(regression, mols) == 0.0)
    classifier = _zeroed(build_model(default_layer_specs(), task=Task.BINARY_CLASSIFICATION, seed=1))
    assert np.all(predict(classifier, mols) == 0.5)


def test_sum_readout_is_atom_count_times_mean_for_benzene():
    specs = default_layer_specs(FEATURE_DIM, (8,), (), Activation.LINEAR)
    outputs = {}
    for readout in (Readout.MEAN, Readout.SUM):
        model = build_model(specs, readout=readout, seed=6)
        for layer in model.params:
            for name in layer:
                layer[name] = np.abs(layer[name])
        outputs[readout] = forward(model, parse_smiles('c1ccccc1'))
    assert outputs[Readout.MEAN] > 0.0
    assert outputs[Readout.SUM] == pytest.approx(6.0 * outputs[Readout.MEAN], rel=1e-12)


def test_cross_entropy_at_even_odds_is_ln2():
    model = _zeroed(build_model(default_layer_specs(FEATURE_DIM, (4,), (4,)), task=Task.BINARY_CLASSIFICATION))
    pairs = [(parse_smiles('CCO'), 1.0), (parse_smiles('c1ccccc1'), 0.0)]
    assert loss(model, pairs) == pytest.approx(np.log(2.0), rel=1e-12)


def test_mean_squared_error_of_constant_prediction():
    model = _zeroed(build_model(default_layer_specs(FEATURE_DIM, (4,), (4,))))
    model.params[-1]['b'][0] = 3.0
    assert loss(model, [(parse_smiles('CCO'), 1.0)]) == pytest.approx(4.0)
    assert loss(model, [(parse_smiles('CCO'), 1.0), (parse_smiles('CCCC'), 5.0)]) == pytest.approx(4.0)


def test_zero_residual_gives_zero_gradients():
    model = _zeroed(build_model(default_layer_specs(FEATURE_DIM, (4, 4), (4,))))
    model.params[-1]['b'][0] = 3.0
    grads = gradients(model, [(parse_smiles('CCO'), 3.0), (parse_smiles('c1ccncc1'), 3.0)])
    assert len(grads) == len(model.layers)
    for layer in grads:
        for value in layer.values():
            assert np.all(value == 0.0)
