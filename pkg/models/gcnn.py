# models/gcnn.py
"""
Graph-convolutional network with manual backpropagation.

Graph convolution rule (sum aggregation, no degree normalization):
    h'_v = act(W_self h_v + W_neigh * sum_{u in N(v)} h_u + b)
followed by mean or sum pooling over atoms and a stack of dense layers.
Minibatches are evaluated as one block-diagonal sparse graph.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from core.datasets import Task
from core.molgraph import FEATURE_DIM, MolecularGraph, atom_feature_matrix
from utils.errors import GraftError

logger = logging.getLogger(__name__)


class LayerKind(str, enum.Enum):
    GRAPH_CONV = 'graph_conv'
    DENSE = 'dense'


class Activation(str, enum.Enum):
    RELU = 'relu'
    LINEAR = 'linear'
    SIGMOID = 'sigmoid'


class Readout(str, enum.Enum):
    MEAN = 'mean'
    SUM = 'sum'


class ShapeMismatch(GraftError, ValueError):
    """Layer dimensions or layer order are inconsistent"""


class BadTarget(GraftError, ValueError):
    """Classification target outside {0, 1}"""


class EmptyBatch(GraftError, ValueError):
    """Loss or gradients requested for an empty batch"""


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, 'kind', LayerKind(self.kind))
        object.__setattr__(self, 'activation', Activation(self.activation))

    @property
    def param_names(self) -> Tuple[str, ...]:
        if self.kind is LayerKind.GRAPH_CONV:
            return ('w_self', 'w_neigh', 'b')
        return ('w', 'b')

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = {name: (self.in_dim, self.out_dim) for name in self.param_names if name != 'b'}
        shapes['b'] = (self.out_dim,)
        return shapes


@dataclass
class GcnnModel:
    """Layer stack, weights and task head of one network"""
    layers: List[LayerSpec]
    params: List[Dict[str, np.ndarray]]
    task: Task = Task.REGRESSION
    readout: Readout = Readout.MEAN
    rng_seed: int = 0
    frozen_layers: FrozenSet[int] = field(default_factory=frozenset)

    @property
    def n_graph_conv(self) -> int:
        return sum(1 for spec in self.layers if spec.kind is LayerKind.GRAPH_CONV)

    @property
    def graph_conv_indices(self) -> Tuple[int, ...]:
        return tuple(i for i, spec in enumerate(self.layers) if spec.kind is LayerKind.GRAPH_CONV)

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        for i, layer_params in enumerate(self.params):
            for name, value in layer_params.items():
                yield f"layer{i}.{name}", value

    def clone(self) -> 'GcnnModel':
        return GcnnModel(
            layers=list(self.layers),
            params=[{name: value.copy() for name, value in layer.items()} for layer in self.params],
            task=self.task,
            readout=self.readout,
            rng_seed=self.rng_seed,
            frozen_layers=frozenset(self.frozen_layers),
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for _, value in self.named_parameters())


def validate_specs(specs: Sequence[LayerSpec]) -> None:
    """
    Check a layer chain

    Raises:
        ShapeMismatch: empty chain, non-positive or unchained dims, a dense
        layer before a graph_conv layer, no dense layer, or head width != 1
    """
    if not specs:
        raise ShapeMismatch("Model needs at least one layer")

    seen_dense = False
    for i, spec in enumerate(specs):
        if spec.in_dim <= 0 or spec.out_dim <= 0:
            raise ShapeMismatch(f"Layer {i} has non-positive dims {spec.in_dim}x{spec.out_dim}")
        if i > 0 and specs[i - 1].out_dim != spec.in_dim:
            raise ShapeMismatch(
                f"Layer {i} expects in_dim {spec.in_dim} but layer {i - 1} outputs {specs[i - 1].out_dim}")
        if spec.kind is LayerKind.DENSE:
            seen_dense = True
        elif seen_dense:
            raise ShapeMismatch(f"graph_conv layer {i} follows a dense layer")

    if not seen_dense:
        raise ShapeMismatch("Model needs at least one dense layer after pooling")
    if specs[-1].out_dim != 1:
        raise ShapeMismatch(f"Head layer must have out_dim 1, got {specs[-1].out_dim}")


def default_layer_specs(in_dim: int = FEATURE_DIM, graph_conv: Sequence[int] = (64, 64),
                        dense: Sequence[int] = (64, 32),
                        activation: Activation = Activation.RELU) -> List[LayerSpec]:
    """Graph-conv widths, then hidden dense widths, then a linear 1-unit head"""
    specs = []
    width = in_dim
    for out_dim in graph_conv:
        specs.append(LayerSpec(LayerKind.GRAPH_CONV, width, out_dim, activation))
        width = out_dim
    for out_dim in dense:
        specs.append(LayerSpec(LayerKind.DENSE, width, out_dim, activation))
        width = out_dim
    specs.append(LayerSpec(LayerKind.DENSE, width, 1, Activation.LINEAR))
    return specs


def init_layer_params(spec: LayerSpec, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases"""
    limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
    params = {}
    for name in spec.param_names:
        if name == 'b':
            params[name] = np.zeros(spec.out_dim)
        else:
            params[name] = rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim))
    return params


def build_model(specs: Sequence[LayerSpec], task: Task = Task.REGRESSION,
                readout: Readout = Readout.MEAN, seed: int = 0) -> GcnnModel:
    """
    Build a freshly initialized model

    Args:
        specs: Layer chain (graph_conv layers first, head out_dim 1)
        task: Regression or binary classification head
        readout: Pooling over atoms
        seed: Initialization seed (same seed, same weights)

    Returns:
        GcnnModel
    """
    specs = list(specs)
    validate_specs(specs)
    rng = np.random.default_rng(seed)
    params = [init_layer_params(spec, rng) for spec in specs]
    return GcnnModel(layers=specs, params=params, task=Task(task), readout=Readout(readout), rng_seed=seed)


# ---------------------------------------------------------------------------
# Graph tensors and batching

@dataclass(frozen=True)
class GraphTensors:
    """Featurized molecule: atom features and undirected edge list"""
    features: np.ndarray
    edges: np.ndarray

    @property
    def n_atoms(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class GraphBatch:
    """Block-diagonal view of several molecules"""
    features: np.ndarray
    adjacency: sp.csr_matrix
    pooling: sp.csr_matrix

    @property
    def n_graphs(self) -> int:
        return int(self.pooling.shape[0])


def graph_tensors(mol: MolecularGraph) -> GraphTensors:
    edges = np.array([bond.endpoints for bond in mol.bonds], dtype=np.int64).reshape(-1, 2)
    return GraphTensors(features=atom_feature_matrix(mol), edges=edges)


def collate(items: Sequence[GraphTensors], readout: Readout) -> GraphBatch:
    """Stack molecules into one sparse adjacency and a pooling matrix"""
    sizes = [item.n_atoms for item in items]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    n_total = int(sum(sizes))

    rows, cols = [], []
    for item, offset in zip(items, offsets):
        if len(item.edges):
            a = item.edges[:, 0] + offset
            b = item.edges[:, 1] + offset
            rows.extend((a, b))
            cols.extend((b, a))
    if rows:
        row_index = np.concatenate(rows)
        col_index = np.concatenate(cols)
    else:
        row_index = col_index = np.zeros(0, dtype=np.int64)
    adjacency = sp.csr_matrix(
        (np.ones(len(row_index)), (row_index, col_index)), shape=(n_total, n_total))

    pool_rows = np.repeat(np.arange(len(items)), sizes)
    if Readout(readout) is Readout.MEAN:
        pool_values = np.repeat([1.0 / size for size in sizes], sizes)
    else:
        pool_values = np.ones(n_total)
    pooling = sp.csr_matrix(
        (pool_values, (pool_rows, np.arange(n_total))), shape=(len(items), n_total))

    features = np.vstack([item.features for item in items]) if items else np.zeros((0, FEATURE_DIM))
    return GraphBatch(features=features, adjacency=adjacency, pooling=pooling)


def batch_from_graphs(model: GcnnModel, graphs: Sequence[MolecularGraph]) -> GraphBatch:
    return collate([graph_tensors(mol) for mol in graphs], model.readout)


# ---------------------------------------------------------------------------
# Forward / backward

def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    if activation is Activation.SIGMOID:
        return _sigmoid(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0.0).astype(z.dtype)
    if activation is Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class _ForwardCache:
    conv: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    dense: List[Tuple[np.ndarray, np.ndarray, np.ndarray]]
    logits: np.ndarray


def _forward(model: GcnnModel, batch: GraphBatch) -> _ForwardCache:
    if batch.features.shape[1] != model.layers[0].in_dim:
        raise ShapeMismatch(
            f"Atom features have {batch.features.shape[1]} columns, first layer expects {model.layers[0].in_dim}")

    h = batch.features
    conv_cache = []
    dense_cache = []
    pooled = None
    for spec, params in zip(model.layers, model.params):
        if spec.kind is LayerKind.GRAPH_CONV:
            neighbor_sum = batch.adjacency @ h
            z = h @ params['w_self'] + neighbor_sum @ params['w_neigh'] + params['b']
            a = _activate(z, spec.activation)
            conv_cache.append((h, neighbor_sum, z, a))
            h = a
        else:
            if pooled is None:
                pooled = batch.pooling @ h
                h = pooled
            z = h @ params['w'] + params['b']
            a = _activate(z, spec.activation)
            dense_cache.append((h, z, a))
            h = a
    return _ForwardCache(conv=conv_cache, dense=dense_cache, logits=h[:, 0])


def _output(model: GcnnModel, logits: np.ndarray) -> np.ndarray:
    if model.task is Task.BINARY_CLASSIFICATION:
        return _sigmoid(logits)
    return logits


def forward_batch(model: GcnnModel, batch: GraphBatch) -> np.ndarray:
    """Predictions for every molecule in a batch (probabilities for classification)"""
    return _output(model, _forward(model, batch).logits)


def forward(model: GcnnModel, mol: MolecularGraph) -> float:
    """Prediction for one molecule"""
    return float(forward_batch(model, batch_from_graphs(model, [mol]))[0])


def predict(model: GcnnModel, graphs: Sequence[MolecularGraph], batch_size: int = 256) -> np.ndarray:
    """Batched predictions for many molecules"""
    outputs = []
    for start in range(0, len(graphs), batch_size):
        outputs.append(forward_batch(model, batch_from_graphs(model, graphs[start:start + batch_size])))
    return np.concatenate(outputs) if outputs else np.zeros(0)


def _check_targets(model: GcnnModel, targets: np.ndarray) -> None:
    if targets.size == 0:
        raise EmptyBatch("Batch is empty")
    if model.task is Task.BINARY_CLASSIFICATION and not np.all((targets == 0.0) | (targets == 1.0)):
        raise BadTarget(f"Classification targets must be 0 or 1, got {sorted(set(targets.tolist()))[:5]}")


def _loss_from_logits(model: GcnnModel, logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean loss and its derivative with respect to each logit"""
    n = targets.shape[0]
    if model.task is Task.BINARY_CLASSIFICATION:
        value = float(np.mean(np.logaddexp(0.0, logits) - targets * logits))
        grad = (_sigmoid(logits) - targets) / n
    else:
        residual = logits - targets
        value = float(np.mean(residual * residual))
        grad = 2.0 * residual / n
    return value, grad


def batch_loss(model: GcnnModel, batch: GraphBatch, targets: np.ndarray) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    _check_targets(model, targets)
    return _loss_from_logits(model, _forward(model, batch).logits, targets)[0]


def batch_loss_and_gradients(model: GcnnModel, batch: GraphBatch,
                             targets: np.ndarray) -> Tuple[float, List[Dict[str, np.ndarray]]]:
    """Mean batch loss and analytic gradients for every parameter"""
    targets = np.asarray(targets, dtype=np.float64)
    _check_targets(model, targets)
    cache = _forward(model, batch)
    value, d_logits = _loss_from_logits(model, cache.logits, targets)

    grads: List[Optional[Dict[str, np.ndarray]]] = [None] * len(model.layers)
    upstream = d_logits[:, None]

    dense_indices = [i for i, spec in enumerate(model.layers) if spec.kind is LayerKind.DENSE]
    for position in reversed(range(len(dense_indices))):
        layer = dense_indices[position]
        spec, params = model.layers[layer], model.params[layer]
        h_in, z, a = cache.dense[position]
        dz = upstream * _activation_grad(z, a, spec.activation)
        grads[layer] = {'w': h_in.T @ dz, 'b': dz.sum(axis=0)}
        upstream = dz @ params['w'].T

    upstream = batch.pooling.T @ upstream

    conv_indices = [i for i, spec in enumerate(model.layers) if spec.kind is LayerKind.GRAPH_CONV]
    for position in reversed(range(len(conv_indices))):
        layer = conv_indices[position]
        spec, params = model.layers[layer], model.params[layer]
        h_in, neighbor_sum, z, a = cache.conv[position]
        dz = upstream * _activation_grad(z, a, spec.activation)
        grads[layer] = {
            'w_self': h_in.T @ dz,
            'w_neigh': neighbor_sum.T @ dz,
            'b': dz.sum(axis=0),
        }
        if position > 0:
            upstream = dz @ params['w_self'].T + batch.adjacency.T @ (dz @ params['w_neigh'].T)

    return value, grads


def _split_batch(batch: Sequence[Tuple[MolecularGraph, float]]) -> Tuple[List[MolecularGraph], np.ndarray]:
    if not batch:
        raise EmptyBatch("Batch is empty")
    graphs = [mol for mol, _ in batch]
    targets = np.array([target for _, target in batch], dtype=np.float64)
    return graphs, targets


def loss(model: GcnnModel, batch: Sequence[Tuple[MolecularGraph, float]]) -> float:
    """
    Mean per-example loss: MSE for regression, binary cross-entropy for classification

    Raises:
        BadTarget: classification target outside {0, 1}
    """
    graphs, targets = _split_batch(batch)
    return batch_loss(model, batch_from_graphs(model, graphs), targets)


def gradients(model: GcnnModel, batch: Sequence[Tuple[MolecularGraph, float]]) -> List[Dict[str, np.ndarray]]:
    """Analytic gradients of the mean batch loss, one dict per layer (frozen layers included)"""
    graphs, targets = _split_batch(batch)
    return batch_loss_and_gradients(model, batch_from_graphs(model, graphs), targets)[1]
