# training/trainer.py
"""
Minibatch Adam training for GCNN models.
One job: fit a model to a dataset while leaving frozen layers untouched.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.datasets import Dataset
from models.gcnn import GcnnModel, GraphTensors, batch_loss_and_gradients, collate, graph_tensors
from utils.errors import GraftError

logger = logging.getLogger(__name__)


class DivergenceError(GraftError, ArithmeticError):
    """Loss became non-finite during training"""

    def __init__(self, epoch: int, value: float):
        self.epoch = epoch
        self.value = value
        super().__init__(f"Training diverged at epoch {epoch} (loss={value})")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    frozen_layers: FrozenSet[int] = field(default_factory=frozenset)
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        object.__setattr__(self, 'frozen_layers', frozenset(self.frozen_layers))
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ('adam_beta1', 'adam_beta2'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if not self.adam_eps > 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")

    def with_overrides(self, **changes) -> 'TrainConfig':
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return TrainConfig(**values)


@dataclass
class TrainResult:
    """Trained model plus its per-epoch mean loss"""
    model: GcnnModel
    loss_history: List[float]

    @property
    def final_loss(self) -> Optional[float]:
        return self.loss_history[-1] if self.loss_history else None


class Adam:
    """Adam with per-parameter moment estimates keyed by parameter name"""

    def __init__(self, lr: float = 0.005, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update params in place"""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(params[key])
                self.v[key] = np.zeros_like(params[key])
            self.m[key] *= self.beta1
            self.m[key] += (1.0 - self.beta1) * g
            self.v[key] *= self.beta2
            self.v[key] += (1.0 - self.beta2) * (g * g)
            params[key] -= step_size * self.m[key] / (np.sqrt(self.v[key] / bc2) + self.eps)


def _trainable_views(model: GcnnModel, frozen: FrozenSet[int]) -> Dict[str, np.ndarray]:
    return {
        f"layer{i}.{name}": value
        for i, layer_params in enumerate(model.params) if i not in frozen
        for name, value in layer_params.items()
    }


def train(model: GcnnModel, dataset: Union[Dataset, Sequence], config: TrainConfig) -> TrainResult:
    """
    Train a copy of the model with minibatch Adam

    Args:
        model: Starting model (left unchanged)
        dataset: Dataset, or (MolecularGraph, target) pairs
        config: Training hyperparameters; config.frozen_layers is merged
            with the model's own frozen set

    Returns:
        TrainResult with the trained copy and one mean loss per epoch

    Raises:
        DivergenceError: epoch loss or weights became non-finite
    """
    if config.epochs < 1:
        raise ValueError(f"train needs epochs >= 1, got {config.epochs}")

    pairs = dataset.pairs() if isinstance(dataset, Dataset) else list(dataset)
    if not pairs:
        raise ValueError("Cannot train on an empty dataset")

    frozen = frozenset(config.frozen_layers) | frozenset(model.frozen_layers)
    invalid = [i for i in frozen if not 0 <= i < len(model.layers)]
    if invalid:
        raise ValueError(f"Frozen layer indices out of range: {sorted(invalid)}")

    trained = model.clone()
    trained.frozen_layers = frozen
    tensors: List[GraphTensors] = [graph_tensors(mol) for mol, _ in pairs]
    targets = np.array([target for _, target in pairs], dtype=np.float64)

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    params = _trainable_views(trained, frozen)
    n = len(pairs)
    history: List[float] = []

    logger.info("Training %d molecules for %d epochs (frozen layers: %s)",
                n, config.epochs, sorted(frozen) or 'none')

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        weighted_loss = 0.0
        for start in range(0, n, config.batch_size):
            index = order[start:start + config.batch_size]
            batch = collate([tensors[i] for i in index], trained.readout)
            value, layer_grads = batch_loss_and_gradients(trained, batch, targets[index])
            weighted_loss += value * len(index)
            if params:
                grads = {
                    f"layer{i}.{name}": g
                    for i, layer_grad in enumerate(layer_grads) if i not in frozen
                    for name, g in layer_grad.items()
                }
                optimizer.step(params, grads)

        epoch_loss = weighted_loss / n
        if not math.isfinite(epoch_loss) or not trained.is_finite():
            raise DivergenceError(epoch, epoch_loss)
        history.append(epoch_loss)

        if config.log_every and (epoch % config.log_every == 0 or epoch == config.epochs):
            logger.info("epoch %d loss %.6g", epoch, epoch_loss)

    return TrainResult(model=trained, loss_history=history)


def write_loss_history(history: Sequence[float], path: Union[str, Path]) -> Path:
    """Write an epoch,loss CSV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({'epoch': np.arange(1, len(history) + 1), 'loss': list(history)})
    frame.to_csv(path, index=False)
    return path
