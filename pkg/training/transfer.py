# training/transfer.py
"""
Donor to acceptor weight transfer.
One job: graft archived donor layers into a fresh acceptor model and train it
in feature-extraction (copied layers frozen) or fine-tuning mode.
"""

import enum
import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Union

from core.datasets import Dataset, Task
from models.gcnn import GcnnModel, LayerKind, LayerSpec, Readout, build_model
from models.weight_archive import WeightArchive
from training.trainer import TrainConfig, TrainResult, train
from utils.errors import GraftError

logger = logging.getLogger(__name__)


class TransferMode(str, enum.Enum):
    FEATURE_EXTRACTION = 'feature_extraction'
    FINE_TUNING = 'fine_tuning'


class ShapeIncompatible(GraftError, ValueError):
    """A copied layer differs in kind or dims between archive and target"""

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        super().__init__(f"Layer {layer_index}: {message}")


class PlanError(GraftError, ValueError):
    """Transfer plan is empty or names unknown layers"""


@dataclass(frozen=True)
class TransferPlan:
    copied_layers: FrozenSet[int]
    mode: TransferMode = TransferMode.FEATURE_EXTRACTION
    reinit_head: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'copied_layers', frozenset(self.copied_layers))
        object.__setattr__(self, 'mode', TransferMode(self.mode))
        if not self.copied_layers:
            raise PlanError("Transfer plan must copy at least one layer")
        if min(self.copied_layers) < 0:
            raise PlanError(f"Negative layer index in plan: {sorted(self.copied_layers)}")


def resolve_copied_layers(selector: Union[str, Iterable[int]], specs: Sequence[LayerSpec]) -> FrozenSet[int]:
    """
    Turn a layer selector into indices

    Args:
        selector: 'graph_conv', 'all_but_head', 'all', a comma list like '0,1',
            or an iterable of indices
        specs: Target layer chain

    Returns:
        Frozen set of layer indices
    """
    if isinstance(selector, int):
        return frozenset([selector])
    if not isinstance(selector, str):
        return frozenset(int(i) for i in selector)

    selector = selector.strip()
    if selector == 'graph_conv':
        return frozenset(i for i, spec in enumerate(specs) if spec.kind is LayerKind.GRAPH_CONV)
    if selector == 'all_but_head':
        return frozenset(range(len(specs) - 1))
    if selector == 'all':
        return frozenset(range(len(specs)))
    try:
        return frozenset(int(part) for part in selector.split(',') if part.strip())
    except ValueError:
        raise PlanError(f"Unknown layer selector {selector!r}")


def default_plan(specs: Sequence[LayerSpec], mode: TransferMode = TransferMode.FEATURE_EXTRACTION) -> TransferPlan:
    """Copy the graph-conv layers, reinitialize the head"""
    return TransferPlan(copied_layers=resolve_copied_layers('graph_conv', specs), mode=mode, reinit_head=True)


def _check_compatible(archive: WeightArchive, target_spec: Sequence[LayerSpec], copied: Iterable[int]) -> None:
    for index in sorted(copied):
        if index >= len(target_spec):
            raise PlanError(f"Plan copies layer {index} but target has {len(target_spec)} layers")
        if index >= len(archive.layers):
            raise ShapeIncompatible(index, f"archive has only {len(archive.layers)} layers")
        donor, target = archive.layers[index].spec, target_spec[index]
        if donor.kind is not target.kind:
            raise ShapeIncompatible(index, f"kind {donor.kind.value} in archive vs {target.kind.value} in target")
        if (donor.in_dim, donor.out_dim) != (target.in_dim, target.out_dim):
            raise ShapeIncompatible(
                index, f"dims {donor.in_dim}x{donor.out_dim} in archive vs {target.in_dim}x{target.out_dim} in target")


def import_weights(archive: WeightArchive, target_spec: Sequence[LayerSpec], plan: TransferPlan, seed: int,
                   task: Optional[Task] = None, readout: Optional[Readout] = None) -> GcnnModel:
    """
    Build an acceptor model carrying donor weights in the planned layers

    Args:
        archive: Donor weights
        target_spec: Acceptor layer chain
        plan: Layers to copy, training mode, head policy
        seed: Initialization seed for every layer not copied
        task: Acceptor task (defaults to the donor's)
        readout: Acceptor pooling (defaults to the donor's)

    Returns:
        GcnnModel whose frozen_layers follow plan.mode

    Raises:
        ShapeIncompatible: first copied layer whose kind or dims differ
    """
    target_spec = list(target_spec)
    _check_compatible(archive, target_spec, plan.copied_layers)

    donor_task = Task(archive.metadata.get('task', Task.REGRESSION.value))
    task = Task(task) if task is not None else donor_task
    readout = Readout(readout) if readout is not None else Readout(archive.metadata.get('readout', Readout.MEAN.value))

    model = build_model(target_spec, task=task, readout=readout, seed=seed)
    head = len(target_spec) - 1
    reinit_head = plan.reinit_head or task is not donor_task

    copied: List[int] = []
    for index in sorted(plan.copied_layers):
        if index == head and reinit_head:
            continue
        model.params[index] = {name: value.copy() for name, value in archive.layers[index].arrays.items()}
        copied.append(index)

    if plan.mode is TransferMode.FEATURE_EXTRACTION:
        model.frozen_layers = frozenset(copied)
    logger.debug("Imported layers %s (mode=%s, frozen=%s)", copied, plan.mode.value, sorted(model.frozen_layers))
    return model


def transfer_train(archive: WeightArchive, acceptor: Dataset, plan: TransferPlan, config: TrainConfig,
                   target_spec: Optional[Sequence[LayerSpec]] = None,
                   readout: Optional[Readout] = None) -> TrainResult:
    """
    Import donor weights and train on the acceptor dataset

    Zero epochs returns the imported model untouched.
    """
    if len(acceptor) == 0:
        raise ValueError("Acceptor dataset is empty")

    spec = list(target_spec) if target_spec is not None else archive.specs
    model = import_weights(archive, spec, plan, seed=config.seed, task=acceptor.task, readout=readout)
    if config.epochs == 0:
        return TrainResult(model=model, loss_history=[])
    return train(model, acceptor, config.with_overrides(frozen_layers=model.frozen_layers))
