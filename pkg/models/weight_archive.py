# models/weight_archive.py
"""
Versioned JSON weight archives.
One job: move GCNN layer weights to and from a human-readable file without losing precision.

File layout:
    {"format_version": 1,
     "layers": [{"kind", "in_dim", "out_dim", "activation", "w_self"|"w", "w_neigh"?, "b"}, ...],
     "metadata": {...}}
Weight matrices are flattened row-major (in_dim x out_dim). Floats are
written with repr precision, so a save/load cycle is bit-exact.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from models.gcnn import GcnnModel, LayerSpec, ShapeMismatch, validate_specs
from utils.errors import GraftError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
RESERVED_METADATA = ('task', 'readout', 'rng_seed')


class VersionError(GraftError, ValueError):
    """Archive format version is not recognized"""


class ArchiveError(GraftError, ValueError):
    """Archive content is malformed"""


@dataclass(frozen=True)
class ArchivedLayer:
    spec: LayerSpec
    arrays: Dict[str, np.ndarray]


@dataclass(frozen=True)
class WeightArchive:
    layers: List[ArchivedLayer]
    metadata: Dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def to_dict(self) -> Dict[str, Any]:
        layers = []
        for layer in self.layers:
            entry: Dict[str, Any] = {
                'kind': layer.spec.kind.value,
                'in_dim': layer.spec.in_dim,
                'out_dim': layer.spec.out_dim,
                'activation': layer.spec.activation.value,
            }
            for name in layer.spec.param_names:
                entry[name] = [float(x) for x in layer.arrays[name].ravel()]
            layers.append(entry)
        return {'format_version': self.format_version, 'layers': layers, 'metadata': dict(self.metadata)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'WeightArchive':
        version = data.get('format_version')
        if version != FORMAT_VERSION:
            raise VersionError(f"Unsupported weight archive version {version!r} (expected {FORMAT_VERSION})")
        if not isinstance(data.get('layers'), list):
            raise ArchiveError("Weight archive has no 'layers' list")

        layers = []
        for index, entry in enumerate(data['layers']):
            try:
                spec = LayerSpec(entry['kind'], int(entry['in_dim']), int(entry['out_dim']), entry['activation'])
            except (KeyError, ValueError, TypeError) as e:
                raise ArchiveError(f"Layer {index}: bad header ({e})")

            arrays = {}
            for name, shape in spec.param_shapes().items():
                if name not in entry:
                    raise ArchiveError(f"Layer {index}: missing array {name!r}")
                values = np.asarray(entry[name], dtype=np.float64)
                if values.size != int(np.prod(shape)):
                    raise ArchiveError(
                        f"Layer {index}: array {name!r} has {values.size} values, expected {int(np.prod(shape))}")
                arrays[name] = values.reshape(shape)
            layers.append(ArchivedLayer(spec=spec, arrays=arrays))

        try:
            validate_specs([layer.spec for layer in layers])
        except ShapeMismatch as e:
            raise ArchiveError(f"Weight archive layer chain is invalid: {e}")

        return cls(layers=layers, metadata=dict(data.get('metadata') or {}), format_version=version)


def export_weights(model: GcnnModel, metadata: Dict[str, Any] = None) -> WeightArchive:
    """
    Snapshot a model's weights

    Args:
        model: Trained or untrained model
        metadata: Free-form training metadata (donor dataset id, seed, epochs, ...)

    Returns:
        WeightArchive holding copies of every layer's arrays

    Raises:
        ArchiveError: metadata uses a key the archive fills from the model
    """
    clashes = sorted(set(metadata or {}) & set(RESERVED_METADATA))
    if clashes:
        raise ArchiveError(f"Metadata keys {clashes} are reserved for the model's own settings")
    info = {'task': model.task.value, 'readout': model.readout.value, 'rng_seed': model.rng_seed}
    info.update(metadata or {})
    layers = [
        ArchivedLayer(spec=spec, arrays={name: value.copy() for name, value in params.items()})
        for spec, params in zip(model.layers, model.params)
    ]
    return WeightArchive(layers=layers, metadata=info)


def save_archive(archive: WeightArchive, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(archive.to_dict(), indent=1), encoding='utf-8')
    logger.info("Saved weight archive (%d layers) to %s", len(archive.layers), path)
    return path


def load_archive(path: Union[str, Path]) -> WeightArchive:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise ArchiveError(f"Weight archive not found: {path}")
    except json.JSONDecodeError as e:
        raise ArchiveError(f"Weight archive {path} is not valid JSON: {e}")
    return WeightArchive.from_dict(data)