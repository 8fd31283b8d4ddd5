# core/datasets.py
"""
Dataset records and CSV persistence for graft.
One job: hold (id, smiles, target) records, validate them, and move them to and from CSV.
"""

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.molgraph import MolecularGraph, SmilesError, parse_smiles
from utils.errors import GraftError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('id', 'smiles', 'target')


class Task(str, enum.Enum):
    REGRESSION = 'regression'
    BINARY_CLASSIFICATION = 'binary_classification'


class DatasetError(GraftError, ValueError):
    """Dataset violates an invariant (duplicate ids, bad targets, bad CSV)"""


class RecordError(GraftError, ValueError):
    """Parsing or describing one record failed"""

    def __init__(self, record_id: str, cause: Exception):
        self.record_id = record_id
        self.cause = cause
        super().__init__(f"Record {record_id!r}: {cause}")


@dataclass(frozen=True)
class Record:
    """One molecule with its endpoint value"""
    id: str
    smiles: str
    target: float


@dataclass(frozen=True)
class Dataset:
    """Named collection of records for one task"""
    records: Tuple[Record, ...]
    task: Task = Task.REGRESSION
    name: str = 'dataset'
    metadata: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'records', tuple(self.records))
        object.__setattr__(self, 'task', Task(self.task))
        self.validate()

    def validate(self) -> None:
        """Check unique ids, finite targets, and 0/1 labels for classification"""
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise DatasetError(f"Duplicate id {record.id!r} in dataset {self.name!r}")
            seen.add(record.id)
            if not math.isfinite(record.target):
                raise DatasetError(f"Non-finite target for {record.id!r} in dataset {self.name!r}")
            if self.task is Task.BINARY_CLASSIFICATION and record.target not in (0.0, 1.0):
                raise DatasetError(f"Classification target {record.target!r} for {record.id!r} is not 0/1")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> List[str]:
        return [record.id for record in self.records]

    @property
    def smiles(self) -> List[str]:
        return [record.smiles for record in self.records]

    @property
    def targets(self) -> np.ndarray:
        return np.array([record.target for record in self.records], dtype=np.float64)

    @cached_property
    def index_of(self) -> Dict[str, int]:
        return {record.id: i for i, record in enumerate(self.records)}

    @cached_property
    def graphs(self) -> Tuple[MolecularGraph, ...]:
        """Parsed graphs in record order (parsed once per dataset object)"""
        graphs = []
        for record in self.records:
            try:
                graphs.append(parse_smiles(record.smiles))
            except SmilesError as e:
                raise RecordError(record.id, e) from e
        return tuple(graphs)

    def pairs(self) -> List[Tuple[MolecularGraph, float]]:
        """(graph, target) pairs for training"""
        return list(zip(self.graphs, self.targets.tolist()))

    def subset(self, ids: Iterable[str], name: Optional[str] = None) -> 'Dataset':
        """Records with the given ids, kept in dataset order"""
        wanted = set(ids)
        missing = wanted - set(self.index_of)
        if missing:
            raise DatasetError(f"Unknown ids in subset of {self.name!r}: {sorted(missing)[:5]}")
        records = tuple(r for r in self.records if r.id in wanted)
        return Dataset(records=records, task=self.task, name=name or self.name, metadata=dict(self.metadata))

    def head(self, n: int, name: Optional[str] = None) -> 'Dataset':
        return Dataset(records=self.records[:n], task=self.task, name=name or self.name,
                       metadata=dict(self.metadata))

    def with_records(self, records: Sequence[Record], task: Optional[Task] = None,
                     name: Optional[str] = None) -> 'Dataset':
        return replace(self, records=tuple(records), task=task or self.task, name=name or self.name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.id, r.smiles, r.target) for r in self.records],
            columns=list(CSV_COLUMNS),
        )


def read_dataset_csv(path: Union[str, Path], task: Union[Task, str] = Task.REGRESSION,
                     name: Optional[str] = None) -> Dataset:
    """
    Load a dataset CSV with header id,smiles,target

    Args:
        path: CSV file (UTF-8, decimal-point targets)
        task: Task of the endpoint
        name: Dataset name (defaults to the file stem)

    Returns:
        Validated Dataset
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={'id': str, 'smiles': str}, encoding='utf-8')
    except FileNotFoundError:
        raise DatasetError(f"Dataset file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DatasetError(f"Cannot read dataset {path}: {e}")

    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetError(f"Dataset {path} lacks column(s): {', '.join(missing)}")

    targets = pd.to_numeric(frame['target'], errors='coerce')
    if targets.isna().any():
        bad = frame.loc[targets.isna(), 'id'].tolist()[:5]
        raise DatasetError(f"Non-numeric targets in {path} for ids {bad}")

    records = tuple(
        Record(id=str(row_id), smiles=str(smiles).strip(), target=float(target))
        for row_id, smiles, target in zip(frame['id'], frame['smiles'], targets)
    )
    dataset = Dataset(records=records, task=Task(task), name=name or path.stem,
                      metadata={'source': str(path)})
    logger.info("Loaded %d records from %s", len(dataset), path)
    return dataset


def write_dataset_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write a dataset as id,smiles,target CSV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False, encoding='utf-8')
    logger.info("Wrote %d records to %s", len(dataset), path)
    return path
