# core/report.py
"""
Machine-readable experiment reports.
One job: assemble, validate and write the JSON report of one CLI run.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import jsonschema

from utils.errors import GraftError

logger = logging.getLogger(__name__)

TOOLKIT = 'graft'
VERSION = '0.1.0'
SCHEMA_PATH = Path(__file__).resolve().parent.parent / 'schemas' / 'run_report.schema.json'

# Default sizes next to the full-scale sizes they stand in for
SCALE_MAPPING = {
    'donor_molecules': {'desk': 2000, 'full_scale': 1500000},
    'donor_size_sweep': {'desk': [100, 500, 2000], 'full_scale': [1000, 10000, 100000, 1500000]},
    'pca_region_size': {'desk': 500, 'full_scale': 10000},
    'acceptor_train_sizes': {'desk': [10, 20, 50, 100], 'full_scale': [10, 20, 50, 100]},
}


class ReportSchemaError(GraftError, ValueError):
    """Report does not match schemas/run_report.schema.json"""


def ids_digest(ids: Sequence[str]) -> str:
    """SHA-256 of an ordered id list (newline-joined UTF-8)"""
    return hashlib.sha256('\n'.join(ids).encode('utf-8')).hexdigest()


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace('+00:00', 'Z')


@dataclass
class RunReport:
    """Everything one subcommand produced; created_at is the only run-dependent field"""
    command: str
    config: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    ad_records: List[Dict[str, Any]] = field(default_factory=list)
    rank_sums: Dict[str, Dict[str, float]] = field(default_factory=dict)
    series: Dict[str, Any] = field(default_factory=dict)
    regions: List[Dict[str, Any]] = field(default_factory=list)
    splits: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    failures: List[Dict[str, str]] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    scale_mapping: Dict[str, Any] = field(default_factory=lambda: dict(SCALE_MAPPING))
    toolkit: str = TOOLKIT
    version: str = VERSION
    created_at: str = field(default_factory=utc_timestamp)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add_failure(self, cell_id: str, error: Union[str, Exception]) -> None:
        message = error if isinstance(error, str) else f"{type(error).__name__}: {error}"
        self.failures.append({'cell_id': cell_id, 'error': message})

    def sort(self) -> None:
        """Order every list by cell id so merges from parallel workers are stable"""
        self.records.sort(key=lambda r: (r['cell_id'], r['model_kind']))
        self.ad_records.sort(key=lambda r: r['cell_id'])
        self.failures.sort(key=lambda r: (r['cell_id'], r['error']))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + '\n'


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Any]:
    return json.loads(SCHEMA_PATH.read_text(encoding='utf-8'))


def validate_report(data: Dict[str, Any]) -> None:
    """
    Check a report dict against schemas/run_report.schema.json

    Raises:
        ReportSchemaError: first violation found
    """
    try:
        jsonschema.validate(instance=data, schema=load_schema())
    except jsonschema.ValidationError as e:
        location = '/'.join(str(part) for part in e.absolute_path) or '<root>'
        raise ReportSchemaError(f"Report invalid at {location}: {e.message}")


def write_report(report: RunReport, path: Union[str, Path]) -> Path:
    """Validate and write a report as sorted, indented JSON"""
    report.sort()
    text = report.to_json()
    validate_report(json.loads(text))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    logger.info("Wrote %s report to %s (%d records, %d failures)",
                report.command, path, len(report.records), len(report.failures))
    return path


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    data = json.loads(Path(path).read_text(encoding='utf-8'))
    validate_report(data)
    return data
