# tests/conftest.py
"""Shared fixtures and the --runslow switch for acceptance experiments"""

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from core.datasets import Dataset, Record, Task  # noqa: E402

FIXTURES = ROOT / 'tests' / 'fixtures'
CORPORA = ROOT / 'data' / 'corpora'

SMALL_SMILES = [
    'CCO', 'c1ccccc1', 'c1ccncc1', 'CC(=O)O', 'Oc1ccccc1', 'Nc1ccccc1', 'CCN(CC)CC',
    'CCCC', 'c1ccc2ccccc2c1', 'c1ccoc1', 'c1ccsc1', 'CC(=O)Nc1ccccc1', 'OCCO',
    'CCOCC', 'C1CCCCC1', 'C1CCNCC1',
]


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow acceptance experiments')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_dataset():
    """Sixteen molecules with their heavy-atom count as target"""
    from core.molgraph import parse_smiles

    records = [
        Record(id=f"m{i:02d}", smiles=smiles, target=float(parse_smiles(smiles).n_atoms))
        for i, smiles in enumerate(SMALL_SMILES)
    ]
    return Dataset(records=tuple(records), task=Task.REGRESSION, name='small')


@pytest.fixture
def corpora_dir():
    return CORPORA


@pytest.fixture
def fixtures_dir():
    return FIXTURES
