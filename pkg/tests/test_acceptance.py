# tests/test_acceptance.py
"""Desk-scale trend experiments; run with --runslow"""

import dataclasses
import json

import pytest

from core.experiment_runner import ExperimentConfig, ExperimentRunner
from core.report import write_report
from utils.config import GraftConfig

pytestmark = pytest.mark.slow

DONOR = 'gen:n=2000,seed=1,target=donor_default,noise=0'
RELATED = 'gen:n=400,seed=2,target=acceptor_related,noise=0'
UNRELATED = 'gen:n=400,seed=2,target=acceptor_unrelated,noise=0'


def _experiment(tmp_path, acceptor=RELATED, **overrides):
    config = GraftConfig(config_dir=str(tmp_path / 'cfg'), data_dir=str(tmp_path / 'data'))
    config.apply_overrides({
        'donor.source': DONOR,
        'acceptor.source': acceptor,
        'experiment.seeds': [0, 1, 2, 3, 4],
        'experiment.train_sizes': [10, 20],
        'experiment.split_properties': ['endpoint'],
        **overrides,
    })
    experiment = ExperimentConfig.from_config(config)
    return dataclasses.replace(experiment, master_seed=42, out_dir=tmp_path / 'run', jobs=4)


@pytest.fixture(scope='module')
def related_compare(tmp_path_factory):
    return ExperimentRunner(_experiment(tmp_path_factory.mktemp('related'))).compare()


def test_transfer_beats_cold_start(related_compare):
    summary = related_compare.summary
    for size in ('n10', 'n20'):
        assert summary['transfer'][size] - summary['pure_gcnn'][size] >= 0.05


def test_frozen_layers_never_move(related_compare):
    transfer = [r for r in related_compare.records if r['model_kind'] == 'transfer']
    assert len(transfer) == 10
    assert all(r['frozen_unchanged'] for r in transfer)


def test_unrelated_acceptor_shows_no_large_effect(tmp_path):
    report = ExperimentRunner(_experiment(tmp_path, acceptor=UNRELATED)).compare()
    for size in ('n10', 'n20'):
        delta = report.summary['transfer'][size] - report.summary['pure_gcnn'][size]
        assert -0.15 < delta < 0.15


def test_bigger_donors_transfer_better(tmp_path):
    experiment = _experiment(tmp_path, **{'experiment.train_sizes': [10],
                                          'experiment.donor_sizes': [100, 500, 2000]})
    report = ExperimentRunner(experiment).donor_size_sweep()
    series = report.series['transfer_median']['n10']
    values = [series[str(size)] for size in (100, 500, 2000)]
    inversions = sum(1 for a, b in zip(values, values[1:]) if b < a)
    assert inversions <= 1


def test_donor_broadens_applicability_domain(tmp_path):
    report = ExperimentRunner(_experiment(tmp_path, **{'experiment.train_sizes': [10]})).ad_report()
    assert len(report.ad_records) == 5
    assert all(record['delta_coverage'] > 0 for record in report.ad_records)


def test_reports_are_byte_identical(tmp_path):
    texts = []
    for attempt in range(2):
        report = ExperimentRunner(_experiment(tmp_path)).compare()
        report.created_at = 'fixed'
        path = write_report(report, tmp_path / f"compare-{attempt}.json")
        texts.append(path.read_text())
    assert texts[0] == texts[1]
    assert json.loads(texts[0])['created_at'] == 'fixed'
