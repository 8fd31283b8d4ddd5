# core/experiment_runner.py
"""
Experiment orchestration for graft.
One job: turn the configuration into independent experiment cells, run them
(in worker processes when jobs > 1) and merge their results into a RunReport.

Every cell derives its seeds from (master seed, cell id), so the number of
workers never changes a result.
"""

import copy
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analyzers.appdomain import fit_ad_fingerprints, query_fingerprints
from analyzers.metrics import MetricReport, evaluate, rank_sum_table
from analyzers.pca import pca_fit_matrix
from core.datasets import Dataset, Task, read_dataset_csv
from core.fingerprint import ecfp, fingerprint_matrix
from core.molgraph import DESCRIPTOR_NAMES, FEATURE_DIM
from core.report import RunReport, ids_digest
from models.forest import ForestConfig, fit_forest, predict_forest_batch
from models.gcnn import Activation, LayerSpec, Readout, build_model, default_layer_specs, predict
from models.weight_archive import WeightArchive, export_weights, load_archive, save_archive
from modules.datagen import GENERATOR_PREFIX, generate_dataset, parse_generator_spec
from modules.sampling import (EmptyRegion, SplitProperty, binarize_endpoint, diversity_split,
                              filter_by_pca_box, nested_subsamples)
from training.trainer import TrainConfig, train, write_loss_history
from training.transfer import TransferMode, TransferPlan, import_weights, resolve_copied_layers, transfer_train
from utils.config import GraftConfig
from utils.errors import ConfigError, GraftError

logger = logging.getLogger(__name__)

MODEL_KINDS = ('pure_gcnn', 'transfer', 'random_forest')


def cell_seed(master_seed: int, cell_id: str) -> int:
    """32-bit seed derived from the master seed and a cell id"""
    digest = hashlib.sha256(f"{master_seed}:{cell_id}".encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


def _median(values: Sequence[float]) -> Optional[float]:
    return float(np.median(values)) if len(values) else None


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings for one run (defaults < file < env < flags)"""
    settings: Dict[str, Any]
    master_seed: int
    out_dir: Path
    jobs: int = 1

    @classmethod
    def from_config(cls, config: GraftConfig) -> 'ExperimentConfig':
        experiment = cls(
            settings=copy.deepcopy(config.settings),
            master_seed=config.seed,
            out_dir=config.out_dir,
            jobs=config.jobs,
        )
        experiment.validate()
        return experiment

    def get(self, key_path: str, default: Any = None) -> Any:
        value = self.settings
        try:
            for key in key_path.split('.'):
                value = value[key]
            return value
        except (KeyError, TypeError):
            return default

    def validate(self) -> None:
        """Raise ConfigError listing every problem found"""
        issues = []
        if not self.seeds:
            issues.append("experiment.seeds must not be empty")
        if not self.train_sizes or min(self.train_sizes) < 1:
            issues.append("experiment.train_sizes must be positive integers")
        for name in self.get('experiment.split_properties', []):
            if name not in SplitProperty._value2member_map_:
                issues.append(f"Unknown split property: {name}")
        for side in ('donor', 'acceptor'):
            source = str(self.get(f'{side}.source', ''))
            if source.startswith(GENERATOR_PREFIX):
                try:
                    parse_generator_spec(source)
                except (ValueError, KeyError) as e:
                    issues.append(f"{side}.source: {e}")
            elif not Path(source).exists():
                issues.append(f"{side} dataset not found: {source}")
        if self.get('transfer.mode') not in TransferMode._value2member_map_:
            issues.append(f"Unknown transfer.mode: {self.get('transfer.mode')}")
        if self.get('model.readout') not in Readout._value2member_map_:
            issues.append(f"Unknown model.readout: {self.get('model.readout')}")
        if issues:
            raise ConfigError('; '.join(issues))

    def echo(self) -> Dict[str, Any]:
        """Settings as recorded in reports; worker count is left out"""
        settings = copy.deepcopy(self.settings)
        settings.setdefault('experiment', {})
        settings['experiment'].pop('jobs', None)
        settings['experiment']['seed'] = self.master_seed
        settings['experiment']['out_dir'] = str(self.out_dir)
        return settings

    @property
    def seeds(self) -> List[int]:
        return [int(s) for s in self.get('experiment.seeds', [])]

    @property
    def train_sizes(self) -> List[int]:
        return [int(n) for n in self.get('experiment.train_sizes', [])]

    @property
    def donor_sizes(self) -> List[int]:
        return [int(n) for n in self.get('experiment.donor_sizes', [])]

    @property
    def split_properties(self) -> List[SplitProperty]:
        return [SplitProperty(name) for name in self.get('experiment.split_properties', ['endpoint'])]

    @property
    def readout(self) -> Readout:
        return Readout(self.get('model.readout', 'sum'))

    def layer_specs(self) -> List[LayerSpec]:
        return default_layer_specs(
            in_dim=FEATURE_DIM,
            graph_conv=self.get('model.graph_conv', [64, 64]),
            dense=self.get('model.dense', [64, 32]),
            activation=Activation(self.get('model.activation', 'relu')),
        )

    def train_config(self, seed: int, epochs: Optional[int] = None) -> TrainConfig:
        training = self.get('training', {})
        return TrainConfig(
            epochs=int(training.get('epochs', 300) if epochs is None else epochs),
            batch_size=int(training.get('batch_size', 32)),
            learning_rate=float(training.get('learning_rate', 0.005)),
            adam_beta1=float(training.get('adam_beta1', 0.9)),
            adam_beta2=float(training.get('adam_beta2', 0.999)),
            adam_eps=float(training.get('adam_eps', 1e-8)),
            seed=seed,
            log_every=int(training.get('log_every', 50)),
        )

    def donor_train_config(self, seed: int) -> TrainConfig:
        return self.train_config(seed, epochs=int(self.get('training.donor_epochs', 100)))

    def transfer_plan(self) -> TransferPlan:
        return TransferPlan(
            copied_layers=resolve_copied_layers(self.get('transfer.copy', 'graph_conv'), self.layer_specs()),
            mode=TransferMode(self.get('transfer.mode', 'feature_extraction')),
            reinit_head=bool(self.get('transfer.reinit_head', True)),
        )

    def forest_config(self, seed: int) -> ForestConfig:
        forest = self.get('forest', {})
        return ForestConfig(
            n_trees=int(forest.get('n_trees', 100)),
            max_depth=forest.get('max_depth'),
            min_samples_leaf=int(forest.get('min_samples_leaf', 1)),
            features_per_split=forest.get('features_per_split', 'sqrt'),
            bootstrap=bool(forest.get('bootstrap', True)),
            seed=seed,
        )


def load_source(source: str, name: str, threshold: Optional[float] = None,
                positive_when: str = '>=') -> Dataset:
    """Dataset from a CSV path or a 'gen:' spec, binarized when a threshold is set"""
    if source.startswith(GENERATOR_PREFIX):
        dataset = generate_dataset(source, name=name)
    else:
        dataset = read_dataset_csv(source, name=name)
    if threshold is not None:
        dataset = binarize_endpoint(dataset, float(threshold), positive_when)
    return dataset


# ---------------------------------------------------------------------------
# Donors

@dataclass
class DonorModel:
    key: str
    archive: WeightArchive
    train_ids: Tuple[str, ...]
    loss_history: List[float] = field(default_factory=list)
    holdout: Optional[MetricReport] = None


def fit_donor(experiment: ExperimentConfig, train_set: Dataset, key: str, seed: int) -> DonorModel:
    """Train the donor architecture on a dataset and archive its weights"""
    specs = experiment.layer_specs()
    model = build_model(specs, task=train_set.task, readout=experiment.readout, seed=seed)
    logger.info("Training donor %s on %d molecules", key, len(train_set))
    result = train(model, train_set, experiment.donor_train_config(seed))
    archive = export_weights(result.model, metadata={
        'donor_key': key,
        'donor_dataset': train_set.name,
        'donor_train_sha256': ids_digest(train_set.ids),
        'seed': seed,
        'epochs': len(result.loss_history),
    })
    return DonorModel(key=key, archive=archive, train_ids=tuple(train_set.ids), loss_history=result.loss_history)


def holdout_split(dataset: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Optional[Dataset]]:
    """Seeded train/holdout partition; no holdout when fewer than two records would be held out"""
    n_hold = int(round(fraction * len(dataset)))
    if n_hold < 2 or n_hold >= len(dataset):
        return dataset, None
    order = np.random.default_rng(seed).permutation(len(dataset))
    hold_ids = [dataset.records[i].id for i in order[:n_hold]]
    keep_ids = [dataset.records[i].id for i in order[n_hold:]]
    return dataset.subset(keep_ids, name=f"{dataset.name}-train"), dataset.subset(hold_ids, name=f"{dataset.name}-holdout")


# ---------------------------------------------------------------------------
# Cells

@dataclass(frozen=True)
class CellJob:
    cell_id: str
    train_size: int
    split_property: str
    seed: int
    kinds: Tuple[str, ...]
    donor_key: Optional[str] = None


@dataclass
class CellResult:
    cell_id: str
    records: List[Dict[str, Any]] = field(default_factory=list)
    split: Optional[Dict[str, Any]] = None
    failure: Optional[str] = None


@dataclass
class CellContext:
    """Read-only inputs shared by every cell of one run"""
    experiment: ExperimentConfig
    acceptor: Dataset
    archives: Dict[str, WeightArchive] = field(default_factory=dict)


def split_cell_id(train_size: int, split_property: str, seed: int) -> str:
    return f"n{train_size:04d}/{split_property}/s{seed}"


def _evaluate(test: Dataset, predictions: np.ndarray) -> MetricReport:
    return evaluate(test.task is Task.BINARY_CLASSIFICATION, test.targets, predictions)


def _record(job: CellJob, kind: str, report: MetricReport, **extra) -> Dict[str, Any]:
    record = {
        'cell_id': job.cell_id,
        'model_kind': kind,
        'metric': report.metric_name.value,
        'value': report.value,
        'n_test': report.n,
        'train_size': job.train_size,
        'split_property': job.split_property,
        'seed': job.seed,
    }
    if job.donor_key is not None:
        record['donor'] = job.donor_key
    record.update(extra)
    return record


def _pure_arm(ctx: CellContext, job: CellJob, train_set: Dataset, test: Dataset, seed: int) -> Dict[str, Any]:
    experiment = ctx.experiment
    model = build_model(experiment.layer_specs(), task=train_set.task, readout=experiment.readout, seed=seed)
    result = train(model, train_set, experiment.train_config(seed))
    return _record(job, 'pure_gcnn', _evaluate(test, predict(result.model, test.graphs)))


def _transfer_arm(ctx: CellContext, job: CellJob, train_set: Dataset, test: Dataset, seed: int) -> Dict[str, Any]:
    experiment = ctx.experiment
    archive = ctx.archives[job.donor_key]
    result = transfer_train(archive, train_set, experiment.transfer_plan(), experiment.train_config(seed),
                            target_spec=experiment.layer_specs(), readout=experiment.readout)
    frozen_unchanged = all(
        np.array_equal(result.model.params[i][name], archive.layers[i].arrays[name])
        for i in result.model.frozen_layers for name in result.model.params[i]
    )
    return _record(job, 'transfer', _evaluate(test, predict(result.model, test.graphs)),
                   frozen_unchanged=frozen_unchanged)


def _forest_arm(ctx: CellContext, job: CellJob, train_set: Dataset, test: Dataset, seed: int) -> Dict[str, Any]:
    experiment = ctx.experiment
    forest = fit_forest(train_set, experiment.forest_config(seed),
                        radius=int(experiment.get('forest.radius', 3)),
                        n_bits=int(experiment.get('forest.n_bits', 2048)))
    return _record(job, 'random_forest', _evaluate(test, predict_forest_batch(forest, test.graphs)))


_ARMS = {
    'pure_gcnn': _pure_arm,
    'transfer': _transfer_arm,
    'random_forest': _forest_arm,
}


def run_cell(ctx: CellContext, job: CellJob) -> CellResult:
    """Split the acceptor once, then train and score every requested model kind on it"""
    master = ctx.experiment.master_seed
    split_id = split_cell_id(job.train_size, job.split_property, job.seed)
    try:
        split = diversity_split(ctx.acceptor, SplitProperty(job.split_property), job.train_size,
                                seed=cell_seed(master, f"split/{split_id}"))
        train_set, test = split.apply(ctx.acceptor)
        split_info = {
            'train_sha256': ids_digest(split.train_ids),
            'test_sha256': ids_digest(split.test_ids),
            'n_train': len(split.train_ids),
            'n_test': len(split.test_ids),
        }
        model_seed = cell_seed(master, job.cell_id)
        records = [_ARMS[kind](ctx, job, train_set, test, model_seed) for kind in job.kinds]
        return CellResult(cell_id=job.cell_id, records=records, split=split_info)
    except Exception as e:
        logger.warning("Cell %s failed: %s: %s", job.cell_id, type(e).__name__, e)
        return CellResult(cell_id=job.cell_id, failure=f"{type(e).__name__}: {e}")


_worker_context: Optional[CellContext] = None


def _init_worker(ctx: CellContext) -> None:
    global _worker_context
    _worker_context = ctx


def _run_in_worker(job: CellJob) -> CellResult:
    return run_cell(_worker_context, job)


def run_cells(ctx: CellContext, jobs: Sequence[CellJob], workers: int = 1) -> List[CellResult]:
    """Run cells serially or in a process pool; results come back sorted by cell id"""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            results = list(pool.map(_run_in_worker, jobs))
    else:
        results = [run_cell(ctx, job) for job in jobs]
    return sorted(results, key=lambda r: r.cell_id)


def merge_results(report: RunReport, results: Sequence[CellResult]) -> None:
    for result in results:
        if result.failure is not None:
            report.add_failure(result.cell_id, result.failure)
            continue
        report.records.extend(result.records)
        if result.split is not None:
            report.splits[result.cell_id] = result.split


def median_table(records: Sequence[Dict[str, Any]], kind: str, group_key: str) -> Dict[str, float]:
    """Median metric of one model kind per value of group_key"""
    groups: Dict[str, List[float]] = {}
    for record in records:
        if record['model_kind'] == kind:
            groups.setdefault(str(record[group_key]), []).append(record['value'])
    return {key: _median(values) for key, values in sorted(groups.items())}


# ---------------------------------------------------------------------------
# Runner

class ExperimentRunner:
    """Runs the study designs behind each CLI subcommand"""

    def __init__(self, experiment: ExperimentConfig):
        """
        Initialize runner

        Args:
            experiment: Resolved experiment configuration
        """
        self.experiment = experiment
        self.out_dir = Path(experiment.out_dir)
        self._datasets: Dict[str, Dataset] = {}

    # Data
    def dataset(self, side: str) -> Dataset:
        """Donor or acceptor dataset, loaded once per runner"""
        if side not in self._datasets:
            self._datasets[side] = load_source(
                str(self.experiment.get(f'{side}.source')),
                name=side,
                threshold=self.experiment.get(f'{side}.binarize_threshold'),
                positive_when=self.experiment.get(f'{side}.positive_when', '>='),
            )
        return self._datasets[side]

    def _new_report(self, command: str) -> RunReport:
        return RunReport(command=command, config=self.experiment.echo())

    def _save_donor(self, donor: DonorModel, report: RunReport) -> None:
        archive_path = save_archive(donor.archive, self.out_dir / f"{donor.key}.weights.json")
        log_path = write_loss_history(donor.loss_history, self.out_dir / f"{donor.key}_training_log.csv")
        report.artifacts[f"{donor.key}_archive"] = str(archive_path)
        report.artifacts[f"{donor.key}_training_log"] = str(log_path)

    def _donor_holdout(self) -> Tuple[Dataset, Optional[Dataset]]:
        fraction = float(self.experiment.get('donor.holdout', 0.2))
        return holdout_split(self.dataset('donor'), fraction, cell_seed(self.experiment.master_seed, 'donor/holdout'))

    # train-donor
    def train_donor(self) -> Tuple[RunReport, DonorModel]:
        """Train the donor on its training slice, score the holdout slice, archive the weights"""
        report = self._new_report('train-donor')
        train_set, holdout = self._donor_holdout()
        seed = cell_seed(self.experiment.master_seed, 'donor')
        donor = fit_donor(self.experiment, train_set, 'donor', seed)

        if holdout is not None:
            model = _model_from_archive(donor.archive)
            try:
                donor.holdout = _evaluate(holdout, predict(model, holdout.graphs))
                report.records.append({
                    'cell_id': 'donor',
                    'model_kind': 'donor',
                    'metric': donor.holdout.metric_name.value,
                    'value': donor.holdout.value,
                    'n_test': donor.holdout.n,
                    'train_size': len(train_set),
                    'split_property': 'holdout',
                    'seed': seed,
                })
            except GraftError as e:
                report.add_failure('donor/holdout', e)

        self._save_donor(donor, report)
        report.summary = {
            'n_train': len(train_set),
            'n_holdout': len(holdout) if holdout is not None else 0,
            'final_loss': donor.loss_history[-1],
        }
        return report, donor

    def _resolve_donor(self, archive_path: Optional[str], report: RunReport) -> WeightArchive:
        if archive_path:
            report.artifacts['donor_archive'] = str(archive_path)
            return load_archive(archive_path)
        train_set, _ = self._donor_holdout()
        donor = fit_donor(self.experiment, train_set, 'donor', cell_seed(self.experiment.master_seed, 'donor'))
        self._save_donor(donor, report)
        return donor.archive

    def _jobs(self, kinds: Tuple[str, ...], properties: Sequence[SplitProperty],
              train_sizes: Sequence[int], donor_key: Optional[str] = 'donor') -> List[CellJob]:
        jobs = []
        for size in train_sizes:
            for prop in properties:
                for seed in self.experiment.seeds:
                    cell_id = split_cell_id(size, prop.value, seed)
                    if donor_key is not None and donor_key != 'donor':
                        cell_id = f"{donor_key}/{cell_id}"
                    jobs.append(CellJob(cell_id, size, prop.value, seed, kinds, donor_key))
        return jobs

    # compare
    def compare(self, archive_path: Optional[str] = None) -> RunReport:
        """Pure GCNN, transfer GCNN and random forest on identical splits"""
        report = self._new_report('compare')
        archive = self._resolve_donor(archive_path, report)
        ctx = CellContext(self.experiment, self.dataset('acceptor'), {'donor': archive})
        jobs = self._jobs(MODEL_KINDS, self.experiment.split_properties, self.experiment.train_sizes)
        merge_results(report, run_cells(ctx, jobs, self.experiment.jobs))

        report.summary = {
            kind: _median_by_size(report.records, kind) for kind in MODEL_KINDS
        }
        return report

    # donor-size-sweep
    def donor_size_sweep(self) -> RunReport:
        """One donor per nested subsample size, transfer arm per donor"""
        report = self._new_report('donor-size-sweep')
        master = self.experiment.master_seed
        donor_pool = self.dataset('donor')
        subsets = nested_subsamples(donor_pool, self.experiment.donor_sizes, cell_seed(master, 'donor/sweep'))

        archives = {}
        for size, subset in subsets.items():
            key = f"donor-n{size}"
            donor = fit_donor(self.experiment, subset, key, cell_seed(master, f"donor/{key}"))
            self._save_donor(donor, report)
            archives[key] = donor.archive
            report.series.setdefault('donor_sets', {})[str(size)] = ids_digest(sorted(subset.ids))

        ctx = CellContext(self.experiment, self.dataset('acceptor'), archives)
        jobs = []
        for key in archives:
            jobs.extend(self._jobs(('transfer',), self.experiment.split_properties,
                                   self.experiment.train_sizes, donor_key=key))
        merge_results(report, run_cells(ctx, jobs, self.experiment.jobs))

        medians: Dict[str, Dict[str, float]] = {}
        for size in self.experiment.train_sizes:
            per_donor = {}
            for donor_size in sorted(subsets):
                values = [r['value'] for r in report.records
                          if r['train_size'] == size and r['donor'] == f"donor-n{donor_size}"]
                if values:
                    per_donor[str(donor_size)] = _median(values)
            medians[f"n{size}"] = per_donor
        report.series['transfer_median'] = medians
        return report

    # rank-splitters
    def rank_splitters(self, archive_path: Optional[str] = None,
                       properties: Optional[Sequence[str]] = None) -> RunReport:
        """Sum of places of each splitting property across seeds, per train size"""
        report = self._new_report('rank-splitters')
        if properties:
            props = [SplitProperty(p) for p in properties]
        elif len(self.experiment.split_properties) >= 2:
            props = self.experiment.split_properties
        else:
            props = [SplitProperty(name) for name in DESCRIPTOR_NAMES]
        if len(props) < 2:
            raise ConfigError("rank-splitters needs at least two split properties")

        archive = self._resolve_donor(archive_path, report)
        ctx = CellContext(self.experiment, self.dataset('acceptor'), {'donor': archive})
        merge_results(report, run_cells(ctx, self._jobs(('transfer',), props, self.experiment.train_sizes),
                                        self.experiment.jobs))

        for size in self.experiment.train_sizes:
            table: Dict[str, List[float]] = {}
            missing = False
            for prop in props:
                by_seed = {r['seed']: r['value'] for r in report.records
                           if r['train_size'] == size and r['split_property'] == prop.value}
                if len(by_seed) != len(self.experiment.seeds):
                    missing = True
                    break
                table[prop.value] = [by_seed[s] for s in self.experiment.seeds]
            if missing:
                report.add_failure(f"rank/n{size:04d}", "incomplete cells; rank sums skipped")
                continue
            report.rank_sums[f"n{size}"] = rank_sum_table(table)
        return report

    # ad-report
    def ad_report(self) -> RunReport:
        """Test-set coverage of the acceptor AD alone and of the acceptor-or-donor union"""
        report = self._new_report('ad-report')
        experiment = self.experiment
        radius = int(experiment.get('appdomain.radius', 2))
        n_bits = int(experiment.get('appdomain.n_bits', 2048))
        k = int(experiment.get('appdomain.k', 5))
        strict = bool(experiment.get('appdomain.strict', True))

        donor_train, _ = self._donor_holdout()
        donor_ad = fit_ad_fingerprints([ecfp(mol, radius, n_bits) for mol in donor_train.graphs], k=k, strict=strict)
        acceptor = self.dataset('acceptor')
        acceptor_fps = {record.id: ecfp(mol, radius, n_bits) for record, mol in zip(acceptor.records, acceptor.graphs)}

        for job in self._jobs((), experiment.split_properties, experiment.train_sizes):
            try:
                split = diversity_split(acceptor, SplitProperty(job.split_property), job.train_size,
                                        seed=cell_seed(experiment.master_seed, f"split/{job.cell_id}"))
                acceptor_ad = fit_ad_fingerprints([acceptor_fps[i] for i in split.train_ids], k=k, strict=strict)
                test_fps = [acceptor_fps[i] for i in split.test_ids]
                in_acceptor, d_acceptor = query_fingerprints(acceptor_ad, test_fps)
                in_donor, d_donor = query_fingerprints(donor_ad, test_fps)
            except GraftError as e:
                report.add_failure(job.cell_id, e)
                continue

            acceptor_coverage = float(in_acceptor.mean())
            union_coverage = float((in_acceptor | in_donor).mean())
            report.ad_records.append({
                'cell_id': job.cell_id,
                'train_size': job.train_size,
                'split_property': job.split_property,
                'seed': job.seed,
                'acceptor_coverage': acceptor_coverage,
                'union_coverage': union_coverage,
                'delta_coverage': union_coverage - acceptor_coverage,
                'molecules': [
                    {'id': mol_id, 'in_acceptor_ad': bool(a), 'in_donor_ad': bool(d),
                     'd_acceptor': float(da), 'd_donor': float(dd)}
                    for mol_id, a, d, da, dd in zip(split.test_ids, in_acceptor, in_donor, d_acceptor, d_donor)
                ],
            })
            report.splits[job.cell_id] = {
                'train_sha256': ids_digest(split.train_ids),
                'test_sha256': ids_digest(split.test_ids),
                'n_train': len(split.train_ids),
                'n_test': len(split.test_ids),
            }

        report.summary = {
            'donor_d_train': donor_ad.d_train,
            'median_delta_coverage': _median([r['delta_coverage'] for r in report.ad_records]),
        }
        return report

    # pca
    def _joint_projection(self, a: Dataset, b: Dataset):
        radius = int(self.experiment.get('pca.radius', 2))
        n_bits = int(self.experiment.get('pca.n_bits', 2048))
        X = fingerprint_matrix([ecfp(mol, radius, n_bits) for mol in list(a.graphs) + list(b.graphs)])
        ids = [f"{a.name}:{i}" for i in a.ids] + [f"{b.name}:{i}" for i in b.ids]
        projection = pca_fit_matrix(ids, X, max_iter=int(self.experiment.get('pca.max_iter', 1000)),
                                    tol=float(self.experiment.get('pca.tol', 1e-9)))
        coords = [(x, y) for _, x, y in projection.points]
        points_a = [(i, x, y) for i, (x, y) in zip(a.ids, coords[:len(a)])]
        points_b = [(i, x, y) for i, (x, y) in zip(b.ids, coords[len(a):])]
        return projection, points_a, points_b

    def pca(self, a_source: Optional[str] = None, b_source: Optional[str] = None) -> RunReport:
        """Joint fingerprint PCA of two datasets, with optional box filters"""
        report = self._new_report('pca')
        a = load_source(a_source, name='A') if a_source else self.dataset('donor')
        b = load_source(b_source, name='B') if b_source else self.dataset('acceptor')
        if a.name == b.name:
            b = b.with_records(b.records, name=f"{b.name}-2")
        projection, points_a, points_b = self._joint_projection(a, b)

        rows = [(a.name, i, x, y) for i, x, y in points_a] + [(b.name, i, x, y) for i, x, y in points_b]
        csv_path = self.out_dir / 'pca_projection.csv'
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=['dataset', 'id', 'x', 'y']).to_csv(csv_path, index=False)
        report.artifacts['projection'] = str(csv_path)

        max_n = int(self.experiment.get('pca.max_n', 500))
        for index, box in enumerate(self.experiment.get('pca.boxes', []) or []):
            for dataset, points in ((a, points_a), (b, points_b)):
                entry = {'box': [float(v) for v in box], 'dataset': dataset.name, 'n': 0}
                try:
                    region = filter_by_pca_box(dataset, points, tuple(box), max_n,
                                               seed=cell_seed(self.experiment.master_seed, f"pca/box{index}"),
                                               name=f"{dataset.name}-box{index}")
                except EmptyRegion:
                    logger.warning("Box %d holds no %s molecules", index, dataset.name)
                else:
                    path = self.out_dir / f"pca_box{index}_{dataset.name}.csv"
                    region.to_frame().to_csv(path, index=False)
                    entry['n'] = len(region)
                    report.artifacts[f"box{index}_{dataset.name}"] = str(path)
                report.regions.append(entry)

        report.summary = {
            'n_points': len(projection.points),
            'explained_variance': [float(v) for v in projection.explained_variance],
            'datasets': {a.name: len(a), b.name: len(b)},
        }
        return report

    # region-sweep
    def _band_boxes(self, points_donor) -> List[Tuple[float, float, float, float]]:
        bands = int(self.experiment.get('region_sweep.bands', 3))
        xs = np.array([x for _, x, _ in points_donor])
        ys = np.array([y for _, _, y in points_donor])
        boxes = []
        for chunk in np.array_split(np.argsort(xs, kind='stable'), bands):
            if len(chunk):
                boxes.append((float(xs[chunk].min()), float(xs[chunk].max()),
                              float(ys[chunk].min()), float(ys[chunk].max())))
        return boxes

    def region_sweep(self) -> RunReport:
        """Donors drawn from PCA regions of increasing acceptor overlap, plus one random donor"""
        report = self._new_report('region-sweep')
        experiment = self.experiment
        master = experiment.master_seed
        donor_pool, acceptor = self.dataset('donor'), self.dataset('acceptor')
        _, points_donor, points_acceptor = self._joint_projection(donor_pool, acceptor)

        configured = experiment.get('pca.boxes', []) or []
        boxes = [tuple(float(v) for v in box) for box in configured] or self._band_boxes(points_donor)

        def overlap(box):
            xmin, xmax, ymin, ymax = box
            inside = [xmin <= x <= xmax and ymin <= y <= ymax for _, x, y in points_acceptor]
            return float(np.mean(inside))

        ranked = sorted(enumerate(boxes), key=lambda item: (overlap(item[1]), item[0]))
        region_size = int(experiment.get('region_sweep.region_size', 500))
        archives: Dict[str, WeightArchive] = {}

        for rank, (_, box) in enumerate(ranked, start=1):
            key = f"region-{rank}"
            try:
                subset = filter_by_pca_box(donor_pool, points_donor, box, region_size,
                                           seed=cell_seed(master, f"region/{key}"), name=key)
            except EmptyRegion as e:
                report.add_failure(key, e)
                continue
            donor = fit_donor(experiment, subset, key, cell_seed(master, f"donor/{key}"))
            self._save_donor(donor, report)
            archives[key] = donor.archive
            report.regions.append({'name': key, 'box': list(box), 'acceptor_overlap': overlap(box),
                                   'n_donor': len(subset)})

        random_size = min(region_size, len(donor_pool))
        random_subset = nested_subsamples(donor_pool, [random_size], cell_seed(master, 'region/random'))[random_size]
        donor = fit_donor(experiment, random_subset, 'region-random', cell_seed(master, 'donor/region-random'))
        self._save_donor(donor, report)
        archives['region-random'] = donor.archive
        report.regions.append({'name': 'region-random', 'box': None, 'acceptor_overlap': None,
                               'n_donor': len(random_subset)})

        train_size = int(experiment.get('region_sweep.train_size', 20))
        ctx = CellContext(experiment, acceptor, archives)
        jobs = []
        for key in archives:
            jobs.extend(self._jobs(('transfer',), experiment.split_properties[:1], [train_size], donor_key=key))
        merge_results(report, run_cells(ctx, jobs, experiment.jobs))

        medians = median_table(report.records, 'transfer', 'donor')
        for region in report.regions:
            region['median_metric'] = medians.get(region['name'])
        return report


def _median_by_size(records: Sequence[Dict[str, Any]], kind: str) -> Dict[str, float]:
    return {f"n{key}": value for key, value in median_table(records, kind, 'train_size').items()}


def _model_from_archive(archive: WeightArchive):
    """Donor model rebuilt from its own archive (every layer copied)"""
    plan = TransferPlan(copied_layers=frozenset(range(len(archive.layers))),
                        mode=TransferMode.FINE_TUNING, reinit_head=False)
    return import_weights(archive, archive.specs, plan, seed=int(archive.metadata.get('seed', 0)))
