# cli/experiment_commands.py
"""
CLI commands for the transfer-learning study designs.
One job: resolve configuration for a run, hand it to ExperimentRunner, write and summarize the report.
"""

import dataclasses
import logging
from pathlib import Path
from typing import Callable, Optional

from core.experiment_runner import MODEL_KINDS, ExperimentConfig, ExperimentRunner
from core.report import RunReport, write_report
from utils.config import get_config
from utils.errors import GraftError
from utils.log_setup import setup_logging

logger = logging.getLogger(__name__)


def _csv_ints(text: Optional[str]):
    return [int(part) for part in text.split(',') if part.strip()] if text else None


def _csv_strings(text: Optional[str]):
    return [part.strip() for part in text.split(',') if part.strip()] if text else None


def load_experiment(args) -> ExperimentConfig:
    """
    Resolve settings for one command: defaults < settings file < environment < flags

    Args:
        args: Parsed command-line namespace

    Returns:
        Validated ExperimentConfig
    """
    config = get_config(settings_file=getattr(args, 'config', None), reload=True)
    config.apply_overrides({
        'donor.source': getattr(args, 'donor', None),
        'acceptor.source': getattr(args, 'acceptor', None),
        'experiment.train_sizes': _csv_ints(getattr(args, 'train_sizes', None)),
        'experiment.donor_sizes': _csv_ints(getattr(args, 'donor_sizes', None)),
        'experiment.seeds': _csv_ints(getattr(args, 'seeds', None)),
        'experiment.split_properties': _csv_strings(getattr(args, 'split_properties', None)),
        'transfer.mode': getattr(args, 'mode', None),
        'training.epochs': getattr(args, 'epochs', None),
    })
    setup_logging(getattr(args, 'log_level', None) or config.log_level,
                  log_file=config.logs_dir / 'graft.log' if getattr(args, 'log_file', False) else None)

    experiment = ExperimentConfig.from_config(config)
    flags = {
        'master_seed': getattr(args, 'seed', None),
        'out_dir': Path(args.out_dir) if getattr(args, 'out_dir', None) else None,
        'jobs': getattr(args, 'jobs', None),
    }
    return dataclasses.replace(experiment, **{k: v for k, v in flags.items() if v is not None})


def _finish(report: RunReport, experiment: ExperimentConfig) -> int:
    """Write the report and print the shared footer; exit code 0 iff no failed cell"""
    path = write_report(report, Path(experiment.out_dir) / f"{report.command}.report.json")

    print(f"\n📄 Report: {path}")
    for name, artifact in sorted(report.artifacts.items()):
        print(f"   {name}: {artifact}")

    if report.failures:
        print(f"\n⚠️ {len(report.failures)} failed cell(s):")
        for failure in report.failures[:10]:
            print(f"   {failure['cell_id']}: {failure['error']}")
        if len(report.failures) > 10:
            print(f"   ... and {len(report.failures) - 10} more")
        return 1

    print(f"\n✅ {report.command} completed ({len(report.records)} metric records)")
    return 0


def _run(args, banner: str, action: Callable[[ExperimentRunner], RunReport],
         show: Callable[[RunReport], None]) -> int:
    print(banner)
    print("=" * 40)

    try:
        experiment = load_experiment(args)
        print(f"🎲 Master seed: {experiment.master_seed}   Workers: {experiment.jobs}")
        print(f"📁 Output: {experiment.out_dir}")
        report = action(ExperimentRunner(experiment))
        show(report)
        return _finish(report, experiment)
    except GraftError as e:
        print(f"\n❌ {e}")
        return 1


def _show_medians(report: RunReport) -> None:
    print("\n📊 Median metric by train size:")
    for kind in MODEL_KINDS:
        medians = report.summary.get(kind) or {}
        if medians:
            row = '  '.join(f"{size}={value:.3f}" for size, value in medians.items())
            print(f"   {kind:<14} {row}")


def cmd_train_donor(args):
    """Train the donor GCNN and write its weight archive"""
    def show(report: RunReport) -> None:
        summary = report.summary
        print(f"\n🧪 Donor trained on {summary['n_train']:,} molecules "
              f"(final loss {summary['final_loss']:.4f})")
        for record in report.records:
            print(f"   Holdout {record['metric']}: {record['value']:.3f} on {record['n_test']} molecules")

    return _run(args, "🧬 Train Donor Model", lambda runner: runner.train_donor()[0], show)


def cmd_compare(args):
    """Pure GCNN vs transfer GCNN vs random forest on shared splits"""
    return _run(args, "⚖️ Transfer vs Pure vs Random Forest",
                lambda runner: runner.compare(archive_path=args.archive), _show_medians)


def cmd_donor_size_sweep(args):
    """Transfer quality as a function of donor dataset size"""
    def show(report: RunReport) -> None:
        print("\n📈 Median transfer metric by donor size:")
        for train_size, series in report.series.get('transfer_median', {}).items():
            row = '  '.join(f"{donor}={value:.3f}" for donor, value in series.items())
            print(f"   {train_size:<6} {row}")

    return _run(args, "📏 Donor Size Sweep", lambda runner: runner.donor_size_sweep(), show)


def cmd_rank_splitters(args):
    """Sum of places of each splitting property"""
    def show(report: RunReport) -> None:
        for train_size, table in report.rank_sums.items():
            print(f"\n🏅 Sum of places at {train_size} (lower is better):")
            for prop, total in sorted(table.items(), key=lambda item: (item[1], item[0])):
                print(f"   {prop:<18} {total:g}")

    properties = _csv_strings(args.properties)
    return _run(args, "🏁 Rank Splitting Properties",
                lambda runner: runner.rank_splitters(archive_path=args.archive, properties=properties), show)


def cmd_ad_report(args):
    """Applicability-domain coverage with and without the donor"""
    def show(report: RunReport) -> None:
        print("\n🎯 Test-set coverage (acceptor AD → acceptor or donor AD):")
        for record in report.ad_records:
            print(f"   {record['cell_id']:<28} {record['acceptor_coverage']:.1%} → "
                  f"{record['union_coverage']:.1%}  (+{record['delta_coverage']:.1%})")
        median = report.summary.get('median_delta_coverage')
        if median is not None:
            print(f"\n   Median Δcoverage: {median:.1%}")

    return _run(args, "🗺️ Applicability Domain Report", lambda runner: runner.ad_report(), show)


def cmd_pca(args):
    """Joint PCA projection of two datasets"""
    def show(report: RunReport) -> None:
        summary = report.summary
        print(f"\n🔭 Projected {summary['n_points']:,} molecules")
        variance = summary['explained_variance']
        print(f"   Component variance: PC1={variance[0]:.4f}  PC2={variance[1]:.4f}")
        for region in report.regions:
            status = '✅' if region['n'] else '⚠️'
            print(f"   {status} box {region['box']} in {region['dataset']}: {region['n']} molecules")

    return _run(args, "🔭 Chemical Space PCA", lambda runner: runner.pca(args.a, args.b), show)


def cmd_region_sweep(args):
    """Donors drawn from PCA regions of the donor pool"""
    def show(report: RunReport) -> None:
        print("\n🧭 Donor regions (by acceptor overlap):")
        for region in report.regions:
            overlap = region.get('acceptor_overlap')
            overlap_text = f"{overlap:.1%}" if overlap is not None else '  n/a'
            metric = region.get('median_metric')
            metric_text = f"{metric:.3f}" if metric is not None else 'n/a'
            print(f"   {region['name']:<14} overlap {overlap_text:>6}  donors {region['n_donor']:>5}  "
                  f"median {metric_text}")

    return _run(args, "🧭 Donor Region Sweep", lambda runner: runner.region_sweep(), show)
