#!/usr/bin/env python3
"""
graft - CLI Interface
Command dispatcher for the GCNN transfer-learning toolkit.
One job: route commands to appropriate handlers.
"""

import argparse
import sys
from pathlib import Path

# Add parent directory to path so we can import our modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from cli.data_commands import cmd_config, cmd_featurize, cmd_generate
from cli.experiment_commands import (cmd_ad_report, cmd_compare, cmd_donor_size_sweep, cmd_pca,
                                     cmd_rank_splitters, cmd_region_sweep, cmd_train_donor)


def _common_parser() -> argparse.ArgumentParser:
    """Flags shared by every experiment command"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Settings file (key = value lines)')
    common.add_argument('--seed', type=int, help='Master seed (overrides GRAFT_SEED and settings)')
    common.add_argument('--out-dir', help='Directory for reports, archives and CSV exports')
    common.add_argument('--jobs', type=int, help='Worker processes for independent cells')
    common.add_argument('--donor', help="Donor dataset CSV or 'gen:' spec")
    common.add_argument('--acceptor', help="Acceptor dataset CSV or 'gen:' spec")
    common.add_argument('--train-sizes', help='Comma-separated acceptor train sizes')
    common.add_argument('--seeds', help='Comma-separated repetition seeds')
    common.add_argument('--split-properties', help='Comma-separated split properties')
    common.add_argument('--mode', choices=['feature_extraction', 'fine_tuning'], help='Transfer mode')
    common.add_argument('--epochs', type=int, help='Acceptor training epochs')
    common.add_argument('--log-level', help='Logging level (default: LOG_LEVEL or INFO)')
    common.add_argument('--log-file', action='store_true', help='Also log to data/logs/graft.log')
    return common


def create_parser():
    """Create command line argument parser"""
    parser = argparse.ArgumentParser(
        description='graft - transfer learning for molecular property GCNNs',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  graft config                                  # Show effective configuration
  graft generate --n 2000 --target donor_default --output data/donor.csv
  graft train-donor --out-dir runs/donor        # Train donor, write weight archive
  graft compare --archive runs/donor/donor.weights.json --jobs 4
  graft donor-size-sweep --seeds 0,1,2,3,4
  graft rank-splitters --properties molecular_weight,tpsa,hba
  graft ad-report                               # Coverage with and without the donor AD
  graft pca --a data/donor.csv --b data/acceptor.csv
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands')
    common = _common_parser()

    # Configuration
    config_parser = subparsers.add_parser('config', help='Show current configuration')
    config_parser.add_argument('--config', help='Settings file (key = value lines)')
    config_parser.add_argument('--env-template', action='store_true', help='Write config/.env.example')

    # Data commands
    generate_parser = subparsers.add_parser('generate', help='Generate a synthetic labeled corpus')
    generate_parser.add_argument('--spec', help="Full generator spec, e.g. 'gen:n=500,seed=3,target=acceptor_related'")
    generate_parser.add_argument('--n', type=int, default=2000, help='Number of molecules (default: 2000)')
    generate_parser.add_argument('--seed', type=int, default=0, help='Generator seed (default: 0)')
    generate_parser.add_argument('--target', default='donor_default', help='Endpoint formula (default: donor_default)')
    generate_parser.add_argument('--noise', type=float, default=0.0, help='Gaussian noise sd (default: 0)')
    generate_parser.add_argument('--max-atoms', type=int, default=12, help='Heavy-atom cap (default: 12)')
    generate_parser.add_argument('--output', required=True, help='Output CSV path')

    featurize_parser = subparsers.add_parser('featurize', help='Descriptors or fingerprints to CSV')
    featurize_parser.add_argument('input', help='Dataset CSV (id,smiles,target)')
    featurize_parser.add_argument('--kind', choices=['descriptors', 'ecfp'], default='descriptors',
                                  help='Feature kind (default: descriptors)')
    featurize_parser.add_argument('--radius', type=int, default=2, help='ECFP radius (default: 2)')
    featurize_parser.add_argument('--n-bits', type=int, default=2048, help='ECFP width (default: 2048)')
    featurize_parser.add_argument('--output', required=True, help='Output CSV path')

    # Experiment commands
    subparsers.add_parser('train-donor', parents=[common], help='Train the donor model and archive its weights')

    compare_parser = subparsers.add_parser('compare', parents=[common],
                                           help='Pure GCNN vs transfer GCNN vs random forest')
    compare_parser.add_argument('--archive', help='Donor weight archive (trained on the fly when omitted)')

    sweep_parser = subparsers.add_parser('donor-size-sweep', parents=[common],
                                         help='Transfer quality across donor sizes')
    sweep_parser.add_argument('--donor-sizes', help='Comma-separated nested donor sizes')

    rank_parser = subparsers.add_parser('rank-splitters', parents=[common],
                                        help='Sum of places of splitting properties')
    rank_parser.add_argument('--archive', help='Donor weight archive (trained on the fly when omitted)')
    rank_parser.add_argument('--properties', help='Comma-separated properties (default: the seven descriptors)')

    subparsers.add_parser('ad-report', parents=[common], help='Applicability-domain coverage report')

    pca_parser = subparsers.add_parser('pca', parents=[common], help='Joint PCA projection of two datasets')
    pca_parser.add_argument('--a', help="First dataset (default: donor source)")
    pca_parser.add_argument('--b', help="Second dataset (default: acceptor source)")

    subparsers.add_parser('region-sweep', parents=[common], help='Donors drawn from PCA regions')

    return parser


def main(argv=None):
    """Main CLI entry point"""
    parser = create_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    # Command mapping
    commands = {
        'config': cmd_config,
        'generate': cmd_generate,
        'featurize': cmd_featurize,
        'train-donor': cmd_train_donor,
        'compare': cmd_compare,
        'donor-size-sweep': cmd_donor_size_sweep,
        'rank-splitters': cmd_rank_splitters,
        'ad-report': cmd_ad_report,
        'pca': cmd_pca,
        'region-sweep': cmd_region_sweep,
    }

    if args.command in commands:
        try:
            return commands[args.command](args)
        except KeyboardInterrupt:
            print("\n⏹️ Operation cancelled by user")
            return 130
        except Exception as e:
            print(f"\n❌ Unexpected error: {e}")
            import traceback
            traceback.print_exc()
            return 1
    else:
        print(f"❌ Unknown command: {args.command}")
        parser.print_help()
        return 1


if __name__ == "__main__":
    sys.exit(main())
