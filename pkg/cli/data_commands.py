# cli/data_commands.py
"""
CLI commands for datasets: synthetic generation, featurization and configuration display.
One job: move molecules between generators, CSV files and feature tables.
"""

import logging
from pathlib import Path

import pandas as pd

from core.datasets import RecordError, read_dataset_csv, write_dataset_csv
from core.fingerprint import ecfp
from core.molgraph import DESCRIPTOR_NAMES, compute_descriptors
from modules.datagen import GENERATOR_PREFIX, generate_dataset
from utils.config import flatten_settings, get_config
from utils.errors import GraftError
from utils.log_setup import setup_logging

logger = logging.getLogger(__name__)


def _generator_spec(args) -> str:
    if args.spec:
        return args.spec if args.spec.startswith(GENERATOR_PREFIX) else f"{GENERATOR_PREFIX}{args.spec}"
    fields = [f"n={args.n}", f"seed={args.seed}", f"target={args.target}", f"noise={args.noise}",
              f"max_atoms={args.max_atoms}"]
    return GENERATOR_PREFIX + ','.join(fields)


def cmd_generate(args):
    """Generate a labeled synthetic corpus"""
    print("🧪 Generate Synthetic Corpus")
    print("=" * 40)
    setup_logging(get_config().log_level)

    try:
        spec = _generator_spec(args)
        print(f"⚙️ Source: {spec}")
        dataset = generate_dataset(spec, name=Path(args.output).stem)
        path = write_dataset_csv(dataset, args.output)
    except (GraftError, ValueError) as e:
        print(f"\n❌ {e}")
        return 1

    targets = dataset.targets
    print(f"\n✅ Wrote {len(dataset):,} molecules to {path}")
    print(f"   Target range: {targets.min():.3f} .. {targets.max():.3f} (mean {targets.mean():.3f})")
    return 0


def featurize_frame(dataset, kind: str, radius: int = 2, n_bits: int = 2048) -> pd.DataFrame:
    """
    Descriptor or fingerprint table for a dataset

    Args:
        dataset: Parsed dataset
        kind: 'descriptors' (seven columns) or 'ecfp' (space-separated on-bit indices)
        radius: Fingerprint radius
        n_bits: Fingerprint width

    Returns:
        DataFrame keyed by record id, in dataset order
    """
    rows = []
    for record, mol in zip(dataset.records, dataset.graphs):
        try:
            if kind == 'descriptors':
                rows.append({'id': record.id, **compute_descriptors(mol).as_dict()})
            else:
                fp = ecfp(mol, radius, n_bits)
                rows.append({'id': record.id, 'n_bits': n_bits, 'on_bits': ' '.join(map(str, fp.on_bits))})
        except GraftError as e:
            raise RecordError(record.id, e) from e

    columns = ['id', *DESCRIPTOR_NAMES] if kind == 'descriptors' else ['id', 'n_bits', 'on_bits']
    return pd.DataFrame(rows, columns=columns)


def cmd_featurize(args):
    """Write descriptors or fingerprints of a dataset CSV"""
    print("🔬 Featurize Dataset")
    print("=" * 40)
    setup_logging(get_config().log_level)

    try:
        dataset = read_dataset_csv(args.input)
        frame = featurize_frame(dataset, args.kind, radius=args.radius, n_bits=args.n_bits)
    except GraftError as e:
        print(f"\n❌ {e}")
        return 1

    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output, index=False)
    print(f"✅ Wrote {args.kind} for {len(frame):,} molecules to {output}")
    return 0


def cmd_config(args):
    """Show the effective configuration"""
    print("⚙️ graft Configuration")
    print("=" * 40)

    try:
        config = get_config(settings_file=args.config, reload=True)
    except GraftError as e:
        print(f"\n❌ {e}")
        return 1

    print(f"📁 Settings file: {config.settings_file} {'✅' if config.settings_file.exists() else '➖ (defaults)'}")
    print(f"🎲 Master seed: {config.seed}")
    print(f"👷 Workers: {config.jobs}")
    print(f"📂 Output directory: {config.out_dir}")

    section = None
    for key, value in flatten_settings(config.settings):
        head = key.split('.', 1)[0]
        if head != section:
            section = head
            print(f"\n[{section}]")
        print(f"   {key} = {value!r}")

    if args.env_template:
        print(f"\n📝 Template written: {config.create_env_template()}")

    status = config.validate_configuration()
    for warning in status['warnings']:
        print(f"\n⚠️ {warning}")
    if not status['valid']:
        print("\n❌ Configuration has problems:")
        for issue in status['issues']:
            print(f"   - {issue}")
        return 1

    print("\n✅ Configuration is valid")
    return 0
