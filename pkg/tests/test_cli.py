# tests/test_cli.py
import json

import pandas as pd
import pytest

from cli.main import create_parser, main


@pytest.fixture
def settings_file(tmp_path, corpora_dir):
    path = tmp_path / 'tiny.conf'
    path.write_text(f"""
donor.source = {corpora_dir / 'donor_small.csv'}
acceptor.source = {corpora_dir / 'acceptor_small.csv'}
experiment.seeds = [0]
experiment.train_sizes = [5]
model.graph_conv = [8]
model.dense = [8]
training.epochs = 2
training.donor_epochs = 2
forest.n_trees = 3
forest.n_bits = 256
""")
    return path


def test_no_command_prints_help():
    assert main([]) == 1


def test_parser_knows_every_command():
    parser = create_parser()
    argv = {
        'generate': ['generate', '--output', 'y.csv'],
        'featurize': ['featurize', 'x.csv', '--output', 'y.csv'],
    }
    for command in ('config', 'generate', 'featurize', 'train-donor', 'compare', 'donor-size-sweep',
                    'rank-splitters', 'ad-report', 'pca', 'region-sweep'):
        assert parser.parse_args(argv.get(command, [command])).command == command


def test_config_command(settings_file, capsys):
    assert main(['config', '--config', str(settings_file)]) == 0
    out = capsys.readouterr().out
    assert 'training.epochs = 2' in out
    assert '✅ Configuration is valid' in out


def test_generate_and_featurize(tmp_path):
    corpus = tmp_path / 'gen.csv'
    assert main(['generate', '--n', '25', '--seed', '3', '--target', 'acceptor_related',
                 '--output', str(corpus)]) == 0
    frame = pd.read_csv(corpus)
    assert list(frame.columns) == ['id', 'smiles', 'target']
    assert len(frame) == 25

    descriptors = tmp_path / 'desc.csv'
    assert main(['featurize', str(corpus), '--output', str(descriptors)]) == 0
    table = pd.read_csv(descriptors)
    assert len(table) == 25 and 'tpsa' in table.columns

    bits = tmp_path / 'bits.csv'
    assert main(['featurize', str(corpus), '--kind', 'ecfp', '--n-bits', '128', '--output', str(bits)]) == 0
    assert set(pd.read_csv(bits)['n_bits']) == {128}


def test_generate_rejects_unknown_target(tmp_path):
    assert main(['generate', '--n', '5', '--target', 'nonsense', '--output', str(tmp_path / 'x.csv')]) == 1


def test_compare_writes_report(settings_file, tmp_path):
    out_dir = tmp_path / 'run'
    code = main(['compare', '--config', str(settings_file), '--out-dir', str(out_dir), '--seed', '5'])
    assert code == 0
    report = json.loads((out_dir / 'compare.report.json').read_text())
    assert report['command'] == 'compare'
    assert report['config']['experiment']['seed'] == 5
    assert len(report['records']) == 3
    assert (out_dir / 'donor.weights.json').exists()


def test_flags_override_settings(settings_file, tmp_path):
    out_dir = tmp_path / 'run'
    code = main(['train-donor', '--config', str(settings_file), '--out-dir', str(out_dir), '--epochs', '1',
                 '--seeds', '3,4'])
    assert code == 0
    report = json.loads((out_dir / 'train-donor.report.json').read_text())
    assert report['config']['experiment']['seeds'] == [3, 4]
    assert report['config']['training']['epochs'] == 1


def test_bad_configuration_exits_nonzero(settings_file, tmp_path, capsys):
    code = main(['compare', '--config', str(settings_file), '--out-dir', str(tmp_path),
                 '--split-properties', 'colour'])
    assert code == 1
    assert 'Unknown split property' in capsys.readouterr().out
