# tests/test_datasets.py
import pytest

from core.datasets import Dataset, DatasetError, Record, RecordError, Task, read_dataset_csv, write_dataset_csv


def test_bundled_corpora_load(corpora_dir):
    donor = read_dataset_csv(corpora_dir / 'donor_small.csv')
    acceptor = read_dataset_csv(corpora_dir / 'acceptor_small.csv')
    assert len(donor) == 30
    assert len(acceptor) == 20
    assert donor.name == 'donor_small'
    assert len(donor.graphs) == 30


def test_bundled_targets_follow_their_formulas(corpora_dir):
    from modules.datagen import get_formula
    from core.molgraph import compute_descriptors

    for filename, formula in (('donor_small.csv', 'donor_default'), ('acceptor_small.csv', 'acceptor_related')):
        dataset = read_dataset_csv(corpora_dir / filename)
        fn = get_formula(formula)
        for record, mol in zip(dataset.records, dataset.graphs):
            assert fn(compute_descriptors(mol)) == pytest.approx(record.target, abs=1e-3), record.id


def test_csv_round_trip(tmp_path, small_dataset):
    path = write_dataset_csv(small_dataset, tmp_path / 'small.csv')
    loaded = read_dataset_csv(path, name='small')
    assert loaded.ids == small_dataset.ids
    assert loaded.smiles == small_dataset.smiles
    assert loaded.targets.tolist() == small_dataset.targets.tolist()


def test_duplicate_ids_rejected():
    records = (Record('a', 'CCO', 1.0), Record('a', 'CCC', 2.0))
    with pytest.raises(DatasetError):
        Dataset(records=records)


def test_classification_targets_must_be_binary():
    with pytest.raises(DatasetError):
        Dataset(records=(Record('a', 'CCO', 0.5),), task=Task.BINARY_CLASSIFICATION)


def test_missing_column_and_bad_target(tmp_path):
    bad_columns = tmp_path / 'bad.csv'
    bad_columns.write_text('id,smiles\na,CCO\n', encoding='utf-8')
    with pytest.raises(DatasetError):
        read_dataset_csv(bad_columns)

    bad_target = tmp_path / 'bad_target.csv'
    bad_target.write_text('id,smiles,target\na,CCO,high\n', encoding='utf-8')
    with pytest.raises(DatasetError):
        read_dataset_csv(bad_target)

    with pytest.raises(DatasetError):
        read_dataset_csv(tmp_path / 'missing.csv')


def test_unparseable_smiles_names_the_record():
    dataset = Dataset(records=(Record('ok', 'CCO', 1.0), Record('broken', 'C1CC', 2.0)))
    with pytest.raises(RecordError) as excinfo:
        dataset.graphs
    assert excinfo.value.record_id == 'broken'


def test_subset_keeps_dataset_order(small_dataset):
    subset = small_dataset.subset(['m05', 'm01', 'm03'])
    assert subset.ids == ['m01', 'm03', 'm05']
    with pytest.raises(DatasetError):
        small_dataset.subset(['nope'])
