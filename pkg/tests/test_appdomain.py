# tests/test_appdomain.py
import numpy as np
import pytest

from analyzers.appdomain import TooFewMolecules, ad_coverage, fit_ad, fit_ad_fingerprints, in_domain, query_fingerprints
from core.fingerprint import Fingerprint, LengthMismatch, ecfp, tanimoto_distance
from core.molgraph import parse_smiles
from modules.datagen import GenConfig, generate_molecules

from tests.conftest import SMALL_SMILES


def _brute_force(train_fps, query_fps, k, strict=True):
    k_eff = min(k, len(train_fps) - 1)
    per_train = []
    for i, a in enumerate(train_fps):
        distances = sorted(tanimoto_distance(a, b) for j, b in enumerate(train_fps) if j != i)
        per_train.append(sum(distances[:k_eff]) / k_eff)
    d_train = sum(per_train) / len(per_train)
    results = []
    for q in query_fps:
        distances = sorted(tanimoto_distance(q, b) for b in train_fps)
        d_n = sum(distances[:k_eff]) / k_eff
        results.append((d_n < d_train if strict else d_n <= d_train, d_n))
    return d_train, results


def test_matches_brute_force():
    corpus = generate_molecules(GenConfig(n_molecules=70, seed=11))
    fps = [ecfp(parse_smiles(s)) for s in corpus]
    train, query = fps[:50], fps[50:]
    for k in (1, 3, 5):
        ad = fit_ad_fingerprints(train, k=k)
        d_train, expected = _brute_force(train, query, k)
        assert ad.d_train == pytest.approx(d_train, abs=1e-12)
        included, d_n = query_fingerprints(ad, query)
        for (want_in, want_d), got_in, got_d in zip(expected, included, d_n):
            assert got_d == pytest.approx(want_d, abs=1e-12)
            assert bool(got_in) == want_in


def test_k_is_clipped_to_training_size():
    mols = [parse_smiles(s) for s in SMALL_SMILES[:3]]
    ad = fit_ad(mols, k=5)
    assert ad.k_eff == 2


def test_training_molecule_counts_itself_as_neighbour():
    mols = [parse_smiles(s) for s in SMALL_SMILES]
    ad = fit_ad(mols, k=3)
    fps = [ecfp(mol) for mol in mols]
    distances = sorted(tanimoto_distance(fps[0], fp) for fp in fps)
    assert distances[0] == 0.0
    _, d_n = in_domain(ad, mols[0])
    assert d_n == pytest.approx(sum(distances[:3]) / 3, abs=1e-12)


def test_strict_and_inclusive_threshold():
    bits = np.zeros(64, dtype=bool)
    bits[:4] = True
    fp = Fingerprint(bits=bits, radius=2)
    twin = Fingerprint(bits=bits.copy(), radius=2)
    # every distance is zero, so D_N equals D_train
    strict = fit_ad_fingerprints([fp, twin], k=1, strict=True)
    inclusive = fit_ad_fingerprints([fp, twin], k=1, strict=False)
    assert query_fingerprints(strict, [fp])[0].tolist() == [False]
    assert query_fingerprints(inclusive, [fp])[0].tolist() == [True]


def test_errors():
    with pytest.raises(TooFewMolecules):
        fit_ad([parse_smiles('CCO')])
    ad = fit_ad([parse_smiles(s) for s in SMALL_SMILES[:4]])
    with pytest.raises(LengthMismatch):
        query_fingerprints(ad, [ecfp(parse_smiles('CCO'), n_bits=1024)])


def test_coverage_accepts_datasets(small_dataset):
    ad = fit_ad(small_dataset.graphs[:8])
    coverage = ad_coverage(ad, small_dataset)
    assert 0.0 <= coverage <= 1.0
    with pytest.raises(ValueError):
        ad_coverage(ad, [])


def _corpus_fingerprints(n=60, seed=11):
    return [ecfp(parse_smiles(s)) for s in generate_molecules(GenConfig(n_molecules=n, seed=seed))]


def test_training_order_does_not_change_the_domain():
    fps = _corpus_fingerprints()
    train, query = fps[:45], fps[45:]
    shuffled = [train[i] for i in np.random.default_rng(3).permutation(len(train))]
    ad = fit_ad_fingerprints(train, k=3)
    ad_shuffled = fit_ad_fingerprints(shuffled, k=3)
    assert ad_shuffled.d_train == pytest.approx(ad.d_train, abs=1e-12)

    included, d_n = query_fingerprints(ad, query)
    included_shuffled, d_n_shuffled = query_fingerprints(ad_shuffled, query)
    assert np.array_equal(d_n, d_n_shuffled)
    clear = np.abs(d_n - ad.d_train) > 1e-9
    assert np.array_equal(included[clear], included_shuffled[clear])


def test_duplicate_training_molecules_never_push_queries_away():
    fps = _corpus_fingerprints()
    train, query = fps[:45], fps[45:]
    _, before = query_fingerprints(fit_ad_fingerprints(train, k=5), query)
    for extra in (train[:1], train[:10], train + train):
        ad = fit_ad_fingerprints(train + list(extra), k=5)
        assert ad.k_eff == 5
        _, after = query_fingerprints(ad, query)
        assert np.all(after <= before)
