import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisvm.errors import InputError
from multisvm.kernels import KernelSpec
from multisvm.multiclass import (
    MIXED,
    UNCLASSIFIED,
    ClassCatalog,
    LabeledDataset,
    Strategy,
    Voting,
    count_special,
    cross_validate_multiclass,
    decision_matrix,
    predict,
    predict_1a1,
    predict_1aa,
    predict_1aa_detail,
    resolve_one_against_all,
    train_multiclass,
    vote_one_against_one,
)

A, B, C = 0, 1, 2
PAIRS3 = [(A, B), (A, C), (B, C)]


def clustered(n_classes, per_class, rng, spread=0.2, dim=None):
    dim = dim or n_classes
    centers = np.eye(n_classes, dim) * 5.0
    x = np.vstack([c + rng.normal(scale=spread, size=(per_class, dim)) for c in centers])
    y = np.repeat(np.arange(1, n_classes + 1), per_class)
    return LabeledDataset(x, y)


def test_vote_unique_winner():
    # A beats B, A beats C, B beats C
    assert vote_one_against_one([[1.0, 1.0, 1.0]], PAIRS3, (1, 2, 3))[0] == 1


def test_vote_cycle_is_unclassified():
    # A beats B, C beats A, B beats C
    assert vote_one_against_one([[1.0, -1.0, 1.0]], PAIRS3, (1, 2, 3))[0] == UNCLASSIFIED


def test_weighted_vote_breaks_cycle():
    d = [[0.9, -0.2, 0.3]]
    assert vote_one_against_one(d, PAIRS3, (1, 2, 3), Voting.WEIGHTED)[0] == 1
    # exact weighted tie stays unclassified
    assert vote_one_against_one([[0.5, -0.5, 0.5]], PAIRS3, (1, 2, 3), Voting.WEIGHTED)[0] == UNCLASSIFIED


def test_zero_decision_goes_to_positive_class():
    assert vote_one_against_one([[0.0]], [(0, 1)], (4, 9))[0] == 4


@pytest.mark.parametrize("signs,expected", [
    ((1, -1, -1), 1),
    ((-1, -1, -1), UNCLASSIFIED),
    ((1, 1, -1), MIXED),
])
def test_one_against_all_rules(signs, expected):
    labels, _ = resolve_one_against_all([signs], (1, 2, 3))
    assert labels[0] == expected


def test_one_against_all_zero_is_not_positive():
    labels, positive = resolve_one_against_all([[0.0, -1.0]], (1, 2))
    assert labels[0] == UNCLASSIFIED and not positive.any()


@pytest.mark.parametrize("n", [2, 3, 4])
def test_one_against_all_sign_enumeration(n):
    codes = tuple(range(1, n + 1))
    patterns = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    labels, _ = resolve_one_against_all(patterns * 0.5, codes)
    for pattern, label in zip(patterns, labels):
        npos = int(np.sum(pattern > 0))
        if npos == 0:
            assert label == UNCLASSIFIED
        elif npos == 1:
            assert label == codes[int(np.argmax(pattern))]
        else:
            assert label == MIXED


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.sampled_from(list(Voting)))
def test_vote_permutation_invariance_and_no_mixed(n, seed, voting):
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    d = rng.normal(size=(200, len(pairs)))
    d[rng.random(d.shape) < 0.05] = 0.0
    codes = tuple(range(1, n + 1))
    base = vote_one_against_one(d, pairs, codes, voting)
    perm = rng.permutation(len(pairs))
    assert np.array_equal(base, vote_one_against_one(d[:, perm], [pairs[k] for k in perm], codes, voting))
    assert not np.any(base == MIXED)


def test_pair_machines_for_three_classes(rng):
    cat = ClassCatalog((1, 2, 3), ("water", "vegetation", "built_up"))
    model = train_multiclass(clustered(3, 6, rng), Strategy.ONE_AGAINST_ONE, KernelSpec.linear(), 1.0, catalog=cat)
    assert [(m.positive_class, m.negative_class) for m in model.machines] == [(1, 2), (1, 3), (2, 3)]
    ova = train_multiclass(clustered(3, 6, rng), Strategy.ONE_AGAINST_ALL, KernelSpec.linear(), 1.0, catalog=cat)
    assert [(cat.name(m.positive_class), m.negative_class) for m in ova.machines] == [
        ("water", None), ("vegetation", None), ("built_up", None)]


def test_pair_machine_sees_only_its_classes(rng):
    data = clustered(3, 5, rng)
    model = train_multiclass(data, Strategy.ONE_AGAINST_ONE, KernelSpec.linear(), 1.0, standardize=False)
    # every support vector of the (1 vs 2) machine is a class-1 or class-2 sample
    sv = model.machines[0].support_vectors
    allowed = data.features[np.isin(data.labels, (1, 2))]
    assert all(any(np.array_equal(s, a) for a in allowed) for s in sv)


@pytest.mark.parametrize("n", range(2, 11))
def test_machine_count_law(n, rng):
    data = clustered(n, 3, rng)
    one = train_multiclass(data, Strategy.ONE_AGAINST_ONE, KernelSpec.linear(), 1.0)
    all_ = train_multiclass(data, Strategy.ONE_AGAINST_ALL, KernelSpec.linear(), 1.0)
    assert len(one.machines) == n * (n - 1) // 2
    assert len(all_.machines) == n


def test_two_class_strategies_agree_where_machines_agree(rng):
    data = LabeledDataset(np.vstack([rng.normal(-1, 1, (25, 2)), rng.normal(1, 1, (25, 2))]),
                          np.repeat([1, 2], 25))
    one = train_multiclass(data, Strategy.ONE_AGAINST_ONE, KernelSpec.rbf(), 1.0)
    all_ = train_multiclass(data, Strategy.ONE_AGAINST_ALL, KernelSpec.rbf(), 1.0)
    assert len(one.machines) == 1 and len(all_.machines) == 2
    g = np.linspace(-4, 4, 41)
    probe = np.array(list(itertools.product(g, g)))
    p1 = predict(one, probe)
    p2 = predict(all_, probe)
    agree = (decision_matrix(all_, probe) > 0).sum(axis=1) == 1
    assert agree.sum() > 0.8 * len(probe)
    assert np.array_equal(p1[agree], p2[agree])
    # a single pair machine never ties under majority voting
    assert not np.any(p1 == UNCLASSIFIED)
    np.testing.assert_array_equal(p1, np.where(decision_matrix(one, probe)[:, 0] >= 0, 1, 2))


def test_one_against_one_never_mixed(rng):
    data = LabeledDataset(rng.normal(size=(60, 3)), np.repeat([1, 2, 3, 4], 15))
    model = train_multiclass(data, Strategy.ONE_AGAINST_ONE, KernelSpec.rbf(), 1.0)
    labels = predict(model, rng.normal(scale=3, size=(20000, 3)))
    assert not np.any(labels == MIXED)
    assert set(np.unique(labels)) <= {0, 1, 2, 3, 4}


def test_single_point_predictions(rng):
    data = clustered(3, 6, rng)
    one = train_multiclass(data, "one-against-one", KernelSpec.linear(), 1.0)
    all_ = train_multiclass(data, "one-against-all", KernelSpec.linear(), 1.0)
    for k, code in enumerate((1, 2, 3)):
        x = np.eye(3)[k] * 5.0
        assert predict_1a1(one, x) == code
        assert predict_1aa(all_, x) == code
        assert predict_1aa_detail(all_, x) == (code, (code,))
    with pytest.raises(InputError):
        predict_1a1(all_, np.zeros(3))
    with pytest.raises(InputError):
        predict_1aa(one, np.zeros(3))
    with pytest.raises(InputError, match="dimensionality"):
        predict_1a1(one, np.zeros(4))


def test_mixed_detail_lists_claiming_classes(rng):
    data = clustered(3, 15, rng, spread=3.0)
    model = train_multiclass(data, Strategy.ONE_AGAINST_ALL, KernelSpec.linear(), 10.0)
    probe = rng.normal(scale=4, size=(4000, 3))
    labels = predict(model, probe)
    assert np.any(labels == MIXED)
    label, claimed = predict_1aa_detail(model, probe[int(np.argmax(labels == MIXED))])
    assert label == MIXED and len(claimed) >= 2


def test_count_special():
    assert count_special(np.ones((4, 4), np.uint8)) == (0, 0)
    m = np.full((5, 5), 2, np.uint8)
    m.flat[[0, 7, 13]] = UNCLASSIFIED
    m.flat[[3, 20]] = MIXED
    assert count_special(m) == (3, 2)


def test_training_errors(rng):
    data = LabeledDataset(rng.normal(size=(7, 2)), [1, 1, 1, 2, 2, 2, 3])
    with pytest.raises(InputError, match="class 3"):
        train_multiclass(data, Strategy.ONE_AGAINST_ONE, KernelSpec.linear(), 1.0)
    with pytest.raises(InputError, match="not in the catalog"):
        train_multiclass(data, Strategy.ONE_AGAINST_ONE, KernelSpec.linear(), 1.0,
                         catalog=ClassCatalog.from_codes([1, 2]))


def test_catalog_rules():
    cat = ClassCatalog.parse("1=water,2=vegetation,3=built_up")
    assert cat.codes == (1, 2, 3) and cat.name(2) == "vegetation"
    assert ClassCatalog.parse(cat.to_text()) == cat
    for bad in ("1=a", "1=a,1=b", "0=a,1=b", "1=a,255=b", "1=a b,2=c"):
        with pytest.raises(InputError):
            ClassCatalog.parse(bad)


def test_multiclass_cv_selects_from_grid(rng):
    data = clustered(3, 9, rng, spread=1.0)
    res = cross_validate_multiclass(data, [Strategy.ONE_AGAINST_ONE, Strategy.ONE_AGAINST_ALL],
                                    [KernelSpec.linear()], [0.1, 1.0], folds=3, seed=2)
    assert res.cost in (0.1, 1.0)
    assert len(res.table) == 2 and all(len(r["fold_accuracy"]) == 3 for r in res.table)
