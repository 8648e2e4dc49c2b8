import numpy as np
import pytest

from multisvm.errors import FormatError
from multisvm.kernels import DEFAULT_KERNELS, KernelSpec
from multisvm.modelfile import dumps, load_model, loads, save_model
from multisvm.multiclass import ClassCatalog, LabeledDataset, Strategy, Voting, decision_matrix, predict, train_multiclass


@pytest.fixture(scope="module")
def dataset():
    rng = np.random.default_rng(11)
    centers = np.eye(3, 4) * 3.0
    x = np.vstack([c + rng.normal(size=(12, 4)) for c in centers])
    return LabeledDataset(x, np.repeat([2, 5, 9], 12))


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("kernel", DEFAULT_KERNELS + (KernelSpec.rbf(gamma=0.3),), ids=lambda k: getattr(k, "label", k))
def test_round_trip_is_lossless(tmp_path, dataset, strategy, kernel):
    catalog = ClassCatalog.parse("2=water,5=forest,9=urban")
    model = train_multiclass(dataset, strategy, kernel, 3.0, voting=Voting.WEIGHTED, catalog=catalog,
                             max_passes=10000)
    save_model(model, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert back.strategy == strategy and back.voting == Voting.WEIGHTED
    assert back.catalog == catalog
    for a, b in zip(model.machines, back.machines):
        np.testing.assert_array_equal(a.support_vectors, b.support_vectors)
        np.testing.assert_array_equal(a.dual_coefs, b.dual_coefs)
        assert a.bias == b.bias and a.kernel == b.kernel and a.cost == b.cost
        assert (a.positive_class, a.negative_class) == (b.positive_class, b.negative_class)
    probe = np.random.default_rng(0).normal(scale=3, size=(200, 4))
    np.testing.assert_array_equal(decision_matrix(model, probe), decision_matrix(back, probe))
    np.testing.assert_array_equal(predict(model, probe), predict(back, probe))
    assert dumps(back) == dumps(model)


def test_unscaled_model(dataset):
    model = train_multiclass(dataset, Strategy.ONE_AGAINST_ONE, KernelSpec.linear(), 1.0, standardize=False)
    text = dumps(model)
    assert "means: none" in text
    assert dumps(loads(text)) == text


@pytest.fixture(scope="module")
def text(dataset):
    return dumps(train_multiclass(dataset, Strategy.ONE_AGAINST_ALL, KernelSpec.linear(), 1.0))


def test_format_errors(text, tmp_path):
    with pytest.raises(FormatError, match="not a multisvm model"):
        loads("hello\n")
    with pytest.raises(FormatError, match="unsupported model version"):
        loads(text.replace("multisvm-model v1", "multisvm-model v2"))
    with pytest.raises(FormatError, match="unexpected end of file"):
        loads(text[: len(text) // 2])
    with pytest.raises(FormatError, match="bias"):
        loads(text.replace("bias: ", "bias: x", 1))
    with pytest.raises(FormatError, match="(?i)strategy"):
        loads(text.replace("one-against-all", "one-against-some"))
    with pytest.raises(FormatError, match="does not exist"):
        load_model(tmp_path / "none.txt")


def test_error_carries_line_number(text):
    lines = text.splitlines()
    k = next(i for i, line in enumerate(lines) if line.startswith("dual_coefs"))
    lines[k] = "dual_coefs: 1 2"
    with pytest.raises(FormatError, match=rf"<model>:{k + 1}: dual_coefs has 2 values"):
        loads("\n".join(lines))
