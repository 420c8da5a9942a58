import numpy as np
import pytest

from randecoc.codebook import ABSTAIN, CodeMatrix, sample_code
from randecoc.data import synth_gaussian
from randecoc.ensemble import ColumnTrainer, Ensemble, build_ensemble, ensemble_from_code
from randecoc.learners import BinaryClassifier, TrainConfig, train_binary

CFG = TrainConfig(learning_rate=0.5, epochs=100)


@pytest.fixture(scope="module")
def five():
    train = synth_gaussian(5, 10, 40, 8.0, 1)
    test = synth_gaussian(5, 10, 40, 8.0, 2, train.feature_range)
    return train, test, build_ensemble(train, 32, 0.2, 11, CFG)


def test_held_out_accuracy(five):
    _, test, ens = five
    assert np.mean(ens.classify_batch(test.features) == test.labels) >= 0.9


def test_training_points_classify_to_their_class(five):
    train, _, ens = five
    for k in range(5):
        x = train.features[train.labels == k][0]
        assert ens.classify(x).label == k


def test_same_seed_same_serialization(five):
    train, _, ens = five
    again = build_ensemble(train, 32, 0.2, 11, CFG)
    assert again.to_json() == ens.to_json()
    back = Ensemble.from_json(ens.to_json())
    assert back.to_json() == ens.to_json()
    assert np.array_equal(back.classify_batch(train.features), ens.classify_batch(train.features))


def test_cache_matches_fresh_training(five):
    train, _, ens = five
    plain = ensemble_from_code(train, ens.code, 0.2, CFG, 11, ColumnTrainer(train, CFG, 11, cache=False))
    assert plain.to_json() == ens.to_json()


def test_mlp_parallel_matches_serial():
    train = synth_gaussian(3, 4, 10, 6.0, 0)
    cfg = TrainConfig(kind="mlp", epochs=10, hidden_width=4)
    a = build_ensemble(train, 6, 0.3, 3, cfg, n_jobs=1)
    b = build_ensemble(train, 6, 0.3, 3, cfg, n_jobs=3)
    assert a.to_json() == b.to_json()


def test_column_classifier_trained_on_relabeled_column(five):
    train, _, ens = five
    for j in (0, 7, 31):
        f = train_binary(train.features, ens.code.column(j)[train.labels], CFG)
        assert np.array_equal(f.params["w"], ens.classifiers[j].params["w"])


def test_single_column_two_classes():
    train = synth_gaussian(2, 3, 20, 8.0, 0)
    code = CodeMatrix(np.array([[1], [-1]]), 0)
    ens = ensemble_from_code(train, code, 0.5, CFG)
    f = ens.classifiers[0]
    pred = f.predict(train.features)
    assert np.array_equal(ens.classify_batch(train.features), np.where(pred == 1, 0, 1))
    assert ens.classify_leave_one_out(train.features[0], 0).abstained


def test_codeword_composition():
    code = sample_code(3, 4, 0)
    zero = BinaryClassifier("logistic", {"w": np.zeros(2), "b": np.zeros(1)})
    ens = Ensemble(code, [zero] * 4, 0.5)
    assert ens.predict_codeword(np.array([1.0, -3.0])).tolist() == [1, 1, 1, 1]
    x = np.array([1.0, 2.0])
    f = BinaryClassifier("logistic", {"w": np.array([1.0, -1.0]), "b": np.zeros(1)})
    a = Ensemble(code, [f, f, f, f], 0.5).predict_codeword(x)
    b = Ensemble(code, [f, f.negated(), f, f], 0.5).predict_codeword(x)
    assert a[1] == -b[1] and np.array_equal(np.delete(a, 1), np.delete(b, 1))


def test_threshold_extremes(five):
    train, test, ens = five
    assert np.all(ens.with_r(0).classify_batch(test.features) == ABSTAIN)
    words = ens.predict_codewords(test.features)
    d = (ens.code.entries[None] != words[:, None]).sum(axis=2)
    unique = (d == d.min(axis=1, keepdims=True)).sum(axis=1) == 1
    assert np.all(ens.with_r(1).classify_batch(test.features)[unique] != ABSTAIN)


def test_column_sign_flip_invariance(five):
    train, test, ens = five
    for j in (0, 5, 31):
        flipped = ensemble_from_code(train, ens.code.with_column_negated(j), 0.2, CFG)
        assert np.array_equal(flipped.classify_batch(test.features), ens.classify_batch(test.features))


def test_leave_one_out(five):
    train, _, ens = five
    x = train.features[0]
    full = ens.classify(x)
    w = ens.predict_codeword(x)
    for j in range(ens.code_length):
        res = ens.classify_leave_one_out(x, j)
        d = (ens.code.without_column(j).entries != np.delete(w, j)).sum(axis=1)
        assert res.distance == d.min()
        if full.distance == 0:
            assert res.label == full.label
    with pytest.raises(IndexError):
        ens.classify_leave_one_out(x, 32)


def test_invalid_threshold(five):
    train, _, _ = five
    with pytest.raises(ValueError):
        build_ensemble(train, 4, 0.0, 0)
    with pytest.raises(ValueError):
        build_ensemble(train, 4, 1.0, 0)
