import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtfn.data import WindowIndex
from vtfn.data.checkpoint import load_checkpoint
from vtfn.metrics import Metrics, confusion_csv, confusion_matrix, read_confusion_csv
from vtfn.model import ModelConfig
from vtfn.train import LOG_HEADER, PUBLISHED_LR, TrainingDiverged, evaluate, train

TAC = ModelConfig("tactile_only", 5, image_size=32)


def balanced(n, rng):
    return rng.permutation(np.arange(n) % 3)


def test_perfect_predictor():
    truth = balanced(300, np.random.default_rng(0))
    m = Metrics.from_predictions(truth, truth)
    assert m.macro_precision == m.macro_recall == m.macro_f1 == 100.0
    assert np.array_equal(m.confusion, np.diag([100, 100, 100]))


def test_random_predictor_near_chance():
    rng = np.random.default_rng(1)
    truth = balanced(10_000, rng)
    m = Metrics.from_predictions(truth, rng.integers(0, 3, 10_000))
    for v in (m.macro_precision, m.macro_recall, m.macro_f1):
        assert abs(v - 100 / 3) < 3


def test_single_class_predictor():
    truth = balanced(300, np.random.default_rng(2))
    m = Metrics.from_predictions(truth, np.full(300, 2))
    assert m.recall.tolist() == [0.0, 0.0, 100.0]
    assert m.precision[0] == m.precision[1] == 0.0  # zero denominators count as 0
    assert m.macro_recall == pytest.approx(100 / 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=200),
       st.permutations([0, 1, 2]))
def test_conservation_and_relabel_invariance(pairs, perm):
    truth, pred = map(np.array, zip(*pairs))
    m = Metrics.from_predictions(truth, pred)
    assert m.count == len(pairs)
    assert m.confusion.sum(axis=1).tolist() == np.bincount(truth, minlength=3).tolist()
    assert np.all((0 <= m.f1) & (m.f1 <= 100))
    p = np.array(perm)
    relabelled = Metrics.from_predictions(p[truth], p[pred])
    assert relabelled.macro_f1 == pytest.approx(m.macro_f1, abs=1e-9)
    # recomputing from the matrix alone gives the same numbers
    again = Metrics.from_confusion(m.confusion)
    assert again.macro_f1 == m.macro_f1 and np.array_equal(again.precision, m.precision)


def test_confusion_csv_round_trip():
    cm = confusion_matrix([0, 1, 2, 2, 1], [0, 2, 2, 1, 1])
    text = confusion_csv(cm)
    assert text.splitlines()[0] == ",sliding,appropriate,excessive"
    assert np.array_equal(read_confusion_csv(text), cm)


def test_confusion_length_mismatch():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0])


def test_overfit_toy_corpus(toy_corpus):
    idx = WindowIndex(toy_corpus, "train", 5, 1, 32)
    assert len(idx) == 200
    # smoke oracle for the optimiser path; 1e-3 so 30 short epochs suffice
    res = train(toy_corpus, TAC, epochs=30, lr=1e-3, seed=0)
    assert res.losses[-1] < 0.1


def test_training_log_and_checkpoint(toy_corpus, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        res = train(toy_corpus, TAC, epochs=3, seed=4, ckpt_out=d / "m.vtfn", log_out=d / "log.csv")
    log = (a / "log.csv").read_text()
    assert log == (b / "log.csv").read_text()
    assert (a / "m.vtfn").read_bytes() == (b / "m.vtfn").read_bytes()
    rows = log.splitlines()
    assert rows[0] == LOG_HEADER and len(rows) == 4
    epoch, loss, f1 = rows[res.best_epoch].split(",")
    assert int(epoch) == res.best_epoch
    assert float(f1) == pytest.approx(res.best.macro_f1, abs=1e-4)
    # the checkpoint holds the best epoch's weights
    again = evaluate(load_checkpoint(a / "m.vtfn"), toy_corpus, "test")
    assert np.array_equal(again.confusion, res.best.confusion)


def test_different_seeds_differ(toy_corpus):
    a = train(toy_corpus, TAC, epochs=1, seed=0).losses
    b = train(toy_corpus, TAC, epochs=1, seed=1).losses
    assert a != b


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_coordinates(toy_corpus):
    with pytest.raises(TrainingDiverged, match=r"epoch 1 batch \d+"):
        train(toy_corpus, TAC, epochs=1, lr=1e30, seed=0)


def test_evaluate_empty_split(toy_corpus):
    from vtfn.model import build
    idx = WindowIndex(toy_corpus, "test", 5, 1, 32, cap=0)
    with pytest.raises(ValueError, match="no windows"):
        evaluate(build(TAC), idx)


def test_published_learning_rate_preset():
    assert PUBLISHED_LR == 1e-7
