import numpy as np
import pytest

from symbiolcd.evaluation import (
    ARMS, EvalReport, ablation, fmt_metric, precision_recall, repeated_eval, score_labels,
    stratified_split, summarize,
)
from symbiolcd.forest import FEATURE_NAMES, Dataset, ForestHyperparams
from symbiolcd.ingest.formats import LoopLabelSet


def truth():
    return LoopLabelSet({(40, 0): True, (41, 0): True, (42, 5): True, (43, 5): False, (44, 10): False})


def test_precision_recall_example():
    rep = precision_recall([(40, 0), (41, 0), (42, 5), (43, 5)], truth())
    assert (rep.tp, rep.fp, rep.fn) == (3, 1, 0)
    assert rep.precision == 0.75 and rep.recall == 1.0


def test_no_predictions():
    rep = precision_recall([], truth())
    assert rep.precision is None and rep.recall == 0.0
    assert fmt_metric(rep.precision) == "n/a"


def test_perfect_predictions():
    rep = precision_recall([(40, 0), (41, 0), (42, 5)], truth())
    assert (rep.precision, rep.recall) == (1.0, 1.0)


def test_unlabelled_prediction_rejected():
    with pytest.raises(ValueError):
        precision_recall([(99, 0)], truth())


def test_adding_correct_prediction_is_monotone():
    base = precision_recall([(40, 0), (43, 5)], truth())
    more = precision_recall([(40, 0), (43, 5), (41, 0)], truth())
    assert more.precision >= base.precision and more.recall >= base.recall


def test_split_is_stratified_and_deterministic():
    y = np.array([1] * 30 + [0] * 70)
    tr, te = stratified_split(y, 0.3, 4)
    assert len(te) == 30 and y[te].sum() == 9
    assert not set(tr) & set(te) and len(tr) + len(te) == 100
    tr2, te2 = stratified_split(y, 0.3, 4)
    assert np.array_equal(te, te2)


def test_summary_statistics():
    s = summarize([(1.0, 0.5), (0.5, 0.5), (0.75, 0.5)])
    assert s["precision"]["median"] == 0.75 and s["precision"]["mad"] == 0.25
    assert s["recall"]["mad"] == 0.0
    assert summarize([(None, 0.0)])["precision"]["median"] is None


def make_dataset(seed=0, n=400):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 4))
    y = (X[:, 0] + 0.3 * X[:, 3] + rng.normal(0, 0.1, n) > 0.8).astype(int)
    return Dataset(X, y, FEATURE_NAMES)


def test_single_run_summary_equals_run():
    rep = repeated_eval(1, make_dataset(), ForestHyperparams(n_estimators=10))
    p, r = rep.runs[0]
    assert rep.summary["precision"]["median"] == p and rep.summary["recall"]["mean"] == r
    assert rep.summary["precision"]["mad"] == 0.0


def test_repeated_eval_reproducible():
    a = repeated_eval(3, make_dataset(), ForestHyperparams(n_estimators=10), base_seed=7)
    b = repeated_eval(3, make_dataset(), ForestHyperparams(n_estimators=10), base_seed=7)
    assert a.summary == b.summary and a.runs == b.runs


def test_ablation_uses_identical_test_pairs():
    data = make_dataset(1)
    tr, te = stratified_split(data.y, 0.3, 0)
    arms = ablation(data.subset(tr), data.subset(te), ForestHyperparams(n_estimators=10))
    assert set(arms) == set(ARMS)
    totals = {arm: rep.tp + rep.fn for arm, rep in arms.items()}
    assert len(set(totals.values())) == 1


def test_vbow_only_signal():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (500, 4))
    y = (X[:, 3] > 0.6).astype(int)
    data = Dataset(X, y)
    tr, te = stratified_split(y, 0.3, 0)
    arms = ablation(data.subset(tr), data.subset(te), ForestHyperparams(n_estimators=20))
    assert arms["vbow"].recall >= arms["cnn-e"].recall


def test_score_labels():
    rep = score_labels([1, 1, 0, 0], [1, 0, 1, 0])
    assert (rep.tp, rep.fp, rep.fn) == (1, 1, 1)
    assert EvalReport().recall is None
