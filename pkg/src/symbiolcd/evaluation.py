"""Precision/recall, ablations, baseline comparison and repeated runs."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .forest import Dataset, ForestHyperparams, train
from .ingest.formats import LoopLabelSet
from .seeding import derive_rng, derive_seed

CNN_E_FEATURES = ("matched_labels", "hausdorff_t", "norm_dist")
VBOW_FEATURES = ("vbow_score",)
ARMS = {
    "cnn-e": CNN_E_FEATURES,
    "vbow": VBOW_FEATURES,
    "both": CNN_E_FEATURES + VBOW_FEATURES,
}


@dataclass
class EvalReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    runs: list[tuple[float | None, float | None]] = field(default_factory=list)
    summary: dict[str, dict[str, float | None]] = field(default_factory=dict)

    @property
    def precision(self) -> float | None:
        """TP / (TP + FP); ``None`` when nothing was predicted positive."""
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None


def precision_recall(predictions: Iterable[tuple[int, int]], truth: LoopLabelSet) -> EvalReport:
    """Score the pairs predicted as loops against labelled ground truth."""
    predicted = set()
    for pair in predictions:
        pair = tuple(pair)
        if pair not in truth:
            raise ValueError(f"prediction {pair} has no ground-truth label")
        predicted.add(pair)
    tp = sum(1 for p in predicted if truth.labels[p])
    fp = len(predicted) - tp
    fn = sum(1 for p, v in truth.labels.items() if v and p not in predicted)
    return EvalReport(tp=tp, fp=fp, fn=fn)


def score_labels(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    return EvalReport(tp=int(np.sum(y_true & y_pred)), fp=int(np.sum(~y_true & y_pred)),
                      fn=int(np.sum(y_true & ~y_pred)))


def fmt_metric(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def stratified_split(y, test_fraction: float = 0.3, seed: int = 0):
    """Return ``(train_idx, test_idx)``, both sorted, stratified by label."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    y = np.asarray(y)
    train_idx, test_idx = [], []
    for label in (0, 1):
        idx = np.flatnonzero(y == label)
        perm = derive_rng(seed, "split", label).permutation(idx)
        n_test = int(round(test_fraction * len(idx)))
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def fit_and_score(train_set: Dataset, test_set: Dataset, hp: ForestHyperparams,
                  n_jobs: int = 1) -> EvalReport:
    model = train(train_set, hp, n_jobs=n_jobs)
    return score_labels(test_set.y, model.predict_labels(test_set.X))


def single_tree(hp: ForestHyperparams) -> ForestHyperparams:
    """Decision-tree baseline: one tree, all features, no bootstrap."""
    return replace(hp, n_estimators=1, max_features=None, bootstrap=False)


def ablation(train_set: Dataset, test_set: Dataset, hp: ForestHyperparams = ForestHyperparams(),
             n_jobs: int = 1) -> dict[str, EvalReport]:
    """Train and test each feature-set arm with the same split and seed."""
    return {arm: fit_and_score(train_set.select(cols), test_set.select(cols), hp, n_jobs)
            for arm, cols in ARMS.items()}


def _mad(values):
    med = statistics.median(values)
    return statistics.median(abs(v - med) for v in values)


def summarize(runs) -> dict[str, dict[str, float | None]]:
    out = {}
    for k, name in enumerate(("precision", "recall")):
        vals = [r[k] for r in runs if r[k] is not None]
        if vals:
            out[name] = {"median": statistics.median(vals), "mean": statistics.fmean(vals),
                         "mad": _mad(vals)}
        else:
            out[name] = {"median": None, "mean": None, "mad": None}
    return out


def run_seeds(base_seed: int, r: int) -> tuple[int, int]:
    """``(split_seed, forest_seed)`` for run ``r``."""
    return derive_seed(base_seed, "eval-split", r), derive_seed(base_seed, "eval-forest", r)


def repeated_eval(n_runs: int, dataset: Dataset, hp: ForestHyperparams = ForestHyperparams(),
                  base_seed: int = 0, test_fraction: float = 0.3, n_jobs: int = 1,
                  features=None) -> EvalReport:
    """Independent split+train+test runs; counts are pooled, metrics summarised."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    if features is not None:
        dataset = dataset.select(features)
    total = EvalReport()
    for r in range(n_runs):
        split_seed, forest_seed = run_seeds(base_seed, r)
        tr, te = stratified_split(dataset.y, test_fraction, split_seed)
        rep = fit_and_score(dataset.subset(tr), dataset.subset(te),
                            replace(hp, seed=forest_seed), n_jobs)
        total.tp += rep.tp
        total.fp += rep.fp
        total.fn += rep.fn
        total.runs.append((rep.precision, rep.recall))
    total.summary = summarize(total.runs)
    return total


def format_table(rows: dict[str, EvalReport]) -> str:
    """Aligned text table: one line per named report."""
    width = max([len("arm")] + [len(k) for k in rows])
    lines = [f"{'arm':<{width}}  {'precision':>9}  {'recall':>9}  {'tp':>5}  {'fp':>5}  {'fn':>5}"]
    for name, rep in rows.items():
        lines.append(f"{name:<{width}}  {fmt_metric(rep.precision):>9}  {fmt_metric(rep.recall):>9}"
                     f"  {rep.tp:>5}  {rep.fp:>5}  {rep.fn:>5}")
    return "\n".join(lines)


def format_summary(rep: EvalReport) -> str:
    lines = [f"{'metric':<9}  {'median':>8}  {'mean':>8}  {'mad':>8}"]
    for name in ("precision", "recall"):
        s = rep.summary.get(name, {})
        lines.append(f"{name:<9}  {fmt_metric(s.get('median')):>8}  "
                     f"{fmt_metric(s.get('mean')):>8}  {fmt_metric(s.get('mad')):>8}")
    return "\n".join(lines)


def reports_to_csv(rows: dict[str, EvalReport]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "precision", "recall", "tp", "fp", "fn"])
    for name, rep in rows.items():
        w.writerow([name, fmt_metric(rep.precision), fmt_metric(rep.recall), rep.tp, rep.fp, rep.fn])
    return buf.getvalue().encode("utf-8")


def runs_to_csv(rep: EvalReport) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "precision", "recall"])
    for i, (p, r) in enumerate(rep.runs):
        w.writerow([i, fmt_metric(p), fmt_metric(r)])
    return buf.getvalue().encode("utf-8")
