"""Random Forest classifier for binary loop-closure labels.

Bagged CART trees with Gini splits, random feature subsets at every node,
majority-vote prediction and mean-decrease-in-impurity importances.
Trees are seeded individually from ``(seed, tree_index)`` so the model is
identical whatever the number of worker threads.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FeatureOrderError, ModelFormatError, TrainingError
from .seeding import derive_rng

FEATURE_NAMES = ("matched_labels", "hausdorff_t", "norm_dist", "vbow_score")

MODEL_MAGIC = b"SBF1"
MODEL_VERSION = 1
LEAF = 255
_TIE_RTOL = 1e-12


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    pairs: list[tuple[int, int]] | None = None

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        self.X = np.asarray(self.X, dtype=np.float64).reshape(len(self.y), len(self.feature_names))
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("column count does not match feature_names")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature values must be finite")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if self.pairs is not None and len(self.pairs) != len(self.y):
            raise ValueError("pairs must align with rows")

    def __len__(self):
        return len(self.y)

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        pairs = None if self.pairs is None else [self.pairs[i] for i in rows]
        return Dataset(self.X[rows], self.y[rows], self.feature_names, pairs)

    def select(self, names) -> "Dataset":
        cols = [self.feature_names.index(n) for n in names]
        return Dataset(self.X[:, cols], self.y, tuple(names), self.pairs)


@dataclass(frozen=True)
class ForestHyperparams:
    n_estimators: int = 100
    max_features: int | str | None = "sqrt"  # "sqrt", None/"all", or a count
    max_depth: int | None = None
    min_samples_split: int = 2
    seed: int = 0
    bootstrap: bool = True
    class_weight: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be positive")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be at least 2")
        mf = self.max_features
        if not (mf in (None, "sqrt", "all") or (isinstance(mf, int) and mf >= 1)):
            raise ConfigError(f"bad max_features {mf!r}")
        if len(self.class_weight) != 2 or min(self.class_weight) <= 0:
            raise ConfigError("class_weight must be two positive numbers")

    def resolve_max_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            return max(1, int(math.floor(math.sqrt(n_features))))
        if mf in (None, "all"):
            return n_features
        return min(int(mf), n_features)


@dataclass
class DecisionTree:
    """Flat pre-order tree. ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) bootstrap-weighted class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] >= 0]
        return node


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    importances: np.ndarray
    hyperparams: ForestHyperparams
    feature_names: tuple[str, ...] = FEATURE_NAMES
    n_rows: int = 0
    n_positive: int = 0
    _leaf_votes: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        w0, w1 = self.hyperparams.class_weight
        # majority class per node; a tie votes 0
        self._leaf_votes = [(t.counts[:, 1] * w1 > t.counts[:, 0] * w0).astype(np.int64)
                            for t in self.trees]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def check_features(self, names) -> None:
        if tuple(names) != self.feature_names:
            raise FeatureOrderError(
                f"model expects features {list(self.feature_names)}, got {list(names)}")

    def votes(self, X) -> np.ndarray:
        """Number of trees voting 1 for each row."""
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.n_features)
        total = np.zeros(len(X), dtype=np.int64)
        for tree, leaf_vote in zip(self.trees, self._leaf_votes):
            total += leaf_vote[tree.apply(X)]
        return total

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X) / len(self.trees)

    def predict_labels(self, X) -> np.ndarray:
        # strict majority; an even split is not a loop closure
        return (2 * self.votes(X) > len(self.trees)).astype(np.int64)


def predict(model: ForestModel, x) -> tuple[int, float]:
    """Majority vote for a single feature row: ``(label, vote_fraction)``."""
    v = int(model.votes(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])
    n = len(model.trees)
    return int(2 * v > n), v / n


def feature_importance(model: ForestModel) -> np.ndarray:
    return model.importances.copy()


# -- training --------------------------------------------------------------------

class _TreeBuilder:
    def __init__(self, X, y, hp: ForestHyperparams, rng: np.random.Generator):
        self.X, self.y, self.hp, self.rng = X, y, hp, rng
        self.n_features = X.shape[1]
        self.mtry = hp.resolve_max_features(self.n_features)
        self.cw = np.asarray(hp.class_weight, dtype=np.float64)
        self.nodes: list[list] = []  # [feature, threshold, left, right, c0, c1]
        self.importance = np.zeros(self.n_features)

    def _score(self, c0, c1):
        """Sum of squared weighted class counts over the node total; larger is purer."""
        a, b = c0 * self.cw[0], c1 * self.cw[1]
        return (a * a + b * b) / (a + b)

    def best_split(self, idx, w, features):
        """Return ``(feature, threshold)`` or ``None``."""
        y = self.y[idx]
        best = []  # (score, feature, threshold)
        for f in features:
            x = self.X[idx, f]
            order = np.argsort(x, kind="stable")
            xs, ws, ys = x[order], w[order], y[order]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            l1 = np.cumsum(ws * ys)[:-1]
            l0 = np.cumsum(ws * (1 - ys))[:-1]
            r1, r0 = l1[-1] + ws[-1] * ys[-1] - l1, l0[-1] + ws[-1] * (1 - ys[-1]) - l0
            score = self._score(l0, l1) + self._score(r0, r1)
            pos = np.flatnonzero(valid)
            sc = score[pos]
            top = sc.max()
            for k in pos[sc >= top - _TIE_RTOL * abs(top)]:
                thr = (xs[k] + xs[k + 1]) / 2.0
                if thr >= xs[k + 1]:
                    thr = xs[k]
                best.append((float(score[k]), int(f), float(thr)))
        if not best:
            return None
        top = max(s for s, _, _ in best)
        # equal scores: lowest feature index, then lowest threshold
        return min((f, thr) for s, f, thr in best if s >= top - _TIE_RTOL * abs(top))

    def grow(self, idx, w, depth):
        y = self.y[idx]
        c1 = float(w[y == 1].sum())
        c0 = float(w.sum()) - c1
        nid = len(self.nodes)
        self.nodes.append([-1, 0.0, 0, 0, int(round(c0)), int(round(c1))])
        if (c0 == 0 or c1 == 0 or (self.hp.max_depth is not None and depth >= self.hp.max_depth)
                or c0 + c1 < self.hp.min_samples_split):
            return nid
        perm = self.rng.permutation(self.n_features)
        split = self.best_split(idx, w, sorted(perm[: self.mtry]))
        # no usable split among the drawn features: keep drawing, one at a time
        for f in perm[self.mtry:]:
            if split is not None:
                break
            split = self.best_split(idx, w, [f])
        if split is None:
            return nid
        f, thr = split
        go_left = self.X[idx, f] <= thr
        li, lw, ri, rw = idx[go_left], w[go_left], idx[~go_left], w[~go_left]
        parent = self._score(c0, c1)
        yl, yr = self.y[li], self.y[ri]
        lc1, rc1 = float(lw[yl == 1].sum()), float(rw[yr == 1].sum())
        children = (self._score(float(lw.sum()) - lc1, lc1)
                    + self._score(float(rw.sum()) - rc1, rc1))
        self.importance[f] += children - parent
        self.nodes[nid][0], self.nodes[nid][1] = f, thr
        self.nodes[nid][2] = self.grow(li, lw, depth + 1)
        self.nodes[nid][3] = self.grow(ri, rw, depth + 1)
        return nid

    def tree(self) -> DecisionTree:
        arr = list(zip(*self.nodes))
        return DecisionTree(
            feature=np.asarray(arr[0], dtype=np.int64),
            threshold=np.asarray(arr[1], dtype=np.float64),
            left=np.asarray(arr[2], dtype=np.int64),
            right=np.asarray(arr[3], dtype=np.int64),
            counts=np.stack([np.asarray(arr[4]), np.asarray(arr[5])], axis=1).astype(np.int64),
        )


def _fit_tree(X, y, hp: ForestHyperparams, t: int):
    rng = derive_rng(hp.seed, "forest-tree", t)
    n = len(y)
    if hp.bootstrap:
        draws = np.bincount(rng.integers(0, n, n), minlength=n)
    else:
        draws = np.ones(n, dtype=np.int64)
    idx = np.flatnonzero(draws)
    builder = _TreeBuilder(X, y, hp, rng)
    builder.grow(idx, draws[idx].astype(np.float64), 0)
    total = float(draws.sum())
    return builder.tree(), builder.importance / total


def train(data: Dataset, hp: ForestHyperparams = ForestHyperparams(), n_jobs: int = 1) -> ForestModel:
    """Fit a forest. ``n_jobs`` threads build trees concurrently; output is identical."""
    if len(data) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if data.n_positive in (0, len(data)):
        raise TrainingError("training data contains a single class; need both loop and non-loop rows")
    X, y = data.X, data.y
    jobs = range(hp.n_estimators)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda t: _fit_tree(X, y, hp, t), jobs))
    else:
        results = [_fit_tree(X, y, hp, t) for t in jobs]
    imp = np.zeros(X.shape[1])
    for _, tree_imp in results:
        imp += tree_imp
    s = imp.sum()
    imp = imp / s if s > 0 else np.full(X.shape[1], 1.0 / X.shape[1])
    return ForestModel(trees=[t for t, _ in results], importances=imp, hyperparams=hp,
                       feature_names=data.feature_names, n_rows=len(data),
                       n_positive=data.n_positive)


# -- persistence ---------------------------------------------------------------------

def _mf_code(mf) -> int:
    if mf == "sqrt":
        return -1
    if mf in (None, "all"):
        return 0
    return int(mf)


def save(model: ForestModel) -> bytes:
    hp = model.hyperparams
    out = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, model.n_features)]
    for name in model.feature_names:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
    out.append(struct.pack("<IiiIQBdd", hp.n_estimators, _mf_code(hp.max_features),
                           -1 if hp.max_depth is None else hp.max_depth, hp.min_samples_split,
                           hp.seed & 0xFFFFFFFFFFFFFFFF, int(hp.bootstrap), *hp.class_weight))
    out.append(struct.pack("<II", model.n_rows, model.n_positive))
    out.append(struct.pack(f"<{model.n_features}d", *model.importances))
    out.append(struct.pack("<I", len(model.trees)))
    for t in model.trees:
        out.append(struct.pack("<I", t.n_nodes))
        for i in range(t.n_nodes):
            f = int(t.feature[i])
            out.append(struct.pack("<BdIIII", LEAF if f < 0 else f, float(t.threshold[i]),
                                   int(t.left[i]), int(t.right[i]),
                                   int(t.counts[i, 0]), int(t.counts[i, 1])))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.off = data, 0

    def take(self, fmt: str):
        try:
            vals = struct.unpack_from(fmt, self.data, self.off)
        except struct.error:
            raise ModelFormatError("model file is truncated") from None
        self.off += struct.calcsize(fmt)
        return vals


def load(data: bytes) -> ForestModel:
    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError("bad model magic (expected SBF1)")
    r = _Reader(data)
    r.off = 4
    version, n_feat = r.take("<II")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"model format version {version} is not supported "
                               f"(this build reads version {MODEL_VERSION})")
    names = []
    for _ in range(n_feat):
        (ln,) = r.take("<H")
        (raw,) = r.take(f"<{ln}s")
        names.append(raw.decode("utf-8"))
    n_est, mf, md, mss, seed, boot, w0, w1 = r.take("<IiiIQBdd")
    hp = ForestHyperparams(
        n_estimators=n_est,
        max_features={-1: "sqrt", 0: None}.get(mf, mf),
        max_depth=None if md < 0 else md,
        min_samples_split=mss, seed=seed, bootstrap=bool(boot), class_weight=(w0, w1))
    n_rows, n_pos = r.take("<II")
    imp = np.asarray(r.take(f"<{n_feat}d"))
    (n_trees,) = r.take("<I")
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = r.take("<I")
        rows = [r.take("<BdIIII") for _ in range(n_nodes)]
        cols = list(zip(*rows))
        feat = np.asarray(cols[0], dtype=np.int64)
        feat[feat == LEAF] = -1
        trees.append(DecisionTree(
            feature=feat, threshold=np.asarray(cols[1], dtype=np.float64),
            left=np.asarray(cols[2], dtype=np.int64), right=np.asarray(cols[3], dtype=np.int64),
            counts=np.stack([np.asarray(cols[4]), np.asarray(cols[5])], axis=1).astype(np.int64)))
    if r.off != len(data):
        raise ModelFormatError("trailing bytes after model payload")
    return ForestModel(trees=trees, importances=imp, hyperparams=hp, feature_names=tuple(names),
                       n_rows=n_rows, n_positive=n_pos)
