"""Depth-limited CART (Gini) and the under-sampled repeated K-fold protocol.

Randomness comes from numpy's PCG64 generator: repetition ``r`` of
:func:`cross_validate` uses ``np.random.default_rng(seed + r)`` first for
under-sampling and then for the fold shuffle. Tree growth itself is
deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator, None]
METRICS = ("accuracy", "precision", "recall", "f1")
_TIE_TOL = 1e-9


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    columns: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise DatasetError("X must be 2-D with one row per label")
        if not self.columns:
            self.columns = [f"x{i}" for i in range(self.X.shape[1])]

    def __len__(self) -> int:
        return len(self.y)

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.y.sum())
        return len(self.y) - n1, n1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], list(self.columns))


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def undersample(d: Dataset, seed: SeedLike = None) -> Dataset:
    """Keep the minority class, draw as many majority rows without replacement."""
    n0, n1 = d.class_counts()
    if n0 == 0 or n1 == 0:
        raise DatasetError("under-sampling needs both classes present")
    rng = _rng(seed)
    minority = 1 if n1 <= n0 else 0
    minor_idx = np.flatnonzero(d.y == minority)
    major_idx = np.flatnonzero(d.y != minority)
    picked = rng.choice(major_idx, size=len(minor_idx), replace=False)
    return d.subset(np.sort(np.concatenate([minor_idx, picked])))


# -- tree ------------------------------------------------------------------

@dataclass
class DecisionTree:
    """Array-backed binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) training rows per class
    node_depth: np.ndarray
    max_depth: int
    n_features: int

    @property
    def depth(self) -> int:
        return int(self.node_depth.max()) if len(self.node_depth) else 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_class(self) -> np.ndarray:
        # ties go to class 0
        return (self.counts[:, 1] > self.counts[:, 0]).astype(np.int64)

    def leaf_probability(self) -> np.ndarray:
        total = self.counts.sum(axis=1)
        return self.counts.max(axis=1) / np.maximum(total, 1)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(self.depth + 1):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            fx = X[rows, np.where(internal, f, 0)]
            go_left = fx <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X) -> np.ndarray:
        return self.leaf_class()[self.apply(X)]

    def predict_one(self, x) -> tuple[int, float]:
        leaf = self.apply(np.asarray(x, dtype=np.float64)[None, :])[0]
        return int(self.leaf_class()[leaf]), float(self.leaf_probability()[leaf])

    def split_counts(self) -> dict[int, int]:
        f = self.feature[self.feature >= 0]
        return {int(k): int(v) for k, v in zip(*np.unique(f, return_counts=True))}

    # preorder text dump, one node per line:
    #   <depth> split <column> <threshold>
    #   <depth> leaf <class> <probability> <n_class0> <n_class1>
    def dumps(self) -> str:
        lines = [f"# max_depth={self.max_depth} n_features={self.n_features}"]
        cls, prob = self.leaf_class(), self.leaf_probability()
        stack = [0]
        while stack:
            i = stack.pop()
            dep = int(self.node_depth[i])
            if self.feature[i] >= 0:
                lines.append(f"{dep} split {int(self.feature[i])} {float(self.threshold[i])!r}")
                stack += [int(self.right[i]), int(self.left[i])]
            else:
                c0, c1 = (int(v) for v in self.counts[i])
                lines.append(f"{dep} leaf {int(cls[i])} {float(prob[i])!r} {c0} {c1}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DecisionTree":
        header, *body = [ln for ln in text.splitlines() if ln.strip()]
        meta = dict(kv.split("=") for kv in header.lstrip("# ").split())
        feature, threshold, left, right, counts, depth = [], [], [], [], [], []
        stack: list[tuple[int, int]] = []  # (node, children seen)
        for ln in body:
            parts = ln.split()
            i = len(feature)
            dep = int(parts[0])
            if parts[1] == "split":
                feature.append(int(parts[2]))
                threshold.append(float(parts[3]))
                counts.append((0, 0))
            else:
                feature.append(-1)
                threshold.append(0.0)
                counts.append((int(parts[4]), int(parts[5])))
            left.append(-1)
            right.append(-1)
            depth.append(dep)
            if stack:
                parent, seen = stack.pop()
                if seen == 0:
                    left[parent] = i
                    stack.append((parent, 1))
                else:
                    right[parent] = i
            if parts[1] == "split":
                stack.append((i, 0))
        tree = cls(np.array(feature, dtype=np.int64), np.array(threshold),
                   np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                   np.array(counts, dtype=np.int64).reshape(-1, 2),
                   np.array(depth, dtype=np.int64),
                   int(meta["max_depth"]), int(meta["n_features"]))
        tree._fill_internal_counts()
        return tree

    def _fill_internal_counts(self) -> None:
        for i in sorted(range(self.n_nodes), key=lambda j: -self.node_depth[j]):
            if self.feature[i] >= 0:
                self.counts[i] = self.counts[self.left[i]] + self.counts[self.right[i]]


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    return 0.0 if n == 0 else float(1.0 - ((counts / n) ** 2).sum())


def train(d: Union[Dataset, tuple], max_depth: int = 15, seed: SeedLike = None,
          min_leaf: int = 1) -> DecisionTree:
    """Grow a CART tree breadth-first, minimising weighted child Gini.

    Candidate thresholds are midpoints between consecutive distinct values.
    Equal-impurity candidates resolve to the lowest column, then the lowest
    threshold. ``seed`` is accepted for interface symmetry; growth uses no
    randomness.
    """
    if isinstance(d, tuple):
        d = Dataset(*d)
    if len(d) == 0:
        raise DatasetError("cannot train on an empty dataset")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    X, y = d.X, d.y
    n, nfeat = X.shape

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    counts = [(int(n - y.sum()), int(y.sum()))]
    node_depth = [0]

    row_node = np.zeros(n, dtype=np.int64)
    order = np.argsort(X, axis=0, kind="stable").T.copy()  # (nfeat, n) row ids
    frontier = np.array([0], dtype=np.int64)
    fidx = np.arange(nfeat)[:, None]

    for depth in range(max_depth):
        c = np.array(counts, dtype=np.int64)
        splittable = np.zeros(len(counts), dtype=bool)
        fc = c[frontier]
        splittable[frontier] = (fc.min(axis=1) > 0) & (fc.sum(axis=1) >= 2 * min_leaf)
        if nfeat == 0 or not splittable.any():
            break
        keep = splittable[row_node[order[0]]]
        order = order[:, keep]
        m = order.shape[1]
        nid = row_node[order[0]]
        starts = np.flatnonzero(np.r_[True, nid[1:] != nid[:-1]])
        sizes = np.diff(np.r_[starts, m])
        seg_of = np.repeat(np.arange(len(starts)), sizes)

        xs = X[order, fidx]
        ys = y[order]
        cum = np.cumsum(ys, axis=1)
        cs = np.concatenate([np.zeros((nfeat, 1), dtype=cum.dtype), cum], axis=1)
        base = cs[:, starts]
        tot1 = cs[:, starts + sizes] - base
        l1 = cum - base[:, seg_of]
        nl = (np.arange(m) - starts[seg_of] + 1)[None, :]
        nr = sizes[seg_of][None, :] - nl
        r1 = tot1[:, seg_of] - l1
        l0 = nl - l1
        r0 = nr - r1

        distinct = np.zeros((nfeat, m), dtype=bool)
        distinct[:, :-1] = xs[:, 1:] > xs[:, :-1]
        valid = distinct & (nl >= min_leaf) & (nr >= min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / np.maximum(nr, 1)
        score = np.where(valid, score, -np.inf)

        seg_best = np.maximum.reduceat(score, starts, axis=1)  # (nfeat, nseg)
        best = seg_best.max(axis=0)
        tol = _TIE_TOL * np.maximum(np.abs(best), 1.0)
        tol = np.where(np.isfinite(best), tol, 0.0)
        best_feat = np.argmax(seg_best >= (best - tol)[None, :], axis=0)
        cand = score[best_feat[seg_of], np.arange(m)] >= (best - tol)[seg_of]
        key = np.where(cand, np.arange(m), m)
        best_pos = np.minimum.reduceat(key, starts)

        splits = np.isfinite(best)
        if not splits.any():
            break
        new_left = np.full(len(starts), -1, dtype=np.int64)
        new_right = np.full(len(starts), -1, dtype=np.int64)
        thr = np.zeros(len(starts))
        for s in np.flatnonzero(splits):
            f, p = int(best_feat[s]), int(best_pos[s])
            lo, hi = xs[f, p], xs[f, p + 1]
            t = (lo + hi) / 2.0
            if not lo <= t < hi:
                t = lo
            node = int(nid[starts[s]])
            feature[node] = f
            threshold[node] = float(t)
            thr[s] = t
            lc1 = int(l1[f, p])
            lc0 = int(nl[0, p]) - lc1
            pc0, pc1 = counts[node]
            for child_counts in ((lc0, lc1), (pc0 - lc0, pc1 - lc1)):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                counts.append(child_counts)
                node_depth.append(depth + 1)
            left[node], right[node] = len(feature) - 2, len(feature) - 1
            new_left[s], new_right[s] = left[node], right[node]

        # move rows of split nodes to their children, drop the rest
        rows = order[0]
        seg_split = splits[seg_of]
        rows = rows[seg_split]
        segs = seg_of[seg_split]
        go_left = X[rows, best_feat[segs]] <= thr[segs]
        row_node[rows] = np.where(go_left, new_left[segs], new_right[segs])
        frontier = np.concatenate([new_left[splits], new_right[splits]])
        # children are numbered consecutively, so a small integer key sorts
        # (stably, by radix) rows into child groups while keeping value order
        child_key = np.full(len(counts), -1, dtype=np.int64)
        child_key[frontier] = frontier - frontier.min()
        keep = child_key[row_node[order[0]]] >= 0
        order = order[:, keep]
        key = child_key[row_node[order]]
        key = key.astype(np.uint16 if key.max() < 2**16 else np.int64)
        regroup = np.argsort(key, axis=1, kind="stable")
        order = np.take_along_axis(order, regroup, axis=1)

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        counts=np.array(counts, dtype=np.int64).reshape(-1, 2),
        node_depth=np.array(node_depth, dtype=np.int64),
        max_depth=max_depth,
        n_features=nfeat,
    )


def predict(tree: DecisionTree, x) -> tuple[int, float]:
    """Label and leaf probability for a single feature vector."""
    return tree.predict_one(x)


# -- evaluation -------------------------------------------------------------

def fold_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> dict[str, float]:
    """Accuracy, precision, recall, F1 for the positive (changed) class.

    Undefined precision/recall (no predicted / actual positives) are NaN.
    """
    tp = int(((y_pred == 1) & (y_true == 1)).sum())
    fp = int(((y_pred == 1) & (y_true == 0)).sum())
    fn = int(((y_pred == 0) & (y_true == 1)).sum())
    acc = float((y_pred == y_true).mean()) if len(y_true) else math.nan
    prec = tp / (tp + fp) if tp + fp else math.nan
    rec = tp / (tp + fn) if tp + fn else math.nan
    if math.isnan(prec) or math.isnan(rec):
        f1 = math.nan
    else:
        f1 = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
    return {"accuracy": acc, "precision": prec, "recall": rec, "f1": f1}


def kfold_indices(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into near-equal disjoint folds."""
    if folds < 2 or folds > n:
        raise DatasetError(f"cannot make {folds} folds from {n} rows")
    return np.array_split(rng.permutation(n), folds)


@dataclass
class FoldResult:
    repetition: int
    fold: int
    n_train: int
    n_test: int
    tree_depth: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    @property
    def undefined(self) -> list[str]:
        return [m for m in ("precision", "recall", "f1") if math.isnan(getattr(self, m))]


@dataclass
class CvReport:
    folds: list
    config: dict

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(f, metric) for f in self.folds], dtype=np.float64)

    def mean(self, metric: str) -> float:
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return float(v.mean()) if len(v) else math.nan

    def std(self, metric: str) -> float:
        v = self.values(metric)
        v = v[~np.isnan(v)]
        return float(v.std()) if len(v) else math.nan

    def summary(self) -> dict:
        out = {}
        for m in METRICS:
            v = self.values(m)
            out[m] = {"mean": self.mean(m), "std": self.std(m),
                      "undefined_folds": int(np.isnan(v).sum())}
        return out

    def to_json(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x
        return {
            "config": self.config,
            "summary": {m: {k: clean(v) for k, v in s.items()}
                        for m, s in self.summary().items()},
            "folds": [{k: clean(v) for k, v in asdict(f).items()} for f in self.folds],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = out_dir / "cv_report.json"
        report.write_text(self.dumps(), encoding="utf-8")
        table = out_dir / "cv_folds.csv"
        cols = ["repetition", "fold", "n_train", "n_test", "tree_depth", *METRICS]
        lines = [",".join(cols)]
        for f in self.folds:
            row = asdict(f)
            lines.append(",".join("" if isinstance(row[c], float) and math.isnan(row[c])
                                  else repr(row[c]) if isinstance(row[c], float)
                                  else str(row[c]) for c in cols))
        table.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return [report, table]


def cross_validate(d: Dataset, folds: int = 10, repetitions: int = 100,
                   max_depth: int = 15, seed: int = 0, min_leaf: int = 1,
                   balance: bool = True) -> CvReport:
    """Repeated K-fold evaluation, one fresh under-sample per repetition."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    n0, n1 = d.class_counts()
    if n0 == 0 or n1 == 0:
        raise DatasetError("need at least one row of each class")
    results = []
    for r in range(repetitions):
        rng = np.random.default_rng(seed + r)
        sample = undersample(d, rng) if balance else d
        parts = kfold_indices(len(sample), folds, rng)
        for k, test_idx in enumerate(parts):
            train_idx = np.concatenate([p for j, p in enumerate(parts) if j != k])
            tree = train(sample.subset(train_idx), max_depth=max_depth, min_leaf=min_leaf)
            if tree.depth > max_depth:
                raise AssertionError(f"tree depth {tree.depth} exceeds {max_depth}")
            te = sample.subset(test_idx)
            m = fold_metrics(te.y, tree.predict(te.X))
            results.append(FoldResult(r, k, len(train_idx), len(test_idx), tree.depth, **m))
    config = {"seed": seed, "folds": folds, "repetitions": repetitions,
              "max_depth": max_depth, "min_leaf": min_leaf, "undersample": balance,
              "rng": "numpy PCG64, default_rng(seed + repetition)",
              "n_rows": len(d), "class_counts": [n0, n1], "columns": list(d.columns)}
    return CvReport(results, config)
