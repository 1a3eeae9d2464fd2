"""Multiclass gradient-boosted decision trees, built from scratch.

Softmax boosting with one regression tree per class per round, depth-wise
growth, histogram split search over quantile bins, and one-step Newton
leaf values with L2 smoothing.  Training is deterministic for a given
(X, y, config): split ties break on the lowest feature index, then the
lowest bin.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    ModelFormatError,
    ModelVersionError,
    ParameterError,
    PredictionError,
    TrainingError,
)

MODEL_FORMAT_VERSION = 1
_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 5
    n_bins: int = 256
    subsample: float = 1.0
    reg_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ParameterError("n_rounds, max_depth, min_samples_leaf must be >= 1")
        if self.n_bins < 2:
            raise ParameterError("n_bins must be >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ParameterError("learning_rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ParameterError("subsample must be in (0, 1]")
        if self.reg_lambda < 0:
            raise ParameterError("reg_lambda must be >= 0")


class _Tree:
    """Flat-array binary regression tree; leaves carry shrunken values."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "gains")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.gains: list[float] = []  # audit only, not serialized

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int32)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int32)
        self.right = np.asarray(self.right, dtype=np.int32)
        self.value = np.asarray(self.value, dtype=np.float64)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not np.any(active):
                break
            rows = np.flatnonzero(active)
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(
                go_left, self.left[node[rows]], self.right[node[rows]]
            )
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        tree = cls()
        try:
            tree.feature = list(d["feature"])
            tree.threshold = list(d["threshold"])
            tree.left = list(d["left"])
            tree.right = list(d["right"])
            tree.value = list(d["value"])
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"malformed tree record: {exc}") from None
        lengths = {len(tree.feature), len(tree.threshold), len(tree.left),
                   len(tree.right), len(tree.value)}
        if len(lengths) != 1:
            raise ModelFormatError("tree arrays have inconsistent lengths")
        return tree.finalize()


@dataclass
class TreeEnsemble:
    classes: tuple
    trees: list[list[_Tree]]  # [round][class]
    base_score: float
    config: TrainConfig
    n_features: int
    train_loss: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = self._check_input(X)
        scores = np.full((X.shape[0], self.n_classes), self.base_score)
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                scores[:, c] += tree.predict(X)
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Softmax class probabilities; 1-D input yields a 1-D output."""
        single = np.asarray(X).ndim == 1
        proba = _softmax(self.raw_scores(X))
        return proba[0] if single else proba

    def predict(self, X: np.ndarray) -> np.ndarray:
        proba = np.atleast_2d(self.predict_proba(X))
        idx = np.argmax(proba, axis=1)
        out = np.array([self.classes[i] for i in idx], dtype=object)
        return out[0] if np.asarray(X).ndim == 1 else out

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise PredictionError(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        return X

    def save(self) -> bytes:
        doc = {
            "version": MODEL_FORMAT_VERSION,
            "classes": [str(c) for c in self.classes],
            "config": asdict(self.config),
            "base_score": self.base_score,
            "n_features": self.n_features,
            "train_loss": [float(v) for v in self.train_loss],
            "metadata": self.metadata,
            "trees": [[t.to_dict() for t in row] for row in self.trees],
        }
        return json.dumps(doc).encode()

    @classmethod
    def load(cls, blob: bytes) -> "TreeEnsemble":
        try:
            doc = json.loads(blob.decode("utf-8", errors="strict"))
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"model is not UTF-8: {exc}", offset=exc.start)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model is not valid JSON: {exc.msg}", offset=exc.pos)
        if not isinstance(doc, dict) or "version" not in doc:
            raise ModelFormatError("model file lacks a version field")
        if doc["version"] != MODEL_FORMAT_VERSION:
            raise ModelVersionError(
                f"unsupported model version {doc['version']!r}; "
                f"this build reads version {MODEL_FORMAT_VERSION}"
            )
        try:
            config = TrainConfig(**doc["config"])
            ensemble = cls(
                classes=tuple(doc["classes"]),
                trees=[[_Tree.from_dict(t) for t in row] for row in doc["trees"]],
                base_score=float(doc["base_score"]),
                config=config,
                n_features=int(doc["n_features"]),
                train_loss=list(doc.get("train_loss", [])),
                metadata=dict(doc.get("metadata", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"malformed model document: {exc}") from None
        if any(len(row) != ensemble.n_classes for row in ensemble.trees):
            raise ModelFormatError("tree grid does not match the class list")
        return ensemble


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores, axis=1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=1, keepdims=True)


def _bin_features(X: np.ndarray, n_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Quantile-bin every column; returns bin codes and per-column edges."""
    n, d = X.shape
    codes = np.empty((n, d), dtype=np.uint8 if n_bins <= 256 else np.uint16)
    edges: list[np.ndarray] = []
    qs = np.linspace(0, 1, n_bins + 1)[1:-1]
    for j in range(d):
        col = X[:, j]
        e = np.unique(np.quantile(col, qs))
        e = e[(e > col.min()) & (e <= col.max())]
        edges.append(e)
        codes[:, j] = np.searchsorted(e, col, side="left")
    return codes, edges


def _node_histograms(
    codes: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    idx: np.ndarray,
    n_bins: int,
    offsets: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_features = codes.shape[1]
    flat = (codes[idx].astype(np.int64) + offsets).ravel()
    minlength = n_features * n_bins
    cnt = np.bincount(flat, minlength=minlength).reshape(n_features, n_bins)
    gh = np.bincount(
        flat, weights=np.repeat(g[idx], n_features), minlength=minlength
    ).reshape(n_features, n_bins)
    hh = np.bincount(
        flat, weights=np.repeat(h[idx], n_features), minlength=minlength
    ).reshape(n_features, n_bins)
    return cnt, gh, hh


def _grow_tree(
    codes: np.ndarray,
    edges: list[np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    config: TrainConfig,
    edge_mask: np.ndarray,
    offsets: np.ndarray,
) -> _Tree:
    n_features = codes.shape[1]
    n_bins = max(config.n_bins, 2)
    lam = config.reg_lambda
    tree = _Tree()
    root = tree.add_node()
    # each stack entry carries its histograms; a child reuses the parent's
    # via subtraction so only the smaller sibling is counted directly
    stack = [(root, rows, 0, None)]
    while stack:
        node, idx, depth, hists = stack.pop()
        n_node = idx.size
        if hists is None:
            hists = _node_histograms(codes, g, h, idx, n_bins, offsets)
        cnt, gh, hh = hists
        G, H = float(gh.sum(axis=1)[0]), float(hh.sum(axis=1)[0])
        if depth >= config.max_depth or n_node < 2 * config.min_samples_leaf:
            tree.value[node] = -config.learning_rate * G / (H + lam)
            continue
        # cumulative over bins: split "bin <= b" vs rest, b = 0..n_bins-2
        cl = np.cumsum(cnt, axis=1)[:, :-1]
        gl = np.cumsum(gh, axis=1)[:, :-1]
        hl = np.cumsum(hh, axis=1)[:, :-1]
        cr = n_node - cl
        gr, hr = G - gl, H - hl
        gain = gl**2 / (hl + lam) + gr**2 / (hr + lam) - G**2 / (H + lam)
        valid = (cl >= config.min_samples_leaf) & (cr >= config.min_samples_leaf)
        valid &= edge_mask  # no threshold beyond the observed edges
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))  # first max: lowest feature, lowest bin
        best_gain = gain.ravel()[best]
        if not np.isfinite(best_gain) or best_gain <= _GAIN_EPS:
            tree.value[node] = -config.learning_rate * G / (H + lam)
            continue
        feat, b = divmod(best, n_bins - 1)
        go_left = codes[idx, feat] <= b
        left_idx, right_idx = idx[go_left], idx[~go_left]
        tree.feature[node] = feat
        tree.threshold[node] = float(edges[feat][b])
        tree.gains.append(float(best_gain))
        li, ri = tree.add_node(), tree.add_node()
        tree.left[node], tree.right[node] = li, ri
        if depth + 1 >= config.max_depth:  # children are leaves: sums suffice
            for child, cidx in ((li, left_idx), (ri, right_idx)):
                gc, hc = float(g[cidx].sum()), float(h[cidx].sum())
                tree.value[child] = -config.learning_rate * gc / (hc + lam)
            continue
        small_idx, big_idx = left_idx, right_idx
        small_node, big_node = li, ri
        if small_idx.size > big_idx.size:
            small_idx, big_idx = big_idx, small_idx
            small_node, big_node = big_node, small_node
        small_hists = _node_histograms(codes, g, h, small_idx, n_bins, offsets)
        big_hists = tuple(p - s for p, s in zip(hists, small_hists))
        stack.append((big_node, big_idx, depth + 1, big_hists))
        stack.append((small_node, small_idx, depth + 1, small_hists))
    return tree.finalize()


def fit(X: np.ndarray, y, config: TrainConfig | None = None) -> TreeEnsemble:
    """Train a softmax-boosted ensemble; loss is tracked per round."""
    config = config or TrainConfig()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(list(y), dtype=object)
    if X.shape[0] != y.shape[0]:
        raise TrainingError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise TrainingError("need at least 2 training samples")
    if not np.all(np.isfinite(X)):
        raise TrainingError("training features contain NaN or Inf")
    classes = tuple(sorted(set(y), key=str))
    if len(classes) < 2:
        raise TrainingError(f"need at least 2 classes, got {classes}")
    class_index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([class_index[v] for v in y])
    n, k = X.shape[0], len(classes)

    codes, edges = _bin_features(X, config.n_bins)
    edge_mask = np.zeros((X.shape[1], config.n_bins - 1), dtype=bool)
    for j, e in enumerate(edges):
        edge_mask[j, : len(e)] = True
    offsets = (np.arange(X.shape[1], dtype=np.int64) * config.n_bins)[np.newaxis, :]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y_idx] = 1.0

    rng = np.random.default_rng(config.seed)
    scores = np.zeros((n, k))
    ensemble = TreeEnsemble(
        classes=classes,
        trees=[],
        base_score=0.0,
        config=config,
        n_features=X.shape[1],
    )
    for _ in range(config.n_rounds):
        proba = _softmax(scores)
        grad = proba - onehot
        hess = proba * (1.0 - proba)
        if config.subsample < 1.0:
            m = max(2 * config.min_samples_leaf, int(round(config.subsample * n)))
            rows = np.sort(rng.choice(n, size=min(m, n), replace=False))
        else:
            rows = np.arange(n)
        round_trees = []
        for c in range(k):
            tree = _grow_tree(
                codes, edges, grad[:, c], hess[:, c], rows, config, edge_mask, offsets
            )
            scores[:, c] += tree.predict(X)
            round_trees.append(tree)
        ensemble.trees.append(round_trees)
        proba = _softmax(scores)
        ensemble.train_loss.append(
            float(-np.mean(np.log(np.maximum(proba[np.arange(n), y_idx], 1e-15))))
        )
    return ensemble
