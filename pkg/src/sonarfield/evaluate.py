"""Evaluation harness: k-fold CV, gesture subsets, ablations, sweeps.

All runners are deterministic given (dataset seed, eval seed, config) and
embed enough provenance in their reports to be re-run from the report
alone.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EvaluationError, ParameterError
from .features import FeatureConfig, assemble, feature_matrix
from .gbdt import TrainConfig, TreeEnsemble, fit
from .gestures import Gesture, STATIC_GESTURES, TOUCH_GESTURES
from .scene import Plan, generate_dataset, make_distance_plan
from .stream import indirect_windows, labeled_windows, prepare_session

FOLD_MODES = ("session", "window")


@dataclass
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows = true class, columns = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.classes)
        if self.counts.shape != (c, c):
            raise ParameterError(f"counts must be {c}x{c}")
        if np.any(self.counts < 0):
            raise ParameterError("counts must be non-negative")

    @classmethod
    def empty(cls, classes) -> "ConfusionMatrix":
        c = len(classes)
        return cls(tuple(classes), np.zeros((c, c), dtype=np.int64))

    def add(self, true_label, predicted) -> None:
        i = self.classes.index(true_label)
        j = self.classes.index(predicted)
        self.counts[i, j] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / max(self.total, 1)

    def recalls(self) -> dict:
        row = self.counts.sum(axis=1)
        return {
            c: (float(self.counts[i, i]) / row[i] if row[i] else 0.0)
            for i, c in enumerate(self.classes)
        }

    def per_class(self) -> dict:
        rows = self.counts.sum(axis=1)
        cols = self.counts.sum(axis=0)
        out = {}
        for i, c in enumerate(self.classes):
            tp = float(self.counts[i, i])
            precision = tp / cols[i] if cols[i] else 0.0
            recall = tp / rows[i] if rows[i] else 0.0
            f1 = (
                2 * precision * recall / (precision + recall)
                if precision + recall
                else 0.0
            )
            out[str(c)] = {
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "support": int(rows[i]),
            }
        return out

    def macro_f1(self) -> float:
        per = self.per_class()
        return float(np.mean([v["f1"] for v in per.values()]))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("true\\pred," + ",".join(str(c) for c in self.classes) + "\n")
            for i, c in enumerate(self.classes):
                fh.write(str(c) + "," + ",".join(map(str, self.counts[i])) + "\n")

    def to_json(self) -> dict:
        return {
            "classes": [str(c) for c in self.classes],
            "counts": self.counts.tolist(),
        }


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    per_class: dict
    confusion: ConfusionMatrix
    fold_accuracies: list[float]
    fold_assignment: list[int]
    k: int
    fold_mode: str
    seed: int
    train_config: TrainConfig
    feature_config: FeatureConfig
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
            "confusion": self.confusion.to_json(),
            "fold_accuracies": self.fold_accuracies,
            "fold_assignment": self.fold_assignment,
            "k": self.k,
            "fold_mode": self.fold_mode,
            "seed": self.seed,
            "train_config": asdict(self.train_config),
            "feature_config": _feature_config_json(self.feature_config),
            "provenance": self.provenance,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _feature_config_json(fc: FeatureConfig) -> dict:
    d = asdict(fc)
    d["channels"] = list(fc.channels)
    return d


def feature_config_from_json(d: dict) -> FeatureConfig:
    d = dict(d)
    d["channels"] = tuple(d.get("channels", ("mic_right", "mic_band")))
    return FeatureConfig(**d)


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------


@dataclass
class WindowDataset:
    windows: list
    labels: np.ndarray  # object array of Gesture
    sessions: np.ndarray  # object array of session names
    feature_config: FeatureConfig
    provenance: dict = field(default_factory=dict)
    _features: np.ndarray | None = None

    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = feature_matrix(self.windows, self.feature_config)
        return self._features

    def class_counts(self) -> dict:
        values, counts = np.unique([str(v) for v in self.labels], return_counts=True)
        return dict(zip(values, counts.tolist()))

    def restrict(self, keep=None, relabel=None, name="subset") -> "WindowDataset":
        """Filter windows by label and/or map labels to coarser groups."""
        labels = self.labels
        mask = np.ones(len(labels), dtype=bool)
        if keep is not None:
            keep = set(keep)
            mask = np.array([v in keep for v in labels])
        new_labels = labels[mask]
        if relabel is not None:
            new_labels = np.array([relabel(v) for v in new_labels], dtype=object)
        feats = self._features[mask] if self._features is not None else None
        ds = WindowDataset(
            windows=[w for w, m in zip(self.windows, mask) if m],
            labels=new_labels,
            sessions=self.sessions[mask],
            feature_config=self.feature_config,
            provenance={**self.provenance, "subset": name},
        )
        ds._features = feats
        return ds


def build_dataset(
    recordings,
    feature_config: FeatureConfig | None = None,
    provenance: dict | None = None,
    indirect: bool = False,
) -> WindowDataset:
    """Harvest labeled training windows from session recordings."""
    feature_config = feature_config or FeatureConfig()
    windows, labels, sessions = [], [], []
    for rec in recordings:
        pair = prepare_session(rec, feature_config.highpass_cutoff)
        if indirect:
            harvested = indirect_windows(pair, rec.labels)
        else:
            harvested = labeled_windows(pair, rec.labels)
        for w, gesture in harvested:
            windows.append(w)
            labels.append(gesture)
            sessions.append(rec.name)
    return WindowDataset(
        windows=windows,
        labels=np.array(labels, dtype=object),
        sessions=np.array(sessions, dtype=object),
        feature_config=feature_config,
        provenance=provenance or {},
    )


def dataset_from_plan(
    plan: Plan,
    seed: int,
    feature_config: FeatureConfig | None = None,
    indirect: bool = False,
) -> WindowDataset:
    recordings = generate_dataset(plan, seed)
    return build_dataset(
        recordings,
        feature_config,
        provenance={"plan": plan.to_json(), "dataset_seed": seed},
        indirect=indirect,
    )


# ---------------------------------------------------------------------------
# Folding
# ---------------------------------------------------------------------------


def _fold_assignment(
    labels: np.ndarray, sessions: np.ndarray, k: int, seed: int, fold_mode: str
) -> np.ndarray:
    if fold_mode not in FOLD_MODES:
        raise EvaluationError(f"fold_mode must be one of {FOLD_MODES}")
    rng = np.random.default_rng(seed)
    n = len(labels)
    folds = np.empty(n, dtype=np.int64)
    if fold_mode == "window":
        order = rng.permutation(n)
        folds[order] = np.arange(n) % k
        return folds
    # session mode: whole sessions stay in one fold, spread per class
    session_label: dict[str, object] = {}
    for s, lab in zip(sessions, labels):
        session_label.setdefault(s, lab)
    by_class: dict[str, list[str]] = {}
    for s, lab in session_label.items():
        by_class.setdefault(str(lab), []).append(s)
    session_fold = {}
    offset = 0
    for lab in sorted(by_class):
        names = sorted(by_class[lab])
        order = rng.permutation(len(names))
        for pos, idx in enumerate(order):
            session_fold[names[idx]] = (pos + offset) % k
        offset += len(names)
    for i, s in enumerate(sessions):
        folds[i] = session_fold[s]
    return folds


def kfold_eval(
    dataset: WindowDataset,
    k: int = 10,
    train_config: TrainConfig | None = None,
    seed: int = 0,
    fold_mode: str = "session",
) -> EvalReport:
    """Seeded k-fold cross-validation; confusion aggregates held-out folds."""
    train_config = train_config or TrainConfig()
    labels = dataset.labels
    classes = tuple(sorted({str(v) for v in labels}))
    if len(classes) < 2:
        raise EvaluationError("evaluation needs at least 2 classes")
    for c in classes:
        count = int(np.sum([str(v) == c for v in labels]))
        if count < k:
            raise EvaluationError(
                f"class {c} has only {count} windows for {k}-fold evaluation"
            )
    X = dataset.features()
    folds = _fold_assignment(labels, dataset.sessions, k, seed, fold_mode)
    confusion = ConfusionMatrix.empty(classes)
    fold_accuracies = []
    for f in range(k):
        test = folds == f
        train = ~test
        if not np.any(test):
            fold_accuracies.append(float("nan"))
            continue
        model = fit(X[train], list(labels[train]), train_config)
        predicted = model.predict(X[test])
        correct = 0
        for true_label, pred in zip(labels[test], predicted):
            confusion.add(str(true_label), str(pred))
            correct += str(true_label) == str(pred)
        fold_accuracies.append(correct / int(test.sum()))
    return EvalReport(
        accuracy=confusion.accuracy,
        macro_f1=confusion.macro_f1(),
        per_class=confusion.per_class(),
        confusion=confusion,
        fold_accuracies=fold_accuracies,
        fold_assignment=folds.tolist(),
        k=k,
        fold_mode=fold_mode,
        seed=seed,
        train_config=train_config,
        feature_config=dataset.feature_config,
        provenance=dict(dataset.provenance),
    )


# ---------------------------------------------------------------------------
# Subdivision subsets
# ---------------------------------------------------------------------------

TOUCH_BINARY = "touch_binary"
SUBSET_NAMES = ("touch_binary", "touch6", "touchless7", "wristup3", "all")


def subset_dataset(dataset: WindowDataset, subset: str) -> WindowDataset:
    if subset == "all":
        return dataset
    if subset == TOUCH_BINARY:
        return dataset.restrict(
            relabel=lambda g: "touch" if g in TOUCH_GESTURES else "no_touch",
            name=subset,
        )
    if subset == "touch6":
        keep = set(TOUCH_GESTURES) | {Gesture.NORMAL}
    elif subset == "touchless7":
        keep = set(STATIC_GESTURES) | {Gesture.NORMAL}
    elif subset == "wristup3":
        keep = {Gesture.WRIST_UP, Gesture.CLOSE_TO_MOUTH, Gesture.NORMAL}
    else:
        raise EvaluationError(f"unknown subset {subset!r}; choose from {SUBSET_NAMES}")
    return dataset.restrict(keep=keep, name=subset)


def subdivision_eval(
    dataset: WindowDataset,
    subset: str,
    k: int = 10,
    train_config: TrainConfig | None = None,
    seed: int = 0,
    fold_mode: str = "session",
) -> EvalReport:
    sub = subset_dataset(dataset, subset)
    if len(sub.windows) == 0:
        raise EvaluationError(f"subset {subset!r} selects no windows")
    return kfold_eval(sub, k, train_config, seed, fold_mode)


# ---------------------------------------------------------------------------
# Sensor ablations
# ---------------------------------------------------------------------------


def restrict_features(
    X: np.ndarray, full: FeatureConfig, sub: FeatureConfig
) -> np.ndarray:
    """Column subset of a full feature matrix for a reduced sensor layout."""
    idx = []
    chunk = 3
    for ch in sub.channels:
        i = full.channels.index(ch)
        idx.extend(range(i * chunk, (i + 1) * chunk))
    e = len(full.channels) * chunk
    width = chunk * full.n_bands
    for ch in sub.channels:
        i = full.channels.index(ch)
        idx.extend(range(e + i * width, e + (i + 1) * width))
    if sub.include_imu:
        if not full.include_imu:
            raise EvaluationError("full layout lacks IMU features")
        base = e + len(full.channels) * width
        idx.extend(range(base, base + 20))
    return X[:, idx]


def ablation_eval(
    dataset: WindowDataset,
    sensor_sets: list,
    k: int = 10,
    train_config: TrainConfig | None = None,
    seed: int = 0,
    fold_mode: str = "session",
) -> dict[str, EvalReport]:
    """Retrain and evaluate per sensor combination."""
    out = {}
    for sensors in sensor_sets:
        sensors = frozenset(sensors)
        if not sensors:
            raise EvaluationError("sensor set must be non-empty")
        sub_config = dataset.feature_config.for_sensors(sensors)
        sub = WindowDataset(
            windows=dataset.windows,
            labels=dataset.labels,
            sessions=dataset.sessions,
            feature_config=sub_config,
            provenance={**dataset.provenance, "sensors": sorted(sensors)},
        )
        sub._features = restrict_features(
            dataset.features(), dataset.feature_config, sub_config
        )
        key = "+".join(sorted(sensors))
        out[key] = kfold_eval(sub, k, train_config, seed, fold_mode)
    return out


# ---------------------------------------------------------------------------
# Noise and distance sweeps
# ---------------------------------------------------------------------------


def noise_sweep(
    base_plan: Plan,
    levels_db: list[float],
    dataset_seed: int = 0,
    band: str = "below_16500",
    k: int = 10,
    train_config: TrainConfig | None = None,
    feature_config: FeatureConfig | None = None,
    eval_seed: int = 0,
    fold_mode: str = "session",
) -> dict[float, EvalReport]:
    """Regenerate the dataset at each ambient level (same seed) and evaluate."""
    out = {}
    for level in levels_db:
        if level < 0:
            raise EvaluationError("noise level must be >= 0 dB")
        plan = base_plan.with_noise(level, band)
        ds = dataset_from_plan(plan, dataset_seed, feature_config)
        out[level] = kfold_eval(ds, k, train_config, eval_seed, fold_mode)
    return out


def distance_sensitivity(
    distances_m: list[float],
    dataset_seed: int = 0,
    sessions: int = 10,
    k: int = 10,
    train_config: TrainConfig | None = None,
    feature_config: FeatureConfig | None = None,
    eval_seed: int = 0,
    fold_mode: str = "session",
) -> dict:
    """Per-gesture recall of the touchless probes at each hand distance."""
    curves: dict[str, dict[float, float]] = {}
    reports = {}
    for d in distances_m:
        plan = make_distance_plan(d, sessions=sessions)
        ds = dataset_from_plan(plan, dataset_seed, feature_config)
        report = kfold_eval(ds, k, train_config, eval_seed, fold_mode)
        reports[d] = report
        for cls, recall in report.confusion.recalls().items():
            curves.setdefault(str(cls), {})[d] = recall
    return {"curves": curves, "reports": reports}


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------


@dataclass
class LatencyReport:
    p50_ms: float
    p95_ms: float
    n_windows: int
    hardware: str

    def to_json(self) -> dict:
        return asdict(self)


def latency_bench(
    model: TreeEnsemble,
    windows,
    feature_config: FeatureConfig | None = None,
    n_windows: int | None = None,
) -> LatencyReport:
    """Wall-clock feature extraction + prediction per window."""
    feature_config = feature_config or FeatureConfig()
    if n_windows is not None and n_windows > 0:
        reps = [windows[i % len(windows)] for i in range(n_windows)]
    else:
        reps = list(windows)
    durations = []
    for w in reps:
        t0 = time.perf_counter()
        x = assemble(w, feature_config)
        model.predict_proba(x)
        durations.append((time.perf_counter() - t0) * 1000.0)
    durations = np.asarray(durations)
    return LatencyReport(
        p50_ms=float(np.percentile(durations, 50)),
        p95_ms=float(np.percentile(durations, 95)),
        n_windows=len(reps),
        hardware=f"{platform.machine()} / {platform.processor() or 'unknown cpu'}",
    )


# ---------------------------------------------------------------------------
# Reproducibility audit
# ---------------------------------------------------------------------------


def rerun_from_report(report_json: dict) -> EvalReport:
    """Re-run an evaluation purely from its serialized report."""
    prov = report_json.get("provenance", {})
    if "plan" not in prov:
        raise EvaluationError("report carries no dataset plan to re-run from")
    plan = Plan.from_json(prov["plan"])
    fc = feature_config_from_json(report_json["feature_config"])
    if "sensors" in prov:
        # the dataset was harvested with the full layout, then restricted
        full = FeatureConfig(
            n_bands=fc.n_bands,
            band_low_hz=fc.band_low_hz,
            band_high_hz=fc.band_high_hz,
            highpass_cutoff=fc.highpass_cutoff,
        )
        base = dataset_from_plan(plan, int(prov["dataset_seed"]), full)
        ds = WindowDataset(
            base.windows, base.labels, base.sessions, fc, dict(prov)
        )
        ds._features = restrict_features(base.features(), full, fc)
    else:
        ds = dataset_from_plan(plan, int(prov["dataset_seed"]), fc)
    if "subset" in prov:
        ds = subset_dataset(ds, prov["subset"])
    return kfold_eval(
        ds,
        k=int(report_json["k"]),
        train_config=TrainConfig(**report_json["train_config"]),
        seed=int(report_json["seed"]),
        fold_mode=report_json["fold_mode"],
    )
