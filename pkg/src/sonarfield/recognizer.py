"""Streaming recognition with debounce and two-stage indirect gestures.

Window predictions feed a three-consecutive-agreement filter: a held
gesture emits once and re-arms only after the prediction changes.  Touch
gestures never emit from this path; they arrive through the acceleration
peak detector as a majority vote over the three peak-calibrated windows.
Same-side gestures are recognized by a second, IMU-only model that runs
only while a debounced Wrist Up is active.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutMismatchError
from .features import FeatureConfig, assemble
from .gbdt import TreeEnsemble
from .gestures import DYNAMIC_GESTURES, Gesture, parse_gesture
from .stream import Window

DEBOUNCE_WINDOWS = 3
DYNAMIC_REFRACTORY_MS = 300.0


@dataclass(frozen=True)
class RecognitionEvent:
    gesture: Gesture
    t_ms: float
    kind: str  # static | dynamic | indirect
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "t_ms": round(self.t_ms, 3),
                "gesture": self.gesture.value,
                "kind": self.kind,
                "confidence": round(self.confidence, 6),
            }
        )


class Debouncer:
    """Emit a label once it repeats for ``required`` consecutive updates.

    A held label emits a single time; it can emit again only after a
    different label interrupts the run.
    """

    def __init__(self, required: int = DEBOUNCE_WINDOWS):
        self.required = required
        self.pending: Gesture | None = None
        self.count = 0
        self.held: Gesture | None = None

    def update(self, label: Gesture) -> Gesture | None:
        if label == self.pending:
            self.count += 1
        else:
            self.pending = label
            self.count = 1
        if label != self.held:
            if self.count >= self.required:
                self.held = label
                return label
        return None

    def reset(self) -> None:
        self.pending = None
        self.count = 0
        self.held = None


@dataclass
class RecognizerStats:
    windows: int = 0
    events: int = 0
    suppressed_runs: int = 0  # prediction runs filtered by the debounce rule
    suppressed_dynamic: int = 0  # peak votes rejected or inside refractory

    def to_dict(self) -> dict:
        return self.__dict__.copy()


class Recognizer:
    """Ordered window consumer; one instance per stream."""

    def __init__(
        self,
        main_model: TreeEnsemble,
        indirect_model: TreeEnsemble | None = None,
        feature_config: FeatureConfig | None = None,
        indirect_negative: Gesture = Gesture.WRIST_UP,
    ):
        self.main_model = main_model
        self.indirect_model = indirect_model
        self.feature_config = feature_config or FeatureConfig()
        if self.main_model.n_features != self.feature_config.length:
            raise LayoutMismatchError(
                f"main model expects {self.main_model.n_features} features, "
                f"layout provides {self.feature_config.length}"
            )
        self.imu_config = self.feature_config.for_sensors({"imu"})
        if (
            indirect_model is not None
            and indirect_model.n_features != self.imu_config.length
        ):
            raise LayoutMismatchError(
                f"indirect model expects {indirect_model.n_features} features, "
                f"IMU layout provides {self.imu_config.length}"
            )
        self.indirect_negative = indirect_negative
        self.main_classes = [parse_gesture(str(c)) for c in main_model.classes]
        self.indirect_classes = (
            [parse_gesture(str(c)) for c in indirect_model.classes]
            if indirect_model is not None
            else []
        )
        self.stats = RecognizerStats()
        self.reset()

    # -- state ---------------------------------------------------------

    def reset(self) -> None:
        """Zero all counters and deactivate the Wrist Up gate."""
        self._static_deb = Debouncer()
        self._indirect_deb = Debouncer()
        self.wrist_up_active = False
        self._non_wristup_run = 0
        self._last_dynamic_ms: float | None = None
        self._last_emit_ms = -np.inf

    # -- classification helpers ----------------------------------------

    def _classify(self, model: TreeEnsemble, classes, x) -> tuple[Gesture, float]:
        proba = model.predict_proba(x)
        idx = int(np.argmax(proba))
        return classes[idx], float(proba[idx])

    def _stamp(self, t_ms: float) -> float:
        # event times are strictly increasing per instance
        t = max(t_ms, np.nextafter(self._last_emit_ms, np.inf) + 1e-3)
        self._last_emit_ms = t
        return t

    # -- core decision logic (model-free seam, used by tests too) -------

    def observe(
        self,
        label: Gesture,
        confidence: float,
        t_ms: float,
        indirect_label: Gesture | None = None,
        indirect_confidence: float = 0.0,
    ) -> list[RecognitionEvent]:
        events: list[RecognitionEvent] = []
        self.stats.windows += 1

        interrupted = (
            self._static_deb.pending is not None
            and label != self._static_deb.pending
            and 0 < self._static_deb.count < self._static_deb.required
            and self._static_deb.pending not in (Gesture.NORMAL, self._static_deb.held)
        )
        if interrupted:
            self.stats.suppressed_runs += 1

        emitted = self._static_deb.update(label)

        if label == Gesture.WRIST_UP:
            self._non_wristup_run = 0
        else:
            self._non_wristup_run += 1
            if self._non_wristup_run >= DEBOUNCE_WINDOWS:
                self.wrist_up_active = False
        if emitted == Gesture.WRIST_UP:
            self.wrist_up_active = True

        if (
            emitted is not None
            and emitted != Gesture.NORMAL
            and emitted not in DYNAMIC_GESTURES
        ):
            events.append(
                RecognitionEvent(emitted, self._stamp(t_ms), "static", confidence)
            )

        if self.wrist_up_active and indirect_label is not None:
            i_emitted = self._indirect_deb.update(indirect_label)
            if i_emitted is not None and i_emitted != self.indirect_negative:
                events.append(
                    RecognitionEvent(
                        i_emitted, self._stamp(t_ms), "indirect", indirect_confidence
                    )
                )
        elif not self.wrist_up_active:
            self._indirect_deb.reset()

        self.stats.events += len(events)
        return events

    # -- public push API -------------------------------------------------

    def push_window(self, window: Window) -> list[RecognitionEvent]:
        x = assemble(window, self.feature_config)
        label, conf = self._classify(self.main_model, self.main_classes, x)
        indirect_label = None
        indirect_conf = 0.0
        if self.indirect_model is not None and self.wrist_up_active:
            xi = assemble(window, self.imu_config)
            indirect_label, indirect_conf = self._classify(
                self.indirect_model, self.indirect_classes, xi
            )
        return self.observe(label, conf, window.center_time, indirect_label, indirect_conf)

    def push_dynamic(
        self, peak_windows: list[Window], peak_ms: float
    ) -> RecognitionEvent | None:
        """Majority vote over the peak-calibrated windows (2 of 3 agree)."""
        if (
            self._last_dynamic_ms is not None
            and peak_ms - self._last_dynamic_ms < DYNAMIC_REFRACTORY_MS
        ):
            self.stats.suppressed_dynamic += 1
            return None
        votes: dict[Gesture, list[float]] = {}
        for w in peak_windows:
            x = assemble(w, self.feature_config)
            label, conf = self._classify(self.main_model, self.main_classes, x)
            votes.setdefault(label, []).append(conf)
        if not votes:
            return None
        label, confs = max(votes.items(), key=lambda kv: len(kv[1]))
        if len(confs) < 2 or label not in DYNAMIC_GESTURES:
            self.stats.suppressed_dynamic += 1
            return None
        self._last_dynamic_ms = peak_ms
        event = RecognitionEvent(
            label, self._stamp(peak_ms), "dynamic", float(np.mean(confs))
        )
        self.stats.events += 1
        return event
