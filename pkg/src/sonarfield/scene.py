"""Synthetic acoustic field and IMU traces for the gesture catalog.

Each gesture is a parametric scenario: a set of propagation paths from the
speaker to the two microphones (direct air, solid through the watch body,
and reflections off nearby surfaces), a timeline of path-gain changes, and
an IMU template.  Rendering is a delay-and-sum over the emitted chirp plus
a tiny sensor noise floor; everything is deterministic given a seed.

Simulator conventions (not physical calibrations):
  - speed of sound 343 m/s
  - reflection attenuation 1 / (1 + (d / 2 cm)^2)
  - reflection coefficients: skin 0.5, phone glass 0.9, fabric 0.2
  - ambient-noise reference RMS 1e-5 full scale
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .gestures import DYNAMIC_GESTURES, Gesture, INDIRECT_GESTURES, parse_gesture
from .signal import AudioStream, ChirpSpec, make_chirp
from .stream import ImuStream

log = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0  # m/s
NOISE_REF_RMS = 1e-5  # full-scale RMS at 0 dB
ATTENUATION_D0 = 0.02  # m; reflection gain rolls off as 1/(1+(d/d0)^2)
CHANNELS = ("mic_right", "mic_band")

MATERIALS = {
    "skin": 0.5,
    "phone_glass": 0.9,
    "fabric": 0.2,
}

#: One-way speaker-to-mic delays (samples at 48 kHz) and the body-borne gain.
DIRECT_DELAY = 6
SOLID_DELAY = 1
SOLID_GAIN = 0.25

DEFAULT_AMPLITUDE = 0.05
GAIN_RAMP_MS = 5.0
SENSOR_NOISE_RMS = 1e-6

IMU_RATE = 200.0
GRAVITY_G = 1.0

_CHUNK_MS = 1000.0 * 4096 / 48000.0
STATIC_DURATION_MS = 68 * _CHUNK_MS  # ~5.8 s
DYNAMIC_DURATION_MS = 53 * _CHUNK_MS  # ~4.5 s
INDIRECT_DURATION_MS = 62 * _CHUNK_MS  # ~5.3 s
STATIC_ONSET_MS = 400.0
CONTACT_MS = 260.0


def distance_to_delay(distance: float, sample_rate: float) -> int:
    """Round-trip acoustic delay in samples for a reflector at ``distance``."""
    if distance < 0:
        raise ParameterError(f"distance must be >= 0, got {distance}")
    return int(round(2.0 * distance / SPEED_OF_SOUND * sample_rate))


def reflection_attenuation(distance: float) -> float:
    return 1.0 / (1.0 + (distance / ATTENUATION_D0) ** 2)


@dataclass(frozen=True)
class Material:
    name: str
    reflection_coeff: float

    def __post_init__(self):
        if not 0.0 <= self.reflection_coeff <= 1.0:
            raise ParameterError("reflection_coeff must be in [0, 1]")


@dataclass
class ScenePath:
    kind: str  # direct_air | solid_internal | reflection
    delay: int  # samples
    gain: float
    target_channel: str

    def __post_init__(self):
        if self.kind not in ("direct_air", "solid_internal", "reflection"):
            raise ParameterError(f"unknown path kind {self.kind!r}")
        if self.delay < 0:
            raise ParameterError("path delay must be >= 0")
        if not 0.0 <= self.gain <= 1.0:
            raise ParameterError("path gain must be in [0, 1]")


@dataclass(frozen=True)
class PathEvent:
    """Gain change of one path at a point in time (ramped over ~5 ms)."""

    path_index: int
    t_ms: float
    gain: float


@dataclass(frozen=True)
class ImuEvent:
    t_ms: float
    accel_amp: float  # g, half-sine magnitude pulse
    accel_width_ms: float
    euler_pulse: tuple[float, float, float] = (0.0, 0.0, 0.0)  # deg, out-and-back
    euler_width_ms: float = 0.0
    vibration_amp: float = 0.0  # g, wideband contact micro-vibration
    vibration_width_ms: float = 10.0  # sustained while the finger touches


@dataclass
class ImuTemplate:
    kind: str  # idle | static_step | dynamic_peak | indirect_peak_on_wristup
    base_euler: tuple[float, float, float] = (0.0, 5.0, 0.0)
    step_euler: tuple[float, float, float] = (0.0, 0.0, 0.0)
    step_time_ms: float = 0.0
    step_ramp_ms: float = 250.0
    step_accel_amp: float = 0.0
    events: tuple[ImuEvent, ...] = ()
    jitter_accel: float = 0.012  # g
    jitter_euler: float = 0.4  # deg
    #: slow in-session drift per axis; gravity-referenced roll/pitch hold
    #: steady while the heading wanders as the user moves about
    wander_euler: tuple[float, float, float] = (1.0, 1.0, 18.0)


@dataclass(frozen=True)
class LabelSpan:
    start_ms: float
    end_ms: float
    gesture: Gesture
    kind: str  # static | dynamic

    def to_json(self) -> dict:
        return {
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "gesture": self.gesture.value,
            "kind": self.kind,
        }

    @classmethod
    def from_json(cls, d: dict) -> "LabelSpan":
        return cls(
            float(d["start_ms"]), float(d["end_ms"]),
            parse_gesture(d["gesture"]), str(d["kind"]),
        )


@dataclass
class GestureScenario:
    label: Gesture
    duration_ms: float
    paths: list[ScenePath]
    timeline: list[PathEvent]
    imu: ImuTemplate
    spans: list[LabelSpan]

    def __post_init__(self):
        for ch in CHANNELS:
            for kind in ("direct_air", "solid_internal"):
                n = sum(
                    1
                    for p in self.paths
                    if p.target_channel == ch and p.kind == kind
                )
                if n != 1:
                    raise ParameterError(
                        f"scenario needs exactly one {kind} path for {ch}, found {n}"
                    )
        times = [e.t_ms for e in self.timeline]
        if times != sorted(times):
            raise ParameterError("timeline must be sorted by time")
        if times and (times[0] < 0 or times[-1] > self.duration_ms):
            raise ParameterError("timeline events must lie within [0, duration]")
        if self.label in DYNAMIC_GESTURES:
            if self.imu.kind != "dynamic_peak":
                raise ParameterError("dynamic gestures require a dynamic_peak template")
            if any(e.accel_width_ms > 300.0 for e in self.imu.events):
                raise ParameterError("dynamic accel pulses must be <= 300 ms wide")

    def n_chunks(self, spec: ChirpSpec) -> int:
        return int(round(self.duration_ms / spec.chunk_ms))

    def with_extra_path(self, path: ScenePath) -> "GestureScenario":
        return GestureScenario(
            self.label,
            self.duration_ms,
            self.paths + [path],
            list(self.timeline),
            self.imu,
            list(self.spans),
        )


@dataclass
class SessionRecording:
    audio: AudioStream
    imu: ImuStream
    labels: list[LabelSpan]
    seed: int
    name: str = ""

    def __post_init__(self):
        spans = sorted(self.labels, key=lambda s: s.start_ms)
        for a, b in zip(spans, spans[1:]):
            if b.start_ms < a.end_ms:
                raise ParameterError("label spans must not overlap")
        self.labels = spans
        if self.imu.end_time + self.imu.period_ms < self.audio.end_time:
            raise ParameterError("IMU trace must cover the audio duration")


# ---------------------------------------------------------------------------
# Scenario construction
# ---------------------------------------------------------------------------


def _base_paths(sample_rate: float = 48000.0) -> list[ScenePath]:
    paths = []
    for ch in CHANNELS:
        paths.append(ScenePath("direct_air", DIRECT_DELAY, 1.0, ch))
        paths.append(ScenePath("solid_internal", SOLID_DELAY, SOLID_GAIN, ch))
    return paths


#: An extended reflector (hand, phone, fabric) returns a tap cluster, not a
#: single echo.  Tap spacings and the lead past the geometric delay sit
#: where the chirp autocorrelation is small, so the cluster's energy adds
#: nearly incoherently (against the direct path and within itself) and
#: stays stable under small per-session placement shifts.
_CLUSTER_LEAD = 10
_CLUSTER_OFFSETS = (0, 13, 27, 41, 55, 69)
_CLUSTER_WEIGHTS = np.array([1.0, 0.9, 0.8, 0.7, 0.6, 0.5])
_CLUSTER_WEIGHTS = _CLUSTER_WEIGHTS / np.sqrt(np.sum(_CLUSTER_WEIGHTS**2))


def _reflection(
    channel: str,
    coeff: float,
    distance: float,
    scale: float = 1.0,
    sample_rate: float = 48000.0,
) -> list[ScenePath]:
    """Multi-tap cluster for one reflector; total RMS gain follows the
    material coefficient and the distance attenuation law."""
    total = min(2.2, coeff * reflection_attenuation(distance) * scale)
    delay = DIRECT_DELAY + _CLUSTER_LEAD + distance_to_delay(distance, sample_rate)
    return [
        ScenePath("reflection", delay + off, min(1.0, float(total * w)), channel)
        for off, w in zip(_CLUSTER_OFFSETS, _CLUSTER_WEIGHTS)
    ]


def total_reflection_gain(scenario: "GestureScenario", channel: str) -> float:
    """RMS gain of all reflection paths aimed at ``channel``."""
    gains = [
        p.gain
        for p in scenario.paths
        if p.kind == "reflection" and p.target_channel == channel
    ]
    return float(np.sqrt(np.sum(np.square(gains))))


def _static_scenario(
    label: Gesture,
    duration_ms: float,
    onset_ms: float,
    reflections: list[ScenePath],
    direct_dims: dict[str, float],
    imu: ImuTemplate,
) -> GestureScenario:
    paths = _base_paths()
    events: list[PathEvent] = []
    for refl in reflections:
        idx = len(paths)
        paths.append(replace(refl))
        events.append(PathEvent(idx, 0.0, 0.0))  # off until the gesture starts
        events.append(PathEvent(idx, onset_ms, refl.gain))
    for i, p in enumerate(paths):
        if p.kind == "direct_air" and p.target_channel in direct_dims:
            events.append(PathEvent(i, onset_ms, direct_dims[p.target_channel]))
    timeline = sorted(events, key=lambda e: e.t_ms)
    spans = [LabelSpan(onset_ms, duration_ms - 100.0, label, "static")]
    return GestureScenario(label, duration_ms, paths, timeline, imu, spans)


def _dynamic_scenario(
    label: Gesture,
    duration_ms: float,
    event_times: list[float],
    contact_gains: dict[str, float],
    accel_amp: float,
    vibration_amp: float = 0.12,
) -> GestureScenario:
    paths = _base_paths()
    direct_index = {
        p.target_channel: i for i, p in enumerate(paths) if p.kind == "direct_air"
    }
    timeline: list[PathEvent] = []
    imu_events = []
    spans = []
    for t in event_times:
        lo, hi = t - CONTACT_MS / 2, t + CONTACT_MS / 2
        for ch, dip in contact_gains.items():
            if dip >= 1.0:
                continue
            idx = direct_index[ch]
            timeline.append(PathEvent(idx, lo, dip))
            timeline.append(PathEvent(idx, hi, 1.0))
        imu_events.append(
            ImuEvent(
                t_ms=t,
                accel_amp=accel_amp,
                accel_width_ms=120.0,
                euler_pulse=(1.5, 1.2, 0.8),
                euler_width_ms=CONTACT_MS,
                vibration_amp=vibration_amp,
                vibration_width_ms=CONTACT_MS,
            )
        )
        spans.append(LabelSpan(lo, hi, label, "dynamic"))
    timeline.sort(key=lambda e: e.t_ms)
    imu = ImuTemplate(kind="dynamic_peak", events=tuple(imu_events))
    return GestureScenario(label, duration_ms, paths, timeline, imu, spans)


def _default_event_times(duration_ms: float, n_events: int, margin_ms: float = 900.0):
    if n_events < 1:
        raise ParameterError("n_events must be >= 1")
    return list(np.linspace(margin_ms, duration_ms - margin_ms, n_events))


def wrist_up_pitch_step(distance: float) -> float:
    """Tilt amplitude shrinks with hand distance (weaker gesture intent)."""
    return 75.0 * reflection_attenuation(distance) / reflection_attenuation(0.01)


def build_scenario(
    label: Gesture | str,
    *,
    distance_m: float | None = None,
    material: str | None = None,
    duration_ms: float | None = None,
    n_events: int = 2,
    event_times_ms: list[float] | None = None,
    base_euler: tuple[float, float, float] = (0.0, 5.0, 0.0),
    step_scale: float = 1.0,
    contact_scale: float = 1.0,
) -> GestureScenario:
    """Deterministic scenario for one gesture.

    ``distance_m`` drives both the reflection strength and, for Wrist Up,
    the tilt amplitude (a far hand means a half-hearted gesture).
    """
    label = parse_gesture(label) if isinstance(label, str) else label
    if not isinstance(label, Gesture):
        raise ParameterError(f"unknown gesture label {label!r}")
    skin = MATERIALS["skin"]

    def static(duration=None, onset=STATIC_ONSET_MS, refl=(), dims=None, imu=None):
        return _static_scenario(
            label,
            duration or duration_ms or STATIC_DURATION_MS,
            onset,
            list(refl),
            dims or {},
            imu or ImuTemplate(kind="idle", base_euler=base_euler),
        )

    def step_template(step, accel_amp):
        return ImuTemplate(
            kind="static_step",
            base_euler=base_euler,
            step_euler=tuple(s * step_scale for s in step),
            step_time_ms=STATIC_ONSET_MS,
            step_accel_amp=accel_amp,
        )

    # the normalized attenuation makes occlusion fade with distance too
    def attn(d):
        return reflection_attenuation(d) / reflection_attenuation(0.01)

    if label is Gesture.NORMAL:
        return static()

    if label is Gesture.WRIST_UP:
        d = distance_m if distance_m is not None else 0.01
        step = wrist_up_pitch_step(d)
        return static(
            refl=[
                *_reflection("mic_right", skin, d, scale=1.6),
                *_reflection("mic_band", skin, d, scale=0.3),
            ],
            imu=step_template((0.0, step, 0.0), 0.1 + 0.35 * step / 75.0),
        )

    if label is Gesture.CLOSE_TO_MOUTH:
        d = distance_m if distance_m is not None else 0.025
        return static(
            refl=[
                *_reflection("mic_right", skin, d, scale=1.6),
                *_reflection("mic_band", skin, d, scale=1.0),
            ],
            imu=step_template((-25.0, 45.0, 0.0), 0.3),
        )

    if label is Gesture.COVER_SCREEN:
        d = distance_m if distance_m is not None else 0.01
        return static(
            refl=[
                *_reflection("mic_band", skin, d, scale=2.4),
                *_reflection("mic_right", skin, d, scale=0.5),
            ],
            dims={"mic_right": 1.0 - 0.15 * attn(d)},
        )

    if label is Gesture.BLOCK_LEFT:
        # hand beside the speaker shadows the band mic and bounces energy
        # toward the right mic
        d = distance_m if distance_m is not None else 0.01
        return static(
            refl=[
                *_reflection("mic_right", skin, d, scale=0.9),
                *_reflection("mic_band", skin, d, scale=0.15),
            ],
            dims={
                "mic_right": 1.0 - 0.05 * attn(d),
                "mic_band": 1.0 - 0.6 * attn(d),
            },
        )

    if label is Gesture.HAND_IN_POCKET:
        coeff = MATERIALS[material] if material else MATERIALS["fabric"]
        d = distance_m if distance_m is not None else 0.01
        return static(
            refl=[
                *_reflection("mic_right", coeff, d, scale=0.8),
                *_reflection("mic_band", coeff, d, scale=0.8),
            ],
            dims={"mic_right": 0.6, "mic_band": 0.6},
            imu=step_template((12.0, -35.0, 0.0), 0.3),
        )

    if label is Gesture.PHONE_COVER_WATCH:
        coeff = MATERIALS[material] if material else MATERIALS["phone_glass"]
        d = distance_m if distance_m is not None else 0.01
        return static(
            refl=[
                *_reflection("mic_right", coeff, d, scale=1.8),
                *_reflection("mic_band", coeff, d, scale=1.8),
            ],
        )

    if label in DYNAMIC_GESTURES:
        duration = duration_ms or DYNAMIC_DURATION_MS
        times = event_times_ms or _default_event_times(duration, n_events)
        dips = {
            Gesture.CLICK_MIC: ({"mic_right": 0.03}, 1.5),
            Gesture.CLICK_MIC_ADD: ({"mic_right": 0.7, "mic_band": 0.03}, 1.45),
            Gesture.CLICK_SPEAKER: ({"mic_right": 0.10, "mic_band": 0.12}, 1.55),
            Gesture.PINCH_SIDES: ({"mic_right": 0.25, "mic_band": 0.60}, 0.70),
            Gesture.PINCH_DIAG: ({"mic_right": 0.65, "mic_band": 0.20}, 0.68),
        }
        gains, amp = dips[label]
        gains = {ch: min(1.0, g * contact_scale) for ch, g in gains.items()}
        return _dynamic_scenario(label, duration, times, gains, amp)

    if label in INDIRECT_GESTURES:
        return _indirect_scenario(
            label,
            duration_ms or INDIRECT_DURATION_MS,
            event_times_ms,
            n_events if event_times_ms is None else len(event_times_ms),
            base_euler,
            distance_m if distance_m is not None else 0.01,
        )

    raise ParameterError(f"no scenario template for {label}")


def _indirect_scenario(
    label: Gesture,
    duration_ms: float,
    event_times_ms: list[float] | None,
    n_events: int,
    base_euler,
    distance_m: float,
) -> GestureScenario:
    """Same-side gesture performed while the wrist is held up."""
    base = build_scenario(
        Gesture.WRIST_UP, distance_m=distance_m, duration_ms=duration_ms,
        base_euler=base_euler,
    )
    times = event_times_ms or _default_event_times(duration_ms, max(n_events, 3))
    motions = {
        Gesture.PINCH: ImuEvent(0, 0.55, 80.0, (0.0, 0.0, 0.0), 0.0, 0.15),
        Gesture.ROTATE_IN: ImuEvent(0, 0.40, 280.0, (-26.0, 0.0, 0.0), 500.0),
        Gesture.ROTATE_OUT: ImuEvent(0, 0.40, 280.0, (26.0, 0.0, 0.0), 500.0),
        Gesture.BEND: ImuEvent(0, 0.45, 260.0, (0.0, -22.0, 0.0), 450.0),
    }
    proto = motions[label]
    events = tuple(replace(proto, t_ms=t) for t in times)
    imu = replace(base.imu, kind="indirect_peak_on_wristup", events=events)
    spans = [LabelSpan(t - 250.0, t + 250.0, label, "dynamic") for t in times]
    return GestureScenario(label, duration_ms, base.paths, base.timeline, imu, spans)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _gain_envelope(
    initial: float,
    changes: list[tuple[float, float]],
    n_samples: int,
    sample_rate: float,
) -> np.ndarray | float:
    while changes and changes[0][0] <= 0.0:
        initial = changes[0][1]
        changes = changes[1:]
    if not changes:
        return initial
    ramp = GAIN_RAMP_MS / 2000.0 * sample_rate  # half-ramp in samples
    xp, fp = [0.0], [initial]
    for t_ms, gain in changes:
        s = t_ms / 1000.0 * sample_rate
        xp.extend([max(s - ramp, xp[-1] + 1e-3), s + ramp])
        fp.extend([fp[-1], gain])
    return np.interp(np.arange(n_samples), xp, fp)


def render_audio(
    scenario: GestureScenario,
    spec: ChirpSpec | None = None,
    seed: int = 0,
) -> AudioStream:
    """Delay-and-sum of all scenario paths over the emitted chirp."""
    spec = spec or ChirpSpec(amplitude=DEFAULT_AMPLITUDE)
    n_chunks = scenario.n_chunks(spec)
    chirp = make_chirp(spec, n_chunks).data[0]
    n = chirp.size
    rng = np.random.default_rng(seed)
    out = rng.normal(0.0, SENSOR_NOISE_RMS, (len(CHANNELS), n))
    per_path_changes: dict[int, list[tuple[float, float]]] = {}
    for ev in scenario.timeline:
        per_path_changes.setdefault(ev.path_index, []).append((ev.t_ms, ev.gain))
    for i, path in enumerate(scenario.paths):
        ch = CHANNELS.index(path.target_channel)
        shifted = np.zeros(n)
        shifted[path.delay :] = chirp[: n - path.delay]
        env = _gain_envelope(
            path.gain, per_path_changes.get(i, []), n, spec.sample_rate
        )
        out[ch] += env * shifted
    n_clipped = int(np.sum(np.abs(out) > 1.0))
    if n_clipped:
        log.warning("render_audio clipped %d samples", n_clipped)
        np.clip(out, -1.0, 1.0, out=out)
    return AudioStream(spec.sample_rate, CHANNELS, out, 0.0)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _half_sine(t: np.ndarray, center_ms: float, width_ms: float) -> np.ndarray:
    if width_ms <= 0:
        return np.zeros_like(t)
    phase = (t - (center_ms - width_ms / 2.0)) / width_ms
    pulse = np.sin(np.pi * np.clip(phase, 0.0, 1.0))
    pulse[(phase < 0.0) | (phase > 1.0)] = 0.0
    return pulse


def _smoothed_noise(rng, n: int, window: int, target_std: float) -> np.ndarray:
    raw = rng.standard_normal(n + window)
    kernel = np.hanning(window)
    kernel /= kernel.sum()
    smooth = np.convolve(raw, kernel, mode="same")[:n]
    std = float(np.std(smooth))
    return smooth * (target_std / std) if std > 0 else smooth


def render_imu(
    scenario: GestureScenario, rate: float = IMU_RATE, seed: int = 0
) -> ImuStream:
    """IMU trace at ``rate`` Hz from the scenario's template."""
    tpl = scenario.imu
    n = int(np.ceil(scenario.duration_ms * rate / 1000.0)) + 1
    t = np.arange(n) * (1000.0 / rate)
    rng = np.random.default_rng(seed)

    euler = np.array(tpl.base_euler, dtype=float)[:, None] * np.ones((3, n))
    for axis in range(3):
        euler[axis] += _smoothed_noise(rng, n, int(2 * rate), tpl.wander_euler[axis])
    if any(tpl.step_euler):
        ramp = _smoothstep((t - tpl.step_time_ms) / max(tpl.step_ramp_ms, 1e-9))
        for axis in range(3):
            euler[axis] += tpl.step_euler[axis] * ramp
    for ev in tpl.events:
        if ev.euler_width_ms > 0 and any(ev.euler_pulse):
            pulse = _half_sine(t, ev.t_ms, ev.euler_width_ms)
            for axis in range(3):
                euler[axis] += ev.euler_pulse[axis] * pulse
    euler += rng.normal(0.0, tpl.jitter_euler, (3, n))

    roll = np.radians(euler[0])
    pitch = np.radians(euler[1])
    accel = np.vstack(
        [
            -np.sin(pitch),
            np.sin(roll) * np.cos(pitch),
            np.cos(roll) * np.cos(pitch),
        ]
    ) * GRAVITY_G

    direction = np.array([0.35, 0.35, 0.87])
    direction /= np.linalg.norm(direction)
    if tpl.step_accel_amp > 0:
        pulse = _half_sine(t, tpl.step_time_ms + tpl.step_ramp_ms / 2.0, tpl.step_ramp_ms)
        accel += tpl.step_accel_amp * direction[:, None] * pulse[None, :]
    for ev in tpl.events:
        if ev.accel_amp > 0:
            pulse = _half_sine(t, ev.t_ms, ev.accel_width_ms)
            accel += ev.accel_amp * direction[:, None] * pulse[None, :]
        if ev.vibration_amp > 0:
            burst = np.abs(t - ev.t_ms) <= ev.vibration_width_ms / 2.0
            accel += rng.normal(0.0, ev.vibration_amp, (3, n)) * burst[None, :]
    accel += rng.normal(0.0, tpl.jitter_accel, (3, n))
    return ImuStream(rate, 0.0, accel, euler)


def add_noise(
    stream: AudioStream, level_db: float, band: str = "below_16500", seed: int = 0
) -> AudioStream:
    """Add Gaussian ambient noise ``level_db`` dB above the reference RMS.

    ``below_16500`` noise is low-passed below the sensing band, mirroring
    ordinary ambient sound; ``full_band`` noise is white across the whole
    spectrum and is a stress case the hardware never promises to reject.
    """
    if level_db < 0:
        raise ParameterError(f"level_db must be >= 0, got {level_db}")
    if band not in ("below_16500", "full_band"):
        raise ParameterError(f"unknown noise band {band!r}")
    target = NOISE_REF_RMS * 10.0 ** (level_db / 20.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(stream.data.shape)
    if band == "below_16500":
        from scipy import signal as sp_signal

        taps = sp_signal.firwin(601, 16000.0, window="hamming", fs=stream.sample_rate)
        noise = np.stack(
            [sp_signal.fftconvolve(ch, taps, mode="same") for ch in noise]
        )
    rms = np.sqrt(np.mean(noise**2, axis=1, keepdims=True))
    noise *= target / np.maximum(rms, 1e-300)
    out = stream.data + noise
    n_clipped = int(np.sum(np.abs(out) > 1.0))
    if n_clipped:
        log.warning("add_noise clipped %d samples", n_clipped)
        np.clip(out, -1.0, 1.0, out=out)
    return AudioStream(stream.sample_rate, stream.channels, out, stream.start_time)


# ---------------------------------------------------------------------------
# Dataset plans and generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanEntry:
    gesture: Gesture
    sessions: int
    noise_db: float = 17.44
    noise_band: str = "below_16500"
    distance_m: float | None = None
    material: str | None = None
    n_events: int = 2
    duration_ms: float | None = None

    def to_json(self) -> dict:
        d = {"gesture": self.gesture.value, "sessions": self.sessions,
             "noise_db": self.noise_db, "noise_band": self.noise_band,
             "n_events": self.n_events}
        if self.distance_m is not None:
            d["distance_m"] = self.distance_m
        if self.material is not None:
            d["material"] = self.material
        if self.duration_ms is not None:
            d["duration_ms"] = self.duration_ms
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PlanEntry":
        known = {
            "gesture", "sessions", "noise_db", "noise_band", "distance_m",
            "material", "n_events", "duration_ms",
        }
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown plan entry keys {sorted(unknown)}")
        return cls(
            gesture=parse_gesture(d["gesture"]),
            sessions=int(d["sessions"]),
            noise_db=float(d.get("noise_db", 17.44)),
            noise_band=str(d.get("noise_band", "below_16500")),
            distance_m=d.get("distance_m"),
            material=d.get("material"),
            n_events=int(d.get("n_events", 2)),
            duration_ms=d.get("duration_ms"),
        )


@dataclass(frozen=True)
class Plan:
    entries: tuple[PlanEntry, ...]
    amplitude: float = DEFAULT_AMPLITUDE
    clutter_paths: tuple[int, int] = (2, 4)  # per-session environment echoes
    clutter_gain: float = 0.05
    name: str = "custom"

    def __post_init__(self):
        if not self.entries:
            raise ParameterError("plan must contain at least one entry")

    def with_noise(self, level_db: float, band: str) -> "Plan":
        entries = tuple(
            replace(e, noise_db=level_db, noise_band=band) for e in self.entries
        )
        return replace(self, entries=entries, name=f"{self.name}@{level_db}dB")

    def classes(self) -> tuple[Gesture, ...]:
        seen = []
        for e in self.entries:
            if e.gesture not in seen:
                seen.append(e.gesture)
        return tuple(seen)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "amplitude": self.amplitude,
            "clutter_paths": list(self.clutter_paths),
            "clutter_gain": self.clutter_gain,
            "entries": [e.to_json() for e in self.entries],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Plan":
        known = {"name", "amplitude", "clutter_paths", "clutter_gain", "entries"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown plan keys {sorted(unknown)}")
        if "entries" not in d or not d["entries"]:
            raise ParameterError("plan must contain entries")
        return cls(
            entries=tuple(PlanEntry.from_json(e) for e in d["entries"]),
            amplitude=float(d.get("amplitude", DEFAULT_AMPLITUDE)),
            clutter_paths=tuple(d.get("clutter_paths", (2, 4))),
            clutter_gain=float(d.get("clutter_gain", 0.05)),
            name=str(d.get("name", "custom")),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "Plan":
        return cls.from_json(json.loads(text))


def make_default_plan(
    sessions: int = 10,
    noise_db: float = 17.44,
    noise_band: str = "below_16500",
) -> Plan:
    """The 12-way catalog: baseline, six held poses, five touch actions."""
    entries = [
        PlanEntry(g, sessions, noise_db, noise_band)
        for g in (Gesture.NORMAL, Gesture.WRIST_UP, Gesture.COVER_SCREEN,
                  Gesture.BLOCK_LEFT, Gesture.CLOSE_TO_MOUTH,
                  Gesture.HAND_IN_POCKET, Gesture.PHONE_COVER_WATCH,
                  Gesture.CLICK_MIC, Gesture.CLICK_MIC_ADD, Gesture.CLICK_SPEAKER,
                  Gesture.PINCH_SIDES, Gesture.PINCH_DIAG)
    ]
    return Plan(tuple(entries), name="default12")


def make_indirect_plan(sessions: int = 6, noise_db: float = 17.44) -> Plan:
    """Same-side gestures on a held Wrist Up, plus hold-only negatives."""
    entries = [
        PlanEntry(g, sessions, noise_db, n_events=3)
        for g in INDIRECT_GESTURES
    ]
    entries.append(PlanEntry(Gesture.WRIST_UP, sessions, noise_db))
    return Plan(tuple(entries), name="indirect")


def make_distance_plan(
    distance_m: float, sessions: int = 10, noise_db: float = 17.44
) -> Plan:
    """Touchless probes at one hand distance, with the baseline class."""
    gestures = (Gesture.WRIST_UP, Gesture.BLOCK_LEFT, Gesture.COVER_SCREEN)
    entries = [
        PlanEntry(g, sessions, noise_db, distance_m=distance_m) for g in gestures
    ]
    entries.append(PlanEntry(Gesture.NORMAL, sessions, noise_db))
    return Plan(tuple(entries), name=f"distance_{distance_m * 100:.0f}cm")


def _jittered_scenario(entry: PlanEntry, plan: Plan, rng) -> GestureScenario:
    """Re-wear and environment variation applied around the clean template."""
    base_euler = (
        rng.uniform(-10.0, 10.0),
        rng.uniform(-12.0, 25.0),
        rng.uniform(-180.0, 180.0),
    )
    distance = entry.distance_m
    if distance is not None:
        distance = float(distance * rng.uniform(0.85, 1.15))
    duration = entry.duration_ms
    kwargs = dict(
        distance_m=distance,
        material=entry.material,
        duration_ms=duration,
        base_euler=base_euler,
        step_scale=float(rng.uniform(0.9, 1.1)),
        contact_scale=float(rng.uniform(0.85, 1.15)),
    )
    if entry.gesture in DYNAMIC_GESTURES or entry.gesture in INDIRECT_GESTURES:
        dur = duration or (
            INDIRECT_DURATION_MS
            if entry.gesture in INDIRECT_GESTURES
            else DYNAMIC_DURATION_MS
        )
        n_ev = max(entry.n_events, 3) if entry.gesture in INDIRECT_GESTURES else entry.n_events
        times = _default_event_times(dur, n_ev)
        kwargs["event_times_ms"] = [
            float(t + rng.uniform(-120.0, 120.0)) for t in times
        ]
    scenario = build_scenario(entry.gesture, **kwargs)

    # per-path gain perturbation (re-wearing the watch); reflection delays
    # wander with hand placement while the on-body geometry stays fixed
    channel_factor = {ch: rng.uniform(0.8, 1.2) for ch in CHANNELS}
    factors = []
    for p in scenario.paths:
        f = channel_factor[p.target_channel] * rng.uniform(0.9, 1.1)
        factors.append(f)
        p.gain = min(1.0, p.gain * f)
        if p.kind == "reflection":
            p.delay = max(0, p.delay + int(rng.integers(-2, 3)))
    timeline = [
        replace(ev, gain=min(1.0, ev.gain * factors[ev.path_index]))
        for ev in scenario.timeline
    ]
    scenario.timeline = timeline

    # environment clutter: weak echoes that vary from session to session
    lo, hi = plan.clutter_paths
    for _ in range(int(rng.integers(lo, hi + 1))):
        scenario.paths.append(
            ScenePath(
                "reflection",
                int(rng.integers(8, 61)),
                min(0.15, float(abs(rng.normal(0.0, plan.clutter_gain)))),
                CHANNELS[int(rng.integers(0, len(CHANNELS)))],
            )
        )
    return scenario


def generate_dataset(plan: Plan, seed: int = 0) -> list[SessionRecording]:
    """All sessions of a plan; bit-identical for identical (plan, seed)."""
    recordings = []
    index = 0
    for e_i, entry in enumerate(plan.entries):
        if entry.sessions < 1:
            raise ParameterError(f"entry {e_i} has no sessions")
        for s_i in range(entry.sessions):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
            rng = np.random.default_rng(ss)
            audio_seed, imu_seed, noise_seed = (
                int(v) for v in rng.integers(0, 2**62, size=3)
            )
            scenario = _jittered_scenario(entry, plan, rng)
            spec = ChirpSpec(amplitude=plan.amplitude)
            audio = render_audio(scenario, spec, seed=audio_seed)
            audio = add_noise(audio, entry.noise_db, entry.noise_band, seed=noise_seed)
            imu = render_imu(scenario, IMU_RATE, seed=imu_seed)
            recordings.append(
                SessionRecording(
                    audio=audio,
                    imu=imu,
                    labels=list(scenario.spans),
                    seed=seed,
                    name=f"{entry.gesture.value}_{e_i:02d}_{s_i:03d}",
                )
            )
            index += 1
    return recordings
