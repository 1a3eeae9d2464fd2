"""Stream alignment, sliding-window segmentation, and peak-driven windows.

Windows are 300 ms with a 150 ms step.  The audio payload of a window is
the three complete chunks starting at the last chunk boundary at or before
the window's nominal start, so every payload carries full up/down sweeps.
The IMU slice covers the full 300 ms from the same instant, which keeps
the audio/IMU skew below half an IMU sample period (2.5 ms at 200 Hz).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import AlignmentError, ParameterError
from .gestures import Gesture
from .signal import AudioStream, highpass

log = logging.getLogger(__name__)

WINDOW_MS = 300.0
STEP_MS = 150.0
MAX_SKEW_MS = 5.0
CHUNKS_PER_WINDOW = 3
#: Mirrors the collection protocol: discard this much at each end of a
#: held-gesture label span before harvesting training windows.
STATIC_TRIM_MS = 2000.0


@dataclass
class ImuStream:
    """200 Hz inertial trace: 3-axis acceleration (g) and Euler angles (deg)."""

    rate: float
    t0: float  # ms
    accel: np.ndarray  # (3, n)
    euler: np.ndarray  # (3, n): roll, pitch, yaw

    def __post_init__(self):
        self.accel = np.atleast_2d(np.asarray(self.accel, dtype=np.float64))
        self.euler = np.atleast_2d(np.asarray(self.euler, dtype=np.float64))
        if self.rate <= 0:
            raise ParameterError(f"rate must be positive, got {self.rate}")
        if self.accel.shape[0] != 3 or self.euler.shape[0] != 3:
            raise ParameterError("accel and euler must each have three axes")
        if self.accel.shape[1] != self.euler.shape[1]:
            raise ParameterError("accel and euler must have equal length")

    @property
    def n_samples(self) -> int:
        return self.accel.shape[1]

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.rate

    @property
    def duration_ms(self) -> float:
        return self.n_samples * self.period_ms

    @property
    def end_time(self) -> float:
        return self.t0 + self.duration_ms

    def magnitude(self) -> np.ndarray:
        """Overall acceleration |a| including gravity."""
        return np.sqrt(np.sum(self.accel**2, axis=0))

    def times_ms(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) * self.period_ms


@dataclass
class Window:
    """One aligned 300 ms slice: 3 complete audio chunks + ~60 IMU samples."""

    audio: np.ndarray  # (n_channels, 3 * chunk_len)
    channels: tuple[str, ...]
    imu: np.ndarray  # (6, ~60): ax, ay, az, roll, pitch, yaw
    center_time: float  # ms, absolute
    skew: float  # ms between audio payload start and IMU slice start
    sample_rate: float
    chunk_len: int

    def __post_init__(self):
        if self.audio.shape[1] != CHUNKS_PER_WINDOW * self.chunk_len:
            raise ParameterError(
                f"audio payload must be exactly {CHUNKS_PER_WINDOW} chunks"
            )
        if abs(self.skew) > MAX_SKEW_MS:
            raise ParameterError(f"|skew| must be <= {MAX_SKEW_MS} ms, got {self.skew}")
        if not 58 <= self.imu.shape[1] <= 62:
            raise ParameterError(f"IMU slice must hold 58..62 samples, got {self.imu.shape[1]}")

    def audio_chunks(self) -> np.ndarray:
        """Audio reshaped to (n_channels, 3, chunk_len)."""
        c = self.audio.shape[0]
        return self.audio.reshape(c, CHUNKS_PER_WINDOW, self.chunk_len)

    @property
    def imu_accel(self) -> np.ndarray:
        return self.imu[:3]

    @property
    def imu_euler(self) -> np.ndarray:
        return self.imu[3:]

    def accel_magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.imu[:3] ** 2, axis=0))


@dataclass
class AlignedPair:
    """Audio and IMU trimmed to a shared origin (audio chunk-aligned)."""

    audio: AudioStream
    imu: ImuStream
    chunk_len: int = 4096
    start_skew: float = 0.0

    @property
    def duration_ms(self) -> float:
        return min(
            self.audio.duration_ms,
            self.imu.end_time - self.audio.start_time,
        )

    @property
    def chunk_ms(self) -> float:
        return 1000.0 * self.chunk_len / self.audio.sample_rate


class PeakWindows(NamedTuple):
    windows: list[Window]
    truncated: bool


def align(audio: AudioStream, imu: ImuStream, chunk_len: int = 4096) -> AlignedPair:
    """Trim both streams to their overlap with residual skew <= 5 ms.

    Audio is trimmed in whole chunks so the chunk grid stays anchored to
    the stream start; the IMU is trimmed to its own sample grid.
    """
    overlap_start = max(audio.start_time, imu.t0)
    overlap_end = min(audio.end_time, imu.end_time)
    if overlap_end - overlap_start < MAX_SKEW_MS:
        raise AlignmentError(
            f"streams do not overlap: audio [{audio.start_time:.1f}, "
            f"{audio.end_time:.1f}] ms vs imu [{imu.t0:.1f}, {imu.end_time:.1f}] ms"
        )
    chunk_ms = 1000.0 * chunk_len / audio.sample_rate
    n_chunks_trim = int(np.ceil((overlap_start - audio.start_time) / chunk_ms - 1e-9))
    n_chunks_trim = max(n_chunks_trim, 0)
    a_start = audio.start_time + n_chunks_trim * chunk_ms
    a_data = audio.data[:, n_chunks_trim * chunk_len :]
    if a_data.shape[1] < chunk_len:
        raise AlignmentError("audio overlap is shorter than one chunk")
    trimmed_audio = AudioStream(audio.sample_rate, audio.channels, a_data, a_start)

    n_imu_trim = int(round((a_start - imu.t0) / imu.period_ms))
    n_imu_trim = min(max(n_imu_trim, 0), imu.n_samples - 1)
    i_start = imu.t0 + n_imu_trim * imu.period_ms
    trimmed_imu = ImuStream(
        imu.rate, i_start, imu.accel[:, n_imu_trim:], imu.euler[:, n_imu_trim:]
    )
    skew = i_start - a_start
    if abs(skew) > MAX_SKEW_MS:
        raise AlignmentError(f"residual skew {skew:.2f} ms exceeds {MAX_SKEW_MS} ms")
    return AlignedPair(trimmed_audio, trimmed_imu, chunk_len, skew)


def _window_at(pair: AlignedPair, start_sample: int) -> Window | None:
    """Build the window whose audio payload starts at ``start_sample``."""
    audio, imu = pair.audio, pair.imu
    fs = audio.sample_rate
    payload_len = CHUNKS_PER_WINDOW * pair.chunk_len
    if start_sample < 0 or start_sample + payload_len > audio.n_samples:
        return None
    start_ms = audio.start_time + 1000.0 * start_sample / fs
    imu_start = int(round((start_ms - imu.t0) / imu.period_ms))
    imu_count = int(round(WINDOW_MS / imu.period_ms))
    if imu_start < 0 or imu_start + imu_count > imu.n_samples:
        return None
    sl = slice(imu_start, imu_start + imu_count)
    imu_block = np.vstack([imu.accel[:, sl], imu.euler[:, sl]])
    skew = (imu.t0 + imu_start * imu.period_ms) - start_ms
    return Window(
        audio=audio.data[:, start_sample : start_sample + payload_len],
        channels=audio.channels,
        imu=imu_block,
        center_time=start_ms + WINDOW_MS / 2.0,
        skew=skew,
        sample_rate=fs,
        chunk_len=pair.chunk_len,
    )


def segment(
    pair: AlignedPair, window_ms: float = WINDOW_MS, step_ms: float = STEP_MS
) -> list[Window]:
    """Sliding windows; count is floor((duration - window)/step) + 1.

    A stream shorter than one window yields an empty list with a warning.
    """
    duration = pair.duration_ms
    if duration < window_ms:
        log.warning(
            "stream of %.0f ms is shorter than one %.0f ms window", duration, window_ms
        )
        return []
    fs = pair.audio.sample_rate
    n_windows = int((duration - window_ms) // step_ms) + 1
    out = []
    for k in range(n_windows):
        nominal = int(round(k * step_ms * fs / 1000.0))
        start = (nominal // pair.chunk_len) * pair.chunk_len
        w = _window_at(pair, start)
        if w is None:  # stream edge after snapping; should not happen
            log.warning("window %d at sample %d does not fit, skipped", k, start)
            continue
        out.append(w)
    return out


def detect_peaks(
    imu: ImuStream,
    k_mad: float = 6.0,
    refractory_ms: float = 300.0,
) -> list[float]:
    """Times (ms) of acceleration-magnitude peaks above median + k_mad * MAD.

    Peaks closer than ``refractory_ms`` to an accepted peak are suppressed,
    earliest first.
    """
    if imu.n_samples == 0:
        raise ParameterError("detect_peaks needs a non-empty stream")
    mag = imu.magnitude()
    med = float(np.median(mag))
    mad = float(np.median(np.abs(mag - med)))
    threshold = med + k_mad * max(mad, 1e-9)
    above = mag > threshold
    local_max = np.zeros_like(above)
    if mag.size >= 3:
        local_max[1:-1] = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])
    candidates = np.flatnonzero(above & local_max)
    peaks: list[float] = []
    last = -np.inf
    for i in candidates:
        t = imu.t0 + i * imu.period_ms
        if t - last >= refractory_ms:
            peaks.append(t)
            last = t
    return peaks


def windows_around_peak(pair: AlignedPair, peak_ms: float) -> PeakWindows:
    """The peak-calibrated window plus its step neighbors.

    The center window is chunk-snapped so the peak lies within 75 ms of its
    midpoint; the neighbors sit one step before and after.  Missing margin
    yields fewer windows with ``truncated`` set.
    """
    fs = pair.audio.sample_rate
    rel_ms = peak_ms - pair.audio.start_time
    chunk_ms = pair.chunk_ms
    center_chunk = int(round((rel_ms - WINDOW_MS / 2.0) / chunk_ms))
    step_chunks = int(round(STEP_MS / chunk_ms))
    windows = []
    truncated = False
    for dc in (-step_chunks, 0, step_chunks):
        start = (center_chunk + dc) * pair.chunk_len
        w = _window_at(pair, start)
        if w is None:
            truncated = True
        else:
            windows.append(w)
    if truncated:
        log.warning(
            "peak at %.0f ms has insufficient margin: %d of 3 windows",
            peak_ms,
            len(windows),
        )
    return PeakWindows(windows, truncated)


# ---------------------------------------------------------------------------
# Training-window harvesting
# ---------------------------------------------------------------------------


def prepare_session(recording, highpass_cutoff: float = 16500.0) -> AlignedPair:
    """High-pass the received audio and align it with the IMU trace."""
    audio = recording.audio
    if highpass_cutoff:
        audio = highpass(audio, highpass_cutoff)
    return align(audio, recording.imu)


def labeled_windows(
    pair: AlignedPair,
    labels: Iterable,
    static_trim_ms: float = STATIC_TRIM_MS,
) -> list[tuple[Window, Gesture]]:
    """Training windows for one session.

    Held-gesture spans contribute the sliding windows that lie fully inside
    the span after trimming ``static_trim_ms`` at each boundary.  Transient
    spans contribute the three peak-calibrated windows around the span's
    acceleration-magnitude argmax, all inheriting the span label.
    """
    out: list[tuple[Window, Gesture]] = []
    all_windows = None
    for span in labels:
        if span.kind == "static":
            lo = span.start_ms + static_trim_ms
            hi = span.end_ms - static_trim_ms
            if hi - lo < WINDOW_MS:
                continue
            if all_windows is None:
                all_windows = segment(pair)
            for w in all_windows:
                if lo <= w.center_time - WINDOW_MS / 2 and w.center_time + WINDOW_MS / 2 <= hi:
                    out.append((w, span.gesture))
        else:
            peak_ms = _span_peak_ms(pair.imu, span)
            if peak_ms is None:
                continue
            pw = windows_around_peak(pair, peak_ms)
            out.extend((w, span.gesture) for w in pw.windows)
    return out


def indirect_windows(
    pair: AlignedPair,
    labels: Iterable,
    negative: Gesture = Gesture.WRIST_UP,
    min_overlap_ms: float = 150.0,
) -> list[tuple[Window, Gesture]]:
    """Uniform windows labeled for the second-stage IMU classifier.

    A window takes the label of a transient span it overlaps by at least
    ``min_overlap_ms``; all other windows become the negative (held Wrist
    Up) class.
    """
    spans = [s for s in labels if s.kind == "dynamic"]
    out = []
    for w in segment(pair):
        w_lo = w.center_time - WINDOW_MS / 2
        w_hi = w.center_time + WINDOW_MS / 2
        label = negative
        for s in spans:
            overlap = min(w_hi, s.end_ms) - max(w_lo, s.start_ms)
            if overlap >= min_overlap_ms:
                label = s.gesture
                break
        out.append((w, label))
    return out


def _span_peak_ms(imu: ImuStream, span) -> float | None:
    i_lo = int(np.ceil((span.start_ms - imu.t0) / imu.period_ms))
    i_hi = int(np.floor((span.end_ms - imu.t0) / imu.period_ms))
    i_lo, i_hi = max(i_lo, 0), min(i_hi, imu.n_samples - 1)
    if i_hi <= i_lo:
        return None
    mag = imu.magnitude()[i_lo : i_hi + 1]
    return imu.t0 + (i_lo + int(np.argmax(mag))) * imu.period_ms
