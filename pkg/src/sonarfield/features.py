"""Window-to-feature mapping: chunk energies, high-band spectra, IMU stats.

The layout is a pure function of the configuration: per channel and chunk
one short-term energy and ``n_bands`` log band energies, then five moment
statistics for each of four IMU series.  With two channels and 32 bands
the vector has 6 + 192 + 20 = 218 entries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import FeatureError
from .signal import band_features, chunk_spectrum, short_term_energy
from .stream import CHUNKS_PER_WINDOW, Window

SERIES_NAMES = ("accel_mag", "roll", "pitch", "yaw")
STAT_NAMES = ("kurtosis", "skewness", "mean", "variance", "max")
N_IMU_FEATURES = len(SERIES_NAMES) * len(STAT_NAMES)

ALL_SENSORS = frozenset({"mic_right", "mic_band", "imu"})


@dataclass(frozen=True)
class FeatureConfig:
    channels: tuple[str, ...] = ("mic_right", "mic_band")
    n_bands: int = 32
    band_low_hz: float = 16500.0
    band_high_hz: float = 20000.0
    include_imu: bool = True
    highpass_cutoff: float = 16500.0  # applied once per session, upstream

    @property
    def length(self) -> int:
        c = len(self.channels)
        n = c * CHUNKS_PER_WINDOW * (1 + self.n_bands)
        if self.include_imu:
            n += N_IMU_FEATURES
        return n

    def names(self) -> list[str]:
        out = [
            f"energy[{ch}][{k}]"
            for ch in self.channels
            for k in range(CHUNKS_PER_WINDOW)
        ]
        out += [
            f"band[{ch}][{k}][{b}]"
            for ch in self.channels
            for k in range(CHUNKS_PER_WINDOW)
            for b in range(self.n_bands)
        ]
        if self.include_imu:
            out += [f"imu[{s}][{st}]" for s in SERIES_NAMES for st in STAT_NAMES]
        return out

    def spans(self) -> dict[str, slice]:
        """Index ranges of the named feature groups."""
        c = len(self.channels)
        e = c * CHUNKS_PER_WINDOW
        spans = {}
        for i, ch in enumerate(self.channels):
            spans[f"energy[{ch}]"] = slice(
                i * CHUNKS_PER_WINDOW, (i + 1) * CHUNKS_PER_WINDOW
            )
            width = CHUNKS_PER_WINDOW * self.n_bands
            spans[f"band[{ch}]"] = slice(e + i * width, e + (i + 1) * width)
        if self.include_imu:
            base = e + c * CHUNKS_PER_WINDOW * self.n_bands
            spans["imu"] = slice(base, base + N_IMU_FEATURES)
        return spans

    def for_sensors(self, sensors) -> "FeatureConfig":
        """Restrict the layout to a subset of {mic_right, mic_band, imu}."""
        sensors = frozenset(sensors)
        unknown = sensors - ALL_SENSORS
        if unknown:
            raise FeatureError(f"unknown sensors {sorted(unknown)}")
        if not sensors:
            raise FeatureError("at least one sensor is required")
        channels = tuple(ch for ch in self.channels if ch in sensors)
        return replace(self, channels=channels, include_imu="imu" in sensors)


def moment_stats(series: np.ndarray) -> np.ndarray:
    """kurtosis (excess), skewness, mean, variance, max of one series.

    Zero-variance input gets skewness and kurtosis of 0 by convention.
    """
    x = np.asarray(series, dtype=np.float64)
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d**2))
    if m2 <= 1e-24:
        skew = kurt = 0.0
        m2 = 0.0
    else:
        skew = float(np.mean(d**3)) / m2**1.5
        kurt = float(np.mean(d**4)) / m2**2 - 3.0
    return np.array([kurt, skew, mean, m2, float(np.max(x))])


def audio_features(window: Window, config: FeatureConfig) -> np.ndarray:
    """Per channel and chunk: one energy value plus the band-energy vector."""
    chunks = window.audio_chunks()
    energies = []
    bands = []
    for ch in config.channels:
        ci = window.channels.index(ch)
        for k in range(CHUNKS_PER_WINDOW):
            chunk = chunks[ci, k]
            energies.append(short_term_energy(chunk))
            spec = chunk_spectrum(chunk, window.sample_rate)
            bands.append(
                band_features(
                    spec, config.band_low_hz, config.band_high_hz, config.n_bands
                )
            )
    if not energies:
        return np.empty(0)
    return np.concatenate([np.asarray(energies), np.concatenate(bands)])


def imu_features(window: Window) -> np.ndarray:
    """Moment statistics of accel magnitude, roll, pitch, and yaw."""
    if window.imu.shape[1] < 4:
        raise FeatureError("imu_features needs at least 4 IMU samples")
    series = [window.accel_magnitude(), *window.imu_euler]
    return np.concatenate([moment_stats(s) for s in series])


def assemble(window: Window, config: FeatureConfig | None = None) -> np.ndarray:
    """Full feature vector for one window, per the configured layout."""
    config = config or FeatureConfig()
    parts = [audio_features(window, config)]
    if config.include_imu:
        parts.append(imu_features(window))
    vec = np.concatenate(parts) if parts else np.empty(0)
    if not np.all(np.isfinite(vec)):
        raise FeatureError("feature vector contains NaN or Inf")
    return vec


def feature_matrix(windows, config: FeatureConfig | None = None) -> np.ndarray:
    config = config or FeatureConfig()
    if not windows:
        return np.empty((0, config.length))
    return np.stack([assemble(w, config) for w in windows])


def export_csv(path, matrix: np.ndarray, config: FeatureConfig) -> None:
    """Feature matrix as CSV, one window per row, header from the layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(config.names())
        for row in np.atleast_2d(matrix):
            writer.writerow([repr(v) for v in row])
