"""Deterministic DSP core: chirp synthesis, filtering, spectra, energies.

All operations are pure functions of their inputs and are safe to call
concurrently.  Amplitudes are normalized to [-1, 1]; no absolute SPL
calibration is applied anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

from .errors import ParameterError

#: Default STFT analysis window; per-chunk spectra use the full rectangular
#: chunk instead so that Parseval consistency is exact.
DEFAULT_STFT_WINDOW = "hann"


@dataclass(frozen=True)
class ChirpSpec:
    """Parameters of the emitted up/down chirp.

    One chunk sweeps ``f_low -> f_high`` over its first half and back down
    over the second half.
    """

    f_low: float = 16500.0
    f_high: float = 20000.0
    sample_rate: float = 48000.0
    chunk_len: int = 4096
    amplitude: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.f_low < self.f_high < self.sample_rate / 2:
            raise ParameterError(
                f"need 0 < f_low < f_high < Nyquist, got {self.f_low}, "
                f"{self.f_high} at {self.sample_rate} Hz"
            )
        if self.chunk_len < 2 or self.chunk_len % 2 != 0:
            raise ParameterError(f"chunk_len must be even and >= 2, got {self.chunk_len}")
        if not 0.0 < self.amplitude <= 1.0:
            raise ParameterError(f"amplitude must be in (0, 1], got {self.amplitude}")

    @property
    def chunk_ms(self) -> float:
        return 1000.0 * self.chunk_len / self.sample_rate

    @property
    def chunks_per_second(self) -> float:
        return self.sample_rate / self.chunk_len


@dataclass
class AudioStream:
    """Multi-channel audio with named channels and a start time in ms."""

    sample_rate: float
    channels: tuple[str, ...]
    data: np.ndarray  # (n_channels, n_samples), amplitudes in [-1, 1]
    start_time: float = 0.0

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        self.channels = tuple(self.channels)
        if self.data.shape[0] != len(self.channels):
            raise ParameterError(
                f"{len(self.channels)} channel names for {self.data.shape[0]} rows"
            )
        peak = float(np.max(np.abs(self.data))) if self.data.size else 0.0
        if peak > 1.0 + 1e-9:
            raise ParameterError(f"samples must lie in [-1, 1], peak is {peak:.4g}")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_ms(self) -> float:
        return 1000.0 * self.n_samples / self.sample_rate

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration_ms

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[self.channels.index(name)]
        except ValueError:
            raise ParameterError(f"no channel named {name!r} in {self.channels}") from None


@dataclass
class Spectrum:
    """One-sided magnitude spectrum scaled for exact Parseval consistency.

    ``sum(magnitudes**2)`` equals the time-domain energy of the source
    segment (for the rectangular window used by :func:`chunk_spectrum`).
    """

    bin_hz: float
    magnitudes: np.ndarray
    source_len: int

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        expected = self.source_len // 2 + 1
        if self.magnitudes.shape != (expected,):
            raise ParameterError(
                f"expected {expected} magnitude bins for source_len "
                f"{self.source_len}, got {self.magnitudes.shape}"
            )
        if np.any(self.magnitudes < 0):
            raise ParameterError("magnitudes must be non-negative")

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.magnitudes.size) * self.bin_hz

    def band_energy(self, f_min: float, f_max: float) -> float:
        """Total energy of bins whose center frequency falls in [f_min, f_max]."""
        f = self.frequencies
        mask = (f >= f_min) & (f <= f_max)
        return float(np.sum(self.magnitudes[mask] ** 2))


def chirp_freq_profile(spec: ChirpSpec, n_chunks: int = 1) -> np.ndarray:
    """Instantaneous frequency at every sample of an ``n_chunks`` chirp."""
    if n_chunks < 1:
        raise ParameterError(f"n_chunks must be >= 1, got {n_chunks}")
    half = spec.chunk_len // 2
    k = np.arange(half)
    up = spec.f_low + (spec.f_high - spec.f_low) * k / half
    down = spec.f_high - (spec.f_high - spec.f_low) * k / half
    return np.tile(np.concatenate([up, down]), n_chunks)


def make_chirp(spec: ChirpSpec, n_chunks: int) -> AudioStream:
    """Synthesize the up/down chirp with continuous phase across chunks."""
    freq = chirp_freq_profile(spec, n_chunks)
    # phase[k] = 2*pi/fs * sum_{j<k} f[j]; increment over [k, k+1) is f[k]
    phase = np.empty_like(freq)
    phase[0] = 0.0
    np.cumsum(freq[:-1], out=phase[1:])
    phase *= 2.0 * np.pi / spec.sample_rate
    samples = spec.amplitude * np.sin(phase)
    return AudioStream(spec.sample_rate, ("tx",), samples[np.newaxis, :])


def _highpass_taps(cutoff: float, sample_rate: float) -> np.ndarray:
    # Transition width scales with the cutoff so the 1 dB point stays below
    # 1.05 * cutoff; Hamming window gives > 50 dB of stopband rejection.
    transition = 0.03 * cutoff
    numtaps = int(np.ceil(3.3 * sample_rate / transition))
    numtaps += 1 - numtaps % 2  # type I FIR needs odd length
    return sp_signal.firwin(
        numtaps, cutoff, window="hamming", pass_zero=False, fs=sample_rate
    )


def highpass(stream: AudioStream, cutoff: float) -> AudioStream:
    """Linear-phase FIR high-pass; output has the same length and timing."""
    if not 0.0 < cutoff < stream.sample_rate / 2:
        raise ParameterError(
            f"cutoff must be in (0, Nyquist), got {cutoff} at {stream.sample_rate} Hz"
        )
    taps = _highpass_taps(cutoff, stream.sample_rate)
    # 'same' mode centers the symmetric kernel, compensating the group delay.
    out = np.stack(
        [sp_signal.fftconvolve(ch, taps, mode="same") for ch in stream.data]
    )
    np.clip(out, -1.0, 1.0, out=out)
    return AudioStream(stream.sample_rate, stream.channels, out, stream.start_time)


def short_term_energy(samples: np.ndarray) -> float:
    """Sum of squared amplitudes over the given samples."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ParameterError("short_term_energy needs a non-empty input")
    return float(np.dot(x.ravel(), x.ravel()))


def _one_sided_magnitudes(frame: np.ndarray) -> np.ndarray:
    n = frame.size
    spec = np.abs(np.fft.rfft(frame))
    weights = np.full(spec.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return spec * np.sqrt(weights / n)


def chunk_spectrum(chunk: np.ndarray, sample_rate: float = 48000.0) -> Spectrum:
    """Magnitude spectrum of one full chunk (rectangular window)."""
    x = np.asarray(chunk, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ParameterError(f"chunk must be a 1-D sequence, got shape {x.shape}")
    return Spectrum(sample_rate / x.size, _one_sided_magnitudes(x), x.size)


def band_features(
    spec: Spectrum, f_min: float, f_max: float, n_bands: int
) -> np.ndarray:
    """Log-compressed energies of ``n_bands`` equal-width sub-bands.

    Band ``i`` covers ``[f_min + i*w, f_min + (i+1)*w)`` with
    ``w = (f_max - f_min) / n_bands``; each value is ``log(1 + energy)``.
    """
    nyquist = spec.bin_hz * (spec.magnitudes.size - 1)
    if not f_min < f_max <= nyquist + 1e-9:
        raise ParameterError(f"need f_min < f_max <= Nyquist, got [{f_min}, {f_max}]")
    if n_bands < 1:
        raise ParameterError(f"n_bands must be >= 1, got {n_bands}")
    f = spec.frequencies
    mask = (f >= f_min) & (f <= f_max)
    if not np.any(mask):
        raise ParameterError("no FFT bins inside the requested range")
    width = (f_max - f_min) / n_bands
    idx = np.minimum(((f[mask] - f_min) / width).astype(int), n_bands - 1)
    counts = np.bincount(idx, minlength=n_bands)
    if np.any(counts == 0):
        empty = int(np.argmin(counts))
        raise ParameterError(
            f"band {empty} is empty: {spec.bin_hz:.2f} Hz bins are too coarse "
            f"for {n_bands} bands over [{f_min}, {f_max}]"
        )
    energies = np.bincount(idx, weights=spec.magnitudes[mask] ** 2, minlength=n_bands)
    return np.log1p(energies)


def stft(
    stream: AudioStream,
    window_len: int,
    hop: int,
    channel: str | None = None,
    window: str = DEFAULT_STFT_WINDOW,
) -> list[Spectrum]:
    """Short-time spectra; frame count is floor((len - window_len)/hop) + 1."""
    x = stream.channel(channel) if channel is not None else stream.data[0]
    if hop < 1:
        raise ParameterError(f"hop must be >= 1, got {hop}")
    if window_len < 2 or window_len > x.size:
        raise ParameterError(
            f"window_len must be in [2, {x.size}], got {window_len}"
        )
    win = sp_signal.get_window(window, window_len, fftbins=True)
    n_frames = (x.size - window_len) // hop + 1
    bin_hz = stream.sample_rate / window_len
    frames = []
    for i in range(n_frames):
        seg = x[i * hop : i * hop + window_len] * win
        frames.append(Spectrum(bin_hz, _one_sided_magnitudes(seg), window_len))
    return frames
