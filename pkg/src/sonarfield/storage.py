"""On-disk session formats: PCM WAV, IMU CSV, label JSONL, manifest JSON.

Layout of one session directory:
    audio.wav    16-bit little-endian PCM, 48 kHz, 2 channels
                 (channel 0 = mic_right, channel 1 = mic_band)
    imu.csv      header ``t_ms,ax,ay,az,roll,pitch,yaw``
    labels.jsonl one ``{"start_ms":..,"end_ms":..,"gesture":..,"kind":..}`` per line

A manifest JSON lists the sessions of a dataset together with the plan and
seed that produced them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DataError
from .scene import CHANNELS, LabelSpan, Plan, SessionRecording
from .signal import AudioStream
from .stream import ImuStream

MANIFEST_VERSION = 1
_PCM_SCALE = 32767.0


def write_session(directory, recording: SessionRecording) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pcm = np.round(recording.audio.data.T * _PCM_SCALE).astype(np.int16)
    wavfile.write(directory / "audio.wav", int(recording.audio.sample_rate), pcm)

    imu = recording.imu
    with open(directory / "imu.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ms", "ax", "ay", "az", "roll", "pitch", "yaw"])
        t = imu.times_ms()
        for i in range(imu.n_samples):
            writer.writerow(
                [repr(float(t[i]))]
                + [repr(float(v)) for v in imu.accel[:, i]]
                + [repr(float(v)) for v in imu.euler[:, i]]
            )

    with open(directory / "labels.jsonl", "w") as fh:
        for span in recording.labels:
            fh.write(json.dumps(span.to_json()) + "\n")
    return directory


def read_session(directory, seed: int = 0, name: str = "") -> SessionRecording:
    directory = Path(directory)
    wav_path = directory / "audio.wav"
    try:
        rate, pcm = wavfile.read(wav_path)
    except Exception as exc:  # wavfile raises a mix of OSError/ValueError
        raise DataError(f"cannot read WAV file {wav_path}: {exc}") from None
    if pcm.ndim != 2 or pcm.shape[1] != len(CHANNELS):
        raise DataError(f"{wav_path}: expected {len(CHANNELS)} channels")
    if pcm.dtype != np.int16:
        raise DataError(f"{wav_path}: expected 16-bit PCM, got {pcm.dtype}")
    audio = AudioStream(float(rate), CHANNELS, pcm.T.astype(np.float64) / _PCM_SCALE)

    imu_path = directory / "imu.csv"
    try:
        table = np.genfromtxt(imu_path, delimiter=",", skip_header=1)
    except OSError as exc:
        raise DataError(f"cannot read IMU file {imu_path}: {exc}") from None
    if table.ndim != 2 or table.shape[1] != 7 or not np.all(np.isfinite(table)):
        raise DataError(f"{imu_path}: expected 7 finite columns")
    t = table[:, 0]
    period = float(np.median(np.diff(t)))
    if period <= 0:
        raise DataError(f"{imu_path}: timestamps are not increasing")
    imu = ImuStream(1000.0 / period, float(t[0]), table[:, 1:4].T, table[:, 4:7].T)

    labels = []
    labels_path = directory / "labels.jsonl"
    try:
        with open(labels_path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    labels.append(LabelSpan.from_json(json.loads(line)))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read labels {labels_path}: {exc}") from None
    return SessionRecording(audio, imu, labels, seed, name or directory.name)


def write_manifest(
    path, plan: Plan, seed: int, session_dirs: list[str], run_config: dict | None = None
) -> Path:
    path = Path(path)
    doc = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "plan": plan.to_json(),
        "sessions": list(session_dirs),
        "run_config": run_config or {},
    }
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_manifest(path) -> tuple[Plan, int, list[Path], dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    if doc.get("version") != MANIFEST_VERSION:
        raise DataError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    try:
        plan = Plan.from_json(doc["plan"])
        seed = int(doc["seed"])
        dirs = [path.parent / d for d in doc["sessions"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed manifest: {exc}") from None
    return plan, seed, dirs, doc.get("run_config", {})


def write_dataset(out_dir, plan: Plan, seed: int, recordings, run_config=None) -> Path:
    """Write all sessions plus the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rel_dirs = []
    for rec in recordings:
        rel = Path("sessions") / rec.name
        write_session(out_dir / rel, rec)
        rel_dirs.append(str(rel))
    return write_manifest(out_dir / "manifest.json", plan, seed, rel_dirs, run_config)


def load_dataset(manifest_path) -> tuple[Plan, int, list[SessionRecording], dict]:
    plan, seed, dirs, run_config = load_manifest(manifest_path)
    recordings = [read_session(d, seed=seed) for d in dirs]
    return plan, seed, recordings, run_config
