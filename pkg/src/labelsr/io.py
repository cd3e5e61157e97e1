"""On-disk formats: WAV, label CSVs, LMSF feature cache, pseudo-label and metrics CSVs."""
from __future__ import annotations

import csv
import hashlib
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .features import FeatureMatrix
from .postprocess import ProbSeries
from .synthgen import AudioClip, LabelTrack

LMSF_MAGIC = b"LMSF"
METRICS_HEADER = ["classifier", "stage", "snr_db", "iteration", "f1", "precision", "recall", "rejected_fraction"]
SUMMARY_HEADER = ["classifier", "stage", "snr_db", "n",
                  "f1_mean", "f1_std", "precision_mean", "precision_std",
                  "recall_mean", "recall_std", "rejected_fraction_mean"]
PSEUDO_HEADER = ["frame_idx", "start_s", "prob", "accepted", "label"]


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_wav(path, clip: AudioClip):
    """16-bit little-endian mono PCM."""
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767).astype("<i2")
    wavfile.write(path, clip.sample_rate, pcm)


def read_wav(path) -> AudioClip:
    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio")
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    return AudioClip(data.astype(float) / 32767.0, int(sr))


def write_labels(path, track: LabelTrack):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start_s", "end_s", "label"])
        for s, e, lab in track.intervals:
            w.writerow([f"{s:.3f}", f"{e:.3f}", lab])


def read_labels(path, duration: float, resolution: float) -> LabelTrack:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ivs = [(float(r["start_s"]), float(r["end_s"]), int(r["label"])) for r in rows]
    return LabelTrack(tuple(ivs), duration, resolution)


def write_features(path, feats: FeatureMatrix):
    """``LMSF`` magic, u32 T, u32 B, then T*B float32, row-major, little-endian."""
    t, b = feats.values.shape
    with open(path, "wb") as fh:
        fh.write(LMSF_MAGIC)
        fh.write(struct.pack("<II", t, b))
        fh.write(np.ascontiguousarray(feats.values, dtype="<f4").tobytes())


def read_features(path, band_centers_hz=None, frame_s: float = 0.1) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if data[:4] != LMSF_MAGIC:
        raise ValueError(f"{path}: missing LMSF magic")
    t, b = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * t * b
    if len(data) != expected:
        raise ValueError(f"{path}: {len(data)} bytes, expected {expected} for {t}x{b}")
    values = np.frombuffer(data, dtype="<f4", offset=12).reshape(t, b).astype(np.float64)
    centres = np.arange(b, dtype=float) if band_centers_hz is None else np.asarray(band_centers_hz)
    return FeatureMatrix(values, centres, frame_s)


def write_features_csv(path, feats: FeatureMatrix):
    header = ",".join(f"band_{j}" for j in range(feats.n_bands))
    np.savetxt(path, feats.values, delimiter=",", header=header, comments="", fmt="%.6f")


def write_pseudo_labels(path, series: ProbSeries, metadata: dict | None = None):
    """One row per frame; ``label`` is empty for rejected frames.

    ``metadata`` is written first as ``# key: value`` comment lines.
    """
    labels = (series.probs >= 0.5).astype(int)
    with open(path, "w", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh)
        w.writerow(PSEUDO_HEADER)
        for idx, p, acc, lab in zip(series.frame_index, series.probs, series.accepted, labels):
            w.writerow([int(idx), f"{idx * series.frame_s:.3f}", f"{p:.6f}", int(acc), lab if acc else ""])


def read_pseudo_labels(path):
    """Returns ``(ProbSeries, metadata)``."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    rows = list(csv.DictReader(lines))
    series = ProbSeries(
        np.array([float(r["prob"]) for r in rows]),
        accepted=np.array([r["accepted"] == "1" for r in rows], dtype=bool),
        frame_index=np.array([int(r["frame_idx"]) for r in rows], dtype=np.intp),
    )
    return series, meta


def write_metrics(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow([r.classifier, r.stage, f"{r.snr_db:g}", r.iteration,
                        f"{r.f1:.6f}", f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.rejected_fraction:.6f}"])


def read_metrics(path):
    from .pipeline import MetricsRecord

    with open(path, newline="") as fh:
        return [
            MetricsRecord(r["classifier"], r["stage"], float(r["snr_db"]), int(r["iteration"]),
                          float(r["f1"]), float(r["precision"]), float(r["recall"]),
                          float(r["rejected_fraction"]))
            for r in csv.DictReader(fh)
        ]


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r["classifier"], r["stage"], f"{r['snr_db']:g}", r["n"]]
                       + [f"{r[k]:.6f}" for k in SUMMARY_HEADER[4:]])
