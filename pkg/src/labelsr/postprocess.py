"""Median smoothing, rejection and thresholding of per-frame posteriors.

The pipeline order is median_filter -> reject -> threshold.  Each step
appends a tag to ``ProbSeries.stages`` and refuses to run out of order.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class StageOrderError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbSeries:
    probs: np.ndarray
    frame_s: float = 0.1
    accepted: np.ndarray | None = None
    frame_index: np.ndarray | None = None
    stages: tuple = field(default=())

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if not np.all(np.isfinite(p)) or (p.size and (p.min() < 0 or p.max() > 1)):
            raise ValueError("probabilities must be finite and within [0, 1]")
        acc = np.ones(p.shape, dtype=bool) if self.accepted is None else np.asarray(self.accepted, dtype=bool)
        if acc.shape != p.shape:
            raise ValueError("accepted mask must match probs in length")
        idx = np.arange(p.size) if self.frame_index is None else np.asarray(self.frame_index, dtype=np.intp)
        if idx.shape != p.shape:
            raise ValueError("frame_index must match probs in length")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "accepted", acc)
        object.__setattr__(self, "frame_index", idx)

    def __len__(self):
        return self.probs.size

    @property
    def rejected_fraction(self) -> float:
        return float(1.0 - self.accepted.mean()) if len(self) else 0.0

    def runs(self):
        """Slices over maximal runs of consecutive frame indices."""
        if not len(self):
            return []
        breaks = np.flatnonzero(np.diff(self.frame_index) != 1) + 1
        bounds = np.concatenate([[0], breaks, [len(self)]])
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _window_frames(window_ms, frame_s):
    w = window_ms / (frame_s * 1000.0)
    if abs(w - round(w)) > 1e-9:
        raise ValueError(f"{window_ms} ms is not a whole number of {frame_s} s frames")
    w = int(round(w))
    if w < 1 or w % 2 == 0:
        raise ValueError(f"median window must be an odd number of frames, got {w}")
    return w


def median_1d(x, width):
    """Centred running median with reflect padding at both ends."""
    x = np.asarray(x, dtype=float)
    half = width // 2
    if half == 0 or x.size == 0:
        return x.copy()
    mode = "reflect" if x.size > 1 else "edge"
    padded = np.pad(x, half, mode=mode)
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, width), axis=1)


def median_filter(series: ProbSeries, window_ms: float = 500.0) -> ProbSeries:
    """Median-smooth each contiguous run of frames separately."""
    if "reject" in series.stages:
        raise StageOrderError("median_filter must run before reject")
    width = _window_frames(window_ms, series.frame_s)
    out = np.empty_like(series.probs)
    for run in series.runs():
        out[run] = median_1d(series.probs[run], width)
    return replace(series, probs=out, stages=series.stages + ("median",))


def reject(series: ProbSeries, low: float = 0.1, high: float = 0.9) -> ProbSeries:
    """Mark frames with low < p < high (strict) as rejected."""
    if not 0.0 <= low < high <= 1.0:
        raise ValueError(f"need 0 <= low < high <= 1, got ({low}, {high})")
    uncertain = (series.probs > low) & (series.probs < high)
    return replace(series, accepted=series.accepted & ~uncertain, stages=series.stages + ("reject",))


def threshold(series: ProbSeries):
    """Hard labels (p >= 0.5 -> 1) for accepted frames.

    Returns ``(frame_index, labels)`` restricted to accepted frames.
    """
    labels = (series.probs >= 0.5).astype(np.int8)
    return series.frame_index[series.accepted], labels[series.accepted]
