"""Log-mel features at 0.1 s resolution and KS-based band selection."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int):
    """Unnormalized triangular HTK-mel filters from 0 Hz to Nyquist.

    Returns ``(weights, centres_hz)`` with ``weights`` of shape
    ``(n_mels, n_fft // 2 + 1)``.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    lo, centre, hi = edges[:-2], edges[1:-1], edges[2:]
    bins = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    rising = (bins[None, :] - lo[:, None]) / (centre - lo)[:, None]
    falling = (hi[:, None] - bins[None, :]) / (hi - centre)[:, None]
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights, centre


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    band_centers_hz: np.ndarray
    frame_s: float = 0.1
    selected: tuple | None = None

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("feature values must be a T x B matrix")
        if len(self.band_centers_hz) != self.values.shape[1]:
            raise ValueError("one band centre per column required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")
        if self.selected is not None:
            sel = tuple(int(i) for i in self.selected)
            if list(sel) != sorted(set(sel)) or (sel and not 0 <= sel[0] <= sel[-1] < self.n_bands):
                raise ValueError("selected bands must be unique, ascending and in range")
            object.__setattr__(self, "selected", sel)

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def n_bands(self):
        return self.values.shape[1]

    def with_selection(self, selected) -> FeatureMatrix:
        return replace(self, selected=tuple(selected))

    def selected_values(self) -> np.ndarray:
        if self.selected is None:
            return self.values
        return self.values[:, list(self.selected)]


def logmel(clip, n_mels: int = 128, frame_s: float = 0.1, n_fft: int = 1024) -> FeatureMatrix:
    """Natural-log mel energies of non-overlapping Hann-windowed frames.

    The trailing partial frame is dropped.
    """
    sr = clip.sample_rate
    frame_len = int(round(frame_s * sr))
    if frame_len > n_fft:
        raise ValueError(f"frame of {frame_len} samples exceeds FFT size {n_fft}")
    n_frames = len(clip.samples) // frame_len
    if n_frames < 1:
        raise ValueError(f"clip of {len(clip.samples)} samples is shorter than one {frame_s} s frame")
    frames = clip.samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    window = np.hanning(frame_len + 1)[:-1]  # periodic Hann
    spectrum = np.fft.rfft(frames * window, n=n_fft, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    weights, centres = mel_filterbank(n_mels, n_fft, sr)
    mel = power @ weights.T
    return FeatureMatrix(np.log(np.maximum(mel, LOG_FLOOR)), centres, frame_s)


@dataclass(frozen=True)
class KsResult:
    statistic: np.ndarray
    n0: int
    n1: int


def ks_statistic(a, b) -> float:
    """Two-sample KS distance sup_x |ECDF_a(x) - ECDF_b(x)|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs two non-empty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def select_features(feats: FeatureMatrix, frame_labels, n_select: int = 10):
    """Pick the ``n_select`` bands whose class-conditional ECDFs differ most.

    Ties go to the lower band index.  Returns ``(selected, KsResult)`` with
    ``selected`` ascending.
    """
    labels = np.asarray(frame_labels).ravel()
    if labels.shape[0] != feats.n_frames:
        raise ValueError(f"{labels.shape[0]} labels for {feats.n_frames} frames")
    x0 = feats.values[labels == 0]
    x1 = feats.values[labels == 1]
    if len(x0) == 0 or len(x1) == 0:
        raise ValueError("both classes need at least one frame for KS selection")
    if not 1 <= n_select <= feats.n_bands:
        raise ValueError(f"n_select must be in [1, {feats.n_bands}]")
    d = np.array([ks_statistic(x0[:, j], x1[:, j]) for j in range(feats.n_bands)])
    order = np.argsort(-d, kind="stable")
    selected = tuple(sorted(int(i) for i in order[:n_select]))
    return selected, KsResult(d, len(x0), len(x1))
