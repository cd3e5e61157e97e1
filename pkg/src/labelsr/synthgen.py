"""Seeded synthetic audio for weak-label super-resolution experiments.

A harmonic tone (a stand-in for an insect flight tone) is injected into
non-stationary noise at a controlled SNR.  Every split carries its own fine
label track; the weak split also carries 5 s segment labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FRAME_S = 0.1
WEAK_SEGMENT_S = 5.0
EVENT_FRACTION = 0.10
MAX_PLACEMENT_ATTEMPTS = 10_000

SPLIT_DURATIONS = {"fine": 100.0, "weak": 1000.0, "test": 1000.0}


class SynthesisError(ValueError):
    """Raised when a requested signal cannot be generated."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = 8000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip expects mono samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class LabelTrack:
    """Labelled time intervals ``(start_s, end_s, label)`` at a resolution.

    Fine tracks list only the event intervals; anything not covered is
    class 0.  Weak tracks tile the clip with one interval per segment.
    """

    intervals: tuple
    duration: float
    resolution: float = FRAME_S

    def __post_init__(self):
        ivs = tuple((float(s), float(e), int(lab)) for s, e, lab in self.intervals)
        for s, e, lab in ivs:
            if not (0.0 <= s < e <= self.duration + 1e-9):
                raise ValueError(f"interval [{s}, {e}) outside [0, {self.duration})")
            if lab not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {lab}")
        object.__setattr__(self, "intervals", tuple(sorted(ivs)))

    @property
    def events(self):
        return [(s, e) for s, e, lab in self.intervals if lab == 1]

    def n_frames(self, frame_s: float = FRAME_S) -> int:
        return int(np.floor(self.duration / frame_s + 1e-9))

    def to_frames(self, frame_s: float = FRAME_S) -> np.ndarray:
        """Per-frame labels; a frame is 1 iff it overlaps a label-1 interval."""
        n = self.n_frames(frame_s)
        out = np.zeros(n, dtype=np.int8)
        for s, e in self.events:
            # integer frame bounds; tolerance absorbs float drift on the grid
            lo = int(np.floor(s / frame_s + 1e-9))
            hi = int(np.ceil(e / frame_s - 1e-9))
            out[max(lo, 0):min(hi, n)] = 1
        return out

    def event_fraction(self) -> float:
        return sum(e - s for s, e in self.events) / self.duration


@dataclass(frozen=True)
class EventSpec:
    fundamental_hz: float = 600.0
    n_harmonics: int = 5
    harmonic_decay: tuple | None = None  # per-harmonic amplitudes; None -> 1/k
    vibrato_depth_hz: float = 10.0
    vibrato_rate_hz: float = 5.0
    duration_s: float = 1.0
    ramp_ms: float = 10.0

    def amplitudes(self) -> np.ndarray:
        if self.harmonic_decay is None:
            return 1.0 / np.arange(1, self.n_harmonics + 1)
        amps = np.asarray(self.harmonic_decay, dtype=float)
        if amps.shape != (self.n_harmonics,):
            raise SynthesisError("harmonic_decay needs one amplitude per harmonic")
        return amps


NOISE_PROFILES = ("white", "pink", "highband")


@dataclass(frozen=True)
class NoiseSpec:
    profile: str = "pink"
    envelope_rate_hz: float = 0.2
    highband_cutoff_hz: float = 2000.0
    highband_fraction: float = 0.995  # share of power above the cutoff
    envelope_depth: float = 0.5

    def __post_init__(self):
        if self.profile not in NOISE_PROFILES:
            raise ValueError(f"unknown noise profile {self.profile!r}; expected one of {NOISE_PROFILES}")
        if not 0.5 < self.highband_fraction < 1.0:
            raise ValueError("highband_fraction must lie in (0.5, 1)")
        if not 0.0 <= self.envelope_depth <= 0.5:
            raise ValueError("envelope_depth must keep the gain within [0.5, 1.5]")


@dataclass
class Split:
    """One dataset split.  ``truth`` is hidden ground truth for scoring only."""

    clip: AudioClip
    truth: LabelTrack
    labels: LabelTrack | None = None


@dataclass
class DatasetBundle:
    fine: Split
    weak: Split
    test: Split
    snr_db: float
    seed: int
    meta: dict = field(default_factory=dict)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synth_event(spec: EventSpec = EventSpec(), sample_rate: int = 8000, seed=0) -> AudioClip:
    """Harmonic tone with sinusoidal vibrato and raised-cosine on/off ramps.

    The only random quantity is the vibrato phase, so a zero vibrato depth
    gives the same waveform for every seed.
    """
    if spec.duration_s != 1.0:
        raise SynthesisError("event duration is fixed at 1.0 s")
    nyquist = sample_rate / 2
    if spec.fundamental_hz * spec.n_harmonics >= nyquist:
        raise SynthesisError(
            f"top harmonic {spec.fundamental_hz * spec.n_harmonics:.1f} Hz "
            f"aliases at sample rate {sample_rate} (Nyquist {nyquist:.1f} Hz)"
        )
    rng = _rng(seed)
    n = int(round(spec.duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    vib_phase = rng.uniform(0, 2 * np.pi)
    inst_f = spec.fundamental_hz + spec.vibrato_depth_hz * np.sin(
        2 * np.pi * spec.vibrato_rate_hz * t + vib_phase
    )
    phase = 2 * np.pi * np.cumsum(inst_f) / sample_rate
    k = np.arange(1, spec.n_harmonics + 1)
    x = (spec.amplitudes()[:, None] * np.sin(k[:, None] * phase[None, :])).sum(axis=0)

    n_ramp = int(round(spec.ramp_ms * 1e-3 * sample_rate))
    if n_ramp > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(n_ramp) / n_ramp))
        x[:n_ramp] *= ramp
        x[-n_ramp:] *= ramp[::-1]
    x *= 0.9 / np.max(np.abs(x))
    return AudioClip(x, sample_rate)


def synth_noise(spec: NoiseSpec, duration_s: float, sample_rate: int = 8000, seed=0) -> AudioClip:
    """Coloured Gaussian noise under a slow gain envelope, peak 0.9."""
    if not duration_s > 0:
        raise SynthesisError("noise duration must be positive")
    rng = _rng(seed)
    n = int(round(duration_s * sample_rate))
    white = rng.standard_normal(n)
    freqs = np.fft.rfftfreq(n, 1 / sample_rate)
    if spec.profile == "white":
        x = white
    else:
        spectrum = np.fft.rfft(white)
        if spec.profile == "pink":
            shape = np.ones_like(freqs)
            shape[1:] = 1 / np.sqrt(freqs[1:])
            shape[0] = 0.0
        else:
            # flat passband above the cutoff, flat floor below, sized to hit the power share
            nyq = sample_rate / 2
            w_hi, w_lo = nyq - spec.highband_cutoff_hz, spec.highband_cutoff_hz
            frac = spec.highband_fraction
            floor = np.sqrt(w_hi * (1 - frac) / (frac * w_lo))
            shape = np.where(freqs >= spec.highband_cutoff_hz, 1.0, floor)
        x = np.fft.irfft(spectrum * shape, n)

    t = np.arange(n) / sample_rate
    env_phase = rng.uniform(0, 2 * np.pi)
    envelope = 1 + spec.envelope_depth * np.sin(2 * np.pi * spec.envelope_rate_hz * t + env_phase)
    x = x * envelope
    x *= 0.9 / np.max(np.abs(x))
    return AudioClip(x, sample_rate)


def snr_gain(event: AudioClip, noise_window: AudioClip, target_snr_db: float) -> float:
    """Gain for ``event`` so that mean powers give ``target_snr_db`` over its support."""
    p_event = np.mean(event.samples ** 2)
    p_noise = np.mean(noise_window.samples ** 2)
    if p_noise == 0:
        raise SynthesisError("noise window has zero power; SNR is undefined")
    if p_event == 0:
        raise SynthesisError("event is silent; SNR is undefined")
    return float(np.sqrt(p_noise / p_event * 10 ** (target_snr_db / 10)))


def place_events(noise: AudioClip, event: AudioClip, count: int, seed=0,
                 snr_db: float | None = None, frame_s: float = FRAME_S):
    """Inject ``count`` copies of ``event`` at random, non-overlapping offsets.

    Offsets lie on the ``frame_s`` grid so fine labels are exact.  With
    ``snr_db`` set, each copy is scaled against the noise it lands on;
    otherwise it is added at unit gain.  Returns ``(mixture, fine_track)``.
    """
    if noise.sample_rate != event.sample_rate:
        raise SynthesisError("sample rates differ")
    sr = noise.sample_rate
    ev_len = len(event)
    ev_dur = ev_len / sr
    duration = noise.duration
    if count * ev_dur > EVENT_FRACTION * duration + 1e-9:
        raise SynthesisError(
            f"{count} events of {ev_dur} s exceed {EVENT_FRACTION:.0%} of {duration} s"
        )
    rng = _rng(seed)
    ev_frames = int(round(ev_dur / frame_s))
    n_slots = int(np.floor(duration / frame_s + 1e-9)) - ev_frames + 1
    if count > 0 and n_slots < 1:
        raise SynthesisError("event longer than the noise clip")

    occupied = np.zeros(max(n_slots + ev_frames, 0), dtype=bool)
    starts = []
    attempts = 0
    while len(starts) < count:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise SynthesisError(
                f"placed {len(starts)}/{count} events after {attempts} attempts"
            )
        attempts += 1
        s = int(rng.integers(0, n_slots))
        if occupied[s:s + ev_frames].any():
            continue
        occupied[s:s + ev_frames] = True
        starts.append(s)
    starts.sort()

    mix = noise.samples.copy()
    for s in starts:
        a = int(round(s * frame_s * sr))
        seg = slice(a, a + ev_len)
        gain = 1.0 if snr_db is None else snr_gain(event, AudioClip(noise.samples[seg], sr), snr_db)
        mix[seg] += gain * event.samples
    peak = np.max(np.abs(mix))
    if peak > 1.0:
        mix /= peak

    intervals = [(s * frame_s, (s + ev_frames) * frame_s, 1) for s in starts]
    intervals = [(round(a, 6), round(b, 6), lab) for a, b, lab in intervals]
    return AudioClip(mix, sr), LabelTrack(tuple(intervals), duration, frame_s)


def coarsen_labels(fine: LabelTrack, segment_s: float = WEAK_SEGMENT_S) -> LabelTrack:
    """Segment labels tiling the clip: 1 iff the segment overlaps an event."""
    ratio = segment_s / fine.resolution
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("fine resolution must divide the segment length")
    n_seg = int(np.ceil(fine.duration / segment_s - 1e-9))
    intervals = []
    for i in range(n_seg):
        a, b = i * segment_s, min((i + 1) * segment_s, fine.duration)
        hit = any(min(b, e) - max(a, s) > 1e-9 for s, e in fine.events)
        intervals.append((a, b, int(hit)))
    return LabelTrack(tuple(intervals), fine.duration, segment_s)


def make_dataset(event_spec: EventSpec = EventSpec(), noise_spec: NoiseSpec = NoiseSpec(),
                 snr_db: float = -15.0, seed: int = 0, sample_rate: int = 8000,
                 durations: dict | None = None) -> DatasetBundle:
    """Fine (100 s), weak (1000 s) and test (1000 s) splits at 1:9 imbalance.

    Noise is drawn fresh for each split.  ``durations`` overrides split
    lengths (useful for fast tests); event counts follow the 10% fraction.
    """
    durations = {**SPLIT_DURATIONS, **(durations or {})}
    ss = np.random.SeedSequence(seed)
    ev_seed, *split_seeds = ss.spawn(4)
    event = synth_event(event_spec, sample_rate, np.random.default_rng(ev_seed))

    splits = {}
    for name, sseq in zip(("fine", "weak", "test"), split_seeds):
        noise_seq, place_seq = sseq.spawn(2)
        dur = durations[name]
        noise = synth_noise(noise_spec, dur, sample_rate, np.random.default_rng(noise_seq))
        count = int(round(EVENT_FRACTION * dur / event_spec.duration_s))
        mix, truth = place_events(noise, event, count, np.random.default_rng(place_seq), snr_db=snr_db)
        splits[name] = (mix, truth)

    fine_clip, fine_track = splits["fine"]
    weak_clip, weak_truth = splits["weak"]
    test_clip, test_truth = splits["test"]
    return DatasetBundle(
        fine=Split(fine_clip, fine_track, labels=fine_track),
        weak=Split(weak_clip, weak_truth, labels=coarsen_labels(weak_truth)),
        test=Split(test_clip, test_truth, labels=None),
        snr_db=snr_db,
        seed=seed,
        meta={"event": event_spec, "noise": noise_spec, "sample_rate": sample_rate},
    )
