"""Inner/outer cascade: super-resolve weak labels, train the CNN, score everything.

Each training array travels with a provenance tag per row ("fine",
"weak-segment" or "hidden-truth").  Every fit goes through ``_audit`` so
hidden ground truth can never reach a model.
"""
from __future__ import annotations

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines, cnn, kde
from .features import FeatureMatrix, logmel, select_features
from .postprocess import ProbSeries, median_filter, reject, threshold
from .synthgen import DatasetBundle, EventSpec, NoiseSpec, make_dataset

log = logging.getLogger(__name__)

INNER_KINDS = ("KDE",) + baselines.KINDS
STAGES = ("inner_raw", "inner_median", "inner_median_reject", "outer")
FINE, WEAK, HIDDEN = "fine", "weak-segment", "hidden-truth"


class ProtocolViolation(AssertionError):
    """Training data carried a hidden ground-truth provenance tag."""


def _audit(provenance):
    tags = set(np.unique(np.asarray(provenance, dtype=object)))
    if HIDDEN in tags:
        raise ProtocolViolation("hidden ground truth reached a fit operation")
    return tags


@dataclass(frozen=True)
class ExperimentConfig:
    snr_grid_db: tuple = (-24.0, -19.8, -15.0, -10.0, -5.0, 0.0)
    iterations: int = 40
    master_seed: int = 0
    classifiers: tuple = INNER_KINDS
    n_select: int = 5
    run_outer: bool = True
    # post-processing applied to the pseudo-labels that feed the CNN
    median: bool = True
    rejection: bool = True
    median_window_ms: float = 500.0
    reject_low: float = 0.1
    reject_high: float = 0.9
    outer_weak_negatives: bool = False
    kde_bandwidth_scale: float = 0.4
    svm_c: float = 1.0
    rf_trees: int = 100
    mlp_hidden: int = 64
    mlp_epochs: int = 50
    mlp_lr: float = 0.01
    cnn_epochs: int = 10
    cnn_lr: float = 0.1
    cnn_batch_size: int = 32
    cnn_dtype: str = "float32"
    event: EventSpec = EventSpec()
    noise: NoiseSpec = NoiseSpec("highband", highband_fraction=0.85)
    sample_rate: int = 8000
    durations: tuple | None = None  # ((split, seconds), ...) overrides for quick runs
    jobs: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.snr_grid_db:
            raise ValueError("snr grid must not be empty")
        unknown = set(self.classifiers) - set(INNER_KINDS)
        if unknown:
            raise ValueError(f"unknown classifiers {sorted(unknown)}; expected a subset of {INNER_KINDS}")

    def metadata(self) -> dict:
        meta = asdict(self)
        meta.update(
            kde_prior="0.5/0.5",
            baseline_probabilities="raw posteriors (LDA, GNB, RF, MLP); Platt on training decisions (SVM)",
            postprocess_order="median_filter -> reject -> threshold",
            inner_f1="per-frame at 0.1 s on weak class-1 frames",
            standalone_kde="test split, median filtered",
            outer_mixing="fine + pseudo-fine windows pooled and shuffled uniformly",
        )
        return meta


@dataclass(frozen=True)
class MetricsRecord:
    classifier: str
    stage: str
    snr_db: float
    iteration: int
    f1: float
    precision: float
    recall: float
    rejected_fraction: float = 0.0


@dataclass(frozen=True)
class IterationFailure:
    snr_db: float
    iteration: int
    error: str


@dataclass
class ExperimentResult:
    records: list
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


@dataclass
class BundleFeatures:
    fine: FeatureMatrix
    weak: FeatureMatrix
    test: FeatureMatrix
    fine_labels: np.ndarray       # visible, per frame
    weak_segment_labels: np.ndarray  # visible, weak labels expanded per frame
    weak_truth: np.ndarray        # hidden
    test_truth: np.ndarray        # hidden

    @classmethod
    def from_bundle(cls, bundle: DatasetBundle):
        fine, weak, test = (logmel(s.clip) for s in (bundle.fine, bundle.weak, bundle.test))
        return cls(
            fine, weak, test,
            bundle.fine.labels.to_frames()[: fine.n_frames],
            bundle.weak.labels.to_frames()[: weak.n_frames],
            bundle.weak.truth.to_frames()[: weak.n_frames],
            bundle.test.truth.to_frames()[: test.n_frames],
        )

    @property
    def weak_positive_frames(self):
        return np.flatnonzero(self.weak_segment_labels == 1)

    @property
    def weak_negative_frames(self):
        return np.flatnonzero(self.weak_segment_labels == 0)


@dataclass
class InnerModel:
    kind: str
    clf: object
    selected: tuple
    n_train: dict            # class -> row count
    provenance: dict         # class -> set of tags seen
    prior: tuple | None = None

    def predict(self, feats: FeatureMatrix, frames=None) -> np.ndarray:
        x = feats.values[:, list(self.selected)]
        if frames is not None:
            x = x[frames]
        return np.clip(np.asarray(self.clf.predict_proba(x), dtype=float), 0.0, 1.0)


def _as_features(bundle_or_feats):
    if isinstance(bundle_or_feats, BundleFeatures):
        return bundle_or_feats
    return BundleFeatures.from_bundle(bundle_or_feats)


def train_inner(bundle, kind: str, config: ExperimentConfig = ExperimentConfig(), seed: int = 0) -> InnerModel:
    """KS-select bands on fine data, then fit ``kind`` per the training protocol.

    Baselines see fine frames only.  The KDE additionally models class 0
    with every frame inside weak class-0 segments, and uses 0.5/0.5 priors.
    """
    bf = _as_features(bundle)
    selected, _ = select_features(bf.fine, bf.fine_labels, config.n_select)
    cols = list(selected)
    x_fine = bf.fine.values[:, cols]
    y_fine = bf.fine_labels.astype(int)
    if kind == "KDE":
        neg = bf.weak_negative_frames
        x0 = np.vstack([x_fine[y_fine == 0], bf.weak.values[neg][:, cols]])
        prov0 = np.array([FINE] * int(np.sum(y_fine == 0)) + [WEAK] * len(neg), dtype=object)
        x1 = x_fine[y_fine == 1]
        prov1 = np.array([FINE] * len(x1), dtype=object)
        tags = {0: _audit(prov0), 1: _audit(prov1)}
        prior = kde.ClassPrior(0.5, 0.5)
        clf = kde.fit_classifier(x0, x1, prior, config.kde_bandwidth_scale)
        return InnerModel(kind, clf, selected, {0: len(x0), 1: len(x1)}, tags, (prior.p0, prior.p1))

    prov = np.array([FINE] * len(y_fine), dtype=object)
    tags = _audit(prov)
    params = {}
    if kind == "SVM":
        params = {"C": config.svm_c}
    elif kind == "RF":
        params = {"n_trees": config.rf_trees}
    elif kind == "MLP":
        params = {"hidden": config.mlp_hidden, "epochs": config.mlp_epochs, "lr": config.mlp_lr}
    clf = baselines.fit(kind, x_fine, y_fine, seed=seed, **params)
    counts = {0: int(np.sum(y_fine == 0)), 1: int(np.sum(y_fine == 1))}
    return InnerModel(kind, clf, selected, counts, {0: tags, 1: tags})


def superresolve(inner: InnerModel, bundle, median: bool = True, rejection: bool = True,
                 config: ExperimentConfig = ExperimentConfig()) -> ProbSeries:
    """Posteriors over the frames of weak class-1 segments, optionally smoothed and rejected."""
    bf = _as_features(bundle)
    frames = bf.weak_positive_frames
    series = ProbSeries(inner.predict(bf.weak, frames), frame_s=bf.weak.frame_s, frame_index=frames)
    if median:
        series = median_filter(series, config.median_window_ms)
    if rejection:
        series = reject(series, config.reject_low, config.reject_high)
    return series


def assemble_outer_training(bundle, pseudo: ProbSeries | str, weak_negatives: bool = False,
                            dtype=np.float64) -> cnn.WindowBatch:
    """CNN training windows: fine frames with their labels plus labelled weak frames.

    ``pseudo`` is a super-resolved series over weak class-1 frames, or
    ``"coarse"`` to label every weak class-1 frame 1.  With
    ``weak_negatives`` the frames of weak class-0 segments join as label 0.
    """
    bf = _as_features(bundle)
    parts = [cnn.make_windows(bf.fine, bf.fine_labels, provenance=FINE, dtype=dtype)]
    if isinstance(pseudo, str):
        if pseudo != "coarse":
            raise ValueError(f"unknown pseudo-label source {pseudo!r}")
        pos = bf.weak_positive_frames
        parts.append(cnn.make_windows(bf.weak, np.ones(len(pos), int), pos, provenance=WEAK, dtype=dtype))
    else:
        idx, labels = threshold(pseudo)
        if len(idx):
            parts.append(cnn.make_windows(bf.weak, labels, idx, provenance=WEAK, dtype=dtype))
    if weak_negatives:
        neg = bf.weak_negative_frames
        if len(neg):
            parts.append(cnn.make_windows(bf.weak, np.zeros(len(neg), int), neg, provenance=WEAK, dtype=dtype))
    batch = cnn.WindowBatch.concat(parts)
    _audit(batch.provenance)
    if not (np.any(batch.labels == 0) and np.any(batch.labels == 1)):
        raise ValueError("outer training set is missing a class after assembly")
    return batch


def compute_metrics(pred, truth, mask=None):
    """Frame-level (f1, precision, recall) for class 1 over ``mask``; 0/0 counts as 0."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        pred, truth = pred[m], truth[m]
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall


def expected_record_count(config: ExperimentConfig) -> int:
    """Records a failure-free run emits."""
    k = len(config.classifiers)
    per_iter = 3 * k
    if config.run_outer:
        per_iter += k + 1 + (1 if "KDE" in config.classifiers else 0)
    return per_iter * len(config.snr_grid_db) * config.iterations


def iteration_seeds(master_seed: int, iteration: int) -> dict:
    """Child seeds for one iteration, derived by counter from the master seed.

    They do not depend on SNR, so every SNR of an iteration shares event
    placements and algorithm seeds.
    """
    names = ("dataset",) + INNER_KINDS + tuple(f"CNN({k})" for k in INNER_KINDS + ("Coarse",))
    state = np.random.SeedSequence(master_seed, spawn_key=(iteration,)).generate_state(len(names), np.uint32)
    return {n: int(s) for n, s in zip(names, state)}


def _score_inner(kind, raw: ProbSeries, truth, snr, it, config):
    recs = []
    mask_truth = truth[raw.frame_index]
    for stage, series in (("inner_raw", raw),
                          ("inner_median", median_filter(raw, config.median_window_ms))):
        f1, p, r = compute_metrics(series.probs >= 0.5, mask_truth)
        recs.append(MetricsRecord(kind, stage, snr, it, f1, p, r, 0.0))
    rej = reject(median_filter(raw, config.median_window_ms), config.reject_low, config.reject_high)
    f1, p, r = compute_metrics(rej.probs >= 0.5, mask_truth, rej.accepted)
    recs.append(MetricsRecord(kind, "inner_median_reject", snr, it, f1, p, r, rej.rejected_fraction))
    return recs


def _train_outer(bf, pseudo, seed, config):
    dtype = np.dtype(config.cnn_dtype)
    batch = assemble_outer_training(bf, pseudo, config.outer_weak_negatives, dtype=dtype)
    model = cnn.CnnModel.init(seed, dtype=dtype)
    model = cnn.train(model, batch, epochs=config.cnn_epochs, lr=config.cnn_lr,
                      batch_size=config.cnn_batch_size, seed=seed)
    return model


def run_iteration(config: ExperimentConfig, snr_db: float, iteration: int):
    """All records for one (SNR, iteration) pair."""
    seeds = iteration_seeds(config.master_seed, iteration)
    durations = dict(config.durations) if config.durations else None
    bundle = make_dataset(config.event, config.noise, snr_db, seeds["dataset"],
                          config.sample_rate, durations)
    bf = BundleFeatures.from_bundle(bundle)
    records = []
    pseudo = {}
    inners = {}
    for kind in config.classifiers:
        inner = train_inner(bf, kind, config, seeds[kind])
        inners[kind] = inner
        raw = superresolve(inner, bf, median=False, rejection=False, config=config)
        records += _score_inner(kind, raw, bf.weak_truth, snr_db, iteration, config)
        pseudo[kind] = superresolve(inner, bf, config.median, config.rejection, config)

    if config.run_outer:
        sources = [(k, pseudo[k]) for k in config.classifiers] + [("Coarse", "coarse")]
        for name, src in sources:
            cid = f"CNN({name})"
            model = _train_outer(bf, src, seeds[cid], config)
            pred = cnn.predict_frames(model, bf.test).probs >= 0.5
            f1, p, r = compute_metrics(pred, bf.test_truth)
            records.append(MetricsRecord(cid, "outer", snr_db, iteration, f1, p, r, 0.0))
        if "KDE" in config.classifiers:
            probs = ProbSeries(inners["KDE"].predict(bf.test), frame_s=bf.test.frame_s)
            smoothed = median_filter(probs, config.median_window_ms)
            f1, p, r = compute_metrics(smoothed.probs >= 0.5, bf.test_truth)
            records.append(MetricsRecord("KDE", "outer", snr_db, iteration, f1, p, r, 0.0))
    return records


def _run_task(args):
    config, snr, it = args
    try:
        return snr, it, run_iteration(config, snr, it), None
    except Exception as exc:  # recorded, never silently dropped
        log.error("iteration %d at %g dB failed: %s", it, snr, exc)
        return snr, it, [], f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Every (SNR, iteration) of ``config``, merged in (SNR, iteration) order."""
    tasks = [(config, snr, it) for snr in config.snr_grid_db for it in range(config.iterations)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = []
        for task in tasks:
            outcomes.append(_run_task(task))
            if progress:
                progress(task[1], task[2])
    order = {snr: i for i, snr in enumerate(config.snr_grid_db)}
    outcomes.sort(key=lambda o: (order[o[0]], o[1]))
    records, failures = [], []
    for snr, it, recs, err in outcomes:
        records += recs
        if err is not None:
            failures.append(IterationFailure(snr, it, err))
    return ExperimentResult(records, failures, config.metadata())


def summarize(records):
    """Mean and sample standard deviation per (classifier, stage, SNR)."""
    groups = {}
    for r in records:
        groups.setdefault((r.classifier, r.stage, r.snr_db), []).append(r)
    rows = []
    for (clf, stage, snr), recs in groups.items():
        def stats(attr):
            v = np.array([getattr(x, attr) for x in recs])
            return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0
        f1, f1s = stats("f1")
        pr, prs = stats("precision")
        rc, rcs = stats("recall")
        rows.append(dict(classifier=clf, stage=stage, snr_db=snr, n=len(recs),
                         f1_mean=f1, f1_std=f1s, precision_mean=pr, precision_std=prs,
                         recall_mean=rc, recall_std=rcs,
                         rejected_fraction_mean=stats("rejected_fraction")[0]))
    return rows


def relative_improvement(rows, stage: str = "outer", snr_db: float | None = None):
    """(F1_best - F1_second) / F1_second over summary rows, with the two classifier ids."""
    cand = [r for r in rows if r["stage"] == stage and (snr_db is None or r["snr_db"] == snr_db)]
    if len(cand) < 2:
        raise ValueError("need at least two classifiers to compare")
    cand.sort(key=lambda r: r["f1_mean"], reverse=True)
    best, second = cand[0], cand[1]
    return (best["f1_mean"] - second["f1_mean"]) / second["f1_mean"], best["classifier"], second["classifier"]


def mean_metric(records, classifier, stage, snr_db, attr="f1"):
    vals = [getattr(r, attr) for r in records
            if r.classifier == classifier and r.stage == stage and abs(r.snr_db - snr_db) < 1e-9]
    if not vals:
        raise KeyError((classifier, stage, snr_db))
    return float(np.mean(vals))
