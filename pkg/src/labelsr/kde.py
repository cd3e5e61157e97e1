"""Product-Gaussian kernel density estimates and the two-class Bayes posterior."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class ClassPrior:
    p0: float = 0.5
    p1: float = 0.5

    def __post_init__(self):
        if self.p0 < 0 or self.p1 < 0 or abs(self.p0 + self.p1 - 1.0) > 1e-12:
            raise ValueError(f"priors must be non-negative and sum to 1, got ({self.p0}, {self.p1})")


@dataclass(frozen=True)
class KdeModel:
    train: np.ndarray
    bandwidths: np.ndarray

    @property
    def n(self) -> int:
        return self.train.shape[0]

    @property
    def d(self) -> int:
        return self.train.shape[1]

    def dump(self) -> str:
        bw = " ".join(f"{h:.6g}" for h in self.bandwidths)
        return f"KdeModel n={self.n} d={self.d}\nbandwidths {bw}\n"


def fit(train, bandwidth_scale: float = 1.0) -> KdeModel:
    """Per-dimension Scott bandwidths h_j = scale * sigma_j * n^(-1/(d+4)).

    Dimensions with zero spread (and the single-sample case) fall back to 1.0.
    """
    x = np.atleast_2d(np.asarray(train, dtype=float))
    n, d = x.shape
    if n < 1 or d < 1:
        raise ValueError("KDE needs at least one d>=1 training vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("KDE training data contains non-finite values")
    if n == 1:
        h = np.ones(d)
    else:
        sigma = x.std(axis=0)
        h = bandwidth_scale * sigma * n ** (-1.0 / (d + 4))
        h[sigma == 0] = 1.0
    return KdeModel(x, h)


def log_density(model: KdeModel, x) -> np.ndarray:
    """log f(x) for one vector (returns a scalar array) or a batch of rows."""
    q = np.asarray(x, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != model.d:
        raise ValueError(f"query dimension {q.shape[1]} != model dimension {model.d}")
    h = model.bandwidths
    t = model.train / h
    q = q / h
    t_sq = np.einsum("ij,ij->i", t, t)
    log_norm = -np.log(h).sum() - model.d * _LOG_SQRT_2PI - np.log(model.n)

    out = np.empty(len(q))
    step = max(1, _CHUNK_ELEMENTS // max(model.n, 1))
    for a in range(0, len(q), step):
        qc = q[a:a + step]
        sq = np.einsum("ij,ij->i", qc, qc)[:, None] + t_sq[None, :] - 2.0 * qc @ t.T
        np.maximum(sq, 0.0, out=sq)
        out[a:a + step] = logsumexp(-0.5 * sq, axis=1)
    out += log_norm
    return out[0] if single else out


def density(model: KdeModel, x):
    return np.exp(log_density(model, x))


def posterior(model0: KdeModel, model1: KdeModel, prior: ClassPrior, x, diagnostics: dict | None = None):
    """p(C1 | x) by Bayes' rule over the two class densities, in log space.

    When both prior-weighted densities vanish the prior p1 is returned and
    the affected rows are counted in ``diagnostics['underflow']``.
    """
    if model0.d != model1.d:
        raise ValueError("class models disagree on dimension")
    with np.errstate(divide="ignore"):
        a0 = np.log(prior.p0) + log_density(model0, x)
        a1 = np.log(prior.p1) + log_density(model1, x)
    a0, a1 = np.atleast_1d(a0), np.atleast_1d(a1)
    dead = np.isneginf(a0) & np.isneginf(a1)
    with np.errstate(invalid="ignore"):
        p = np.exp(a1 - np.logaddexp(a0, a1))
    p[dead] = prior.p1
    if dead.any():
        log.warning("posterior: %d queries with zero density under both classes", int(dead.sum()))
    if diagnostics is not None:
        diagnostics["underflow"] = diagnostics.get("underflow", 0) + int(dead.sum())
    p = np.clip(p, 0.0, 1.0)
    return p[0] if np.ndim(x) == 1 else p


@dataclass(frozen=True)
class KdeClassifier:
    """Two class-conditional KDEs plus fixed priors, used as an inner classifier."""

    model0: KdeModel
    model1: KdeModel
    prior: ClassPrior = ClassPrior()
    kind: str = "KDE"

    @property
    def d(self) -> int:
        return self.model0.d

    def predict_proba(self, data) -> np.ndarray:
        return np.atleast_1d(posterior(self.model0, self.model1, self.prior, np.atleast_2d(data)))


def fit_classifier(x0, x1, prior: ClassPrior = ClassPrior(), bandwidth_scale: float = 1.0) -> KdeClassifier:
    return KdeClassifier(fit(x0, bandwidth_scale), fit(x1, bandwidth_scale), prior)
