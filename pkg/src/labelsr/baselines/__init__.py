"""Reference inner classifiers: LDA, Gaussian naive Bayes, RBF-SVM, random forest, MLP.

Every trained model exposes ``kind``, ``d`` and ``predict_proba(data)``
returning p(C1 | x) per row.
"""
import numpy as np

from ._common import NotTrainableError
from .forest import ForestClassifier, fit_rf
from .gnb import GnbClassifier, fit_gnb
from .lda import LdaClassifier, fit_lda
from .mlp import MlpClassifier, TrainingDiverged, fit_mlp
from .svm import SvmClassifier, fit_svm

KINDS = ("LDA", "GNB", "SVM", "RF", "MLP")


def fit(kind, data, labels, seed=0, **params):
    """Dispatch to the ``fit_*`` function for ``kind``."""
    if kind == "LDA":
        return fit_lda(data, labels)
    if kind == "GNB":
        return fit_gnb(data, labels)
    if kind == "SVM":
        return fit_svm(data, labels, **params)
    if kind == "RF":
        return fit_rf(data, labels, seed=seed, **params)
    if kind == "MLP":
        return fit_mlp(data, labels, seed=seed, **params)
    raise ValueError(f"unknown baseline {kind!r}; expected one of {KINDS}")


def predict_proba(clf, data, frame_index=None):
    """Per-row p(C1 | x) wrapped as a ProbSeries."""
    from ..postprocess import ProbSeries

    p = np.clip(np.asarray(clf.predict_proba(data), dtype=float), 0.0, 1.0)
    return ProbSeries(p, frame_index=frame_index)


__all__ = [
    "KINDS", "fit", "predict_proba", "NotTrainableError", "TrainingDiverged",
    "fit_lda", "fit_gnb", "fit_svm", "fit_rf", "fit_mlp",
    "LdaClassifier", "GnbClassifier", "SvmClassifier", "ForestClassifier", "MlpClassifier",
]
