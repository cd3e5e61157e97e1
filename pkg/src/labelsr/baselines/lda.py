from dataclasses import dataclass

import numpy as np

from ._common import NotTrainableError, check_query, check_training, require_both_classes, sigmoid


@dataclass(frozen=True)
class LdaClassifier:
    means: np.ndarray      # (2, d)
    covariance: np.ndarray  # pooled, ridge included
    priors: np.ndarray     # empirical (p0, p1)
    kind: str = "LDA"

    @property
    def d(self):
        return self.means.shape[1]

    def _coef(self):
        chol = np.linalg.cholesky(self.covariance)
        diff = self.means[1] - self.means[0]
        w = np.linalg.solve(chol.T, np.linalg.solve(chol, diff))
        mid = 0.5 * (self.means[0] + self.means[1])
        b = -w @ mid + np.log(self.priors[1] / self.priors[0])
        return w, b

    def predict_proba(self, data):
        x = check_query(data, self.d)
        w, b = self._coef()
        return sigmoid(x @ w + b)


def fit_lda(data, labels) -> LdaClassifier:
    """Shared-covariance Gaussian classes with a small trace-scaled ridge.

    The pooled covariance is the maximum-likelihood one, so duplicating the
    training set leaves the model unchanged.
    """
    x, y = check_training(data, labels)
    require_both_classes(y)
    n, d = x.shape
    means = np.stack([x[y == k].mean(axis=0) for k in (0, 1)])
    centred = x - means[y]
    cov = centred.T @ centred / n
    cov = cov + 1e-6 * np.trace(cov) / d * np.eye(d)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotTrainableError("pooled covariance is singular even after ridge") from exc
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    return LdaClassifier(means, cov, priors)
