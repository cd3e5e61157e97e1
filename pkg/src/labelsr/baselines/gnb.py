from dataclasses import dataclass

import numpy as np

from ._common import check_query, check_training, require_both_classes, sigmoid

VAR_FLOOR = 1e-9


@dataclass(frozen=True)
class GnbClassifier:
    means: np.ndarray      # (2, d)
    variances: np.ndarray  # (2, d)
    priors: np.ndarray
    kind: str = "GNB"

    @property
    def d(self):
        return self.means.shape[1]

    def _log_lik(self, x, k):
        var = self.variances[k]
        return -0.5 * (np.log(2 * np.pi * var) + (x - self.means[k]) ** 2 / var).sum(axis=1)

    def predict_proba(self, data):
        x = check_query(data, self.d)
        log_odds = self._log_lik(x, 1) - self._log_lik(x, 0) + np.log(self.priors[1] / self.priors[0])
        return sigmoid(log_odds)


def fit_gnb(data, labels) -> GnbClassifier:
    x, y = check_training(data, labels)
    require_both_classes(y)
    means = np.stack([x[y == k].mean(axis=0) for k in (0, 1)])
    variances = np.maximum(np.stack([x[y == k].var(axis=0) for k in (0, 1)]), VAR_FLOOR)
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    return GnbClassifier(means, variances, priors)
