"""RBF-kernel soft-margin SVM trained by SMO, with Platt-scaled probabilities."""
import logging
from dataclasses import dataclass, field

import numpy as np

from ._common import check_query, check_training, require_both_classes

log = logging.getLogger(__name__)


def rbf_kernel(a, b, gamma):
    a_sq = np.einsum("ij,ij->i", a, a)
    b_sq = np.einsum("ij,ij->i", b, b)
    sq = a_sq[:, None] + b_sq[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SmoResult:
    alpha: np.ndarray
    rho: float
    n_iter: int
    converged: bool
    objective: list = field(default_factory=list)


def smo(kernel, y, C, tol=1e-3, max_iter=200_000, track_objective=False):
    """Maximise sum(a) - 1/2 a'Qa over 0 <= a <= C, y'a = 0.

    Working pairs use maximal-violation i and second-order j selection.
    ``y`` is in {-1, +1}.  Stops once the KKT gap m(a) - M(a) < ``tol``.
    """
    n = len(y)
    yf = y.astype(float)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    diag = np.diag(kernel).copy()
    objective = []
    converged = False
    it = 0
    while it < max_iter:
        score = -yf * grad
        up = ((alpha < C) & (yf > 0)) | ((alpha > 0) & (yf < 0))
        low = ((alpha < C) & (yf < 0)) | ((alpha > 0) & (yf > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m = score[i]
        big_m = np.min(np.where(low, score, np.inf))
        if m - big_m < tol:
            converged = True
            break
        gap = m - score
        cand = low & (gap > 0)
        curv = np.maximum(diag[i] + diag - 2.0 * kernel[i], 1e-12)
        gain = np.where(cand, -(gap ** 2) / curv, np.inf)
        j = int(np.argmin(gain))

        # move a_i by +y_i*lam and a_j by -y_j*lam; keeps y'a fixed
        lam = gap[j] / curv[j]
        lam = min(lam, C - alpha[i] if yf[i] > 0 else alpha[i])
        lam = min(lam, alpha[j] if yf[j] > 0 else C - alpha[j])
        d_i, d_j = yf[i] * lam, -yf[j] * lam
        alpha[i] = np.clip(alpha[i] + d_i, 0.0, C)
        alpha[j] = np.clip(alpha[j] + d_j, 0.0, C)
        grad += yf * (yf[i] * kernel[:, i] * d_i + yf[j] * kernel[:, j] * d_j)
        it += 1
        if track_objective:
            objective.append(float(alpha.sum() - 0.5 * alpha @ (grad + 1.0)))

    free = (alpha > 0) & (alpha < C)
    yg = yf * grad
    if free.any():
        rho = float(yg[free].mean())
    else:
        # no free vectors: midpoint of the feasible interval for rho
        ub_mask = ((alpha >= C) & (yf < 0)) | ((alpha <= 0) & (yf > 0))
        lb_mask = ((alpha >= C) & (yf > 0)) | ((alpha <= 0) & (yf < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub + lb) else float(np.nan_to_num(ub if np.isfinite(ub) else lb))
    if not converged:
        log.warning("SMO stopped after %d iterations without meeting the KKT tolerance", it)
    return SmoResult(alpha, rho, it, converged, objective)


def platt_fit(decision, y01, max_iter=100, min_step=1e-10, sigma=1e-12, eps=1e-5):
    """Fit P(y=1|f) = 1 / (1 + exp(A f + B)) by regularised-target Newton steps."""
    f = np.asarray(decision, dtype=float)
    n_pos = int(np.sum(y01 == 1))
    n_neg = len(y01) - n_pos
    hi, lo = (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)
    t = np.where(y01 == 1, hi, lo)
    a, b = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))

    def nll(a, b):
        z = f * a + b
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)), (t - 1) * z + np.log1p(np.exp(z)))))

    with np.errstate(over="ignore"):
        return _platt_newton(f, t, a, b, nll, max_iter, min_step, sigma, eps)


def _platt_newton(f, t, a, b, nll, max_iter, min_step, sigma, eps):
    fval = nll(a, b)
    for _ in range(max_iter):
        z = f * a + b
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1, g2 = np.sum(f * d1), np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= min_step:
            na, nb = a + step * da, b + step * db
            nf = nll(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    return a, b


@dataclass(frozen=True)
class SvmClassifier:
    support: np.ndarray
    coef: np.ndarray   # alpha_i * y_i over support vectors
    rho: float
    gamma: float
    platt: tuple
    converged: bool
    n_iter: int
    objective: tuple = ()
    kind: str = "SVM"

    @property
    def d(self):
        return self.support.shape[1]

    def decision_function(self, data):
        x = check_query(data, self.d)
        if len(self.support) == 0:
            return np.full(len(x), -self.rho)
        return rbf_kernel(x, self.support, self.gamma) @ self.coef - self.rho

    def predict_proba(self, data):
        a, b = self.platt
        z = a * self.decision_function(data) + b
        return np.exp(-np.logaddexp(0.0, z))


def default_gamma(x):
    var = x.var()
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


def fit_svm(data, labels, C: float = 1.0, gamma="scale", tol: float = 1e-3,
            max_iter: int = 200_000, track_objective: bool = False):
    """Train the SVM.  ``gamma="scale"`` means 1 / (d * var(data))."""
    x, y01 = check_training(data, labels)
    require_both_classes(y01)
    g = default_gamma(x) if gamma == "scale" else float(gamma)
    y = np.where(y01 == 1, 1, -1)
    kernel = rbf_kernel(x, x, g)
    res = smo(kernel, y, C, tol=tol, max_iter=max_iter, track_objective=track_objective)
    sv = res.alpha > 0
    decision = kernel[:, sv] @ (res.alpha[sv] * y[sv]) - res.rho
    return SvmClassifier(x[sv], res.alpha[sv] * y[sv], res.rho, g, platt_fit(decision, y01),
                         res.converged, res.n_iter, tuple(res.objective))
