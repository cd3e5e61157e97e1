"""One-hidden-layer ReLU perceptron with softmax output, trained by SGD."""
from dataclasses import dataclass

import numpy as np

from ._common import check_query, check_training, require_both_classes


class TrainingDiverged(FloatingPointError):
    pass


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, x):
    w1, b1, w2, b2 = params
    pre = x @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    return softmax(hidden @ w2 + b2), (pre, hidden)


def loss_and_grads(params, x, y):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    w1, b1, w2, b2 = params
    probs, (pre, hidden) = forward(params, x)
    n = len(y)
    loss = -np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300)))
    dz2 = probs.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    gw2 = hidden.T @ dz2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2.T) * (pre > 0)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, [gw1, gb1, gw2, gb2]


@dataclass(frozen=True)
class MlpClassifier:
    params: tuple
    losses: tuple
    kind: str = "MLP"

    @property
    def d(self):
        return self.params[0].shape[0]

    def predict_class_probs(self, data):
        x = check_query(data, self.d)
        return forward(self.params, x)[0]

    def predict_proba(self, data):
        return self.predict_class_probs(data)[:, 1]


def init_params(rng, d, hidden):
    return [glorot_uniform(rng, d, hidden), np.zeros(hidden),
            glorot_uniform(rng, hidden, 2), np.zeros(2)]


def fit_mlp(data, labels, hidden: int = 64, epochs: int = 50, lr: float = 0.01,
            seed=0, batch_size: int = 32) -> MlpClassifier:
    x, y = check_training(data, labels)
    require_both_classes(y)
    rng = np.random.default_rng(seed)
    params = init_params(rng, x.shape[1], hidden)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for a in range(0, len(y), batch_size):
            idx = order[a:a + batch_size]
            loss, grads = loss_and_grads(params, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"MLP loss became {loss} at epoch {epoch}, batch starting {a}; "
                    f"max |w| = {max(np.abs(p).max() for p in params):.3g}"
                )
            total += loss * len(idx)
            for p, g in zip(params, grads):
                p -= lr * g
        losses.append(total / len(y))
    return MlpClassifier(tuple(params), tuple(losses))
