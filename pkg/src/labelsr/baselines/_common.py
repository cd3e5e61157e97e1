import numpy as np


class NotTrainableError(ValueError):
    """Training data cannot support the requested model."""


def check_training(data, labels):
    x = np.atleast_2d(np.asarray(data, dtype=float))
    y = np.asarray(labels).astype(int).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} rows but {y.shape[0]} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if not np.all(np.isfinite(x)):
        raise ValueError("training data contains non-finite values")
    return x, y


def require_both_classes(y):
    if not (np.any(y == 0) and np.any(y == 1)):
        raise NotTrainableError("both classes must be present in the training labels")


def check_query(data, d):
    x = np.atleast_2d(np.asarray(data, dtype=float))
    if x.shape[1] != d:
        raise ValueError(f"query dimension {x.shape[1]} != trained dimension {d}")
    return x


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
