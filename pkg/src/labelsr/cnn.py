"""Small convolutional network over 128 x 10 log-mel windows.

Architecture: 2x2 valid conv (32 filters, ReLU) -> 2x2 max-pool ->
dense 256 (ReLU) -> dropout -> dense 2 -> softmax.  Forward and backward
passes are hand-written numpy and run in float64 unless asked otherwise.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .postprocess import ProbSeries

log = logging.getLogger(__name__)

N_BANDS = 128
WINDOW = 10
N_FILTERS = 32
CONV_SHAPE = (N_BANDS - 1, WINDOW - 1, N_FILTERS)          # 127 x 9 x 32
POOL_SHAPE = (CONV_SHAPE[0] // 2, CONV_SHAPE[1] // 2, N_FILTERS)  # 63 x 4 x 32
FLAT = POOL_SHAPE[0] * POOL_SHAPE[1] * POOL_SHAPE[2]      # 8064
HIDDEN = 256
PARAM_ORDER = ("conv_w", "conv_b", "dense_w", "dense_b", "out_w", "out_b")
PARAM_SHAPES = {
    "conv_w": (2, 2, N_FILTERS),
    "conv_b": (N_FILTERS,),
    "dense_w": (HIDDEN, FLAT),
    "dense_b": (HIDDEN,),
    "out_w": (2, HIDDEN),
    "out_b": (2,),
}
CHECKPOINT_MAGIC = b"CNN1"
CHECKPOINT_VERSION = 1


class CnnTrainingError(FloatingPointError):
    pass


@dataclass
class CnnModel:
    params: dict
    dropout_p: float = 0.2
    input_shift: float = 0.0
    input_scale: float = 1.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        for name in PARAM_ORDER:
            if self.params[name].shape != PARAM_SHAPES[name]:
                raise ValueError(f"{name} has shape {self.params[name].shape}, expected {PARAM_SHAPES[name]}")

    @property
    def dtype(self):
        return self.params["dense_w"].dtype

    @classmethod
    def init(cls, seed=0, dtype=np.float64, dropout_p=0.2):
        rng = np.random.default_rng(seed)

        def glorot(shape, fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=shape).astype(dtype)

        params = {
            "conv_w": glorot((2, 2, N_FILTERS), 4, 4 * N_FILTERS),
            "conv_b": np.zeros(N_FILTERS, dtype),
            "dense_w": glorot((HIDDEN, FLAT), FLAT, HIDDEN),
            "dense_b": np.zeros(HIDDEN, dtype),
            "out_w": glorot((2, HIDDEN), HIDDEN, 2),
            "out_b": np.zeros(2, dtype),
        }
        return cls(params, dropout_p)

    @classmethod
    def zeros(cls, dtype=np.float64):
        return cls({k: np.zeros(s, dtype) for k, s in PARAM_SHAPES.items()})

    def copy(self):
        return CnnModel({k: v.copy() for k, v in self.params.items()}, self.dropout_p,
                        self.input_shift, self.input_scale, list(self.history))


def _patches(x):
    """(B, 128, 10) -> (B, 127, 9, 4) stacked 2x2 neighbourhoods."""
    return np.stack([x[:, :-1, :-1], x[:, :-1, 1:], x[:, 1:, :-1], x[:, 1:, 1:]], axis=-1)


_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _pool(a):
    """2x2 stride-2 max-pool of (B, 127, 9, C), floor mode.

    Returns the pooled maps and one mask per block offset marking the
    first maximal element, which is where the backward pass sends gradient.
    """
    h, w, _ = POOL_SHAPE
    parts = [a[:, di:2 * h:2, dj:2 * w:2] for di, dj in _OFFSETS]
    pooled = np.maximum(np.maximum(parts[0], parts[1]), np.maximum(parts[2], parts[3]))
    masks = []
    taken = np.zeros(pooled.shape, dtype=bool)
    for part in parts:
        m = (part == pooled) & ~taken
        taken |= m
        masks.append(m)
    return pooled, masks


def _unpool(dpool, masks):
    h, w, _ = POOL_SHAPE
    out = np.zeros((dpool.shape[0],) + CONV_SHAPE, dtype=dpool.dtype)
    for (di, dj), m in zip(_OFFSETS, masks):
        out[:, di:2 * h:2, dj:2 * w:2] = dpool * m
    return out


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: CnnModel, windows, train_mode=False, rng=None, return_cache=False):
    """Class probabilities for a window (128 x 10) or a batch (B x 128 x 10)."""
    x = np.asarray(windows, dtype=model.dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1:] != (N_BANDS, WINDOW):
        raise ValueError(f"expected windows of shape ({N_BANDS}, {WINDOW}), got {x.shape[1:]}")
    p = model.params
    b = x.shape[0]
    xn = (x - model.input_shift) / model.input_scale
    patches = _patches(xn)
    z1 = patches @ p["conv_w"].reshape(4, N_FILTERS) + p["conv_b"]
    a1 = np.maximum(z1, 0)
    pooled, masks = _pool(a1)
    flat = pooled.reshape(b, FLAT)
    z2 = flat @ p["dense_w"].T + p["dense_b"]
    a2 = np.maximum(z2, 0)
    if train_mode and model.dropout_p > 0:
        if rng is None:
            raise ValueError("train_mode needs an rng for dropout masks")
        keep = (rng.random(a2.shape) >= model.dropout_p).astype(a2.dtype) / (1.0 - model.dropout_p)
    else:
        keep = None
    a2d = a2 if keep is None else a2 * keep
    z3 = a2d @ p["out_w"].T + p["out_b"]
    probs = _softmax(z3)
    if return_cache:
        cache = dict(patches=patches, z1=z1, masks=masks, flat=flat, z2=z2, keep=keep, a2d=a2d,
                     shapes=(xn.shape, z1.shape, pooled.shape, flat.shape, a2.shape, probs.shape))
        return probs, cache
    return probs[0] if single else probs


def backward(model: CnnModel, probs, labels, cache):
    """Gradients of mean cross-entropy for every parameter, given a forward cache."""
    p = model.params
    b = probs.shape[0]
    dz3 = probs.copy()
    dz3[np.arange(b), labels] -= 1.0
    dz3 /= b
    grads = {"out_w": dz3.T @ cache["a2d"], "out_b": dz3.sum(axis=0)}
    da2 = dz3 @ p["out_w"]
    if cache["keep"] is not None:
        da2 = da2 * cache["keep"]
    dz2 = da2 * (cache["z2"] > 0)
    grads["dense_w"] = dz2.T @ cache["flat"]
    grads["dense_b"] = dz2.sum(axis=0)
    dpool = (dz2 @ p["dense_w"]).reshape((b,) + POOL_SHAPE)
    dz1 = _unpool(dpool, cache["masks"]) * (cache["z1"] > 0)
    grads["conv_w"] = (cache["patches"].reshape(-1, 4).T @ dz1.reshape(-1, N_FILTERS)).reshape(2, 2, N_FILTERS)
    grads["conv_b"] = dz1.reshape(-1, N_FILTERS).sum(axis=0)
    return grads


def cross_entropy(probs, labels):
    return float(-np.mean(np.log(np.maximum(probs[np.arange(len(labels)), labels], 1e-300))))


@dataclass
class WindowBatch:
    inputs: np.ndarray        # (k, 128, 10)
    labels: np.ndarray        # (k,)
    frame_index: np.ndarray   # (k,)
    provenance: np.ndarray | None = None

    def __len__(self):
        return len(self.labels)

    @staticmethod
    def concat(batches):
        prov = None
        if all(bt.provenance is not None for bt in batches):
            prov = np.concatenate([bt.provenance for bt in batches])
        return WindowBatch(
            np.concatenate([bt.inputs for bt in batches]),
            np.concatenate([bt.labels for bt in batches]),
            np.concatenate([bt.frame_index for bt in batches]),
            prov,
        )


def _padded(values):
    # frames [t-5, t+4] around t
    before, after = WINDOW // 2, WINDOW // 2 - 1
    mode = "reflect" if values.shape[0] > max(before, after) else "symmetric"
    return np.pad(values, ((before, after), (0, 0)), mode=mode)


def window_view(feats):
    """Lazy (T, 128, 10) view: window t spans frames t-5 .. t+4, reflect-padded."""
    padded = _padded(np.asarray(feats.values))
    view = np.lib.stride_tricks.sliding_window_view(padded, WINDOW, axis=0)
    return view  # (T, B, WINDOW)


def make_windows(feats, labels, frame_index=None, accepted=None, provenance=None, dtype=np.float64):
    """Training windows for ``frame_index`` (default every frame) with their labels.

    Frames whose ``accepted`` flag is false are left out.
    """
    view = window_view(feats)
    idx = np.arange(view.shape[0]) if frame_index is None else np.asarray(frame_index, dtype=np.intp)
    lab = np.asarray(labels).astype(np.intp).ravel()
    if lab.shape != idx.shape:
        raise ValueError(f"{lab.size} labels for {idx.size} frames")
    if accepted is not None:
        keep = np.asarray(accepted, dtype=bool)
        idx, lab = idx[keep], lab[keep]
    prov = None if provenance is None else np.full(len(idx), provenance, dtype=object)
    return WindowBatch(view[idx].astype(dtype), lab, idx, prov)


def train(model: CnnModel, batch: WindowBatch, epochs: int = 10, lr: float = 0.01,
          batch_size: int = 32, seed=0, standardize: bool = True) -> CnnModel:
    """Plain minibatch SGD on mean cross-entropy; returns a new model.

    The shuffle order and dropout masks come from ``seed``.  With
    ``standardize`` the input shift/scale are set from the training windows
    (one scalar each) before the first step.
    """
    labels = np.asarray(batch.labels, dtype=np.intp)
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise CnnTrainingError("CNN training needs at least one window of each class")
    out = model.copy()
    inputs = batch.inputs.astype(out.dtype, copy=False)
    if standardize:
        out.input_shift = float(inputs.mean())
        out.input_scale = float(inputs.std()) or 1.0
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for a in range(0, len(order), batch_size):
            idx = order[a:a + batch_size]
            probs, cache = forward(out, inputs[idx], train_mode=True, rng=rng, return_cache=True)
            loss = cross_entropy(probs, labels[idx])
            if not np.isfinite(loss):
                raise CnnTrainingError(f"non-finite loss at epoch {epoch}, offset {a}")
            total += loss * len(idx)
            grads = backward(out, probs, labels[idx], cache)
            for name in PARAM_ORDER:
                out.params[name] -= (lr * grads[name]).astype(out.dtype, copy=False)
        out.history.append(total / len(labels))
        log.debug("epoch %d mean loss %.4f", epoch + 1, out.history[-1])
    return out


def predict_frames(model: CnnModel, feats, chunk: int = 512) -> ProbSeries:
    """p(C1) for every frame from its centred window, dropout off."""
    view = window_view(feats)
    out = np.empty(view.shape[0])
    for a in range(0, view.shape[0], chunk):
        out[a:a + chunk] = forward(model, view[a:a + chunk])[:, 1]
    return ProbSeries(np.clip(out, 0.0, 1.0), frame_s=feats.frame_s)


def save_checkpoint(model: CnnModel, path):
    """Write magic ``CNN1``, version, header, then float64 parameters in order."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(PARAM_ORDER)))
        fh.write(struct.pack("<ddd", model.dropout_p, model.input_shift, model.input_scale))
        for name in PARAM_ORDER:
            arr = model.params[name]
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for name in PARAM_ORDER:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_checkpoint(path, dtype=np.float64) -> CnnModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a CNN1 checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION or n != len(PARAM_ORDER):
        raise ValueError(f"{path}: unsupported checkpoint version {version} with {n} tensors")
    dropout_p, shift, scale = struct.unpack_from("<ddd", data, 12)
    off = 36
    shapes = []
    for _ in range(n):
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{ndim}I", data, off))
        off += 4 * ndim
    params = {}
    for name, shape in zip(PARAM_ORDER, shapes):
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(dtype)
        off += 8 * count
    return CnnModel(params, dropout_p, shift, scale)
