"""Neural layers with hand-written forward and backward passes.

Every layer caches what its backward pass needs during ``forward``; a cache
belongs to exactly one forward pass.  Parameters live in ``layer.params`` and
their gradients, after ``backward``, in ``layer.grads`` under the same keys.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor_core import ShapeError, get_dtype


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(get_dtype())


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, train=False):
        return self.forward(x, train)


class Conv2d(Layer):
    """2-D cross-correlation over NCHW input, lowered to a matmul via im2col."""

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=1, rng=None):
        super().__init__()
        if kernel < 1 or stride < 1 or padding < 0:
            raise ValueError("kernel and stride must be >= 1, padding >= 0")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = in_ch * kernel * kernel
        self.params["weight"] = _uniform_init(rng, (out_ch, in_ch, kernel, kernel), fan_in)
        self.params["bias"] = _uniform_init(rng, (out_ch,), fan_in)
        self._cache = None

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel, self.stride, self.padding
        if (h + 2 * p - k) % s or (w + 2 * p - k) % s or h + 2 * p < k or w + 2 * p < k:
            raise ValueError(
                f"conv geometry k={k} s={s} p={p} gives a non-integer output for {h}x{w}"
            )
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        if c != self.in_ch:
            raise ShapeError("conv2d", x.shape, self.params["weight"].shape)
        ho, wo = self.output_size(h, w)
        k, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        # (N, Ho, Wo, C, k, k) -> rows are receptive fields
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        wmat = self.params["weight"].reshape(self.out_ch, -1)
        out = cols @ wmat.T + self.params["bias"]
        self._cache = (x.shape, cols)
        return out.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dout):
        (n, c, h, w), cols = self._cache
        k, s, p = self.kernel, self.stride, self.padding
        _, o, ho, wo = dout.shape
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, o)
        wmat = self.params["weight"].reshape(o, -1)
        self.grads["weight"] = (d2.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] = d2.sum(axis=0)
        dcols = (d2 @ wmat).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w] if p else dxp


class MaxPool2d(Layer):
    """Window max pooling that records the argmax ("switch") of every window.

    Switches are flat indices into the input H*W plane; ties go to the first
    element in row-major window order.
    """

    def __init__(self, kernel=2, stride=2):
        super().__init__()
        self.kernel, self.stride = kernel, stride
        self.switches = None
        self._in_shape = None

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        k, s = self.kernel, self.stride
        if k > h or k > w:
            raise ShapeError("maxpool2d", x.shape, (k, k))
        ho, wo = (h - k) // s + 1, (w - k) // s + 1
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        flat = win.reshape(n, c, ho, wo, k * k)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        rows = np.arange(ho)[:, None] * s + arg // k
        cols = np.arange(wo)[None, :] * s + arg % k
        self.switches = rows * w + cols
        self._in_shape = x.shape
        return out

    def backward(self, dout):
        n, c, h, w = self._in_shape
        if dout.shape != self.switches.shape:
            raise ShapeError("maxpool2d_backward", dout.shape, self.switches.shape)
        base = (np.arange(n * c) * (h * w)).reshape(n, c, 1, 1)
        grad = np.bincount(
            (self.switches + base).ravel(), weights=dout.ravel(), minlength=n * c * h * w
        )
        return grad.astype(dout.dtype).reshape(n, c, h, w)


class Linear(Layer):
    """Fully connected layer; weight is stored out x in."""

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = _uniform_init(rng, (out_features, in_features), in_features)
        self.params["bias"] = _uniform_init(rng, (out_features,), in_features)
        self._x = None

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.params["weight"].shape[1]:
            raise ShapeError("linear", x.shape, self.params["weight"].shape)
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        self.grads["weight"] = dout.T @ self._x
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weight"]


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._mask, dout, 0).astype(dout.dtype, copy=False)


class Sigmoid(Layer):
    def forward(self, x, train=False):
        # split by sign so exp never overflows
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        out[~pos] = e / (1.0 + e)
        self._out = out
        return out

    def backward(self, dout):
        return dout * self._out * (1 - self._out)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""

    def __init__(self, rate=0.5, rng=None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.fixed_mask = None
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if self.fixed_mask is not None:
            keep = self.fixed_mask
        else:
            keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Sequential(Layer):
    """Chain of named layers; parameters are exposed as ``"<layer>.<param>"``."""

    def __init__(self, layers: list[tuple[str, Layer]]):
        super().__init__()
        self.layers = layers

    def forward(self, x, train=False):
        for _, layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def named_params(self):
        for lname, layer in self.layers:
            for pname, value in layer.params.items():
                yield f"{lname}.{pname}", layer, pname

    def __getitem__(self, name: str) -> Layer:
        for lname, layer in self.layers:
            if lname == name:
                return layer
        raise KeyError(name)


def euclidean_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch-mean squared error; returns (loss, d loss / d pred)."""
    if pred.shape != target.shape:
        raise ShapeError("euclidean_loss", pred.shape, target.shape)
    diff = pred - target
    n = pred.shape[0]
    loss = float(np.sum(diff * diff) / n)
    return loss, (2.0 / n) * diff


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError("cross_entropy_loss", logits.shape, labels.shape)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in 0..{k - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, labels] -= 1
    return loss, grad / n


class Adam:
    """Bias-corrected Adam over a fixed, ordered list of parameter arrays.

    Parameters are updated in place.
    """

    def __init__(self, params: list[np.ndarray], lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ShapeError("adam_step", p.shape, g.shape)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)
