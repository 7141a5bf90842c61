"""Minimal deterministic deep-learning engine in float64 numpy.

Layers: dense, relu, conv2d (3x3, stride 1, valid), maxpool2d (2x2,
stride 2, odd trailing rows/columns dropped), flatten, concat_scalars.
Tensors are plain row-major float64 ndarrays; images use (batch,
channels, height, width) layout.  All randomness flows through
numpy's PCG64 generator seeded explicitly, so identical seeds give
bit-identical parameters and training trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalDivergence, ShapeMismatch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LayerSpec:
    """Serializable layer description: kind plus kind-specific extents."""

    kind: str                      # dense | relu | conv2d | maxpool2d | flatten | concat_scalars
    extents: tuple[int, ...] = ()  # dense: (in, out); conv2d: (c_in, c_out); concat: (n_scalars,)


class Dense:
    def __init__(self, n_in: int, n_out: int):
        self.n_in, self.n_out = n_in, n_out
        self.w = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    spec = property(lambda self: LayerSpec("dense", (self.n_in, self.n_out)))
    params = property(lambda self: [self.w, self.b])
    grads = property(lambda self: [self.dw, self.db])

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"dense expects (B, {self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.w.T


class ReLU:
    spec = property(lambda self: LayerSpec("relu"))
    params = property(lambda self: [])
    grads = property(lambda self: [])

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Conv2D:
    """3x3 valid convolution, stride 1; weights (c_out, c_in, 3, 3).

    im2col per sample keeps the patch matrix small enough to stay in
    cache-friendly contiguous blocks; `need_dx` lets the network skip the
    input gradient on its first layer, where nothing consumes it.
    """

    def __init__(self, c_in: int, c_out: int):
        self.c_in, self.c_out = c_in, c_out
        self.w = np.zeros((c_out, c_in, 3, 3))
        self.b = np.zeros(c_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None
        self.need_dx = True

    spec = property(lambda self: LayerSpec("conv2d", (self.c_in, self.c_out)))
    params = property(lambda self: [self.w, self.b])
    grads = property(lambda self: [self.dw, self.db])

    @staticmethod
    def _im2col(img: np.ndarray) -> np.ndarray:
        c, h, w = img.shape
        ho, wo = h - 2, w - 2
        col = np.empty((c, 3, 3, ho, wo))
        for i in range(3):
            for j in range(3):
                col[:, i, j] = img[:, i:i + ho, j:j + wo]
        return col.reshape(c * 9, ho * wo)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeMismatch(f"conv2d expects (B, {self.c_in}, H, W), got {x.shape}")
        if x.shape[2] < 3 or x.shape[3] < 3:
            raise ShapeMismatch(f"conv2d input {x.shape} smaller than the 3x3 kernel")
        self._x = x
        n, _, h, w = x.shape
        ho, wo = h - 2, w - 2
        wmat = self.w.reshape(self.c_out, self.c_in * 9)
        out = np.empty((n, self.c_out, ho, wo))
        for k in range(n):
            out[k] = (wmat @ self._im2col(x[k]) + self.b[:, None]).reshape(self.c_out, ho, wo)
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        x = self._x
        n, _, h, w = x.shape
        ho, wo = h - 2, w - 2
        wmat = self.w.reshape(self.c_out, self.c_in * 9)
        dx = np.zeros_like(x) if self.need_dx else None
        for k in range(n):
            dy_flat = dy[k].reshape(self.c_out, ho * wo)
            self.dw += (dy_flat @ self._im2col(x[k]).T).reshape(self.w.shape)
            if dx is None:
                continue
            dcol = (wmat.T @ dy_flat).reshape(self.c_in, 3, 3, ho, wo)
            for i in range(3):
                for j in range(3):
                    dx[k, :, i:i + ho, j:j + wo] += dcol[:, i, j]
        self.db += dy.sum(axis=(0, 2, 3))
        return dx


class MaxPool2D:
    """2x2 max pooling, stride 2; a trailing odd row/column is dropped."""

    spec = property(lambda self: LayerSpec("maxpool2d"))
    params = property(lambda self: [])
    grads = property(lambda self: [])

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeMismatch(f"maxpool2d expects (B, C, H, W), got {x.shape}")
        n, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        windows = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
        windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
        # argmax takes the first maximum: ties resolve in row-major window order
        arg = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
        self._arg = arg.astype(np.int8)
        self._shape = x.shape
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, c, h, w = self._shape
        ho, wo = h // 2, w // 2
        dx = np.zeros(self._shape)
        bi, ci, ii, ji = np.indices((n, c, ho, wo), sparse=True)
        rows = 2 * ii + self._arg // 2
        cols = 2 * ji + self._arg % 2
        dx[bi, ci, rows, cols] = dy
        return dx


class Flatten:
    spec = property(lambda self: LayerSpec("flatten"))
    params = property(lambda self: [])
    grads = property(lambda self: [])

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class ConcatScalars:
    """Append per-sample scalar features after the flattened image block."""

    def __init__(self, n_scalars: int):
        self.n_scalars = n_scalars

    spec = property(lambda self: LayerSpec("concat_scalars", (self.n_scalars,)))
    params = property(lambda self: [])
    grads = property(lambda self: [])

    def forward(self, x: np.ndarray, scalars: np.ndarray) -> np.ndarray:
        if scalars is None or scalars.shape != (x.shape[0], self.n_scalars):
            got = None if scalars is None else scalars.shape
            raise ShapeMismatch(f"concat expects scalars ({x.shape[0]}, {self.n_scalars}), got {got}")
        self._split = x.shape[1]
        return np.concatenate([x, scalars], axis=1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy[:, :self._split]


_LAYER_FACTORY = {
    "dense": lambda e: Dense(*e),
    "relu": lambda e: ReLU(),
    "conv2d": lambda e: Conv2D(*e),
    "maxpool2d": lambda e: MaxPool2D(),
    "flatten": lambda e: Flatten(),
    "concat_scalars": lambda e: ConcatScalars(*e),
}


def build_layers(specs: list[LayerSpec]) -> list:
    return [_LAYER_FACTORY[s.kind](s.extents) for s in specs]


class Network:
    """A fixed feed-forward stack with cached activations for backprop."""

    def __init__(self, layers: list):
        self.layers = layers

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self) -> None:
        for g in self.grads:
            g[...] = 0.0

    def forward(self, x: np.ndarray, scalars: np.ndarray | None = None) -> np.ndarray:
        for i, layer in enumerate(self.layers):
            try:
                if isinstance(layer, ConcatScalars):
                    x = layer.forward(x, scalars)
                else:
                    x = layer.forward(x)
            except ShapeMismatch as exc:
                raise ShapeMismatch(f"layer {i}: {exc}") from None
        if not np.all(np.isfinite(x)):
            raise NumericalDivergence("non-finite network output")
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        first = self.layers[0]
        skip_first_dx = isinstance(first, Conv2D)
        if skip_first_dx:
            first.need_dx = False
        try:
            for layer in reversed(self.layers):
                dy = layer.backward(dy)
        finally:
            if skip_first_dx:
                first.need_dx = True
        return dy


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, learning_rate: float) -> AdamState:
    """One bias-corrected Adam update, applied to params in place."""
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return state


def init_params(layers: list, seed: int) -> None:
    """Seeded He/Xavier initialization, in place.

    Weights feeding a ReLU use He scaling (variance 2/fan_in); the final
    linear layer uses Xavier (variance 2/(fan_in+fan_out)).  Biases are
    zero.  Draws come from numpy's PCG64 generator in layer order.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    for i, layer in enumerate(layers):
        if isinstance(layer, (Dense, Conv2D)):
            feeds_relu = i + 1 < len(layers) and isinstance(layers[i + 1], ReLU)
            if isinstance(layer, Dense):
                fan_in, fan_out = layer.n_in, layer.n_out
            else:
                fan_in, fan_out = layer.c_in * 9, layer.c_out * 9
            std = np.sqrt(2.0 / fan_in) if feeds_relu else np.sqrt(2.0 / (fan_in + fan_out))
            layer.w[...] = rng.normal(0.0, std, size=layer.w.shape)
            layer.b[...] = 0.0


def gradient_check(net: Network, x: np.ndarray, target: np.ndarray,
                   scalars: np.ndarray | None = None, h: float = 1e-6,
                   max_entries: int = 400, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error uses a 1e-3 floor in the denominator so near-zero
    entries compare absolutely instead of amplifying float roundoff.
    """
    net.zero_grads()
    out = net.forward(x, scalars)
    _, dpred = mse(out, target)
    net.backward(dpred)
    analytic = [g.copy() for g in net.grads]

    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for p, g in zip(net.params, analytic):
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            lp, _ = mse(net.forward(x, scalars), target)
            flat[i] = keep - h
            lm, _ = mse(net.forward(x, scalars), target)
            flat[i] = keep
            numeric = (lp - lm) / (2.0 * h)
            a = g.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
            worst = max(worst, rel)
    return worst
