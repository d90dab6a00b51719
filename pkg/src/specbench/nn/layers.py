"""Differentiable layers over plain numpy arrays.

Convolutional activations use a channels-last (batch, length, channels)
layout so the kernel loop reduces to one GEMM per tap; dense activations
are (batch, features). Parameters and activations live in the model dtype
(float32 by default, float64 for gradient verification); reductions that
feed statistics or losses accumulate in float64. Summation orders are
fixed, so repeated runs on the same machine give identical results.

Each layer caches what its backward pass needs during forward(train=True);
calling backward without a matching forward is a usage error.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.99


class Layer:
    """Common interface: forward/backward plus parameter introspection."""

    kind = "layer"

    def parameters(self) -> list[np.ndarray]:
        return []

    def gradients(self) -> list[np.ndarray]:
        return []

    def state_arrays(self) -> list[np.ndarray]:
        """Arrays a checkpoint must persist (parameters + running buffers)."""
        return self.parameters()

    def zero_gradients(self) -> None:
        for g in self.gradients():
            g[...] = 0.0

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cache_or_raise(self, name="_cache"):
        cache = getattr(self, name, None)
        if cache is None:
            raise ShapeError(f"{self.kind}: backward called without a cached forward")
        return cache


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, shape).astype(dtype)


class Conv1d(Layer):
    """Valid (unpadded) cross-correlation along the length axis.

    weight[k] maps in-channels to out-channels for kernel tap k; output
    length is floor((l - kernel) / stride) + 1.
    """

    kind = "conv1d"

    def __init__(self, in_channels, out_channels, kernel, stride=1,
                 dtype=np.float32, rng=None):
        if kernel < 1 or stride < 1 or in_channels < 1 or out_channels < 1:
            raise ShapeError("conv1d parameters must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        rng = rng or np.random.default_rng(0)
        self.weight = he_uniform(
            rng, (kernel, in_channels, out_channels), fan_in=kernel * in_channels, dtype=dtype
        )
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def gradients(self):
        return [self.grad_weight, self.grad_bias]

    def output_length(self, length: int) -> int:
        if self.kernel > length:
            raise ShapeError(f"conv1d kernel {self.kernel} exceeds input length {length}")
        return (length - self.kernel) // self.stride + 1

    def _flat_weight(self) -> np.ndarray:
        # (kernel, in, out) -> (in * kernel, out), channel-major to match im2col
        return np.ascontiguousarray(self.weight.transpose(1, 0, 2)).reshape(-1, self.out_channels)

    def _im2col(self, x, l_out):
        # (batch, l_out, in, kernel) windows flattened to one GEMM operand
        windows = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=1)
        return windows[:, :: self.stride].reshape(x.shape[0] * l_out, -1)

    def forward(self, x, train):
        b, l, c = x.shape
        if c != self.in_channels:
            raise ShapeError(f"conv1d expects {self.in_channels} channels, got {c}")
        l_out = self.output_length(l)
        cols = self._im2col(x, l_out)
        out = (cols @ self._flat_weight()).reshape(b, l_out, self.out_channels)
        out += self.bias
        if train:
            self._cache = (cols, x.shape, l_out)
        return out

    def backward(self, grad):
        cols, in_shape, l_out = self._cache_or_raise()
        b, l, c = in_shape
        grad_flat = grad.reshape(b * l_out, self.out_channels)
        dw = (cols.T @ grad_flat).reshape(c, self.kernel, self.out_channels)
        self.grad_weight += dw.transpose(1, 0, 2)
        self.grad_bias += grad.sum(axis=(0, 1), dtype=np.float64).astype(self.bias.dtype)
        dcols = (grad_flat @ self._flat_weight().T).reshape(b, l_out, c, self.kernel)
        dx = np.zeros(in_shape, dtype=grad.dtype)
        span = (l_out - 1) * self.stride + 1
        for k in range(self.kernel):
            dx[:, k : k + span : self.stride, :] += dcols[:, :, :, k]
        self._cache = None
        return dx


class MaxPool1d(Layer):
    """Non-overlapping max pooling; the trailing remainder is dropped.

    Ties go to the lowest index inside the window, and only the winning
    position receives gradient.
    """

    kind = "maxpool1d"

    def __init__(self, window):
        if window < 1:
            raise ShapeError(f"pool window must be >= 1, got {window}")
        self.window = window
        self._cache = None

    def output_length(self, length: int) -> int:
        out = length // self.window
        if out < 1:
            raise ShapeError(f"pool window {self.window} exceeds input length {length}")
        return out

    def forward(self, x, train):
        b, l, c = x.shape
        l_out = self.output_length(l)
        w = self.window
        # window axis last and contiguous: argmax is much faster there and
        # ties still resolve to the lowest in-window index
        xr = np.ascontiguousarray(x[:, : l_out * w, :].reshape(b, l_out, w, c).transpose(0, 1, 3, 2))
        idx = xr.argmax(axis=3)
        out = np.take_along_axis(xr, idx[:, :, :, None], axis=3)[:, :, :, 0]
        if train:
            self._cache = (idx, x.shape)
        return out

    def backward(self, grad):
        idx, in_shape = self._cache_or_raise()
        b, l, c = in_shape
        l_out = grad.shape[1]
        w = self.window
        zr = np.zeros((b, l_out, c, w), dtype=grad.dtype)
        np.put_along_axis(zr, idx[:, :, :, None], grad[:, :, :, None], axis=3)
        dx = np.zeros(in_shape, dtype=grad.dtype)
        dx[:, : l_out * w, :] = zr.transpose(0, 1, 3, 2).reshape(b, l_out * w, c)
        self._cache = None
        return dx


class BatchNorm(Layer):
    """Per-channel batch normalization with running statistics.

    Training mode normalizes by (biased) batch statistics computed in
    float64 and updates running stats with momentum 0.99; eval mode uses
    the running stats. Training batches must contain at least 2 samples.
    """

    kind = "batchnorm"

    def __init__(self, channels, dtype=np.float32):
        self.channels = channels
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.grad_gamma, self.grad_beta]

    def state_arrays(self):
        return [self.gamma, self.beta, self.running_mean, self.running_var]

    def _axes(self, x):
        if x.shape[-1] != self.channels:
            raise ShapeError(f"batchnorm expects {self.channels} channels, got {x.shape[-1]}")
        return tuple(range(x.ndim - 1))

    def forward(self, x, train):
        axes = self._axes(x)
        if train:
            if x.shape[0] < 2:
                raise ShapeError("batchnorm requires batch size >= 2 in train mode")
            x64 = x.astype(np.float64)
            mean = x64.mean(axis=axes)
            var = x64.var(axis=axes)
            self.running_mean *= BN_MOMENTUM
            self.running_mean += (1.0 - BN_MOMENTUM) * mean
            self.running_var *= BN_MOMENTUM
            self.running_var += (1.0 - BN_MOMENTUM) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + BN_EPSILON)
        xhat = ((x - mean.astype(x.dtype)) * inv_std.astype(x.dtype)).astype(x.dtype)
        if train:
            self._cache = (xhat, inv_std.astype(x.dtype), axes)
        return self.gamma * xhat + self.beta

    def backward(self, grad):
        xhat, inv_std, axes = self._cache_or_raise()
        m = np.prod([xhat.shape[a] for a in axes])
        self.grad_gamma += np.sum(grad * xhat, axis=axes, dtype=np.float64).astype(self.gamma.dtype)
        self.grad_beta += np.sum(grad, axis=axes, dtype=np.float64).astype(self.beta.dtype)
        dxhat = grad * self.gamma
        sum_dxhat = dxhat.sum(axis=axes, dtype=np.float64).astype(grad.dtype)
        sum_dxhat_xhat = np.sum(dxhat * xhat, axis=axes, dtype=np.float64).astype(grad.dtype)
        dx = (inv_std / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        self._cache = None
        return dx.astype(grad.dtype)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._cache = None

    def forward(self, x, train):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, grad):
        mask = self._cache_or_raise()
        self._cache = None
        return grad * mask


class Flatten(Layer):
    """(batch, length, channels) -> (batch, length * channels), C-order."""

    kind = "flatten"

    def __init__(self):
        self._cache = None

    def forward(self, x, train):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        shape = self._cache_or_raise()
        self._cache = None
        return grad.reshape(shape)


class Dense(Layer):
    """Affine map: out = x @ weight + bias with weight (in_features, units)."""

    kind = "dense"

    def __init__(self, in_features, units, dtype=np.float32, rng=None):
        if in_features < 1 or units < 1:
            raise ShapeError("dense dimensions must be positive")
        self.in_features = in_features
        self.units = units
        rng = rng or np.random.default_rng(0)
        self.weight = he_uniform(rng, (in_features, units), fan_in=in_features, dtype=dtype)
        self.bias = np.zeros(units, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def gradients(self):
        return [self.grad_weight, self.grad_bias]

    def forward(self, x, train):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expects (batch, {self.in_features}), got {x.shape}"
            )
        if train:
            self._cache = x
        return x @ self.weight + self.bias

    def backward(self, grad):
        x = self._cache_or_raise()
        self.grad_weight += x.T @ grad
        self.grad_bias += grad.sum(axis=0, dtype=np.float64).astype(self.bias.dtype)
        self._cache = None
        return grad @ self.weight.T


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy of softmax(logits) against integer labels.

    Stable log-sum-exp in float64; the returned gradient is
    (softmax - one_hot) / batch in the logits dtype.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {logits.shape}")
    b, n_classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise ShapeError(f"labels must have shape ({b},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DomainError(f"labels must lie in [0, {n_classes})")
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    log_probs = z - log_norm
    rows = np.arange(b)
    loss = float(-log_probs[rows, labels].mean())
    probs = np.exp(log_probs)
    probs[rows, labels] -= 1.0
    return loss, (probs / b).astype(logits.dtype)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
