"""Minimal trainable 1D CNN engine with hand-written backprop.

The layer set is fixed (Conv1d, BatchNorm1d, ReLU, MaxPool, AdaptiveAvgPool,
Flatten, Dense, Residual, plus the time-frequency layer) and each layer
implements its own backward pass, so no general autodiff is needed.  Three
backbones of different depths are provided, and ``assemble_model`` combines
a backbone with a time-frequency front layer in the add/replace/real-only
ablation variants.

Model inputs and outputs use the (batch, channels, length) convention.
Internally the convolutional stack runs channels-last, (batch, length,
channels), which keeps the im2col buffers and every elementwise pass
contiguous; ``Model`` converts at the boundary and reports channels-first
shapes.  All arithmetic is float64 unless a model is built with an explicit
float32 switch.
"""

import numpy as np

from tfnet.kernels import KernelFamily, KernelGrid, KernelParams, init_params
from tfnet.seeding import derive_rng
from tfnet.tfconv import TFconvLayer

MODES = ("backbone-only", "tfn-add", "tfn-replace", "wkn-add", "wkn-replace", "random-tfn")
BACKBONES = ("paper-cnn", "lenet-1d", "resnet-1d")


class Layer:
    """Base layer: no parameters, identity bookkeeping."""

    name = ""

    @property
    def params(self) -> list[np.ndarray]:
        return []

    @property
    def grads(self) -> list[np.ndarray]:
        return []

    def zero_grad(self):
        for g in self.grads:
            g[...] = 0.0

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1d(Layer):
    """Stride-1 cross-correlation, valid padding by default.

    Forward runs as a single GEMM over the im2col matrix, which is cached
    for the weight-gradient GEMM in backward.  Activations are
    (batch, length, channels); the stored weight is (out, in, taps).
    """

    def __init__(self, in_channels, out_channels, kernel_size, rng, padding="valid",
                 dtype=np.float64):
        if padding not in ("valid", "same"):
            raise ValueError(f"unknown padding {padding!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = padding
        bound = np.sqrt(6.0 / (in_channels * kernel_size))
        self.weight = rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size)).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.wgrad = np.zeros_like(self.weight)
        self.bgrad = np.zeros_like(self.bias)
        self._cache = None

    @property
    def params(self):
        return [self.weight, self.bias]

    @property
    def grads(self):
        return [self.wgrad, self.bgrad]

    def _pad_widths(self):
        if self.padding == "valid":
            return 0, 0
        k = self.kernel_size
        return (k - 1) // 2, k - 1 - (k - 1) // 2

    def _w2(self):
        """(taps*in, out) GEMM operand matching the im2col column order."""
        K = self.kernel_size
        return np.ascontiguousarray(self.weight.transpose(2, 1, 0)).reshape(
            K * self.in_channels, self.out_channels)

    def forward(self, x, training=False):
        B, L, C = x.shape
        if C != self.in_channels:
            raise ValueError(f"Conv1d expects {self.in_channels} input channels, got {C}")
        left, right = self._pad_widths()
        if left or right:
            x = np.pad(x, ((0, 0), (left, right), (0, 0)))
        K = self.kernel_size
        L_out = x.shape[1] - K + 1
        if L_out < 1:
            raise ValueError(f"input length {L} shorter than kernel {K}")
        win = np.lib.stride_tricks.sliding_window_view(x, (K, C), axis=(1, 2))
        cols = np.ascontiguousarray(win).reshape(B * L_out, K * C)
        out = cols @ self._w2()
        out += self.bias
        self._cache = (cols, B, L_out, x.shape[1])
        return out.reshape(B, L_out, self.out_channels)

    def backward(self, grad):
        cols, B, L_out, L_pad = self._cache
        C, K, O = self.in_channels, self.kernel_size, self.out_channels
        g2 = np.ascontiguousarray(grad).reshape(B * L_out, O)
        self.bgrad += g2.sum(axis=0)
        self.wgrad += (g2.T @ cols).reshape(O, K, C).transpose(0, 2, 1)
        gcols = (g2 @ self._w2().T).reshape(B, L_out, K, C)
        gx = np.zeros((B, L_pad, C), dtype=self.weight.dtype)
        for m in range(K):
            gx[:, m : m + L_out, :] += gcols[:, :, m, :]
        left, right = self._pad_widths()
        if left or right:
            gx = gx[:, left : L_pad - right, :]
        return gx


class BatchNorm1d(Layer):
    """Channel-wise normalization over (batch, time) with learnable affine."""

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.ggrad = np.zeros_like(self.gamma)
        self.bgrad = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    @property
    def params(self):
        return [self.gamma, self.beta]

    @property
    def grads(self):
        return [self.ggrad, self.bgrad]

    def forward(self, x, training=False):
        B, L, C = x.shape
        if C != self.channels:
            raise ValueError(f"BatchNorm1d expects {self.channels} channels, got {C}")
        M = B * L
        if training:
            if B < 2:
                raise ValueError("BatchNorm1d training mode needs batch size >= 2")
            mean = x.sum(axis=(0, 1)) / M
            # single-pass second moment; clip guards float32 cancellation
            sq = np.einsum("blc,blc->c", x, x)
            var = np.maximum(sq / M - mean * mean, 0.0)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
            istd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * istd
            self._cache = (xhat, istd, M, True)
            out = self.gamma * xhat
            out += self.beta
            return out
        istd = 1.0 / np.sqrt(self.running_var + self.eps)
        scale = self.gamma * istd
        self._cache = (x, istd, M, False)
        out = scale * x
        out += self.beta - scale * self.running_mean
        return out

    def backward(self, grad):
        cached, istd, M, training = self._cache
        if not training:
            xhat = (cached - self.running_mean) * istd
            self.ggrad += np.einsum("blc,blc->c", grad, xhat)
            self.bgrad += grad.sum(axis=(0, 1))
            return grad * (self.gamma * istd)
        xhat = cached
        sg = grad.sum(axis=(0, 1))
        sgx = np.einsum("blc,blc->c", grad, xhat)
        self.ggrad += sgx
        self.bgrad += sg
        gx = xhat * (sgx / -M)
        gx += grad
        gx -= sg / M
        gx *= self.gamma * istd
        return gx


class ReLU(Layer):
    def forward(self, x, training=False):
        out = np.maximum(x, 0.0)
        self._mask = x > 0.0
        return out

    def backward(self, grad):
        return grad * self._mask


class MaxPool(Layer):
    """Non-overlapping max pooling; trailing remainder is dropped."""

    def __init__(self, width=2):
        self.width = width

    def forward(self, x, training=False):
        B, L, C = x.shape
        w = self.width
        L_out = L // w
        self._in_shape = x.shape
        if w == 2:
            m0 = x[:, 0 : 2 * L_out : 2, :]
            m1 = x[:, 1 : 2 * L_out : 2, :]
            self._right = m1 > m0  # strict: ties keep the earlier slot, like argmax
            return np.maximum(m0, m1)
        xr = x[:, : L_out * w, :].reshape(B, L_out, w, C)
        self._idx = xr.argmax(axis=2)
        return np.ascontiguousarray(xr.max(axis=2))

    def backward(self, grad):
        B, L, C = self._in_shape
        w = self.width
        L_out = L // w
        gx = np.zeros((B, L, C), dtype=grad.dtype)
        if w == 2:
            right = self._right
            gx[:, 0 : 2 * L_out : 2, :] = np.where(right, 0.0, grad)
            gx[:, 1 : 2 * L_out : 2, :] = np.where(right, grad, 0.0)
            return gx
        gxr = np.zeros((B, L_out, w, C), dtype=grad.dtype)
        np.put_along_axis(gxr, self._idx[:, :, None, :], grad[:, :, None, :], axis=2)
        gx[:, : L_out * w, :] = gxr.reshape(B, L_out * w, C)
        return gx


class AdaptiveAvgPool(Layer):
    """Averages the length axis into a fixed number of bins.

    Bin i covers [floor(i*L/n), ceil((i+1)*L/n)); bins are equal when L is
    divisible by n.
    """

    def __init__(self, bins=4):
        self.bins = bins

    def _edges(self, L):
        n = self.bins
        starts = [int(np.floor(i * L / n)) for i in range(n)]
        ends = [int(np.ceil((i + 1) * L / n)) for i in range(n)]
        return starts, ends

    def forward(self, x, training=False):
        B, L, C = x.shape
        if L < self.bins:
            raise ValueError(f"cannot pool length {L} into {self.bins} bins")
        starts, ends = self._edges(L)
        out = np.empty((B, self.bins, C), dtype=x.dtype)
        for i, (s, e) in enumerate(zip(starts, ends)):
            out[:, i, :] = x[:, s:e, :].mean(axis=1)
        self._in_shape = x.shape
        return out

    def backward(self, grad):
        B, L, C = self._in_shape
        starts, ends = self._edges(L)
        gx = np.zeros((B, L, C), dtype=grad.dtype)
        for i, (s, e) in enumerate(zip(starts, ends)):
            gx[:, s:e, :] += grad[:, i : i + 1, :] / (e - s)
        return gx


class Flatten(Layer):
    def forward(self, x, training=False):
        self._in_shape = x.shape
        return np.ascontiguousarray(x).reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._in_shape)


class Dense(Layer):
    def __init__(self, in_features, out_features, rng, dtype=np.float64):
        self.in_features = in_features
        self.out_features = out_features
        bound = np.sqrt(6.0 / in_features)
        self.weight = rng.uniform(-bound, bound, (out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.wgrad = np.zeros_like(self.weight)
        self.bgrad = np.zeros_like(self.bias)

    @property
    def params(self):
        return [self.weight, self.bias]

    @property
    def grads(self):
        return [self.wgrad, self.bgrad]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"Dense expects (B, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, grad):
        self.wgrad += grad.T @ self._x
        self.bgrad += grad.sum(axis=0)
        return grad @ self.weight


class Residual(Layer):
    """Identity-skip block: out = f(x) + x (f must preserve shape)."""

    def __init__(self, sublayers):
        self.sublayers = list(sublayers)

    @property
    def params(self):
        return [p for layer in self.sublayers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.sublayers for g in layer.grads]

    def zero_grad(self):
        for layer in self.sublayers:
            layer.zero_grad()

    def forward(self, x, training=False):
        out = x
        for layer in self.sublayers:
            out = layer.forward(out, training=training)
        if out.shape != x.shape:
            raise ValueError("residual branch changed shape; identity skip impossible")
        return out + x

    def backward(self, grad):
        g = grad
        for layer in reversed(self.sublayers):
            g = layer.backward(g)
        return g + grad


class Model:
    """Ordered layer stack with assembly metadata.

    ``forward`` takes (batch, channels, length) input and converts to the
    internal channels-last convention after the optional time-frequency
    front layer (which itself works channels-first).
    """

    def __init__(self, layers, mode, backbone, n_classes, tfconv_config=None,
                 dtype=np.float64):
        self.layers = list(layers)
        self.mode = mode
        self.backbone = backbone
        self.n_classes = n_classes
        self.tfconv_config = tfconv_config
        self.dtype = np.dtype(dtype)
        for i, layer in enumerate(self.layers):
            layer.name = f"{i}.{type(layer).__name__.lower()}"
            if isinstance(layer, Residual):
                for j, sub in enumerate(layer.sublayers):
                    sub.name = f"{i}.res{j}.{type(sub).__name__.lower()}"

    def _front_split(self):
        if self.layers and isinstance(self.layers[0], TFconvLayer):
            return self.layers[0], self.layers[1:]
        return None, self.layers

    def forward(self, x, training=False):
        out = np.asarray(x, dtype=self.dtype)
        front, body = self._front_split()
        if front is not None:
            out = front.forward(out, training=training)
        if out.ndim == 3:
            out = np.ascontiguousarray(out.transpose(0, 2, 1))
        for layer in body:
            out = layer.forward(out, training=training)
        if out.ndim == 3:
            out = out.transpose(0, 2, 1)
        return out

    def backward(self, grad):
        g = np.asarray(grad)
        if g.ndim == 3:
            g = g.transpose(0, 2, 1)
        front, body = self._front_split()
        for layer in reversed(body):
            g = layer.backward(g)
        if g.ndim == 3:
            g = g.transpose(0, 2, 1)
        if front is not None:
            g = front.backward(g)
        return g

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def project_params(self):
        for layer in self.layers:
            if hasattr(layer, "project_params"):
                layer.project_params()

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    @property
    def tfconv(self) -> TFconvLayer | None:
        for layer in self.layers:
            if isinstance(layer, TFconvLayer):
                return layer
        return None

    def first_filter_layer(self):
        """First TFconv or Conv1d layer (interpretability target)."""
        for layer in self.layers:
            if isinstance(layer, (TFconvLayer, Conv1d)):
                return layer
        raise ValueError("model has no convolutional first layer")

    def trace_shapes(self, x):
        """Inference-mode forward recording (layer name, channels-first shape)."""
        out = np.asarray(x, dtype=self.dtype)
        front, body = self._front_split()
        trace = []
        if front is not None:
            out = front.forward(out, training=False)
            trace.append((front.name, tuple(out.shape)))
        if out.ndim == 3:
            out = np.ascontiguousarray(out.transpose(0, 2, 1))
        for layer in body:
            out = layer.forward(out, training=False)
            shape = tuple(out.shape)
            if out.ndim == 3:
                shape = (shape[0], shape[2], shape[1])
            trace.append((layer.name, shape))
        return trace

    def forward_capture(self, x, layer_type, training=False):
        """Forward pass that also returns the output of the first ``layer_type``."""
        out = np.asarray(x, dtype=self.dtype)
        front, body = self._front_split()
        captured = None
        if front is not None:
            out = front.forward(out, training=training)
            if isinstance(front, layer_type):
                captured = out
        if out.ndim == 3:
            out = np.ascontiguousarray(out.transpose(0, 2, 1))
        for layer in body:
            out = layer.forward(out, training=training)
            if captured is None and isinstance(layer, layer_type):
                captured = out.transpose(0, 2, 1) if out.ndim == 3 else out
        if captured is None:
            raise ValueError(f"model has no {layer_type.__name__} layer")
        if out.ndim == 3:
            out = out.transpose(0, 2, 1)
        return out, captured


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    B, n_classes = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {B}")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    # softmax in float64 so the loss keeps full precision for float32 models
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True).astype(np.float64)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    loss = float(-np.log(p[np.arange(B), labels]).sum() / B)
    grad = p
    grad[np.arange(B), labels] -= 1.0
    return loss, (grad / B).astype(logits.dtype)


def _paper_cnn(rng, in_channels, n_classes, first_out, dtype):
    c1 = first_out if first_out is not None else 16
    return [
        Conv1d(in_channels, c1, 15, rng, dtype=dtype),
        BatchNorm1d(c1, dtype=dtype),
        ReLU(),
        Conv1d(c1, 32, 3, rng, dtype=dtype),
        BatchNorm1d(32, dtype=dtype),
        ReLU(),
        MaxPool(2),
        Conv1d(32, 64, 3, rng, dtype=dtype),
        BatchNorm1d(64, dtype=dtype),
        ReLU(),
        Conv1d(64, 128, 3, rng, dtype=dtype),
        BatchNorm1d(128, dtype=dtype),
        ReLU(),
        AdaptiveAvgPool(4),
        Flatten(),
        Dense(512, 512, rng, dtype=dtype),
        Dense(512, 256, rng, dtype=dtype),
        Dense(256, 64, rng, dtype=dtype),
        Dense(64, n_classes, rng, dtype=dtype),
    ]


def _lenet_1d(rng, in_channels, n_classes, first_out, dtype):
    # Classic two-conv stack; pooled to 4 bins before flattening so the
    # dense head stays small for long inputs.
    c1 = first_out if first_out is not None else 6
    return [
        Conv1d(in_channels, c1, 5, rng, dtype=dtype),
        ReLU(),
        MaxPool(2),
        Conv1d(c1, 16, 5, rng, dtype=dtype),
        ReLU(),
        MaxPool(2),
        AdaptiveAvgPool(4),
        Flatten(),
        Dense(64, 120, rng, dtype=dtype),
        Dense(120, 84, rng, dtype=dtype),
        Dense(84, n_classes, rng, dtype=dtype),
    ]


def _resnet_1d(rng, in_channels, n_classes, first_out, dtype):
    def res_block():
        return Residual([
            Conv1d(64, 64, 3, rng, padding="same", dtype=dtype),
            BatchNorm1d(64, dtype=dtype),
            ReLU(),
            Conv1d(64, 64, 3, rng, padding="same", dtype=dtype),
            BatchNorm1d(64, dtype=dtype),
        ])

    c1 = first_out if first_out is not None else 16
    return [
        Conv1d(in_channels, c1, 15, rng, dtype=dtype),
        BatchNorm1d(c1, dtype=dtype),
        ReLU(),
        Conv1d(c1, 32, 3, rng, dtype=dtype),
        BatchNorm1d(32, dtype=dtype),
        ReLU(),
        MaxPool(2),
        Conv1d(32, 64, 3, rng, dtype=dtype),
        BatchNorm1d(64, dtype=dtype),
        ReLU(),
        res_block(),
        res_block(),
        Conv1d(64, 128, 3, rng, dtype=dtype),
        BatchNorm1d(128, dtype=dtype),
        ReLU(),
        AdaptiveAvgPool(4),
        Flatten(),
        Dense(512, 512, rng, dtype=dtype),
        Dense(512, 256, rng, dtype=dtype),
        Dense(256, 64, rng, dtype=dtype),
        Dense(64, n_classes, rng, dtype=dtype),
    ]


_BUILDERS = {"paper-cnn": _paper_cnn, "lenet-1d": _lenet_1d, "resnet-1d": _resnet_1d}


def build_backbone(name, n_classes, in_channels=1, seed=0, first_out_channels=None,
                   dtype=np.float64):
    """Plain CNN of the requested depth tier."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown backbone {name!r}; choose from {BACKBONES}")
    rng = derive_rng(seed, f"backbone-init.{name}")
    layers = _BUILDERS[name](rng, in_channels, n_classes, first_out_channels, dtype)
    return Model(layers, mode="backbone-only", backbone=name, n_classes=n_classes, dtype=dtype)


def assemble_model(
    mode,
    backbone="paper-cnn",
    n_classes=5,
    family=KernelFamily.STTF,
    n_channels=8,
    seed=0,
    kernel_grid: KernelGrid | None = None,
    eps_modulus=1e-12,
    dtype=np.float64,
    theta=None,
) -> Model:
    """Combine a backbone with a time-frequency front layer.

    Modes: ``backbone-only`` (unchanged backbone), ``tfn-add`` /
    ``wkn-add`` (front layer prepended), ``tfn-replace`` / ``wkn-replace``
    (first conv of the backbone swapped out, its batch norm kept), and
    ``random-tfn`` (prepended layer with raw trainable taps).  The wkn
    variants keep only the real kernel and skip the modulus.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    family = KernelFamily(family)
    if mode == "random-tfn":
        family = KernelFamily.RANDOM
    elif family is KernelFamily.RANDOM:
        raise ValueError("random kernels are only legal in mode 'random-tfn'")

    if mode == "backbone-only":
        return build_backbone(backbone, n_classes, in_channels=1, seed=seed, dtype=dtype)

    params = init_params(family, n_channels, seed=seed, grid=kernel_grid)
    if theta is not None:
        params = KernelParams(family, np.asarray(theta, dtype=np.float64), grid=params.grid)
    modulus = mode not in ("wkn-add", "wkn-replace")
    front = TFconvLayer(params, eps_modulus=eps_modulus, modulus=modulus)
    cfg = {
        "family": family.value,
        "n_channels": n_channels,
        "kernel_length": len(params.grid),
        "eps_modulus": eps_modulus,
        "modulus": modulus,
    }

    if mode in ("tfn-add", "wkn-add", "random-tfn"):
        body = build_backbone(backbone, n_classes, in_channels=n_channels, seed=seed, dtype=dtype)
        layers = [front] + body.layers
    else:  # *-replace: swap the backbone's first conv, keep its BN
        body = build_backbone(backbone, n_classes, in_channels=1, seed=seed,
                              first_out_channels=n_channels, dtype=dtype)
        layers = [front] + body.layers[1:]
    return Model(layers, mode=mode, backbone=backbone, n_classes=n_classes,
                 tfconv_config=cfg, dtype=dtype)
