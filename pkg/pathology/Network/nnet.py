"""
CompactResNet: a small residual CNN with hand-written backpropagation.

Layout mirrors a ResNet grouping (convolution stem, four residual blocks,
global pooling, fully connected head) so every group can be tapped for
representation analysis. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from pathology.exceptions import NetworkError

TAPS = ('stem', 'block1', 'block2', 'block3', 'block4', 'pool', 'fc')
INPUT_SHAPE = (1, 128, 98)
WIDTHS = (8, 16, 32, 64, 64)
BLOCK_STRIDES = (2, 2, 2, 1)


def he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2D:
    def __init__(self, name, in_channels, out_channels, kernel=3, stride=1, rng=None):
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self.pad = kernel // 2
        fan_in = in_channels * kernel * kernel
        self.params = {
            'weight': he_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in),
            'bias': np.zeros(out_channels),
        }
        self.grads = {key: np.zeros_like(value) for key, value in self.params.items()}
        self._cache = None

    def output_size(self, height, width):
        k, s, p = self.kernel, self.stride, self.pad
        return (height + 2 * p - k) // s + 1, (width + 2 * p - k) // s + 1

    def forward(self, x):
        batch, channels, height, width = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        out_h, out_w = self.output_size(height, width)
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :out_h, :out_w]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch, out_h, out_w, channels * k * k)
        weight = self.params['weight'].reshape(self.params['weight'].shape[0], -1)
        out = cols @ weight.T + self.params['bias']
        self._cache = (x.shape, cols)
        return out.transpose(0, 3, 1, 2)

    def backward(self, dout):
        (batch, channels, height, width), cols = self._cache
        k, s, p = self.kernel, self.stride, self.pad
        out_channels, out_h, out_w = dout.shape[1:]
        weight = self.params['weight'].reshape(out_channels, -1)

        d = dout.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        self.grads['weight'] = (d.T @ cols.reshape(-1, channels * k * k)).reshape(self.params['weight'].shape)
        self.grads['bias'] = d.sum(axis=0)

        dcols = (d @ weight).reshape(batch, out_h, out_w, channels, k, k)
        dpadded = np.zeros((batch, channels, height + 2 * p, width + 2 * p))
        for i in range(k):
            for j in range(k):
                dpadded[:, :, i:i + s * (out_h - 1) + 1:s, j:j + s * (out_w - 1) + 1:s] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dpadded[:, :, p:p + height, p:p + width]


class Activation:
    KINDS = ('relu', 'silu')

    def __init__(self, kind='relu'):
        if kind not in self.KINDS:
            raise NetworkError(f"unknown activation {kind!r}, expected one of {self.KINDS}")
        self.kind = kind
        self._cache = None

    def forward(self, x):
        if self.kind == 'relu':
            mask = x > 0
            self._cache = mask
            return x * mask
        sig = expit(x)
        self._cache = (x, sig)
        return x * sig

    def backward(self, dout):
        if self.kind == 'relu':
            return dout * self._cache
        x, sig = self._cache
        return dout * sig * (1.0 + x * (1.0 - sig))


class ResidualBlock:
    """conv3x3(stride) -> act -> conv3x3, plus identity or 1x1 projection shortcut, then act."""

    def __init__(self, name, in_channels, out_channels, stride, activation, rng):
        self.name = name
        self.conv1 = Conv2D(f"{name}.conv1", in_channels, out_channels, 3, stride, rng)
        self.act1 = Activation(activation)
        self.conv2 = Conv2D(f"{name}.conv2", out_channels, out_channels, 3, 1, rng)
        self.shortcut = None
        if in_channels != out_channels or stride != 1:
            self.shortcut = Conv2D(f"{name}.shortcut", in_channels, out_channels, 1, stride, rng)
        self.act_out = Activation(activation)

    def layers(self):
        return [self.conv1, self.conv2] + ([self.shortcut] if self.shortcut else [])

    def output_size(self, height, width):
        return self.conv1.output_size(height, width)

    def forward(self, x):
        h = self.conv2.forward(self.act1.forward(self.conv1.forward(x)))
        skip = self.shortcut.forward(x) if self.shortcut else x
        return self.act_out.forward(h + skip)

    def backward(self, dout):
        d = self.act_out.backward(dout)
        dx = self.conv1.backward(self.act1.backward(self.conv2.backward(d)))
        return dx + (self.shortcut.backward(d) if self.shortcut else d)


class GlobalAvgPool:
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        batch, channels, height, width = self._shape
        return np.broadcast_to(dout[:, :, None, None] / (height * width), self._shape).copy()


class Dense:
    def __init__(self, name, in_features, out_features, rng):
        self.name = name
        self.params = {
            'weight': he_uniform(rng, (out_features, in_features), in_features),
            'bias': np.zeros(out_features),
        }
        self.grads = {key: np.zeros_like(value) for key, value in self.params.items()}
        self._input = None

    def forward(self, x):
        self._input = x
        return x @ self.params['weight'].T + self.params['bias']

    def backward(self, dout):
        self.grads['weight'] = dout.T @ self._input
        self.grads['bias'] = dout.sum(axis=0)
        return dout @ self.params['weight']


class CompactResNet:
    def __init__(self, num_classes, input_shape=INPUT_SHAPE, widths=WIDTHS, activation='relu', seed=42):
        if num_classes < 1:
            raise NetworkError(f"need at least one output class, got {num_classes}")
        if len(widths) != 5:
            raise NetworkError(f"widths must list stem + four block channel counts, got {widths}")
        self.num_classes = int(num_classes)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.widths = tuple(int(w) for w in widths)
        self.activation = activation
        self.seed = int(seed)

        rng = np.random.default_rng(self.seed)
        self.stem = Conv2D('stem', self.input_shape[0], self.widths[0], 3, 2, rng)
        self.stem_act = Activation(activation)
        self.blocks = [
            ResidualBlock(f"block{i + 1}", self.widths[i], self.widths[i + 1], BLOCK_STRIDES[i], activation, rng)
            for i in range(4)
        ]
        self.pool = GlobalAvgPool()
        self.fc = Dense('fc', self.widths[-1], self.num_classes, rng)

    def architecture(self):
        return {
            'num_classes': self.num_classes,
            'input_shape': list(self.input_shape),
            'widths': list(self.widths),
            'activation': self.activation,
            'seed': self.seed,
        }

    def layers(self):
        layers = [self.stem]
        for block in self.blocks:
            layers.extend(block.layers())
        layers.append(self.fc)
        return layers

    def parameters(self):
        """Named parameter arrays; updating them in place updates the model."""
        return {f"{layer.name}.{key}": value for layer in self.layers() for key, value in layer.params.items()}

    def gradients(self):
        return {f"{layer.name}.{key}": value for layer in self.layers() for key, value in layer.grads.items()}

    def parameter_count(self):
        return int(sum(value.size for value in self.parameters().values()))

    def load_parameters(self, tensors):
        params = self.parameters()
        missing = set(params) - set(tensors)
        if missing:
            raise NetworkError(f"missing parameters: {sorted(missing)}")
        for name, value in params.items():
            source = np.asarray(tensors[name], dtype=np.float64)
            if source.shape != value.shape:
                raise NetworkError(f"parameter {name} has shape {source.shape}, expected {value.shape}")
            np.copyto(value, source)

    def tap_shapes(self):
        """Per-sample shape of every activation tap."""
        channels, height, width = self.input_shape
        height, width = self.stem.output_size(height, width)
        shapes = {'stem': (self.widths[0], height, width)}
        for i, block in enumerate(self.blocks):
            height, width = block.output_size(height, width)
            shapes[f"block{i + 1}"] = (self.widths[i + 1], height, width)
        shapes['pool'] = (self.widths[-1],)
        shapes['fc'] = (self.num_classes,)
        return shapes

    def forward(self, x, taps=False):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise NetworkError(f"expected batch of shape (B, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        recorded = {}
        h = self.stem_act.forward(self.stem.forward(x))
        recorded['stem'] = h
        for i, block in enumerate(self.blocks):
            h = block.forward(h)
            recorded[f"block{i + 1}"] = h
        pooled = self.pool.forward(h)
        logits = self.fc.forward(pooled)
        recorded['pool'] = pooled
        recorded['fc'] = logits
        return logits, (recorded if taps else {})

    def backward(self, dlogits):
        """Backpropagate d(loss)/d(logits) from the last forward pass; fills gradients()."""
        d = self.pool.backward(self.fc.backward(dlogits))
        for block in reversed(self.blocks):
            d = block.backward(d)
        return self.stem.backward(self.stem_act.backward(d))


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise NetworkError(f"labels must lie in 0..{num_classes - 1}")
    encoded = np.zeros((labels.shape[0], num_classes))
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded


def cross_entropy(probs, onehot):
    """Batch-mean categorical cross-entropy, log clamped at 1e-12."""
    return float(np.mean(-np.sum(onehot * np.log(np.maximum(probs, 1e-12)), axis=1)))


def cross_entropy_grad(probs, onehot):
    """Gradient of the batch-mean loss with respect to the logits."""
    return (probs - onehot) / probs.shape[0]


def loss_and_gradients(model, x, onehot):
    logits, _ = model.forward(x)
    probs = softmax(logits)
    loss = cross_entropy(probs, onehot)
    model.backward(cross_entropy_grad(probs, onehot))
    return loss, {name: grad.copy() for name, grad in model.gradients().items()}


def gradient_check(model, x, onehot, h=1e-5, floor=1e-5):
    """Largest relative error between backward() and central differences.

    Relative error is |a - n| / max(|a|, |n|, floor), so that gradients near
    zero are compared on an absolute scale.
    """
    _, analytic = loss_and_gradients(model, x, onehot)
    worst = 0.0
    for name, param in model.parameters().items():
        flat = param.reshape(-1)
        expected = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = cross_entropy(softmax(model.forward(x)[0]), onehot)
            flat[i] = original - h
            minus = cross_entropy(softmax(model.forward(x)[0]), onehot)
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            error = abs(expected[i] - numeric) / max(abs(expected[i]), abs(numeric), floor)
            worst = max(worst, error)
    return worst


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied to `params` in place."""
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name, grad in grads.items():
        m = state.m.setdefault(name, np.zeros_like(grad))
        v = state.v.setdefault(name, np.zeros_like(grad))
        if m.shape != grad.shape or params[name].shape != grad.shape:
            raise NetworkError(f"shape mismatch for {name}: {params[name].shape} vs {grad.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        params[name] -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
