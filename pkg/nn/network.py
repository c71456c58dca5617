"""
Stacked LSTM networks with a dense head: the discriminator and the generator.

The discriminator runs its LSTM stack over a window and applies a dense layer to the final hidden state,
giving one logit per window (sigmoid of it is the score). The generator runs its stack over a noise sequence
and applies the dense layer plus tanh at every step, giving a full synthetic window.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from nn.lstm import LstmLayerParams, lstm_backward, lstm_forward_cached
from util.errors import DataError


class Activation(Enum):
    SIGMOID = 'sigmoid'
    """Discriminator head"""
    TANH = 'tanh'
    """Generator head"""


@dataclass(eq=False)
class DenseParams:
    w: np.ndarray
    """(out_dim, in_dim)"""
    b: np.ndarray
    """(out_dim,)"""

    def __post_init__(self):
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise DataError('Inconsistent dense parameter shapes: w {0}, b {1}'.format(self.w.shape, self.b.shape))

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> 'DenseParams':
        k = 1.0 / np.sqrt(in_dim)
        return cls(rng.uniform(-k, k, (out_dim, in_dim)), rng.uniform(-k, k, out_dim))

    def arrays(self) -> dict:
        return {'w': self.w, 'b': self.b}


@dataclass(eq=False)
class NetworkParams:
    """
    Ordered LSTM layers followed by one dense head.
    """
    layers: list
    head: DenseParams
    output_activation: Activation

    def __post_init__(self):
        if not self.layers:
            raise DataError('A network needs at least one LSTM layer')
        for lower, upper in zip(self.layers, self.layers[1:]):
            if upper.input_dim != lower.hidden_dim:
                raise DataError('LSTM layer dims do not chain: {0} -> {1}'.format(lower.hidden_dim, upper.input_dim))
        if self.head.in_dim != self.layers[-1].hidden_dim:
            raise DataError('Dense head expects {0} inputs, top LSTM layer has {1}'
                            .format(self.head.in_dim, self.layers[-1].hidden_dim))
        if self.output_activation is Activation.SIGMOID and self.head.out_dim != 1:
            raise DataError('A discriminator head has exactly one output')

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.head.out_dim

    @property
    def hidden_dims(self) -> tuple:
        return tuple(layer.hidden_dim for layer in self.layers)

    def named_arrays(self) -> dict:
        """
        All parameter arrays keyed 'lstm<k>.<name>' / 'head.<name>'. The arrays are live: updating them
        in place updates the network.
        """
        arrays = {}
        for k, layer in enumerate(self.layers):
            for name, arr in layer.arrays().items():
                arrays['lstm{0}.{1}'.format(k, name)] = arr
        for name, arr in self.head.arrays().items():
            arrays['head.' + name] = arr
        return arrays

    def parameter_count(self) -> int:
        return sum(arr.size for arr in self.named_arrays().values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(arr)) for arr in self.named_arrays().values())


def _build(input_dim: int, hidden: tuple, output_dim: int, activation: Activation, rng: np.random.Generator):
    layers = []
    dim = input_dim
    for h in hidden:
        layers.append(LstmLayerParams.initialize(dim, h, rng))
        dim = h
    return NetworkParams(layers, DenseParams.initialize(dim, output_dim, rng), activation)


def build_discriminator(feature_count: int, hidden: tuple, rng: np.random.Generator) -> NetworkParams:
    return _build(feature_count, hidden, 1, Activation.SIGMOID, rng)


def build_generator(noise_dim: int, hidden: tuple, feature_count: int, rng: np.random.Generator) -> NetworkParams:
    return _build(noise_dim, hidden, feature_count, Activation.TANH, rng)


@dataclass
class ForwardCache:
    """Activations recorded by a batched forward pass"""
    layer_caches: list = field(default_factory=list)
    top: np.ndarray = None
    """Top-layer hidden states (B, W, H)"""
    output: np.ndarray = None
    """Discriminator logits (B,) or generator outputs (B, W, F)"""


def _check_input(net: NetworkParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != net.input_dim:
        raise DataError('Network expects (batch, W, {0}) input, got shape {1}'.format(net.input_dim, x.shape))
    return x


def _run_stack(net: NetworkParams, x: np.ndarray, cache: ForwardCache) -> np.ndarray:
    h = x
    for layer in net.layers:
        h, layer_cache = lstm_forward_cached(layer, h)
        cache.layer_caches.append(layer_cache)
    cache.top = h
    return h


def discriminator_logits(net: NetworkParams, blocks: np.ndarray):
    """
    Batched discriminator pass.
    :param blocks: (B, W, F) normalized windows
    :return: (logits of shape (B,), cache)
    """
    if net.output_activation is not Activation.SIGMOID:
        raise DataError('Not a discriminator network')
    blocks = _check_input(net, blocks)
    if not np.all(np.isfinite(blocks)):
        raise DataError('Discriminator input contains non-finite values')
    cache = ForwardCache()
    top = _run_stack(net, blocks, cache)
    cache.output = top[:, -1] @ net.head.w[0] + net.head.b[0]
    return cache.output, cache


def discriminator_forward(net: NetworkParams, block: np.ndarray) -> float:
    """
    Scores one (W, F) window: sigmoid of the dense head applied to the final hidden state.
    :return: score in (0, 1)
    """
    logits, _ = discriminator_logits(net, np.asarray(block, dtype=float)[None])
    return float(expit(logits[0]))


def discriminator_scores(net: NetworkParams, blocks: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """
    Scores many windows, chunked to bound memory.
    :param blocks: (B, W, F)
    :return: (B,) scores in (0, 1)
    """
    blocks = np.asarray(blocks, dtype=float)
    if len(blocks) == 0:
        return np.empty(0)
    parts = [discriminator_logits(net, blocks[k:k + chunk])[0] for k in range(0, len(blocks), chunk)]
    return expit(np.concatenate(parts))


def generator_outputs(net: NetworkParams, z: np.ndarray):
    """
    Batched generator pass.
    :param z: (B, W, noise_dim)
    :return: (outputs of shape (B, W, F) in (-1, 1), cache)
    """
    if net.output_activation is not Activation.TANH:
        raise DataError('Not a generator network')
    z = _check_input(net, z)
    cache = ForwardCache()
    top = _run_stack(net, z, cache)
    cache.output = np.tanh(top @ net.head.w.T + net.head.b)
    return cache.output, cache


def generator_forward(net: NetworkParams, z_seq: np.ndarray) -> np.ndarray:
    """
    Turns one (W, noise_dim) noise sequence into a synthetic normalized (W, F) window.
    """
    out, _ = generator_outputs(net, np.asarray(z_seq, dtype=float)[None])
    return out[0]


def _backprop_stack(net: NetworkParams, cache: ForwardCache, d_top: np.ndarray, grads: dict) -> np.ndarray:
    d = d_top
    for k in reversed(range(len(net.layers))):
        d, layer_grads = lstm_backward(net.layers[k], cache.layer_caches[k], d)
        for name, g in layer_grads.items():
            grads['lstm{0}.{1}'.format(k, name)] = g
    return d


def discriminator_backward(net: NetworkParams, cache: ForwardCache, d_logits: np.ndarray):
    """
    :param d_logits: (B,) loss gradient w.r.t. each logit
    :return: (gradients keyed like named_arrays(), gradient w.r.t. the input blocks (B, W, F))
    """
    top = cache.top
    grads = {'head.w': (d_logits @ top[:, -1])[None, :], 'head.b': np.array([d_logits.sum()])}
    d_top = np.zeros_like(top)
    d_top[:, -1] = d_logits[:, None] * net.head.w[0][None, :]
    d_input = _backprop_stack(net, cache, d_top, grads)
    return grads, d_input


def generator_backward(net: NetworkParams, cache: ForwardCache, d_outputs: np.ndarray) -> dict:
    """
    :param d_outputs: (B, W, F) loss gradient w.r.t. the generated windows
    :return: gradients keyed like named_arrays()
    """
    y = cache.output
    du = d_outputs * (1.0 - y * y)
    grads = {'head.w': np.einsum('btf,bth->fh', du, cache.top), 'head.b': du.sum(axis=(0, 1))}
    _backprop_stack(net, cache, du @ net.head.w, grads)
    return grads
