"""
LSTM layer: parameters, forward recurrence and backpropagation through time.

Gate pre-activations are held in one (batch, 4*hidden) array laid out as [input, forget, output, candidate].
Sequences are batched as (batch, W, dim); a single (W, dim) sequence is accepted by lstm_forward.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from util.errors import DataError

GATES = ('input', 'forget', 'output', 'candidate')


@dataclass(eq=False)
class LstmLayerParams:
    """
    Input weights w_x (input_dim, 4H), recurrent weights w_h (H, 4H) and bias b (4H,).
    Arrays are updated in place by the optimizer.
    """
    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4 = self.b.shape[0]
        if h4 % 4 or self.w_x.shape[1] != h4 or self.w_h.shape != (h4 // 4, h4):
            raise DataError('Inconsistent LSTM parameter shapes: w_x {0}, w_h {1}, b {2}'
                            .format(self.w_x.shape, self.w_h.shape, self.b.shape))

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> 'LstmLayerParams':
        return cls(np.zeros((input_dim, 4 * hidden_dim)), np.zeros((hidden_dim, 4 * hidden_dim)), np.zeros(4 * hidden_dim))

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> 'LstmLayerParams':
        """
        Uniform weights in [-k, k] with k = 1/sqrt(input_dim + hidden_dim); forget-gate bias +1.
        """
        k = 1.0 / np.sqrt(input_dim + hidden_dim)
        params = cls(rng.uniform(-k, k, (input_dim, 4 * hidden_dim)),
                     rng.uniform(-k, k, (hidden_dim, 4 * hidden_dim)),
                     np.zeros(4 * hidden_dim))
        params.b[hidden_dim:2 * hidden_dim] = 1.0
        return params

    def arrays(self) -> dict:
        return {'w_x': self.w_x, 'w_h': self.w_h, 'b': self.b}

    def gate(self, name: str) -> slice:
        """Column slice of one gate inside the stacked weights"""
        h = self.hidden_dim
        k = GATES.index(name)
        return slice(k * h, (k + 1) * h)


@dataclass
class LstmCache:
    x: np.ndarray
    h: np.ndarray
    """(B, W+1, H): h[:, 0] is h0"""
    c: np.ndarray
    """(B, W+1, H): c[:, 0] is c0"""
    gates: np.ndarray
    """(B, W, 4H) post-activation gate values"""


def _as_batch(x_seq: np.ndarray):
    x_seq = np.asarray(x_seq, dtype=float)
    if x_seq.ndim == 2:
        return x_seq[None], True
    if x_seq.ndim != 3:
        raise DataError('Sequence must be (W, dim) or (batch, W, dim), got shape {0}'.format(x_seq.shape))
    return x_seq, False


def lstm_forward_cached(params: LstmLayerParams, x: np.ndarray, h0: np.ndarray = None, c0: np.ndarray = None):
    """
    Runs the recurrence over a batch of sequences and keeps what the backward pass needs.
    :param x: (B, W, input_dim)
    :return: (h_seq of shape (B, W, H), cache)
    """
    batch, steps, dim = x.shape
    if dim != params.input_dim:
        raise DataError('LSTM expects input dim {0}, got {1}'.format(params.input_dim, dim))
    hd = params.hidden_dim
    h = np.zeros((batch, steps + 1, hd))
    c = np.zeros((batch, steps + 1, hd))
    if h0 is not None:
        h[:, 0] = h0
    if c0 is not None:
        c[:, 0] = c0
    gates = np.empty((batch, steps, 4 * hd))
    # Input projections for all steps at once; only the recurrent part is sequential.
    x_proj = x @ params.w_x + params.b
    for t in range(steps):
        z = x_proj[:, t] + h[:, t] @ params.w_h
        g = gates[:, t]
        g[:, :3 * hd] = expit(z[:, :3 * hd])
        g[:, 3 * hd:] = np.tanh(z[:, 3 * hd:])
        c[:, t + 1] = g[:, hd:2 * hd] * c[:, t] + g[:, :hd] * g[:, 3 * hd:]
        h[:, t + 1] = g[:, 2 * hd:3 * hd] * np.tanh(c[:, t + 1])
    return h[:, 1:], LstmCache(x, h, c, gates)


def lstm_forward(params: LstmLayerParams, x_seq: np.ndarray, h0: np.ndarray = None, c0: np.ndarray = None):
    """
    Standard LSTM recurrence: i, f, o = sigmoid(.), g = tanh(.), c_t = f*c_{t-1} + i*g, h_t = o*tanh(c_t).

    :param x_seq: (W, input_dim) or (B, W, input_dim)
    :param h0: initial hidden state (zeros by default)
    :param c0: initial cell state (zeros by default)
    :return: (h_seq, h_T, c_T), without the batch axis when a single sequence was given
    """
    x, single = _as_batch(x_seq)
    for name, state in (('h0', h0), ('c0', c0)):
        if state is not None and np.shape(state)[-1] != params.hidden_dim:
            raise DataError('{0} must have {1} entries'.format(name, params.hidden_dim))
    h_seq, cache = lstm_forward_cached(params, x, h0, c0)
    h_t, c_t = cache.h[:, -1], cache.c[:, -1]
    if single:
        return h_seq[0], h_t[0], c_t[0]
    return h_seq, h_t, c_t


def lstm_backward(params: LstmLayerParams, cache: LstmCache, dh_seq: np.ndarray):
    """
    Backpropagation through time.
    :param dh_seq: (B, W, H) loss gradient w.r.t. every emitted hidden state
    :return: (dx of shape (B, W, input_dim), gradients dict keyed like params.arrays())
    """
    batch, steps, _ = cache.x.shape
    hd = params.hidden_dim
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
    dz = np.empty((batch, steps, 4 * hd))
    dh_next = np.zeros((batch, hd))
    dc_next = np.zeros((batch, hd))
    for t in reversed(range(steps)):
        g = cache.gates[:, t]
        i, f, o, cand = g[:, :hd], g[:, hd:2 * hd], g[:, 2 * hd:3 * hd], g[:, 3 * hd:]
        tanh_c = np.tanh(cache.c[:, t + 1])
        dh = dh_seq[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        d = dz[:, t]
        d[:, :hd] = dc * cand * i * (1.0 - i)
        d[:, hd:2 * hd] = dc * cache.c[:, t] * f * (1.0 - f)
        d[:, 2 * hd:3 * hd] = dh * tanh_c * o * (1.0 - o)
        d[:, 3 * hd:] = dc * i * (1.0 - cand * cand)
        dc_next = dc * f
        dh_next = d @ params.w_h.T
    grads['w_x'] = np.einsum('bti,btj->ij', cache.x, dz)
    grads['w_h'] = np.einsum('bti,btj->ij', cache.h[:, :-1], dz)
    grads['b'] = dz.sum(axis=(0, 1))
    dx = dz @ params.w_x.T
    return dx, grads
