"""
Adam optimizer with bias correction, keyed by parameter name.
"""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    """Steps taken so far"""
    m: dict = field(default_factory=dict)
    """First-moment accumulators"""
    v: dict = field(default_factory=dict)
    """Second-moment accumulators"""


def adam_step(state: AdamState, params: dict, grads: dict):
    """
    Updates the parameter arrays in place.
    :param params: name -> live parameter array
    :param grads: name -> gradient of the same shape
    :return: (params, state)
    """
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
