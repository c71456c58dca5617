"""
Adversarial losses and their exact gradients.

Losses are computed from discriminator logits a, with log D = log_sigmoid(a) and
log(1 - D) = log_sigmoid(-a), so neither ever evaluates log(0).
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, log_expit

from nn.network import (NetworkParams, discriminator_backward, discriminator_logits, generator_backward,
                        generator_outputs)
from util.errors import NonFiniteError


class LossSpec(Enum):
    D_LOSS = 'd_loss'
    """-(1/N) sum[log D(x) + log(1 - D(G(z)))], minimized over the discriminator"""
    G_LOSS = 'g_loss'
    """(1/N) sum log(1 - D(G(z))), minimized over the generator"""
    G_LOSS_NON_SATURATING = 'g_loss_non_saturating'
    """(1/N) sum -log D(G(z))"""

    @property
    def trains_discriminator(self) -> bool:
        return self is LossSpec.D_LOSS


def _finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise NonFiniteError(term)
    return float(value)


def d_loss_terms(real_logits: np.ndarray, fake_logits: np.ndarray):
    """
    :return: (loss, gradient w.r.t. real logits, gradient w.r.t. fake logits)
    """
    n_real, n_fake = len(real_logits), len(fake_logits)
    real_term = _finite(np.mean(log_expit(real_logits)), 'log D(x)')
    fake_term = _finite(np.mean(log_expit(-fake_logits)), 'log(1 - D(G(z)))')
    d_real = -expit(-real_logits) / n_real
    d_fake = expit(fake_logits) / n_fake
    return -(real_term + fake_term), d_real, d_fake


def g_loss_terms(fake_logits: np.ndarray, non_saturating: bool = False):
    """
    :return: (loss, gradient w.r.t. fake logits)
    """
    n = len(fake_logits)
    if non_saturating:
        loss = -_finite(np.mean(log_expit(fake_logits)), 'log D(G(z))')
        return loss, -expit(-fake_logits) / n
    loss = _finite(np.mean(log_expit(-fake_logits)), 'log(1 - D(G(z)))')
    return loss, -expit(fake_logits) / n


def evaluate(loss_spec: LossSpec, discriminator: NetworkParams, generator: NetworkParams,
             real_blocks: np.ndarray, noise: np.ndarray) -> float:
    """Loss value only (no backward pass)"""
    fake, _ = generator_outputs(generator, noise)
    fake_logits, _ = discriminator_logits(discriminator, fake)
    if loss_spec.trains_discriminator:
        real_logits, _ = discriminator_logits(discriminator, real_blocks)
        return d_loss_terms(real_logits, fake_logits)[0]
    return g_loss_terms(fake_logits, loss_spec is LossSpec.G_LOSS_NON_SATURATING)[0]


def discriminator_pass(discriminator: NetworkParams, generator: NetworkParams, real_blocks: np.ndarray,
                       noise: np.ndarray):
    """
    d_loss and its discriminator gradients, plus the logits the loss was computed from.
    :return: (loss, gradients, real logits, fake logits)
    """
    fake, _ = generator_outputs(generator, noise)
    n_real = len(real_blocks)
    logits, d_cache = discriminator_logits(discriminator, np.concatenate([real_blocks, fake]))
    loss, d_real, d_fake = d_loss_terms(logits[:n_real], logits[n_real:])
    grads, _ = discriminator_backward(discriminator, d_cache, np.concatenate([d_real, d_fake]))
    return loss, grads, logits[:n_real], logits[n_real:]


def backward(loss_spec: LossSpec, discriminator: NetworkParams, generator: NetworkParams,
             real_blocks: np.ndarray, noise: np.ndarray):
    """
    Forward pass plus backpropagation for one adversarial loss.

    D_LOSS differentiates w.r.t. the discriminator (generated windows are held fixed); the generator losses
    differentiate w.r.t. the generator through the generator -> discriminator composition.

    :param real_blocks: (N, W, F) normalized real windows (unused by the generator losses)
    :param noise: (N, W, noise_dim)
    :return: (loss, gradients keyed like the differentiated network's named_arrays())
    """
    if loss_spec.trains_discriminator:
        loss, grads, _, _ = discriminator_pass(discriminator, generator, real_blocks, noise)
        return loss, grads
    fake, g_cache = generator_outputs(generator, noise)
    logits, d_cache = discriminator_logits(discriminator, fake)
    loss, d_fake = g_loss_terms(logits, loss_spec is LossSpec.G_LOSS_NON_SATURATING)
    _, d_fake_blocks = discriminator_backward(discriminator, d_cache, d_fake)
    return loss, generator_backward(generator, g_cache, d_fake_blocks)


@dataclass(eq=False)
class AdversarialObjective:
    """
    One loss bound to fixed networks and inputs; what the gradient checker perturbs.
    """
    loss_spec: LossSpec
    discriminator: NetworkParams
    generator: NetworkParams
    real_blocks: np.ndarray
    noise: np.ndarray

    def parameters(self) -> dict:
        """Live arrays of the network this loss trains"""
        target = self.discriminator if self.loss_spec.trains_discriminator else self.generator
        return target.named_arrays()

    def loss(self) -> float:
        return evaluate(self.loss_spec, self.discriminator, self.generator, self.real_blocks, self.noise)

    def loss_and_gradients(self):
        return backward(self.loss_spec, self.discriminator, self.generator, self.real_blocks, self.noise)

    def gradients(self) -> dict:
        return self.loss_and_gradients()[1]
