"""
The adversarial objectives evaluated on batches of windows.

The discriminator maximizes log D(x) + log(1 - D(G(z))); d_loss is the negation it minimizes.
value_function is the empirical min-max value V(G, D).
"""
import numpy as np
from scipy.special import log_expit

from nn.losses import d_loss_terms, g_loss_terms
from nn.network import NetworkParams, discriminator_logits, generator_outputs


def d_loss(discriminator: NetworkParams, real_blocks: np.ndarray, fake_blocks: np.ndarray) -> float:
    """
    -(1/N) sum [log D(x_i) + log(1 - D(G(z_i)))]
    :param real_blocks: (N, W, F) normalized real windows
    :param fake_blocks: (N, W, F) generated windows
    """
    real_logits, _ = discriminator_logits(discriminator, real_blocks)
    fake_logits, _ = discriminator_logits(discriminator, fake_blocks)
    return d_loss_terms(real_logits, fake_logits)[0]


def g_loss(discriminator: NetworkParams, fake_blocks: np.ndarray, non_saturating: bool = False) -> float:
    """
    (1/N) sum log(1 - D(G(z_i))), or (1/N) sum -log D(G(z_i)) with non_saturating.
    """
    fake_logits, _ = discriminator_logits(discriminator, fake_blocks)
    return g_loss_terms(fake_logits, non_saturating)[0]


def value_function(discriminator: NetworkParams, generator: NetworkParams, real_blocks: np.ndarray,
                   noise_batch: np.ndarray) -> float:
    """
    Batch estimate of V(G, D) = E[log D(x)] + E[log(1 - D(G(z)))].
    Equals -d_loss on the same batches.
    """
    fake, _ = generator_outputs(generator, noise_batch)
    real_logits, _ = discriminator_logits(discriminator, real_blocks)
    fake_logits, _ = discriminator_logits(discriminator, fake)
    return float(np.mean(log_expit(real_logits)) + np.mean(log_expit(-fake_logits)))
