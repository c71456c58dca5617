"""
Adversarial training of a discriminator/generator pair on windows of normal-operation data.

Training alternates discriminator and generator Adam steps and checks an equilibrium surrogate on held-out
windows: at the optimum the discriminator cannot tell real from generated data and outputs 1/2 on both.
The check runs every check_every iterations once min_iterations have passed, and after the last iteration;
the first pass ends the attempt. If no check passes, training starts over from a fresh random initialization.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit

from nn.adam import AdamState, adam_step
from nn.losses import LossSpec, backward, discriminator_pass
from nn.network import NetworkParams, build_discriminator, build_generator, discriminator_scores, generator_outputs
from phasor.data import DEFAULT_STRIDE, DEFAULT_WINDOW, FeatureSet, Normalizer, fit_normalizer, window_array
from util.errors import ConfigError, DataError, NonConvergenceError, NonFiniteError
from util.randomization import rng_for

logger = logging.getLogger(__name__)

DIAGNOSTICS_COLUMNS = ['iter', 'd_loss', 'g_loss', 'value_fn', 'm_real', 'm_fake']
EQUILIBRIUM_SAMPLE_CAP = 2048


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise z ~ N(mu, sigma^2), one noise_dim vector per time step"""
    mu: float = 0.0
    sigma: float = 1.0
    noise_dim: int = 8

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError('train.noise_sigma must be positive, got {0}'.format(self.sigma))
        if self.noise_dim < 1:
            raise ConfigError('train.noise_dim must be at least 1')


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    """N: windows per training batch"""
    iterations: int = 2000
    d_steps_per_iter: int = 1
    g_steps_per_iter: int = 1
    seed: int = 11
    noise: NoiseSpec = NoiseSpec()
    equilibrium_eps: float = 0.15
    max_restarts: int = 3
    non_saturating_g_loss: bool = False
    lr_d: float = 2e-4
    """kept below lr_g so the discriminator does not saturate early"""
    lr_g: float = 1e-3
    d_hidden: tuple = (32, 16)
    g_hidden: tuple = (32, 32)
    holdout_fraction: float = 0.1
    trace_every: int = 10
    check_every: int = 100
    """iterations between equilibrium checks during training; 0 checks only after the last iteration"""
    min_iterations: int = 300

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError('train.batch_size must be at least 1')
        if self.iterations < 1:
            raise ConfigError('train.iterations must be at least 1')
        if self.d_steps_per_iter < 0 or self.g_steps_per_iter < 0:
            raise ConfigError('Step counts per iteration must be non-negative')
        if not 0 < self.equilibrium_eps < 0.5:
            raise ConfigError('train.equilibrium_eps must lie in (0, 0.5), got {0}'.format(self.equilibrium_eps))
        if self.max_restarts < 0:
            raise ConfigError('train.max_restarts must be non-negative')
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError('train.holdout_fraction must lie in (0, 1)')
        if not self.d_hidden or not self.g_hidden or min(self.d_hidden + self.g_hidden) < 1:
            raise ConfigError('Hidden layer sizes must be positive')
        if self.trace_every < 1:
            raise ConfigError('train.trace_every must be at least 1')
        if self.check_every < 0 or self.min_iterations < 0:
            raise ConfigError('train.check_every and train.min_iterations must be non-negative')


@dataclass(frozen=True)
class EquilibriumResult:
    passed: bool
    m_real: float
    """Mean D over held-out real windows"""
    m_fake: float
    """Mean D over freshly generated windows"""

    @property
    def deviation(self) -> float:
        """Largest distance of either mean from 1/2"""
        return max(abs(self.m_real - 0.5), abs(self.m_fake - 0.5))


@dataclass
class TrainingDiagnostics:
    trace: list = field(default_factory=list)
    """Rows of DIAGNOSTICS_COLUMNS for the final attempt"""
    restarts: int = 0
    converged: bool = False
    equilibrium: EquilibriumResult = None
    non_saturating: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace, columns=DIAGNOSTICS_COLUMNS)


@dataclass(eq=False)
class TrainedGan:
    """
    A trained pair. The discriminator is the scoring function; the generator is kept for diagnostics.
    """
    discriminator: NetworkParams
    generator: NetworkParams
    normalizer: Normalizer
    feature_set: FeatureSet
    window: int = DEFAULT_WINDOW
    diagnostics: TrainingDiagnostics = field(default_factory=TrainingDiagnostics)

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged


def sample_noise(spec: NoiseSpec, batch: int, window: int, rng: np.random.Generator) -> np.ndarray:
    """
    :return: (batch, window, noise_dim) i.i.d. Gaussian draws
    """
    return rng.normal(spec.mu, spec.sigma, (batch, window, spec.noise_dim))


def prepare_training_blocks(features: np.ndarray, feature_set: FeatureSet, size: int = DEFAULT_WINDOW,
                            stride: int = DEFAULT_STRIDE):
    """
    Projects a (n, 12) training feature matrix to a feature set, fits the normalizer on it and windows it.
    :return: (normalizer, normalized blocks of shape (B, size, F))
    """
    projected = feature_set.project(features)
    normalizer = fit_normalizer(projected)
    _, blocks = window_array(normalizer.normalize(projected), size, stride)
    return normalizer, blocks


def split_holdout(blocks: np.ndarray, fraction: float):
    """
    Splits off the last `fraction` of the windows for the equilibrium check. One window at the boundary is
    dropped so overlapping windows never share samples across the split.
    """
    n = len(blocks)
    n_held = max(int(round(n * fraction)), 1)
    n_train = n - n_held - 1
    if n_train < 1:
        raise DataError('Need at least 3 training windows, got {0}'.format(n))
    return blocks[:n_train], blocks[n - n_held:]


def check_equilibrium(discriminator: NetworkParams, held_out_blocks: np.ndarray, generator: NetworkParams,
                      cfg: TrainConfig, rng: np.random.Generator = None) -> EquilibriumResult:
    """
    Equilibrium surrogate: both the mean score on held-out real windows and on generated windows must lie
    within equilibrium_eps of 1/2.
    """
    if len(held_out_blocks) == 0:
        raise DataError('Equilibrium check needs held-out windows')
    rng = rng if rng is not None else rng_for(cfg.seed)
    m_real = float(np.mean(discriminator_scores(discriminator, held_out_blocks[:EQUILIBRIUM_SAMPLE_CAP])))
    count = min(max(len(held_out_blocks), cfg.batch_size), EQUILIBRIUM_SAMPLE_CAP)
    window = held_out_blocks.shape[1]
    fakes = np.concatenate([generator_outputs(generator, sample_noise(cfg.noise, min(512, count - k), window, rng))[0]
                            for k in range(0, count, 512)])
    m_fake = float(np.mean(discriminator_scores(discriminator, fakes)))
    passed = abs(m_real - 0.5) <= cfg.equilibrium_eps and abs(m_fake - 0.5) <= cfg.equilibrium_eps
    return EquilibriumResult(passed, m_real, m_fake)


def _check_due(iteration: int, cfg: TrainConfig) -> bool:
    if iteration == cfg.iterations:
        return True
    return cfg.check_every > 0 and iteration >= cfg.min_iterations and iteration % cfg.check_every == 0


def _train_once(train_blocks: np.ndarray, held_out: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """
    One attempt from a fresh initialization. Stops at the first due equilibrium check that passes, or after
    cfg.iterations.

    Trace rows carry the last discriminator and generator losses of their iteration and the mean scores the
    last discriminator step saw before its update; a loss with no step in the iteration is NaN.
    :return: (discriminator, generator, trace rows, equilibrium result of the last check)
    """
    window, features = train_blocks.shape[1], train_blocks.shape[2]
    discriminator = build_discriminator(features, cfg.d_hidden, rng)
    generator = build_generator(cfg.noise.noise_dim, cfg.g_hidden, features, rng)
    adam_d = AdamState(lr=cfg.lr_d)
    adam_g = AdamState(lr=cfg.lr_g)
    g_spec = LossSpec.G_LOSS_NON_SATURATING if cfg.non_saturating_g_loss else LossSpec.G_LOSS
    d_params = discriminator.named_arrays()
    g_params = generator.named_arrays()
    trace = []
    for iteration in range(1, cfg.iterations + 1):
        d_value = g_value = m_real = m_fake = float('nan')
        for _ in range(cfg.d_steps_per_iter):
            real = train_blocks[rng.integers(0, len(train_blocks), cfg.batch_size)]
            noise = sample_noise(cfg.noise, cfg.batch_size, window, rng)
            d_value, grads, real_logits, fake_logits = discriminator_pass(discriminator, generator, real, noise)
            m_real, m_fake = float(np.mean(expit(real_logits))), float(np.mean(expit(fake_logits)))
            adam_step(adam_d, d_params, grads)
            if not discriminator.all_finite():
                raise NonFiniteError('discriminator parameters')
        for _ in range(cfg.g_steps_per_iter):
            noise = sample_noise(cfg.noise, cfg.batch_size, window, rng)
            g_value, grads = backward(g_spec, discriminator, generator, None, noise)
            adam_step(adam_g, g_params, grads)
            if not generator.all_finite():
                raise NonFiniteError('generator parameters')
        check_due = _check_due(iteration, cfg)
        if iteration % cfg.trace_every == 0 or check_due:
            row = [iteration, d_value, g_value, -d_value, m_real, m_fake]
            trace.append(row)
            logger.debug('iter {0}: d_loss={1:.4f} g_loss={2:.4f} m_real={4:.3f} m_fake={5:.3f}'.format(*row))
        if check_due:
            equilibrium = check_equilibrium(discriminator, held_out, generator, cfg, rng)
            if equilibrium.passed or iteration == cfg.iterations:
                if iteration < cfg.iterations:
                    logger.debug('Equilibrium reached at iteration {0}'.format(iteration))
                return discriminator, generator, trace, equilibrium


def train_gan(blocks: np.ndarray, cfg: TrainConfig, normalizer: Normalizer, feature_set: FeatureSet) -> TrainedGan:
    """
    Trains a GAN on normalized windows, restarting from new random initial points while the equilibrium
    check fails, at most cfg.max_restarts times.

    :param blocks: (B, W, F) normalized windows of (mostly) normal operation
    :param normalizer: the normalizer the windows were produced with, stored with the model
    :param feature_set: feature set of the windows
    :return: the last attempt's model; diagnostics.converged tells whether it passed
    """
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim != 3 or len(blocks) == 0:
        raise DataError('No training windows')
    if blocks.shape[2] != feature_set.width:
        raise DataError('Windows have {0} features, feature set {1} needs {2}'
                        .format(blocks.shape[2], feature_set.name, feature_set.width))
    train_blocks, held_out = split_holdout(blocks, cfg.holdout_fraction)
    logger.info('>> Training {0} GAN on {1} windows ({2} held out)'.format(feature_set.name, len(train_blocks), len(held_out)))
    result = None
    for attempt in range(cfg.max_restarts + 1):
        rng = rng_for(cfg.seed, attempt)
        diagnostics = TrainingDiagnostics(restarts=attempt, non_saturating=cfg.non_saturating_g_loss)
        try:
            discriminator, generator, diagnostics.trace, eq = _train_once(train_blocks, held_out, cfg, rng)
        except NonFiniteError as e:
            logger.warning('Attempt {0} of {1} diverged ({2}); restarting'.format(attempt + 1, cfg.max_restarts + 1, e))
            continue
        diagnostics.equilibrium = eq
        diagnostics.converged = eq.passed
        result = TrainedGan(discriminator, generator, normalizer, feature_set, blocks.shape[1], diagnostics)
        if eq.passed:
            logger.info('<< {0} GAN reached equilibrium (m_real={1:.3f}, m_fake={2:.3f}) after {3} restart(s)'
                        .format(feature_set.name, eq.m_real, eq.m_fake, attempt))
            return result
        logger.warning('Equilibrium check failed (m_real={0:.3f}, m_fake={1:.3f}), attempt {2} of {3}'
                       .format(eq.m_real, eq.m_fake, attempt + 1, cfg.max_restarts + 1))
    if result is None:
        raise NonConvergenceError('Every training attempt diverged')
    logger.warning('<< {0} GAN did not converge after {1} restart(s)'.format(feature_set.name, cfg.max_restarts))
    return result


def write_diagnostics_csv(diagnostics: TrainingDiagnostics, path_or_buf) -> None:
    """Loss and score traces of the final attempt, one row per traced iteration"""
    diagnostics.to_frame().to_csv(path_or_buf, index=False, float_format='%.17g', lineterminator='\n')
