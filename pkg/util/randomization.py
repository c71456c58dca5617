"""
File contains randomization utilities.
All randomness goes through explicitly seeded numpy generators.
"""
import numpy as np

# Restart seeds are offset by a large prime
RESTART_PRIME = 1_000_003

PHASES = ('A', 'B', 'C')


def rng_for(seed: int, restart: int = 0) -> np.random.Generator:
    """
    Creates a generator for a given seed and restart index.
    :param seed: base seed
    :param restart: restart index; 0 for the first attempt
    """
    return np.random.default_rng(seed + restart * RESTART_PRIME)


def uniform_between(rng: np.random.Generator, low: float, high: float) -> float:
    return float(rng.uniform(low, high)) if high > low else float(low)


def random_phases(rng: np.random.Generator) -> tuple:
    """
    A random non-empty subset of the three phases, in phase order.
    Single-phase subsets are drawn with probability 1/2.
    """
    size = int(rng.choice([1, 2, 3], p=[0.5, 0.25, 0.25]))
    chosen = rng.choice(len(PHASES), size=size, replace=False)
    return tuple(PHASES[i] for i in sorted(chosen))
