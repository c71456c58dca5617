"""
Exceptions raised by the toolkit.
The command line maps each family to its own exit code (see pmu_gan.py).
"""


class PmuGanError(Exception):
    """Base class of all toolkit errors"""


class ConfigError(PmuGanError, ValueError):
    """Invalid or unknown configuration value"""


class DataError(PmuGanError, ValueError):
    """Input data violating a schema or an invariant"""


class NonFiniteError(DataError):
    """
    A loss or parameter became NaN or infinite.
    The message names the offending term.
    """

    def __init__(self, term: str) -> None:
        super().__init__('Non-finite value in {0}'.format(term))
        self.term = term


class NonConvergenceError(PmuGanError):
    """GAN training did not pass the equilibrium check within the allowed restarts"""
