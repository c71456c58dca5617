"""
Finite-difference gradient checker.
"""
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DENOMINATOR_FLOOR = 1e-5


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    parameter: str
    """Parameter (name and index) with the largest error"""
    checked: int
    passed: bool


def relative_error(analytic: float, numeric: float, floor: float = DENOMINATOR_FLOOR) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps vanishing gradients from dominating"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(objective, tol: float = 1e-4, step: float = DEFAULT_STEP) -> GradCheckReport:
    """
    Compares analytic gradients with central differences, parameter by parameter.
    Meant for small networks only (two loss evaluations per parameter).

    :param objective: object with parameters() (name -> live array), loss() and gradients()
    :param tol: largest accepted relative error; failing it is reported, not raised
    :return: report with the worst parameter
    """
    analytic = objective.gradients()
    worst = 0.0
    worst_name = ''
    checked = 0
    for name, arr in objective.parameters().items():
        grad = analytic[name]
        for idx in np.ndindex(arr.shape):
            original = arr[idx]
            arr[idx] = original + step
            plus = objective.loss()
            arr[idx] = original - step
            minus = objective.loss()
            arr[idx] = original
            err = relative_error(float(grad[idx]), (plus - minus) / (2.0 * step))
            checked += 1
            if err > worst:
                worst = err
                worst_name = '{0}{1}'.format(name, list(idx))
    passed = worst <= tol
    logger.debug('Gradient check over {0} parameters: max rel. error {1:.3e} at {2}'.format(checked, worst, worst_name))
    return GradCheckReport(worst, worst_name, checked, passed)
