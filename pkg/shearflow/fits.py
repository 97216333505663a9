"""
Least-squares fits of decay laws and scaling exponents.

Each model is fitted in its linearising coordinates with scipy.stats.linregress.
"""
import logging
import math
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .exceptions import FitError

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 10


class DecayKind(str, Enum):
    POWER = 'power'
    EXP_NU_T_CUBED = 'exp_nu_t_cubed'
    POLY_NU_T_CUBED = 'poly_nu_t_cubed'
    QUARTER_HEAT = 'quarter_heat'


class DecayModel(NamedTuple):
    """
    Decay law and fit window.

    power: y ~ <t>^p; exp_nu_t_cubed: y ~ exp(-c nu t^3);
    poly_nu_t_cubed: y ~ <nu t^3>^(-alpha); quarter_heat: y ~ <nu t>^p, p near -1/4.
    """
    kind: DecayKind
    window: Tuple[float, float]
    nu: float = 0.0


class DecayFit(NamedTuple):
    kind: DecayKind
    coefficient: float
    rate: float
    r_squared: float
    samples: int


def japanese(x):
    """<x> = sqrt(1 + x^2)"""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def _abscissa(model: DecayModel, t: np.ndarray) -> np.ndarray:
    kind = model.kind
    if kind == DecayKind.POWER:
        return np.log(japanese(t))
    if kind == DecayKind.EXP_NU_T_CUBED:
        return model.nu * t ** 3
    if kind == DecayKind.POLY_NU_T_CUBED:
        return np.log(japanese(model.nu * t ** 3))
    return np.log(japanese(model.nu * t))


def fit_decay(times: Sequence[float], values: Sequence[float], model: DecayModel) -> DecayFit:
    """
    Fits a decay law over the model window.

    Returns:
        DecayFit: coefficient C and the rate in the model's own sign convention:
        the exponent p for power and quarter_heat, c for exp_nu_t_cubed and
        alpha for poly_nu_t_cubed

    Raises:
        FitError: on a window outside the data, fewer than 10 samples in the
        window, or nonpositive values in it
    """
    model = DecayModel(DecayKind(model.kind), tuple(model.window), model.nu)
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape:
        raise FitError(f"times and values differ in length: {t.size} vs {y.size}")
    t0, t1 = model.window
    if not t0 < t1:
        raise FitError(f"empty fit window [{t0:g}, {t1:g}]")
    if t.size == 0 or t0 < t.min() - 1e-12 or t1 > t.max() + 1e-12:
        raise FitError(f"fit window [{t0:g}, {t1:g}] is not inside the recorded range")
    if model.kind != DecayKind.POWER and model.nu <= 0.0:
        raise FitError(f"{model.kind.value} fits need nu > 0")

    inside = (t >= t0) & (t <= t1)
    if np.count_nonzero(inside) < MIN_FIT_SAMPLES:
        raise FitError(f"only {np.count_nonzero(inside)} samples in [{t0:g}, {t1:g}], need {MIN_FIT_SAMPLES}")
    if np.any(y[inside] <= 0.0):
        raise FitError(f"nonpositive values in fit window [{t0:g}, {t1:g}]")

    x = _abscissa(model, t[inside])
    result = stats.linregress(x, np.log(y[inside]))
    slope = float(result.slope)
    if model.kind == DecayKind.EXP_NU_T_CUBED or model.kind == DecayKind.POLY_NU_T_CUBED:
        rate = -slope
    else:
        rate = slope
    return DecayFit(model.kind, math.exp(float(result.intercept)), rate, float(result.rvalue) ** 2,
                    int(np.count_nonzero(inside)))


class PowerLawFit(NamedTuple):
    exponent: float
    prefactor: float
    r_squared: float
    points: int
    sufficient: bool


def fit_power_law(x: Sequence[float], y: Sequence[float], min_points: int = 3) -> PowerLawFit:
    """log-log fit y ~ C x^p over the finite positive pairs; insufficient below min_points"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    usable = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    points = int(np.count_nonzero(usable))
    if points < min_points:
        logger.warning("power-law fit has %d usable points, need %d", points, min_points)
        return PowerLawFit(math.nan, math.nan, math.nan, points, False)
    result = stats.linregress(np.log(x[usable]), np.log(y[usable]))
    return PowerLawFit(float(result.slope), math.exp(float(result.intercept)), float(result.rvalue) ** 2,
                       points, True)


def optional_fit(times, values, model: DecayModel) -> Optional[DecayFit]:
    """fit_decay, or None with a warning when the data cannot support the fit"""
    try:
        return fit_decay(times, values, model)
    except FitError as e:
        logger.warning("skipping %s fit: %s", DecayKind(model.kind).value, e)
        return None
