"""
Kelvin's closed-form solution of the linearised problem.

In the shearing frame a mode (k, xi) keeps its coefficient and is only damped;
its physical y-frequency at time t is eta = xi - k t.
"""
import logging
import math
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import FitError
from .fits import DecayFit, DecayKind, DecayModel, fit_decay, optional_fit
from .spectral_core import GevreyParams, SpectralField, gevrey_norm, l2_norm, shear_shift

logger = logging.getLogger(__name__)

LATTICE_TOLERANCE = 1e-9


def phase_increment(k, xi, t0: float, t1: float, nu: float):
    """
    nu * integral_{t0}^{t1} k^2 + (xi - k tau)^2 dtau.

    Written as nu h (k^2 + (a - k h/2)^2 + k^2 h^2/12) with a = xi - k t0 and
    h = t1 - t0, which has no cancellation and is >= 0 for h >= 0.
    """
    k = np.asarray(k, dtype=float)
    xi = np.asarray(xi, dtype=float)
    h = t1 - t0
    a = xi - k * t0
    return nu * h * (k ** 2 + (a - 0.5 * k * h) ** 2 + k ** 2 * h ** 2 / 12.0)


def viscous_phase(k, eta, t: float, nu: float):
    """
    Kelvin damping exponent nu * integral_0^t k^2 + (eta + k t - k tau)^2 dtau.

    Equals nu k^2 t + nu((eta + k t)^3 - eta^3)/(3k), and nu eta^2 t for k = 0.
    """
    k = np.asarray(k, dtype=float)
    return phase_increment(k, np.asarray(eta, dtype=float) + k * t, 0.0, t, nu)


def kelvin_frame(omega_in: SpectralField, nu: float, t: float, t_start: float = 0.0) -> SpectralField:
    """Kelvin solution in shearing-frame coefficients, evolved from frame time t_start to t"""
    K, XI = omega_in.grid.mesh()
    return omega_in.with_coeffs(omega_in.coeffs * np.exp(-phase_increment(K, XI, t_start, t, nu)))


def stream_symbol(K, ETA) -> np.ndarray:
    """-1/(k^2 + eta^2), zero at the origin"""
    denominator = np.asarray(K, dtype=float) ** 2 + np.asarray(ETA, dtype=float) ** 2
    with np.errstate(divide='ignore'):
        return np.where(denominator > 0, -1.0 / np.where(denominator > 0, denominator, 1.0), 0.0)


class KelvinSolution(NamedTuple):
    """Coefficients in the frame of the last remap; mode (k, xi_j) has physical eta = xi_j - k t_frame"""
    omega: SpectralField
    psi: SpectralField
    sheared_out: int
    t_frame: float = 0.0


def lattice_steps(grid, t: float) -> Optional[int]:
    """t in units of the eta spacing pi/L, or None when t is off the lattice"""
    steps = t / grid.eta_spacing
    nearest = round(steps)
    if abs(steps - nearest) > LATTICE_TOLERANCE * max(1.0, abs(steps)):
        return None
    return int(nearest)


def remaps_by(grid, t: float) -> int:
    """Number of pi/L remaps a run has made by time t"""
    steps = lattice_steps(grid, t)
    return steps if steps is not None else int(math.floor(t / grid.eta_spacing))


def kelvin_evolve(omega_in: SpectralField, nu: float, t: float) -> KelvinSolution:
    """
    Kelvin solution at any t >= 0, in the representation the solver keeps.

    The frame solution kelvin_frame(omega_in, nu, t) is shifted by the
    floor(t L/pi) remaps made so far, so omega_hat(k, xi_j) has physical
    frequency eta = xi_j - k t_frame with t_frame = t - floor(t L/pi) pi/L.
    On the pi/L lattice t_frame is zero and this is the lab solution
    omega_in_hat(k, eta + k t) exp(-viscous_phase); psi_hat = -omega_hat/(k^2 + eta^2).
    Modes whose source frequency lies beyond the lattice are zeroed and counted.

    Raises:
        ValueError: if t < 0
    """
    if t < 0:
        raise ValueError(f"t={t:g} must be >= 0")
    grid = omega_in.grid
    remaps = remaps_by(grid, t)
    t_frame = t - remaps * grid.eta_spacing
    shifted = shear_shift(kelvin_frame(omega_in, nu, t), remaps)
    if shifted.lost_count:
        logger.warning("kelvin_evolve: %d modes sheared out of the lattice by t=%g", shifted.lost_count, t)
        if not np.any(shifted.field.coeffs):
            logger.warning("kelvin_evolve: the whole spectrum has left the lattice")
    K, XI = grid.mesh()
    omega = shifted.field
    psi = omega.with_coeffs(omega.coeffs * stream_symbol(K, XI - K * t_frame))
    return KelvinSolution(omega, psi, shifted.lost_count, t_frame)


class OrrResponse(NamedTuple):
    t_peak: float
    amplification: float


def _orr_amplitude(k: float, eta0: float, nu: float, t: float) -> float:
    eta = eta0 - k * t
    return (k * k + eta0 * eta0) / (k * k + eta * eta) * math.exp(-float(phase_increment(k, eta0, 0.0, t, nu)))


def orr_response(k: float, eta0: float, nu: float) -> OrrResponse:
    """
    Peak of |psi_hat(t)|/|psi_hat(0)| for a unit mode starting at (k, eta0).

    The peak lies in [0, eta0/k]; at nu = 0 it is t = eta0/k with
    amplification (k^2 + eta0^2)/k^2. Modes with eta0 k <= 0 are not amplified.
    """
    if k == 0:
        raise ValueError("orr_response needs k != 0")
    if eta0 * k <= 0:
        if eta0 != 0:
            logger.info("orr_response: eta0*k < 0, the mode is never amplified")
        return OrrResponse(0.0, 1.0)
    t_critical = eta0 / k
    result = minimize_scalar(lambda t: -_orr_amplitude(k, eta0, nu, t), bounds=(0.0, t_critical),
                             method='bounded', options={'xatol': 1e-10})
    candidates = [0.0, float(result.x), t_critical]
    amplitudes = [_orr_amplitude(k, eta0, nu, t) for t in candidates]
    best = int(np.argmax(amplitudes))
    return OrrResponse(candidates[best], amplitudes[best])


def default_fit_window(nu: float, c: float = 1.0 / 3.0) -> Tuple[float, float]:
    """[10, min(100, 0.5 (nu c)^(-1/3))]"""
    end = 100.0
    if nu > 0:
        end = min(end, 0.5 * (nu * c) ** (-1.0 / 3.0))
    return (10.0, end)


def frame_norms(frame: SpectralField, t: float, sobolev: float = 3.0) -> Dict[str, float]:
    """Velocity and vorticity norms of a frame field whose physical eta is xi - k t"""
    grid = frame.grid
    K, XI = grid.mesh()
    ETA = XI - K * t
    psi = frame.coeffs * stream_symbol(K, ETA)
    nonzero = K != 0
    weight = grid.eta_spacing
    return {
        'ux_nonzero': math.sqrt(weight * float(np.sum(np.abs(ETA * psi)[nonzero] ** 2))),
        'uy': math.sqrt(weight * float(np.sum(np.abs(K * psi) ** 2))),
        'l2_zero': math.sqrt(weight * float(np.sum(np.abs(frame.coeffs[~nonzero]) ** 2))),
        'l2_nonzero': math.sqrt(weight * float(np.sum(np.abs(frame.coeffs[nonzero]) ** 2))),
        'l2_total': l2_norm(frame),
        'frame_sobolev': gevrey_norm(frame, GevreyParams(0.0, sobolev)),
    }


class LinearRateReport(NamedTuple):
    times: np.ndarray
    series: Dict[str, np.ndarray]
    window: Tuple[float, float]
    fits: Dict[str, Optional[DecayFit]]


def linear_rate_report(omega_in: SpectralField, nu: float, t_grid: Sequence[float],
                       window: Optional[Tuple[float, float]] = None, sobolev: float = 3.0) -> LinearRateReport:
    """
    Time series and fitted exponents of the linear decay rates.

    ux_nonzero and uy are fitted as powers of <t> over the window; with nu > 0
    l2_nonzero is fitted to exp(-c nu t^3) over the whole grid and l2_zero to
    <nu t>^p over the samples with nu t >= 1.

    Raises:
        FitError: if the window holds fewer than 10 samples
    """
    times = np.asarray(t_grid, dtype=float)
    window = tuple(window) if window is not None else default_fit_window(nu)
    rows = [frame_norms(kelvin_frame(omega_in, nu, float(t)), float(t), sobolev) for t in times]
    series = {name: np.array([row[name] for row in rows]) for name in rows[0]} if rows else {}

    inside = (times >= window[0]) & (times <= window[1])
    if np.count_nonzero(inside) < 10:
        raise FitError(f"fit window [{window[0]:g}, {window[1]:g}] holds {np.count_nonzero(inside)} samples, need 10")

    fits = {
        'ux_nonzero': fit_decay(times, series['ux_nonzero'], DecayModel(DecayKind.POWER, window)),
        'uy': fit_decay(times, series['uy'], DecayModel(DecayKind.POWER, window)),
        'l2_nonzero': None,
        'l2_zero': None,
    }
    if nu > 0:
        fits['l2_nonzero'] = optional_fit(times, series['l2_nonzero'],
                                          DecayModel(DecayKind.EXP_NU_T_CUBED, (times.min(), times.max()), nu))
        late = times[nu * times >= 1.0]
        if late.size:
            fits['l2_zero'] = optional_fit(times, series['l2_zero'],
                                           DecayModel(DecayKind.QUARTER_HEAT, (late.min(), late.max()), nu))
    for name, fit in fits.items():
        if fit is not None:
            logger.info("linear fit %s: rate %.4f (r^2 %.4f)", name, fit.rate, fit.r_squared)
    return LinearRateReport(times, series, window, fits)


def linear_pde_residual(omega_in: SpectralField, nu: float, t: float, dt: float) -> float:
    """
    L2 norm of the centred-difference residual of d/dt f = nu Delta_L f.

    The frame form of d/dt omega = -y d_x omega + nu Delta omega; the residual
    is O(dt^2).
    """
    K, XI = omega_in.grid.mesh()
    later = kelvin_frame(omega_in, nu, t + dt).coeffs
    earlier = kelvin_frame(omega_in, nu, t - dt).coeffs
    now = kelvin_frame(omega_in, nu, t).coeffs
    rhs = -nu * (K ** 2 + (XI - K * t) ** 2) * now
    residual = (later - earlier) / (2.0 * dt) - rhs
    return math.sqrt(omega_in.grid.eta_spacing * float(np.sum(np.abs(residual) ** 2)))
