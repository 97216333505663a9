"""
Reconstruction of the nonlinear coordinate system from solver output.

Everything is a function of the label y. Phi is the heat-propagated time
integral of the zero-mode velocity U_0; from it

    v - y = Phi/t,  h = v' - 1 = d_y Phi/t,  g = (U_0 - Phi/t)/t,
    hbar = (-omega_0 - h)/t.

The first two identities of the coordinate system,
d_t v = g + nu v'' and d_y g = hbar, are checked in these y-label forms.
"""
import logging
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import CoordinateMonotonicityError, StencilError, StreamGapError
from .spectral_core import Grid, SpectralField, profile_row, row_profile

logger = logging.getLogger(__name__)

# Below this time the 1/t quantities are reported as masked zeros
MASK_TIME = 0.1
STREAM_TOLERANCE = 1e-9


class CoordState(NamedTuple):
    t: float
    phi: np.ndarray
    u0: np.ndarray
    v_minus_y: np.ndarray
    vprime_minus_1: np.ndarray
    g: np.ndarray
    hbar: np.ndarray
    phi_hat: np.ndarray
    u0_hat: np.ndarray
    grid: Grid
    masked: bool


class IdentityResiduals(NamedTuple):
    """L2-in-y norms of d_t v - g - nu v'' and d_y g - hbar at the middle state"""
    t: float
    dt: float
    dv_dt: float
    dg_dy: float


def zero_mode_velocity(f_hat: SpectralField) -> np.ndarray:
    """k = 0 row of U^x, i f_hat/eta; the zero row is the same in every frame"""
    eta = f_hat.grid.eta
    row = f_hat.coeffs[0]
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(eta != 0, 1j * row / np.where(eta != 0, eta, 1.0), 0.0)


def _y_norm(grid: Grid, samples: np.ndarray) -> float:
    return math.sqrt(float(np.sum(np.abs(samples) ** 2)) * 2.0 * grid.half_width / grid.n_v)


def coord_state(grid: Grid, t: float, phi_hat: np.ndarray, u0_hat: np.ndarray) -> CoordState:
    """
    Derived coordinate fields from the Phi and U_0 rows.

    Raises:
        CoordinateMonotonicityError: if 1 + h <= 0 somewhere
    """
    phi_hat = np.asarray(phi_hat, dtype=np.complex128)
    u0_hat = np.asarray(u0_hat, dtype=np.complex128)
    phi = row_profile(grid, phi_hat)
    u0 = row_profile(grid, u0_hat)
    if t < MASK_TIME:
        zeros = np.zeros(grid.n_v)
        return CoordState(t, phi, u0, zeros, zeros.copy(), zeros.copy(), zeros.copy(), phi_hat, u0_hat, grid, True)

    eta = grid.eta
    v_minus_y = phi / t
    h = row_profile(grid, 1j * eta * phi_hat) / t
    g = (u0 - v_minus_y) / t
    omega0 = row_profile(grid, -1j * eta * u0_hat)
    hbar = (-omega0 - h) / t
    lowest = float(np.min(1.0 + h))
    if lowest <= 0.0:
        raise CoordinateMonotonicityError(
            f"y -> v(t, y) is not monotone at t={t:g}: min v' = {lowest:.6g}", t, lowest)
    return CoordState(t, phi, u0, v_minus_y, h, g, hbar, phi_hat, u0_hat, grid, False)


def initial_coord_state(grid: Grid, u0_hat: np.ndarray, t: float = 0.0) -> CoordState:
    """Phi = 0 at the start of the stream"""
    return coord_state(grid, t, np.zeros(grid.n_v, dtype=np.complex128), u0_hat)


def update_phi(prev: CoordState, u0_now: np.ndarray, dt: float, nu: float,
               t_now: Optional[float] = None) -> CoordState:
    """
    Advances Phi by one step of the zero-mode velocity stream.

    Phi_hat(t + dt) = e^{-nu eta^2 dt} Phi_hat(t)
                      + dt/2 (e^{-nu eta^2 dt} U_hat(t) + U_hat(t + dt)),
    the trapezoidal rule with the left endpoint carried by the heat flow.

    Args:
        prev: state at t
        u0_now: k = 0 row of U^x at t + dt
        dt: step length
        nu: viscosity
        t_now: time of u0_now, checked against prev.t + dt

    Raises:
        StreamGapError: if t_now does not continue the stream or dt <= 0
    """
    if dt <= 0:
        raise StreamGapError(f"non-positive step dt={dt:g} in the zero-mode stream")
    expected = prev.t + dt
    if t_now is not None and abs(t_now - expected) > STREAM_TOLERANCE * max(1.0, abs(expected)):
        raise StreamGapError(f"zero-mode sample at t={t_now:g} does not follow t={prev.t:g} + dt={dt:g}")
    grid = prev.grid
    heat = np.exp(-nu * grid.eta ** 2 * dt)
    u0_now = np.asarray(u0_now, dtype=np.complex128)
    phi_hat = heat * prev.phi_hat + 0.5 * dt * (heat * prev.u0_hat + u0_now)
    return coord_state(grid, expected if t_now is None else t_now, phi_hat, u0_now)


def coord_fields(sim_state, phi_hat: np.ndarray) -> CoordState:
    """Coordinate fields of a solver state for a given Phi row"""
    return coord_state(sim_state.f_hat.grid, sim_state.t, phi_hat, zero_mode_velocity(sim_state.f_hat))


def _spacing(states: Sequence[CoordState]) -> float:
    if len(states) != 3:
        raise StencilError(f"the centred difference needs 3 states, got {len(states)}")
    first, middle, last = states
    if not (first.grid == middle.grid == last.grid):
        raise StencilError("coordinate states live on different grids")
    dt = middle.t - first.t
    if dt <= 0 or abs((last.t - middle.t) - dt) > 1e-9 * max(1.0, dt):
        raise StencilError(f"times {first.t:g}, {middle.t:g}, {last.t:g} are not equally spaced")
    if any(s.masked for s in states):
        raise StencilError(f"stencil reaches into the masked region t < {MASK_TIME}")
    return dt


def identity_residuals(states: Sequence[CoordState], nu: float) -> IdentityResiduals:
    """
    Residuals of d_t v = g + nu v'' and d_y g = hbar at the middle of three states.

    The first converges like dt^2 under refinement. The second holds to
    rounding, since U_0 and omega_0 come from the same vorticity row.

    Raises:
        StencilError: on unequal spacing, mixed grids or masked states
    """
    dt = _spacing(states)
    first, middle, last = states
    grid = middle.grid
    eta = grid.eta
    dv_dt = (last.v_minus_y - first.v_minus_y) / (2.0 * dt)
    v_second = row_profile(grid, -eta ** 2 * middle.phi_hat) / middle.t
    transport = dv_dt - middle.g - nu * v_second
    dg = row_profile(grid, 1j * eta * profile_row(grid, middle.g))
    return IdentityResiduals(middle.t, dt, _y_norm(grid, transport), _y_norm(grid, dg - middle.hbar))


def shifted_vorticity(f_hat: SpectralField, phi: np.ndarray) -> SpectralField:
    """
    omega(t, x + t y + Phi(t, y), y) from frame coefficients.

    Each row k is taken to y-space, multiplied by exp(i k Phi(y)) and taken
    back; the shear part t y is already absorbed by the frame. An L2 isometry
    for every Phi.
    """
    grid = f_hat.grid
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n_v,):
        raise ValueError(f"phi has shape {phi.shape}, expected ({grid.n_v},)")
    rows = row_profile(grid, f_hat.coeffs, axis=1, complex_ok=True)
    rows = rows * np.exp(1j * grid.kz[:, None] * phi[None, :])
    return f_hat.with_coeffs(profile_row(grid, rows, axis=1))


class CoordinateTracker:
    """Accumulates Phi along a solver run; observe() must see every step"""

    def __init__(self, nu: float):
        self.nu = nu
        self.current: Optional[CoordState] = None

    def observe(self, sim_state, dt: float) -> CoordState:
        u0_hat = zero_mode_velocity(sim_state.f_hat)
        if self.current is None:
            self.current = initial_coord_state(sim_state.f_hat.grid, u0_hat, sim_state.t)
        else:
            self.current = update_phi(self.current, u0_hat, dt, self.nu, t_now=sim_state.t)
        return self.current
