"""
Pseudo-spectral integrator for vorticity perturbations of Couette flow.

The state is kept in the shearing frame z = x - t y, where the Couette
transport disappears and a coefficient at frame frequency xi has physical
y-frequency eta = xi - k t_frame. Viscosity is applied as an exact per-mode
integrating factor and only the nonlinearity is advanced by Runge-Kutta.
Every pi/L time units the frame lattice lines up with the lab lattice again
and the coefficients are remapped, which resets t_frame to zero.
"""
import logging
import math
import time
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import fft as sfft

from .exceptions import CFLViolationError, ConfigurationError, IntegrationError
from .linear_oracle import phase_increment, stream_symbol
from .spectral_core import (Grid, SpectralField, cutoff_psi, dealias_mask, l2_norm, nyquist_mask,
                            row_profile, seam_distance, shear_shift, validate_grid)

logger = logging.getLogger(__name__)

INTEGRATORS = ('rk4_integrating_factor',)
INITIAL_DATA_KINDS = ('modes', 'gaussian', 'random')
# Relative slack when deciding that a step landed on a remap time
REMAP_TOLERANCE = 1e-9


class InitialData(NamedTuple):
    """
    Shape of the initial vorticity.

    modes: (k, j, amplitude) triples with eta = j pi/L, each with its conjugate partner.
    gaussian: exp(-y^2/2w^2) cos(k z + eta_center y) for each listed k, and the
    mean-free profile -y/w^2 exp(-y^2/2w^2) for k = 0.
    random: seeded spectrum <k, eta>^-6 windowed to the central half of the box.
    """
    kind: str = 'gaussian'
    modes: Tuple[Tuple[int, int, float], ...] = ()
    width: float = 1.0
    wavenumbers: Tuple[int, ...] = (1, 0)
    eta_center: float = 0.0


class SimConfig(NamedTuple):
    grid: Grid
    nu: float
    epsilon: float
    initial_data: InitialData
    t_max: float
    cfl_safety: float = 0.4
    dt_max: float = 0.05
    integrator: str = 'rk4_integrating_factor'
    remap_enabled: bool = True
    diagnostics_stride: int = 10
    seed: int = 0
    nonlinear: bool = True
    snapshot_every: int = 0
    seam_threshold: float = 1e-8


class SimState(NamedTuple):
    """Time, frame vorticity, remaps done, viscosity, warning counters and norm lost to remaps"""
    t: float
    f_hat: SpectralField
    remap_count: int
    nu: float
    warnings: Dict[str, int]
    remap_loss: float = 0.0


class Trajectory(NamedTuple):
    final: SimState
    snapshots: List[SimState]
    records: List
    steps: int


def validate_sim_config(config: SimConfig) -> Dict:
    """
    Checks the SimConfig invariants.

    Returns:
        Dict: {'valid': bool, 'error': str, 'rule': str}
    """
    grid = config.grid
    validation = validate_grid(grid.n_z, grid.n_v, grid.half_width, grid.dealias_fraction)
    if not validation['valid']:
        return validation
    if not config.nu >= 0:
        return {'valid': False, 'error': f"nu={config.nu} is negative", 'rule': 'ν ≥ 0'}
    if not config.epsilon >= 0:
        return {'valid': False, 'error': f"epsilon={config.epsilon} is negative", 'rule': 'ε ≥ 0'}
    if not config.t_max > 0:
        return {'valid': False, 'error': f"t_max={config.t_max} must be positive", 'rule': 't_max > 0'}
    if not (0 < config.cfl_safety <= 1):
        return {'valid': False, 'error': f"cfl_safety={config.cfl_safety} outside (0, 1]",
                'rule': 'cfl_safety ∈ (0, 1]'}
    if not config.dt_max > 0:
        return {'valid': False, 'error': f"dt_max={config.dt_max} must be positive", 'rule': 'dt_max > 0'}
    if config.integrator not in INTEGRATORS:
        return {'valid': False, 'error': f"unknown integrator '{config.integrator}'",
                'rule': f"integrator ∈ {INTEGRATORS}"}
    if int(config.diagnostics_stride) < 1:
        return {'valid': False, 'error': f"diagnostics_stride={config.diagnostics_stride} must be >= 1",
                'rule': 'diagnostics_stride ≥ 1'}
    if int(config.snapshot_every) < 0:
        return {'valid': False, 'error': f"snapshot_every={config.snapshot_every} is negative",
                'rule': 'snapshot_every ≥ 0'}
    return _validate_initial_data(config.initial_data, grid)


def _validate_initial_data(data: InitialData, grid: Grid) -> Dict:
    if data.kind not in INITIAL_DATA_KINDS:
        return {'valid': False, 'error': f"unknown initial data '{data.kind}'",
                'rule': f"initial_data ∈ {INITIAL_DATA_KINDS}"}
    if data.kind == 'modes':
        if not data.modes:
            return {'valid': False, 'error': "initial_data = modes needs at least one k:j:amp triple",
                    'rule': 'modes non-empty'}
        for k, j, _ in data.modes:
            if k == 0 and j == 0:
                return {'valid': False, 'error': "mode (0, 0) would give the vorticity a mean",
                        'rule': 'vorticity is mean-zero'}
            if abs(k) >= grid.n_z // 2 or abs(j) >= grid.n_v // 2:
                return {'valid': False, 'error': f"mode ({k}, {j}) is outside the grid",
                        'rule': '|k| < n_z/2 and |j| < n_v/2'}
    if data.kind == 'gaussian':
        if not data.width > 0:
            return {'valid': False, 'error': f"gaussian_width={data.width} must be positive",
                    'rule': 'gaussian_width > 0'}
        if not data.wavenumbers or any(abs(k) >= grid.n_z // 2 for k in data.wavenumbers):
            return {'valid': False, 'error': f"gaussian_wavenumbers={list(data.wavenumbers)} invalid",
                    'rule': '0 ≤ |k| < n_z/2'}
    return {'valid': True, 'error': '', 'rule': ''}


def make_sim_config(**kwargs) -> SimConfig:
    """
    Builds a validated SimConfig.

    Raises:
        ConfigurationError: naming the violated rule
    """
    config = SimConfig(**kwargs)
    validation = validate_sim_config(config)
    if not validation['valid']:
        raise ConfigurationError(validation['error'], rule=validation['rule'])
    return config


def frame_period(grid: Grid) -> float:
    """Frame time between remaps, pi/L"""
    return grid.eta_spacing


def frame_time(state: SimState) -> float:
    return state.t - state.remap_count * frame_period(state.f_hat.grid)


def physical_eta(grid: Grid, t_frame: float) -> np.ndarray:
    K, XI = grid.mesh()
    return XI - K * t_frame


def couette_frame_eta(state: SimState) -> np.ndarray:
    """Frequency of each stored mode in the frame started at t = 0, undoing the remaps"""
    K, XI = state.f_hat.grid.mesh()
    return XI + K * state.remap_count * frame_period(state.f_hat.grid)


def lab_field(state: SimState) -> SpectralField:
    """
    Lab-lattice coefficients, available when the frame is aligned.

    Raises:
        ValueError: if the state sits between remap times
    """
    t_frame = frame_time(state)
    if abs(t_frame) > REMAP_TOLERANCE * frame_period(state.f_hat.grid):
        raise ValueError(f"state at t={state.t:g} is {t_frame:g} past the last remap; the frame is not aligned")
    return state.f_hat


def lab_samples(state: SimState) -> np.ndarray:
    """Vorticity samples in lab coordinates (x, y) on the grid"""
    f = state.f_hat
    grid = f.grid
    K, _ = grid.mesh()
    rows = row_profile(grid, f.coeffs, axis=1, complex_ok=True)
    rows = rows * np.exp(-1j * K * frame_time(state) * grid.y[None, :])
    return (grid.n_z * sfft.ifft(rows, axis=0)).real


def _modes_field(grid: Grid, data: InitialData) -> np.ndarray:
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    for k, j, amplitude in data.modes:
        coeffs[k % grid.n_z, j % grid.n_v] += amplitude
        coeffs[(-k) % grid.n_z, (-j) % grid.n_v] += np.conj(amplitude)
    return coeffs


def _gaussian_field(grid: Grid, data: InitialData) -> np.ndarray:
    z = grid.z[:, None]
    y = grid.y[None, :]
    envelope = np.exp(-y ** 2 / (2.0 * data.width ** 2))
    samples = np.zeros(grid.shape)
    for k in data.wavenumbers:
        if k == 0:
            samples = samples + (-y / data.width ** 2) * envelope
        else:
            samples = samples + envelope * np.cos(k * z + data.eta_center * y)
    return SpectralField.from_physical(grid, samples).coeffs


def _random_field(grid: Grid, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    K, ETA = grid.mesh()
    spectrum = (1.0 + K ** 2 + ETA ** 2) ** -3.0
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    samples = SpectralField(grid, noise * spectrum).to_physical()
    window = cutoff_psi(1.5 * grid.y / grid.half_width)
    return SpectralField.from_physical(grid, samples * window[None, :]).coeffs


def initial_field(config: SimConfig) -> SpectralField:
    """Mean-zero, dealiased initial vorticity scaled by epsilon"""
    grid = config.grid
    data = config.initial_data
    if data.kind == 'modes':
        coeffs = _modes_field(grid, data)
    elif data.kind == 'gaussian':
        coeffs = _gaussian_field(grid, data)
    else:
        coeffs = _random_field(grid, config.seed)
    coeffs = coeffs * dealias_mask(grid) * nyquist_mask(grid)
    coeffs[0, 0] = 0.0
    field = SpectralField(grid, coeffs)
    if data.kind == 'modes':
        return field.scaled(config.epsilon)
    norm = l2_norm(field)
    if norm == 0.0:
        raise ConfigurationError(f"initial data '{data.kind}' vanishes on this grid", rule='initial data nonzero')
    return field.scaled(config.epsilon / norm)


def initial_state(config: SimConfig) -> SimState:
    return SimState(0.0, initial_field(config), 0, float(config.nu), {}, 0.0)


def biot_savart(f_hat: SpectralField, t: float) -> SpectralField:
    """psi_hat = -f_hat/(k^2 + (xi - k t)^2), zero where the symbol vanishes"""
    K, _ = f_hat.grid.mesh()
    return f_hat.with_coeffs(f_hat.coeffs * stream_symbol(K, physical_eta(f_hat.grid, t)))


def velocity(f_hat: SpectralField, t: float) -> Tuple[SpectralField, SpectralField]:
    """
    Frame velocity (u_z, u_y) = ((-d_y + t d_z) psi, d_z psi).

    u_z is the streamwise velocity U^x; d_z u_z + (d_y - t d_z) u_y vanishes
    symbol by symbol.
    """
    K, _ = f_hat.grid.mesh()
    eta = physical_eta(f_hat.grid, t)
    psi = biot_savart(f_hat, t).coeffs
    return f_hat.with_coeffs(-1j * eta * psi), f_hat.with_coeffs(1j * K * psi)


def _nonlinear_coeffs(grid: Grid, coeffs: np.ndarray, t: float, keep: np.ndarray) -> np.ndarray:
    K, _ = grid.mesh()
    eta = physical_eta(grid, t)
    psi = coeffs * stream_symbol(K, eta)
    ux = SpectralField(grid, -1j * eta * psi).to_physical()
    uy = SpectralField(grid, 1j * K * psi).to_physical()
    fx = SpectralField(grid, 1j * K * coeffs).to_physical()
    fy = SpectralField(grid, 1j * eta * coeffs).to_physical()
    advection = SpectralField.from_physical(grid, -(ux * fx + uy * fy)).coeffs * keep
    advection[0, 0] = 0.0
    return advection


def nonlinear_rhs(f_hat: SpectralField, t: float) -> SpectralField:
    """
    -(U . grad) f in frame variables, products taken on the grid.

    The result is dealiased, has no Nyquist content and zero mean.

    Raises:
        IntegrationError: if the result is not finite
    """
    grid = f_hat.grid
    coeffs = _nonlinear_coeffs(grid, f_hat.coeffs, t, dealias_mask(grid) & nyquist_mask(grid))
    if not np.all(np.isfinite(coeffs)):
        raise IntegrationError(f"non-finite nonlinear term at frame time {t:g}")
    return f_hat.with_coeffs(coeffs)


def integrating_factor(grid: Grid, t0: float, t1: float, nu: float) -> np.ndarray:
    """exp(-phase) carrying each frame mode from t0 to t1"""
    K, XI = grid.mesh()
    return np.exp(-phase_increment(K, XI, t0, t1, nu))


def max_velocity(state: SimState) -> float:
    """Largest frame transport speed on the grid"""
    t_frame = frame_time(state)
    u_x, u_y = velocity(state.f_hat, t_frame)
    ux = u_x.to_physical()
    uy = u_y.to_physical()
    return float(max(np.max(np.abs(ux - t_frame * uy), initial=0.0), np.max(np.abs(uy), initial=0.0)))


def cfl_limit(state: SimState, cfl_safety: float) -> float:
    """cfl_safety times the grid-crossing time; inf for a field at rest"""
    grid = state.f_hat.grid
    speed = max_velocity(state)
    if speed == 0.0:
        return math.inf
    spacing = min(2.0 * math.pi / grid.n_z, 2.0 * grid.half_width / grid.n_v)
    return cfl_safety * spacing / speed


def choose_dt(state: SimState, config: SimConfig) -> float:
    """
    dt = min(dt_max, cfl_safety * dx_min/max|u|), shortened to land on the
    next remap time and on t_max.
    """
    dt = min(config.dt_max, cfl_limit(state, config.cfl_safety)) if config.nonlinear else config.dt_max
    if config.remap_enabled:
        to_remap = frame_period(config.grid) - frame_time(state)
        if to_remap > REMAP_TOLERANCE * frame_period(config.grid):
            dt = min(dt, to_remap)
    return min(dt, config.t_max - state.t)


def step(state: SimState, dt: float, config: Optional[SimConfig] = None) -> SimState:
    """
    Advances by dt with the integrating-factor RK4 scheme.

    Stages advance only the nonlinearity; the viscous factor is exact, so a
    run without nonlinearity reproduces the Kelvin solution to rounding.

    Args:
        state: current state
        dt: step length
        config: supplies dt_max, CFL safety and the nonlinear switch; without
            it the step is nonlinear and unchecked

    Raises:
        CFLViolationError: if dt exceeds dt_max or the CFL limit
        IntegrationError: on a non-finite result
    """
    nonlinear = True if config is None else config.nonlinear
    if config is not None:
        if dt > config.dt_max * (1.0 + 1e-12):
            raise CFLViolationError(f"dt={dt:g} exceeds dt_max={config.dt_max:g}", state)
        if nonlinear:
            limit = cfl_limit(state, config.cfl_safety)
            if dt > limit * (1.0 + 1e-12):
                raise CFLViolationError(f"dt={dt:g} exceeds the CFL limit {limit:g}", state)

    grid = state.f_hat.grid
    nu = state.nu
    t0 = frame_time(state)
    tm = t0 + 0.5 * dt
    t1 = t0 + dt
    u0 = state.f_hat.coeffs
    full = integrating_factor(grid, t0, t1, nu)

    if nonlinear:
        keep = dealias_mask(grid) & nyquist_mask(grid)
        half = integrating_factor(grid, t0, tm, nu)
        second_half = integrating_factor(grid, tm, t1, nu)
        n1 = _nonlinear_coeffs(grid, u0, t0, keep)
        n2 = _nonlinear_coeffs(grid, half * (u0 + 0.5 * dt * n1), tm, keep)
        n3 = _nonlinear_coeffs(grid, half * u0 + 0.5 * dt * n2, tm, keep)
        n4 = _nonlinear_coeffs(grid, full * u0 + dt * second_half * n3, t1, keep)
        u1 = full * u0 + dt / 6.0 * (full * n1 + 2.0 * second_half * (n2 + n3) + n4)
    else:
        u1 = full * u0

    if not np.all(np.isfinite(u1)):
        raise IntegrationError(f"non-finite vorticity after the step from t={state.t:g}", state)
    return state._replace(t=state.t + dt, f_hat=state.f_hat.with_coeffs(u1))


def remap_shear(state: SimState, dealias: bool = True) -> SimState:
    """
    Remaps once the frame has sheared by pi/L: f_hat(k, xi_j) <- f_hat(k, xi_{j+k}).

    The physical field is unchanged except for modes pushed past the lattice
    edge (or, with dealias, outside the dealiased region); they are zeroed,
    counted in warnings['sheared_out'] and their squared L2 norm is added to
    remap_loss. A state with less than one period of elapsed shear is returned
    unchanged.
    """
    grid = state.f_hat.grid
    period = frame_period(grid)
    while frame_time(state) >= period * (1.0 - REMAP_TOLERANCE):
        shifted = shear_shift(state.f_hat, 1)
        coeffs = shifted.field.coeffs
        lost_count = shifted.lost_count
        lost_sq = shifted.lost_norm_sq
        if dealias:
            outside = ~dealias_mask(grid) & (np.abs(coeffs) > 0)
            lost_count += int(np.count_nonzero(outside))
            lost_sq += grid.eta_spacing * float(np.sum(np.abs(coeffs[outside]) ** 2))
            coeffs = np.where(outside, 0.0, coeffs)
        warnings = dict(state.warnings)
        if lost_count:
            warnings['sheared_out'] = warnings.get('sheared_out', 0) + lost_count
            logger.debug("remap %d dropped %d modes", state.remap_count + 1, lost_count)
        state = state._replace(f_hat=state.f_hat.with_coeffs(coeffs), remap_count=state.remap_count + 1,
                               warnings=warnings, remap_loss=state.remap_loss + lost_sq)
    return state


def enstrophy(state: SimState) -> float:
    """integral of f^2"""
    return l2_norm(state.f_hat) ** 2


def circulation(state: SimState) -> float:
    """integral of f; 2 pi times the mean coefficient"""
    return float(2.0 * math.pi * state.f_hat.coeffs[0, 0].real)


def kinetic_energy(state: SimState) -> float:
    """
    integral of |U|^2 for the perturbation velocity.

    Not an invariant for x-dependent modes: the Orr mechanism exchanges energy
    with the background shear.
    """
    u_x, u_y = velocity(state.f_hat, frame_time(state))
    return l2_norm(u_x) ** 2 + l2_norm(u_y) ** 2


def check_seam(state: SimState, threshold: float) -> SimState:
    """Counts and logs a seam warning when the perturbation gets within L/4 of y = +-L"""
    grid = state.f_hat.grid
    distance = seam_distance(state.f_hat, threshold)
    if distance >= 0.25 * grid.half_width:
        return state
    warnings = dict(state.warnings)
    warnings['seam'] = warnings.get('seam', 0) + 1
    if warnings['seam'] == 1:
        logger.warning("perturbation within %.3g of the periodic seam at t=%g (L/4 = %.3g)",
                       distance, state.t, 0.25 * grid.half_width)
    return state._replace(warnings=warnings)


def iterate(config: SimConfig, state: Optional[SimState] = None) -> Iterator[Tuple[int, SimState, float]]:
    """
    Generator version of run: yields (step index, state, dt), starting with
    the initial state at index 0 and dt 0.
    """
    state = initial_state(config) if state is None else state
    stride = int(config.diagnostics_stride)
    state = check_seam(state, config.seam_threshold)
    yield 0, state, 0.0
    index = 0
    end = config.t_max * (1.0 - 1e-14)
    while state.t < end:
        dt = choose_dt(state, config)
        started = time.perf_counter()
        state = step(state, dt, config)
        if config.remap_enabled:
            state = remap_shear(state, dealias=config.nonlinear)
        index += 1
        if index % stride == 0 or state.t >= end:
            state = check_seam(state, config.seam_threshold)
        logger.debug("step %d: t=%.6g dt=%.3g (%.1f ms)", index, state.t, dt,
                     1e3 * (time.perf_counter() - started))
        yield index, state, dt


def run(config: SimConfig, recorder=None, state: Optional[SimState] = None) -> Trajectory:
    """
    Integrates to t_max.

    Args:
        config: validated configuration
        recorder: optional object with observe(state, dt), called every step,
            and record(state), called every diagnostics_stride steps and at the
            end; its return values form the record stream
        state: start from this state instead of the initial data

    Returns:
        Trajectory: final state, snapshots (initial, every snapshot_every steps, final),
        records and step count
    """
    logger.info("run start: grid %dx%d L=%g nu=%g epsilon=%g t_max=%g nonlinear=%s", config.grid.n_z,
                config.grid.n_v, config.grid.half_width, config.nu, config.epsilon, config.t_max, config.nonlinear)
    snapshots = []
    records = []
    stride = int(config.diagnostics_stride)
    last_recorded = -1
    index = 0
    current = None
    for index, current, dt in iterate(config, state):
        if recorder is not None:
            recorder.observe(current, dt)
        if index % stride == 0:
            if recorder is not None:
                records.append(recorder.record(current))
            last_recorded = index
        if index == 0 or (config.snapshot_every and index % config.snapshot_every == 0):
            snapshots.append(current)
    if last_recorded != index:
        if recorder is not None:
            records.append(recorder.record(current))
    if not snapshots or snapshots[-1] is not current:
        snapshots.append(current)
    logger.info("run finished: t=%g after %d steps, %d remaps, remap loss %.3g, warnings %s",
                current.t, index, current.remap_count, current.remap_loss, current.warnings)
    return Trajectory(current, snapshots, records, index)
