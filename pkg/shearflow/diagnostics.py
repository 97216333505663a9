"""
Norm series, bootstrap monitors, decay fits and echo detection.

Weights are evaluated at the frequency of each mode in the frame started at
t = 0 (remaps undone), on the profile-shifted vorticity.
"""
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks

from .coordinates import CoordState, CoordinateTracker, shifted_vorticity
from .fits import (DecayFit, DecayKind, DecayModel, PowerLawFit, fit_decay, fit_power_law,
                   optional_fit)
from .multipliers import (MultiplierKind, WeightContext, critical_times, dtw_grid, lambda_rate, lambda_schedule,
                          log_multiplier_grid)
from .solver import SimState, biot_savart, couette_frame_eta, frame_time, nonlinear_rhs, velocity
from .spectral_core import Grid, SpectralField, log_weighted_norm_sq, profile_row, row_profile, weighted_norm_sq

logger = logging.getLogger(__name__)

__all__ = [
    'DiagnosticsRecord', 'DecayKind', 'DecayModel', 'DecayFit', 'fit_decay', 'record', 'TrajectoryRecorder',
    'ModeHistory', 'seeded_frequencies', 'Burst', 'pair_critical_time', 'echo_scan', 'BootstrapEntry',
    'bootstrap_report', 'epsilon_scaling', 'onset_time', 'fit_onset_scaling', 'decay_model_fits',
]


class DiagnosticsRecord(NamedTuple):
    t: float
    l2_total: float
    l2_zero_mode: float
    l2_nonzero: float
    gevrey_A_sq: float
    gevrey_Anu_sq: float
    ck_lambda: float
    ck_lambda_nu: float
    ux_nonzero: float
    uy: float
    psi_nonzero_gevrey: float
    g_inf: float
    h_l2: float
    dvh_l2: float
    remap_losses: float
    ux_zero: float
    ck_w: Optional[float] = None
    bhc: Optional[float] = None
    arh: Optional[float] = None


def _row_norm(f: SpectralField, rows) -> float:
    return math.sqrt(f.grid.eta_spacing * float(np.sum(np.abs(f.coeffs[rows]) ** 2)))


def _profile_norm_sq(grid: Grid, samples: np.ndarray, log_weight=0.0) -> float:
    """Weighted integral over y of a profile, through its k = 0 row"""
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    coeffs[0] = profile_row(grid, samples)
    row_weight = np.zeros(grid.shape) - np.inf
    row_weight[0] = np.broadcast_to(np.asarray(log_weight, dtype=float), (grid.n_v,))
    # (pi/L) sum |c|^2 is 2 pi times the integral over y alone
    return weighted_norm_sq(SpectralField(grid, coeffs), row_weight) / (2.0 * math.pi)


def _l2_y(grid: Grid, samples: np.ndarray) -> float:
    return math.sqrt(float(np.sum(np.abs(samples) ** 2)) * 2.0 * grid.half_width / grid.n_v)


def _ck_term(field: SpectralField, log_weight: np.ndarray, rate: float, K, ETA, s: float) -> float:
    if rate == 0.0:
        return 0.0
    magnitude = np.abs(K) + np.abs(ETA)
    with np.errstate(divide='ignore'):
        log_gradient = 0.5 * s * np.log(magnitude)
    return -rate * weighted_norm_sq(field, log_weight + log_gradient)


def record(sim_state: SimState, coord_state: CoordState, ctx: WeightContext,
           expensive: bool = False) -> DiagnosticsRecord:
    """
    One diagnostics row.

    Norms of the profile-shifted vorticity with the A and A^nu multipliers,
    the CK_lambda terms -lambda' ||(|k| + |eta|)^{s/2} A f||^2, velocity and
    coordinate-field norms. With expensive, also CK_w (needs dtw per mode),
    t^{2+2s} ||A^R <eta>^{-s} hbar||^2 and ||A^R (v' - 1)||^2.

    Raises:
        GevreyOverflowError: from the weighted norms
    """
    f = sim_state.f_hat
    grid = f.grid
    t = sim_state.t
    K, _ = grid.mesh()
    eta_c = couette_frame_eta(sim_state)
    nonzero = grid.kz != 0

    shifted = shifted_vorticity(f, coord_state.phi)
    log_a = log_multiplier_grid(MultiplierKind.A, K, eta_c, t, ctx)
    log_anu = log_multiplier_grid(MultiplierKind.ANU, K, eta_c, t, ctx)
    rate = lambda_rate(t, ctx)

    u_x, u_y = velocity(f, frame_time(sim_state))
    psi_weight = (lambda_schedule(t, ctx) * (np.abs(K) + np.abs(eta_c)) ** ctx.s
                  + 0.5 * (ctx.sigma - 4.0) * np.log1p(K ** 2 + eta_c ** 2))
    psi = biot_savart(f, frame_time(sim_state))
    psi_nonzero = psi.with_coeffs(psi.coeffs * nonzero[:, None])
    psi_log = log_weighted_norm_sq(psi_nonzero, psi_weight)

    g_inf = h_l2 = dvh_l2 = 0.0
    if not coord_state.masked:
        h = coord_state.vprime_minus_1
        g_inf = float(np.max(np.abs(coord_state.g)))
        h_l2 = _l2_y(grid, h)
        dh = row_profile(grid, 1j * grid.eta * profile_row(grid, h))
        dvh_l2 = _l2_y(grid, dh / (1.0 + h))

    ck_w = bhc = arh = None
    if expensive:
        dtw = dtw_grid(K, eta_c, t, ctx)
        with np.errstate(divide='ignore'):
            ck_w = weighted_norm_sq(shifted, log_a + 0.5 * np.log(dtw))
        log_ar = log_multiplier_grid(MultiplierKind.AR, np.zeros(grid.n_v), grid.eta, t, ctx)
        if coord_state.masked:
            bhc = arh = 0.0
        else:
            smoothing = -0.5 * ctx.s * np.log1p(grid.eta ** 2)
            bhc = t ** (2.0 + 2.0 * ctx.s) * _profile_norm_sq(grid, coord_state.hbar, log_ar + smoothing)
            arh = _profile_norm_sq(grid, coord_state.vprime_minus_1, log_ar)

    return DiagnosticsRecord(
        t=t,
        l2_total=_row_norm(f, slice(None)),
        l2_zero_mode=_row_norm(f, 0),
        l2_nonzero=_row_norm(shifted, nonzero),
        gevrey_A_sq=weighted_norm_sq(shifted, log_a),
        gevrey_Anu_sq=weighted_norm_sq(shifted, log_anu),
        ck_lambda=_ck_term(shifted, log_a, rate, K, eta_c, ctx.s),
        ck_lambda_nu=_ck_term(shifted, log_anu, rate, K, eta_c, ctx.s),
        ux_nonzero=_row_norm(u_x, nonzero),
        uy=_row_norm(u_y, slice(None)),
        psi_nonzero_gevrey=math.exp(0.5 * psi_log) if np.isfinite(psi_log) else 0.0,
        g_inf=g_inf,
        h_l2=h_l2,
        dvh_l2=dvh_l2,
        remap_losses=float(sim_state.remap_loss),
        ux_zero=_row_norm(u_x, 0),
        ck_w=ck_w,
        bhc=bhc,
        arh=arh,
    )


class ModeHistory(NamedTuple):
    """
    Per-step norms ||P_k f|| and transfers 2 Re <P_k f, P_k N(f)> for k = 0..k_watch,
    and for each k the frequencies (frame of t = 0) seeded in row k at the start.
    """
    times: np.ndarray
    norms: np.ndarray
    transfer: np.ndarray
    seeded: Tuple[np.ndarray, ...] = ()


# Coefficients below this fraction of their row maximum do not count as seeded
SEED_THRESHOLD = 1e-3


def seeded_frequencies(state: SimState, k: int) -> np.ndarray:
    """Frequencies eta (frame of t = 0) occupied in row k, largest coefficient first"""
    f = state.f_hat
    grid = f.grid
    row = np.abs(f.coeffs[k % grid.n_z])
    peak = float(np.max(row, initial=0.0))
    if peak == 0.0:
        return np.zeros(0)
    eta = couette_frame_eta(state)[k % grid.n_z]
    occupied = np.flatnonzero(row >= SEED_THRESHOLD * peak)
    occupied = occupied[np.argsort(-row[occupied], kind='stable')]
    return eta[occupied]


class TrajectoryRecorder:
    """
    Recorder for solver.run: tracks Phi every step, keeps the per-mode history
    for |k| <= k_watch and builds a DiagnosticsRecord on every record() call.
    """

    def __init__(self, ctx: WeightContext, k_watch: int = 2, expensive: bool = False, nonlinear: bool = True):
        self.ctx = ctx
        self.k_watch = int(k_watch)
        self.expensive = expensive
        self.nonlinear = nonlinear
        self.coordinates = CoordinateTracker(ctx.nu)
        self.coord_states: List[CoordState] = []
        self._times: List[float] = []
        self._norms: List[np.ndarray] = []
        self._transfer: List[np.ndarray] = []
        self._seeded: Tuple[np.ndarray, ...] = ()

    def _rows(self, grid: Grid, k: int) -> np.ndarray:
        return np.array(sorted({k % grid.n_z, (-k) % grid.n_z}))

    def observe(self, state: SimState, dt: float):
        self.coordinates.observe(state, dt)
        f = state.f_hat
        grid = f.grid
        if not self._times:
            self._seeded = tuple(seeded_frequencies(state, k) for k in range(self.k_watch + 1))
        weight = grid.eta_spacing
        forcing = nonlinear_rhs(f, frame_time(state)).coeffs if self.nonlinear else None
        norms = np.zeros(self.k_watch + 1)
        transfer = np.zeros(self.k_watch + 1)
        for k in range(self.k_watch + 1):
            rows = self._rows(grid, k)
            norms[k] = math.sqrt(weight * float(np.sum(np.abs(f.coeffs[rows]) ** 2)))
            if forcing is not None:
                transfer[k] = 2.0 * weight * float(np.real(np.sum(np.conj(f.coeffs[rows]) * forcing[rows])))
        self._times.append(state.t)
        self._norms.append(norms)
        self._transfer.append(transfer)

    def record(self, state: SimState) -> DiagnosticsRecord:
        coord = self.coordinates.current
        self.coord_states.append(coord)
        return record(state, coord, self.ctx, expensive=self.expensive)

    def mode_history(self) -> ModeHistory:
        width = self.k_watch + 1
        return ModeHistory(np.array(self._times),
                           np.array(self._norms).reshape(-1, width),
                           np.array(self._transfer).reshape(-1, width),
                           self._seeded)


class Burst(NamedTuple):
    """
    A burst on mode k at t_burst, paired with the seeded frequency eta_estimate
    whose critical time t_critical = eta/k lies nearest. critical_k is the k of
    the critical interval of eta_estimate holding t_burst (None outside all of
    them); signal is 'amplitude' or 'transfer'.
    """
    t_burst: float
    k: int
    eta_estimate: float
    t_critical: float
    prominence: float
    critical_k: Optional[int] = None
    signal: str = 'amplitude'


def pair_critical_time(t_burst: float, k: int, seeded: np.ndarray) -> Tuple[float, float, Optional[int]]:
    """
    (eta, eta/k, interval k) for the seeded frequency whose critical time is
    nearest t_burst. Without a seeded frequency ahead of its critical time the
    burst is paired with eta = k t_burst.
    """
    candidates = np.asarray(seeded, dtype=float)
    candidates = candidates[candidates * k > 0]
    if candidates.size:
        eta = float(candidates[np.argmin(np.abs(candidates / k - t_burst))])
    else:
        eta = k * t_burst
    interval = critical_times(eta).interval_for(t_burst)
    return eta, eta / k, interval.k if interval is not None else None


def _spikes(times: np.ndarray, signal: np.ndarray, prominence: float, window: float,
            relative_floor: float) -> List[Tuple[int, float]]:
    """
    Local maxima of a nonnegative series whose prominence exceeds prominence
    times the median of the series over the surrounding window (in time units).
    """
    peak = float(np.max(signal, initial=0.0))
    if peak == 0.0 or not math.isfinite(prominence) or signal.size < 3:
        return []
    step = float(np.median(np.diff(times)))
    size = max(3, int(round(window / step)) | 1) if step > 0 else signal.size
    local = median_filter(signal, size=min(size, 2 * signal.size - 1), mode='nearest')
    indices, properties = find_peaks(signal, prominence=relative_floor * peak)
    return [(int(i), float(p)) for i, p in zip(indices, properties['prominences'])
            if p > prominence * local[i]]


def echo_scan(history: ModeHistory, k_watch: int, prominence: float = 3.0, window: float = 10.0,
              relative_floor: float = 1e-6, transfer: bool = False) -> List[Burst]:
    """
    Echo bursts on the watched modes 1 <= k <= k_watch.

    A burst is a local maximum in the rate of change |d/dt ||P_k f||| of the
    mode amplitude whose prominence exceeds prominence times the local median
    of the rate over window time units (and relative_floor times its maximum).
    The time of the burst is that of the amplitude maximum nearest the rate
    spike, or of the spike itself when the amplitude is monotone there. Each
    burst is paired with the nearest critical time eta/k of the frequencies
    seeded in row k. A linear trajectory keeps every amplitude constant or
    decaying smoothly and has no bursts.

    With transfer, the nonlinear transfer |2 Re <P_k f, P_k N(f)>| is scanned
    the same way and its spikes are added with signal 'transfer'.
    """
    times = np.asarray(history.times, dtype=float)
    keep = np.concatenate(([True], np.diff(times) > 0)) if times.size else np.zeros(0, dtype=bool)
    times = times[keep]
    bursts = []
    watched = min(int(k_watch), history.norms.shape[1] - 1) if times.size >= 3 else 0
    for k in range(1, watched + 1):
        seeded = history.seeded[k] if k < len(history.seeded) else np.zeros(0)
        amplitude = history.norms[keep, k]
        rate = np.abs(np.gradient(amplitude, times))
        maxima, _ = find_peaks(amplitude, prominence=relative_floor * float(np.max(amplitude, initial=0.0)))
        for index, value in _spikes(times, rate, prominence, window, relative_floor):
            t_burst = float(times[index])
            if maxima.size:
                nearest = int(maxima[np.argmin(np.abs(times[maxima] - t_burst))])
                if abs(times[nearest] - t_burst) <= 0.5 * window:
                    t_burst = float(times[nearest])
            eta, t_critical, critical_k = pair_critical_time(t_burst, k, seeded)
            bursts.append(Burst(t_burst, k, eta, t_critical, value, critical_k))
        if transfer:
            signal = np.abs(history.transfer[keep, k])
            for index, value in _spikes(times, signal, prominence, window, relative_floor):
                t_burst = float(times[index])
                eta, t_critical, critical_k = pair_critical_time(t_burst, k, seeded)
                bursts.append(Burst(t_burst, k, eta, t_critical, value, critical_k, 'transfer'))
    strongest = {}
    for burst in bursts:
        key = (burst.t_burst, burst.k, burst.signal)
        if key not in strongest or burst.prominence > strongest[key].prominence:
            strongest[key] = burst
    bursts = sorted(strongest.values(), key=lambda b: (b.t_burst, b.k, b.signal))
    logger.info("echo scan found %d bursts", len(bursts))
    return bursts


class BootstrapEntry(NamedTuple):
    quantity: str
    power: int
    max_ratio: float
    initial: float
    max_growth: Optional[float]
    passed: bool


# quantity -> power of epsilon it scales with
BOOTSTRAP_QUANTITIES = {
    'gevrey_A_sq': 2,
    'gevrey_Anu_sq': 2,
    'ux_zero': 1,
    'g_inf': 1,
    'h_l2': 1,
    'bhc': 2,
    'arh': 2,
}


def bootstrap_report(records: Sequence[DiagnosticsRecord], epsilon: float,
                     growth_factor: float = 8.0) -> Dict[str, BootstrapEntry]:
    """
    max_t quantity/epsilon^p per monitored quantity, flagged when it grows past
    growth_factor times its initial value. Quantities that start at zero (the
    masked coordinate fields) are not growth-checked.
    """
    report = {}
    for name, power in BOOTSTRAP_QUANTITIES.items():
        values = np.array([getattr(r, name) for r in records if getattr(r, name) is not None], dtype=float)
        if values.size == 0:
            continue
        scale = epsilon ** power
        max_ratio = float(values.max() / scale) if scale > 0 else 0.0
        initial = float(values[0])
        growth = float(values.max() / initial) if initial > 0 else None
        passed = growth is None or growth <= growth_factor
        if not passed:
            logger.warning("bootstrap monitor %s grew by %.3g > %.3g", name, growth, growth_factor)
        report[name] = BootstrapEntry(name, power, max_ratio, initial, growth, passed)
    return report


def epsilon_scaling(report_a: Dict[str, BootstrapEntry], report_b: Dict[str, BootstrapEntry],
                    tolerance: float = 0.25) -> Dict[str, Dict]:
    """
    Compares the epsilon-normalised maxima of two runs at different epsilon.
    A quantity scales as its power of epsilon when the ratios agree within tolerance.
    """
    comparison = {}
    for name in sorted(set(report_a) & set(report_b)):
        a = report_a[name].max_ratio
        b = report_b[name].max_ratio
        if a == 0.0 and b == 0.0:
            comparison[name] = {'relative_change': 0.0, 'passed': True}
            continue
        change = abs(a - b) / max(abs(a), abs(b))
        comparison[name] = {'relative_change': change, 'passed': change <= tolerance}
    return comparison


def onset_time(records: Sequence[DiagnosticsRecord], baseline: Sequence[DiagnosticsRecord]) -> float:
    """
    First t with l2_nonzero(t) <= l2_nonzero_baseline(t)/e, the baseline being
    a matched nu = 0 run interpolated to the record times; nan if never reached.
    """
    if not records or not baseline:
        return math.nan
    base_t = np.array([r.t for r in baseline])
    base_values = np.array([r.l2_nonzero for r in baseline])
    for r in records:
        if r.t > base_t[-1]:
            break
        reference = float(np.interp(r.t, base_t, base_values))
        if reference > 0 and r.l2_nonzero <= reference / math.e:
            return float(r.t)
    return math.nan


def fit_onset_scaling(nus: Sequence[float], onsets: Sequence[float]) -> PowerLawFit:
    """T* ~ nu^p over the finite onsets; insufficient below three points"""
    return fit_power_law(nus, onsets, min_points=3)


def decay_model_fits(records: Sequence[DiagnosticsRecord], window: Tuple[float, float],
                     nu: float) -> Dict[str, Optional[DecayFit]]:
    """
    Decay-law fits of a record stream: <t>^p for ux_nonzero and uy over the
    window, <nu t^3>^-alpha for l2_nonzero and <nu t>^p for l2_zero_mode when
    nu > 0 (the latter over the records with nu t >= 1).
    """
    times = np.array([r.t for r in records])
    series = {name: np.array([getattr(r, name) for r in records])
              for name in ('ux_nonzero', 'uy', 'l2_nonzero', 'l2_zero_mode')}
    fits = {
        'ux_nonzero': optional_fit(times, series['ux_nonzero'], DecayModel(DecayKind.POWER, window)),
        'uy': optional_fit(times, series['uy'], DecayModel(DecayKind.POWER, window)),
        'l2_nonzero': None,
        'l2_zero_mode': None,
    }
    if nu > 0 and times.size:
        fits['l2_nonzero'] = optional_fit(times, series['l2_nonzero'],
                                          DecayModel(DecayKind.POLY_NU_T_CUBED, (times.min(), times.max()), nu))
        late = times[nu * times >= 1.0]
        if late.size:
            fits['l2_zero_mode'] = optional_fit(times, series['l2_zero_mode'],
                                                DecayModel(DecayKind.QUARTER_HEAT, (late.min(), late.max()), nu))
    return fits
