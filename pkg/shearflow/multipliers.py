"""
Critical times and the w / J / A / A^nu / D weight machinery.

All exponentials are handled as logarithms; multiplier_eval exponentiates
at the very end and reports the frequency if the value leaves double range.
"""
import bisect
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .exceptions import ConfigurationError, FitError, GevreyOverflowError
from .fits import japanese

logger = logging.getLogger(__name__)

# Frequencies below this use the tables of |eta| = 10
ETA_FLOOR = 10.0


class MultiplierKind(str, Enum):
    WNR = 'wNR'
    WR = 'wR'
    W = 'w'
    J = 'J'
    JR = 'JR'
    JTILDE = 'Jtilde'
    A = 'A'
    AR = 'AR'
    AS = 'AS'
    ATILDE = 'Atilde'
    D = 'D'
    ANU = 'Anu'


# Kinds that depend on eta only; k is ignored for them
ETA_ONLY_KINDS = frozenset({MultiplierKind.WNR, MultiplierKind.WR, MultiplierKind.JR,
                            MultiplierKind.AR, MultiplierKind.AS, MultiplierKind.D})


class CriticalInterval(NamedTuple):
    k: int
    t_k: float
    start: float
    end: float
    resonant: bool


class CriticalTimeTable(NamedTuple):
    """Critical times t_{k,eta} and intervals I_{k,eta} = [t_k, t_{k-1}] of one frequency"""
    eta: float
    t0: float
    entries: Tuple[CriticalInterval, ...]

    def interval_for(self, t: float) -> Optional[CriticalInterval]:
        for entry in self.entries:
            if entry.start <= t < entry.end:
                return entry
        return None


def _floor_sqrt(value: float) -> int:
    root = int(math.floor(math.sqrt(value)))
    while (root + 1) ** 2 <= value:
        root += 1
    while root > 0 and root ** 2 > value:
        root -= 1
    return root


def critical_time(k: int, eta: float) -> float:
    """t_{k,eta} = |eta/k| - |eta|/(2|k|(|k|+1)); t_{0,eta} = 2|eta|"""
    a = abs(eta)
    if k == 0:
        return 2.0 * a
    k = abs(k)
    return a / k - a / (2.0 * k * (k + 1))


def critical_times(eta: float) -> CriticalTimeTable:
    """
    Critical-time table for frequency eta.

    Entries exist for k = 1..E(sqrt|eta|); the table is empty for |eta| < 1.
    An interval is resonant when 2 sqrt|eta| <= t_{k,eta}.
    """
    a = abs(float(eta))
    t0 = 2.0 * a
    if a < 1.0:
        return CriticalTimeTable(float(eta), t0, ())
    entries = []
    previous = t0
    for k in range(1, _floor_sqrt(a) + 1):
        t_k = critical_time(k, a)
        entries.append(CriticalInterval(k, t_k, t_k, previous, 2.0 * math.sqrt(a) <= t_k))
        previous = t_k
    return CriticalTimeTable(float(eta), t0, tuple(entries))


def validate_weight_parameters(params: Dict) -> Dict:
    """
    Checks the WeightContext invariants.

    Args:
        params: mapping with the WeightContext field names

    Returns:
        Dict: {'valid': bool, 'error': str, 'rule': str}
    """
    p = params
    checks = [
        (0.0 < p['kappa'] < 0.5, 'κ ∈ (0, 1/2)', f"kappa={p['kappa']}"),
        (p['c_kappa_exponent'] > 0.0, 'Cκ > 0', f"c_kappa_exponent={p['c_kappa_exponent']}"),
        (p['mu'] > 0.0, 'μ > 0', f"mu={p['mu']}"),
        (0.5 < p['s'] < 1.0, 's ∈ (1/2, 1)', f"s={p['s']}"),
        (p['lambda0'] > p['lambda_prime'] > 0.0, 'λ > λ′ > 0',
         f"lambda0={p['lambda0']}, lambda_prime={p['lambda_prime']}"),
        (p['delta_lambda'] >= 0.0, 'δ_λ ≥ 0', f"delta_lambda={p['delta_lambda']}"),
        (0.5 < p['q_tilde'] < p['s'] / 8.0 + 7.0 / 16.0, 'q̃ ∈ (1/2, s/8 + 7/16)',
         f"q_tilde={p['q_tilde']} with s={p['s']}"),
        (p['alpha'] > 0.0, 'α > 0', f"alpha={p['alpha']}"),
        (p['beta'] + 3.0 * p['alpha'] + 8.0 < p['sigma'], 'β + 3α + 8 < σ',
         f"beta + 3*alpha + 8 = {p['beta'] + 3.0 * p['alpha'] + 8.0:g} is not below sigma = {p['sigma']:g}"),
        (p['beta'] > 3.0 * p['alpha'] + 2.0, 'β > 3α + 2',
         f"beta = {p['beta']:g} is not above 3*alpha + 2 = {3.0 * p['alpha'] + 2.0:g}"),
        (p['nu'] >= 0.0, 'ν ≥ 0', f"nu={p['nu']}"),
        (p['c0'] > 0.0, 'C₀ > 0', f"c0={p['c0']}"),
    ]
    for ok, rule, detail in checks:
        if not ok:
            return {'valid': False, 'error': f"{rule} violated: {detail}", 'rule': rule}

    lam_inf = _lambda_limit(p)
    midpoint = 0.5 * (p['lambda0'] + p['lambda_prime'])
    if not lam_inf > midpoint:
        return {'valid': False,
                'error': f"λ(∞) > (λ + λ′)/2 violated: lambda(inf) = {lam_inf:.6g} <= {midpoint:.6g}; "
                         f"reduce delta_lambda",
                'rule': 'λ(∞) > (λ + λ′)/2'}
    return {'valid': True, 'error': '', 'rule': ''}


@dataclass(frozen=True)
class WeightContext:
    """Parameters of the weight machinery. Immutable; validated on construction."""
    kappa: float = 0.25
    c_kappa_exponent: float = 0.5
    mu: float = 1.0
    s: float = 0.6
    lambda0: float = 1.0
    lambda_prime: float = 0.5
    delta_lambda: float = 1e-3
    q_tilde: float = 0.51
    sigma: float = 18.0
    beta: float = 6.0
    alpha: float = 1.0
    nu: float = 1e-3
    c0: float = 10.0

    def __post_init__(self):
        validation = validate_weight_parameters(asdict(self))
        if not validation['valid']:
            raise ConfigurationError(validation['error'], rule=validation['rule'])

    def as_dict(self) -> Dict:
        return asdict(self)


# λ(t) schedule

def _bracket_integral(t: float, q: float) -> float:
    """integral_0^t (1 + tau^2)^(-q) dtau = B(t^2/(1+t^2); 1/2, q - 1/2)/2"""
    if t <= 0.0:
        return 0.0
    x = 1.0 if math.isinf(t) else t * t / (1.0 + t * t)
    return 0.5 * float(beta_fn(0.5, q - 0.5) * betainc(0.5, q - 0.5, x))


def _lambda_short(p) -> float:
    return 0.75 * p['lambda0'] + 0.25 * p['lambda_prime']


def _switch_time(p) -> float:
    return min((p['lambda0'] - p['lambda_prime']) / p['c0'], 1.0)


def _lambda_at(p, t: float) -> float:
    lam_short = _lambda_short(p)
    switch = _switch_time(p)
    if t <= switch or p['delta_lambda'] == 0.0:
        return lam_short
    decay = p['delta_lambda'] * (_bracket_integral(t, p['q_tilde']) - _bracket_integral(switch, p['q_tilde']))
    return (1.0 + lam_short) * math.exp(-decay) - 1.0


def _lambda_limit(p) -> float:
    return _lambda_at(p, math.inf)


def lambda_switch_time(ctx: WeightContext) -> float:
    """T = min((lambda - lambda')/C0, 1)"""
    return _switch_time(asdict(ctx))


def lambda_schedule(t: float, ctx: WeightContext) -> float:
    """
    Radius lambda(t).

    Constant 3/4 lambda + 1/4 lambda' up to T, then the closed-form solution of
    d/dt lambda = -delta (1 + lambda)/<t>^{2 q}, i.e.
    log(1 + lambda) drops by delta * integral_T^t <tau>^{-2q} dtau.
    """
    return _lambda_at(asdict(ctx), t)


def lambda_limit(ctx: WeightContext) -> float:
    return _lambda_limit(asdict(ctx))


def lambda_rate(t: float, ctx: WeightContext) -> float:
    """d/dt lambda(t); zero before the switch time"""
    if t <= lambda_switch_time(ctx) or ctx.delta_lambda == 0.0:
        return 0.0
    return -ctx.delta_lambda * (1.0 + lambda_schedule(t, ctx)) / (1.0 + t * t) ** ctx.q_tilde


# w tables

class _WTable(NamedTuple):
    eta: float
    top: int
    times: Tuple[float, ...]
    neg_times: Tuple[float, ...]
    log_w_end: Tuple[float, ...]
    log_w_center: Tuple[float, ...]
    a: Tuple[float, ...]
    b: Tuple[float, ...]


@lru_cache(maxsize=16384)
def _w_table(eta: float, c: float) -> _WTable:
    """
    Endpoint values of w_NR for eta >= 1 and exponent c.

    log_w_end[k] = log w_NR(t_k), log_w_center[k] = log w_NR(eta/k).
    """
    top = _floor_sqrt(eta)
    times = [2.0 * eta] + [critical_time(k, eta) for k in range(1, top + 1)]
    log_w_end = [0.0]
    log_w_center = [0.0]
    a_coef = [0.0]
    b_coef = [0.0]
    for k in range(1, top + 1):
        ratio = k * k / eta
        a_coef.append(2.0 * (k + 1) / k * (1.0 - ratio))
        b_coef.append(1.0 - 1.0 / eta if k == 1 else 2.0 * (k - 1) / k * (1.0 - ratio))
        # right half: ((k^2/eta)[1 + b|t - eta/k|])^c w_NR(t_{k-1}); bracket is 1 at t_{k-1}
        log_w_center.append(c * math.log(ratio) + log_w_end[k - 1])
        # left half: (1 + a|t - eta/k|)^{-1-c} w_NR(eta/k); 1 + a(eta/k - t_k) = eta/k^2
        log_w_end.append((1.0 + c) * math.log(ratio) + log_w_center[k])
    return _WTable(eta, top, tuple(times), tuple(-t for t in times), tuple(log_w_end),
                   tuple(log_w_center), tuple(a_coef), tuple(b_coef))


def _locate(table: _WTable, t: float) -> int:
    """j with t_j <= t < t_{j-1}; 0 for t >= 2 eta, top + 1 for t < t_E"""
    if t >= table.times[0]:
        return 0
    if t < table.times[table.top]:
        return table.top + 1
    return bisect.bisect_left(table.neg_times, -t)


def _w_state(table: _WTable, c: float, t: float) -> Tuple[float, float, int]:
    """(log w_NR, log w_R, resonant k) at time t; k = 0 outside the critical intervals"""
    j = _locate(table, t)
    if j == 0:
        return 0.0, 0.0, 0
    if j > table.top:
        frozen = table.log_w_end[table.top]
        return frozen, frozen, 0
    eta = table.eta
    center = eta / j
    ratio = j * j / eta
    if t >= center:
        bracket = 1.0 + table.b[j] * (t - center)
        log_nr = table.log_w_end[j - 1] + c * math.log(ratio * bracket)
        log_factor = math.log(ratio * bracket)
    else:
        bracket = 1.0 + table.a[j] * (center - t)
        log_nr = table.log_w_center[j] - (1.0 + c) * math.log(bracket)
        log_factor = math.log(ratio * bracket)
    return log_nr, log_nr + log_factor, j


def _dtw_state(table: _WTable, c: float, t: float) -> Tuple[float, float, int]:
    """(d log w_NR/dt, d log w_R/dt, resonant k), right derivatives"""
    j = _locate(table, t)
    if j == 0 or j > table.top:
        return 0.0, 0.0, 0
    center = table.eta / j
    if t >= center:
        base = table.b[j] / (1.0 + table.b[j] * (t - center))
        return c * base, (1.0 + c) * base, j
    base = table.a[j] / (1.0 + table.a[j] * (center - t))
    return (1.0 + c) * base, c * base, j


def _reflect(k: int, eta: float) -> Tuple[int, float]:
    if eta < 0:
        return -k, -eta
    return k, eta


def _table_for(eta: float, ctx: WeightContext) -> _WTable:
    return _w_table(max(abs(float(eta)), ETA_FLOOR), float(ctx.c_kappa_exponent))


def log_w(k: int, eta: float, t: float, ctx: WeightContext) -> float:
    """log w_k(t, eta)"""
    k, eta = _reflect(k, eta)
    log_nr, log_r, j = _w_state(_table_for(eta, ctx), ctx.c_kappa_exponent, t)
    return log_r if (j > 0 and k == j) else log_nr


def log_w_nr(eta: float, t: float, ctx: WeightContext) -> float:
    return _w_state(_table_for(eta, ctx), ctx.c_kappa_exponent, t)[0]


def log_w_r(eta: float, t: float, ctx: WeightContext) -> float:
    return _w_state(_table_for(eta, ctx), ctx.c_kappa_exponent, t)[1]


def w_eval(k: int, eta: float, t: float, ctx: WeightContext) -> float:
    """
    The weight w_k(t, eta).

    Frozen at its t_{E(sqrt eta)} value before the first critical time, w_R on
    the interval I_{k,eta} of its own k, w_NR on the other intervals and 1 for
    t >= 2 eta. Negative eta uses w_k(t, eta) = w_{-k}(t, -eta); |eta| < 10
    uses the tables of |eta| = 10.
    """
    return math.exp(log_w(k, eta, t, ctx))


def dtw_ratio(k: int, eta: float, t: float, ctx: WeightContext) -> float:
    """Right derivative of log w_k(t, eta) in t"""
    k, eta = _reflect(k, eta)
    d_nr, d_r, j = _dtw_state(_table_for(eta, ctx), ctx.c_kappa_exponent, t)
    return d_r if (j > 0 and k == j) else d_nr


def _w_grids(K: np.ndarray, ETA: np.ndarray, t: float, ctx: WeightContext,
             state_fn) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluates state_fn once per distinct |eta| and scatters (nr, r, resonant-mask)"""
    K = np.asarray(K, dtype=float)
    ETA = np.asarray(ETA, dtype=float)
    k_reflected = np.where(ETA < 0, -K, K)
    eta_eff = np.maximum(np.abs(ETA), ETA_FLOOR)
    unique, inverse = np.unique(eta_eff, return_inverse=True)
    nr = np.empty(unique.size)
    r = np.empty(unique.size)
    res = np.zeros(unique.size)
    c = float(ctx.c_kappa_exponent)
    for i, value in enumerate(unique):
        nr[i], r[i], res[i] = state_fn(_w_table(float(value), c), c, t)
    inverse = inverse.reshape(eta_eff.shape)
    res_k = res[inverse]
    resonant = (res_k > 0) & (k_reflected == res_k)
    return nr[inverse], r[inverse], resonant


def log_w_grid(K, ETA, t: float, ctx: WeightContext) -> np.ndarray:
    """log w_k(t, eta) over a lattice"""
    nr, r, resonant = _w_grids(K, ETA, t, ctx, _w_state)
    return np.where(resonant, r, nr)


def dtw_grid(K, ETA, t: float, ctx: WeightContext) -> np.ndarray:
    """dtw_ratio over a lattice"""
    nr, r, resonant = _w_grids(K, ETA, t, ctx, _dtw_state)
    return np.where(resonant, r, nr)


def d_value(t: float, eta, ctx: WeightContext):
    """D(t, eta) = nu|eta|^3/(3 alpha) + nu (t^3 - 8|eta|^3)_+/(24 alpha)"""
    cube = np.abs(eta) ** 3
    return ctx.nu * cube / (3.0 * ctx.alpha) + ctx.nu * np.maximum(t ** 3 - 8.0 * cube, 0.0) / (24.0 * ctx.alpha)


def log_multiplier_grid(kind, K, ETA, t: float, ctx: WeightContext) -> np.ndarray:
    """
    Logarithm of a multiplier over a lattice of (k, eta).

    Args:
        kind: MultiplierKind or its string value
        K, ETA: broadcastable wavenumber arrays
        t: time
        ctx: weight parameters

    Returns:
        np.ndarray: log values; -inf where the multiplier vanishes
    """
    kind = MultiplierKind(kind)
    K, ETA = np.broadcast_arrays(np.asarray(K, dtype=float), np.asarray(ETA, dtype=float))
    abs_k = np.abs(K)
    abs_eta = np.abs(ETA)

    if kind == MultiplierKind.D:
        with np.errstate(divide='ignore'):
            return np.log(d_value(t, ETA, ctx))

    lam = lambda_schedule(t, ctx)
    gevrey = lam * (abs_k + abs_eta) ** ctx.s
    gevrey_eta = lam * abs_eta ** ctx.s
    bracket = 0.5 * np.log1p(K ** 2 + ETA ** 2)
    bracket_eta = 0.5 * np.log1p(ETA ** 2)
    sqrt_eta = ctx.mu * np.sqrt(abs_eta)

    if kind == MultiplierKind.AS:
        return gevrey_eta + (ctx.sigma - 6.0) * bracket_eta
    if kind == MultiplierKind.ANU:
        d = d_value(t, ETA, ctx)
        value = gevrey + ctx.beta * bracket + 0.5 * ctx.alpha * np.log1p(d ** 2)
        return np.where(K == 0, -np.inf, value)

    if kind in (MultiplierKind.WNR, MultiplierKind.WR, MultiplierKind.JR, MultiplierKind.AR):
        nr, r, _ = _w_grids(np.zeros_like(ETA), ETA, t, ctx, _w_state)
        if kind == MultiplierKind.WNR:
            return nr
        if kind == MultiplierKind.WR:
            return r
        log_jr = np.logaddexp(sqrt_eta - r, 0.0)
        if kind == MultiplierKind.JR:
            return log_jr
        return gevrey_eta + ctx.sigma * bracket_eta + log_jr

    lw = log_w_grid(K, ETA, t, ctx)
    if kind == MultiplierKind.W:
        return lw
    log_jtilde = sqrt_eta - lw
    if kind == MultiplierKind.JTILDE:
        return log_jtilde
    if kind == MultiplierKind.ATILDE:
        return gevrey + ctx.sigma * bracket + log_jtilde
    log_j = np.logaddexp(log_jtilde, ctx.mu * np.sqrt(abs_k))
    if kind == MultiplierKind.J:
        return log_j
    return gevrey + ctx.sigma * bracket + log_j


def log_multiplier(kind, k: float, eta: float, t: float, ctx: WeightContext) -> float:
    return float(log_multiplier_grid(kind, np.array([[k]]), np.array([[eta]]), t, ctx)[0, 0])


def multiplier_eval(kind, k: float, eta: float, t: float, ctx: WeightContext) -> float:
    """
    Value of one multiplier at (k, eta, t).

    D, JR, AR, AS, wNR and wR ignore k. Anu is 0 at k = 0.

    Raises:
        GevreyOverflowError: if the value exceeds double range
    """
    kind = MultiplierKind(kind)
    if kind == MultiplierKind.D:
        return float(d_value(t, eta, ctx))
    value = log_multiplier(kind, k, eta, t, ctx)
    if value > math.log(np.finfo(np.float64).max):
        raise GevreyOverflowError(f"multiplier {kind.value} overflows", (float(k), float(eta)))
    return math.exp(value)


def multiplier_table(kind, ks: Iterable[float], etas: Iterable[float], ts: Iterable[float],
                     ctx: WeightContext) -> List[Tuple[float, float, float, float]]:
    """Rows (k, eta, t, value) over the product of the given samples"""
    kind = MultiplierKind(kind)
    ks = [0.0] if kind in ETA_ONLY_KINDS else list(ks)
    etas = list(etas)
    rows = []
    for t in ts:
        K, ETA = np.meshgrid(np.asarray(ks, dtype=float), np.asarray(etas, dtype=float), indexing='ij')
        if kind == MultiplierKind.D:
            values = np.broadcast_to(d_value(t, ETA, ctx), K.shape)
        else:
            values = np.exp(log_multiplier_grid(kind, K, ETA, t, ctx))
        for i, k in enumerate(ks):
            for j, eta in enumerate(etas):
                rows.append((float(k), float(eta), float(t), float(values[i, j])))
    return rows


class GrowthFit(NamedTuple):
    """Fit of log(1/w(0, eta)) = a sqrt(eta) + b log(eta) + c"""
    mu_fit: float
    r_squared: float
    sqrt_slope: float
    log_coefficient: float
    intercept: float
    mu_construction: float


def growth_fit(eta_samples: Sequence[float], ctx: WeightContext) -> GrowthFit:
    """
    Least-squares fit of the initial weight loss against sqrt(eta) and log(eta).

    Args:
        eta_samples: at least three distinct frequencies >= 100 spanning two decades
        ctx: weight parameters

    Returns:
        GrowthFit: twice the sqrt(eta) slope as the mu estimate, the fit quality,
        and the value 4(1 + 2 C kappa) that the construction implies

    Raises:
        FitError: on invalid samples or r^2 < 0.9
    """
    eta = np.asarray(list(eta_samples), dtype=float)
    if eta.size < 3:
        raise FitError(f"growth fit needs at least 3 samples, got {eta.size}")
    if np.unique(eta).size != eta.size:
        raise FitError("growth fit is ill-conditioned: repeated eta samples")
    if eta.min() < 100.0:
        raise FitError(f"growth fit samples must be >= 100, got {eta.min():g}")
    if eta.max() / eta.min() < 100.0:
        raise FitError("growth fit samples must span at least two decades")

    y = np.array([-log_w(0, e, 0.0, ctx) for e in eta])
    design = np.column_stack([np.sqrt(eta), np.log(eta), np.ones_like(eta)])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 3:
        raise FitError("growth fit is ill-conditioned: rank-deficient design")
    residual = y - design @ coef
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual ** 2)) / total if total > 0 else 0.0
    if r_squared < 0.9:
        raise FitError(f"growth fit is ill-conditioned: r^2 = {r_squared:.4f} < 0.9")
    return GrowthFit(2.0 * float(coef[0]), r_squared, float(coef[0]), float(coef[1]), float(coef[2]),
                     4.0 * (1.0 + 2.0 * ctx.c_kappa_exponent))


# Property suite

def check_tiling(etas: Iterable[float], tol: float = 1e-12) -> bool:
    """Critical intervals tile [t_E, 2 eta] with matching endpoints and decreasing t_k"""
    for eta in etas:
        table = critical_times(eta)
        if not table.entries:
            continue
        if abs(table.entries[0].end - table.t0) > tol * table.t0:
            return False
        for before, after in zip(table.entries, table.entries[1:]):
            if not after.t_k < before.t_k:
                return False
            if abs(after.end - before.start) > tol * max(1.0, before.start):
                return False
    return True


def _sample_times(eta: float, n: int) -> np.ndarray:
    top = 2.0 * max(abs(eta), ETA_FLOOR)
    return np.linspace(0.0, top * 1.05, n)


def check_w_unity(ctx: WeightContext, rng: np.random.Generator, n: int = 2000) -> bool:
    """w_k(t, eta) = 1 once t >= 2 max(|eta|, 10)"""
    ks = rng.integers(-20, 21, size=n)
    etas = rng.uniform(-2000.0, 2000.0, size=n)
    ts = 2.0 * np.maximum(np.abs(etas), ETA_FLOOR) + rng.exponential(10.0, size=n)
    return all(log_w(int(k), float(e), float(t), ctx) == 0.0 for k, e, t in zip(ks, etas, ts))


def check_w_nr_monotone(ctx: WeightContext, etas: Iterable[float], n: int = 4000) -> bool:
    for eta in etas:
        values = np.array([log_w_nr(eta, float(t), ctx) for t in _sample_times(eta, n)])
        if np.any(np.diff(values) < -1e-12):
            return False
    return True


def check_w_lipschitz(ctx: WeightContext, etas: Iterable[float], n: int = 4000) -> bool:
    """Finite-difference slopes of w_k stay within the sampled analytic derivative bound"""
    for eta in etas:
        for k in (1, 2):
            ts = _sample_times(eta, n)
            w = np.array([w_eval(k, eta, float(t), ctx) for t in ts])
            dw = np.array([dtw_ratio(k, eta, float(t), ctx) for t in ts]) * w
            slopes = np.abs(np.diff(w)) / np.diff(ts)
            if not np.all(np.isfinite(slopes)):
                return False
            if slopes.max() > 1.5 * np.abs(dw).max() + 1e-12:
                return False
    return True


def _sampling_nu(ctx: WeightContext) -> float:
    return ctx.nu if ctx.nu > 0 else 1e-3


def check_d_lower_bounds(ctx: WeightContext, rng: np.random.Generator, n: int,
                         extent: float = 100.0) -> bool:
    """nu|eta|^3 <= 3 alpha D and nu t^3 <= 24 alpha D, with equality at t = 2|eta|"""
    sampled = WeightContext(**{**ctx.as_dict(), 'nu': _sampling_nu(ctx)})
    ts = rng.uniform(0.0, 4.0 * extent, size=n)
    etas = rng.uniform(-extent, extent, size=n)
    d = d_value(ts, etas, sampled)
    slack = 1.0 + 1e-12
    lower_eta = sampled.nu * np.abs(etas) ** 3 <= 3.0 * sampled.alpha * d * slack
    lower_t = sampled.nu * ts ** 3 <= 24.0 * sampled.alpha * d * slack
    at_kink = 2.0 * np.abs(etas)
    equality = np.isclose(sampled.nu * at_kink ** 3, 24.0 * sampled.alpha * d_value(at_kink, etas, sampled),
                          rtol=1e-12, atol=0.0)
    return bool(lower_eta.all() and lower_t.all() and equality.all())


def check_anu_decay_bound(ctx: WeightContext, rng: np.random.Generator, n: int,
                          extent: float = 100.0) -> bool:
    """<nu t^3>^alpha <= (24 alpha)^alpha <D>^alpha"""
    sampled = WeightContext(**{**ctx.as_dict(), 'nu': _sampling_nu(ctx)})
    ts = rng.uniform(0.0, 4.0 * extent, size=n)
    etas = rng.uniform(-extent, extent, size=n)
    lhs = 0.5 * sampled.alpha * np.log1p((sampled.nu * ts ** 3) ** 2)
    rhs = sampled.alpha * math.log(24.0 * sampled.alpha) + 0.5 * sampled.alpha * np.log1p(d_value(ts, etas, sampled) ** 2)
    return bool(np.all(lhs <= rhs + 1e-12))


def fit_d_ratio_constant(ctx: WeightContext, rng: np.random.Generator, n: int,
                         extent: float = 100.0) -> Tuple[float, float]:
    """Sup of <D(t,eta)>/(<D(t,xi)><eta - xi>^3) over n/10 and over n samples"""
    sampled = WeightContext(**{**ctx.as_dict(), 'nu': _sampling_nu(ctx)})
    ts = rng.uniform(0.0, 4.0 * extent, size=n)
    etas = rng.uniform(-extent, extent, size=n)
    xis = rng.uniform(-extent, extent, size=n)
    ratio = japanese(d_value(ts, etas, sampled)) / (japanese(d_value(ts, xis, sampled)) * japanese(etas - xis) ** 3)
    return float(ratio[: max(1, n // 10)].max()), float(ratio.max())


def fit_d_difference_constant(ctx: WeightContext, rng: np.random.Generator, n: int, spread: float = 2.0,
                              extent: float = 100.0) -> Tuple[float, float]:
    """Sup of the difference-estimate ratio on |xi|/K <= |eta| <= K|xi|, over n/10 and n samples"""
    sampled = WeightContext(**{**ctx.as_dict(), 'nu': _sampling_nu(ctx)})
    ts = rng.uniform(0.0, 4.0 * extent, size=n)
    xis = rng.uniform(-extent, extent, size=n)
    factors = np.exp(rng.uniform(-math.log(spread), math.log(spread), size=n))
    signs = rng.choice([-1.0, 1.0], size=n)
    etas = signs * np.abs(xis) * factors
    a = sampled.alpha
    d_eta = japanese(d_value(ts, etas, sampled)) ** a
    d_xi = japanese(d_value(ts, xis, sampled)) ** a
    ratio = np.abs(d_eta - d_xi) * japanese(xis) / (d_xi * japanese(etas - xis) ** (3.0 * a))
    return float(ratio[: max(1, n // 10)].max()), float(ratio.max())


def check_ar_dominates_a0(ctx: WeightContext, rng: np.random.Generator, n: int = 2000) -> bool:
    """A^R(t, eta) >= A(t, 0, eta)"""
    etas = rng.uniform(-3000.0, 3000.0, size=n)
    ts = rng.uniform(0.0, 2.0 * np.maximum(np.abs(etas), ETA_FLOOR) * 1.1)
    for eta, t in zip(etas, ts):
        if log_multiplier(MultiplierKind.AR, 0, eta, t, ctx) < log_multiplier(MultiplierKind.A, 0, eta, t, ctx) - 1e-9:
            return False
    return True


def check_all_properties(ctx: WeightContext, n_samples: int = 10 ** 6, seed: int = 0,
                         stability: float = 0.2) -> Dict:
    """
    Runs the multiplier property suite.

    Args:
        ctx: weight parameters
        n_samples: sample count for the D estimates (the stability check compares n/10 with n)
        seed: seed of the sampling generator
        stability: allowed relative change of the fitted D constants

    Returns:
        Dict: one entry per property plus 'passed' and 'errors'
    """
    rng = np.random.default_rng(seed)
    etas = [1.0, 4.0, 10.0, 37.5, 100.0, 400.0, 1234.5, 10000.0]
    details = {'errors': []}

    details['tiling'] = check_tiling(etas + list(rng.uniform(1.0, 5000.0, size=50)))
    details['w_unity'] = check_w_unity(ctx, rng)
    details['w_nr_monotone'] = check_w_nr_monotone(ctx, [10.0, 100.0, 400.0, 2500.0])
    details['w_lipschitz'] = check_w_lipschitz(ctx, [100.0, 400.0])
    details['d_lower_bounds'] = check_d_lower_bounds(ctx, rng, n_samples)
    details['anu_decay_bound'] = check_anu_decay_bound(ctx, rng, n_samples)

    small, large = fit_d_ratio_constant(ctx, rng, n_samples)
    details['d_ratio_constant'] = large
    details['d_ratio_stable'] = bool(np.isfinite(large) and abs(large - small) <= stability * large)
    small, large = fit_d_difference_constant(ctx, rng, n_samples)
    details['d_difference_constant'] = large
    details['d_difference_stable'] = bool(np.isfinite(large) and abs(large - small) <= stability * large)

    details['ar_dominates_a0'] = check_ar_dominates_a0(ctx, rng)

    try:
        fit = growth_fit(np.geomspace(100.0, 10000.0, 40), ctx)
        details['growth_fit'] = fit._asdict()
        details['growth_fit_ok'] = fit.r_squared > 0.99
    except FitError as e:
        details['growth_fit'] = None
        details['growth_fit_ok'] = False
        details['errors'].append(str(e))

    flags = ['tiling', 'w_unity', 'w_nr_monotone', 'w_lipschitz', 'd_lower_bounds', 'anu_decay_bound',
             'd_ratio_stable', 'd_difference_stable', 'ar_dominates_a0', 'growth_fit_ok']
    for flag in flags:
        if not details[flag]:
            logger.warning("multiplier property failed: %s", flag)
    details['passed'] = all(details[flag] for flag in flags)
    return details
