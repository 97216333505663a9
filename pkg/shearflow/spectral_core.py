"""
Grids, transforms, Littlewood-Paley projections, paraproducts and Gevrey norms.

Fields live on z in [0, 2pi) and y in [-L, L). Coefficients follow the
continuous convention

    f_hat(k, eta) = (1/2pi) * integral of exp(-i z k - i y eta) f(z, y) dz dy

discretised by the rectangle rule, so Parseval reads
integral |f|^2 = (pi/L) * sum |f_hat|^2. Coefficient arrays are stored in
FFT index order; the Nyquist entries carry the positive wavenumbers n/2.
"""
import logging
import math
import struct
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from scipy import fft as sfft
from scipy.special import logsumexp

from .exceptions import ConfigurationError, GevreyOverflowError, GridMismatchError

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b'CSPF'
SNAPSHOT_VERSION = 1
# magic, version, n_z, n_v, L, dealias fraction: 32 bytes
SNAPSHOT_HEADER = struct.Struct('<4sIIIdd')

# Largest exponent whose exp() is finite in double precision
LOG_FLOAT_MAX = math.log(np.finfo(np.float64).max)
# Squared amplitudes more than e^{-1400} below the peak term are dropped
LOG_DROP = 1400.0

AXES = ('v', 'zv')
STYLES = ('inhomogeneous', 'homogeneous')


class Grid(NamedTuple):
    """Truncated (k, eta) lattice of a 2pi x 2L periodic box"""
    n_z: int
    n_v: int
    half_width: float
    dealias_fraction: float = 2.0 / 3.0

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_z, self.n_v)

    @property
    def eta_spacing(self) -> float:
        return math.pi / self.half_width

    @property
    def kz(self) -> np.ndarray:
        return _lattice(self).kz

    @property
    def eta(self) -> np.ndarray:
        return _lattice(self).eta

    @property
    def j_index(self) -> np.ndarray:
        return _lattice(self).j

    @property
    def z(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_z) / self.n_z

    @property
    def y(self) -> np.ndarray:
        return -self.half_width + 2.0 * self.half_width * np.arange(self.n_v) / self.n_v

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(K, ETA) wavenumber arrays of shape (n_z, n_v)"""
        lattice = _lattice(self)
        return lattice.K, lattice.ETA


class GevreyParams(NamedTuple):
    """Radius, Sobolev correction and Gevrey index of a Gevrey-1/s norm"""
    lam: float
    sigma: float = 0.0
    s: float = 0.6


class _Lattice(NamedTuple):
    kz: np.ndarray
    eta: np.ndarray
    j: np.ndarray
    K: np.ndarray
    ETA: np.ndarray
    sign: np.ndarray


def _signed_indices(n: int) -> np.ndarray:
    idx = np.fft.fftfreq(n, d=1.0 / n)
    idx[n // 2] = n // 2
    return idx


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=32)
def _lattice(grid: Grid) -> _Lattice:
    kz = _signed_indices(grid.n_z)
    j = _signed_indices(grid.n_v)
    eta = j * grid.eta_spacing
    K, ETA = np.meshgrid(kz, eta, indexing='ij')
    # y samples start at -L, so exp(-i eta_j y) picks up exp(i j pi) = (-1)^j
    sign = np.where(j.astype(np.int64) % 2 == 0, 1.0, -1.0)
    return _Lattice(*(_readonly(a) for a in (kz, eta, j, K, ETA, sign)))


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by COUETTE_THREADS"""
    try:
        return max(1, int(getattr(settings, 'COUETTE_THREADS', 1)))
    except ImproperlyConfigured:
        return 1


def _is_power_of_two(n) -> bool:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        return False
    return n > 0 and (n & (n - 1)) == 0


def validate_grid(n_z, n_v, half_width, dealias_fraction) -> Dict:
    """
    Checks the Grid invariants.

    Returns:
        Dict: {'valid': bool, 'error': str, 'rule': str}
    """
    if not _is_power_of_two(n_z) or n_z < 8:
        return {'valid': False, 'error': f"n_z={n_z} is not a power of two >= 8",
                'rule': 'n_z is a power of two >= 8'}
    if not _is_power_of_two(n_v) or n_v < 8:
        return {'valid': False, 'error': f"n_v={n_v} is not a power of two >= 8",
                'rule': 'n_v is a power of two >= 8'}
    if not (isinstance(half_width, (int, float)) and math.isfinite(half_width) and half_width > 0):
        return {'valid': False, 'error': f"half_width={half_width} must be positive",
                'rule': 'L > 0'}
    if not (0.0 < dealias_fraction <= 1.0):
        return {'valid': False, 'error': f"dealias_fraction={dealias_fraction} outside (0, 1]",
                'rule': 'dealias_fraction in (0, 1]'}
    return {'valid': True, 'error': '', 'rule': ''}


def make_grid(n_z: int, n_v: int, half_width: float, dealias_fraction: float = 2.0 / 3.0) -> Grid:
    """
    Builds a Grid with k in {-n_z/2+1..n_z/2} and eta_j = j*pi/L.

    Raises:
        ConfigurationError: if a size is not a power of two >= 8 or L <= 0
    """
    validation = validate_grid(n_z, n_v, half_width, dealias_fraction)
    if not validation['valid']:
        raise ConfigurationError(validation['error'], rule=validation['rule'])
    return Grid(int(n_z), int(n_v), float(half_width), float(dealias_fraction))


class SpectralField:
    """Immutable array of Fourier coefficients on a Grid"""

    __slots__ = ('grid', 'coeffs')

    def __init__(self, grid: Grid, coeffs):
        arr = np.array(coeffs, dtype=np.complex128)
        if arr.shape != grid.shape:
            raise GridMismatchError(f"coefficient shape {arr.shape} does not match grid {grid.shape}")
        arr.setflags(write=False)
        self.grid = grid
        self.coeffs = arr

    @classmethod
    def zeros(cls, grid: Grid) -> 'SpectralField':
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, grid: Grid, samples) -> 'SpectralField':
        """Forward transform of samples on the (z, y) grid"""
        arr = np.asarray(samples)
        if arr.shape != grid.shape:
            raise GridMismatchError(f"sample shape {arr.shape} does not match grid {grid.shape}")
        scale = 2.0 * grid.half_width / (grid.n_z * grid.n_v)
        coeffs = scale * sfft.fft2(arr, workers=fft_workers()) * _lattice(grid).sign[None, :]
        return cls(grid, coeffs)

    def to_physical(self, complex_ok: bool = False) -> np.ndarray:
        """Inverse transform; the real part unless complex_ok"""
        grid = self.grid
        scale = grid.n_z * grid.n_v / (2.0 * grid.half_width)
        samples = scale * sfft.ifft2(self.coeffs * _lattice(grid).sign[None, :], workers=fft_workers())
        return samples if complex_ok else samples.real

    def with_coeffs(self, coeffs) -> 'SpectralField':
        return SpectralField(self.grid, coeffs)

    def scaled(self, factor) -> 'SpectralField':
        return SpectralField(self.grid, self.coeffs * factor)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        partner = np.roll(np.flip(self.coeffs, axis=(0, 1)), 1, axis=(0, 1))
        scale = max(float(np.max(np.abs(self.coeffs), initial=0.0)), 1e-300)
        return bool(np.max(np.abs(self.coeffs - np.conj(partner)), initial=0.0) <= tol * scale)

    def _check_same_grid(self, other: 'SpectralField'):
        if self.grid != other.grid:
            raise GridMismatchError(f"grids differ: {self.grid} vs {other.grid}")

    def __add__(self, other: 'SpectralField') -> 'SpectralField':
        self._check_same_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: 'SpectralField') -> 'SpectralField':
        self._check_same_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __repr__(self):
        return f"SpectralField(n_z={self.grid.n_z}, n_v={self.grid.n_v}, L={self.grid.half_width:g})"


def forward(grid: Grid, samples) -> SpectralField:
    return SpectralField.from_physical(grid, samples)


def inverse(field: SpectralField, complex_ok: bool = False) -> np.ndarray:
    return field.to_physical(complex_ok=complex_ok)


def profile_row(grid: Grid, samples, axis: int = -1) -> np.ndarray:
    """Transform of z-independent profiles over y (the k = 0 row convention)"""
    arr = np.asarray(samples)
    sign = _lattice(grid).sign
    shape = [1] * arr.ndim
    shape[axis] = grid.n_v
    return (2.0 * grid.half_width / grid.n_v) * sfft.fft(arr, axis=axis, workers=fft_workers()) * sign.reshape(shape)


def row_profile(grid: Grid, row, axis: int = -1, complex_ok: bool = False) -> np.ndarray:
    """Inverse of profile_row"""
    arr = np.asarray(row)
    sign = _lattice(grid).sign
    shape = [1] * arr.ndim
    shape[axis] = grid.n_v
    samples = (grid.n_v / (2.0 * grid.half_width)) * sfft.ifft(arr * sign.reshape(shape), axis=axis,
                                                                workers=fft_workers())
    return samples if complex_ok else samples.real


def l2_norm(field: SpectralField) -> float:
    return math.sqrt(float(np.sum(np.abs(field.coeffs) ** 2)) * field.grid.eta_spacing)


def dealias_mask(grid: Grid) -> np.ndarray:
    """True where |k| <= fraction*n_z/2 and |j| <= fraction*n_v/2"""
    lattice = _lattice(grid)
    keep_k = np.abs(lattice.kz) <= grid.dealias_fraction * grid.n_z / 2 + 1e-9
    keep_j = np.abs(lattice.j) <= grid.dealias_fraction * grid.n_v / 2 + 1e-9
    return _readonly(np.logical_and.outer(keep_k, keep_j))


def nyquist_mask(grid: Grid) -> np.ndarray:
    """False on the Nyquist row and column"""
    keep_k = np.ones(grid.n_z, dtype=bool)
    keep_k[grid.n_z // 2] = False
    keep_j = np.ones(grid.n_v, dtype=bool)
    keep_j[grid.n_v // 2] = False
    return np.logical_and.outer(keep_k, keep_j)


class ShearShift(NamedTuple):
    field: 'SpectralField'
    lost_count: int
    lost_norm_sq: float


def shear_shift(field: SpectralField, steps: int) -> ShearShift:
    """
    Reindexes every row along eta: new(k, eta_j) = old(k, eta_{j + k*steps}).

    Sources pushed past the lattice edge are dropped; their count and squared
    L2 norm are returned with the shifted field.
    """
    grid = field.grid
    lattice = _lattice(grid)
    signed_j = lattice.j.astype(np.int64)
    lo, hi = -(grid.n_v // 2) + 1, grid.n_v // 2
    shifted = np.zeros(grid.shape, dtype=np.complex128)
    lost_count = 0
    lost_sq = 0.0
    for row, k in enumerate(lattice.kz.astype(np.int64)):
        source = signed_j + k * steps
        valid = (source >= lo) & (source <= hi)
        positions = np.mod(source[valid], grid.n_v)
        shifted[row, valid] = field.coeffs[row, positions]
        used = np.zeros(grid.n_v, dtype=bool)
        used[positions] = True
        dropped = field.coeffs[row, ~used]
        occupied = np.abs(dropped) > 0
        lost_count += int(np.count_nonzero(occupied))
        lost_sq += float(np.sum(np.abs(dropped) ** 2))
    return ShearShift(field.with_coeffs(shifted), lost_count, lost_sq * grid.eta_spacing)


def frequency_magnitude(grid: Grid, axis: str = 'zv') -> np.ndarray:
    """|eta| for axis 'v', the l1 magnitude |k| + |eta| for axis 'zv'"""
    if axis not in AXES:
        raise ValueError(f"Unknown axis '{axis}', expected one of {AXES}")
    K, ETA = grid.mesh()
    if axis == 'v':
        return np.abs(ETA)
    return np.abs(K) + np.abs(ETA)


def cutoff_psi(xi) -> np.ndarray:
    """1 on |xi| <= 1/2, 0 on |xi| >= 3/4, quintic smoothstep in between"""
    x = np.clip(4.0 * (np.abs(xi) - 0.5), 0.0, 1.0)
    return 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


def cutoff_rho(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return cutoff_psi(xi / 2.0) - cutoff_psi(xi)


def _check_band(band: float):
    if band == 0.5:
        return
    if band < 1 or not float(math.log2(band)).is_integer():
        raise ValueError(f"Band {band} is neither the low block 1/2 nor a dyadic M >= 1")


def band_symbol(grid: Grid, band: float, axis: str = 'zv') -> np.ndarray:
    """Multiplier of the Littlewood-Paley projection onto one band"""
    _check_band(band)
    xi = frequency_magnitude(grid, axis)
    if band == 0.5:
        return cutoff_psi(xi)
    return cutoff_rho(xi / band)


def dyadic_bands(grid: Grid, axis: str = 'zv') -> List[float]:
    """The low block 1/2 followed by 1, 2, ... up to the band covering the lattice"""
    xi_max = float(np.max(frequency_magnitude(grid, axis)))
    bands = [0.5, 1.0]
    while bands[-1] < xi_max:
        bands.append(bands[-1] * 2.0)
    return bands


def lp_project(field: SpectralField, band: float, axis: str = 'zv') -> SpectralField:
    """
    Littlewood-Paley projection P_M f.

    Args:
        field: field to project
        band: 1/2 for the low block psi(|xi|), otherwise a dyadic M >= 1 for rho(|xi|/M)
        axis: 'v' projects in eta only, 'zv' in the l1 magnitude |k| + |eta|

    Returns:
        SpectralField: the band, supported in M/2 <= |xi| <= 3M/2
    """
    return field.with_coeffs(field.coeffs * band_symbol(field.grid, band, axis))


def _homogeneous_blocks(grid: Grid, axis: str) -> List[Tuple[float, np.ndarray]]:
    xi = frequency_magnitude(grid, axis)
    positive = xi[xi > 0]
    top = dyadic_bands(grid, axis)[-1]
    if positive.size == 0:
        return [(0.0, cutoff_psi(xi))]
    # below N_min the low cutoff only sees the zero frequency
    n_min = 2.0 ** math.floor(math.log2(4.0 * float(positive.min()) / 3.0))
    blocks = [(0.0, cutoff_psi(xi / n_min))]
    scale = n_min
    while scale <= top:
        blocks.append((scale, cutoff_rho(xi / scale)))
        scale *= 2.0
    return blocks


def _inhomogeneous_blocks(grid: Grid, axis: str) -> List[Tuple[float, np.ndarray]]:
    return [(band, band_symbol(grid, band, axis)) for band in dyadic_bands(grid, axis)]


def paraproduct_split(f: SpectralField, g: SpectralField, style: str = 'inhomogeneous',
                      axis: str = 'zv') -> Tuple[SpectralField, SpectralField, SpectralField]:
    """
    Splits the dealiased product f*g into low-high, high-low and remainder terms.

    Pairs of blocks (a for f, b for g) go to T_LH when b > 8a, to T_HL when
    a > 8b and to T_R otherwise. In the homogeneous style the zero frequency
    is its own block of scale 0 and always pairs as the low factor of T_LH.

    Returns:
        Tuple[SpectralField, SpectralField, SpectralField]: (T_LH, T_HL, T_R)
    """
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")
    if style not in STYLES:
        raise ValueError(f"Unknown paraproduct style '{style}', expected one of {STYLES}")

    grid = f.grid
    blocks = _homogeneous_blocks(grid, axis) if style == 'homogeneous' else _inhomogeneous_blocks(grid, axis)
    f_parts = [(scale, f.with_coeffs(f.coeffs * sym).to_physical(complex_ok=True)) for scale, sym in blocks]
    g_parts = [(scale, g.with_coeffs(g.coeffs * sym).to_physical(complex_ok=True)) for scale, sym in blocks]

    low_high = np.zeros(grid.shape, dtype=np.complex128)
    high_low = np.zeros(grid.shape, dtype=np.complex128)
    remainder = np.zeros(grid.shape, dtype=np.complex128)
    for a, f_a in f_parts:
        for b, g_b in g_parts:
            if a == 0.0 or b > 8.0 * a:
                low_high += f_a * g_b
            elif a > 8.0 * b:
                high_low += f_a * g_b
            else:
                remainder += f_a * g_b

    mask = dealias_mask(grid)
    real_inputs = f.is_hermitian() and g.is_hermitian()
    terms = []
    for samples in (low_high, high_low, remainder):
        term = SpectralField.from_physical(grid, samples.real if real_inputs else samples)
        terms.append(term.with_coeffs(term.coeffs * mask))
    return terms[0], terms[1], terms[2]


def log_weighted_norm_sq(field: SpectralField, log_weight) -> float:
    """
    log of sum exp(2*log_weight)*|f_hat|^2*(pi/L), accumulated with log-sum-exp.

    Modes with zero amplitude or zero weight (log_weight = -inf) are skipped.
    Returns -inf for an empty sum.
    """
    amp = np.abs(field.coeffs)
    log_weight = np.broadcast_to(np.asarray(log_weight, dtype=float), field.grid.shape)
    occupied = (amp > 0) & np.isfinite(log_weight)
    if not occupied.any():
        return -math.inf
    terms = 2.0 * log_weight[occupied] + 2.0 * np.log(amp[occupied])
    kept = terms >= terms.max() - LOG_DROP
    return float(logsumexp(terms[kept])) + math.log(field.grid.eta_spacing)


def _dominant_frequency(field: SpectralField, log_weight) -> Tuple[float, float]:
    amp = np.abs(field.coeffs)
    with np.errstate(divide='ignore'):
        terms = np.where(amp > 0, 2.0 * np.asarray(log_weight) + 2.0 * np.log(amp), -np.inf)
    idx = np.unravel_index(int(np.argmax(terms)), field.grid.shape)
    K, ETA = field.grid.mesh()
    return float(K[idx]), float(ETA[idx])


def weighted_norm_sq(field: SpectralField, log_weight) -> float:
    """Squared norm with per-mode weights given by their logarithms"""
    log_value = log_weighted_norm_sq(field, log_weight)
    if log_value > LOG_FLOAT_MAX:
        raise GevreyOverflowError("weighted norm overflows double range",
                                  _dominant_frequency(field, log_weight))
    return math.exp(log_value)


def gevrey_log_weight(grid: Grid, params: GevreyParams) -> np.ndarray:
    K, ETA = grid.mesh()
    return params.lam * (np.abs(K) + np.abs(ETA)) ** params.s + 0.5 * params.sigma * np.log1p(K ** 2 + ETA ** 2)


def gevrey_norm(field: SpectralField, params: GevreyParams) -> float:
    """
    Gevrey-1/s norm with Sobolev correction.

    ||f||^2 = sum_k sum_j |f_hat|^2 exp(2 lam |k,eta|^s) <k,eta>^{2 sigma} (pi/L)

    Raises:
        GevreyOverflowError: if the norm itself exceeds double range
    """
    log_weight = gevrey_log_weight(field.grid, params)
    log_value = log_weighted_norm_sq(field, log_weight)
    if 0.5 * log_value > LOG_FLOAT_MAX:
        raise GevreyOverflowError("Gevrey norm overflows double range",
                                  _dominant_frequency(field, log_weight))
    return math.exp(0.5 * log_value)


def seam_distance(field: SpectralField, rel_threshold: float = 1e-8) -> float:
    """Distance from the periodic seam y = +-L of the outermost occupied y"""
    grid = field.grid
    profile = np.max(np.abs(field.to_physical(complex_ok=True)), axis=0)
    peak = float(profile.max(initial=0.0))
    if peak == 0.0:
        return grid.half_width
    occupied = profile > rel_threshold * peak
    return float(grid.half_width - np.max(np.abs(grid.y[occupied])))


def _natural_order(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return np.roll(coeffs, (-(grid.n_z // 2 + 1), -(grid.n_v // 2 + 1)), axis=(0, 1))


def _fft_order(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return np.roll(coeffs, (grid.n_z // 2 + 1, grid.n_v // 2 + 1), axis=(0, 1))


def write_snapshot(field: SpectralField, path: Union[str, Path], trailer: Optional[bytes] = None) -> Path:
    """
    Writes a CSPF snapshot.

    Layout: 32-byte header, then little-endian float64 (re, im) pairs with k
    ascending from -n_z/2+1 in the outer loop and j ascending in the inner
    loop, then the optional trailer bytes.
    """
    grid = field.grid
    path = Path(path)
    header = SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n_z, grid.n_v,
                                  grid.half_width, grid.dealias_fraction)
    body = _natural_order(grid, field.coeffs).astype('<c16').tobytes()
    with open(path, 'wb') as handle:
        handle.write(header)
        handle.write(body)
        if trailer:
            handle.write(trailer)
    return path


def _read_snapshot_parts(path: Union[str, Path]) -> Tuple[SpectralField, bytes]:
    data = Path(path).read_bytes()
    if len(data) < SNAPSHOT_HEADER.size:
        raise ValueError(f"{path}: file shorter than the CSPF header")
    magic, version, n_z, n_v, half_width, dealias = SNAPSHOT_HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported CSPF version {version}")
    grid = make_grid(n_z, n_v, half_width, dealias)
    body_size = n_z * n_v * 16
    body = data[SNAPSHOT_HEADER.size:SNAPSHOT_HEADER.size + body_size]
    if len(body) != body_size:
        raise GridMismatchError(f"{path}: expected {body_size} coefficient bytes, found {len(body)}")
    natural = np.frombuffer(body, dtype='<c16').reshape(grid.shape)
    field = SpectralField(grid, _fft_order(grid, natural))
    return field, data[SNAPSHOT_HEADER.size + body_size:]


def read_snapshot(path: Union[str, Path]) -> SpectralField:
    return _read_snapshot_parts(path)[0]


def read_snapshot_trailer(path: Union[str, Path]) -> bytes:
    return _read_snapshot_parts(path)[1]
