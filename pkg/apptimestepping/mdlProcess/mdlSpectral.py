"""
Divergence-free periodic vector fields on (0, 2*pi)^3 in Fourier space.

Coefficients follow u(x) = sum_k u_k exp(i k.x) and are stored as complex
arrays of shape (3, n, n, n) in FFT order. Only wavenumbers with every
component in [-n/2+1, n/2-1] are retained, so the Nyquist planes are always
zero and the mode set is symmetric under k -> -k. Quadratic products are
evaluated on a 3/2-padded collocation grid, which makes them alias-free for
truncated inputs.
"""
import functools
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .logger import Logger
from .mdlEnum import FieldKind, ForcingKind, Modulation
from .mdlErrors import GridMismatch, InvalidFieldSpec

logger = Logger.get_logger()

VOLUME = (2.0 * np.pi) ** 3
SNAPSHOT_MAGIC = b"NSE3DFLD"
SNAPSHOT_VERSION = 1
_AXES = (-3, -2, -1)


def _invariants_enabled():
    try:
        from django.conf import settings
        return bool(settings.configured and settings.NSE3D.get('DEBUG_INVARIANTS', False))
    except (ImportError, AttributeError):
        return False


@dataclass(frozen=True)
class Grid:
    n: int
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise InvalidFieldSpec(f"Grid resolution must be an even integer >= 4, got {self.n!r}")
        object.__setattr__(self, 'n', int(self.n))
        if self.workers < 1:
            raise InvalidFieldSpec(f"FFT workers must be >= 1, got {self.workers!r}")

    @property
    def m(self):
        """Padded resolution: 3n/2 rounded up to an even integer."""
        m = -(-3 * self.n // 2)
        return m + (m % 2)

    @property
    def kmax_axis(self):
        return self.n // 2 - 1

    @functools.cached_property
    def wavenumbers(self):
        return np.rint(sfft.fftfreq(self.n, 1.0 / self.n)).astype(np.int64)

    @functools.cached_property
    def mask(self):
        keep = np.abs(self.wavenumbers) <= self.kmax_axis
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]

    @functools.cached_property
    def K(self):
        k = self.wavenumbers.astype(np.float64)
        kx, ky, kz = np.meshgrid(k, k, k, indexing='ij')
        return np.stack([kx, ky, kz])

    @functools.cached_property
    def K2(self):
        return np.sum(self.K ** 2, axis=0)

    @functools.cached_property
    def inv_K2(self):
        out = np.zeros_like(self.K2)
        np.divide(1.0, self.K2, out=out, where=self.K2 > 0)
        return out

    @functools.cached_property
    def _pad_index(self):
        axis_n = np.flatnonzero(np.abs(self.wavenumbers) <= self.kmax_axis)
        axis_m = np.mod(self.wavenumbers[axis_n], self.m)
        return np.ix_(axis_n, axis_n, axis_n), np.ix_(axis_m, axis_m, axis_m)

    @functools.cached_property
    def lexicographic_index(self):
        """FFT-order indices of the retained wavenumbers sorted ascending."""
        kvals = np.arange(-self.kmax_axis, self.kmax_axis + 1)
        idx = np.mod(kvals, self.n)
        return np.ix_(idx, idx, idx)

    def index_of(self, kappa):
        kappa = tuple(int(c) for c in kappa)
        if any(abs(c) > self.kmax_axis for c in kappa):
            raise InvalidFieldSpec(f"Wavenumber {kappa} is outside the retained set of grid n={self.n}")
        return tuple(c % self.n for c in kappa)

    def to_physical(self, coeffs):
        """Values on the padded m^3 collocation grid (leading axes preserved)."""
        idx_n, idx_m = self._pad_index
        lead = coeffs.shape[:-3]
        padded = np.zeros(lead + (self.m,) * 3, dtype=np.complex128)
        padded[(Ellipsis,) + idx_m] = coeffs[(Ellipsis,) + idx_n]
        return sfft.ifftn(padded, axes=_AXES, norm='forward', workers=self.workers).real

    def to_spectral(self, values):
        """Retained coefficients of padded-grid values, Hermitian-symmetrised."""
        idx_n, idx_m = self._pad_index
        full = sfft.fftn(values, axes=_AXES, norm='forward', workers=self.workers)
        out = np.zeros(values.shape[:-3] + (self.n,) * 3, dtype=np.complex128)
        out[(Ellipsis,) + idx_n] = full[(Ellipsis,) + idx_m]
        return hermitian_part(out)


def mirror(coeffs):
    """coeffs[-k] for FFT-ordered arrays."""
    return np.roll(np.flip(coeffs, axis=_AXES), 1, axis=_AXES)


def hermitian_part(coeffs):
    return 0.5 * (coeffs + np.conj(mirror(coeffs)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.complex128)
        expected = (3,) + (self.grid.n,) * 3
        if arr.shape != expected:
            raise InvalidFieldSpec(f"Coefficient array has shape {arr.shape}, expected {expected}")
        arr.setflags(write=False)
        object.__setattr__(self, 'coeffs', arr)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((3,) + (grid.n,) * 3, dtype=np.complex128))

    def _same_grid(self, other):
        if self.grid != other.grid:
            raise GridMismatch(f"Grid mismatch: n={self.grid.n} vs n={other.grid.n}")

    def __add__(self, other):
        self._same_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def defects(self):
        """Largest violations of the field invariants (all zero for a valid field)."""
        c = self.coeffs
        return {
            'hermitian': float(np.max(np.abs(c - np.conj(mirror(c))))),
            'divergence': float(np.max(np.abs(np.sum(self.grid.K * c, axis=0)))),
            'mean': float(np.max(np.abs(c[:, 0, 0, 0]))),
            'truncation': float(np.max(np.abs(c[:, ~self.grid.mask]), initial=0.0)),
        }

    def check_invariants(self, tol=1e-10, op=""):
        scale = max(float(np.max(np.abs(self.coeffs))), 1.0)
        bad = {name: value for name, value in self.defects().items() if value > tol * scale}
        if bad:
            raise AssertionError(f"Field invariants violated after {op or 'operation'}: {bad}")
        return self


def _checked(result, op):
    if _invariants_enabled():
        result.check_invariants(op=op)
    return result


@dataclass(frozen=True)
class NormBundle:
    l2_sq: float
    h1_sq: float
    h2_sq: float
    hm1_sq: float
    h_half_sq: float
    l3: float
    l6: float


def project_leray(field, grid=None):
    """Per-mode projection u_k - k (k.u_k)/|k|^2; the zero mode is left as is."""
    if isinstance(field, SpectralField):
        grid, coeffs = field.grid, field.coeffs
    else:
        if grid is None:
            raise GridMismatch("A raw coefficient array needs its grid")
        coeffs = np.asarray(field, dtype=np.complex128)
    K = grid.K
    k_dot_u = np.sum(K * coeffs, axis=0)
    projected = coeffs - K * (k_dot_u * grid.inv_K2)
    projected = np.where(grid.mask, projected, 0.0)
    return _checked(SpectralField(grid, projected), "project_leray")


def gradient_coeffs(field):
    """d_j u_i as an array of shape (3 components, 3 directions, n, n, n)."""
    return 1j * field.grid.K[None, :] * field.coeffs[:, None]


def nonlinear_term(u, v):
    """P(u . grad v) truncated to the retained modes, computed alias-free."""
    u._same_grid(v)
    grid = u.grid
    u_phys = grid.to_physical(u.coeffs)
    grad_v = grid.to_physical(gradient_coeffs(v))
    product = np.einsum('jxyz,ijxyz->ixyz', u_phys, grad_v)
    return _checked(project_leray(grid.to_spectral(product), grid), "nonlinear_term")


def laplacian(field):
    return SpectralField(field.grid, -field.grid.K2 * field.coeffs)


def norms(u):
    grid = u.grid
    energy = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    K2 = grid.K2
    phys = grid.to_physical(u.coeffs)
    magnitude = np.sqrt(np.sum(phys ** 2, axis=0))
    cell = VOLUME / grid.m ** 3
    return NormBundle(
        l2_sq=float(VOLUME * np.sum(energy)),
        h1_sq=float(VOLUME * np.sum(K2 * energy)),
        h2_sq=float(VOLUME * np.sum(K2 ** 2 * energy)),
        hm1_sq=float(VOLUME * np.sum(grid.inv_K2 * energy)),
        h_half_sq=float(VOLUME * np.sum(np.sqrt(K2) * energy)),
        l3=float((cell * np.sum(magnitude ** 3)) ** (1.0 / 3.0)),
        l6=float((cell * np.sum(magnitude ** 6)) ** (1.0 / 6.0)),
    )


def quadrature_l2_sq(u):
    """|u|^2 by collocation on the padded grid (cross-check of Parseval)."""
    phys = u.grid.to_physical(u.coeffs)
    return float(VOLUME / u.grid.m ** 3 * np.sum(phys ** 2))


def inner(u, v):
    u._same_grid(v)
    return float(VOLUME * np.real(np.vdot(v.coeffs, u.coeffs)))


def h1_inner(u, v):
    """(grad u, grad v)."""
    u._same_grid(v)
    return float(VOLUME * np.real(np.sum(u.grid.K2 * u.coeffs * np.conj(v.coeffs))))


@dataclass(frozen=True)
class FieldSpec:
    """Initial-data descriptor."""
    kind: str = FieldKind.Zero
    amplitude: float = 1.0
    seed: int = 0
    slope: float = 0.0
    kmax: float = 2.0
    path: str = ""


def _single_pair(grid, component, kappa, value):
    coeffs = np.zeros((3,) + (grid.n,) * 3, dtype=np.complex128)
    coeffs[(component,) + grid.index_of(kappa)] += value
    coeffs[(component,) + grid.index_of(tuple(-c for c in kappa))] += np.conj(value)
    return coeffs


def shear(grid, amplitude):
    """amplitude * (sin z, 0, 0)."""
    return SpectralField(grid, _single_pair(grid, 0, (0, 0, 1), -0.5j * amplitude))


def planar_vortex(grid, amplitude):
    """amplitude * (-sin y, sin x, 0)."""
    coeffs = _single_pair(grid, 0, (0, 1, 0), 0.5j * amplitude)
    coeffs += _single_pair(grid, 1, (1, 0, 0), -0.5j * amplitude)
    return SpectralField(grid, coeffs)


def random_divfree(grid, seed, slope, amplitude, kmax):
    """
    Seeded random solenoidal field on the shell 0 < |k| <= kmax.
    Mode amplitudes scale like |k|^(-slope); the result is rescaled so that
    |u|_{L^2} equals `amplitude`.
    """
    if kmax < 1 or kmax > grid.kmax_axis:
        raise InvalidFieldSpec(f"kmax={kmax!r} must lie in [1, {grid.kmax_axis}] for grid n={grid.n}")
    if amplitude < 0:
        raise InvalidFieldSpec(f"amplitude must be >= 0, got {amplitude!r}")
    rng = np.random.default_rng(seed)
    shape = (3,) + (grid.n,) * 3
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kk = np.sqrt(grid.K2)
    shell = (kk > 0) & (kk <= kmax) & grid.mask
    weight = np.zeros_like(kk)
    weight[shell] = kk[shell] ** (-float(slope))
    field = project_leray(hermitian_part(raw * weight), grid)
    size = np.sqrt(norms(field).l2_sq)
    if size == 0.0:
        return SpectralField.zeros(grid)
    return field * (amplitude / size)


def make_field(grid, spec):
    if spec.kind == FieldKind.Zero:
        field = SpectralField.zeros(grid)
    elif spec.kind == FieldKind.Shear:
        field = shear(grid, spec.amplitude)
    elif spec.kind == FieldKind.PlanarVortex:
        field = planar_vortex(grid, spec.amplitude)
    elif spec.kind == FieldKind.Random:
        field = random_divfree(grid, spec.seed, spec.slope, spec.amplitude, spec.kmax)
    elif spec.kind == FieldKind.File:
        field = load_field(spec.path, workers=grid.workers)
        if field.grid != grid:
            raise InvalidFieldSpec(f"Snapshot {spec.path} has n={field.grid.n}, run grid has n={grid.n}")
    else:
        raise InvalidFieldSpec(f"Unknown initial-data kind {spec.kind!r}")
    return _checked(field, "make_field")


@dataclass(frozen=True)
class ForcingSpec:
    """
    Divergence-free body force. `modes` holds ((kx, ky, kz), (fx, fy, fz))
    pairs with complex amplitudes; the conjugate partner at -k is implied.
    A modulation other than "none" multiplies the base field by a scalar
    function of time.
    """
    kind: str = ForcingKind.Zero
    modes: tuple = ()
    seed: int = 0
    slope: float = 0.0
    amplitude: float = 0.0
    kmax: float = 2.0
    modulation: str = Modulation.NoModulation
    mod_mean: float = 1.0
    mod_amplitude: float = 0.0
    mod_omega: float = 0.0
    mod_ramp_time: float = 1.0

    @property
    def is_zero(self):
        return self.kind == ForcingKind.Zero

    def base_field(self, grid):
        return _forcing_base(self, grid)

    def amplitude_at(self, t):
        if self.modulation == Modulation.NoModulation:
            return 1.0
        if self.modulation == Modulation.Cosine:
            return self.mod_mean + self.mod_amplitude * float(np.cos(self.mod_omega * t))
        if self.modulation == Modulation.Ramp:
            return min(t / self.mod_ramp_time, 1.0)
        raise InvalidFieldSpec(f"Unknown forcing modulation {self.modulation!r}")

    def evaluate(self, grid, t):
        base = self.base_field(grid)
        if self.is_zero:
            return base
        return base * self.amplitude_at(t)

    def sup_norms(self, grid, times):
        """(sup |f|_{H^-1}^2, sup |f|_{L^2}^2) over the given evaluation times."""
        if self.is_zero:
            return 0.0, 0.0
        bundle = norms(self.base_field(grid))
        times = list(times) or [0.0]
        peak = max(self.amplitude_at(t) ** 2 for t in times)
        return bundle.hm1_sq * peak, bundle.l2_sq * peak


@functools.lru_cache(maxsize=32)
def _forcing_base(spec, grid):
    if spec.kind == ForcingKind.Zero:
        return SpectralField.zeros(grid)
    if spec.kind == ForcingKind.Random:
        return random_divfree(grid, spec.seed, spec.slope, spec.amplitude, spec.kmax)
    if spec.kind == ForcingKind.Modes:
        coeffs = np.zeros((3,) + (grid.n,) * 3, dtype=np.complex128)
        for kappa, amplitudes in spec.modes:
            if not any(kappa):
                raise InvalidFieldSpec("Forcing cannot act on the zero mode")
            for component, value in enumerate(amplitudes):
                coeffs += _single_pair(grid, component, kappa, complex(value))
        return project_leray(coeffs, grid)
    raise InvalidFieldSpec(f"Unknown forcing kind {spec.kind!r}")


def atomic_write_bytes(path, data):
    """Write-then-rename so readers never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def field_to_bytes(field):
    grid = field.grid
    header = SNAPSHOT_MAGIC + np.array([SNAPSHOT_VERSION, grid.n], dtype='<u4').tobytes()
    ordered = field.coeffs[(slice(None),) + grid.lexicographic_index]
    # (3, L, L, L) -> (L, L, L, 3, re/im)
    body = np.stack([ordered.real, ordered.imag], axis=-1).transpose(1, 2, 3, 0, 4)
    return header + np.ascontiguousarray(body, dtype='<f8').tobytes()


def field_from_bytes(data, workers=1):
    header_size = len(SNAPSHOT_MAGIC) + 8
    if len(data) < header_size or data[:len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise InvalidFieldSpec("Not a field snapshot (bad magic)")
    version, n = np.frombuffer(data[len(SNAPSHOT_MAGIC):header_size], dtype='<u4')
    if version != SNAPSHOT_VERSION:
        raise InvalidFieldSpec(f"Unsupported snapshot version {int(version)}")
    grid = Grid(int(n), workers=workers)
    side = 2 * grid.kmax_axis + 1
    expected = side ** 3 * 6 * 8
    if len(data) - header_size != expected:
        raise InvalidFieldSpec(f"Snapshot body has {len(data) - header_size} bytes, expected {expected}")
    body = np.frombuffer(data[header_size:], dtype='<f8').reshape(side, side, side, 3, 2)
    ordered = (body[..., 0] + 1j * body[..., 1]).transpose(3, 0, 1, 2)
    coeffs = np.zeros((3,) + (grid.n,) * 3, dtype=np.complex128)
    coeffs[(slice(None),) + grid.lexicographic_index] = ordered
    return SpectralField(grid, coeffs)


def save_field(path, field):
    atomic_write_bytes(path, field_to_bytes(field))
    logger.debug(f"Snapshot written: {path}")


def load_field(path, workers=1):
    try:
        with open(path, 'rb') as handle:
            data = handle.read()
    except OSError as e:
        raise InvalidFieldSpec(f"Cannot read snapshot {path}: {e}") from e
    loaded = field_from_bytes(data, workers=workers)
    try:
        return loaded.check_invariants(op=f"loading {path}")
    except AssertionError as e:
        raise InvalidFieldSpec(f"Snapshot {path} is not a real solenoidal field: {e}") from e
