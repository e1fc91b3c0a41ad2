"""Drift of the interferometer, single-molecule deposition and synthetic STM images.

Lab-frame drifts of G1, G2 and the detector move the fringe pattern in the
detector frame by ``-d1 + 2 d2 - d3``.  The deposit records the exposure
average of the moving pattern, which multiplies every harmonic by the mean
phase factor over the exposure.

The STM model scans with the slow axis along x, one column per line time.
While column ``j`` is acquired the sample has drifted by ``r t_j``, so a
molecule at ``X`` shows up in column ``j`` with ``(j + 1/2) px - r j t_line
= X``: the image is stretched by ``1 / (1 - r t_line / px)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import j0

from . import rng
from .errors import DomainError, NumericalError
from .quadrature import _gauss_legendre
from .quantum import FringeSpectrum

N_CDF = 4096
MIN_SEPARATION = 0.1        # nm
BUMP_SIGMA = 0.8            # nm
BUMP_HALF = 3               # bump stencil half-width in pixels
HEIGHT_RANGE = (0.6, 0.8)   # nm
C60_SPACING = 1.0           # nm, nearest-neighbour distance in a C60 monolayer
MAX_PIXELS = 1 << 26


@dataclass(frozen=True)
class DriftModel:
    """Linear drifts in nm/min; optional sinusoidal jitter of the fringe position."""

    rate_g1: float = 0.0
    rate_g2: float = 0.0
    rate_det: float = 0.0
    jitter_amp: float = 0.0
    jitter_freq: float = 0.0

    def __post_init__(self):
        for name in ("rate_g1", "rate_g2", "rate_det", "jitter_amp", "jitter_freq"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"DriftModel: {name} must be finite")
        if self.jitter_amp < 0 or self.jitter_freq < 0:
            raise DomainError("DriftModel: jitter amplitude and frequency must be >= 0")

    @property
    def pattern_rate(self):
        """Detector-frame fringe velocity in nm/min."""
        return -self.rate_g1 + 2 * self.rate_g2 - self.rate_det


@dataclass(frozen=True)
class DepositionParams:
    exposure: float = 30.0            # min
    target_density: float = 1166.0    # molecules per um^2
    field_w: float = float(np.sqrt(2.0))   # um
    field_h: float = float(np.sqrt(2.0))   # um
    seed: int = 0

    def __post_init__(self):
        for name in ("exposure", "target_density", "field_w", "field_h"):
            if not getattr(self, name) > 0:
                raise DomainError(f"DepositionParams: {name} must be > 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("DepositionParams: seed must be a 64-bit unsigned integer")

    @property
    def n_molecules(self):
        return int(round(self.target_density * self.field_w * self.field_h))

    @property
    def coverage_ml(self):
        """Coverage in monolayers of close-packed C60."""
        return self.target_density * 1e-6 * (np.sqrt(3) / 2) * C60_SPACING ** 2


@dataclass
class MoleculeList:
    """Molecule centres ``positions[:, 0] = x``, ``[:, 1] = y`` (nm) in a field of given size."""

    positions: np.ndarray
    field_w: float      # nm
    field_h: float      # nm

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)

    def __len__(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class ScanParams:
    """Raster timing: ``t_line`` seconds per column along the slow x axis."""

    t_line: float = 8.16

    def __post_init__(self):
        if not self.t_line > 0:
            raise DomainError("ScanParams: t_line must be > 0")


@dataclass
class HeightMap:
    """Heights ``z[row, col]`` in nm; rows run along y, columns along x."""

    z: np.ndarray
    px_size: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 2:
            raise DomainError("HeightMap: z must be 2-d")
        if self.z.size > MAX_PIXELS:
            raise DomainError("HeightMap: more than 2**26 pixels")
        if not self.px_size > 0:
            raise DomainError("HeightMap: px_size must be > 0")
        if not np.all(np.isfinite(self.z)):
            raise DomainError("HeightMap: non-finite heights")

    @property
    def ny(self):
        return self.z.shape[0]

    @property
    def nx(self):
        return self.z.shape[1]


def pattern_shift(dm, t):
    """Fringe displacement (nm) in the detector frame after ``t`` minutes."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("pattern_shift: t must be >= 0")
    out = dm.pattern_rate * t
    if dm.jitter_amp > 0:
        out = out + dm.jitter_amp * np.sin(2 * np.pi * dm.jitter_freq * 60.0 * t)
    return float(out) if out.ndim == 0 else out


# jitter with at least this many cycles per exposure is averaged analytically
_FAST_JITTER_CYCLES = 16


def drift_multipliers(dm, exposure, period, m_max, n_nodes=512):
    """``(1/T) int_0^T exp(-2 pi i m dx(t) / d) dt`` for ``m = -m_max .. m_max``.

    A fringe displaced by ``+dx`` has coefficients ``S_m exp(-2 pi i m dx / d)``
    in the ``exp(+2 pi i m x / d)`` convention used by :class:`FringeSpectrum`.
    Fast jitter (many cycles per exposure) enters through its exact phase
    average ``J0(2 pi m A / d)``; slow jitter is integrated with the drift.
    """
    if not exposure > 0:
        raise DomainError("exposure must be > 0")
    xg, wg = _gauss_legendre(n_nodes)
    t = 0.5 * exposure * (xg + 1.0)
    w = 0.5 * wg
    m = np.arange(-m_max, m_max + 1)
    fast = dm.jitter_amp > 0 and dm.jitter_freq * 60.0 * exposure >= _FAST_JITTER_CYCLES
    if fast:
        shift = dm.pattern_rate * t
    else:
        shift = pattern_shift(dm, t)
    mult = np.exp(-2j * np.pi * np.outer(m, shift) / period) @ w
    if fast:
        mult = mult * j0(2 * np.pi * m * dm.jitter_amp / period)
    return mult


def exposure_averaged_pattern(fs, dm, exposure, n_nodes=512):
    """Fringe spectrum recorded over an exposure of ``exposure`` minutes under drift."""
    mult = drift_multipliers(dm, exposure, fs.period, fs.m_max, n_nodes)
    out = FringeSpectrum(fs.period, fs.coeffs * mult, dict(fs.meta))
    out.coeffs = 0.5 * (out.coeffs + np.conj(out.coeffs[::-1]))
    out.meta["drift_multiplier_1"] = complex(mult[fs.m_max + 1])
    return out


def linear_drift_multiplier(excursion, period, m=1):
    """Closed form ``|sinc(pi m D / d)|`` for a total linear excursion ``D``."""
    z = np.pi * m * excursion / period
    return float(abs(np.sinc(z / np.pi)))


def _period_cdf(fs, n_bins=N_CDF):
    x = (np.arange(n_bins) + 0.5) * (fs.period / n_bins)
    dens = fs.evaluate(x)
    if np.any(dens < -1e-9 * fs.s0):
        raise DomainError("sample_deposit: spectrum has negative density")
    dens = np.maximum(dens, 0.0)
    cdf = np.concatenate(([0.0], np.cumsum(dens)))
    if not cdf[-1] > 0:
        raise DomainError("sample_deposit: density integrates to zero")
    return cdf / cdf[-1]


def _inverse_cdf(cdf, u, period):
    n_bins = cdf.size - 1
    i = np.searchsorted(cdf, u, side="right") - 1
    i = np.clip(i, 0, n_bins - 1)
    width = cdf[i + 1] - cdf[i]
    frac = np.where(width > 0, (u - cdf[i]) / np.where(width > 0, width, 1.0), 0.5)
    return (i + np.clip(frac, 0.0, 1.0)) * (period / n_bins)


def _draw(cdf, period, W, H, seed, idx, attempt):
    """Positions for molecule indices ``idx`` at a given resampling attempt."""
    n_periods = int(np.ceil(W / period))
    out = np.empty((idx.size, 2))
    todo = np.arange(idx.size)
    tries = 0
    while todo.size:
        # draws falling beyond the field edge are redrawn on the next counter
        u = _uniform_rows(seed, idx[todo], attempt + 1024 * tries)
        k = np.minimum((u[:, 0] * n_periods).astype(np.int64), n_periods - 1)
        x = k * period + _inverse_cdf(cdf, u[:, 1], period)
        y = u[:, 2] * H
        ok = x < W
        out[todo[ok], 0] = x[ok]
        out[todo[ok], 1] = y[ok]
        todo = todo[~ok]
        tries += 1
        if tries > 10_000:
            raise NumericalError("sample_deposit: field much narrower than one period")
    return out


def _uniform_rows(seed, idx, attempt):
    # contiguous index runs share one generator call
    if idx.size and np.all(np.diff(idx) == 1):
        return rng.uniforms(seed, "deposit", int(idx[0]), idx.size, attempt)
    return np.concatenate([rng.uniforms(seed, "deposit", int(i), 1, attempt) for i in idx])


def sample_deposit(fs, dp):
    """Draw ``round(density * area)`` molecules from the fringe density.

    x is drawn by inverse CDF over one period (4096 bins, linear within a
    bin) after picking a period of the tiling uniformly; y is uniform.
    Molecule ``i`` uses counter ``i`` of the ``(seed, "deposit")`` stream, so
    the deposit does not depend on how it is evaluated.  Pairs closer than
    0.1 nm are resolved by redrawing the higher index on a fresh counter.
    """
    if not fs.s0 > 0:
        raise DomainError("sample_deposit: S0 must be > 0")
    n = dp.n_molecules
    if n < 1:
        raise DomainError("sample_deposit: density times area gives no molecules")
    W, H = dp.field_w * 1e3, dp.field_h * 1e3
    cdf = _period_cdf(fs)
    pos = _draw(cdf, fs.period, W, H, dp.seed, np.arange(n), 0)
    attempt = np.zeros(n, dtype=np.int64)
    for _ in range(1000):
        pairs = cKDTree(pos).query_pairs(MIN_SEPARATION, output_type="ndarray")
        if pairs.size == 0:
            return MoleculeList(pos, W, H)
        redo = np.unique(pairs.max(axis=1))
        attempt[redo] += 1
        for i in redo:
            pos[i] = _draw(cdf, fs.period, W, H, dp.seed, np.array([i]), int(attempt[i]))[0]
    raise NumericalError("sample_deposit: could not separate molecules", {"n": n})


def apparent_stretch(px_size, scan, stm_drift_rate):
    """Image stretch factor ``1 / (1 - r t_line / px)`` (rate in nm/min)."""
    ratio = stm_drift_rate * scan.t_line / 60.0 / px_size
    if not ratio < 1:
        raise DomainError("STM drift outruns the slow scan")
    return 1.0 / (1.0 - ratio)


def drift_rate_for_stretch(stretch, px_size, scan):
    """STM drift rate (nm/min) producing an apparent stretch ``stretch``."""
    if not stretch > 0:
        raise DomainError("stretch must be > 0")
    return (1.0 - 1.0 / stretch) * px_size / (scan.t_line / 60.0)


def render_stm(ml, px_size, scan=ScanParams(), noise_rms=0.0, stm_drift_rate=0.0, seed=0):
    """Synthetic constant-current image of a deposit.

    Each molecule becomes a Gaussian bump (sigma 0.8 nm, peak uniform in
    [0.6, 0.8] nm) centred on the pixel where the scan meets it, so the bump
    apex is sampled exactly.  Molecules the drifting scan never reaches are
    absent from the image.
    """
    if not 1.0 <= px_size <= 4.0:
        raise DomainError("render_stm: px_size must lie in [1, 4] nm")
    if noise_rms < 0:
        raise DomainError("render_stm: noise_rms must be >= 0")
    W, H = ml.field_w, ml.field_h
    nx, ny = int(round(W / px_size)), int(round(H / px_size))
    if nx * ny > MAX_PIXELS:
        raise DomainError("render_stm: image exceeds 2**26 pixels")
    if nx < 1 or ny < 1:
        raise DomainError("render_stm: field smaller than one pixel")
    pos = ml.positions
    if pos.size and (np.any(pos < 0) or np.any(pos[:, 0] >= W) or np.any(pos[:, 1] >= H)):
        raise DomainError("render_stm: molecule outside the field")
    z = np.zeros((ny, nx))
    n = len(ml)
    if n:
        step = px_size - stm_drift_rate * scan.t_line / 60.0
        if not step > 0:
            raise DomainError("STM drift outruns the slow scan")
        col = np.rint((pos[:, 0] - 0.5 * px_size) / step).astype(np.int64)
        row = np.rint(pos[:, 1] / px_size - 0.5).astype(np.int64)
        lo, hi = HEIGHT_RANGE
        height = lo + (hi - lo) * rng.uniforms(seed, "stm-height", 0, n)[:, 0]
        r = np.arange(-BUMP_HALF, BUMP_HALF + 1)
        stencil = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) * px_size ** 2
                         / (2 * BUMP_SIGMA ** 2))
        keep = (col >= 0) & (col < nx) & (row >= 0) & (row < ny)
        padded = np.zeros((ny + 2 * BUMP_HALF, nx + 2 * BUMP_HALF))
        # molecules in index order: overlapping bumps add deterministically
        for i in np.flatnonzero(keep):
            padded[row[i]:row[i] + 2 * BUMP_HALF + 1,
                   col[i]:col[i] + 2 * BUMP_HALF + 1] += height[i] * stencil
        z = padded[BUMP_HALF:-BUMP_HALF, BUMP_HALF:-BUMP_HALF].copy()
    if noise_rms > 0:
        count = (nx * ny + 3) // 4
        z += noise_rms * rng.normals(seed, "stm-noise", 0, count).ravel()[:nx * ny].reshape(ny, nx)
    return HeightMap(z, float(px_size))
