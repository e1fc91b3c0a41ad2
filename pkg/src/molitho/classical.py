"""Classical moire baseline: straight rays through two gratings.

Rays start uniformly over one G1 period and pass only through its open
slits.  Their direction is uniform (``x2`` uniform in a window of +-W around
``x0``), they are absorbed by G2 bars and by the thin bands next to the G2
walls, and they receive an impulsive van der Waals kick in the G2 plane.
The detector coordinate is folded into one period.

Besides the raw histogram the result carries a smoothed density built from
the per-ray Fourier sums up to ``mu_max`` harmonics.  That reconstruction has
no bin attenuation and matches the harmonic content of the quantum pattern,
so the two visibilities are directly comparable.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DomainError, NumericalError
from .physics import E_CHARGE
from .quantum import MU_MAX, PatternCurve, visibility_minmax

CHUNK = 1 << 18
N_BATCHES = 64
N_BOOT = 200


@dataclass
class RaySample:
    """Traced rays (nm); ``x3`` is folded into ``[0, d)`` and NaN for absorbed rays."""

    x0: np.ndarray
    x2: np.ndarray
    survived: np.ndarray
    x3: np.ndarray


@dataclass
class ClassicalResult:
    histogram: PatternCurve
    smoothed: PatternCurve
    visibility: float
    visibility_se: float
    transmitted_fraction: float
    n_rays: int
    n_survived: int
    coeffs: np.ndarray


def vdw_kick(x, g, mol, v, delta_cut=1.0):
    """Transverse velocity change (m/s) at distance ``x`` (nm) from the left wall.

    ``dv = -(b / (m v)) dV/dx`` with ``V = -C3 (x**-3 + (a - x)**-3)``.
    """
    x = np.asarray(x, dtype=float)
    a = g.open_width_a
    if np.any((x <= delta_cut) | (x >= a - delta_cut)):
        raise DomainError("vdw_kick: x lies in the absorbed wall band")
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("vdw_kick: speed must be > 0")
    return _kick(x, a, g.thickness_b, mol, v)


def _kick(x, a, b, mol, v):
    c3 = mol.c3 * 1e-3 * E_CHARGE * 1e-27                  # J m^3
    xm, rm = x * 1e-9, (a - x) * 1e-9
    dVdx = 3 * c3 * (xm ** -4 - rm ** -4)                 # force gradient, J/m
    out = -(b * 1e-9) / (mol.mass_kg * v) * dVdx
    return float(out) if np.ndim(out) == 0 else out


def _check(geom, g1, g2, delta_cut, window):
    if not geom.symmetric:
        raise DomainError("classical_pattern: requires L1 == L2")
    if not np.isclose(g1.period_d, g2.period_d, rtol=1e-12):
        raise DomainError("classical_pattern: G1 and G2 periods must match")
    if not 0 <= 2 * delta_cut < g2.open_width_a:
        raise DomainError("classical_pattern: require 0 <= 2*delta_cut < a2")
    if window < 50:
        raise DomainError("classical_pattern: window must be >= 50 periods")


def _trace(u, geom, g1, g2, mol, dist, delta_cut, window, window_offset):
    d = g1.period_d
    v = dist.sample(u[:, 0])
    x0 = g1.offset - 0.5 * d + u[:, 1] * d
    W = window * d
    x2 = x0 + window_offset + (2 * u[:, 2] - 1) * W
    local1 = np.mod(x0 - g1.offset + 0.5 * g1.open_width_a, d)
    local2 = np.mod(x2 - g2.offset + 0.5 * g2.open_width_a, d)
    ok = (local1 < g1.open_width_a) & (local2 > delta_cut) & \
         (local2 < g2.open_width_a - delta_cut)
    x3 = np.full(x0.shape, np.nan)
    kick = np.zeros(int(ok.sum()))
    if mol.c3 > 0 and ok.any():
        kick = _kick(local2[ok], g2.open_width_a, g2.thickness_b, mol, v[ok])
    L1, L2 = geom.L1 * 1e6, geom.L2 * 1e6                  # nm
    xs = x2[ok] + (x2[ok] - x0[ok]) * L2 / L1 + kick / v[ok] * L2
    x3[ok] = np.mod(xs, d)
    return RaySample(x0, x2, ok, x3)


def sample_rays(geom, g1, g2, mol, dist, n_rays, seed=0, *, start=0, delta_cut=1.0,
                window=50, window_offset=0.0):
    """Trace rays ``start .. start + n_rays - 1``; each ray depends only on its index."""
    _check(geom, g1, g2, delta_cut, window)
    u = rng.uniforms(seed, "classical", start, n_rays)
    return _trace(u, geom, g1, g2, mol, dist, delta_cut, window, window_offset)


def _fourier_sums(x3, d, mu_max):
    z = np.exp(-2j * np.pi * x3 / d)
    out = np.empty(mu_max + 1, dtype=complex)
    p = np.ones_like(z)
    for m in range(mu_max + 1):
        out[m] = p.sum()
        p = p * z
    return out


def _smoothed(sums, n_rays, d, mu_max, n_eval=512):
    coeffs = sums / n_rays
    x = np.arange(n_eval) * (d / n_eval)
    m = np.arange(1, mu_max + 1)
    # mean of exp(-i k x3) is the coefficient of exp(+i k x)
    s = coeffs[0].real + 2 * (np.exp(2j * np.pi * np.outer(x, m) / d) @ coeffs[1:]).real
    return x, s


def classical_pattern(geom, g1, g2, mol, dist, n_rays=10**7, seed=0, *, n_bins=128,
                      delta_cut=1.0, window=50, window_offset=0.0, mu_max=MU_MAX,
                      threads=1):
    """Monte Carlo classical density at the detector.

    Parameters
    ----------
    dist : VelocityDistribution
        Speeds are drawn from it per ray.
    n_rays : int
        Rays launched (including those absorbed at G1 or G2).
    n_bins : int
        Histogram bins per period (>= 64).
    window : float
        Half-width ``W`` of the illuminated G2 region, in periods (>= 50).
    mu_max : int
        Harmonics kept in the smoothed density.
    threads : int
        Worker threads; the result does not depend on it.

    Returns
    -------
    ClassicalResult
        ``histogram`` and ``smoothed`` densities are normalised so their mean
        equals the transmitted fraction, like ``S_0`` of the quantum pattern.
        ``visibility`` is the min/max visibility of ``smoothed``; its standard
        error comes from a bootstrap over 64 ray batches.
    """
    _check(geom, g1, g2, delta_cut, window)
    if n_bins < 64:
        raise DomainError("classical_pattern: need >= 64 bins per period")
    if n_rays < N_BATCHES * 1000:
        raise DomainError(f"classical_pattern: need n_rays >= {N_BATCHES * 1000}")
    d = g1.period_d
    edges = np.linspace(0.0, d, n_bins + 1)
    bounds = np.linspace(0, n_rays, N_BATCHES + 1).astype(np.int64)

    def run(batch):
        lo, hi = bounds[batch], bounds[batch + 1]
        counts = np.zeros(n_bins, dtype=np.int64)
        sums = np.zeros(mu_max + 1, dtype=complex)
        for start in range(lo, hi, CHUNK):
            n = min(CHUNK, hi - start)
            u = rng.uniforms(seed, "classical", start, n)
            rays = _trace(u, geom, g1, g2, mol, dist, delta_cut, window, window_offset)
            x3 = rays.x3[rays.survived]
            counts += np.histogram(x3, bins=edges)[0]
            sums += _fourier_sums(x3, d, mu_max)
        return counts, sums, hi - lo

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(N_BATCHES)))
    else:
        parts = [run(b) for b in range(N_BATCHES)]

    counts = np.zeros(n_bins, dtype=np.int64)
    batch_sums = np.array([p[1] for p in parts])
    batch_n = np.array([p[2] for p in parts])
    for p in parts:
        counts += p[0]
    sums = batch_sums.sum(axis=0)
    n_surv = int(counts.sum())
    if n_surv == 0:
        raise NumericalError("classical_pattern: no ray survived", {"n_rays": n_rays})

    centres = 0.5 * (edges[1:] + edges[:-1])
    hist = PatternCurve(centres, counts / n_rays * n_bins)
    x, s = _smoothed(sums, n_rays, d, mu_max)
    smooth = PatternCurve(x, s)
    vis = visibility_minmax(smooth)

    gen = np.random.Generator(np.random.Philox(key=rng.stream_key(seed, "bootstrap")))
    boot = np.empty(N_BOOT)
    for i in range(N_BOOT):
        pick = gen.integers(0, N_BATCHES, N_BATCHES)
        _, sb = _smoothed(batch_sums[pick].sum(axis=0), batch_n[pick].sum(), d, mu_max)
        boot[i] = visibility_minmax(sb)
    return ClassicalResult(hist, smooth, vis, float(boot.std(ddof=1)), n_surv / n_rays,
                           int(n_rays), n_surv, sums / n_rays)
