"""Talbot-Lau molecular density pattern behind a symmetric two-grating setup.

G1 is treated as an array of mutually incoherent line sources, so only its
intensity mask enters.  G2 is a complex transmission (open slits carrying the
van der Waals eikonal phase).  For ``L1 == L2 == L`` the density at the
detector has period ``d`` and Fourier coefficients

    S_mu = c_{-mu} * B_{2mu}(xi),   xi = L / L_T,

with ``c`` the G1 intensity coefficients and ``B`` the Talbot-Lau
coefficients of G2.  ``B`` can be formed two ways: as a phase-weighted
autocorrelation of the amplitude coefficients ``b_n`` (truncated order sum),
or directly in real space as the overlap of the transmission with a copy of
itself displaced by ``mu * xi * d``.  The real-space form contains every
diffraction order, which matters because the wall phase pushes a sizeable
part of the flux into orders far beyond any practical truncation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import DomainError, NumericalError
from .physics import (
    GratingSpec,
    InterferometerGeometry,
    MoleculeSpec,
    de_broglie_wavelength,
    eikonal_strength,
    intensity_coeffs,
    talbot_parameter,
)

MU_MAX = 16
NEG_CLAMP = 1e-9


@dataclass(frozen=True)
class Interferometer:
    """Everything that fixes the quantum pattern except the molecular speed."""

    g1: GratingSpec = GratingSpec(open_width_a=75.0)
    g2: GratingSpec = GratingSpec(open_width_a=150.0)
    geometry: InterferometerGeometry = InterferometerGeometry()
    molecule: MoleculeSpec = MoleculeSpec()
    delta_cut: float = 1.0
    mu_max: int = MU_MAX

    def __post_init__(self):
        if not np.isclose(self.g1.period_d, self.g2.period_d, rtol=1e-12):
            raise DomainError("Interferometer: G1 and G2 periods must match")
        if not 0 <= 2 * self.delta_cut < self.g2.open_width_a:
            raise DomainError("Interferometer: require 0 <= 2*delta_cut < a2")

    @property
    def period(self):
        return self.g2.period_d

    def xi(self, v):
        lam = de_broglie_wavelength(self.molecule, v)
        return talbot_parameter(self.geometry.L1, self.period, lam)


@dataclass
class FringeSpectrum:
    """Fourier coefficients ``S_m`` (``|m| <= m_max``) of a d-periodic density."""

    period: float
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 1 or self.coeffs.size % 2 != 1:
            raise DomainError("FringeSpectrum: need an odd-length coefficient vector")

    @property
    def m_max(self):
        return self.coeffs.size // 2

    def __getitem__(self, m):
        return self.coeffs[m + self.m_max]

    @property
    def s0(self):
        return self.coeffs[self.m_max].real

    def hermiticity_error(self):
        c = self.coeffs
        return float(np.max(np.abs(c[::-1] - np.conj(c))))

    def evaluate(self, x):
        m = np.arange(-self.m_max, self.m_max + 1)
        x = np.asarray(x, dtype=float)
        ph = np.exp(2j * np.pi * np.multiply.outer(x, m) / self.period)
        return (ph @ self.coeffs).real

    def scaled(self, factor):
        return FringeSpectrum(self.period, self.coeffs * factor, dict(self.meta))


@dataclass
class PatternCurve:
    """Density samples ``s`` on a uniform grid ``x`` (nm)."""

    x: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.x.shape != self.s.shape:
            raise DomainError("PatternCurve: x and s must have equal length")


def talbot_lau_coeffs(b, xi, mu_max=MU_MAX):
    """Talbot-Lau coefficients from amplitude coefficients (order sum).

    ``B_{2mu} = sum_n b_{n+2mu} conj(b_n) exp(-2 pi i mu (mu + n) xi)``

    The sum is truncated to the orders present in ``b``; the truncation error
    is of the order of the discarded power ``sum |b_n|**2``.

    Parameters
    ----------
    b : ndarray, shape (2N+1,)
        ``b[n + N]`` holds ``b_n``; ``N >= 2 * mu_max + 32`` is required.

    Returns
    -------
    ndarray, shape (2 * mu_max + 1,)
        ``B[mu + mu_max]`` holds ``B_{2mu}``.
    """
    if not xi > 0:
        raise DomainError("talbot_lau_coeffs: xi must be > 0")
    b = np.asarray(b, dtype=complex)
    n_max = b.size // 2
    if n_max < 2 * mu_max + 32:
        raise DomainError(
            f"talbot_lau_coeffs: b known to order {n_max}, need >= {2 * mu_max + 32}; "
            "raise n_max")
    n = np.arange(-n_max, n_max + 1)
    out = np.empty(2 * mu_max + 1, dtype=complex)
    for mu in range(-mu_max, mu_max + 1):
        s = 2 * mu
        lo, hi = max(-n_max, -n_max - s), min(n_max, n_max - s)
        nn = n[lo + n_max:hi + n_max + 1]
        terms = b[nn + s + n_max] * np.conj(b[nn + n_max])
        terms = terms * np.exp(-2j * np.pi * mu * ((mu + nn) * xi % 1.0))
        out[mu + mu_max] = terms.sum()
    out[mu_max] = out[mu_max].real
    return out


def talbot_lau_coeffs_direct(g, mol, v, xi, mu_max=MU_MAX, delta_cut=1.0, *,
                             rtol=quadrature.RTOL):
    """Talbot-Lau coefficients by real-space overlap, all orders included.

    ``B_{2mu} = exp(-2 pi i mu**2 xi) / d * integral t(x) conj(t(x + mu xi d))
    exp(-4 pi i mu x / d) dx`` over one period, which equals the order sum
    of :func:`talbot_lau_coeffs` taken to infinite order.
    """
    if not xi > 0:
        raise DomainError("talbot_lau_coeffs_direct: xi must be > 0")
    a, d = g.open_width_a, g.period_d
    if not 0 <= 2 * delta_cut < a:
        raise DomainError("require 0 <= 2*delta_cut < a")
    left = g.offset - 0.5 * a          # global position of the left wall
    lo, hi = left + delta_cut, left + a - delta_cut
    k = eikonal_strength(g, mol, v) if mol.c3 > 0 else 0.0

    def phi(x):
        u = x - left
        w = a - u
        return k * (1.0 / (u * u * u) + 1.0 / (w * w * w))

    out = np.empty(2 * mu_max + 1, dtype=complex)
    out[mu_max] = (hi - lo) / d
    for mu in range(1, mu_max + 1):
        shift = (mu * xi % 1.0) * d
        total = 0.0j
        for wrap in (0.0, d):
            s = shift - wrap
            x0, x1 = max(lo, lo - s), min(hi, hi - s)
            if x1 <= x0:
                continue
            kmu = 4 * np.pi * mu / d

            def theta(x, s=s):
                return phi(x) - phi(x + s) - kmu * x

            def integrand(x, theta=theta):
                return np.exp(1j * theta(x))

            bp = quadrature.phase_breakpoints(theta if k > 0 else None, x0, x1,
                                              max_width=d / (8 * mu))
            val, _ = quadrature.integrate(integrand, bp, rtol=rtol)
            total += val
        out[mu_max + mu] = np.exp(-2j * np.pi * (mu * mu * xi % 1.0)) * total / d
        out[mu_max - mu] = np.conj(out[mu_max + mu])
    return out


def fringe_spectrum(c, B, mu_max=MU_MAX, period=None):
    """Combine G1 intensity and G2 Talbot-Lau coefficients: ``S_mu = c_{-mu} B_{2mu}``."""
    c = np.asarray(c, dtype=complex)
    B = np.asarray(B, dtype=complex)
    pc, pb = c.size // 2, B.size // 2
    if pc < mu_max or pb < mu_max:
        raise DomainError(f"fringe_spectrum: inputs known to orders ({pc}, {pb}), "
                          f"need {mu_max}")
    mu = np.arange(-mu_max, mu_max + 1)
    coeffs = c[pc - mu] * B[pb + mu]
    coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
    return FringeSpectrum(np.nan if period is None else period, coeffs)


def spectrum_at_speed(setup, v, *, rtol=quadrature.RTOL):
    """Monochromatic fringe spectrum of ``setup`` at speed ``v`` (m/s)."""
    if not setup.geometry.symmetric:
        raise DomainError("coefficient method requires L1 == L2; use fresnel_oracle")
    xi = setup.xi(v)
    B = talbot_lau_coeffs_direct(setup.g2, setup.molecule, v, xi, setup.mu_max,
                                 setup.delta_cut, rtol=rtol)
    c = intensity_coeffs(setup.g1, max(8, setup.mu_max))
    fs = fringe_spectrum(c, B, setup.mu_max, setup.period)
    fs.meta.update(v=float(v), xi=float(xi))
    return fs


def velocity_average(setup, dist, *, threads=1, rtol=quadrature.RTOL):
    """Weight-average the fringe spectrum over a velocity distribution.

    Every speed yields a spectrum of the same period, so coefficient-wise
    averaging is exact.  Spectra are reduced in grid order, which keeps the
    result bitwise independent of ``threads``.
    """
    v = np.asarray(dist.v, dtype=float)
    w = np.asarray(dist.w, dtype=float)
    if v.size == 0:
        raise DomainError("velocity_average: empty distribution")
    keep = w > 0
    v, w = v[keep], w[keep]

    def one(vv):
        return spectrum_at_speed(setup, vv, rtol=rtol).coeffs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, v))
    else:
        parts = [one(vv) for vv in v]
    acc = np.zeros_like(parts[0])
    for wi, p in zip(w, parts):
        acc = acc + wi * p
    acc = acc / w.sum()
    fs = FringeSpectrum(setup.period, acc)
    fs.meta.update(v_mean=float(np.sum(w * v) / w.sum()), n_speeds=int(v.size))
    return fs


def sample_pattern(fs, n_points=512, n_periods=2):
    """Sample the density over ``n_periods`` periods on ``n_points`` points."""
    if n_points < 64:
        raise DomainError("sample_pattern: n_points must be >= 64")
    s0 = fs.s0
    if fs.hermiticity_error() > 1e-9 * max(abs(s0), 1e-300):
        raise NumericalError("spectrum is not hermitian",
                             {"error": fs.hermiticity_error(), "S0": s0})
    x = np.arange(n_points) * (n_periods * fs.period / n_points)
    s = fs.evaluate(x)
    floor = -NEG_CLAMP * s0
    if np.any(s < floor):
        raise NumericalError("negative density beyond roundoff",
                             {"min": float(s.min()), "S0": s0})
    return PatternCurve(x, np.maximum(s, 0.0))


def visibility_minmax(p):
    """``(S_max - S_min) / (S_max + S_min)`` of a sampled curve."""
    s = np.asarray(p.s if isinstance(p, PatternCurve) else p, dtype=float)
    hi, lo = s.max(), s.min()
    if hi + lo <= 0:
        raise DomainError("visibility_minmax: all-zero curve")
    return float((hi - lo) / (hi + lo))


def visibility_sinusoidal(fs):
    """First-harmonic visibility ``2 |S_1| / S_0``."""
    if not fs.s0 > 0:
        raise DomainError("visibility_sinusoidal: S0 must be > 0")
    if fs.m_max < 1:
        return 0.0
    return float(2 * abs(fs[1]) / fs.s0)
