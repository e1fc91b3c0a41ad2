"""Particle, grating and geometry types; de Broglie, Talbot and eikonal relations.

Units inside the package: lengths in nm, speeds in m/s, phases in rad,
molecular mass in amu, C3 in meV nm^3, grating separations in mm.
"""

from dataclasses import dataclass

import numpy as np
from scipy import constants as _sc

from . import quadrature
from .errors import DomainError

# 2019 SI exact values (h, k_B, e); amu from CODATA; standard gravity.
H = _sc.h
HBAR = _sc.hbar
K_B = _sc.k
AMU_KG = _sc.atomic_mass
E_CHARGE = _sc.e
G_ACCEL = _sc.g


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = H
    hbar: float = HBAR
    k_B: float = K_B
    amu_kg: float = AMU_KG
    g: float = G_ACCEL


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class MoleculeSpec:
    """Particle identity.

    Attributes
    ----------
    mass : float
        Molecular mass in amu (C60: 720).
    c3 : float
        Van der Waals wall coefficient in meV nm^3; 0 gives ideal masks.
    """

    mass: float = 720.0
    c3: float = 10.0

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError("MoleculeSpec: mass must be > 0")
        if not self.c3 >= 0:
            raise DomainError("MoleculeSpec: c3 must be >= 0")

    @property
    def mass_kg(self):
        return self.mass * AMU_KG


@dataclass(frozen=True)
class GratingSpec:
    """One material grating.  ``offset`` is the slit-centre position at x = 0."""

    period_d: float = 257.40
    open_width_a: float = 150.0
    thickness_b: float = 190.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.period_d > 0:
            raise DomainError("GratingSpec: period_d must be > 0")
        if not 0 < self.open_width_a < self.period_d:
            raise DomainError("GratingSpec: require 0 < open_width_a < period_d")
        if not self.thickness_b >= 0:
            raise DomainError("GratingSpec: thickness_b must be >= 0")

    @property
    def open_fraction(self):
        return self.open_width_a / self.period_d

    def shifted(self, delta):
        return GratingSpec(self.period_d, self.open_width_a, self.thickness_b,
                           self.offset + delta)


@dataclass(frozen=True)
class InterferometerGeometry:
    """Distances: ``L1`` (G1 to G2) and ``L2`` (G2 to detector) in mm."""

    L1: float = 13.2
    L2: float = 13.2
    source_distance: float = 110.0  # cm, informational only

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0):
            raise DomainError("InterferometerGeometry: L1 and L2 must be > 0")

    @property
    def symmetric(self):
        return np.isclose(self.L1, self.L2, rtol=1e-12, atol=0.0)


def de_broglie_wavelength(mol, v):
    """Return the de Broglie wavelength ``h / (m v)`` in pm."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("de_broglie_wavelength: speed must be > 0")
    lam = H / (mol.mass_kg * v) * 1e12
    return float(lam) if lam.ndim == 0 else lam


def talbot_length(d, lam):
    """Talbot length ``d**2 / lambda`` in mm, for ``d`` in nm and ``lam`` in pm."""
    if not (d > 0 and lam > 0):
        raise DomainError("talbot_length: d and lambda must be > 0")
    return (d * 1e-9) ** 2 / (lam * 1e-12) * 1e3


def talbot_parameter(L, d, lam):
    """Reduced distance ``xi = L / L_T`` (L in mm, d in nm, lam in pm)."""
    return L / talbot_length(d, lam)


def eikonal_strength(g, mol, v):
    """Prefactor ``C3 b / (hbar v)`` of the wall phase, in nm^3."""
    if not v > 0:
        raise DomainError("speed must be > 0")
    c3_si = mol.c3 * 1e-3 * E_CHARGE * 1e-27   # J m^3
    return c3_si * g.thickness_b * 1e-9 / (HBAR * v) * 1e27


def vdw_eikonal_phase(x, g, mol, v):
    """Van der Waals eikonal phase at distance ``x`` (nm) from the left slit wall.

    ``phi(x) = C3 b / (hbar v) * (x**-3 + (a - x)**-3)``
    """
    x = np.asarray(x, dtype=float)
    a = g.open_width_a
    if np.any((x <= 0) | (x >= a)):
        raise DomainError("vdw_eikonal_phase: x must lie strictly inside the slit")
    k = eikonal_strength(g, mol, v)
    phi = k * (x ** -3 + (a - x) ** -3)
    return float(phi) if phi.ndim == 0 else phi


def _wall_phase(k, a):
    return lambda u: k * (u ** -3 + (a - u) ** -3)


def grating_amplitude_coeffs(g, mol, v, n_max=64, delta_cut=1.0, *, method="auto",
                             rtol=quadrature.RTOL):
    """Fourier coefficients ``b_n`` of the complex G2 transmission.

    Material within ``delta_cut`` of either wall is treated as absorbing.

    Parameters
    ----------
    method : {"auto", "quadrature"}
        ``auto`` uses the closed-form slit transform when ``c3 == 0``.

    Returns
    -------
    ndarray of complex, shape (2 * n_max + 1,)
        ``b[n + n_max]`` holds ``b_n``.
    """
    if n_max < 8:
        raise DomainError("grating_amplitude_coeffs: n_max must be >= 8")
    a, d = g.open_width_a, g.period_d
    if not 0 <= 2 * delta_cut < a:
        raise DomainError("grating_amplitude_coeffs: require 0 <= 2*delta_cut < a")
    n = np.arange(-n_max, n_max + 1)
    shift = np.exp(-2j * np.pi * n * g.offset / d)
    width = a - 2 * delta_cut

    if mol.c3 == 0 and method == "auto":
        return width / d * np.sinc(n * width / d) * shift

    k = eikonal_strength(g, mol, v)
    phase = _wall_phase(k, a)
    kappa = 2 * np.pi / d

    def integrand(u):
        local = u - 0.5 * a
        # exp(-i n kappa x) for n = -n_max..n_max by recurrence, not exp per order
        rows = np.empty((n.size, u.size), dtype=complex)
        rows[0] = np.exp(1j * (phase(u) + n_max * kappa * local))
        rows[1:] = np.exp(-1j * kappa * local)
        return np.cumprod(rows, axis=0)

    bp = quadrature.phase_breakpoints(phase if k > 0 else None, delta_cut, a - delta_cut,
                                      max_width=d / (4 * n_max))
    # keep the (orders x nodes) work array near 128 MB
    val, _ = quadrature.integrate(integrand, bp, rtol=rtol,
                                  chunk_nodes=max(60, (1 << 23) // n.size))
    return val / d * shift


def intensity_coeffs(g, n_max=64):
    """Fourier coefficients ``c_p`` of the G1 intensity mask ``|t1|**2``."""
    if n_max < 8:
        raise DomainError("intensity_coeffs: n_max must be >= 8")
    p = np.arange(-n_max, n_max + 1)
    f = g.open_fraction
    return f * np.sinc(p * f) * np.exp(-2j * np.pi * p * g.offset / g.period_d)
