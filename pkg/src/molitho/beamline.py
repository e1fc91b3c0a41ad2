"""Thermal source and velocity selection.

The helical selector is modelled as a rotating drum with thin-walled helical
grooves.  A molecule entering a groove keeps a fixed lab-frame angle while
the groove turns beneath it; it is transmitted if its angular offset from
the groove centre stays inside the groove half-width over the full length.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DomainError, NumericalError
from .physics import G_ACCEL, K_B


@dataclass(frozen=True)
class SelectorSpec:
    """Helical velocity selector.

    Attributes
    ----------
    length : float
        Groove length along the beam, mm.
    groove_width : float
        Groove width, um.
    radius : float
        Groove radius, mm.  Not published; 27.5 mm reproduces a 5 % FWHM.
    twist_angle : float
        Total helix twist over ``length``, rad.
    spin_rate : float
        Rotation frequency, Hz.
    """

    length: float = 40.0
    groove_width: float = 300.0
    radius: float = 27.5
    twist_angle: float = 0.2185
    spin_rate: float = 100.0

    def __post_init__(self):
        for name in ("length", "groove_width", "radius", "twist_angle"):
            if not getattr(self, name) > 0:
                raise DomainError(f"SelectorSpec: {name} must be > 0")
        if not self.spin_rate >= 0:
            raise DomainError("SelectorSpec: spin_rate must be >= 0")
        if not self.groove_angle < self.twist_angle:
            raise DomainError("SelectorSpec: groove angular width must be < twist_angle")

    @property
    def groove_angle(self):
        """Angular groove width ``w / r`` in rad."""
        return self.groove_width * 1e-3 / self.radius

    @property
    def center_velocity(self):
        """Transmitted centre speed ``2 pi f L / twist`` in m/s."""
        return 2 * np.pi * self.spin_rate * self.length * 1e-3 / self.twist_angle

    @property
    def resolution(self):
        """Approximate FWHM ``dv / v`` of the triangular transmission."""
        return self.groove_angle / self.twist_angle


@dataclass
class VelocityDistribution:
    """Normalised weights ``w`` on a uniform, increasing speed grid ``v`` (m/s)."""

    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.v.shape != self.w.shape or self.v.ndim != 1:
            raise DomainError("VelocityDistribution: v and w must be 1-d of equal length")
        if self.v.size > 1 and np.any(np.diff(self.v) <= 0):
            raise DomainError("VelocityDistribution: grid must be strictly increasing")
        if np.any(self.w < 0):
            raise DomainError("VelocityDistribution: weights must be >= 0")
        total = self.w.sum()
        if not total > 0:
            raise DomainError("VelocityDistribution: weights sum to zero")
        self.w = self.w / total

    @classmethod
    def monochromatic(cls, v0):
        return cls(np.array([float(v0)]), np.array([1.0]))

    @property
    def mean(self):
        return float(np.sum(self.w * self.v))

    @property
    def fwhm(self):
        """Full width at half maximum from linear interpolation of the samples."""
        w, v = self.w, self.v
        if w.size < 3:
            return 0.0
        i = int(np.argmax(w))
        half = 0.5 * w[i]
        left = i
        while left > 0 and w[left - 1] > half:
            left -= 1
        right = i
        while right < w.size - 1 and w[right + 1] > half:
            right += 1
        if left == 0 or right == w.size - 1:
            raise NumericalError("distribution does not fall to half maximum on its grid")
        vl = np.interp(half, [w[left - 1], w[left]], [v[left - 1], v[left]])
        vr = np.interp(half, [w[right + 1], w[right]], [v[right + 1], v[right]])
        return float(vr - vl)

    def sample(self, u):
        """Map uniforms ``u`` in (0, 1) to grid speeds by inverse CDF."""
        cdf = np.cumsum(self.w)
        idx = np.searchsorted(cdf, u * cdf[-1], side="right")
        return self.v[np.minimum(idx, self.v.size - 1)]


def knudsen_weight(T, mol, v):
    """Unnormalised effusive-beam flux density ``v**3 exp(-m v**2 / (2 k_B T))``."""
    if not T > 0:
        raise DomainError("knudsen_weight: T must be > 0")
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("knudsen_weight: v must be > 0")
    return v ** 3 * np.exp(-mol.mass_kg * v * v / (2 * K_B * T))


def knudsen_peak_velocity(T, mol):
    return float(np.sqrt(3 * K_B * T / mol.mass_kg))


def selector_transmission_analytic(s, v):
    """Triangular transmission in the arrival-angle mismatch."""
    if not s.spin_rate > 0:
        raise DomainError("selector_transmission_analytic: spin_rate must be > 0")
    v = np.asarray(v, dtype=float)
    mismatch = s.twist_angle * (s.center_velocity / v - 1.0)
    return np.maximum(0.0, 1.0 - np.abs(mismatch) / s.groove_angle)


def selector_transmission_mc(s, v, n_samples=100_000, seed=0, n_stations=33):
    """Monte Carlo transmission of the rotating helical grooves.

    Entrance angular offset is uniform across the groove and entrance time
    uniform over one revolution.  The molecule's fixed lab angle is compared
    with the groove centre at ``n_stations`` axial positions.

    Returns
    -------
    (float, float)
        Transmitted fraction and its binomial standard error.
    """
    if n_samples < 10_000:
        raise DomainError("selector_transmission_mc: need n_samples >= 1e4")
    u = rng.uniforms(seed, ("selector", float(v)), 0, n_samples)
    omega = 2 * np.pi * s.spin_rate
    period = 1.0 / s.spin_rate if s.spin_rate > 0 else 1.0
    t0 = u[:, 1] * period
    psi0 = u[:, 2] * 2 * np.pi
    offset0 = (u[:, 0] - 0.5) * s.groove_angle
    alpha = psi0 + omega * t0 + offset0            # lab angle of the molecule
    length = s.length * 1e-3
    z = np.linspace(0.0, length, n_stations)
    t = t0[:, None] + z[None, :] / v
    groove = psi0[:, None] + omega * t - s.twist_angle * z[None, :] / length
    rel = np.angle(np.exp(1j * (alpha[:, None] - groove)))
    passed = np.all(np.abs(rel) <= 0.5 * s.groove_angle, axis=1)
    p = float(passed.mean())
    return p, float(np.sqrt(max(p * (1 - p), 1.0 / n_samples) / n_samples))


def build_velocity_distribution(T, mol, s, grid_points=61, use_selector=True):
    """Knudsen flux times selector transmission on ``[v0 (1 - 3 r), v0 (1 + 3 r)]``.

    ``r`` is the selector resolution.  An odd ``grid_points`` puts ``v0`` on
    the grid so the transmission apex is sampled.
    """
    if grid_points < 21:
        raise DomainError("build_velocity_distribution: grid_points must be >= 21")
    v0, r = s.center_velocity, s.resolution
    v = np.linspace(v0 * (1 - 3 * r), v0 * (1 + 3 * r), grid_points)
    w = knudsen_weight(T, mol, v)
    if use_selector:
        w = w * selector_transmission_analytic(s, v)
    if not np.any(w > 0):
        raise NumericalError("selector passband lies outside the thermal distribution")
    w = w / w.max()
    return VelocityDistribution(v, w)


def gravity_velocity_at_height(flight_length, drop):
    """Speed whose free fall over ``flight_length`` (m) equals ``drop`` (mm)."""
    if not drop > 0:
        raise DomainError("gravity_velocity_at_height: drop must be > 0")
    return float(flight_length * np.sqrt(G_ACCEL / (2 * drop * 1e-3)))
