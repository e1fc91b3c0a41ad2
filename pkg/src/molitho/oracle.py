"""Direct Fresnel-integral oracle for the Talbot-Lau pattern.

For a line source at ``x0`` in the G1 plane the paraxial field at the
detector coordinate ``x`` is

    psi(x; x0) = int t2(x2) exp(i k [(x2 - x0)**2 / (2 L1) + (x - x2)**2 / (2 L2)]) dx2.

Completing the square shows ``|psi|**2 = |F(s)|**2`` with

    F(s) = int t2(x2) exp(i beta (x2 - s)**2) dx2,
    s = w0 x0 + w1 x,   w0 = L2 / (L1 + L2),   w1 = L1 / (L1 + L2),

and ``beta = k (1/L1 + 1/L2) / 2``.  ``|F|**2`` is d-periodic in ``s``, so it
is tabulated once on a uniform grid over one period; the incoherent sum over
source points is then done harmonic by harmonic.

``F`` is summed slit by slit over a window of ``2 J + 1`` G2 slits with a
smooth taper.  Each slit integral is evaluated without truncation:

* ideal masks: closed-form Fresnel integrals;
* with the wall phase: ``exp(i beta y**2) H(2 beta y)`` for the slit core,
  ``H`` being a tabulated Fourier transform of ``exp(i phi(u) + i beta u**2)``,
  plus integration-by-parts end-point terms for the thin bands next to the
  walls, where the phase gradient is far beyond any stationary point in the
  window.

A window of ``J`` slits captures diffraction orders up to about ``2 J / xi``.
For sharp-edged slits the missing power falls like ``1 / J`` and Richardson
extrapolation over ``(J, 2 J)`` removes it.  The wall phase scatters flux
into far higher orders (their power falls only like ``J**-1/4``), so with a
strong wall interaction the window sum converges very slowly; the
convergence report then says so.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import fresnel

from .errors import DomainError, NumericalError
from .physics import de_broglie_wavelength, eikonal_strength
from .quadrature import _gauss_legendre
from .quantum import PatternCurve

# |phi'| (rad/nm) at the inner edge of the wall bands: well above any chirp
# gradient in the window, so the bands carry no stationary point.
BAND_GRADIENT = 1000.0
# demodulated H(kappa) is sampled at 0.2 / (a / 2) and read back with an
# 8-point Lagrange rule
_H_STEP = 0.2
_LAGRANGE = 8


@dataclass
class OracleReport:
    """Convergence history: ``(window, max relative change)`` per doubling."""

    history: list = field(default_factory=list)
    converged: bool = False
    window: int = 0
    source_samples: int = 0
    gl_nodes: int = 0
    discretisation_change: float = float("nan")

    @property
    def max_rel_change(self):
        return self.history[-1][1] if self.history else float("nan")


def _rel_change(new, old):
    return float(np.max(np.abs(new - old)) / np.max(np.abs(new)))


def _taper(r):
    """1 for ``|r| <= 1/2``, cos**2 roll-off to 0 at ``|r| = 1``."""
    r = np.abs(r)
    out = np.where(r <= 0.5, 1.0, np.cos(np.pi * (r - 0.5)) ** 2)
    return np.where(r >= 1.0, 0.0, out)


class _IdealSlit:
    """``int_{lo}^{hi} exp(i beta (y + u)**2) du`` in closed form."""

    def __init__(self, lo, hi, beta):
        self.lo, self.hi, self.beta = lo, hi, beta

    def __call__(self, y):
        c = np.sqrt(2 * self.beta / np.pi)
        s1, c1 = fresnel(c * (y + self.lo))
        s2, c2 = fresnel(c * (y + self.hi))
        return np.sqrt(np.pi / (2 * self.beta)) * ((c2 - c1) + 1j * (s2 - s1))


class _PhaseSlit:
    """``int_{delta}^{a - delta} exp(i phi(u) + i beta (y + u)**2) du``."""

    def __init__(self, a, delta, K, beta, y_max, gl_nodes):
        self.a, self.delta, self.K, self.beta = a, delta, K, beta
        u_band = (3 * K / BAND_GRADIENT) ** 0.25
        # the wall bands must not contain stationary points for any |y| <= y_max
        if 3 * K / max(u_band, delta) ** 4 < 4 * beta * (y_max + a):
            u_band = (3 * K / (4 * beta * (y_max + a))) ** 0.25
        self.u_c = min(max(delta, u_band), 0.25 * a)
        self.kappa_max = 2 * beta * (y_max + a)
        self._build_table(gl_nodes)

    def _derivs(self, u):
        K = self.K
        l, r = 1.0 / u, 1.0 / (self.a - u)
        p0 = K * (l ** 3 + r ** 3)
        p1 = K * (-3 * l ** 4 + 3 * r ** 4)
        p2 = K * (12 * l ** 5 + 12 * r ** 5)
        p3 = K * (-60 * l ** 6 + 60 * r ** 6)
        return p0, p1, p2, p3

    def _build_table(self, gl_nodes):
        a, beta = self.a, self.beta
        lo, hi = self.u_c, a - self.u_c
        pre = np.linspace(lo, hi, 8001)
        phase = self._derivs(pre)[0] + beta * pre ** 2
        budget = (np.abs(np.diff(phase)) + self.kappa_max * np.diff(pre)) / (2 * np.pi)
        cum = np.concatenate(([0.0], np.cumsum(budget)))
        n_pan = max(4, int(np.ceil(cum[-1])))
        bp = np.interp(np.linspace(0.0, cum[-1], n_pan + 1), cum, pre)
        xg, wg = _gauss_legendre(gl_nodes)
        half = 0.5 * np.diff(bp)[:, None]
        mid = 0.5 * (bp[1:] + bp[:-1])[:, None]
        u = (mid + half * xg).ravel()
        w = (half * wg).ravel()
        # demodulate about the slit centre so the table is smooth in kappa
        uc = u - 0.5 * a
        amp = w * np.exp(1j * (self._derivs(u)[0] + beta * u * u))

        self.dk = _H_STEP / (0.5 * a)
        n_half = int(np.ceil(self.kappa_max / self.dk)) + _LAGRANGE
        kappa = np.arange(-n_half, n_half + 1) * self.dk
        table = np.empty(kappa.size, dtype=complex)
        step = np.exp(1j * self.dk * uc)
        reseed = 64
        for start in range(0, kappa.size, reseed):
            row = amp * np.exp(1j * kappa[start] * uc)
            for i in range(start, min(start + reseed, kappa.size)):
                table[i] = row.sum()
                row = row * step
        self.k0 = kappa[0]
        self.table = table

    def _core(self, kappa):
        t = (kappa - self.k0) / self.dk
        i0 = np.floor(t).astype(np.int64) - (_LAGRANGE // 2 - 1)
        frac = t - i0
        out = np.zeros(kappa.shape, dtype=complex)
        nodes = np.arange(_LAGRANGE)
        for k in nodes:
            wk = np.ones_like(frac)
            for m in nodes:
                if m != k:
                    wk = wk * (frac - m) / (k - m)
            out += wk * self.table[i0 + k]
        return out * np.exp(0.5j * self.a * kappa)

    def _ends(self, u, y):
        """``exp(i Theta) h(u)`` with ``h`` the integration-by-parts series."""
        p0, p1, p2, p3 = self._derivs(u)
        z = y + u
        theta = p0 + self.beta * z * z
        t1 = p1 + 2 * self.beta * z
        t2 = p2 + 2 * self.beta
        h = -1j / t1 - t2 / t1 ** 3 - 1j * p3 / t1 ** 4 + 3j * t2 * t2 / t1 ** 5
        return np.exp(1j * theta) * h

    def __call__(self, y):
        out = np.exp(1j * self.beta * y * y) * self._core(2 * self.beta * y)
        if self.u_c > self.delta:
            a, uc, dl = self.a, self.u_c, self.delta
            out += self._ends(uc, y) - self._ends(dl, y)
            out += self._ends(a - dl, y) - self._ends(a - uc, y)
        return out


def _F_grid(J, M, d, slit, offset, a):
    """Tapered window sum ``F(s_m)``, ``s_m = m d / M``."""
    s = np.arange(M) * (d / M)
    out = np.zeros(M, dtype=complex)
    rows = max(1, 2 ** 21 // M)
    js = np.arange(-J - 1, J + 2)
    for start in range(0, js.size, rows):
        j = js[start:start + rows, None]
        centre = j * d + offset
        w = _taper((centre - s) / (J * d))
        live = w > 0
        if not live.any():
            continue
        y = (centre - 0.5 * a) - s               # left edge minus s
        g = np.zeros(w.shape, dtype=complex)
        g[live] = slit(y[live])
        out += (w * g).sum(axis=0)
    return out


def _source_period_count(w0):
    frac = Fraction(w0).limit_denominator(64)
    if abs(float(frac) - w0) > 1e-12:
        raise DomainError("fresnel_oracle: L2 / (L1 + L2) must be a ratio with "
                          "denominator <= 64")
    return frac.denominator


@dataclass
class _Setup:
    beta: float
    w0: float
    w1: float
    q0: int
    d: float
    a2: float
    offset2: float
    delta: float
    K: float
    xi_eff: float


def _setup(geom, g2, mol, v, delta_cut):
    lam = de_broglie_wavelength(mol, v) * 1e-3                  # nm
    k = 2 * np.pi / lam
    L1, L2 = geom.L1 * 1e6, geom.L2 * 1e6                        # nm
    beta = 0.5 * k * (1 / L1 + 1 / L2)
    w0 = L2 / (L1 + L2)
    d = g2.period_d
    K = eikonal_strength(g2, mol, v) if mol.c3 > 0 else 0.0
    return _Setup(beta, w0, 1 - w0, _source_period_count(w0), d, g2.open_width_a,
                  g2.offset, delta_cut, K, np.pi / (beta * d * d))


def _harmonics(st, J, gl_nodes, src_x0, mu_cap):
    """Pattern harmonics ``A_mu`` (``0 <= mu <= mu_cap``) for window ``J``."""
    d = st.d
    # |F|**2 carries harmonics up to about 4 J / xi_eff; sample above twice that
    M = 1024
    while M < 8 * J / st.xi_eff + 4 * st.q0 * mu_cap:
        M *= 2
    lo, hi = st.delta, st.a2 - st.delta
    if st.K > 0:
        slit = _PhaseSlit(st.a2, st.delta, st.K, st.beta, (J + 2) * d, gl_nodes)
    else:
        slit = _IdealSlit(lo, hi, st.beta)
    F = _F_grid(J, M, d, slit, st.offset2, st.a2)
    P = np.fft.fft(np.abs(F) ** 2) / M
    q = st.q0 * np.arange(mu_cap + 1)
    if q[-1] >= M // 2:
        raise NumericalError("fresnel_oracle: s grid too coarse for requested harmonics")
    D = np.exp(2j * np.pi * np.outer(q, st.w0 * src_x0) / d).mean(axis=1)
    return P[q] * D * (st.beta / np.pi)


def _sources(g1, n, periods):
    a1, d = g1.open_width_a, g1.period_d
    frac = (np.arange(n) + 0.5) / n
    return np.concatenate([g1.offset + m * d - 0.5 * a1 + a1 * frac
                           for m in range(periods)])


def _curve(A, period, n_x, g1):
    x = np.arange(n_x) * (2 * period / n_x)
    mu = np.arange(1, A.size)
    s = A[0].real + 2 * (np.exp(2j * np.pi * np.outer(x, mu) / period) @ A[1:]).real
    # the source average covers only open G1 area: scale to the mask's mean
    return x, s * g1.open_fraction


def fresnel_oracle(geom, g1, g2, mol, v, source_samples=256, slit_window=16, *,
                   delta_cut=1.0, gl_nodes=16, n_x=128, band_limit=None, tol=1e-3,
                   max_window=2048, strict=True, return_report=False):
    """Talbot-Lau density by direct Fresnel integration over the G2 slits.

    Parameters
    ----------
    geom : InterferometerGeometry
        ``L1 != L2`` is allowed when ``L2 / (L1 + L2)`` is a ratio of small
        integers (the pattern is then periodic).
    source_samples : int
        Line sources per G1 open slit (midpoint rule).  Sources are placed in
        as many G1 periods as the geometry needs for a periodic pattern (two
        for ``L1 == L2``).
    slit_window : int
        Initial half-width ``J`` of the G2 slit window, in periods (>= 10).
    gl_nodes : int
        Gauss-Legendre nodes per panel of at most ~2 pi phase.
    band_limit : int, optional
        Keep harmonics ``|mu| <= band_limit`` of the pattern.  By default all
        harmonics resolvable on the output grid are kept.
    tol : float
        Convergence threshold: maximum change relative to the peak density
        between successive window doublings.
    max_window : int
        Largest ``J`` tried before giving up.
    strict : bool
        Raise :class:`NumericalError` when not converged; otherwise return the
        last estimate and flag it in the report.

    Returns
    -------
    PatternCurve or (PatternCurve, OracleReport)
        Density over two pattern periods, normalised like
        :func:`molitho.quantum.sample_pattern` (mean equals ``S_0``).
    """
    if slit_window < 10:
        raise DomainError("fresnel_oracle: slit_window must be >= 10 periods")
    if source_samples < 8:
        raise DomainError("fresnel_oracle: source_samples must be >= 8")
    if not np.isclose(g1.period_d, g2.period_d, rtol=1e-12):
        raise DomainError("fresnel_oracle: G1 and G2 periods must match")
    if not 0 <= 2 * delta_cut < g2.open_width_a:
        raise DomainError("fresnel_oracle: require 0 <= 2*delta_cut < a2")
    if n_x < 16:
        raise DomainError("fresnel_oracle: n_x must be >= 16")
    st = _setup(geom, g2, mol, v, delta_cut)
    mu_cap = n_x // 4 - 1 if band_limit is None else min(int(band_limit), n_x // 4 - 1)
    period = st.d / (st.q0 * st.w1)

    report = OracleReport()
    J, ns, ng = int(slit_window), int(source_samples), int(gl_nodes)
    cache = {}

    def harm(J, ns, ng):
        key = (J, ns, ng)
        if key not in cache:
            cache[key] = _harmonics(st, J, ng, _sources(g1, ns, st.q0), mu_cap)
        return cache[key]

    prev = None
    while True:
        est = 2 * harm(2 * J, ns, ng) - harm(J, ns, ng)
        x, s = _curve(est, period, n_x, g1)
        if prev is not None:
            change = _rel_change(s, prev)
            report.history.append((2 * J, change))
            if change < tol:
                break
        if 4 * J > max_window:
            break
        prev = s
        J *= 2
    if report.history and report.history[-1][1] < tol:
        # discretisation check: twice the source points and quadrature nodes
        est2 = 2 * harm(2 * J, 2 * ns, 2 * ng) - harm(J, 2 * ns, 2 * ng)
        x, s2 = _curve(est2, period, n_x, g1)
        report.discretisation_change = _rel_change(s2, s)
        report.converged = report.discretisation_change < tol
        s = s2
        ns, ng = 2 * ns, 2 * ng
    report.window, report.source_samples, report.gl_nodes = 2 * J, ns, ng
    if not report.converged and strict:
        raise NumericalError("fresnel_oracle: window doubling did not converge",
                             {"history": report.history, "tol": tol})
    curve = PatternCurve(x, np.maximum(s, 0.0))
    return (curve, report) if return_report else curve


def single_slit_intensity(geom, x0, slit_centre, width, mol, v, x):
    """``|psi(x; x0)|**2`` behind one ideal slit, from closed-form Fresnel integrals.

    Units follow the oracle: nm for positions; ``|psi|**2`` in nm**2.
    """
    if not width > 0:
        raise DomainError("single_slit_intensity: width must be > 0")
    lam = de_broglie_wavelength(mol, v) * 1e-3
    k = 2 * np.pi / lam
    L1, L2 = geom.L1 * 1e6, geom.L2 * 1e6
    beta = 0.5 * k * (1 / L1 + 1 / L2)
    w0 = L2 / (L1 + L2)
    s = w0 * x0 + (1 - w0) * np.asarray(x, dtype=float)
    y = slit_centre - 0.5 * width - s
    return np.abs(_IdealSlit(0.0, width, beta)(y)) ** 2
