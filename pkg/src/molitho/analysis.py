"""Molecule detection, fringe profiles and the weighted sinusoid fit."""

from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, DomainError, NumericalError

LM_LAMBDA0 = 1e-3
LM_MAX_ITER = 200
LM_CHI2_RTOL = 1e-10
LM_STEP_ATOL = 1e-12
PEAK_CONTRAST = 5.0


@dataclass
class BinaryMap:
    """Detections ``bits[row, col]`` (0/1); rows along y, columns along x."""

    bits: np.ndarray
    px_size: float

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2:
            raise DomainError("BinaryMap: bits must be 2-d")

    @property
    def ny(self):
        return self.bits.shape[0]

    @property
    def nx(self):
        return self.bits.shape[1]

    @property
    def count(self):
        return int(self.bits.sum(dtype=np.int64))


@dataclass
class Profile:
    """Counts per column centre ``x`` (nm) with Poisson variances ``weights``."""

    x: np.ndarray
    counts: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if not (self.x.shape == self.counts.shape == self.weights.shape):
            raise DomainError("Profile: x, counts and weights must have equal length")
        if np.any(self.counts < 0):
            raise DomainError("Profile: counts must be >= 0")


@dataclass
class LMResult:
    theta: np.ndarray
    covariance: np.ndarray
    chi2: float
    n_iter: int
    trace: list = field(default_factory=list)


@dataclass
class FringeFit:
    A: float
    B: float
    phi0: float
    d_fit: float
    covariance: np.ndarray
    V: float
    sigma_V: float
    chi2: float
    n_iter: int


def _ring_offsets(offset):
    o = offset
    return [(dy, dx) for dy in (-o, 0, o) for dx in (-o, 0, o) if (dy, dx) != (0, 0)]


def detect_molecules(hm, dz_min=0.5, dz_max=0.9, offset=3, neighbor_mode="ring"):
    """Flag pixels standing ``dz_min .. dz_max`` above their neighbourhood mean.

    ``ring`` compares with the eight pixels at Chebyshev distance exactly
    ``offset``; ``block`` with the mean of the rest of the
    ``(2 offset + 1)**2`` block.  Pixels closer than ``offset`` to an edge
    are never flagged.
    """
    z = hm.z
    ny, nx = z.shape
    o = int(offset)
    if o < 1:
        raise DomainError("detect_molecules: offset must be >= 1")
    if ny < 2 * o + 1 or nx < 2 * o + 1:
        raise AnalysisError(f"detect_molecules: map smaller than {2 * o + 1}x{2 * o + 1}")
    core = z[o:ny - o, o:nx - o]
    if neighbor_mode == "ring":
        acc = np.zeros_like(core)
        for dy, dx in _ring_offsets(o):
            acc += z[o + dy:ny - o + dy, o + dx:nx - o + dx]
        mean = acc / 8.0
    elif neighbor_mode == "block":
        c = np.zeros((ny + 1, nx + 1))
        c[1:, 1:] = np.cumsum(np.cumsum(z, axis=0), axis=1)
        k = 2 * o + 1
        box = c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]
        mean = (box - core) / (k * k - 1)
    else:
        raise DomainError("detect_molecules: neighbor_mode must be 'ring' or 'block'")
    dz = core - mean
    bits = np.zeros(z.shape, dtype=np.uint8)
    bits[o:ny - o, o:nx - o] = (dz >= dz_min) & (dz <= dz_max)
    return BinaryMap(bits, hm.px_size)


def bin_image(bm, k=5):
    """Sums over non-overlapping ``k x k`` boxes; partial boxes are dropped."""
    if k < 1:
        raise DomainError("bin_image: k must be >= 1")
    ny, nx = (bm.ny // k) * k, (bm.nx // k) * k
    b = bm.bits[:ny, :nx].astype(np.int64)
    return b.reshape(ny // k, k, nx // k, k).sum(axis=(1, 3))


def column_profile(bm):
    counts = bm.bits.sum(axis=0, dtype=np.int64).astype(float)
    x = (np.arange(bm.nx) + 0.5) * bm.px_size
    return Profile(x, counts, np.maximum(counts, 1.0))


def _moving_sum(v, window):
    lead = window // 2
    padded = np.pad(v, (lead, window - 1 - lead), mode="symmetric")
    c = np.concatenate(([0.0], np.cumsum(padded)))
    return c[window:] - c[:-window]


def smooth_profile(p, window=20, stride=1):
    """Centred moving sum of ``window`` columns (reflective ends), every ``stride``-th kept.

    Counts and Poisson variances are summed alike.  With ``stride == window``
    the output bins are disjoint and statistically independent.
    """
    n = p.counts.size
    if not 1 <= window < n:
        raise DomainError("smooth_profile: need 1 <= window < profile length")
    if stride < 1:
        raise DomainError("smooth_profile: stride must be >= 1")
    counts = _moving_sum(p.counts, window)
    weights = _moving_sum(p.weights, window)
    x = p.x
    if window % 2 == 0:
        # even windows are centred between columns
        dx = (p.x[1] - p.x[0]) if n > 1 else 0.0
        x = p.x - 0.5 * dx
    if stride > 1:
        start = window // 2
        sl = slice(start, n - (window - 1 - window // 2), stride)
        x, counts, weights = x[sl], counts[sl], weights[sl]
    return Profile(x, counts, weights)


def _numeric_jacobian(model, x, theta):
    f0 = model(x, theta)
    J = np.empty((f0.size, theta.size))
    for k in range(theta.size):
        h = 1e-7 * max(abs(theta[k]), 1.0)
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        J[:, k] = (model(x, tp) - model(x, tm)) / (2 * h)
    return J


def lm_fit(model, x, y, weights, theta0, jacobian=None):
    """Levenberg-Marquardt minimisation of ``sum (y - model(x, theta))**2 / weights``.

    Parameters
    ----------
    model : callable
        ``model(x, theta) -> ndarray``.
    weights : ndarray
        Variances of ``y`` (not inverse variances).
    jacobian : callable, optional
        ``jacobian(x, theta) -> (n, p)``; central differences otherwise.

    Returns
    -------
    LMResult
        ``covariance`` is the inverse undamped normal matrix at the optimum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 / np.asarray(weights, dtype=float)
    theta = np.array(theta0, dtype=float)
    if y.size <= theta.size:
        raise DomainError("lm_fit: need more data points than parameters")
    jac = jacobian or (lambda xx, th: _numeric_jacobian(model, xx, th))

    def chi2_of(th):
        r = y - model(x, th)
        return float(np.sum(w * r * r)), r

    chi2, r = chi2_of(theta)
    lam = LM_LAMBDA0
    trace = [(0, chi2, lam)]
    n_iter = 0
    converged = chi2 == 0.0
    while not converged:
        if n_iter >= LM_MAX_ITER:
            raise NumericalError("lm_fit: no convergence", {"trace": trace})
        n_iter += 1
        J = jac(x, theta)
        N = J.T @ (w[:, None] * J)
        g = J.T @ (w * r)
        Nd = N + lam * np.diag(np.diag(N))
        try:
            step = np.linalg.solve(Nd, g)
        except np.linalg.LinAlgError:
            raise NumericalError("lm_fit: singular normal matrix", {"trace": trace}) from None
        trial = theta + step
        chi2_t, r_t = chi2_of(trial)
        if np.isfinite(chi2_t) and chi2_t <= chi2:
            rel = (chi2 - chi2_t) / chi2 if chi2 > 0 else 0.0
            theta, r, chi2 = trial, r_t, chi2_t
            lam /= 10.0
            converged = rel < LM_CHI2_RTOL or chi2 == 0.0
        else:
            lam *= 10.0
        trace.append((n_iter, chi2, lam))
        if np.linalg.norm(step) < LM_STEP_ATOL:
            converged = True
    J = jac(x, theta)
    N = J.T @ (w[:, None] * J)
    if not np.all(np.isfinite(N)) or np.linalg.cond(N) > 1e15:
        raise NumericalError("lm_fit: singular normal matrix at optimum", {"trace": trace})
    cov = np.linalg.inv(N)
    return LMResult(theta, 0.5 * (cov + cov.T), chi2, n_iter, trace)


def sine_model(x, theta):
    A, B, phi0, d = theta
    return A * np.sin(2 * np.pi * x / d + phi0) + B


def sine_jacobian(x, theta):
    A, B, phi0, d = theta
    arg = 2 * np.pi * x / d + phi0
    s, c = np.sin(arg), np.cos(arg)
    return np.column_stack((s, np.ones_like(x), A * c, -A * c * 2 * np.pi * x / d ** 2))


def fit_fringe(p, d_init):
    """Fit ``A sin(2 pi x / d + phi0) + B`` to a profile; ``V = A / B``."""
    if not d_init > 0:
        raise DomainError("fit_fringe: d_init must be > 0")
    if p.x.size < 5 or p.x[-1] - p.x[0] < 3 * d_init * (1 - 1.0 / p.x.size):
        raise AnalysisError("fit_fringe: profile must span at least 3 periods")
    y = p.counts
    B0 = float(y.mean())
    A0 = float(np.sqrt(2.0) * y.std())
    # sum y exp(-i k x) ~ (A N / 2i) exp(i phi0)
    z = np.sum((y - B0) * np.exp(-2j * np.pi * p.x / d_init))
    phi_init = float(np.angle(z) + 0.5 * np.pi) if abs(z) > 0 else 0.0
    theta0 = np.array([A0 if A0 > 0 else 1e-3 * max(B0, 1.0), B0, phi_init, float(d_init)])
    res = lm_fit(sine_model, p.x, y, p.weights, theta0, sine_jacobian)
    A, B, phi0, d = res.theta
    cov = res.covariance.copy()
    if A < 0:
        A, phi0 = -A, phi0 + np.pi
        cov[0, :] *= -1
        cov[:, 0] *= -1
    phi0 = float(np.mod(phi0, 2 * np.pi))
    if not B > 0:
        raise AnalysisError("fit_fringe: fitted offset B <= 0")
    V = A / B
    var = cov[0, 0] / B ** 2 + (A * A / B ** 4) * cov[1, 1] - 2 * A * cov[0, 1] / B ** 3
    return FringeFit(float(A), float(B), phi0, float(d), cov, float(V),
                     float(np.sqrt(max(var, 0.0))), res.chi2, res.n_iter)


def estimate_period_orientation(bm, k=5, pad=8, min_detections=500):
    """Dominant period (nm) and wave-vector angle (rad, from +x) of a detection map.

    The ``k x k`` binned count grid is mean-subtracted and zero-padded
    ``pad`` times; the strongest non-DC peak of its power spectrum is refined
    by 3-point parabolic interpolation along each axis.  No taper is applied:
    with only a handful of fringes in the field a window costs more in
    statistical precision than it saves in leakage.
    """
    if bm.count < min_detections:
        raise AnalysisError(f"estimate_period_orientation: need >= {min_detections} detections")
    grid = bin_image(bm, k).astype(float)
    ny, nx = grid.shape
    if ny < 4 or nx < 4:
        raise AnalysisError("estimate_period_orientation: binned grid too small")
    grid = grid - grid.mean()
    My, Mx = pad * ny, pad * nx
    P = np.abs(np.fft.fft2(grid, s=(My, Mx))) ** 2
    P = np.fft.fftshift(P)
    cy, cx = My // 2, Mx // 2
    fy = (np.arange(My) - cy)
    fx = (np.arange(Mx) - cx)
    # half plane kx > 0 (or kx == 0, ky > 0), away from the DC main lobe
    kx, ky = np.meshgrid(fx, fy)
    half = (kx > 0) | ((kx == 0) & (ky > 0))
    near_dc = (np.abs(kx) <= 2 * pad) & (np.abs(ky) <= 2 * pad)
    search = np.where(half & ~near_dc, P, -np.inf)
    iy, ix = np.unravel_index(np.argmax(search), P.shape)
    peak = P[iy, ix]
    background = np.median(P[half & ~near_dc])
    if not peak > PEAK_CONTRAST * background:
        raise AnalysisError("estimate_period_orientation: no periodic structure")

    def parabolic(m1, m0, p1):
        den = m1 - 2 * m0 + p1
        return 0.0 if den == 0 else 0.5 * (m1 - p1) / den

    ox = parabolic(P[iy, ix - 1], peak, P[iy, (ix + 1) % Mx]) if ix > 0 else 0.0
    oy = parabolic(P[iy - 1, ix], peak, P[(iy + 1) % My, ix]) if iy > 0 else 0.0
    cyc_x = (ix - cx + ox) / (Mx * k * bm.px_size)     # cycles per nm
    cyc_y = (iy - cy + oy) / (My * k * bm.px_size)
    f = np.hypot(cyc_x, cyc_y)
    return float(1.0 / f), float(np.arctan2(cyc_y, cyc_x))


def significance(V_obs, sigma_V, V_classical):
    """Distance of the observed visibility from the classical one in standard errors."""
    if not sigma_V > 0:
        raise DomainError("significance: sigma_V must be > 0")
    return float((V_obs - V_classical) / sigma_V)
