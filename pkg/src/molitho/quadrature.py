"""Adaptive quadrature for smooth but strongly oscillating integrands.

The integrands met in this package are of the form ``A(x) exp(i Theta(x))``
where ``Theta`` can wind through tens of thousands of radians close to a
grating wall.  A plain adaptive scheme wastes most of its effort discovering
where the oscillation is; here the caller supplies the phase so the initial
partition already places roughly one panel per ``phase_step`` radians, and
the adaptive layer only has to polish.

Each panel is integrated with Gauss-Legendre rules of ``order`` and
``2 * order`` nodes; their difference is the panel error estimate.  Panels
failing their share of the global tolerance are bisected.  Integrands may be
vector valued (``f(x)`` returns shape ``(m, len(x))``), which lets a whole
set of Fourier coefficients share one set of nodes.
"""

import numpy as np

from .errors import NumericalError

RTOL = 1e-9
ATOL = 1e-15
MAX_SUBDIVISIONS = 10**6

_GL_CACHE = {}
_ROUNDOFF = 200 * np.finfo(float).eps


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def phase_breakpoints(phase, lo, hi, phase_step=2 * np.pi, max_width=None, n_pre=20001):
    """Partition ``[lo, hi]`` into panels of bounded phase variation.

    Parameters
    ----------
    phase : callable or None
        Vectorised phase function ``Theta(x)``.  ``None`` means non-oscillatory.
    lo, hi : float
        Interval end points, ``lo < hi``.
    phase_step : float
        Target total variation of ``Theta`` per panel, in radians.
    max_width : float, optional
        Upper bound on panel width (resolves oscillations not in ``phase``).
    n_pre : int
        Size of the pre-grid used to measure the phase variation.  The
        pre-grid is Chebyshev-clustered at both ends, where wall phases
        diverge.

    Returns
    -------
    ndarray
        Strictly increasing breakpoints including ``lo`` and ``hi``.
    """
    lo = float(lo)
    hi = float(hi)
    if not hi > lo:
        raise ValueError("empty interval")
    width = hi - lo
    if max_width is None:
        max_width = width
    t = np.linspace(0.0, 1.0, n_pre)
    x = lo + width * 0.5 * (1.0 - np.cos(np.pi * t))
    x[0], x[-1] = lo, hi
    budget = np.diff(x) / max_width
    if phase is not None:
        budget = budget + np.abs(np.diff(phase(x))) / phase_step
    cum = np.concatenate(([0.0], np.cumsum(budget)))
    n_panels = max(1, int(np.ceil(cum[-1])))
    targets = np.linspace(0.0, cum[-1], n_panels + 1)
    bp = np.interp(targets, cum, x)
    bp[0], bp[-1] = lo, hi
    return np.unique(bp)


def integrate(func, breakpoints, *, rtol=RTOL, atol=ATOL, order=10,
              max_subdivisions=MAX_SUBDIVISIONS, chunk_nodes=400_000):
    """Integrate ``func`` over the union of panels given by ``breakpoints``.

    Parameters
    ----------
    func : callable
        ``func(x)`` for a 1-d node array returns an array whose last axis
        matches ``x``.  Leading axes are independent components.
    breakpoints : array_like
        Increasing panel boundaries.
    rtol, atol : float
        Target ``|error| <= max(atol, rtol * max(|I|, int |f|))``.  The L1
        scale matters for heavily cancelling oscillatory integrals, whose
        value can sit far below the attainable roundoff of its parts.
    order : int
        Low-order Gauss-Legendre rule; the check rule has ``2 * order`` nodes.
    max_subdivisions : int
        Total bisections allowed before giving up.

    Returns
    -------
    value : ndarray or complex
        Integral per component (scalar if ``func`` returns 1-d output).
    info : dict
        ``panels``, ``subdivisions`` and ``error_estimate``.
    """
    xg1, wg1 = _gauss_legendre(order)
    xg2, wg2 = _gauss_legendre(2 * order)
    bp = np.asarray(breakpoints, dtype=float)
    a = bp[:-1].copy()
    b = bp[1:].copy()

    accepted = None
    accepted_mag = 0.0
    accepted_err = 0.0
    subdivisions = 0
    total_panels = 0
    scalar = False

    while a.size:
        i1, i2, mag = _panel_rules(func, a, b, xg1, wg1, xg2, wg2, chunk_nodes)
        if i1.ndim == 1:
            scalar = True
            i1, i2 = i1[None, :], i2[None, :]
        err = np.max(np.abs(i2 - i1), axis=0)
        # panels whose estimate is at the roundoff level cannot improve
        err = np.where(err <= _ROUNDOFF * mag, 0.0, err)
        running = i2.sum(axis=1) if accepted is None else accepted + i2.sum(axis=1)
        l1 = accepted_mag + float(mag.sum())
        tol = max(atol, rtol * max(float(np.max(np.abs(running))), l1))
        if accepted_err + err.sum() <= tol:
            ok = np.ones(a.size, dtype=bool)
        else:
            share = tol * (b - a) / (bp[-1] - bp[0])
            ok = err <= share
        part = i2[:, ok].sum(axis=1)
        accepted = part if accepted is None else accepted + part
        accepted_err += float(err[ok].sum())
        accepted_mag += float(mag[ok].sum())
        total_panels += int(ok.sum())
        bad = ~ok
        if not bad.any():
            break
        subdivisions += int(bad.sum())
        if subdivisions > max_subdivisions:
            raise NumericalError(
                "quadrature did not converge",
                {"subdivisions": subdivisions, "open_panels": int(bad.sum()),
                 "worst_error": float(err[bad].max()), "tolerance": tol},
            )
        mid = 0.5 * (a[bad] + b[bad])
        a, b = np.concatenate((a[bad], mid)), np.concatenate((mid, b[bad]))
        order_idx = np.argsort(a, kind="stable")
        a, b = a[order_idx], b[order_idx]

    value = accepted[0] if scalar else accepted
    return value, {"panels": total_panels, "subdivisions": subdivisions,
                   "error_estimate": accepted_err}


def _panel_rules(func, a, b, xg1, wg1, xg2, wg2, chunk_nodes):
    n_nodes = len(xg1) + len(xg2)
    step = max(1, chunk_nodes // n_nodes)
    out1, out2, mags = [], [], []
    for start in range(0, a.size, step):
        aa = a[start:start + step, None]
        bb = b[start:start + step, None]
        half = 0.5 * (bb - aa)
        mid = 0.5 * (bb + aa)
        x1 = (mid + half * xg1).ravel()
        x2 = (mid + half * xg2).ravel()
        f = func(np.concatenate((x1, x2)))
        f1 = f[..., :x1.size].reshape(f.shape[:-1] + (aa.shape[0], len(xg1)))
        f2 = f[..., x1.size:].reshape(f.shape[:-1] + (aa.shape[0], len(xg2)))
        out1.append((f1 @ wg1) * half[:, 0])
        out2.append((f2 @ wg2) * half[:, 0])
        absf = np.abs(f2)
        if absf.ndim > 2:
            absf = absf.max(axis=tuple(range(absf.ndim - 2)))
        mags.append((absf @ wg2) * half[:, 0])
    return (np.concatenate(out1, axis=-1), np.concatenate(out2, axis=-1),
            np.concatenate(mags))
