"""Quantum fringes versus the classical shadow for the reference setup.

Prints the visibility of the monochromatic and velocity-averaged patterns,
then the classical Monte Carlo baseline and the ratio between them.

    python3 demos/01_fringe_visibility.py
"""

from molitho import pipeline
from molitho.config import default_config
from molitho.quantum import sample_pattern, visibility_minmax, visibility_sinusoidal

cfg = default_config().with_value("run", "classical_rays", 2_000_000)
dist = pipeline.beam(cfg)
print(f"beam: mean {dist.mean:.1f} m/s, FWHM/mean {dist.fwhm / dist.mean:.3f}")

q = pipeline.quantum(cfg, threads=4, dist=dist)
for name, fs in (("115 m/s only", q.mono), ("velocity averaged", q.averaged),
                 ("after 30 min of G2 drift", q.drifted)):
    v_mm = visibility_minmax(sample_pattern(fs))
    print(f"{name:>26s}: V = {v_mm:.3f} (first harmonic {visibility_sinusoidal(fs):.3f})")

cl = pipeline.classical(cfg, dist, threads=4)
print(f"{'classical moire':>26s}: V = {cl.visibility:.3f} +- {cl.visibility_se:.3f}")
print(f"quantum / classical = {visibility_minmax(sample_pattern(q.averaged)) / cl.visibility:.1f}")
