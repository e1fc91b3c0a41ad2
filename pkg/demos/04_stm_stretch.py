"""Apparent fringe period in STM images taken while the sample drifts.

With the slow scan axis along x, a drift of r nm/min stretches the image by
1 / (1 - r t_line / px).  The script renders the same deposit at a few drift
rates and reports the fitted and FFT-estimated periods.

    python3 demos/04_stm_stretch.py
"""

from molitho import pipeline
from molitho.config import default_config
from molitho.deposition import apparent_stretch

cfg = default_config()
q = pipeline.quantum(cfg, threads=4)
px = cfg.get("imaging", "px_size")
print("rate (nm/min)  stretch  expected (nm)  d_fit (nm)  FFT (nm)")
for rate in (0.0, 0.2, 0.4, 0.6):
    s = apparent_stretch(px, cfg.scan, rate)
    img = pipeline.image(cfg, q.drifted, seed=0, stm_drift_rate=rate)
    print(f"{rate:13.1f}  {s:7.4f}  {257.40 * s:13.1f}  {img.fit.d_fit:10.1f}  "
          f"{img.period_est:8.1f}")
