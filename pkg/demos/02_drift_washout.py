"""How slow grating drift washes out the recorded fringes.

A G2 drift moves the fringes twice as fast as the grating itself, so the
first harmonic of a 30 minute exposure is multiplied by a sinc of the total
excursion.

    python3 demos/02_drift_washout.py
"""

import numpy as np

from molitho.deposition import DriftModel, drift_multipliers, linear_drift_multiplier

d = 257.40
print("rate (nm/min)  excursion (nm)  |multiplier|  closed form")
for rate in np.arange(0.0, 4.51, 0.5):
    dm = DriftModel(rate_g2=rate)
    m1 = abs(drift_multipliers(dm, 30.0, d, 1)[2])
    D = dm.pattern_rate * 30.0
    print(f"{rate:13.1f}  {D:14.1f}  {m1:12.4f}  {linear_drift_multiplier(D, d):11.4f}")

print("\nequal drift of G1, G2 and the surface:",
      abs(drift_multipliers(DriftModel(2.5, 2.5, 2.5), 30.0, d, 1)[2]))
print("2 nm fast jitter alone:",
      abs(drift_multipliers(DriftModel(jitter_amp=2.0, jitter_freq=1.0), 30.0, d, 1)[2]))
