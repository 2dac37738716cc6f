"""
Sensitivity to the weakest intensity
====================================

Re-optimise at fixed omega values between 1e-5 and 1e-3. As long as omega
stays below about 1e-3 the optimal key rate hardly moves, so the weakest
state need not be a true vacuum.
"""

import numpy as np

from decoy4.optimizer import OptProblem, scan

omegas = np.geomspace(1e-5, 1e-3, 7)
for protocol in ("four", "three"):
    rows = scan(OptProblem(protocol=protocol), [20.0, 60.0, 100.0], omegas=omegas, seed=0)
    for d in (20.0, 60.0, 100.0):
        rates = np.array([r.result.rate for r in rows if r.distance_km == d])
        spread = (rates.max() - rates.min()) / rates.max()
        cells = " ".join(f"{x:.3e}" for x in rates)
        print(f"{protocol:5s} {d:5.0f} km  {cells}  spread {spread:.2%}")
