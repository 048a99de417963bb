"""Torus geometry: frequencies on a lattice ball and the admissibility scan.

Run with ``python3 demos/01_lattice_admissibility.py``.
"""

import numpy as np

from flatnf.lattice import LatticeBall, admissibility_scan, admissible_example, square_torus

# %% Two tori: the irrational metric [[1, sqrt 2], [sqrt 2, 3]] and the square one.
irrational = admissible_example()
square = square_torus(2)
ball = LatticeBall(2, 3)
print(f"ball |n| <= 3 holds {len(ball)} sites")

# %% Linear frequencies lambda_n^2 = n^T G n.  On the square torus whole shells
# share a frequency; the irrational metric splits them.
for name, metric in [("square", square), ("irrational", irrational)]:
    lam2 = ball.frequencies(metric)
    distinct = len(np.unique(np.round(lam2, 12)))
    print(f"{name:>10}: {distinct} distinct frequencies over {len(ball)} sites")

# %% The scan looks for small |g(a, b)| |a|^tau |b|^tau.  Exact zeros mean
# orthogonal lattice vectors, which the square torus has in abundance.
for name, metric in [("square", square), ("irrational", irrational)]:
    rep = admissibility_scan(metric, 6)
    print(f"{name:>10}: min weighted value {rep.min_value:.3g} at {rep.argmin_a}, {rep.argmin_b}; exact zeros {len(rep.zero_hits)}")

print("the scan is a finite-range check, not a proof of admissibility")
