"""Zero-momentum quartets and their resonance values.

On the square torus the nontrivial exact resonances are the rectangles; on
the irrational torus only the trivial quartets resonate.
"""

import numpy as np

from flatnf.lattice import LatticeBall, admissible_example, square_torus
from flatnf.resonance import HomogeneousPoly, four_wave_check, kappa_filter, quartet_scan, rectangle_quartets

ball = LatticeBall(2, 4)

# %% Enumerate every quartet n1 - n2 + n3 - n4 = 0 inside the ball.
for name, metric in [("square", square_torus(2)), ("irrational", admissible_example())]:
    scan = quartet_scan(metric, ball)
    nontrivial = ~scan.trivial
    exact = int((nontrivial & (scan.omega == 0)).sum())
    print(f"{name:>10}: {len(scan.omega)} quartets, {int(nontrivial.sum())} nontrivial, {exact} exactly resonant, smallest |Omega| {scan.min_nonzero:.3g}")

# %% Thales: n2 lies on the circle with diameter n1 n3, so the resonant set of
# the square torus can be built geometrically and compared.
rects = rectangle_quartets(ball)
print(f"rectangles found geometrically: {len(rects)}")

# %% The four-wave identity Omega = 2 g(n1 - n2, n3 - n2) holds on every quartet.
rec = four_wave_check(admissible_example(), [(2, 1), (0, 1), (-1, 3), (1, 3)])
print(f"sample quartet: Omega {rec.omega:.6f}, identity residual {rec.identity_residual:.1e}")

# %% A kappa-filter keeps the near-resonant part of a quartic polynomial.
P = HomogeneousPoly.constant(2, LatticeBall(2, 2))
for kappa in (0.1, 1.0, 5.0):
    kept = kappa_filter(P, admissible_example(), kappa)
    print(f"kappa {kappa:>4}: keeps {len(kept)} of {len(P)} coefficients")
