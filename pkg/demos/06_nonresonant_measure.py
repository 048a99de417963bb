"""Uniform sampling on the weighted ball and the small-divisor test.

Estimates the fraction of actions whose modulated frequencies keep every
divisor above gamma eps^2, with a Wilson interval.
"""

import numpy as np

from flatnf.lattice import LatticeBall, TorusMetric, admissible_example
from flatnf.measure import NonResonanceSpec, ball_volume, gamma_ladder, monte_carlo_volume

# %% Volume of {sum <n>^{2s} |u_n|^2 < rho^2}: Monte Carlo settles the normalisation.
vol = ball_volume(LatticeBall(1, 0.5), 1.0, 1.0)
est, sig = monte_carlo_volume(1, 1_000_000, seed=80)
print(f"unit disc: MC {est:.4f} +- {sig:.4f}; N! form {vol.standard_value:.4f}; (N+1)! form {vol.formula_value:.4f}")
big = ball_volume(LatticeBall(2, 10), 1.0, 0.1)
print(f"{big.N} sites: log volume {big.log_standard:.1f} (kept in log space)")

# %% Pass fraction against the threshold constant, on one fixed sample set.
metric = admissible_example()
ball = LatticeBall(2, 2)
eps = 0.9
spec = NonResonanceSpec(0.5, eps, 1.0, degree_cap=4)
for rep in gamma_ladder(metric, ball, 1.0, eps, spec, [0.01, 0.1, 0.3, 0.5, 0.9], 5000, seed=2):
    lo, hi = rep.wilson_interval
    print(f"gamma {rep.gamma:<5} pass fraction {rep.fraction:.3f}  [{lo:.3f}, {hi:.3f}]")

# %% With small data on the square circle, patterns built only from sites
# sharing a frequency push every divisor below gamma eps^2.
one_d = TorusMetric(np.eye(1))
eps = 0.1
spec = NonResonanceSpec(eps ** (1 / 30), eps, 1.0, degree_cap=6)
rep = gamma_ladder(one_d, LatticeBall(1, 3), 1.0, eps, spec, [spec.gamma], 2000, seed=90)[0]
print(f"1D, eps {eps}: pass fraction {rep.fraction:.3f} against bound {rep.predicted_bound:.3f} ({rep.extra['patterns']} patterns)")
