"""Frequency clusters and super-actions.

Sites close in both position and frequency are linked; the connected pieces
form clusters whose summed actions (super-actions) change slowly.
"""

import numpy as np

from flatnf.clusters import build_partition, largest_valid_delta, super_actions, verify_partition
from flatnf.lattice import LatticeBall, admissible_example

metric = admissible_example()
ball = LatticeBall(2, 12)

# %% Sweep the separation exponent and keep the largest one giving dyadic clusters.
best = largest_valid_delta(metric, ball, [0.1, 0.2, 0.25, 0.3, 0.4])
print(f"largest dyadic delta in the sweep: {best}")

# %% Build the partition and check it exhaustively.
part = build_partition(metric, ball, 0.25)
rep = verify_partition(part, metric)
sizes = np.bincount([len(c) for c in part.classes])
print(f"{len(part.classes)} classes; bounded class radius {part.bounded_radius:.2f}")
print(f"class sizes (size: count): {dict((i, int(c)) for i, c in enumerate(sizes) if c)}")
print(f"separation {rep.separation_ok} (worst margin {rep.worst_margin:.3g} at {rep.worst_pair}), dyadic {rep.dyadic_ok}")

# %% Super-actions add up to the mass.
rng = np.random.default_rng(0)
u = rng.standard_normal(len(ball)) + 1j * rng.standard_normal(len(ball))
S = super_actions(u, part)
print(f"sum of super-actions {S.sum():.12f}, mass {np.sum(np.abs(u) ** 2):.12f}")
