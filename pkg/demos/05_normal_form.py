"""Quasi-resonant Birkhoff normal form and the modulated Lie iteration.

First the classical reduction removes non-resonant quartic and sextic terms.
Then the modulated iteration, centred at a non-resonant action vector,
removes the low-mode part of the remainder step by step.
"""

import numpy as np

from flatnf.lattice import LatticeBall, TorusMetric, admissible_example
from flatnf.normalform import (
    birkhoff_truncated,
    draw_nonresonant_xi,
    generator,
    hamiltonian_consistency,
    initial_state,
    lie_step,
)
from flatnf.polyalg import ParamSchedule, annulus_samples
from flatnf.resonance import HomogeneousPoly, kappa_filter

# %% Birkhoff: everything with |Omega| > kappa is removed degree by degree.
metric = admissible_example()
ball = LatticeBall(2, 1)
polys = [HomogeneousPoly.constant(2, ball, 1.0), HomogeneousPoly.constant(3, ball, 0.5)]
res = birkhoff_truncated(polys, metric, kappa=0.5, degree_cap=8)
for d in sorted(res.Q):
    print(f"degree {d}: {len(res.chi[d].terms)} generator terms, {len(res.Q[d].terms)} resonant terms kept")

# %% Modulated iteration on a one-dimensional ball, centred at a draw of
# actions whose small divisors clear the cutoff.
metric = TorusMetric(np.eye(1))
ball = LatticeBall(1, 2)
sched = ParamSchedule(0.05, 1.0, 1, rbar_cap=8)
extras = [kappa_filter(HomogeneousPoly.constant(3, ball, 1.0), metric, 1.0)]
xi, draws = draw_nonresonant_xi(metric, ball, -1.0, sched, radius=2.0, seed=2024, extras=extras)
print(f"actions accepted on draw {draws}: {np.array2string(xi, precision=2)}")

state = initial_state(metric, ball, -1.0, xi, sched, extras)
samples = annulus_samples(ball, xi, sched, 0, 10, np.random.default_rng(60))
for j in range(3):
    chi = generator(state)
    new = lie_step(state, j, 6, 8)
    h = new.history[-1]
    err = hamiltonian_consistency(state, new, chi, samples)
    print(f"step {j}: low-mode weighted norm {h['lambda_Ysup_before']:.3g} -> {h['lambda_Ysup_after']:.3g}, conjugacy error {err:.1e}")
    state = new
