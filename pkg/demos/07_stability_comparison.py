"""Rectangle data on the irrational and the square torus.

On the square torus a rectangle is an exact four-wave resonance, so energy
flows to the missing corner.  On the irrational torus the same data stay put.
"""

from flatnf.lattice import LatticeBall, admissible_example, square_torus
from flatnf.simulator import rectangle_seed, stability_experiment

ball = LatticeBall(2, 3)
eps = 0.3
seed = rectangle_seed(ball, eps, 1.0, [(0, 0), (2, 0), (2, 1)])

rep = stability_experiment(admissible_example(), square_torus(2), ball, 1.0, eps, seed, T=100.0, dt=0.02, stride=500)
for t, a, b in zip(rep.times, rep.action_dev_a, rep.action_dev_b):
    print(f"t {t:6.1f}   irrational {a:.3e}   square {b:.3e}")
print(f"peak deviation ratio square / irrational: {rep.ratio:.1f}")
