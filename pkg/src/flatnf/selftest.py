"""Quick oracle-equivalence checks shipped with the package.

Each check compares a library routine with an independent computation on a
small instance and returns ``(name, passed, detail)``.  The full acceptance
suite lives with the tests; these run in seconds from an installed build.
"""

from __future__ import annotations

import numpy as np

from .clusters import build_partition, super_actions, verify_partition
from .lattice import LatticeBall, admissible_example, square_torus
from .measure import ball_volume, monte_carlo_volume
from .normalform import FrequencyVector, cutoff_eval, solve_cohomological, z2_poly
from .polyalg import ParamSchedule, poisson_bracket, random_real_plain
from .resonance import four_wave_check, quartet_scan, rectangle_quartets
from .simulator import build_hlo, integrate
from .state import FourierState

__all__ = ["run_all", "CHECKS"]


def check_four_wave(seed: int = 0):
    m = admissible_example()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(500):
        n1, n2, n4 = rng.integers(-8, 9, size=(3, 2))
        rec = four_wave_check(m, [n1, n2, n2 + n4 - n1, n4])
        worst = max(worst, rec.identity_residual / (1 + abs(rec.omega)))
    return worst <= 1e-12, f"worst scaled deviation {worst:.2e}"


def check_rectangles():
    ball = LatticeBall(2, 4)
    scan = quartet_scan(square_torus(2), ball)
    resonant = int(((scan.omega == 0) & ~scan.trivial).sum())
    rect = len(rectangle_quartets(ball))
    return resonant == rect, f"resonant {resonant}, rectangles {rect}"


def check_bracket(seed: int = 1):
    ball = LatticeBall(1, 2)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        xi = rng.uniform(0.1, 1.0, len(ball))
        p, q = random_real_plain(ball, rng), random_real_plain(ball, rng)
        diff = poisson_bracket(p.recenter(xi), q.recenter(xi)) - p.bracket(q).recenter(xi)
        worst = max([worst] + [abs(c) for c in diff.terms.values()])
    return worst <= 1e-12, f"worst coefficient gap {worst:.2e}"


def check_cohomological(seed: int = 2):
    ball = LatticeBall(1, 2)
    rng = np.random.default_rng(seed)
    sched = ParamSchedule(0.05, 1.0)
    worst = 0.0
    for _ in range(10):
        xi = rng.uniform(0.1, 1.0, len(ball))
        Q = random_real_plain(ball, rng, 8, 4, 6).recenter(xi)
        freq = FrequencyVector(rng.uniform(0.5, 3.0, len(ball)))
        h = cutoff_eval(sched, freq, 0, xi, 8, ball)
        chi = solve_cohomological(Q, freq, sched, 0, h)
        lhs = Q + poisson_bracket(z2_poly(ball, xi, freq), chi)
        rhs = Q - Q.filter(lambda k: k in chi.terms).scale(h.h)
        worst = max([worst] + [abs(c) for c in (lhs - rhs).terms.values()])
    return worst <= 1e-12, f"worst residual {worst:.2e}"


def check_partition():
    m = admissible_example()
    p = build_partition(m, LatticeBall(2, 8), 0.25)
    rep = verify_partition(p, m)
    u = np.random.default_rng(3).standard_normal(len(p.ball)) + 0j
    gap = abs(super_actions(u, p).sum() - float((np.abs(u) ** 2).sum()))
    ok = rep.separation_ok and rep.dyadic_ok and gap <= 1e-12
    return ok, f"classes {len(p.classes)}, margin {rep.worst_margin:.3f}, mass gap {gap:.1e}"


def check_volume():
    vol = ball_volume(LatticeBall(1, 0.5), 1.0, 1.0)
    est, sig = monte_carlo_volume(1, 200_000, 4)
    ok = abs(est - vol.standard_value) <= 4 * sig
    return ok, f"MC {est:.4f} +- {sig:.4f}; N! form {vol.standard_value:.4f}; (N+1)! form {vol.formula_value:.4f}"


def check_linear_flow():
    m = admissible_example()
    ball = LatticeBall(2, 3)
    u = np.random.default_rng(5).standard_normal(len(ball)) * 0.05 + 0j
    H = build_hlo(m, ball, 0.0)
    out = integrate(H, FourierState(ball, u), 10.0, 0.05, stride=1000)
    exact = np.exp(-1j * ball.frequencies(m) * 10.0) * u
    err = float(np.abs(out.final.amps - exact).max())
    return err <= 1e-9, f"max error {err:.1e}"


CHECKS = {
    "four_wave_identity": check_four_wave,
    "rectangle_count": check_rectangles,
    "bracket_oracle": check_bracket,
    "cohomological_identity": check_cohomological,
    "cluster_partition": check_partition,
    "ball_volume": check_volume,
    "linear_flow": check_linear_flow,
}


def run_all() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported as such
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results


if __name__ == "__main__":
    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    raise SystemExit(0 if all(ok for _, ok, _ in results) else 1)
