"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from flatnf.clusters import build_partition, super_actions, verify_partition
from flatnf.lattice import LatticeBall, TorusMetric, admissible_example, square_torus
from flatnf.measure import (
    NonResonanceSpec,
    ball_volume,
    gamma_ladder,
    monte_carlo_volume,
    nonresonant_fraction,
    sample_ball,
)
from flatnf.normalform import (
    CutoffRecord,
    FrequencyVector,
    cutoff_eval,
    draw_nonresonant_xi,
    generator,
    hamiltonian_consistency,
    initial_state,
    lie_step,
    solve_cohomological,
    z2_poly,
)
from flatnf.polyalg import ParamSchedule, annulus_samples, in_lambda, poisson_bracket, random_real_plain
from flatnf.resonance import (
    HomogeneousPoly,
    four_wave_check,
    kappa_filter,
    quartet_scan,
    rectangle_quartets,
)
from flatnf.simulator import build_hlo, integrate, rectangle_seed, stability_experiment


def _max_abs(p):
    return max((abs(c) for c in p.terms.values()), default=0.0)


def test_criterion_01_four_wave_integrability(record_criterion):
    t0 = time.time()
    ball = LatticeBall(2, 8)
    adm = quartet_scan(admissible_example(), ball)
    kappa_star = 0.5 * adm.min_nonzero
    bad = int((~adm.trivial & (np.abs(adm.omega) <= kappa_star)).sum())
    sq = quartet_scan(square_torus(2), ball)
    resonant = int((~sq.trivial & (sq.omega == 0)).sum())
    rect = len(rectangle_quartets(ball))
    elapsed = time.time() - t0
    ok = bad == 0 and resonant == rect and elapsed <= 120
    detail = (
        f"{len(adm.omega)} quartets, kappa*={kappa_star:.4g}, nontrivial below kappa*={bad}; "
        f"square resonant={resonant}, rectangles={rect}; {elapsed:.1f}s"
    )
    assert record_criterion(1, "four-wave integrability", ok, detail)


def test_criterion_02_four_wave_identity(record_criterion):
    m = admissible_example()
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(10_000):
        n1, n2, n4 = rng.integers(-50, 51, size=(3, 2))
        rec = four_wave_check(m, [n1, n2, n2 + n4 - n1, n4])
        worst = max(worst, rec.identity_residual / (1 + abs(rec.omega)))
    ok = worst <= 1e-12
    assert record_criterion(2, "four-wave identity", ok, f"max |Omega - 2g|/(1+|Omega|) = {worst:.2e} over 1e4 quartets")


def test_criterion_03_bracket_oracle(record_criterion):
    t0 = time.time()
    ball = LatticeBall(1, 2)
    rng = np.random.default_rng(30)
    support_ok = True
    coef_gap = anti = jac = 0.0
    for i in range(200):
        xi = rng.uniform(0.0, 1.0, len(ball))
        p = random_real_plain(ball, rng, 6, int(rng.integers(1, 5)))
        q = random_real_plain(ball, rng, 6, int(rng.integers(1, 5)))
        P, Q = p.recenter(xi), q.recenter(xi)
        fast = poisson_bracket(P, Q).pruned(0.0)
        oracle = p.bracket(q).recenter(xi).pruned(0.0)
        support_ok &= set(fast.terms) == set(oracle.terms)
        coef_gap = max(coef_gap, _max_abs(fast - oracle))
        anti = max(anti, _max_abs(fast + poisson_bracket(Q, P)))
        if i < 50:
            a, b, c = (random_real_plain(ball, rng, 4, 2).recenter(xi) for _ in range(3))
            J = poisson_bracket(poisson_bracket(a, b), c) + poisson_bracket(poisson_bracket(b, c), a) + poisson_bracket(poisson_bracket(c, a), b)
            jac = max(jac, _max_abs(J))
    elapsed = time.time() - t0
    ok = support_ok and coef_gap <= 1e-12 and anti <= 1e-10 and jac <= 1e-10 and elapsed <= 300
    detail = f"support equal={support_ok}, coef gap {coef_gap:.1e}, antisymmetry {anti:.1e}, Jacobi {jac:.1e}; {elapsed:.1f}s"
    assert record_criterion(3, "bracket oracle equivalence", ok, detail)


def test_criterion_04_cohomological_identity(record_criterion):
    # desk instances: xi from the iteration's parameter domain, omega from the
    # centred Hamiltonian; h > 0 is only forced where the cutoff allows it
    metric = TorusMetric(np.eye(1))
    ball = LatticeBall(1, 2)
    rng = np.random.default_rng(40)
    sched = ParamSchedule(0.05, 1.0, rbar_cap=8)
    weights = ball.brackets ** (2 * sched.s)
    worst = 0.0
    seen, redraws = set(), 0
    for i in range(100):
        alpha = int(rng.integers(0, 3))
        hval = (0.0, 1.0, float(rng.uniform(0.05, 0.95)))[i % 3]
        seen.add(("zero", "one", "interior")[i % 3])
        while True:
            xi = 400 * sched.epsilon**2 * rng.dirichlet(np.ones(len(ball) + 1))[:-1] / weights
            freq = initial_state(metric, ball, -1.0, xi, sched, [], track_grad=False).omega
            if hval == 0.0 or cutoff_eval(sched, freq, alpha, xi, 8, ball).h > 0:
                break
            redraws += 1
        Q = random_real_plain(ball, rng, 8, 4, 6).recenter(xi)
        chi = solve_cohomological(Q, freq, sched, alpha, CutoffRecord(hval))
        nrm = ball.norms
        inside = Q.filter(lambda k: in_lambda(k, nrm, sched, alpha + 1))
        residual = Q + poisson_bracket(z2_poly(ball, xi, freq), chi) - (Q - inside.scale(hval))
        worst = max(worst, _max_abs(residual))
    ok = worst <= 1e-12 and len(seen) == 3
    detail = f"max residual coefficient {worst:.2e} over 100 instances, h in {sorted(seen)}, {redraws} redraws"
    assert record_criterion(4, "cohomological identity", ok, detail)


def _chain(p, q, xi, metric, ball, sched, alpha, track):
    """center -> bracket -> cohomological solve, returning chi."""
    state = initial_state(metric, ball, -1.0, xi, sched, [], track_grad=track)
    P, Qp = p.recenter(xi, track_grad=track), q.recenter(xi, track_grad=track)
    B = poisson_bracket(P, Qp)
    B = B.filter(lambda k: sum(a + b + 2 * c for _, a, b, c in k) >= 6)
    h = cutoff_eval(sched, state.omega if track else FrequencyVector(state.omega.omega), alpha, xi, 8, ball)
    return solve_cohomological(B, state.omega, sched, alpha, h), h


def test_criterion_05_gradient_fidelity(record_criterion):
    t0 = time.time()
    metric = TorusMetric(np.eye(1))
    ball = LatticeBall(1, 2)
    sched = ParamSchedule(0.05, 1.0, rbar_cap=8)
    rng = np.random.default_rng(50)
    worst = 0.0
    step = 1e-6
    for _ in range(50):
        xi = rng.uniform(0.2, 1.0, len(ball))
        p = random_real_plain(ball, rng, 4, 3, 4)
        q = random_real_plain(ball, rng, 6, 3, 4)
        chi, _ = _chain(p, q, xi, metric, ball, sched, 0, True)
        for k in range(len(ball)):
            e = np.zeros(len(ball))
            e[k] = step
            plus, _ = _chain(p, q, xi + e, metric, ball, sched, 0, False)
            minus, _ = _chain(p, q, xi - e, metric, ball, sched, 0, False)
            for key in chi.terms:
                fd = (plus.terms.get(key, 0.0) - minus.terms.get(key, 0.0)) / (2 * step)
                g = chi.grads[key][k]
                scale = max(abs(g), abs(fd), 1e-8 * max(1.0, abs(chi.terms[key])))
                worst = max(worst, abs(g - fd) / scale)
    elapsed = time.time() - t0
    ok = worst <= 1e-5 and elapsed <= 120
    assert record_criterion(5, "xi-gradient fidelity", ok, f"max relative gap vs central differences {worst:.2e}; {elapsed:.1f}s")


def test_criterion_06_lie_step_contraction(record_criterion):
    t0 = time.time()
    metric = TorusMetric(np.eye(1))
    ball = LatticeBall(1, 2)
    sched = ParamSchedule(0.05, 1.0, 1, rbar_cap=8)
    extras = [kappa_filter(HomogeneousPoly.constant(3, ball, 1.0), metric, 1.0)]
    xi, draws = draw_nonresonant_xi(metric, ball, -1.0, sched, radius=2.0, seed=2024, extras=extras)
    state = initial_state(metric, ball, -1.0, xi, sched, extras)
    samples = annulus_samples(ball, xi, sched, 0, 20, np.random.default_rng(60))
    ysups = []
    worst = 0.0
    for j in range(3):
        chi = generator(state)
        new = lie_step(state, j, 6, 8)
        hist = new.history[-1]
        if j == 0:
            ysups.append(hist["lambda_Ysup_before"])
        ysups.append(hist["lambda_Ysup_after"])
        worst = max(worst, hamiltonian_consistency(state, new, chi, samples))
        state = new
    elapsed = time.time() - t0
    strict = all(b < a for a, b in zip(ysups, ysups[1:]))
    ok = strict and worst <= 1e-8 and elapsed <= 600
    trail = " -> ".join(f"{y:.3g}" for y in ysups)
    assert record_criterion(6, "Lie-step contraction", ok, f"Ysup {trail}; consistency {worst:.1e}; xi draw {draws}; {elapsed:.1f}s")


def test_criterion_07_cluster_partition(record_criterion):
    t0 = time.time()
    metric = admissible_example()
    part = build_partition(metric, LatticeBall(2, 16), 0.25)
    rep = verify_partition(part, metric)
    u = sample_ball(part.ball, 1.0, 1.0, 1, 70)[0]
    S = super_actions(u, part)
    gap = abs(math.fsum(S) - math.fsum(np.abs(u.amps) ** 2)) / math.fsum(np.abs(u.amps) ** 2)
    elapsed = time.time() - t0
    ok = rep.separation_ok and rep.dyadic_ok and gap <= 1e-15 and elapsed <= 60
    detail = f"{len(part.classes)} classes, separation={rep.separation_ok} (margin {rep.worst_margin:.3g}), dyadic={rep.dyadic_ok}, mass gap {gap:.1e}; {elapsed:.1f}s"
    assert record_criterion(7, "cluster partition", ok, detail)


def test_criterion_08_ball_volume(record_criterion):
    vol = ball_volume(LatticeBall(1, 0.5), 1.0, 1.0)
    est, sigma = monte_carlo_volume(1, 1_000_000, 80)
    within = abs(est - math.pi) <= 3 * sigma
    z_formula = abs(est - vol.formula_value) / sigma
    z_standard = abs(est - vol.standard_value) / sigma
    winner = "N!" if z_standard < z_formula else "(N+1)!"
    ok = within
    detail = f"MC {est:.5f} +- {sigma:.5f}; (N+1)! form {vol.formula_value:.5f} ({z_formula:.0f} sigma), N! form {vol.standard_value:.5f} ({z_standard:.1f} sigma); MC sides with {winner}"
    assert record_criterion(8, "ball volume", ok, detail)


def test_criterion_09_nonresonant_fraction(record_criterion):
    t0 = time.time()
    metric = TorusMetric(np.eye(1))
    ball = LatticeBall(1, 3)
    eps, s = 0.1, 1.0
    gamma = eps ** (1 / 30)
    spec = NonResonanceSpec(gamma, eps, s, 6)
    rep = nonresonant_fraction(metric, ball, s, eps, spec, 10_000, 90)
    bound_ok = rep.fraction >= rep.predicted_bound - rep.half_width
    ladder = gamma_ladder(metric, ball, s, eps, spec, [gamma / 8, gamma / 4, gamma / 2, gamma], 10_000, 90)
    fails = [1 - r.fraction for r in ladder]
    sig = [math.sqrt(max(f * (1 - f), 1e-12) / r.count) for f, r in zip(fails, ladder)]
    linear_ok = all(fails[i + 1] <= 2 * fails[i] + 3 * (sig[i + 1] + 2 * sig[i]) for i in range(3))
    elapsed = time.time() - t0
    ok = bound_ok and linear_ok and elapsed <= 300
    detail = (
        f"fraction {rep.fraction:.4f} (Wilson [{rep.wilson_interval[0]:.4f}, {rep.wilson_interval[1]:.4f}]) "
        f"vs bound {rep.predicted_bound:.4f}; ladder failure rates {[round(f, 4) for f in fails]} linear={linear_ok}; {elapsed:.1f}s"
    )
    assert record_criterion(9, "non-resonant fraction", ok, detail)


@pytest.mark.slow
def test_criterion_10_simulator_conservation(record_criterion):
    t0 = time.time()
    metric = admissible_example()
    ball = LatticeBall(2, 6)
    u0 = sample_ball(ball, 1.0, 0.05, 1, 100)[0]
    series = integrate(build_hlo(metric, ball, -1.0), u0, 1000.0, 0.01, stride=1000)
    mass, energy = series.relative_drift("mass"), series.relative_drift("energy")
    lin = integrate(build_hlo(metric, ball, 0.0), u0, 10.0, 0.01, stride=1000)
    exact = np.exp(-1j * ball.frequencies(metric) * 10.0) * u0.amps
    lin_err = float(np.abs(lin.final.amps - exact).max())
    elapsed = time.time() - t0
    ok = mass <= 1e-10 and energy <= 1e-8 and lin_err <= 1e-9 and elapsed <= 600
    detail = f"split scheme (exact linear part, implicit midpoint nonlinear part): mass drift {mass:.1e}, energy drift {energy:.1e}, linear closed-form error {lin_err:.1e}; {elapsed:.1f}s"
    assert record_criterion(10, "simulator conservation", ok, detail)


@pytest.mark.slow
def test_criterion_11_comparative_stability(record_criterion):
    t0 = time.time()
    eps = 0.05
    ball = LatticeBall(2, 3)
    u0 = rectangle_seed(ball, eps, 1.0, [(2, 0), (0, 1), (0, 0)], [0.3, 1.1, 2.0])
    rep = stability_experiment(admissible_example(), square_torus(2), ball, 1.0, eps, u0, 2 / eps**2, 0.02, stride=2000)
    elapsed = time.time() - t0
    ok = rep.ratio > 1 and elapsed <= 900
    curve_a = ", ".join(f"{x:.2e}" for x in rep.action_dev_a[::5])
    curve_b = ", ".join(f"{x:.2e}" for x in rep.action_dev_b[::5])
    detail = f"ratio square/admissible {rep.ratio:.3g}; admissible [{curve_a}]; square [{curve_b}]; {elapsed:.1f}s"
    assert record_criterion(11, "comparative stability", ok, detail)
