import numpy as np
import pytest

from flatnf.lattice import LatticeBall, admissible_example, square_torus
from flatnf.normalform import (
    FlowFailure,
    FrequencyVector,
    birkhoff_truncated,
    bump,
    bump_derivative,
    cutoff_eval,
    draw_nonresonant_xi,
    flow_differential_check,
    initial_state,
    key_omega,
    poly_flow,
    solve_cohomological,
    z2_poly,
)
from flatnf.polyalg import PlainPoly, ParamSchedule, evaluate, poisson_bracket, random_real_plain
from flatnf.resonance import HomogeneousPoly, kappa_filter

SCHED = ParamSchedule(0.05, 1.0)


def test_bump_plateau_and_support():
    x = np.linspace(-1.5, 1.5, 301)
    b = bump(x)
    assert np.all(b[np.abs(x) <= 0.5] == 1.0)
    assert np.all(b[np.abs(x) >= 1.0] == 0.0)
    assert np.all((b >= 0) & (b <= 1))
    np.testing.assert_array_equal(b, bump(-x))
    assert bump(0.75) == pytest.approx(np.exp(1.0 - 1.0 / (1.0 - 0.25)))


def test_bump_derivative_matches_finite_difference():
    x = np.linspace(0.51, 0.99, 25)
    h = 1e-6
    fd = (bump(x + h) - bump(x - h)) / (2 * h)
    np.testing.assert_allclose(bump_derivative(x), fd, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(bump_derivative(-x), -fd, rtol=1e-5, atol=1e-9)
    assert bump_derivative(0.3) == 0.0 and bump_derivative(1.2) == 0.0


def test_key_omega():
    omega = np.array([1.0, 2.0, 5.0])
    assert key_omega(((0, 2, 0, 1), (2, 0, 1, 0)), omega) == 2.0 - 5.0
    assert key_omega(((1, 0, 0, 3),), omega) == 0.0


# On the ball |n| <= 1 in one dimension the only unpaired pattern up to
# degree 4 is +-(1, -2, 1): u_{-1} u_{1} conj(u_0)^2 and its conjugate.
_SMALL = LatticeBall(1, 1)


def _omega_at(x_target, grad):
    scale = 1.0 / (SCHED.gamma_of(0) * SCHED.epsilon**2)
    # x = scale * 2 (w_-1 - 2 w_0 + w_1)
    w = np.array([0.0, 0.0, x_target / (2 * scale)])
    return FrequencyVector(w, grad)


def test_cutoff_counts_the_single_pattern():
    rec = cutoff_eval(SCHED, _omega_at(2.0, None), 0, np.zeros(3), 4, _SMALL)
    assert rec.h == 1.0
    assert rec.worst_argument == pytest.approx(2.0)
    # pattern and conjugate, each multiplied by the single action-free choice
    assert rec.factors == 2


@pytest.mark.parametrize("x", [0.3, 0.6, 0.75, 0.95, 1.5])
def test_cutoff_value_interior(x):
    rec = cutoff_eval(SCHED, _omega_at(x, None), 0, np.zeros(3), 4, _SMALL)
    assert rec.h == pytest.approx((1.0 - bump(x)) ** 2, abs=1e-15)


def test_cutoff_gradient_matches_finite_difference():
    rng = np.random.default_rng(0)
    J = rng.standard_normal((3, 3)) * 1e-3
    base = _omega_at(0.7, J)
    rec = cutoff_eval(SCHED, base, 0, np.zeros(3), 4, _SMALL)
    assert 0.0 < rec.h < 1.0
    step = 1e-7
    for k in range(3):
        plus = FrequencyVector(base.omega + step * J[:, k])
        minus = FrequencyVector(base.omega - step * J[:, k])
        fd = (
            cutoff_eval(SCHED, plus, 0, np.zeros(3), 4, _SMALL).h
            - cutoff_eval(SCHED, minus, 0, np.zeros(3), 4, _SMALL).h
        ) / (2 * step)
        assert rec.grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-10)


@pytest.mark.parametrize("h_value", [1.0, 0.4])
def test_cohomological_identity(h_value):
    from flatnf.normalform import CutoffRecord

    ball = LatticeBall(1, 2)
    rng = np.random.default_rng(4)
    xi = rng.uniform(0.1, 1.0, len(ball))
    Q = random_real_plain(ball, rng, 8, 5, 6).recenter(xi)
    freq = FrequencyVector(rng.uniform(0.5, 3.0, len(ball)))
    chi = solve_cohomological(Q, freq, SCHED, 0, CutoffRecord(h_value))
    lhs = Q + poisson_bracket(z2_poly(ball, xi, freq), chi)
    rhs = Q - Q.filter(lambda k: k in chi.terms).scale(h_value)
    assert (lhs - rhs).max_abs() <= 1e-12


def test_initial_state_reproduces_hamiltonian():
    m = admissible_example()
    ball = LatticeBall(2, 1)
    rng = np.random.default_rng(1)
    xi = rng.uniform(0.0, 1e-3, len(ball))
    st = initial_state(m, ball, -1.0, xi, SCHED)
    u = 0.03 * (rng.standard_normal(len(ball)) + 1j * rng.standard_normal(len(ball)))
    a2 = np.abs(u) ** 2
    direct = 0.5 * (ball.frequencies(m) * a2).sum() + 0.25 * (a2**2).sum()
    total = evaluate(st.hamiltonian().with_grad(False), u) + evaluate(st.remainder_poly(), u)
    assert total == pytest.approx(direct, abs=1e-15)
    # omega = lambda^2 / 2 + xi / 2 for f'(0) = -1, so d omega / d xi = I / 2
    np.testing.assert_allclose(st.omega.omega, 0.5 * ball.frequencies(m) + 0.5 * xi, atol=1e-15)
    np.testing.assert_allclose(st.omega.grad, 0.5 * np.eye(len(ball)), atol=1e-15)


def test_initial_state_rejects_nonintegrable_quartic():
    ball = LatticeBall(2, 1)
    extra = HomogeneousPoly.constant(2, ball, 0.1)
    with pytest.raises(ValueError, match="non-integrable"):
        initial_state(admissible_example(), ball, -1.0, np.zeros(len(ball)), SCHED, [extra])


def test_draw_nonresonant_xi_lands_in_domain():
    m = admissible_example()
    ball = LatticeBall(2, 1)
    sched = ParamSchedule(0.05, 1.0, rbar_cap=6)
    xi, tries = draw_nonresonant_xi(m, ball, -1.0, sched, radius=2.0, seed=3)
    assert tries >= 1
    assert np.all(xi >= 0)
    assert (ball.brackets**2 * xi).sum() < 2.0 * 0.05**2
    st = initial_state(m, ball, -1.0, xi, sched, track_grad=False)
    assert cutoff_eval(sched, st.omega, 0, xi, 6, ball).h == 1.0


def test_poly_flow_conserves_generator_and_is_reversible():
    ball = LatticeBall(1, 1)
    rng = np.random.default_rng(2)
    chi = random_real_plain(ball, rng, 4, 3, 4).recenter(np.zeros(3))
    u = 0.3 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
    v = poly_flow(chi, u, 1.0)
    assert evaluate(chi, v) == pytest.approx(evaluate(chi, u), abs=1e-12)
    assert np.sum(np.abs(v) ** 2) == pytest.approx(np.sum(np.abs(u) ** 2), rel=1e-11)
    np.testing.assert_allclose(poly_flow(chi, v, -1.0), u, atol=1e-11)
    with pytest.raises(ValueError):
        poly_flow(chi, u, 1.5)


def test_flow_of_tiny_generator_is_near_identity():
    ball = LatticeBall(1, 1)
    chi = random_real_plain(ball, np.random.default_rng(5), 4, 2, 4).recenter(np.zeros(3)).scale(1e-3)
    u = np.array([0.1, 0.2j, -0.1])
    probes = np.eye(3, dtype=complex)
    assert flow_differential_check(chi, u, 1.0, probes) < 1e-3


def test_birkhoff_keeps_kappa_resonant_quartic():
    m = admissible_example()
    ball = LatticeBall(2, 1)
    P4 = HomogeneousPoly.constant(2, ball, 1.0)
    res = birkhoff_truncated([P4], m, 0.5, 4)
    expected = PlainPoly.from_homogeneous(kappa_filter(P4, m, 0.5))
    keys = set(expected.terms) | set(res.Q[4].terms)
    for key in keys:
        assert res.Q[4].terms.get(key, 0) == pytest.approx(expected.terms.get(key, 0), abs=1e-14)
    assert res.Q_homogeneous[4].check_invariants()


@pytest.mark.parametrize("cap,order", [(6, 8), (8, 10)])
def test_birkhoff_conjugacy_error_scales_with_cap(cap, order):
    """``(Z2 + P) o Phi = Z2 + sum Q`` up to terms of degree ``cap + 2``."""
    m = admissible_example()
    ball = LatticeBall(2, 1)
    polys = [HomogeneousPoly.constant(2, ball, 1.0), HomogeneousPoly.constant(3, ball, 0.5)]
    res = birkhoff_truncated(polys, m, 0.5, cap)
    lam2 = ball.frequencies(m)
    Z2 = PlainPoly(ball, {((n, 1, 1),): 0.5 * lam2[n] for n in range(len(ball))})
    H = Z2 + PlainPoly.from_homogeneous(polys[0]) + PlainPoly.from_homogeneous(polys[1])
    N = Z2
    for q in res.Q.values():
        N = N + q
    zero = np.zeros(len(ball))
    chis = [res.chi[d].recenter(zero) for d in sorted(res.chi) if res.chi[d].terms]
    u0 = np.random.default_rng(0).standard_normal(len(ball)) + 0j
    errs = []
    for a in (0.1, 0.05):
        v = a * u0
        for c in reversed(chis):
            v = poly_flow(c, v, 1.0, 1e-14)
        errs.append(abs(H.evaluate(v) - N.evaluate(a * u0)))
    slope = np.log2(errs[0] / errs[1])
    assert slope > order - 0.5


def test_birkhoff_square_torus_keeps_rectangles():
    ball = LatticeBall(2, 1)
    P4 = HomogeneousPoly.constant(2, ball, 1.0)
    res = birkhoff_truncated([P4], square_torus(2), 1e-9, 4)
    assert len(res.Q_homogeneous[4]) == len(kappa_filter(P4, square_torus(2), 1e-9))


def test_birkhoff_rejects_bad_input():
    with pytest.raises(ValueError):
        birkhoff_truncated([], admissible_example(), 0.5, 4)
    with pytest.raises(ValueError):
        birkhoff_truncated([HomogeneousPoly.constant(2, LatticeBall(2, 1))], admissible_example(), 0.0, 4)


def test_flow_failure_carries_partial_state():
    err = FlowFailure("stuck", np.ones(2))
    assert np.all(err.partial == 1.0)


def test_birkhoff_square_torus_quartic_support_is_rectangles():
    from flatnf.resonance import rectangle_quartets, trivial_mask

    ball = LatticeBall(2, 2)
    res = birkhoff_truncated([HomogeneousPoly.constant(2, ball, 1.0)], square_torus(2), 0.5, 4)
    Qh = res.Q_homogeneous[4]
    live = Qh.idx[np.abs(Qh.coeffs) > 0]
    nontrivial = {tuple(int(x) for x in r) for r in live[~trivial_mask(live)]}
    assert nontrivial == rectangle_quartets(ball)


def test_linear_generator_flow_is_a_phase_rotation():
    from flatnf.polyalg import RecenteredPoly

    ball = LatticeBall(1, 1)
    omega = np.array([0.3, 1.1, 2.0])
    chi = RecenteredPoly(ball, np.zeros(3), {((n, 0, 0, 1),): omega[n] for n in range(3)})
    u = np.array([0.2, -0.1j, 0.3])
    t = 0.7
    np.testing.assert_allclose(poly_flow(chi, u, t), np.exp(-2j * omega * t) * u, atol=1e-11)
    dev = flow_differential_check(chi, u, t, np.eye(3, dtype=complex))
    assert dev == pytest.approx(np.abs(np.exp(-2j * omega * t) - 1).max(), rel=1e-6)


@pytest.fixture(scope="module")
def desk_chain():
    """Five Lie steps on the one-dimensional desk instance, with the generators used."""
    from flatnf.normalform import generator, lie_step
    from flatnf.polyalg import annulus_samples
    from flatnf.lattice import TorusMetric

    metric = TorusMetric(np.eye(1))
    ball = LatticeBall(1, 2)
    sched = ParamSchedule(0.05, 1.0, 1, rbar_cap=8)
    extras = [kappa_filter(HomogeneousPoly.constant(3, ball, 1.0), metric, 1.0)]
    xi, _ = draw_nonresonant_xi(metric, ball, -1.0, sched, radius=2.0, seed=2024, extras=extras)
    state = initial_state(metric, ball, -1.0, xi, sched, extras)
    samples = annulus_samples(ball, xi, sched, 0, 10, np.random.default_rng(60))
    chis, states = [], [state]
    for j in range(5):
        chis.append(generator(state).with_grad(False))
        state = lie_step(state, j, 6, 8)
        states.append(state)
    return ball, sched, samples, chis, states


def test_desk_flow_close_to_identity(desk_chain):
    from flatnf.polyalg import hs_norm

    ball, sched, samples, chis, _ = desk_chain
    budget = sched.epsilon**1.5 * sched.N(0) ** (-2 * sched.s)
    for chi in chis:
        for u in samples:
            assert hs_norm(poly_flow(chi, u, 1.0) - u, ball, 1.0) <= budget * hs_norm(u, ball, 1.0)


def test_desk_flow_differential(desk_chain):
    ball, sched, samples, chis, _ = desk_chain
    probes = np.eye(len(ball), dtype=complex)
    assert flow_differential_check(chis[0], samples[0], 1.0, probes) <= sched.epsilon**0.75


def test_desk_first_step_contracts(desk_chain):
    _, _, _, _, states = desk_chain
    h = states[1].history[-1]
    assert h["lambda_Ysup_after"] < h["lambda_Ysup_before"]


def test_scale_advance_frequency_drift_within_budget(desk_chain):
    from flatnf.normalform import scale_advance

    _, sched, _, _, states = desk_chain
    adv = scale_advance(states[-1])
    rec = adv.history[-1]
    assert adv.alpha == 1 and adv.j == 0
    assert rec["drift_budget"] == pytest.approx(sched.epsilon**3)
    assert rec["within_budget"]
    assert len(adv.lambda_part(0)) == 0
