import math

import numpy as np
import pytest
from scipy import stats

from flatnf.lattice import LatticeBall, admissible_example
from flatnf.measure import (
    NonResonanceSpec,
    ball_volume,
    gamma_ladder,
    make_rng,
    modulated_frequencies,
    monte_carlo_volume,
    nonresonance_test,
    nonresonant_fraction,
    sample_actions,
    sample_ball,
)
from flatnf.normalform import FrequencyVector


def test_volume_of_unit_disc():
    vol = ball_volume([[0]], 1.0, 1.0)
    assert vol.N == 1
    assert vol.standard_value == pytest.approx(math.pi)
    assert vol.formula_value == pytest.approx(math.pi / 2)


def test_volume_scaling_with_weights_and_radius():
    sites = [[0, 0], [2, 0], [0, 3]]
    s, rho = 1.5, 0.7
    vol = ball_volume(sites, s, rho)
    # ellipsoid with semi-axes rho <n>^{-s}, each site a complex plane
    expected = math.pi**3 / math.factorial(3) * rho**6 / (1 * 2 * 3) ** (2 * s)
    assert vol.standard_value == pytest.approx(expected, rel=1e-12)
    assert vol.log_standard - vol.log_value == pytest.approx(math.log(4))


def test_volume_log_space_survives_large_balls():
    vol = ball_volume(LatticeBall(2, 30), 1.0, 0.1)
    assert vol.standard_value == 0.0 or vol.standard_value < 1e-300
    assert math.isfinite(vol.log_standard)
    with pytest.raises(ValueError):
        ball_volume(LatticeBall(2, 1), 1.0, 0.0)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_monte_carlo_agrees_with_factorial_n(N):
    est, sig = monte_carlo_volume(N, 400_000, seed=N)
    exact = math.pi**N / math.factorial(N)
    assert abs(est - exact) <= 4 * sig
    # the (N+1)! normalisation is many standard errors away
    assert abs(est - exact / (N + 1)) > 20 * sig


def test_rng_is_reproducible():
    a = make_rng(5).standard_normal(4)
    b = make_rng(5).standard_normal(4)
    c = make_rng(6).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_samples_lie_in_ball_and_are_uniform():
    ball = LatticeBall(2, 1)
    s, rho = 1.0, 0.3
    states = sample_ball(ball, s, rho, 4000, seed=9)
    w = ball.brackets ** (2 * s)
    r2 = np.array([(w * np.abs(st.amps) ** 2).sum() for st in states]) / rho**2
    assert np.all(r2 < 1.0)
    # for the uniform law on a ball in R^{2N}, P(r^2 < t) = t^N
    N = len(ball)
    res = stats.kstest(r2, lambda t: np.clip(t, 0, 1) ** N)
    assert res.pvalue > 1e-3


def test_sample_actions_match_states():
    ball = LatticeBall(1, 2)
    acts = sample_actions(ball, 1.0, 0.5, 10, 3)
    states = sample_ball(ball, 1.0, 0.5, 10, 3)
    np.testing.assert_allclose(acts, [st.actions for st in states])
    with pytest.raises(ValueError):
        sample_ball(ball, 1.0, 0.5, 0, 3)


# on the one-dimensional ball |n| <= 1 and degree 4 the only patterns are +-(1, -2, 1)
_SMALL = LatticeBall(1, 1)


def test_nonresonance_single_pattern_by_hand():
    spec = NonResonanceSpec(0.5, 0.1, 1.0, degree_cap=4)
    assert spec.threshold == pytest.approx(0.005)
    w = np.array([1.0, 1.0, 1.0 + 0.004])
    res = nonresonance_test(None, w, spec, _SMALL)
    assert not res.passed
    assert res.margin == pytest.approx(0.004 - 0.005)
    assert sorted(np.abs(res.worst_pattern).tolist()) == [1, 1, 2]
    w[2] = 1.0 + 0.006
    assert nonresonance_test(None, w, spec, _SMALL).passed


def test_frequency_vector_input_is_modulated():
    spec = NonResonanceSpec(0.5, 0.1, 1.0, degree_cap=4)
    freq = FrequencyVector(np.array([0.5, 0.5, 0.5 + 0.003]))
    assert nonresonance_test(None, freq, spec, _SMALL).passed
    assert not nonresonance_test(None, freq.omega, spec, _SMALL).passed


def test_spec_validation():
    for kwargs in [dict(gamma=0.0), dict(gamma=1.0), dict(gamma=0.5, lambda_set="x")]:
        args = dict(gamma=0.5, epsilon=0.1, s=1.0)
        args.update(kwargs)
        with pytest.raises(ValueError):
            NonResonanceSpec(**args)


def test_lambda_set_restricts_patterns():
    ball = LatticeBall(2, 2)
    full = NonResonanceSpec(0.5, 0.05, 1.0, degree_cap=4).patterns(ball)
    lam = NonResonanceSpec(0.5, 0.05, 1.0, degree_cap=4, lambda_set="lambda").patterns(ball)
    assert 0 < len(lam) <= len(full)
    assert np.all(lam.n_minus < 0.05 ** (-1 / 200))


def _wilson(k, n, z=stats.norm.ppf(0.975)):
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    return centre - half, centre + half


def test_fraction_report_and_wilson_interval():
    m = admissible_example()
    ball = LatticeBall(2, 1)
    spec = NonResonanceSpec(1e-3, 0.1, 1.0, degree_cap=4)
    rep = nonresonant_fraction(m, ball, 1.0, 0.1, spec, 500, seed=1)
    lo, hi = _wilson(rep.passes, rep.count)
    assert rep.wilson_interval == pytest.approx((lo, hi), abs=1e-12)
    assert rep.fraction == rep.passes / 500
    assert rep.predicted_bound == pytest.approx(1 - 1e-3 * 0.1 ** (-1e-4))
    assert not rep.vacuous
    again = nonresonant_fraction(m, ball, 1.0, 0.1, spec, 500, seed=1)
    assert again.passes == rep.passes


def test_fraction_matches_direct_loop():
    m = admissible_example()
    ball = LatticeBall(2, 2)
    spec = NonResonanceSpec(0.9, 0.6, 1.0, degree_cap=4)
    rep = nonresonant_fraction(m, ball, 1.0, 0.6, spec, 300, seed=4)
    assert 0 < rep.passes < 300
    acts = sample_actions(ball, 1.0, 0.6, 300, 4)
    om = modulated_frequencies(m, ball, acts)
    direct = sum(nonresonance_test(a, o, spec, ball).passed for a, o in zip(acts, om))
    assert rep.passes == direct


def test_gamma_ladder_is_monotone():
    m = admissible_example()
    ball = LatticeBall(2, 2)
    spec = NonResonanceSpec(0.5, 0.9, 1.0, degree_cap=4)
    ladder = gamma_ladder(m, ball, 1.0, 0.9, spec, [0.01, 0.1, 0.5, 0.9], 2000, seed=2)
    fr = [r.fraction for r in ladder]
    assert fr == sorted(fr, reverse=True)
    assert fr[0] > 0.9 and fr[-1] < 0.1
    assert all(r.count == 2000 for r in ladder)


def test_squared_radius_moment():
    ball = LatticeBall(2, 1)
    s, rho, count = 1.0, 0.4, 100_000
    acts = sample_actions(ball, s, rho, count, seed=21)
    R2 = (ball.brackets ** (2 * s) * acts).sum(axis=1) / rho**2
    N = len(ball)
    mean = N / (N + 1)
    sd = math.sqrt(N / (N + 2) - mean**2)
    assert abs(R2.mean() - mean) <= 3 * sd / math.sqrt(count)


def test_square_torus_rectangle_fails_at_zero_actions():
    from flatnf.lattice import square_torus

    ball = LatticeBall(2, 1)
    spec = NonResonanceSpec(0.5, 0.1, 1.0, degree_cap=4)
    res = nonresonance_test(np.zeros(len(ball)), ball.frequencies(square_torus(2)), spec, ball)
    assert not res.passed
    v = res.worst_pattern
    assert v @ ball.frequencies(square_torus(2)) == 0
    assert res.margin == pytest.approx(-spec.threshold)


def test_admissible_generic_actions_pass_sometimes():
    m = admissible_example()
    eps = 0.1
    spec = NonResonanceSpec(eps ** (1 / 30), eps, 1.0, degree_cap=4)
    rep = nonresonant_fraction(m, LatticeBall(2, 2), 1.0, eps, spec, 2000, seed=5)
    assert rep.fraction > 0


def test_square_torus_quartic_family_fraction_below_one():
    from flatnf.lattice import square_torus

    eps = 0.1
    spec = NonResonanceSpec(1e-3, eps, 1.0, degree_cap=4)
    rep = nonresonant_fraction(square_torus(2), LatticeBall(2, 2), 1.0, eps, spec, 2000, seed=6)
    assert rep.fraction < 1.0
