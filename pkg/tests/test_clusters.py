import math

import numpy as np
import pytest

from flatnf.clusters import build_partition, largest_valid_delta, super_actions, verify_partition
from flatnf.lattice import LatticeBall, admissible_example, square_torus
from flatnf.state import FourierState


def _union_find_classes(metric, ball, delta):
    """Independent oracle: plain union-find over the proximity relation."""
    S = ball.sites.astype(float)
    lam2 = ball.frequencies(metric)
    parent = list(range(len(ball)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(ball)):
        for j in range(i + 1, len(ball)):
            gap = math.dist(S[i], S[j]) + abs(lam2[i] - lam2[j])
            if gap <= (math.hypot(*S[i]) + math.hypot(*S[j])) ** delta:
                parent[find(i)] = find(j)
    comps = {}
    for i in range(len(ball)):
        comps.setdefault(find(i), set()).add(i)
    # every component touching the disc |n| < 2 joins the bounded class
    bounded, rest = set(), set()
    for members in comps.values():
        if any(math.hypot(*S[i]) < 2 for i in members):
            bounded |= members
        else:
            rest.add(frozenset(members))
    comps = rest | {frozenset(bounded)}
    return comps


@pytest.mark.parametrize("delta", [0.1, 0.25, 0.5])
def test_partition_matches_union_find(delta):
    m = admissible_example()
    ball = LatticeBall(2, 5)
    p = build_partition(m, ball, delta)
    got = {frozenset(c.tolist()) for c in p.classes}
    assert got == _union_find_classes(m, ball, delta)


def test_partition_covers_ball_once():
    p = build_partition(admissible_example(), LatticeBall(2, 6), 0.25)
    allsites = np.concatenate(p.classes)
    assert sorted(allsites.tolist()) == list(range(len(p.ball)))
    for c, members in enumerate(p.classes):
        assert np.all(p.class_of[members] == c)


def test_bounded_class_first():
    p = build_partition(admissible_example(), LatticeBall(2, 6), 0.25)
    assert p.class_of[p.ball.zero_index()] == 0
    assert p.bounded_radius >= 1.0


def test_frozen_class_count_and_verification():
    m = admissible_example()
    p = build_partition(m, LatticeBall(2, 8), 0.25)
    assert len(p.classes) == 175
    rep = verify_partition(p, m)
    assert rep.separation_ok and rep.dyadic_ok
    assert rep.worst_margin > 0


def test_square_torus_links_close_neighbours():
    # (3,0) and (3,1): gap 1 + 1 = 2 <= (3 + sqrt 10)^0.5
    p = build_partition(square_torus(2), LatticeBall(2, 4), 0.5)
    a, b = p.ball.index((3, 0)), p.ball.index((3, 1))
    assert p.class_of[a] == p.class_of[b]
    # (3,0) and (0,3) share a frequency but are too far apart to link directly
    assert math.dist((3, 0), (0, 3)) > (6.0) ** 0.5


def test_delta_range():
    with pytest.raises(ValueError):
        build_partition(admissible_example(), LatticeBall(2, 3), 1.0)


def test_super_actions_sum_to_mass():
    p = build_partition(admissible_example(), LatticeBall(2, 5), 0.25)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(len(p.ball)) + 1j * rng.standard_normal(len(p.ball))
    S = super_actions(u, p)
    assert S.shape == (len(p.classes),)
    assert S.sum() == pytest.approx(float((np.abs(u) ** 2).sum()), rel=1e-14)
    assert np.all(super_actions(FourierState(p.ball, u), p) == S)


def test_super_actions_reject_mismatched_ball():
    p = build_partition(admissible_example(), LatticeBall(2, 3), 0.25)
    with pytest.raises(ValueError):
        super_actions(FourierState(LatticeBall(2, 2), np.zeros(13, complex)), p)


def test_largest_valid_delta_is_monotone_choice():
    m = admissible_example()
    ball = LatticeBall(2, 6)
    best = largest_valid_delta(m, ball, [0.1, 0.2, 0.3])
    assert best is not None
    assert build_partition(m, ball, best).valid


def test_one_dimensional_components_by_hand():
    # on lambda^2 = n^2 with delta = 0.3 no two sites with |n| >= 2 are linked:
    # (2, 3) has gap 1 + 5 = 6 > 5^0.3 and (2, -2) has gap 4 > 4^0.3
    from flatnf.lattice import TorusMetric

    ball = LatticeBall(1, 4)
    p = build_partition(TorusMetric([[1.0]]), ball, 0.3)
    got = sorted(sorted(int(ball.sites[i][0]) for i in c) for c in p.classes)
    assert got == [[-4], [-3], [-2], [-1, 0, 1], [2], [3], [4]]
    assert p.valid


def test_dyadicity_by_exhaustive_scan():
    m = admissible_example()
    p = build_partition(m, LatticeBall(2, 12), 0.25)
    norms = p.ball.norms
    brute = all(norms[a] <= 2 * norms[b] for c in p.classes[1:] for a in c for b in c)
    assert verify_partition(p, m).dyadic_ok == brute


def test_delta_sweep_radius_sixteen():
    m = admissible_example()
    ball = LatticeBall(2, 16)
    sweep = [0.1, 0.2, 0.3, 0.4, 0.5]
    best = largest_valid_delta(m, ball, sweep)
    valid = [d for d in sweep if build_partition(m, ball, d).valid]
    assert best == (max(valid) if valid else None)
