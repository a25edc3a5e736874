import math

import numpy as np
import pytest

from polymc import chaos, oracle
from polymc.disorder import GAUSSIAN, RADEMACHER, DisorderField
from polymc.testfunc import TestFunction as TF


def test_path_count_and_endpoints():
    pos = oracle.path_positions(3, 3)
    assert pos.shape == (6 ** 3, 3, 3)
    # each step moves exactly one coordinate by one
    steps = np.diff(np.concatenate(
        [np.zeros((len(pos), 1, 3), dtype=np.int64), pos], axis=1), axis=1)
    assert np.all(np.abs(steps).sum(axis=2) == 1)


def test_single_start_moment_is_one():
    assert oracle.exact_joint_moment([(0, 0, 0)], 4, GAUSSIAN, 0.7) == 1.0


def test_pair_moment_permutation_and_translation_invariance():
    a = oracle.exact_joint_moment(((0, 0, 0), (2, 0, 0)), 3, GAUSSIAN, 0.5)
    b = oracle.exact_joint_moment(((2, 0, 0), (0, 0, 0)), 3, GAUSSIAN, 0.5)
    c = oracle.exact_joint_moment(((1, 1, -1), (3, 1, -1)), 3, GAUSSIAN, 0.5)
    assert a == pytest.approx(b, abs=1e-14)
    assert a == pytest.approx(c, abs=1e-14)


def test_odd_separation_pair_moment_is_one():
    # walks started at odd sup-distance can never coincide (parity)
    m = oracle.exact_joint_moment(((0, 0, 0), (1, 0, 0)), 4, GAUSSIAN, 0.8)
    assert m == 1.0


def test_second_moment_matches_renewal():
    for law, b in ((GAUSSIAN, 0.4), (RADEMACHER, 0.9)):
        e = chaos.overlap_mgf(3, law, b, 4).values
        for n in (1, 2, 3, 4):
            ref = oracle.exact_joint_moment(((0, 0, 0),) * 2, n, law, b)
            assert abs(ref - e[n]) < 1e-12


def test_triple_moment_one_step_closed_form():
    # N=1, all three walkers from the origin: P(all equal) = 1/(2d)^2,
    # P(exactly one pair equal) = 3 * (2d-1)/(2d)^2
    b = 0.5
    lam = GAUSSIAN.cgf(b)
    e2 = GAUSSIAN.cgf(2 * b) - 2 * lam
    e3 = GAUSSIAN.cgf(3 * b) - 3 * lam
    p_all = 1.0 / 36.0
    p_pair = 3.0 * 5.0 / 36.0
    want = (p_all * math.exp(e3) + p_pair * math.exp(e2)
            + (1 - p_all - p_pair))
    got = oracle.exact_joint_moment(((0, 0, 0),) * 3, 1, GAUSSIAN, b)
    assert got == pytest.approx(want, abs=1e-14)


def test_avg_variance_two_site_matches_analytics():
    phi = TF(kind="indicator", d=3, scale=0.3, center=(0.3, 0.0, 0.0),
             allow_discontinuous=True)
    n = 3
    ref = oracle.exact_avg_variance(phi, n, 3, GAUSSIAN, 0.5)
    got = chaos.exact_variance(3, GAUSSIAN, 0.5, n, phi)
    assert got == pytest.approx(n ** 0.5 * ref, rel=1e-12)


def test_fourth_moment_single_site_closed_form():
    # phi supported on one lattice site: E[(w Z)^4] expanded by
    # inclusion-exclusion over joint moments of (Z - 1)
    phi = TF(kind="indicator", d=3, scale=0.2, allow_discontinuous=True)
    n, b = 2, 0.4
    grid, r = phi.lattice_values(n)
    w = float(grid[(r,) * 3])
    m2 = oracle.exact_joint_moment(((0, 0, 0),) * 2, n, GAUSSIAN, b)
    m3 = oracle.exact_joint_moment(((0, 0, 0),) * 3, n, GAUSSIAN, b)
    m4 = oracle.exact_joint_moment(((0, 0, 0),) * 4, n, GAUSSIAN, b)
    want = w ** 4 * (m4 - 4 * m3 + 6 * m2 - 3.0)
    got = oracle.exact_fourth_moment(phi, n, 3, GAUSSIAN, b)
    assert got == pytest.approx(want, rel=1e-12)


def test_budget_errors():
    with pytest.raises(oracle.BudgetError):
        oracle.path_positions(3, 7)
    with pytest.raises(oracle.BudgetError):
        oracle.exact_joint_moment(((0, 0, 0),) * 4, 5, GAUSSIAN, 0.3)
    with pytest.raises(oracle.BudgetError):
        oracle.exact_joint_moment(((0, 0, 0),) * 5, 2, GAUSSIAN, 0.3)


def test_brute_partition_mean_weight_normalization():
    # beta = 0 gives exactly 1 regardless of disorder
    dis = DisorderField(GAUSSIAN, 4, 2)
    assert oracle.brute_partition((0, 0, 0), 3, 3, GAUSSIAN, 0.0, dis) == 1.0
