import math

import numpy as np
import pytest

from polymc import chaos, engine, oracle, walks
from polymc.disorder import GAUSSIAN, RADEMACHER, DisorderField, beta_l2
from polymc.testfunc import TestFunction as TF


GBUMP = TF(kind="gaussian", d=3, scale=0.35)


def test_overlap_mgf_first_terms_closed_form():
    b = 0.4
    s2 = GAUSSIAN.sigma2(b)
    q2 = walks.return_prob(3, 1)
    q4 = walks.return_prob(3, 2)
    e = chaos.overlap_mgf(3, GAUSSIAN, b, 3).values
    assert e[0] == 1.0
    assert e[1] == pytest.approx(1.0 + s2 * q2, abs=1e-14)
    assert e[2] == pytest.approx(1.0 + s2 * (q2 * e[1] + q4), abs=1e-14)


def test_overlap_mgf_matches_pair_enumeration():
    for law, b in ((GAUSSIAN, 0.5), (RADEMACHER, 0.8)):
        e = chaos.overlap_mgf(3, law, b, 4).values
        for n in (1, 2, 3, 4):
            ref = oracle.exact_joint_moment(((0, 0, 0),) * 2, n, law, b)
            assert e[n] == pytest.approx(ref, abs=1e-12)


def test_overlap_mgf_monotone_and_bounded():
    b = 0.5
    mgf = chaos.overlap_mgf(3, GAUSSIAN, b, 200)
    e = mgf.values
    assert np.all(np.diff(e) > 0)
    assert mgf.subcritical
    assert e[-1] < mgf.limit
    assert mgf.limit - e[-1] <= mgf.tail_bound + 1e-15


def test_overlap_mgf_supercritical_flagged():
    crit = beta_l2(GAUSSIAN, 3)
    mgf = chaos.overlap_mgf(3, GAUSSIAN, 1.2 * crit, 50)
    assert not mgf.subcritical
    with pytest.raises(chaos.SupercriticalError):
        chaos.limit_variance(3, GAUSSIAN, 1.2 * crit, GBUMP)


def test_degree_resolved_mgf_sums_to_total():
    ek = chaos.degree_resolved_mgf(3, GAUSSIAN, 0.5, 30, 30)
    e = chaos.overlap_mgf(3, GAUSSIAN, 0.5, 30).values
    assert np.allclose(ek.sum(axis=0), e, atol=1e-12)
    # degree 0 carries exactly the constant term
    assert np.all(ek[0] == 1.0)


def test_pair_sums_match_direct_kernel_contraction():
    n = 6
    s = chaos.pair_sums(3, n, GBUMP)
    grid, r = GBUMP.lattice_values(n)
    flat = grid.ravel()
    pts = np.stack(np.meshgrid(*[np.arange(-r, r + 1)] * 3,
                               indexing="ij"), -1).reshape(-1, 3)
    for m in (1, 3, 6):
        box = walks.kernel_box(3, 2 * m, 2 * r)
        direct = 0.0
        for i, x in enumerate(pts):
            for j, y in enumerate(pts):
                v = tuple(y - x + 2 * r)
                direct += flat[i] * flat[j] * box[v]
        assert s[m - 1] == pytest.approx(direct, rel=1e-12)


def test_exact_variance_matches_pair_oracle_two_sites():
    phi = TF(kind="indicator", d=3, scale=0.3,
                       center=(0.3, 0.0, 0.0), allow_discontinuous=True)
    n = 3
    ref = oracle.exact_avg_variance(phi, n, 3, GAUSSIAN, 0.5)
    got = chaos.exact_variance(3, GAUSSIAN, 0.5, n, phi)
    assert got == pytest.approx(n ** 0.5 * ref, rel=1e-12)


def test_degree_decomposition_is_exact():
    d, n, b = 3, 16, 0.4
    total = chaos.exact_variance(d, GAUSSIAN, b, n, GBUMP)
    for m in (1, 3, 8, 16):
        parts = chaos.degree_variances(d, GAUSSIAN, b, n, GBUMP, m)
        gap = chaos.truncation_gap(d, GAUSSIAN, b, n, GBUMP, m)
        assert sum(parts) + gap == pytest.approx(total, abs=1e-12)
    assert chaos.truncation_gap(d, GAUSSIAN, b, n, GBUMP, n) == 0.0


def test_truncation_gap_geometric_decay():
    d, n, b = 3, 16, 0.4
    ser = walks.return_series(d)
    ratio = GAUSSIAN.sigma2(b) * ser.r_inf + 0.05
    gaps = [chaos.truncation_gap(d, GAUSSIAN, b, n, GBUMP, m)
            for m in range(1, 9)]
    for g0, g1 in zip(gaps, gaps[1:]):
        assert g1 <= ratio * g0 + 1e-16


def test_limit_variance_gaussian_closed_form():
    lim = chaos.limit_variance(3, GAUSSIAN, 0.5, GBUMP)
    assert lim.closed_form is not None
    assert lim.value == pytest.approx(lim.closed_form, rel=1e-10)
    assert lim.quadrature_error < 1e-10


def test_limit_variance_scales_with_cbeta():
    a = chaos.limit_variance(3, GAUSSIAN, 0.3, GBUMP)
    b = chaos.limit_variance(3, GAUSSIAN, 0.5, GBUMP)
    assert a.heat_integral == pytest.approx(b.heat_integral, rel=1e-12)
    assert b.c_beta > a.c_beta


def test_beta_zero_variance_is_zero():
    assert chaos.exact_variance(3, GAUSSIAN, 0.0, 8, GBUMP) == 0.0


def test_chaos_term_one_mean_and_variance():
    d, n, b = 3, 8, 0.5
    term = chaos.ChaosTermOne(d, n, GBUMP)
    vals = np.array([term.evaluate(GAUSSIAN, b,
                                   DisorderField(GAUSSIAN, 21, r))
                     for r in range(400)])
    target = chaos.chaos_term_1_variance(d, GAUSSIAN, b, n, GBUMP)
    se_m = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean()) < 4 * se_m
    se_v = vals.var(ddof=1) * math.sqrt(2.0 / (vals.size - 1))
    assert abs(vals.var(ddof=1) - target) < 4 * se_v


def test_first_chaos_variance_is_degree_one_component():
    d, n, b = 3, 8, 0.5
    v1 = chaos.chaos_term_1_variance(d, GAUSSIAN, b, n, GBUMP)
    parts = chaos.degree_variances(d, GAUSSIAN, b, n, GBUMP, 1)
    assert n ** ((d - 2) / 2) * v1 == pytest.approx(parts[0], rel=1e-12)
