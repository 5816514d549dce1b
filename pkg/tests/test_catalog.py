import numpy as np
import pytest

from pqharmonic.catalog import (
    catalog_cases,
    critical_s,
    example_hyperbolic,
    example_power,
    power_map,
    power_tau_pq_coefficient,
    power_tau_pq_u,
    sample_points,
    scan_critical_s,
)
from pqharmonic.errors import DomainError, ParameterError
from pqharmonic.pullback import MapJets, p_tension, pq_tension

from oracles import cylinder_W_literal, hyperbolic_literal, power_tau_pq_literal

P_GRID = (2.0, 2.5, 3.0, 5.0)
Q_GRID = (2.0, 3.0, 4.0)


def computed_W(phi, p, q, pts):
    s = MapJets.at(phi, pts, 2)
    return s.values(s.W(p, q))


def test_cylinder_closed_forms():
    case = catalog_cases()[0]
    pts = sample_points(case.domain)
    for p in P_GRID:
        phi = case.map(p)
        for q in Q_GRID:
            want = case.expected_W(p, q, pts)
            assert want[0, 0] == pytest.approx(cylinder_W_literal(p, q), rel=1e-14)
            np.testing.assert_allclose(computed_W(phi, p, q, pts), want, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(pq_tension(phi, p, q, pts), 0.0, atol=1e-8)


def test_hyperbolic_closed_forms_uniform_in_points():
    case = catalog_cases()[1]
    pts = sample_points(case.domain)
    for p in (5.0, 6.0, 7.5):
        phi = case.map(p)
        for q in Q_GRID:
            weight, W4 = hyperbolic_literal(p, q)
            assert case.expected_weight(p, q, pts)[0] == pytest.approx(weight, rel=1e-14)
            got = computed_W(phi, p, q, pts)
            np.testing.assert_allclose(got[3], W4, rtol=1e-12)
            np.testing.assert_allclose(got[:3], 0.0, atol=1e-14)
            tp = p_tension(phi, p, pts)
            norm = np.sqrt(np.sum(tp * tp, axis=0))
            np.testing.assert_allclose(norm ** (q - 2), weight, rtol=1e-12)


def test_hyperbolic_requires_p_above_four():
    with pytest.raises(ParameterError, match="p>4"):
        example_hyperbolic(4.0)
    case = example_hyperbolic()
    with pytest.raises(ParameterError, match="p>4"):
        case.check(3.0, 2.0)
    case.check(5.0, 2.0)
    assert example_hyperbolic(6.0).map().name == "hyperbolic identity"


def test_power_closed_form_matches_literal():
    for p in (2.0, 3.0, 5.0):
        for q in Q_GRID:
            for s in (1.2, 1.75, 2.4, 3.3, 4.0):
                for x in (0.5, 1.0, 1.5, 2.0):
                    C, e = power_tau_pq_coefficient(s, p, q)
                    want = power_tau_pq_literal(p, q, s, x)
                    assert C * x ** e == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_power_computed_matches_closed_form():
    for s in (1.2, 2.4, 4.0):
        case = example_power(s)
        pts = sample_points(case.domain, 6)
        for p in (2.0, 3.0):
            for q in (2.0, 3.0):
                got = pq_tension(case.map(p), p, q, pts)
                want = case.expected_tau_pq(p, q, pts)
                np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-8 * np.max(np.abs(want)))


def test_power_sign_below_one():
    # 0 < s < 1: the literal display assumes s > 1; the signed form is checked against jets
    s, p, q = 0.6, 3.0, 3.0
    C, e = power_tau_pq_coefficient(s, p, q)
    got = pq_tension(power_map(s), p, q, [1.3, 0.0])[0]
    assert got == pytest.approx(C * 1.3 ** e, rel=1e-9)


def test_power_guard_and_s_one():
    with pytest.raises(ParameterError):
        example_power(1.0)
    with pytest.raises(DomainError):
        pq_tension(power_map(2.4), 2.0, 2.0, [-1.0, 0.0])


def test_critical_exponents():
    assert critical_s(2, 2) == pytest.approx((2.0, 3.0))
    assert critical_s(3, 2) == pytest.approx((1.5, 5 / 3))
    for p in (2.0, 3.0, 5.0):
        for q in Q_GRID:
            for s in critical_s(p, q):
                assert abs(power_tau_pq_u(s, p, q)) <= 1e-9


def test_scan_finds_closed_form_roots():
    res = scan_critical_s(2, 2, (1.2, 4.0), samples=256)
    np.testing.assert_allclose(sorted(res.roots), [2.0, 3.0], atol=1e-6)
    res = scan_critical_s(3, 2, (1.2, 4.0), samples=256)
    np.testing.assert_allclose(sorted(res.roots), [1.5, 5 / 3], atol=1e-6)


def test_scan_empty_interval_has_no_roots():
    res = scan_critical_s(2, 2, (3.5, 4.0))
    assert list(res) == [] and res.touching == []


@pytest.mark.parametrize("interval,samples", [((2.0, 2.0), 64), ((0.5, 1.5), 64), ((2.0, 3.0), 8)])
def test_scan_rejects_bad_arguments(interval, samples):
    with pytest.raises(ParameterError):
        scan_critical_s(2, 2, interval, samples=samples)


def test_sample_points_deterministic():
    D = catalog_cases()[0].domain
    a, b = sample_points(D, 5), sample_points(D, 5)
    assert np.array_equal(a, b)
    assert np.all((a.T >= D.lower) & (a.T <= D.upper))
