import numpy as np
import pytest

from pqharmonic.catalog import catalog_cases, power_map, sample_points
from pqharmonic.errors import DegeneratePointError, ParameterError
from pqharmonic.geometry import euclidean_metric
from pqharmonic.jets import differentiate, lift_point
from pqharmonic.pullback import (
    MapField,
    MapJets,
    VectorFieldAlongMap,
    bi_p_tension,
    differential,
    energy_density,
    p_bitension,
    p_tension,
    pq_tension,
    pullback_derivative,
    tension,
    theta3_divergence_residual,
    w_field,
)

from oracles import SEED, sphere_target_map, transport_derivative


def flat_map(components, m=2, n=2, name="flat"):
    return MapField(components, euclidean_metric(m), euclidean_metric(n), name)


def identity(m=2):
    return flat_map(lambda c: list(c), m, m, "identity")


def affine():
    return flat_map(lambda c: [2.0 * c[0] - c[1] + 0.5, 0.3 * c[0] + 1.7 * c[1]], name="affine")


CASES = {case.name: case for case in catalog_cases()}


def case_points(case, n=20):
    return sample_points(case.domain, n, SEED)


def reduction_tol(value):
    return 1e-9 * (1.0 + np.max(np.abs(value)))


# differential, energy density, tension ----------------------------------------


def test_differential_examples():
    np.testing.assert_array_equal(differential(identity(), [0.3, 0.7]), np.eye(2))
    np.testing.assert_allclose(differential(power_map(2.0), [3.0, 0.0]), [[6, 0], [0, 0]], atol=1e-14)
    r = 2 ** -0.5
    cyl = CASES["cylinder"].map(2.0)
    np.testing.assert_allclose(differential(cyl, [1, 1, 0]), [[r, r, 0], [0, 0, 1]], atol=1e-15)


def test_energy_density_examples():
    assert energy_density(identity(3), [0.1, 0.2, 0.3]) == pytest.approx(3.0)
    assert energy_density(CASES["cylinder"].map(2.0), [1, 1, 0]) == pytest.approx(2 * np.sqrt(2), rel=1e-14)
    for p in (3.0, 5.0, 7.5):
        assert energy_density(CASES["hyperbolic"].map(p), [0.2, -0.1, 0.3, 1.0]) == pytest.approx(4.0, rel=1e-14)


def test_tension_examples():
    np.testing.assert_allclose(tension(identity(), [0.4, 0.2]), [0, 0], atol=1e-15)
    np.testing.assert_allclose(tension(power_map(3.0), [2.0, 0.0]), [12.0, 0.0], rtol=1e-14)
    z2 = flat_map(lambda c: [c[0] * c[0] - c[1] * c[1], 2 * c[0] * c[1]])
    rng = np.random.default_rng(SEED)
    np.testing.assert_allclose(tension(z2, rng.uniform(-2, 2, (2, 10))), 0.0, atol=1e-13)


# p-tension --------------------------------------------------------------------


def test_p_tension_of_square_map():
    # s^(p-1)(ps-p-s+1) x^(ps-p-s) at s=2, p=3, x=2 is 4 * 2 * 2 = 16
    np.testing.assert_allclose(p_tension(power_map(2.0), 3.0, [2.0, 0.0]), [16.0, 0.0], rtol=1e-13)


def test_p_tension_matches_power_closed_form():
    for s in (1.5, 2.0, 3.0):
        for p in (2.0, 3.0, 4.5):
            for x in (0.7, 1.3, 2.0):
                want = s ** (p - 1) * (p * s - p - s + 1) * x ** (p * s - p - s)
                np.testing.assert_allclose(p_tension(power_map(s), p, [x, 0.0]), [want, 0.0], rtol=1e-12)


def test_p_tension_of_identity_vanishes():
    for p in (2.0, 3.0, 5.0):
        np.testing.assert_allclose(p_tension(identity(), p, [0.5, -0.5]), 0.0, atol=1e-14)


def test_p_tension_cylinder():
    np.testing.assert_allclose(p_tension(CASES["cylinder"].map(3.0), 3.0, [1.0, 1.0, 0.0]), [np.sqrt(2), 0.0], rtol=1e-13, atol=1e-14)


def test_p_tension_is_divergence_of_weighted_differential():
    # flat source: tau_p^gamma = d_i(|dphi|^{p-2} d_i phi^gamma)
    phi = flat_map(lambda c: [c[0] * c[1] + c[0] ** 3, c[1] * c[1] - c[0]])
    p = 3.5
    x = [0.6, 0.8]
    s = MapJets.at(phi, x, 2)
    A = s.dphi_power(p - 2)
    want = [
        sum(float(differentiate(A * differentiate(s.phi_jets[g], i), i).value) for i in range(2))
        for g in range(2)
    ]
    np.testing.assert_allclose(p_tension(phi, p, x), want, rtol=1e-12)


def test_p_tension_degenerate_point():
    const = flat_map(lambda c: [1.0 + 0 * c[0], 2.0 + 0 * c[1]])
    with pytest.raises(DegeneratePointError):
        p_tension(const, 3.0, [0.1, 0.2])


def test_exponent_range():
    with pytest.raises(ParameterError):
        p_tension(identity(), 1.5, [0.1, 0.2])
    with pytest.raises(ParameterError):
        pq_tension(identity(), 2.0, 1.0, [0.1, 0.2])


# pullback derivative ------------------------------------------------------------


def test_pullback_derivative_flat_constant_field():
    phi = power_map(3.0)
    W = VectorFieldAlongMap(phi, lambda c: [1.0, -2.0], "const")
    for i in range(2):
        np.testing.assert_allclose(pullback_derivative(phi, W, i, [1.2, 0.1]), 0.0, atol=1e-15)


def test_pullback_derivative_flat_tension_field():
    phi = power_map(3.0)
    W = VectorFieldAlongMap(phi, lambda c: [12.0 * c[0], 0.0], "tension")
    np.testing.assert_allclose(pullback_derivative(phi, W, 0, [1.0, 0.0]), [12.0, 0.0], rtol=1e-14)


def test_pullback_derivative_against_parallel_transport():
    phi = sphere_target_map()
    W = VectorFieldAlongMap(phi, lambda c: [1.0, 0.0], "d_u")
    x = [0.4, 0.7]
    for i in range(2):
        got = pullback_derivative(phi, W, i, x)
        assert np.max(np.abs(got)) > 1e-2
        want = transport_derivative(phi, lambda pt: [1.0, 0.0], x, i)
        np.testing.assert_allclose(got, want, atol=1e-6)


def test_pullback_derivative_of_nonconstant_field_on_sphere():
    phi = sphere_target_map()
    f = lambda c: [c[0] * c[1], 1.0 + c[0] * c[0]]
    W = VectorFieldAlongMap(phi, f, "W")
    x = [-0.3, 0.5]
    for i in range(2):
        want = transport_derivative(phi, lambda pt: f(list(pt)), x, i)
        np.testing.assert_allclose(pullback_derivative(phi, W, i, x), want, atol=1e-6)


# (p,q)-tension ---------------------------------------------------------------


def test_pq_tension_quartic():
    for x in (0.5, 1.0, 1.7):
        np.testing.assert_allclose(pq_tension(power_map(4.0), 2, 2, [x, 0.0]), [-24.0, 0.0], rtol=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_pq_tension_vanishes_at_first_critical_exponent(p):
    s = p / (p - 1)
    for q in (2.0, 3.0, 4.0):
        got = pq_tension(power_map(s), p, q, [1.3, 0.0])
        assert np.max(np.abs(got)) <= 1e-9


def test_pq_tension_cylinder_vanishes():
    case = CASES["cylinder"]
    pts = case_points(case)
    for p in (2.0, 3.0, 5.0):
        for q in (2.0, 3.0, 4.0):
            assert np.max(np.abs(pq_tension(case.map(p), p, q, pts))) <= 1e-8


def test_w_field_matches_closed_form():
    case = CASES["cylinder"]
    pts = case_points(case, 5)
    for p, q in ((3.0, 2.0), (2.5, 3.0), (5.0, 4.0)):
        W = w_field(case.map(p), p, q)
        got = np.array([np.asarray(c.value if hasattr(c, "value") else c) for c in W.components(lift_point(list(pts), 2))])
        np.testing.assert_allclose(got, case.expected_W(p, q, pts), rtol=1e-12, atol=1e-14)


# bi-p and p-bi tension fields ---------------------------------------------------


def test_bi_p_tension_examples():
    assert np.max(np.abs(bi_p_tension(CASES["cylinder"].map(3.0), 3.0, [1.0, 1.0, 0.0]))) <= 1e-10
    np.testing.assert_allclose(bi_p_tension(power_map(4.0), 2.0, [1.1, 0.0]), [-24.0, 0.0], rtol=1e-12)
    for p in (2.0, 3.0):
        assert np.max(np.abs(bi_p_tension(affine(), p, [0.3, 0.4]))) <= 1e-12


def test_p_bitension_examples():
    assert np.max(np.abs(p_bitension(power_map(3.0), 2.0, [1.4, 0.0]))) <= 1e-11
    np.testing.assert_allclose(p_bitension(power_map(4.0), 2.0, [0.9, 0.0]), [-24.0, 0.0], rtol=1e-12)
    z2 = flat_map(lambda c: [c[0] * c[0] - c[1] * c[1], 2 * c[0] * c[1]])
    assert np.max(np.abs(p_bitension(z2, 2.0, [0.3, 0.8]))) <= 1e-12


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_reduction_to_bi_p_tension(p):
    for case in CASES.values():
        pts = case_points(case)
        phi = case.map(p)
        got = pq_tension(phi, p, 2.0, pts)
        want = bi_p_tension(phi, p, pts)
        assert np.max(np.abs(got - want)) <= reduction_tol(want), case.name


@pytest.mark.parametrize("qb", [2.0, 3.0, 4.0])
def test_reduction_to_p_bitension(qb):
    for case in CASES.values():
        pts = case_points(case)
        phi = case.map(2.0)
        got = pq_tension(phi, 2.0, qb, pts)
        want = p_bitension(phi, qb, pts)
        assert np.max(np.abs(got - want)) <= reduction_tol(want), case.name


def test_p_harmonic_maps_are_pq_harmonic():
    for phi in (identity(), affine()):
        for p in (2.0, 3.0, 5.0):
            assert np.max(np.abs(p_tension(phi, p, [0.2, 0.9]))) <= 1e-12
            # |tau_p| = 0 makes |tau_p|^{q-2} singular for q < 2 only; q = 2 and q >= 3 stay defined
            for q in (2.0, 3.0, 4.0):
                assert np.max(np.abs(pq_tension(phi, p, q, [0.2, 0.9]))) <= 1e-9


@pytest.mark.parametrize("name,p", [("cylinder", 3.0), ("cylinder", 5.0), ("hyperbolic", 5.0), ("hyperbolic", 6.0)])
def test_parallel_W_gives_pq_harmonic(name, p):
    case = CASES[name]
    pts = case_points(case)
    phi = case.map(p)
    for q in (2.0, 3.0):
        check = theta3_divergence_residual(phi, p, q, pts)
        parallel = check.parallel_defect <= 1e-10
        assert parallel.all()
        assert np.max(np.abs(pq_tension(phi, p, q, pts)[:, parallel])) <= 1e-8


def test_curvature_term_vanishes_on_flat_targets():
    for case in CASES.values():
        pts = case_points(case, 5)
        phi = case.map(3.0)
        full = pq_tension(phi, 3.0, 3.0, pts)
        bare = pq_tension(phi, 3.0, 3.0, pts, include_curvature=False)
        np.testing.assert_allclose(full, bare, atol=1e-13, rtol=0)


def test_curvature_trace_nonzero_on_sphere():
    phi = sphere_target_map()
    s = MapJets.at(phi, [0.4, 0.7], 3)
    assert not s.target_is_flat
    assert np.max(np.abs(s.curvature_trace([1.0, 0.0]))) > 1e-3


def test_hyperbolic_corollary_pointwise():
    case = CASES["hyperbolic"]
    pts = case_points(case)
    for p in (3.0, 5.0, 6.0):
        phi = case.map(p)
        for q in (2.0, 3.0, 4.0):
            zero_pq = np.max(np.abs(pq_tension(phi, p, q, pts)), axis=0) <= 1e-8
            zero_bp = np.max(np.abs(bi_p_tension(phi, p, pts)), axis=0) <= 1e-8
            np.testing.assert_array_equal(zero_pq, zero_bp)


def test_sphere_target_reductions():
    phi = sphere_target_map()
    rng = np.random.default_rng(SEED)
    pts = rng.uniform(-0.6, 0.6, (2, 8))
    for p in (2.0, 3.0):
        want = bi_p_tension(phi, p, pts)
        assert np.max(np.abs(pq_tension(phi, p, 2.0, pts) - want)) <= reduction_tol(want)
    for qb in (2.0, 3.0):
        want = p_bitension(phi, qb, pts)
        assert np.max(np.abs(pq_tension(phi, 2.0, qb, pts) - want)) <= reduction_tol(want)


def test_sphere_target_curvature_term_matters():
    phi = sphere_target_map()
    x = [0.4, 0.7]
    full = pq_tension(phi, 3.0, 2.0, x)
    bare = pq_tension(phi, 3.0, 2.0, x, include_curvature=False)
    assert np.max(np.abs(full - bare)) > 1e-4


# divergence identity -------------------------------------------------------------


def test_theta3_square_map():
    check = theta3_divergence_residual(power_map(2.0), 2.0, 2.0, [1.0, 0.0])
    assert float(check.divergence) == pytest.approx(4.0, rel=1e-13)
    assert float(check.tau_p_norm_q) == pytest.approx(4.0, rel=1e-13)
    assert abs(float(check.residual)) <= 1e-12
    assert float(check.parallel_defect) <= 1e-13


def test_theta3_cylinder():
    case = CASES["cylinder"]
    check = theta3_divergence_residual(case.map(2.0), 2.0, 2.0, case_points(case))
    assert np.max(np.abs(check.residual)) <= 1e-10
    assert np.max(check.parallel_defect) <= 1e-10


def test_theta3_reports_defect_for_quartic():
    for x in (0.5, 1.0, 1.5):
        check = theta3_divergence_residual(power_map(4.0), 2.0, 2.0, [x, 0.0])
        assert abs(float(check.residual)) > 1.0
        assert float(check.parallel_defect) == pytest.approx(24 * x, rel=1e-12)


def test_jet_order_budget():
    with pytest.raises(Exception):
        pq_tension(power_map(3.0), 2.0, 2.0, [1.0, 0.0], order=3)
