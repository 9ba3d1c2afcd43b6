import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from convexsc import (
    Ball,
    DomainPolytope,
    GridSpec,
    MaxAffineFunction,
    SampledConvexFunction,
    lipschitz_constant,
    sample,
    validate_convexity,
)
from convexsc.convex_core import (
    custom,
    hemisphere,
    huber,
    quadratic,
    radial_power,
    specimen_from_dict,
    specimen_to_dict,
)
from convexsc.errors import (
    ConvexError,
    ConvexityViolationError,
    EmptyDomainError,
)
from convexsc.geometry import convex_hull_2d, enumerate_vertices, polygon_area


def test_grid_nodes_and_spacing():
    g = GridSpec((-1.0, 0.0), (1.0, 2.0), 5)
    assert g.shape == (5, 5)
    np.testing.assert_allclose(g.spacing, [0.5, 0.5])
    X = g.nodes()
    assert X.shape == (25, 2)
    np.testing.assert_allclose(X[1], [-1.0, 0.5])
    assert GridSpec.from_dict(g.to_dict()) == g


@pytest.mark.parametrize("bad", [dict(m=1), dict(lower=(1.0,), upper=(0.0,))])
def test_grid_rejects_bad_input(bad):
    kw = dict(lower=(0.0,), upper=(1.0,), m=5) | bad
    with pytest.raises(ConvexError):
        GridSpec(**kw)


def test_box_domain_basics():
    D = DomainPolytope.box([-1, -2], [1, 2])
    assert D.volume == pytest.approx(8.0)
    assert D.contains([[0, 0], [1.5, 0]]).tolist() == [True, False]
    np.testing.assert_allclose(D.distance_to_boundary(np.array([[0.0, 0.0]])), [1.0])
    assert D.is_full_dimensional


def test_polytope_from_vertices_matches_scipy_hull():
    rng = np.random.default_rng(0)
    P = rng.normal(size=(12, 2))
    D = DomainPolytope.from_vertices(P)
    assert D.volume == pytest.approx(ConvexHull(P).volume, rel=1e-12)


def test_degenerate_domains():
    seg = DomainPolytope.from_vertices([[0, 0], [1, 1]])
    assert seg.affine_dim == 1 and seg.volume == 0.0
    pt = DomainPolytope.box([0.0], [0.0])
    assert pt.affine_dim == 0


def test_unbounded_halfspace_rejected():
    with pytest.raises(ConvexError):
        DomainPolytope(np.array([[1.0, 0.0]]), np.array([1.0]))


def test_ball_volume():
    assert Ball((0, 0, 0), 2.0).volume == pytest.approx(4 / 3 * math.pi * 8)


def test_domain_roundtrip():
    for D in (DomainPolytope.box([0, 0], [1, 2]), Ball((0.0,), 1.0), DomainPolytope.whole_space(2)):
        from convexsc.convex_core import domain_from_dict

        E = domain_from_dict(D.to_dict())
        assert type(E) is type(D)
        assert E.dim == D.dim


def test_max_affine_values_and_infinity_off_domain():
    u = MaxAffineFunction([[1.0], [-1.0]], [0.0, 0.0], DomainPolytope.box([-1], [1]))
    np.testing.assert_allclose(u(np.array([[-0.5], [0.25]])), [0.5, 0.25])
    assert u(np.array([2.0])) == math.inf
    assert lipschitz_constant(u) == 1.0


def test_lipschitz_examples():
    assert lipschitz_constant(MaxAffineFunction([[3.0, 4.0]], [0.0], DomainPolytope.box([0, 0], [1, 1]))) == 5.0
    q = quadratic([[2.0]], domain=DomainPolytope.box([-1], [1]))
    assert lipschitz_constant(q) == pytest.approx(2.0)


def test_subdivision_1d_vertices():
    # |x| on [-1, 2]: vertices at -1, 0, 2
    u = MaxAffineFunction([[1.0], [-1.0]], [0.0, 0.0], DomainPolytope.box([-1], [2]))
    v = np.sort(u.subdivision.vertices[:, 0])
    np.testing.assert_allclose(v, [-1.0, 0.0, 2.0])


def test_subdivision_2d_against_vertex_enumeration():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 2))
    b = rng.normal(size=6)
    D = DomainPolytope.box([-1, -1], [1, 1])
    u = MaxAffineFunction(a, b, D)
    # oracle: vertices of the epigraph truncated at a high level, projected
    top = 1e3
    A = np.vstack([np.column_stack([D.A, np.zeros(len(D.A))]),
                   np.column_stack([a, -np.ones(6)]), [[0, 0, 1.0]]])
    bb = np.concatenate([D.b, -b, [top]])
    K = enumerate_vertices(A, bb)
    low = K[K[:, 2] < top - 1][:, :2]
    got = u.subdivision.vertices
    for p in low:
        assert np.min(np.linalg.norm(got - p, axis=1)) < 1e-8


def test_sample_exact_values():
    q = quadratic([[1.0]], domain=DomainPolytope.box([-1], [1]))
    s = sample(q, GridSpec((-1.0,), (1.0,), 5))
    np.testing.assert_allclose(s.values, [0.5, 0.125, 0.0, 0.125, 0.5])


def test_sample_outside_domain_is_inf():
    s = sample(hemisphere(1.0, 1), GridSpec((-2.0,), (2.0,), 5))
    assert np.isinf(s.values[0]) and np.isinf(s.values[-1])
    assert s.values[2] == pytest.approx(-1.0)


def test_empty_sample_raises():
    with pytest.raises(EmptyDomainError):
        sample(hemisphere(1.0, 1), GridSpec((3.0,), (4.0,), 5))


def test_validate_convexity_detects_concavity():
    g = GridSpec((-1.0,), (1.0,), 101)
    s = SampledConvexFunction(g, -g.nodes()[:, 0] ** 2)
    rep = validate_convexity(s)
    assert not rep.passed
    assert rep.worst_violation == pytest.approx(g.spacing[0] ** 2)


def test_validate_convexity_accepts_sampled_specimens():
    for spec in (quadratic(np.eye(2), domain=DomainPolytope.box([-1, -1], [1, 1])), huber(0.5, 2.0, 2)):
        s = sample(spec, GridSpec((-1.0, -1.0), (1.0, 1.0), 41))
        assert validate_convexity(s).passed


def test_validate_convexity_flags_nonconvex_domain():
    g = GridSpec((-1.0,), (1.0,), 5)
    v = np.array([0.0, 0.0, np.inf, 0.0, 0.0])
    assert validate_convexity(SampledConvexFunction(g, v)).worst_violation == math.inf


def test_hemisphere_hessian_det_closed_form():
    u = hemisphere(1.0, 2)
    X = np.array([[0.3, 0.1], [0.0, 0.0], [-0.5, 0.5]])
    s2 = 1 - (X**2).sum(axis=1)
    np.testing.assert_allclose(u.hessian_det(X), s2 ** (-2), rtol=1e-10)


def test_fd_hessian_matches_analytic():
    f = radial_power(4, DomainPolytope.box([-1, -1], [1, 1]))
    g = custom(f.value_fn, f.domain, validate=False)
    X = np.array([[0.3, -0.2], [0.5, 0.4]])
    np.testing.assert_allclose(g.hessian(X), f.hessian(X), rtol=1e-5, atol=1e-6)


def test_concave_custom_rejected():
    g = custom(lambda X: -(X**2).sum(axis=1), DomainPolytope.box([-1], [1]), validate=False)
    with pytest.raises(ConvexityViolationError):
        g.hessian_det(np.array([[0.1]]))
    with pytest.raises(ConvexError):
        custom(lambda X: -(X**2).sum(axis=1), DomainPolytope.box([-1], [1]))


def test_huber_values_and_gradient():
    h = huber(1.0, 2.0, 1)
    np.testing.assert_allclose(h(np.array([[0.5], [3.0]])), [0.25, 2.0 * 3.0 - 1.0])
    assert h.lipschitz == pytest.approx(2.0)


def test_specimen_roundtrip():
    for u in (quadratic([[2.0]], domain=DomainPolytope.box([-1], [1])), hemisphere(1.0, 2), huber(1.0, 1.0, 1),
              MaxAffineFunction([[1.0], [-1.0]], [0.0, 0.0], DomainPolytope.box([-1], [1]))):
        v = specimen_from_dict(specimen_to_dict(u))
        X = np.array([[0.2] * u.dim, [-0.4] * u.dim])
        np.testing.assert_allclose(v(X), u(X))


def test_hull_and_area_helpers():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])
    hull = convex_hull_2d(sq)
    assert len(hull) == 4
    assert polygon_area(hull) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_pl_samples_are_convex(pieces, seed):
    rng = np.random.default_rng(seed)
    n = 1 + seed % 2
    u = MaxAffineFunction(rng.normal(size=(pieces, n)), rng.normal(size=pieces),
                          DomainPolytope.box(-np.ones(n), np.ones(n)))
    s = sample(u, GridSpec(tuple(-np.ones(n)), tuple(np.ones(n)), 17))
    assert validate_convexity(s).passed


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.1, 3))
def test_ball_contains_consistent_with_distance(center, radius):
    B = Ball(tuple(center), radius)
    X = np.array(center) + np.random.default_rng(0).normal(size=(20, 2)) * radius
    assert np.array_equal(B.contains(X, tol=0.0), B.distance_to_boundary(X) >= 0)


def test_ball_box_volume_against_monte_carlo():
    from convexsc.geometry import ball_box_volume

    assert ball_box_volume([0, 0], 1.0, [0, 0], [2, 2]) == pytest.approx(math.pi / 4, rel=1e-12)
    assert ball_box_volume([0, 0, 0], 1.0, [0, 0, 0], [2, 2, 2]) == pytest.approx(math.pi / 6, rel=1e-10)
    rng = np.random.default_rng(4)
    c, lo = rng.normal(size=2), np.array([-0.7, -0.2])
    hi = lo + [1.3, 0.9]
    X = lo + (hi - lo) * rng.random((400_000, 2))
    mc = np.mean(np.linalg.norm(X - c, axis=1) <= 1.0) * np.prod(hi - lo)
    assert ball_box_volume(c, 1.0, lo, hi) == pytest.approx(mc, abs=5e-3)


def test_transformed_specimen():
    q = quadratic(np.eye(2), domain=DomainPolytope.box([-1, -1], [1, 1]))
    t = q.transformed(shift=np.array([0.5, 0.0]), slope=np.array([1.0, 0.0]), const=2.0)
    X = np.array([[0.0, 0.0], [-1.0, 0.5]])
    expected = 0.5 * ((X + [0.5, 0.0]) ** 2).sum(axis=1) + X[:, 0] + 2.0
    np.testing.assert_allclose(t(X), expected)
    assert t.has_analytic_hessian
    np.testing.assert_allclose(t.hessian_det(X), [1.0, 1.0])
