import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convexsc import DomainPolytope, GridSpec, MaxAffineFunction, SampledConvexFunction, sample
from convexsc.convex_core import Ball, huber, quadratic, radial_power
from convexsc.errors import ConvexError, SlopeCoverageError
from convexsc.legendre import (
    DualGridSpec,
    biconjugate,
    conjugate_closed_form,
    conjugate_pl,
    conjugate_sampled,
    epigraph_support_check,
)


def _brute_conjugate(X, vals, Y):
    fin = np.isfinite(vals)
    return (Y @ X[fin].T - vals[fin]).max(axis=1)


def test_indicator_conjugate_is_abs():
    u = MaxAffineFunction([[0.0]], [0.0], DomainPolytope.box([-1], [1]))
    c = conjugate_pl(u)
    y = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(c(y), np.abs(y[:, 0]), atol=1e-14)


def test_abs_conjugate_is_box_indicator_shape():
    u = MaxAffineFunction([[1.0], [-1.0]], [0.0, 0.0], DomainPolytope.box([-1], [1]))
    c = conjugate_pl(u)
    y = np.linspace(-3, 3, 25)[:, None]
    expected = np.maximum.reduce([-y[:, 0] - 1, np.zeros(len(y)), y[:, 0] - 1])
    np.testing.assert_allclose(c.unrestricted(y), expected, atol=1e-14)


def test_linear_on_unit_interval():
    u = MaxAffineFunction([[2.0]], [0.0], DomainPolytope.box([0], [1]))
    y = np.linspace(-2, 5, 15)[:, None]
    np.testing.assert_allclose(conjugate_pl(u).unrestricted(y), np.maximum(0, y[:, 0] - 2), atol=1e-14)


def test_conjugate_pl_rejects_whole_space():
    u = MaxAffineFunction([[1.0]], [0.0], DomainPolytope.whole_space(1))
    with pytest.raises(ConvexError):
        conjugate_pl(u)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_conjugate_pl_matches_epigraph_support(seed):
    rng = np.random.default_rng(seed)
    n = 1 + seed % 2
    P = int(rng.integers(1, 8))
    u = MaxAffineFunction(rng.normal(size=(P, n)), rng.normal(size=P),
                          DomainPolytope.box(-np.ones(n), np.ones(n)))
    ys = rng.normal(size=(40, n)) * 3
    assert epigraph_support_check(u, ys) <= 1e-9


def test_conjugate_pl_against_dense_brute_force():
    rng = np.random.default_rng(5)
    u = MaxAffineFunction(rng.normal(size=(5, 2)), rng.normal(size=5), DomainPolytope.box([-1, -1], [1, 1]))
    g = GridSpec((-1.0, -1.0), (1.0, 1.0), 201)
    X = g.nodes()
    Y = rng.normal(size=(30, 2))
    brute = _brute_conjugate(X, u(X), Y)
    # a vertex-based maximum is at least the grid maximum and within a grid cell of it
    got = conjugate_pl(u).unrestricted(Y)
    assert np.all(got >= brute - 1e-12)
    assert np.all(got - brute <= 0.01 * (1 + np.linalg.norm(Y, axis=1)) * 2)


def test_llt_matches_brute_force_1d():
    g = GridSpec((-1.0,), (2.0,), 301)
    s = sample(radial_power(4, DomainPolytope.box([-1], [2])), g)
    dual = DualGridSpec.auto(s)
    c = conjugate_sampled(s, dual)
    brute = _brute_conjugate(g.nodes(), s.values.ravel(), dual.nodes())
    np.testing.assert_allclose(c.values.ravel(), brute, atol=1e-12)


def test_llt_matches_brute_force_2d_with_infinite_nodes():
    g = GridSpec((-1.0, -1.0), (1.0, 1.0), 31)
    s = sample(quadratic(np.array([[2.0, 0.3], [0.3, 1.0]]), domain=Ball((0.0, 0.0), 1.0)), g)
    dual = DualGridSpec.auto(s, m=25)
    c = conjugate_sampled(s, dual)
    brute = _brute_conjugate(g.nodes(), s.values.ravel(), dual.nodes())
    np.testing.assert_allclose(c.values.ravel(), brute, atol=1e-12)


def test_slope_coverage_error():
    g = GridSpec((-1.0,), (1.0,), 21)
    s = sample(quadratic([[4.0]], domain=DomainPolytope.box([-1], [1])), g)
    with pytest.raises(SlopeCoverageError) as exc:
        conjugate_sampled(s, GridSpec((-1.0,), (1.0,), 21))
    assert exc.value.axis == 0


def test_quadratic_discrete_conjugate_close_to_closed_form():
    g = GridSpec((-2.0,), (2.0,), 401)
    s = sample(quadratic([[1.0]], domain=DomainPolytope.box([-2], [2])), g)
    # a window narrower than the slope range is fine away from its edges
    dual = GridSpec((-1.5,), (1.5,), 31)
    c = conjugate_sampled(s, dual, check_coverage=False)
    y = dual.nodes()[:, 0]
    np.testing.assert_allclose(c.values.ravel(), 0.5 * y**2, atol=g.spacing[0] ** 2)
    assert c.values[dual.m // 2 + 10] == pytest.approx(0.5, abs=1e-4)


def test_biconjugate_of_cos_is_envelope():
    # cos on [-pi, pi] is not convex; its convex envelope is constant -1 in between
    g = GridSpec((-math.pi,), (math.pi,), 201)
    s = SampledConvexFunction(g, np.cos(g.nodes()[:, 0]))
    bb = biconjugate(s)
    mid = g.m // 2
    assert bb.values[mid] == pytest.approx(-1.0, abs=1e-12)
    assert np.all(bb.values <= s.values + 1e-12)


def test_biconjugate_of_cos_on_unit_interval():
    # on [-1, 1] the envelope of cos is the chord at height cos(1)
    g = GridSpec((-1.0,), (1.0,), 201)
    s = SampledConvexFunction(g, np.cos(g.nodes()[:, 0]))
    bb = biconjugate(s)
    np.testing.assert_allclose(bb.values, math.cos(1.0), atol=1e-12)


def test_biconjugate_inf_outside_hull():
    g = GridSpec((-1.0, -1.0), (1.0, 1.0), 21)
    s = sample(quadratic(np.eye(2), domain=Ball((0.0, 0.0), 0.8)), g)
    bb = biconjugate(s)
    assert np.isinf(bb.values[0, 0])
    fin = s.finite
    np.testing.assert_allclose(bb.values[fin], s.values[fin], atol=1e-12)


def test_closed_form_conjugates():
    q = quadratic(np.array([[2.0, 0.5], [0.5, 1.0]]), b=[0.3, -0.1], c=0.7)
    c = conjugate_closed_form(q)
    Y = np.random.default_rng(2).normal(size=(10, 2))
    Ainv = np.linalg.inv([[2.0, 0.5], [0.5, 1.0]])
    d = Y - np.array([0.3, -0.1])
    np.testing.assert_allclose(c(Y), 0.5 * np.einsum("ni,ij,nj->n", d, Ainv, d) - 0.7, rtol=1e-12)

    k = 3.0
    u = quadratic([[2 * k]], domain=Ball((0.0,), 1.0))
    cu = conjugate_closed_form(u)
    y = np.linspace(-10, 10, 41)[:, None]
    # sup over |x| <= 1 of xy - k x^2 by dense brute force
    xs = np.linspace(-1, 1, 200_001)
    brute = np.array([(xs * yy - k * xs**2).max() for yy in y[:, 0]])
    np.testing.assert_allclose(cu(y), brute, atol=1e-9)


def test_huber_closed_form_is_involutive():
    h = huber(1.5, 2.0, 1)
    hh = conjugate_closed_form(conjugate_closed_form(h))
    X = np.linspace(-5, 5, 21)[:, None]
    np.testing.assert_allclose(hh(X), h(X), atol=1e-12)
