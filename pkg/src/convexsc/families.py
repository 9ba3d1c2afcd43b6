"""Shipped function families and random generators for the experiments.

* :func:`pl_tangent_family` -- max of tangents to ``a |x|^2 / 2`` at ``k``
  points per axis; tau-convergent to the paraboloid.
* :func:`mollified_tangent_family` -- the same tangents smoothed by a Gaussian
  of width equal to the tangent spacing.
* :func:`example21_family` -- ``k |x|^2`` on the unit ball, which epi-converges
  to the indicator of the origin while its Lipschitz constants blow up.
* :func:`sqrt_family`, :func:`huber_family`, :func:`constant_family`.
* :func:`random_pl` and :func:`random_transport_family` for property suites.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .convergence import SequenceFamily
from .convex_core import (
    Ball,
    DomainPolytope,
    MaxAffineFunction,
    custom,
    huber,
    quadratic,
)

GEOMETRIC = (4, 8, 16, 32, 64)
EXAMPLE_SCHEDULE = (1, 2, 4, 8, 16, 32, 64, 128, 256)


def _box(n, r=1.0):
    return DomainPolytope.box(-r * np.ones(n), r * np.ones(n))


def tangent_points(k, r=1.0):
    return np.linspace(-r, r, k)


def pl_tangent(a, k, n=1, r=1.0):
    """``max_j <a t_j, x> - a |t_j|^2 / 2`` over a ``k^n`` tensor grid of tangent points on ``[-r, r]^n``."""
    t = tangent_points(k, r)
    T = np.stack([g.ravel() for g in np.meshgrid(*([t] * n), indexing="ij")], axis=-1)
    return MaxAffineFunction(a * T, -0.5 * a * np.einsum("ij,ij->i", T, T), _box(n, r))


def pl_tangent_family(a=1.0, n=1, schedule=GEOMETRIC, r=1.0):
    limit = quadratic(a * np.eye(n), domain=_box(n, r))
    return SequenceFamily(f"pl-tangent(a={a:g},n={n})", lambda k: pl_tangent(a, k, n, r),
                          limit, schedule, "tau")


def _mollified_1d(a, k, r):
    """Gaussian smoothing of the 1-D tangent max, as value/derivative/second-derivative callables."""
    t = tangent_points(k, r)
    h = t[1] - t[0]
    sigma = h
    breaks = 0.5 * (t[1:] + t[:-1])
    jump = a * h
    a0, b0 = a * t[0], -0.5 * a * t[0] ** 2

    def g(x):
        z = (x[:, None] - breaks[None, :]) / sigma
        phi = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
        hinge = (x[:, None] - breaks) * ndtr(z) + sigma * phi
        return a0 * x + b0 + jump * hinge.sum(axis=1)

    def g1(x):
        z = (x[:, None] - breaks[None, :]) / sigma
        return a0 + jump * ndtr(z).sum(axis=1)

    def g2(x):
        z = (x[:, None] - breaks[None, :]) / sigma
        return jump * (np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * sigma)).sum(axis=1)

    return g, g1, g2


def mollified_tangent(a, k, n=1, r=1.0):
    g, g1, g2 = _mollified_1d(a, k, r)
    dom = _box(n, r)

    def value(X):
        return sum(g(X[:, i]) for i in range(n))

    def grad(X):
        return np.column_stack([g1(X[:, i]) for i in range(n)])

    def hess(X):
        H = np.zeros((len(X), n, n))
        for i in range(n):
            H[:, i, i] = g2(X[:, i])
        return H

    # |g'| is monotone on each side, so the gradient norm peaks at a vertex of the box
    lip = float(np.linalg.norm(grad(dom.vertices), axis=1).max())
    return custom(value, dom, grad, hess, lipschitz=lip, name=f"mollified-tangent(k={k})", validate=False)


def mollified_tangent_family(a=1.0, n=1, schedule=GEOMETRIC, r=1.0):
    limit = quadratic(a * np.eye(n), domain=_box(n, r))
    return SequenceFamily(f"mollified-tangent(a={a:g},n={n})",
                          lambda k: mollified_tangent(a, k, n, r), limit, schedule, "tau")


def point_indicator(n):
    """Indicator of the origin as a one-piece max-affine function."""
    return MaxAffineFunction(np.zeros((1, n)), [0.0], DomainPolytope.box(np.zeros(n), np.zeros(n)))


def example21_member(k, n=1):
    """``k |x|^2`` restricted to the closed unit ball."""
    return quadratic(2.0 * k * np.eye(n), domain=Ball((0.0,) * n, 1.0))


def example21_family(n=1, schedule=EXAMPLE_SCHEDULE):
    return SequenceFamily(f"example21(n={n})", lambda k: example21_member(k, n),
                          point_indicator(n), schedule, "epi")


def sqrt_member(k):
    """``sqrt(x^2 + 1/k)`` on R, smooth and finite; tends to ``|x|``."""
    e = 1.0 / k

    def value(X):
        return np.sqrt(X[:, 0] ** 2 + e)

    def grad(X):
        return (X[:, 0] / np.sqrt(X[:, 0] ** 2 + e))[:, None]

    def hess(X):
        return (e / (X[:, 0] ** 2 + e) ** 1.5)[:, None, None]

    return custom(value, DomainPolytope.whole_space(1), grad, hess, lipschitz=1.0,
                  name=f"sqrt(k={k})", validate=False)


def abs_whole_line():
    return MaxAffineFunction([[1.0], [-1.0]], [0.0, 0.0], DomainPolytope.whole_space(1, 4.0))


def sqrt_family(schedule=(1, 4, 16, 64, 256, 1024, 2048)):
    return SequenceFamily("sqrt-smoothing", sqrt_member, abs_whole_line(), schedule, "epi")


def huber_family(n=1, schedule=GEOMETRIC):
    """Core radius 1 with curvature ``1 + 1/k^2``; MA supports stay in the unit ball."""
    return SequenceFamily(f"huber(n={n})", lambda k: huber(1.0, 1.0 + 1.0 / k**2, n),
                          huber(1.0, 1.0, n), schedule, "tau_star")


def constant_family(u, schedule=GEOMETRIC, name="constant"):
    return SequenceFamily(name, lambda k: u, u, schedule, "tau")


# ---------------------------------------------------------------------------
# random generators


def random_domain(rng, n):
    if n == 1 or rng.random() < 0.5:
        lo = -0.2 - rng.random(n)
        return DomainPolytope.box(lo, lo + 0.4 + 1.5 * rng.random(n))
    pts = rng.normal(size=(int(rng.integers(3, 9)), n))
    return DomainPolytope.from_vertices(pts)


def random_pl(rng, n, pieces=None, domain=None):
    P = int(pieces or rng.integers(1, 13))
    a = rng.normal(size=(P, n)) * rng.uniform(0.5, 3.0)
    b = rng.normal(size=P)
    return MaxAffineFunction(a, b, domain or random_domain(rng, n))


def _lift(u, delta, alpha, beta):
    return MaxAffineFunction(u.slopes + delta * alpha, u.intercepts + delta * beta, u.domain)


def random_transport_family(rng, n, tau=True, schedule=GEOMETRIC):
    """Random PL family, tau-convergent or with a steepening sliver piece.

    The tau variant adds ``delta_k (<alpha, x> + beta)`` with ``delta_k = 1/k^2``
    and an affine map that is non-negative on the domain, so errors decrease
    monotonically. The other variant adds the piece ``M + k^2 (<d, x> - h)``
    which is active only within ``O(1/k^2)`` of the face maximizing ``<d, .>``.
    """
    u = random_pl(rng, n)
    name = f"random-{'tau' if tau else 'sliver'}(n={n})"
    if tau:
        alpha = rng.normal(size=n)
        beta = float(-(u.domain.vertices @ alpha).min()) + rng.random()

        def gen(k):
            return _lift(u, 1.0 / k**2, alpha, beta)

        return SequenceFamily(name, gen, u, schedule, "tau")
    d = rng.normal(size=n)
    d /= np.linalg.norm(d)
    h = float((u.domain.vertices @ d).max())
    M = float(u.unrestricted(u.domain.vertices).max()) + 1.0

    def gen(k):
        s = float(k) ** 2
        return MaxAffineFunction(np.vstack([u.slopes, s * d]),
                                 np.concatenate([u.intercepts, [M - s * h]]), u.domain)

    return SequenceFamily(name, gen, u, schedule, "epi")
