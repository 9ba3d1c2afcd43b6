"""Legendre-Fenchel conjugation.

``conjugate_pl`` is exact for max-affine functions: the conjugate of
``u = max_i <a_i, x> + b_i`` on a polytope is the max of the affine functions
``y -> <x_v, y> - u(x_v)`` over the vertices ``x_v`` of the subdivision of
``dom(u)``. ``conjugate_sampled`` is the discrete transform on box grids,
computed one axis at a time from lower convex hulls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex_core import (
    DomainPolytope,
    GridSpec,
    MaxAffineFunction,
    SampledConvexFunction,
)
from .errors import ConvexError, SlopeCoverageError
from .geometry import enumerate_vertices


@dataclass(frozen=True)
class DualGridSpec(GridSpec):
    """A :class:`GridSpec` read in the slope variable ``y``."""

    @classmethod
    def auto(cls, u: SampledConvexFunction, m=None, inflate=0.1):
        """Box covering the forward-difference slope range, inflated by ``inflate``."""
        lo, hi = slope_range(u)
        width = hi - lo
        pad = inflate * np.where(width > 0, width, 0.0) + np.where(width > 0, 0.0, 1.0)
        return cls(tuple(lo - pad), tuple(hi + pad), m or u.grid.m)


def slope_range(u: SampledConvexFunction):
    """Per-axis ``[min, max]`` of forward differences between finite neighbours."""
    v = u.values
    h = u.grid.spacing
    lo, hi = np.empty(u.grid.dim), np.empty(u.grid.dim)
    for k in range(u.grid.dim):
        a = np.take(v, np.arange(1, u.grid.m), axis=k)
        b = np.take(v, np.arange(0, u.grid.m - 1), axis=k)
        ok = np.isfinite(a) & np.isfinite(b)
        if ok.any():
            d = (a[ok] - b[ok]) / h[k]
            lo[k], hi[k] = d.min(), d.max()
        else:
            lo[k] = hi[k] = 0.0
    return lo, hi


# ---------------------------------------------------------------------------
# exact conjugate of max-affine functions


def conjugate_pl(u: MaxAffineFunction) -> MaxAffineFunction:
    """Exact conjugate, finite on R^n (encoded by a box of radius ``4 (1 + max |a_i|)``)."""
    if u.domain.is_whole_space:
        raise ConvexError("conjugate_pl needs a compact primal domain")
    verts = u.subdivision.vertices
    vals = u.unrestricted(verts)
    radius = 4.0 * (1.0 + float(np.linalg.norm(u.slopes, axis=1).max()))
    dom = DomainPolytope.whole_space(u.dim, radius)
    return MaxAffineFunction(verts, -vals, dom)


def epigraph_support_check(u: MaxAffineFunction, ys) -> float:
    """Largest ``|u*(y) - h_K(y, -1)|`` over ``ys`` for the truncated epigraph ``K``.

    ``K = epi(u) ∩ {t <= max u}`` is described by halfspaces and its vertices
    are enumerated independently of the subdivision used by ``conjugate_pl``.
    """
    n = u.dim
    ys = np.asarray(ys, dtype=float).reshape(-1, n)
    conj = conjugate_pl(u)
    top = u.max_value
    dom = u.domain
    # rows act on (x, t)
    A = np.vstack([
        np.column_stack([dom.A, np.zeros(len(dom.A))]),
        np.column_stack([u.slopes, -np.ones(u.n_pieces)]),
        np.concatenate([np.zeros(n), [1.0]])[None, :],
    ])
    b = np.concatenate([dom.b, -u.intercepts, [top]])
    K = enumerate_vertices(A, b)
    if len(K) == 0:
        # K is flat when u is constant on a flat domain; fall back to its generators
        x = dom.vertices
        K = np.column_stack([x, u.unrestricted(x)])
    z = np.column_stack([ys, -np.ones(len(ys))])
    support = (z @ K.T).max(axis=1)
    return float(np.abs(conj.unrestricted(ys) - support).max())


# ---------------------------------------------------------------------------
# discrete conjugate


def _lower_hull(x, f):
    """Indices of the lower convex hull of ``(x_i, f_i)``; ``x`` increasing."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # drop k if it lies on or above the chord j -> i
            if (f[k] - f[j]) * (x[i] - x[j]) >= (f[i] - f[j]) * (x[k] - x[j]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull, dtype=int)


def _llt_1d(x, f, y):
    """``max_i x_i y_j - f_i`` for all ``y_j`` (``+inf`` entries of ``f`` skipped)."""
    ok = np.isfinite(f)
    if not ok.any():
        return np.full(len(y), -np.inf)
    xs, fs = x[ok], f[ok]
    h = _lower_hull(xs, fs)
    xh, fh = xs[h], fs[h]
    if len(h) == 1:
        return xh[0] * y - fh[0]
    slopes = np.diff(fh) / np.diff(xh)
    idx = np.searchsorted(slopes, y)
    return xh[idx] * y - fh[idx]


def conjugate_sampled(u: SampledConvexFunction, dual: GridSpec, check_coverage=True) -> SampledConvexFunction:
    """Discrete conjugate ``max_i <x_i, y_j> - u(x_i)`` on the nodes of ``dual``.

    In dimension >= 2 the maximum is taken one axis at a time, which is exact
    on tensor grids.
    """
    n = u.grid.dim
    if dual.dim != n:
        raise ConvexError("dual grid dimension differs from the primal grid")
    if check_coverage:
        lo, hi = slope_range(u)
        tol = 1e-9 * (1.0 + np.abs(np.concatenate([lo, hi])).max())
        for k in range(n):
            if lo[k] < dual.lower[k] - tol or hi[k] > dual.upper[k] + tol:
                raise SlopeCoverageError(k, (lo[k], hi[k]), (dual.lower[k], dual.upper[k]))
    xs = u.grid.axes
    ys = dual.axes
    g = np.array(u.values, dtype=float)
    # after pass k, axes < k hold dual variables and g stores -(partial conjugate)
    for k in range(n):
        g = np.moveaxis(g, k, -1)
        shape = g.shape
        flat = g.reshape(-1, shape[-1])
        out = np.empty((len(flat), len(ys[k])))
        for r, row in enumerate(flat):
            out[r] = -_llt_1d(xs[k], row, ys[k])
        g = np.moveaxis(out.reshape(shape[:-1] + (len(ys[k]),)), -1, k)
    vals = -g
    return SampledConvexFunction(dual, vals)


def biconjugate(u: SampledConvexFunction, dual: GridSpec | None = None) -> SampledConvexFunction:
    """Discrete ``u**`` on the primal grid, ``+inf`` off the hull of finite nodes.

    Non-convex input returns its discrete convex envelope.
    """
    if dual is None:
        dual = DualGridSpec.auto(u, m=max(u.grid.m, 2 * u.grid.m - 1))
    star = conjugate_sampled(u, dual)
    back = conjugate_sampled(star, u.grid, check_coverage=False)
    vals = np.array(back.values)
    vals[~_in_finite_hull(u)] = np.inf
    return SampledConvexFunction(u.grid, vals)


def _in_finite_hull(u: SampledConvexFunction):
    fin = u.finite
    if u.grid.dim == 1 or fin.all():
        if u.grid.dim == 1:
            idx = np.flatnonzero(fin)
            mask = np.zeros_like(fin)
            mask[idx.min(): idx.max() + 1] = True
            return mask
        return fin
    from scipy.spatial import Delaunay, QhullError

    X = u.grid.nodes()
    pts = X[fin.ravel()]
    try:
        tri = Delaunay(pts)
    except QhullError:
        return fin
    inside = tri.find_simplex(X, tol=1e-12) >= 0
    return inside.reshape(fin.shape) | fin


def conjugate_closed_form(u):
    """Exact conjugate of named smooth specimens (and ``conjugate_pl`` for PL input).

    * ``k |x|^2 / 2 + <b, x> + c`` on a ball (or interval) centred at 0 maps to
      a Huber function with core radius ``k R`` and curvature ``1 / k``;
    * a positive definite quadratic on R^n maps to the inverse quadratic;
    * a Huber function maps back to the isotropic quadratic on a ball.
    """
    from .convex_core import Ball, SmoothConvexSpec, huber, quadratic

    if isinstance(u, MaxAffineFunction):
        return conjugate_pl(u)
    if not isinstance(u, SmoothConvexSpec):
        raise ConvexError("unsupported specimen type for conjugation")
    n = u.dim
    if u.kind == "quadratic":
        A = np.array(u.params["A"])
        b = np.array(u.params["b"])
        c = float(u.params["c"])
        dom = u.domain
        if dom.is_whole_space:
            Ainv = np.linalg.inv(A)
            return quadratic(Ainv, -Ainv @ b, 0.5 * b @ Ainv @ b - c)
        k = A[0, 0]
        if not np.allclose(A, k * np.eye(n)) or k <= 0:
            raise ConvexError("closed-form conjugate needs an isotropic positive quadratic")
        if isinstance(dom, Ball):
            center, R = np.array(dom.center), dom.radius
        elif n == 1 and dom._box is not None:
            lo, hi = dom._box[0][0], dom._box[1][0]
            center, R = np.array([0.5 * (lo + hi)]), 0.5 * (hi - lo)
        else:
            raise ConvexError("closed-form conjugate needs a ball or interval domain")
        if np.any(center != 0):
            raise ConvexError("closed-form conjugate needs a domain centred at the origin")
        return huber(radius=k * R, curvature=1.0 / k, dim=n, center=b, offset=-c)
    if u.kind == "huber":
        cc, r = u.params["curvature"], u.params["radius"]
        y0 = np.array(u.params["center"])
        return quadratic(np.eye(n) / cc, y0, -u.params["offset"], Ball((0.0,) * n, cc * r))
    raise ConvexError(f"no closed-form conjugate for kind {u.kind!r}")
