"""Representations of convex functions with compact or full domain.

Four carriers are provided:

* :class:`GridSpec` -- a uniform box grid used for sampling and quadrature.
* :class:`MaxAffineFunction` -- ``max_i <a_i, x> + b_i`` restricted to a
  polytope, exact arithmetic on its polyhedral subdivision.
* :class:`SmoothConvexSpec` -- an analytic specimen with value, gradient and
  Hessian evaluators (finite differences when the latter are missing).
* :class:`SampledConvexFunction` -- node values on a grid, ``+inf`` allowed.

``+inf`` is IEEE ``float('inf')`` throughout; it compares above every finite
value and absorbs finite addition, which is the extended-real convention used
for indicator functions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    ConvexError,
    DegeneracyError,
    EmptyDomainError,
    UnsupportedDimensionError,
)
from .geometry import (
    affine_rank,
    clip_polygon,
    convex_hull_2d,
    dedupe_points,
    enumerate_vertices,
    hull_volume,
    polygon_area,
)

INF = math.inf

WHOLE_SPACE_RADIUS = 1e6


def _as_points(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, n) if X.shape[0] == n else X.reshape(-1, 1)
    return X


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid with ``m`` nodes per axis on ``[lower, upper]``."""

    lower: tuple
    upper: tuple
    m: int

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or len(lo) == 0:
            raise ConvexError("grid corners must have the same positive length")
        if int(self.m) != self.m or self.m < 2:
            raise ConvexError(f"grid needs m >= 2 points per axis, got {self.m}")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ConvexError("grid needs lower < upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "m", int(self.m))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def shape(self):
        return (self.m,) * self.dim

    @property
    def spacing(self):
        return (np.array(self.upper) - np.array(self.lower)) / (self.m - 1)

    @property
    def axes(self):
        return [np.linspace(a, b, self.m) for a, b in zip(self.lower, self.upper)]

    def nodes(self):
        """All nodes as an ``(m**n, n)`` array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def cell_centers(self):
        centers = [0.5 * (ax[1:] + ax[:-1]) for ax in self.axes]
        mesh = np.meshgrid(*centers, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper), "m": self.m}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["lower"]), tuple(d["upper"]), int(d["m"]))


# ---------------------------------------------------------------------------
# domains


class DomainPolytope:
    """Bounded polytope ``{x : A x <= b}`` with cached vertex list.

    ``whole_space=True`` marks the box as an encoding of all of R^n: membership
    is then unconditional and only vertex enumeration sees the box.
    """

    def __init__(self, A, b, vertices=None, *, whole_space=False, _box=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise ConvexError("halfspace matrix and offsets disagree in length")
        self.A = A
        self.b = b
        self.whole_space = bool(whole_space)
        self._box = _box
        n = A.shape[1]
        if vertices is None:
            if n > 3:
                raise UnsupportedDimensionError("vertex enumeration needs n <= 3")
            self._check_bounded()
            vertices = enumerate_vertices(A, b)
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float)).reshape(-1, n)
        if len(vertices) == 0:
            raise EmptyDomainError("domain polytope is empty")
        scale = 1.0 + float(np.abs(b).max(initial=0.0))
        if np.any(A @ vertices.T > b[:, None] + 1e-8 * scale):
            raise ConvexError("cached vertex violates a halfspace")
        self.vertices = vertices
        for arr in (self.A, self.b, self.vertices):
            arr.setflags(write=False)

    def _check_bounded(self):
        n = self.A.shape[1]
        for k in range(n):
            for sgn in (1.0, -1.0):
                c = np.zeros(n)
                c[k] = -sgn
                res = linprog(c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n)
                if res.status == 3:
                    raise ConvexError("domain polytope is unbounded")
                if res.status == 2:
                    raise EmptyDomainError("domain polytope is empty")

    # constructors -----------------------------------------------------

    @classmethod
    def box(cls, lower, upper):
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ConvexError("box needs lower <= upper componentwise")
        n = len(lo)
        eye = np.eye(n)
        A = np.vstack([eye, -eye])
        b = np.concatenate([hi, -lo])
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        corners = np.unique(corners, axis=0)
        return cls(A, b, corners, _box=(tuple(lo), tuple(hi)))

    @classmethod
    def whole_space(cls, n, radius=WHOLE_SPACE_RADIUS):
        box = cls.box(-radius * np.ones(n), radius * np.ones(n))
        return cls(box.A, box.b, box.vertices, whole_space=True, _box=box._box)

    @classmethod
    def from_vertices(cls, points):
        """Convex hull of ``points``; lower-dimensional hulls are allowed for n <= 2."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[1]
        if n == 1:
            return cls.box([pts.min()], [pts.max()])
        rank = affine_rank(pts)
        if rank == n:
            if n == 2:
                hull = convex_hull_2d(pts)
                nxt = np.roll(hull, -1, axis=0)
                edge = nxt - hull
                normals = np.column_stack([edge[:, 1], -edge[:, 0]])
                normals /= np.linalg.norm(normals, axis=1)[:, None]
                return cls(normals, np.einsum("ij,ij->i", normals, hull), hull)
            hull = ConvexHull(pts)
            eq = hull.equations
            A, b = eq[:, :-1], -eq[:, -1]
            keep = np.unique(np.round(np.column_stack([A, b]), 12), axis=0, return_index=True)[1]
            return cls(A[np.sort(keep)], b[np.sort(keep)], pts[hull.vertices])
        if n >= 3:
            raise UnsupportedDimensionError("lower-dimensional domains are rejected for n >= 3")
        if rank == 0:
            p = pts[0]
            return cls.box(p, p)
        # segment in the plane
        c = pts.mean(axis=0)
        d = np.linalg.svd(pts - c)[2][0]
        t = (pts - c) @ d
        p0, p1 = c + t.min() * d, c + t.max() * d
        nu = np.array([-d[1], d[0]])
        A = np.array([nu, -nu, d, -d])
        b = np.array([nu @ p0, -nu @ p0, d @ p1, -d @ p0])
        return cls(A, b, np.array([p0, p1]))

    @classmethod
    def from_dict(cls, d):
        kind = d["type"]
        if kind == "box":
            return cls.box(d["lower"], d["upper"])
        if kind == "whole_space":
            return cls.whole_space(int(d["n"]), float(d.get("radius", WHOLE_SPACE_RADIUS)))
        if kind == "polytope":
            return cls(d["A"], d["b"])
        if kind == "ball":
            return Ball(tuple(d["center"]), float(d["radius"]))
        raise ConvexError(f"unknown domain type {kind!r}")

    def to_dict(self):
        if self.whole_space:
            return {"type": "whole_space", "n": self.dim, "radius": float(self._box[1][0])}
        if self._box is not None:
            return {"type": "box", "lower": list(self._box[0]), "upper": list(self._box[1])}
        return {"type": "polytope", "A": self.A.tolist(), "b": self.b.tolist()}

    # queries -----------------------------------------------------------

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def is_whole_space(self):
        return self.whole_space

    @cached_property
    def affine_dim(self):
        return affine_rank(self.vertices)

    @property
    def is_full_dimensional(self):
        return self.affine_dim == self.dim

    @cached_property
    def volume(self):
        """Exact n-volume (0 for lower-dimensional domains, inf for R^n)."""
        if self.whole_space:
            return INF
        if not self.is_full_dimensional:
            return 0.0
        return hull_volume(self.vertices)

    @cached_property
    def polygon(self):
        if self.dim != 2:
            raise UnsupportedDimensionError("polygon view needs n = 2")
        return convex_hull_2d(self.vertices)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    @property
    def scale(self):
        return 1.0 + float(np.abs(self.b).max(initial=0.0))

    def contains(self, X, tol=1e-9):
        X = _as_points(X, self.dim)
        if self.whole_space:
            return np.ones(len(X), dtype=bool)
        return np.all(X @ self.A.T <= self.b + tol * self.scale, axis=1)

    def distance_to_boundary(self, X):
        """Signed distance to the nearest facet hyperplane (positive inside)."""
        X = _as_points(X, self.dim)
        if self.whole_space:
            return np.full(len(X), INF)
        norms = np.linalg.norm(self.A, axis=1)
        return np.min((self.b - X @ self.A.T) / norms, axis=1)

    def active_facets(self, x, tol=1e-9):
        if self.whole_space:
            return np.array([], dtype=int)
        x = np.asarray(x, dtype=float).ravel()
        return np.flatnonzero(np.abs(self.A @ x - self.b) <= tol * self.scale)

    def shrunk(self, frac):
        """Scale about the vertex centroid so each side moves in by ``frac``."""
        c = self.centroid
        factor = 1.0 - 2.0 * frac
        if self._box is not None and not self.whole_space:
            lo, hi = (np.array(v) for v in self._box)
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            return DomainPolytope.box(mid - factor * half, mid + factor * half)
        return DomainPolytope.from_vertices(c + factor * (self.vertices - c))

    def preimage(self, L, s):
        """``{x : L x + s in self}`` for invertible ``L``."""
        L = np.asarray(L, dtype=float)
        Linv = np.linalg.inv(L)
        verts = (self.vertices - s) @ Linv.T
        return DomainPolytope(self.A @ L, self.b - self.A @ s, verts)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball, the second domain shape smooth specimens may use."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.radius > 0:
            raise ConvexError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return len(self.center)

    is_whole_space = False
    is_full_dimensional = True

    @property
    def volume(self):
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n

    @property
    def scale(self):
        return 1.0 + self.radius + float(np.abs(self.center).max())

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    @property
    def centroid(self):
        return np.array(self.center)

    @property
    def vertices(self):
        lo, hi = self.bounding_box()
        return np.array(list(itertools.product(*zip(lo, hi))))

    def contains(self, X, tol=1e-9):
        X = _as_points(X, self.dim)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius * (1 + tol)

    def distance_to_boundary(self, X):
        X = _as_points(X, self.dim)
        return self.radius - np.linalg.norm(X - self.center, axis=1)

    def shrunk(self, frac):
        return Ball(self.center, self.radius * (1.0 - 2.0 * frac))

    def to_dict(self):
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


def domain_from_dict(d):
    return DomainPolytope.from_dict(d)


# ---------------------------------------------------------------------------
# piecewise linear functions


@dataclass(frozen=True)
class Subdivision:
    """Polyhedral subdivision of ``dom(u)`` induced by the affine pieces.

    ``vertices`` are the 0-cells, ``on_box`` flags vertices created only by the
    box that encodes R^n, and ``cell_volume[i]`` is the n-volume of the region
    where piece ``i`` is maximal.
    """

    vertices: np.ndarray
    on_box: np.ndarray
    cell_volume: np.ndarray


class MaxAffineFunction:
    """``u(x) = max_i (<a_i, x> + b_i)`` on a polytope, ``+inf`` outside."""

    def __init__(self, slopes, intercepts, domain: DomainPolytope):
        b = np.atleast_1d(np.asarray(intercepts, dtype=float))
        a = np.asarray(slopes, dtype=float)
        if a.ndim == 1:
            a = a.reshape(len(b), -1)
        if len(b) == 0:
            raise ConvexError("a max-affine function needs at least one piece")
        if a.shape != (len(b), domain.dim):
            raise ConvexError(f"slopes shape {a.shape} does not match {len(b)} pieces in R^{domain.dim}")
        if not isinstance(domain, DomainPolytope):
            raise ConvexError("max-affine functions live on polytope domains")
        self.slopes = a
        self.intercepts = b
        self.domain = domain
        a.setflags(write=False)
        b.setflags(write=False)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n_pieces(self):
        return len(self.intercepts)

    def __repr__(self):
        return f"MaxAffineFunction(n={self.dim}, pieces={self.n_pieces}, whole_space={self.domain.whole_space})"

    def affine_values(self, X):
        X = _as_points(X, self.dim)
        return X @ self.slopes.T + self.intercepts

    def unrestricted(self, X):
        return self.affine_values(X).max(axis=1)

    def __call__(self, X):
        scalar = np.ndim(X) == 0 or (np.ndim(X) == 1 and len(X) == self.dim)
        X = _as_points(X, self.dim)
        v = np.where(self.domain.contains(X), self.unrestricted(X), INF)
        return float(v[0]) if scalar else v

    def gradient(self, X):
        """Slope of one maximal piece at each point (a selection of the subdifferential)."""
        X = _as_points(X, self.dim)
        return self.slopes[np.argmax(self.affine_values(X), axis=1)]

    def eps_act(self, value):
        return 1e-9 * (1.0 + abs(value))

    def active_pieces(self, x):
        vals = self.affine_values(x)[0]
        top = vals.max()
        return np.flatnonzero(vals >= top - self.eps_act(top))

    @cached_property
    def max_value(self):
        if self.domain.whole_space:
            return INF
        return float(self.unrestricted(self.domain.vertices).max())

    @cached_property
    def subdivision(self) -> Subdivision:
        return _subdivision(self)

    def shifted(self, slope=None, const=0.0):
        """``u + <slope, x> + const``."""
        c = np.zeros(self.dim) if slope is None else np.asarray(slope, dtype=float)
        return MaxAffineFunction(self.slopes + c, self.intercepts + const, self.domain)

    def translated(self, shift):
        """``x -> u(x - shift)``."""
        s = np.asarray(shift, dtype=float)
        if self.domain.whole_space:
            dom = self.domain
        else:
            dom = DomainPolytope(self.domain.A, self.domain.b + self.domain.A @ s, self.domain.vertices + s)
        return MaxAffineFunction(self.slopes, self.intercepts - self.slopes @ s, dom)

    def to_dict(self):
        return {
            "kind": "max_affine",
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
            "domain": self.domain.to_dict(),
        }


def _unique_pieces(a, b):
    """Collapse equal slopes to the largest intercept; returns kept indices."""
    order = np.lexsort((-b, *a.T[::-1]))
    keep = []
    last = None
    for i in order:
        key = tuple(a[i])
        if key != last:
            keep.append(i)
            last = key
    return np.array(sorted(keep))


def _cells_1d(a, b, lo, hi):
    d = a[None, :, 0] - a[:, None, 0]  # d[i, j] = a_j - a_i
    r = b[:, None] - b[None, :]  # constraint d x <= r
    with np.errstate(divide="ignore", invalid="ignore"):
        q = r / d
    upper = np.where(d > 0, q, INF).min(axis=1)
    lower = np.where(d < 0, q, -INF).max(axis=1)
    impossible = np.any((d == 0) & (r < 0), axis=1)
    cl = np.maximum(lo, lower)
    ch = np.minimum(hi, upper)
    empty = impossible | (ch < cl)
    return cl, ch, empty


def _regular_neighbors(a, b):
    """Adjacency of maximal regions from the lower hull of lifted slopes."""
    lifted = np.column_stack([a, -b])
    hull = ConvexHull(lifted)
    lower = hull.equations[:, -2] < -1e-12
    nbrs = [set() for _ in range(len(a))]
    for simplex in hull.simplices[lower]:
        for i in simplex:
            nbrs[i].update(int(j) for j in simplex if j != i)
    return [np.array(sorted(s), dtype=int) for s in nbrs]


def _cells_2d(a, b, poly):
    P = len(a)
    nbrs = None
    if P > 24:
        try:
            nbrs = _regular_neighbors(a, b)
        except (QhullError, ValueError):
            nbrs = None
    cells = []
    for i in range(P):
        if nbrs is not None and len(nbrs[i]) == 0:
            cells.append(np.empty((0, 2)))
            continue
        cand = nbrs[i] if nbrs is not None else [j for j in range(P) if j != i]
        cell = poly.copy()
        for j in cand:
            normal = a[j] - a[i]
            offset = b[i] - b[j]
            if not normal.any():
                if offset < 0:
                    cell = np.empty((0, 2))
                continue
            cell = clip_polygon(cell, normal, offset)
            if len(cell) == 0:
                break
        cells.append(cell)
    return cells


def _polish(u, x):
    """Snap a vertex onto the exact intersection of its active constraints."""
    vals = u.affine_values(x)[0]
    top = vals.max()
    act = np.flatnonzero(vals >= top - 1e-7 * (1 + abs(top)))
    rows, rhs = [], []
    i0 = act[0]
    for i in act[1:]:
        rows.append(u.slopes[i] - u.slopes[i0])
        rhs.append(u.intercepts[i0] - u.intercepts[i])
    dom = u.domain
    facets = np.flatnonzero(np.abs(dom.A @ x - dom.b) <= 1e-7 * dom.scale)
    for f in facets:
        rows.append(dom.A[f])
        rhs.append(dom.b[f])
    if not rows:
        return x
    M = np.array(rows)
    if np.linalg.matrix_rank(M, tol=1e-10) < u.dim:
        return x
    y = np.linalg.lstsq(M, np.array(rhs), rcond=None)[0]
    if np.linalg.norm(y - x) <= 1e-6 * (1 + np.linalg.norm(x)):
        return y
    return x


def _subdivision(u: MaxAffineFunction) -> Subdivision:
    n = u.dim
    dom = u.domain
    P = u.n_pieces
    keep = _unique_pieces(u.slopes, u.intercepts)
    a, b = u.slopes[keep], u.intercepts[keep]
    vol = np.zeros(P)
    if n == 1:
        lo, hi = float(dom.vertices.min()), float(dom.vertices.max())
        cl, ch, empty = _cells_1d(a, b, lo, hi)
        vol[keep] = np.where(empty, 0.0, ch - cl)
        pts = np.concatenate([cl[~empty], ch[~empty], [lo, hi]])[:, None]
    elif n == 2:
        if dom.is_full_dimensional:
            cells = _cells_2d(a, b, dom.polygon)
            vol[keep] = [polygon_area(c) for c in cells]
            chunks = [c for c, v in zip(cells, vol[keep]) if v > 0.0]
            pts = np.vstack(chunks + [dom.polygon])
        elif dom.affine_dim == 1:
            # restrict to the segment and reuse the 1-D path
            p0, p1 = dom.vertices[0], dom.vertices[-1]
            d = p1 - p0
            a1 = (a @ d)[:, None]
            b1 = b + a @ p0
            cl, ch, empty = _cells_1d(a1, b1, 0.0, 1.0)
            t = np.concatenate([cl[~empty], ch[~empty], [0.0, 1.0]])
            pts = p0 + t[:, None] * d
        else:
            pts = dom.vertices[:1].copy()
    else:
        raise UnsupportedDimensionError(
            f"exact polyhedral subdivision is available for n <= 2, got n = {n}"
        )
    if len(pts) == 0:
        raise DegeneracyError("vertex enumeration produced no vertices")
    tol = 1e-9 * dom.scale
    pts = dedupe_points(pts, tol)
    pts = np.array([_polish(u, p) for p in pts])
    pts = dedupe_points(pts, tol)
    if dom.whole_space:
        R = dom._box[1][0]
        on_box = np.any(np.abs(pts) >= R * (1 - 1e-9), axis=1)
    else:
        on_box = np.zeros(len(pts), dtype=bool)
    return Subdivision(pts, on_box, vol)


def _full_dim_pieces_lp(u: MaxAffineFunction):
    """Pieces maximal on a set with non-empty interior, via Chebyshev-ball LPs."""
    dom = u.domain
    n = u.dim
    out = []
    diam = float(np.linalg.norm(np.ptp(dom.vertices, axis=0)))
    for i in range(u.n_pieces):
        G = u.slopes - u.slopes[i]
        h = u.intercepts[i] - u.intercepts
        mask = np.any(G != 0, axis=1)
        if np.any(~mask & (h < 0)):
            continue
        rows = np.vstack([G[mask], dom.A])
        rhs = np.concatenate([h[mask], dom.b])
        norms = np.linalg.norm(rows, axis=1)
        c = np.zeros(n + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.column_stack([rows, norms]), b_ub=rhs,
                      bounds=[(None, None)] * n + [(0, None)])
        if res.status == 0 and res.x[-1] > 1e-9 * (1 + diam):
            out.append(i)
    return np.array(out, dtype=int)


def lipschitz_constant(u) -> float:
    """Lipschitz constant of ``u`` on the interior of its domain.

    For a max-affine function this is the largest slope norm among pieces that
    are maximal on a full-dimensional region; a domain with empty interior
    gives 0. Smooth specimens report ``sup |grad u|`` (closed form where known).
    """
    if isinstance(u, SmoothConvexSpec):
        return u.lipschitz
    if not u.domain.is_full_dimensional:
        return 0.0
    if u.dim <= 2:
        vol = u.subdivision.cell_volume
        dom_vol = u.domain.volume
        tol = 1e-12 * (1.0 + (dom_vol if np.isfinite(dom_vol) else 1.0))
        active = np.flatnonzero(vol > tol)
    else:
        active = _full_dim_pieces_lp(u)
    if len(active) == 0:
        return 0.0
    return float(np.linalg.norm(u.slopes[active], axis=1).max())


# ---------------------------------------------------------------------------
# smooth specimens

H_FD = 1e-4


@dataclass(frozen=True, eq=False)
class SmoothConvexSpec:
    """Analytic convex specimen; ``gradient_fn``/``hessian_fn`` may be ``None``.

    Evaluators take an ``(N, n)`` array. ``lipschitz_hint`` and
    ``support_radius_hint`` carry closed-form values for named kinds.
    """

    kind: str
    dim: int
    domain: object
    value_fn: Callable
    gradient_fn: Optional[Callable] = None
    hessian_fn: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    lipschitz_hint: Optional[float] = None
    support_radius_hint: Optional[float] = None

    def __repr__(self):
        return f"SmoothConvexSpec(kind={self.kind!r}, n={self.dim}, params={self.params})"

    def __call__(self, X):
        scalar = np.ndim(X) == 0 or (np.ndim(X) == 1 and len(X) == self.dim)
        X = _as_points(X, self.dim)
        inside = self.domain.contains(X)
        out = np.full(len(X), INF)
        if inside.any():
            out[inside] = self.value_fn(X[inside])
        return float(out[0]) if scalar else out

    @property
    def is_finite_valued(self):
        return self.domain.is_whole_space

    def gradient(self, X, h=H_FD):
        X = _as_points(X, self.dim)
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(X), dtype=float).reshape(len(X), self.dim)
        g = np.empty_like(X)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            g[:, k] = (self.value_fn(X + e) - self.value_fn(X - e)) / (2 * h)
        return g

    def hessian(self, X, h=H_FD):
        X = _as_points(X, self.dim)
        n = self.dim
        if self.hessian_fn is not None:
            return np.asarray(self.hessian_fn(X), dtype=float).reshape(len(X), n, n)
        H = np.empty((len(X), n, n))
        if self.gradient_fn is not None:
            for k in range(n):
                e = np.zeros(n)
                e[k] = h
                H[:, :, k] = (self.gradient(X + e) - self.gradient(X - e)) / (2 * h)
            return 0.5 * (H + H.transpose(0, 2, 1))
        f0 = self.value_fn(X)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = h
            H[:, i, i] = (self.value_fn(X + ei) - 2 * f0 + self.value_fn(X - ei)) / h**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = h
                v = (self.value_fn(X + ei + ej) - self.value_fn(X + ei - ej)
                     - self.value_fn(X - ei + ej) + self.value_fn(X - ei - ej)) / (4 * h * h)
                H[:, i, j] = H[:, j, i] = v
        return H

    @property
    def has_analytic_hessian(self):
        return self.hessian_fn is not None

    def hessian_det(self, X, h=H_FD, *, clamp=True):
        """``det Hess u`` with negative round-off clamped to 0.

        Values below ``-1e-8 (1 + |Hess|)`` raise :class:`ConvexityViolationError`.
        """
        from .errors import ConvexityViolationError

        H = self.hessian(X, h)
        if self.dim == 1:
            det = H[:, 0, 0].copy()
        elif self.dim == 2:
            det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        else:
            det = np.linalg.det(H)
        if clamp:
            with np.errstate(invalid="ignore"):
                norm = np.abs(H).reshape(len(H), -1).max(axis=1)
                eps = 1e-8 * (1.0 + norm)
                bad = det < -eps
            if np.any(bad):
                raise ConvexityViolationError(
                    f"det Hess = {det[bad].min():.3g} < 0 at {np.asarray(X).reshape(-1, self.dim)[bad][0]}"
                )
            det = np.where(det < 0, 0.0, det)
        return det

    @cached_property
    def lipschitz(self):
        if self.lipschitz_hint is not None:
            return float(self.lipschitz_hint)
        pts = _interior_samples(self.domain, 41 if self.dim == 1 else (21 if self.dim == 2 else 9))
        return float(np.linalg.norm(self.gradient(pts), axis=1).max())

    @property
    def ma_support_radius(self):
        """Radius of the smallest origin ball containing supp MA(u; .)."""
        if self.support_radius_hint is not None:
            return float(self.support_radius_hint)
        return INF

    @property
    def ma_support_ball(self):
        """Ball carrying the MA density when it is known in closed form, else ``None``."""
        if self.kind == "huber":
            return Ball(tuple(self.params["center"]), self.params["radius"])
        return None

    def validate(self, m=None):
        """Check symmetric PSD Hessians on an interior validation grid."""
        from .errors import ConvexityViolationError

        m = m or (21 if self.dim == 1 else (11 if self.dim == 2 else 5))
        pts = _interior_samples(self.domain, m)
        H = self.hessian(pts)
        if not np.allclose(H, H.transpose(0, 2, 1), atol=1e-6 * (1 + np.abs(H).max())):
            raise ConvexityViolationError("Hessian is not symmetric")
        ev = np.linalg.eigvalsh(H)
        eps = 1e-8 * (1.0 + np.abs(H).reshape(len(H), -1).max(axis=1))
        if np.any(ev.min(axis=1) < -eps):
            raise ConvexityViolationError("Hessian is not positive semidefinite")
        return self

    def to_dict(self):
        if self.kind == "custom":
            raise ConvexError("custom specimens carry code and cannot be serialized")
        return {"kind": self.kind, **_jsonable(self.params), "domain": self.domain.to_dict()}

    def transformed(self, linear=None, shift=None, slope=None, const=0.0):
        """``x -> u(L x + s) + <c, x> + d``; polytope domains or pure translations of balls."""
        n = self.dim
        L = np.eye(n) if linear is None else np.asarray(linear, dtype=float).reshape(n, n)
        s = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
        c = np.zeros(n) if slope is None else np.asarray(slope, dtype=float)
        d = float(const)
        return _transformed(self, L, s, c, d)


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, dict):
            out[k] = _jsonable(v)
        else:
            out[k] = v
    return out


def _interior_samples(domain, m):
    if domain.is_whole_space:
        lo, hi = -np.ones(domain.dim) * 2.0, np.ones(domain.dim) * 2.0
    else:
        lo, hi = domain.bounding_box()
    axes = [np.linspace(a, b, m + 2)[1:-1] if b > a else np.array([a]) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    if domain.is_whole_space:
        return pts
    keep = domain.distance_to_boundary(pts) > 1e-6 * domain.scale
    if not keep.any():
        return domain.centroid[None, :]
    return pts[keep]


def _transformed(base, L, s, c, d):
    n = base.dim
    dom = base.domain
    if dom.is_whole_space:
        new_dom = dom
    elif isinstance(dom, Ball):
        if not np.allclose(L, np.eye(n)):
            raise ConvexError("ball domains only support translations")
        new_dom = Ball(tuple(np.array(dom.center) - s), dom.radius)
    else:
        new_dom = dom.preimage(L, s)

    def value(X):
        return base.value_fn(X @ L.T + s) + X @ c + d

    def grad(X):
        return base.gradient(X @ L.T + s) @ L + c

    def hess(X):
        return np.einsum("ki,nkl,lj->nij", L, base.hessian(X @ L.T + s), L)

    params = {"base": base.to_dict() if base.kind != "custom" else "custom",
              "linear": L.tolist(), "shift": s.tolist(), "slope": c.tolist(), "const": d}
    lip = None
    if base.lipschitz_hint is not None and np.allclose(L, np.eye(n)) and not c.any():
        lip = base.lipschitz_hint
    # keep the finite-difference status of the base specimen
    return SmoothConvexSpec("transformed", n, new_dom, value,
                            grad if base.gradient_fn is not None else None,
                            hess if base.hessian_fn is not None else None, params, lip, None)


def quadratic(A, b=None, c=0.0, domain=None):
    """``x -> x^T A x / 2 + <b, x> + c`` (Hessian ``A``)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T):
        raise ConvexError("quadratic needs a symmetric matrix")
    if np.linalg.eigvalsh(A).min() < -1e-12 * (1 + np.abs(A).max()):
        raise ConvexError("quadratic needs a positive semidefinite matrix")
    bv = np.zeros(n) if b is None else np.asarray(b, dtype=float).reshape(n)
    dom = DomainPolytope.whole_space(n) if domain is None else domain
    if dom.dim != n:
        raise ConvexError("domain dimension mismatch")

    def value(X):
        return 0.5 * np.einsum("ni,ij,nj->n", X, A, X) + X @ bv + c

    def grad(X):
        return X @ A + bv

    def hess(X):
        return np.broadcast_to(A, (len(X), n, n)).copy()

    if dom.is_whole_space:
        lip = INF if np.any(A) else float(np.linalg.norm(bv))
        supp = INF if np.any(A) else 0.0
    elif isinstance(dom, Ball):
        k = A[0, 0]
        if np.allclose(A, k * np.eye(n)):
            lip = float(np.linalg.norm(k * np.array(dom.center) + bv) + abs(k) * dom.radius)
        else:
            lip = None
        supp = None
    else:
        lip = float(np.linalg.norm(dom.vertices @ A + bv, axis=1).max())
        supp = None
    return SmoothConvexSpec("quadratic", n, dom, value, grad, hess,
                            {"A": A.tolist(), "b": bv.tolist(), "c": float(c)}, lip, supp)


def hemisphere(radius=1.0, dim=1):
    """Lower hemisphere ``x -> -sqrt(r^2 - |x|^2)`` on the closed ball of radius ``r``."""
    r = float(radius)
    n = int(dim)

    def s_of(X):
        return np.sqrt(np.maximum(r * r - np.einsum("ni,ni->n", X, X), 0.0))

    def value(X):
        return -s_of(X)

    def grad(X):
        with np.errstate(divide="ignore"):
            return X / s_of(X)[:, None]

    def hess(X):
        s = s_of(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.eye(n)[None] / s[:, None, None]
                    + np.einsum("ni,nj->nij", X, X) / (s**3)[:, None, None])

    return SmoothConvexSpec("hemisphere", n, Ball((0.0,) * n, r), value, grad, hess,
                            {"radius": r, "dim": n}, INF, None)


def huber(radius=1.0, curvature=1.0, dim=1, center=None, offset=0.0):
    """Radial Huber function: quadratic core of radius ``r``, linear growth outside.

    ``v(y) = c |y - y0|^2 / 2`` inside the core and ``c r |y - y0| - c r^2 / 2``
    outside, plus ``offset``. Finite on R^n; MA is supported on the core.
    """
    r, cc, n = float(radius), float(curvature), int(dim)
    y0 = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)

    def value(Y):
        z = np.linalg.norm(Y - y0, axis=1)
        return np.where(z <= r, 0.5 * cc * z * z, cc * r * z - 0.5 * cc * r * r) + offset

    def grad(Y):
        D = Y - y0
        z = np.linalg.norm(D, axis=1)
        scale = np.where(z <= r, cc, cc * r / np.maximum(z, 1e-300))
        return D * scale[:, None]

    def hess(Y):
        D = Y - y0
        z = np.linalg.norm(D, axis=1)
        inside = z <= r
        zs = np.maximum(z, 1e-300)
        outer = cc * r / zs[:, None, None] * (np.eye(n)[None] - np.einsum("ni,nj->nij", D, D) / (zs**2)[:, None, None])
        return np.where(inside[:, None, None], cc * np.eye(n)[None], outer)

    return SmoothConvexSpec("huber", n, DomainPolytope.whole_space(n), value, grad, hess,
                            {"radius": r, "curvature": cc, "dim": n, "center": y0.tolist(), "offset": float(offset)},
                            cc * r, float(np.linalg.norm(y0) + r))


def radial_power(p, domain):
    """``x -> |x|^p / p`` for ``p >= 2`` on a compact domain."""
    p = float(p)
    if p < 2:
        raise ConvexError("radial power needs p >= 2 for a finite Hessian")
    n = domain.dim

    def value(X):
        return np.linalg.norm(X, axis=1) ** p / p

    def grad(X):
        z = np.linalg.norm(X, axis=1)
        return X * (z ** (p - 2))[:, None]

    def hess(X):
        z = np.linalg.norm(X, axis=1)
        zs = np.maximum(z, 1e-300)
        U = np.einsum("ni,nj->nij", X, X) / (zs**2)[:, None, None]
        H = (z ** (p - 2))[:, None, None] * (np.eye(n)[None] + (p - 2) * U)
        if p == 2:
            H[z == 0] = np.eye(n)
        return H

    if isinstance(domain, Ball):
        lip = (np.linalg.norm(domain.center) + domain.radius) ** (p - 1)
    elif domain.is_whole_space:
        lip = INF
    else:
        lip = float((np.linalg.norm(domain.vertices, axis=1) ** (p - 1)).max())
    return SmoothConvexSpec("radial_power", n, domain, value, grad, hess, {"p": p}, lip,
                            INF if domain.is_whole_space else None)


def custom(value, domain, gradient=None, hessian=None, *, lipschitz=None,
           support_radius=None, name="custom", validate=True):
    """Wrap user evaluators; the Hessian is checked PSD on a validation grid."""
    spec = SmoothConvexSpec("custom", domain.dim, domain, value, gradient, hessian,
                            {"name": name}, lipschitz, support_radius)
    if validate:
        spec.validate()
    return spec


def specimen_from_dict(d):
    kind = d["kind"]
    if kind == "max_affine":
        return MaxAffineFunction(d["slopes"], d["intercepts"], DomainPolytope.from_dict(d["domain"]))
    dom = DomainPolytope.from_dict(d["domain"]) if "domain" in d else None
    if kind == "quadratic":
        return quadratic(d["A"], d.get("b"), d.get("c", 0.0), dom)
    if kind == "hemisphere":
        return hemisphere(d.get("radius", 1.0), d.get("dim", 1))
    if kind == "huber":
        return huber(d.get("radius", 1.0), d.get("curvature", 1.0), d.get("dim", 1),
                     d.get("center"), d.get("offset", 0.0))
    if kind == "radial_power":
        return radial_power(d["p"], dom)
    if kind == "transformed":
        base = specimen_from_dict(d["base"])
        return base.transformed(d["linear"], d["shift"], d["slope"], d["const"])
    raise ConvexError(f"unknown specimen kind {kind!r}")


def specimen_to_dict(u):
    return u.to_dict()


# ---------------------------------------------------------------------------
# sampled functions


@dataclass(frozen=True, eq=False)
class SampledConvexFunction:
    """Node values of a convex function on a grid (``+inf`` off the domain)."""

    grid: GridSpec
    values: np.ndarray
    eps_cvx: Optional[float] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if np.any(np.isnan(v)) or np.any(v == -INF):
            raise ConvexError("sampled values must lie in R or be +inf")
        if not np.isfinite(v).any():
            raise EmptyDomainError("sampled function is identically +inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def finite(self):
        return np.isfinite(self.values)

    @property
    def value_scale(self):
        return float(np.abs(self.values[self.finite]).max())

    def to_dict(self):
        vals = np.where(self.finite, self.values, np.nan)
        return {"grid": self.grid.to_dict(),
                "values": [None if np.isnan(x) else float(x) for x in vals.ravel()]}


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    worst_violation: float
    tolerance: float
    worst_node: Optional[tuple] = None
    direction: Optional[tuple] = None


def _directions(n):
    """Axis and diagonal steps in {-1, 0, 1}^n, one per +/- pair."""
    out = []
    for d in itertools.product((-1, 0, 1), repeat=n):
        if any(d) and next(x for x in d if x != 0) > 0:
            out.append(d)
    return out


def _shift_slices(d, m):
    lo, mid, hi = [], [], []
    for k in d:
        if k == 0:
            lo.append(slice(0, m))
            mid.append(slice(0, m))
            hi.append(slice(0, m))
        else:
            a, b = (slice(0, m - 2), slice(2, m)) if k > 0 else (slice(2, m), slice(0, m - 2))
            lo.append(a)
            mid.append(slice(1, m - 1))
            hi.append(b)
    return tuple(lo), tuple(mid), tuple(hi)


def validate_convexity(f: SampledConvexFunction, eps=None) -> ConvexityReport:
    """Discrete midpoint test along grid axes and diagonals.

    A triple ``(x - d, x, x + d)`` with finite ends counts; a ``+inf`` midpoint
    between finite ends is an infinite violation (non-convex domain).
    """
    vals = f.values
    if not np.isfinite(vals).any():
        raise EmptyDomainError("sampled function is identically +inf")
    if eps is None:
        eps = f.eps_cvx if f.eps_cvx is not None else 1e-9 * (1.0 + f.value_scale)
    m = f.grid.m
    worst, where, which = -INF, None, None
    for d in _directions(f.grid.dim):
        s_lo, s_mid, s_hi = _shift_slices(d, m)
        left, mid, right = vals[s_lo], vals[s_mid], vals[s_hi]
        ok = np.isfinite(left) & np.isfinite(right)
        if not ok.any():
            continue
        with np.errstate(invalid="ignore"):
            viol = np.where(ok, mid - 0.5 * (left + right), -INF)
        k = int(np.argmax(viol))
        if viol.flat[k] > worst:
            worst = float(viol.flat[k])
            idx = np.unravel_index(k, viol.shape)
            where = tuple(int(i) + (1 if dk != 0 else 0) for i, dk in zip(idx, d))
            which = d
    worst = max(worst, 0.0)
    return ConvexityReport(bool(worst <= eps), worst, float(eps), where, which)


def sample(spec, grid: GridSpec) -> SampledConvexFunction:
    """Exact node values of a specimen; nodes off the domain get ``+inf``."""
    if spec.dim != grid.dim:
        raise ConvexError("grid and specimen dimensions differ")
    X = grid.nodes()
    vals = np.asarray(spec(X), dtype=float)
    if not np.isfinite(vals).any():
        raise EmptyDomainError("grid box does not meet the specimen's domain")
    eps = None
    if isinstance(spec, SmoothConvexSpec):
        fin = np.isfinite(vals)
        interior = fin & (spec.domain.distance_to_boundary(X) > 0)
        with np.errstate(all="ignore"):
            H = spec.hessian(X[interior]) if interior.any() else np.zeros((1, grid.dim, grid.dim))
            norms = np.abs(H).reshape(len(H), -1).max(axis=1)
        norms = norms[np.isfinite(norms)]
        hbound = float(norms.max()) if len(norms) else 0.0
        scale = float(np.abs(vals[fin]).max())
        eps = max(1e-9 * (1.0 + scale), 0.25 * float(grid.spacing.max()) ** 2 * hbound)
    return SampledConvexFunction(grid, vals.reshape(grid.shape), eps)
