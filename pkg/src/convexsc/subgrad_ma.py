"""Subdifferentials and Monge-Ampere measures.

For a finite max-affine function the Monge-Ampere measure is atomic: each
vertex of the subdivision carries the volume of the convex hull of the
slopes active there. Smooth specimens carry the density ``det Hess v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
from scipy.optimize import linprog

from .convex_core import (
    DomainPolytope,
    GridSpec,
    MaxAffineFunction,
    SmoothConvexSpec,
    H_FD,
)
from .errors import ConvexError, UnsupportedDimensionError
from .geometry import ball_box_volume, convex_hull_2d, hull_volume, polygon_area
from .legendre import conjugate_closed_form, conjugate_pl
from .quadrature import integrate_on_domain


# ---------------------------------------------------------------------------
# subdifferentials


@dataclass(frozen=True, eq=False)
class SubdifferentialSet:
    """``conv(points) + cone(rays)``; empty when ``points`` has no rows."""

    points: np.ndarray
    rays: np.ndarray

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def is_empty(self):
        return len(self.points) == 0

    @property
    def volume(self):
        if self.is_empty:
            return 0.0
        if len(self.rays):
            gens = np.vstack([self.points - self.points[0], self.rays])
            return math.inf if np.linalg.matrix_rank(gens, tol=1e-12) == self.dim else 0.0
        if self.dim == 2:
            return polygon_area(convex_hull_2d(self.points))
        return hull_volume(self.points)

    def contains(self, p, tol=1e-9):
        if self.is_empty:
            return False
        p = np.asarray(p, dtype=float).ravel()
        k, r = len(self.points), len(self.rays)
        A_eq = np.vstack([np.hstack([self.points.T, self.rays.T if r else np.zeros((self.dim, 0))]),
                          np.concatenate([np.ones(k), np.zeros(r)])[None, :]])
        b_eq = np.concatenate([p, [1.0]])
        # minimise the l1 residual of the representation
        m = len(b_eq)
        A = np.hstack([A_eq, np.eye(m), -np.eye(m)])
        c = np.concatenate([np.zeros(k + r), np.ones(2 * m)])
        res = linprog(c, A_eq=A, b_eq=b_eq, bounds=[(0, None)] * (k + r + 2 * m))
        return bool(res.status == 0 and res.fun <= tol * (1 + np.abs(p).max()))


def subdifferential_pl(u: MaxAffineFunction, x) -> SubdifferentialSet:
    """Active slopes at ``x`` plus outer normals of active domain facets."""
    x = np.asarray(x, dtype=float).ravel()
    n = u.dim
    if not u.domain.contains(x)[0]:
        return SubdifferentialSet(np.empty((0, n)), np.empty((0, n)))
    pts = u.slopes[u.active_pieces(x)]
    rays = u.domain.A[u.domain.active_facets(x)]
    return SubdifferentialSet(np.unique(pts, axis=0), rays.reshape(-1, n))


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class MongeAmpereMeasure:
    """Atoms ``(x_i, m_i)`` plus an optional cell density on a grid."""

    dim: int
    atom_x: np.ndarray
    atom_mass: np.ndarray
    density_grid: Optional[GridSpec] = None
    density: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.any(self.atom_mass < 0):
            raise ConvexError("atom masses must be non-negative")
        if self.density is not None and np.any(self.density < 0):
            raise ConvexError("density must be non-negative")

    @property
    def atom_total(self):
        return float(self.atom_mass.sum())

    @property
    def density_total(self):
        if self.density is None:
            return 0.0
        return float(self.density.sum() * self.density_grid.cell_volume)

    def total_mass(self):
        return self.atom_total + self.density_total

    def integrate(self, beta):
        """``∫ beta dMA`` with the density part by the cell midpoint rule."""
        out = float(np.dot(beta(self.atom_x), self.atom_mass)) if len(self.atom_mass) else 0.0
        if self.density is not None:
            c = self.density_grid.cell_centers()
            out += float(np.dot(beta(c), self.density.ravel()) * self.density_grid.cell_volume)
        return out

    def mass_in_box(self, lower, upper):
        lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        inside = np.all((self.atom_x >= lo) & (self.atom_x <= hi), axis=1)
        out = float(self.atom_mass[inside].sum())
        if self.density is not None:
            c = self.density_grid.cell_centers()
            sel = np.all((c >= lo) & (c <= hi), axis=1)
            out += float(self.density.ravel()[sel].sum() * self.density_grid.cell_volume)
        return out

    @property
    def support_radius(self):
        """Smallest ``R`` with the support inside the origin ball of radius ``R``."""
        tol = 1e-12 * (1.0 + self.total_mass())
        r = 0.0
        heavy = self.atom_mass > tol
        if heavy.any():
            r = float(np.linalg.norm(self.atom_x[heavy], axis=1).max())
        if self.density is not None:
            pos = self.density.ravel() > 0
            if pos.any():
                c = self.density_grid.cell_centers()[pos]
                half = 0.5 * self.density_grid.spacing
                r = max(r, float(np.linalg.norm(np.abs(c) + half, axis=1).max()))
        return r

    def to_dict(self):
        out = {
            "atoms": [{"x": x.tolist(), "mass": float(m)} for x, m in zip(self.atom_x, self.atom_mass)],
            "density": None,
            "support_radius": self.support_radius,
        }
        if self.density is not None:
            out["density"] = {"grid": self.density_grid.to_dict(), "values": self.density.ravel().tolist()}
        return out


class MeasureFamily(Protocol):
    """A rule ``v -> Phi(v; .)`` with absolutely continuous density ``phi(v; .)``."""

    def measure_of(self, v, lower, upper) -> float: ...

    def density_at(self, v, X) -> np.ndarray: ...


class MongeAmpereFamily:
    """The shipped :class:`MeasureFamily`: ``Phi = MA`` and ``phi = det Hess``."""

    def measure_of(self, v, lower, upper):
        return float(ma_box(v, lower, upper))

    def density_at(self, v, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if isinstance(v, MaxAffineFunction):
            return np.zeros(len(X))
        return v.hessian_det(X)


def ma_atoms_pl(v: MaxAffineFunction) -> MongeAmpereMeasure:
    """Atomic Monge-Ampere measure of a finite max-affine function (n <= 2)."""
    if not v.domain.is_whole_space:
        raise ConvexError("ma_atoms_pl needs a finite-valued function (domain R^n)")
    n = v.dim
    if n > 2:
        raise UnsupportedDimensionError(
            "exact atoms need n <= 2; use ma_box (Monte Carlo) in higher dimension"
        )
    sub = v.subdivision
    xs, ms = [], []
    for x in sub.vertices[~sub.on_box]:
        a = v.slopes[v.active_pieces(x)]
        if n == 1:
            mass = float(a.max() - a.min())
        else:
            mass = polygon_area(convex_hull_2d(a))
        if mass > 0:
            xs.append(x)
            ms.append(mass)
    return MongeAmpereMeasure(n, np.array(xs).reshape(-1, n), np.array(ms, dtype=float))


def ma_density_smooth(spec: SmoothConvexSpec, grid: GridSpec) -> MongeAmpereMeasure:
    """Cell densities ``det Hess`` at cell centres; zero off the open domain."""
    h_fd = max(H_FD, float(grid.spacing.max()) / 4)
    c = grid.cell_centers()
    dens = np.zeros(len(c))
    inside = spec.domain.distance_to_boundary(c) > (0 if spec.has_analytic_hessian else 2 * h_fd)
    if inside.any():
        dens[inside] = spec.hessian_det(c[inside], h=h_fd)
    shape = (grid.m - 1,) * grid.dim
    return MongeAmpereMeasure(grid.dim, np.empty((0, grid.dim)), np.empty(0),
                              grid, dens.reshape(shape))


@dataclass(frozen=True)
class BoxMass:
    """``MA(v; B)`` with a 95% half-width (zero for exact paths)."""

    value: float
    halfwidth: float = 0.0
    method: str = "exact"

    def __float__(self):
        return float(self.value)


def _box_hits_boundary(dom: DomainPolytope, lo, hi):
    corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(len(lo), -1).T
    if np.all(dom.distance_to_boundary(corners) > 0):
        return False
    n = dom.dim
    bounds = list(zip(lo, hi))
    res = linprog(np.zeros(n), A_ub=dom.A, b_ub=dom.b, bounds=bounds)
    return res.status == 0


def ma_box(v, lower, upper, *, n_samples=4000, seed=0) -> BoxMass:
    """``MA(v; B) = V_n(∂v(B))`` for a closed box ``B = [lower, upper]``."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if isinstance(v, MaxAffineFunction):
        if v.dim >= 3:
            return _ma_box_montecarlo(v, lo, hi, n_samples, seed)
        if v.domain.is_whole_space:
            mu = ma_atoms_pl(v)
            return BoxMass(mu.mass_in_box(lo, hi))
        if _box_hits_boundary(v.domain, lo, hi):
            return BoxMass(math.inf)
        sub = v.subdivision
        total = 0.0
        for x in sub.vertices:
            if np.all((x >= lo) & (x <= hi)) and v.domain.distance_to_boundary(x)[0] > 0:
                a = v.slopes[v.active_pieces(x)]
                total += float(a.max() - a.min()) if v.dim == 1 else polygon_area(convex_hull_2d(a))
        return BoxMass(total)
    if isinstance(v, SmoothConvexSpec):
        if v.kind == "huber" and v.dim <= 3:
            # MA is c^n times Lebesgue measure on the core ball; the density jumps on
            # its boundary, which point-sampling cubature can miss
            p = v.params
            vol = ball_box_volume(p["center"], p["radius"], lo, hi)
            return BoxMass(p["curvature"] ** v.dim * vol)
        res = integrate_on_domain(v.domain, v.hessian_det, box=(lo, hi))
        return BoxMass(res.value, 2 * res.error, "quadrature")
    raise ConvexError("unsupported specimen for ma_box")


def _ma_box_montecarlo(v: MaxAffineFunction, lo, hi, n_samples, seed):
    """Hit-or-miss estimate of ``V_n(∂v(B))`` over the slope bounding box.

    A slope ``p`` is a hit when ``min_B (v - <p, .>)`` equals the global minimum
    ``-v*(p)``; both are linear programs.
    """
    if not v.domain.is_whole_space:
        raise ConvexError("Monte Carlo MA needs a finite-valued function")
    n = v.dim
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    a, b = v.slopes, v.intercepts
    plo, phi = a.min(axis=0), a.max(axis=0)
    box_vol = float(np.prod(phi - plo))
    if box_vol == 0:
        return BoxMass(0.0, 0.0, "montecarlo")
    P = len(a)
    hits = 0
    for p in plo + rng.random((n_samples, n)) * (phi - plo):
        # global: v*(p) = max { -sum lam_i b_i : sum lam_i a_i = p, lam in simplex }
        g = linprog(b, A_eq=np.vstack([a.T, np.ones(P)]), b_eq=np.concatenate([p, [1.0]]),
                    bounds=[(0, None)] * P)
        if g.status != 0:
            continue
        glob = g.fun  # = min_x v(x) - <p, x>
        # local: min over (x, t) in B x R of t - <p, x> with t >= a_i x + b_i
        c = np.concatenate([-p, [1.0]])
        A_ub = np.column_stack([a, -np.ones(P)])
        loc = linprog(c, A_ub=A_ub, b_ub=-b, bounds=list(zip(lo, hi)) + [(None, None)])
        if loc.status == 0 and loc.fun <= glob + 1e-9 * (1 + abs(glob)):
            hits += 1
    frac = hits / n_samples
    half = 1.96 * math.sqrt(max(frac * (1 - frac), 1e-300) / n_samples) * box_vol
    return BoxMass(frac * box_vol, half, "montecarlo")


# ---------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class MassCheck:
    lhs: float
    rhs: float
    gap: float

    @property
    def ok(self):
        return self.gap <= 1e-9 * (1.0 + self.rhs)


def total_mass_check(u: MaxAffineFunction) -> MassCheck:
    """Compare ``MA(u*; R^n)`` with ``V_n(dom u)``."""
    lhs = ma_atoms_pl(conjugate_pl(u)).total_mass()
    rhs = float(u.domain.volume)
    return MassCheck(lhs, rhs, abs(lhs - rhs))


def subdiff_duality_check(u, X, P, conj=None) -> float:
    """Worst ``|u(x) + u*(p) - <x, p>|`` over pairs with ``p`` in ``∂u(x)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, u.dim)
    P = np.atleast_2d(np.asarray(P, dtype=float)).reshape(-1, u.dim)
    if conj is None:
        conj = conjugate_closed_form(u)
    fy = conj.unrestricted(P) if isinstance(conj, MaxAffineFunction) else conj(P)
    gap = u(X) + fy - np.einsum("ij,ij->i", X, P)
    return float(np.abs(gap).max())


# ---------------------------------------------------------------------------
# weak-* diagnostics


@dataclass(frozen=True)
class TestFunction:
    """Continuous test function with compact support inside ``[lower, upper]``."""

    fn: object
    lower: tuple
    upper: tuple

    __test__ = False  # keep pytest from collecting this class

    def __call__(self, X):
        return self.fn(np.atleast_2d(X))

    @classmethod
    def hat(cls, center=0.0, halfwidth=1.0, dim=1):
        c = np.atleast_1d(np.asarray(center, dtype=float)) * np.ones(dim)

        def fn(X):
            return np.prod(np.clip(1 - np.abs(X - c) / halfwidth, 0, None), axis=1)

        return cls(fn, tuple(c - halfwidth), tuple(c + halfwidth))


def integrate_against_ma(v, beta: TestFunction):
    """``∫ beta dMA(v)`` for PL (atoms) or smooth (density quadrature) specimens."""
    if isinstance(v, MaxAffineFunction):
        if v.domain.is_whole_space:
            mu = ma_atoms_pl(v)
            return float(np.dot(beta(mu.atom_x), mu.atom_mass)) if len(mu.atom_mass) else 0.0
        raise ConvexError("weak-* diagnostics need finite-valued specimens")

    def f(X):
        return beta(X) * v.hessian_det(X)

    return integrate_on_domain(v.domain, f, box=(beta.lower, beta.upper)).value


def weak_star_gap(family, beta: TestFunction, k) -> float:
    """Signed ``∫ beta dMA(v_k) - ∫ beta dMA(v)``."""
    return integrate_against_ma(family.member(k), beta) - integrate_against_ma(family.limit, beta)


def weak_star_box_gap(family, lower, upper, k) -> float:
    """Signed ``MA(v_k; C) - MA(v; C)`` for a compact box ``C``."""
    return float(ma_box(family.member(k), lower, upper)) - float(ma_box(family.limit, lower, upper))
