"""Integrands ``zeta`` and the functionals ``Z(v) = ∫ zeta(det Hess v) omega dx``.

``ZetaConcave`` is the class of concave ``zeta >= 0`` with ``zeta(0) = 0`` and
``zeta(t) / t -> 0``; ``ZetaConvexDecreasing`` holds decreasing convex
``zeta`` with ``zeta(t) -> 0`` (``zeta(0) = +inf`` allowed). Only the
absolutely continuous part of the Monge-Ampere measure enters: max-affine
functions have ``det Hess = 0`` almost everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex_core import H_FD, MaxAffineFunction, SmoothConvexSpec
from .errors import ConvexError, IncompatibleFunctionalError, ZetaClassError
from .geometry import clip_polygon, polygon_area
from .legendre import conjugate_closed_form
from .quadrature import integrate_on_domain

INF = math.inf

_T_GRID = np.concatenate([[0.0], np.logspace(-6, 9, 151)])


def _validate_common(f, name, tol):
    t = _T_GRID
    with np.errstate(all="ignore"):
        z = f(t)
    if np.any(np.isnan(z)):
        raise ZetaClassError(f"{name}: evaluator returned nan")
    if np.any(z < -tol):
        raise ZetaClassError(f"{name}: takes negative values")
    return t, z


class _Zeta:
    kind: str
    params: dict

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = np.asarray(self._fn(t), dtype=float)
        return out if out.ndim else float(out)

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r}, params={self.params})"

    def to_dict(self):
        if self.kind in ("custom", "dual") and "base" not in self.params:
            raise ConvexError("custom integrands cannot be serialized")
        return {"kind": self.kind, **self.params}


class ZetaConcave(_Zeta):
    """Validated member of the concave class; construction fails otherwise."""

    def __init__(self, kind, fn=None, **params):
        self.kind = kind
        self.params = params
        if kind == "power":
            q = float(params["q"])
            if not 0 < q < 1:
                raise ZetaClassError("power integrand needs 0 < q < 1")
            self._fn = lambda t: np.power(t, q)
        elif kind == "log1p":
            self._fn = np.log1p
        elif kind == "rational":
            self._fn = lambda t: np.where(np.isinf(t), 1.0, t / (1.0 + t))
        elif kind == "min":
            c = float(params.get("c", 1.0))
            if c <= 0:
                raise ZetaClassError("min(t, c) needs c > 0")
            self._fn = lambda t: np.minimum(t, c)
        elif kind == "dual":
            base = params["base"]
            if isinstance(base, dict):
                base = zeta_from_dict(base)
            self._base = base
            self.params = {"base": base.to_dict()} if base.kind not in ("custom",) else {}
            self._fn = _dual_eval(base)
        elif kind == "custom":
            if fn is None:
                raise ZetaClassError("custom integrand needs an evaluator")
            self._fn = fn
        else:
            raise ZetaClassError(f"unknown concave integrand kind {kind!r}")
        self.validate()

    @classmethod
    def power(cls, q):
        return cls("power", q=q)

    @classmethod
    def custom(cls, fn, name="custom"):
        return cls("custom", fn=fn, name=name)

    @property
    def at_zero(self):
        return float(self(0.0))

    def validate(self):
        name = f"zeta[{self.kind}]"
        t, z = _validate_common(self, name, 1e-12)
        tol = 1e-12 * (1.0 + np.abs(z))
        if abs(z[0]) > 1e-12:
            raise ZetaClassError(f"{name}: zeta(0) = {z[0]:.3g}, expected 0")
        if not np.all(np.isfinite(z)):
            raise ZetaClassError(f"{name}: not finite on [0, inf)")
        # right-continuity at 0
        z_tiny = float(self(1e-300))
        if not z_tiny <= 0.5 * float(self(1e-6)) + 1e-300:
            raise ZetaClassError(f"{name}: not continuous at 0")
        if np.any(np.diff(z) < -tol[1:]):
            raise ZetaClassError(f"{name}: not non-decreasing")
        mid = self(0.5 * (t[:-2] + t[2:]))
        if np.any(mid < 0.5 * (z[:-2] + z[2:]) - tol[1:-1]):
            raise ZetaClassError(f"{name}: not concave")
        r = z[1:] / t[1:]
        if np.any(np.diff(r) > 1e-12 * (1 + r[1:])):
            raise ZetaClassError(f"{name}: zeta(t)/t is not non-increasing")
        big = np.array([1e3, 1e6, 1e9])
        rb = self(big) / big
        if not (rb[0] > rb[1] > rb[2]) or float(self(1e300)) / 1e300 > 1e-3 * max(float(self(1.0)), 1e-300):
            raise ZetaClassError(f"{name}: zeta(t)/t does not tend to 0")
        return self


class ZetaConvexDecreasing(_Zeta):
    """Validated decreasing convex integrand with ``zeta(t) -> 0``."""

    def __init__(self, kind, fn=None, **params):
        self.kind = kind
        self.params = params
        if kind == "exp":
            self._fn = lambda t: np.exp(-t)
        elif kind == "inverse":
            self._fn = lambda t: 1.0 / (1.0 + t)
        elif kind == "power":
            q = float(params["q"])
            if q <= 0:
                raise ZetaClassError("t^(-q) needs q > 0")
            self._fn = lambda t: np.where(t == 0, INF, np.power(np.where(t == 0, 1.0, t), -q))
        elif kind == "custom":
            if fn is None:
                raise ZetaClassError("custom integrand needs an evaluator")
            self._fn = fn
        else:
            raise ZetaClassError(f"unknown convex integrand kind {kind!r}")
        self.validate()

    @classmethod
    def custom(cls, fn, name="custom"):
        return cls("custom", fn=fn, name=name)

    @property
    def at_zero(self):
        return float(self(0.0))

    def validate(self):
        name = f"zeta[{self.kind}]"
        t, z = _validate_common(self, name, 0.0)
        if not float(self(1.0)) > 0:
            raise ZetaClassError(f"{name}: must be positive")
        if not np.all(np.isfinite(z[1:])):
            raise ZetaClassError(f"{name}: only zeta(0) may be infinite")
        tol = 1e-12 * (1.0 + np.abs(z[1:]))
        if np.any(np.diff(z[1:]) > tol[1:]):
            raise ZetaClassError(f"{name}: not decreasing")
        if np.isfinite(z[0]) and z[0] < z[1] - tol[0]:
            raise ZetaClassError(f"{name}: not decreasing at 0")
        tt, zz = t[1:], z[1:]
        mid = self(0.5 * (tt[:-2] + tt[2:]))
        if np.any(mid > 0.5 * (zz[:-2] + zz[2:]) + tol[1:-1]):
            raise ZetaClassError(f"{name}: not convex")
        if float(self(1e300)) > 1e-3 * float(self(1.0)):
            raise ZetaClassError(f"{name}: does not tend to 0")
        return self


def _dual_eval(base):
    def f(t):
        t = np.asarray(t, dtype=float)
        safe = np.where(t < 1e-300, 1.0, t)
        with np.errstate(over="ignore"):
            val = safe * base(1.0 / safe)
        return np.where(t < 1e-300, 0.0, val)

    return f


def zeta_dual(zeta: ZetaConcave) -> ZetaConcave:
    """``t -> t zeta(1/t)`` with value 0 at 0; an involution on the class."""
    if zeta.kind == "power":
        return ZetaConcave.power(1.0 - zeta.params["q"])
    if zeta.kind == "rational":
        return ZetaConcave("rational")
    if zeta.kind == "dual":
        return zeta._base
    return ZetaConcave("dual", base=zeta)


def zeta_from_dict(d):
    kind = d["kind"]
    params = {k: v for k, v in d.items() if k not in ("kind", "class")}
    if d.get("class") == "convex" or kind in ("exp", "inverse"):
        return ZetaConvexDecreasing(kind, **params)
    return ZetaConcave(kind, **params)


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Continuous weight ``omega(x, t) >= 0``; ``t`` receives ``v(x)``."""

    kind: str = "const"
    params: dict = field(default_factory=dict)
    fn: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("const", "exp", "custom"):
            raise ConvexError(f"unknown weight kind {self.kind!r}")
        if self.kind == "custom":
            if self.fn is None:
                raise ConvexError("custom weight needs an evaluator")
            n = int(self.params.get("dim", 1))
            rng = np.random.Generator(np.random.Philox(7))
            X = rng.uniform(-2, 2, size=(64, n))
            t = rng.uniform(-10, 10, size=64)
            if np.any(np.asarray(self.fn(X, t)) < 0):
                raise ConvexError("weight takes negative values")

    @classmethod
    def const(cls, c=1.0):
        if c < 0:
            raise ConvexError("weight must be non-negative")
        return cls("const", {"c": float(c)})

    @classmethod
    def exp_height(cls, n):
        """``omega(x, t) = exp(-n t / (n + 2))``."""
        return cls("exp", {"n": int(n)})

    def __call__(self, X, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.full(t.shape, self.params.get("c", 1.0))
        if self.kind == "exp":
            n = self.params["n"]
            return np.exp(-n * t / (n + 2))
        return np.asarray(self.fn(X, t), dtype=float)

    @property
    def is_unit(self):
        return self.kind == "const" and self.params.get("c", 1.0) == 1.0

    def to_dict(self):
        if self.kind == "custom":
            raise ConvexError("custom weights cannot be serialized")
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class FunctionalValue:
    """Value in ``[0, inf]`` with error estimate and integration breakdown."""

    value: float
    error: float = 0.0
    converged: bool = True
    reason: Optional[str] = None
    breakdown: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)

    def to_dict(self):
        def enc(x):
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            return x

        return {"value": enc(float(self.value)), "error": enc(float(self.error)),
                "converged": self.converged, "reason": self.reason,
                "breakdown": {k: enc(v) for k, v in sorted(self.breakdown.items())}}


# ---------------------------------------------------------------------------
# integration core


def _density_integral(v: SmoothConvexSpec, zeta, weight: WeightSpec, box, *, rtol=None, region=None):
    """``∫ zeta(det Hess v) omega(x, v(x)) dx`` over ``dom(v) ∩ box``.

    Finite-difference Hessians keep a margin ``2 h_fd`` from the domain
    boundary; the skipped shell is reported, not added.
    """
    margin = 0.0 if v.has_analytic_hessian or v.domain.is_whole_space else 2 * H_FD
    unit = weight.is_unit

    def f(X):
        z = zeta(v.hessian_det(X))
        if unit:
            return z
        return z * weight(X, v.value_fn(X))

    kw = {} if rtol is None else {"rtol": rtol}
    res = integrate_on_domain(region or v.domain, f, box=box, margin=margin, **kw)
    breakdown = {"n_evals": res.n_evals, "levels": res.levels, "margin": margin}
    if margin > 0:
        breakdown.update(_margin_report(v, zeta, margin))
    if math.isinf(res.value):
        return FunctionalValue(INF, INF, False, "divergent-quadrature", breakdown)
    return FunctionalValue(res.value, res.error, res.converged, None, breakdown)


def _margin_report(v, zeta, margin):
    """Shell volume and the bound ``zeta(M) vol`` with ``M`` the det just inside."""
    dom = v.domain
    if hasattr(dom, "radius"):
        R = dom.radius
        n = dom.dim
        shell = dom.volume * (1 - ((R - margin) / R) ** n)
        probes = np.asarray(dom.center) + (R - 1.5 * margin) * np.eye(n)
    else:
        shrink = dom.shrunk(margin / max(float(np.ptp(dom.vertices, axis=0).min()), 1e-300))
        shell = max(dom.volume - shrink.volume, 0.0)
        c = dom.centroid
        probes = c + (1 - 1.5 * margin / np.maximum(np.linalg.norm(dom.vertices - c, axis=1)[:, None], 1e-300)) * (dom.vertices - c)
    try:
        M = float(np.nanmax(v.hessian_det(probes)))
    except ConvexError:
        M = INF
    est = float(zeta(M)) * shell if np.isfinite(M) else INF
    return {"margin_volume": float(shell), "margin_estimate": est}


def _check_concave(zeta):
    if not isinstance(zeta, ZetaConcave):
        raise IncompatibleFunctionalError("this functional needs a concave integrand")


def Z_primal(u, zeta: ZetaConcave, *, rtol=None) -> FunctionalValue:
    """``∫_{dom u} zeta(det Hess u) dx`` for a compact-domain specimen."""
    _check_concave(zeta)
    if isinstance(u, MaxAffineFunction):
        return FunctionalValue(0.0, 0.0, True, None, {"exact": "piecewise linear"})
    if u.domain.is_whole_space:
        raise ConvexError("Z_primal needs a compact domain; use Z_dual for finite-valued functions")
    return _density_integral(u, zeta, WeightSpec.const(), None, rtol=rtol)


def _support_box(v):
    R = v.ma_support_radius
    if not np.isfinite(R):
        raise ConvexError("finite Monge-Ampere support radius required")
    n = v.dim
    return -R * np.ones(n), R * np.ones(n)


def Z_weighted(v, zeta: ZetaConcave, omega: WeightSpec, *, rtol=None) -> FunctionalValue:
    """``∫ zeta(det Hess v) omega(x, v(x)) dx`` over the MA support box."""
    _check_concave(zeta)
    if isinstance(v, MaxAffineFunction):
        return FunctionalValue(0.0, 0.0, True, None, {"exact": "piecewise linear"})
    if v.domain.is_whole_space and v.ma_support_ball is not None:
        # integrate over the ball itself so its rim, where the density jumps, is a cell boundary
        return _density_integral(v, zeta, omega, None, rtol=rtol, region=v.ma_support_ball)
    box = _support_box(v) if v.domain.is_whole_space else None
    return _density_integral(v, zeta, omega, box, rtol=rtol)


def Z_dual(v, zeta: ZetaConcave, *, rtol=None) -> FunctionalValue:
    """``∫_{R^n} zeta(det Hess v) dx`` for finite ``v`` with compact MA support."""
    return Z_weighted(v, zeta, WeightSpec.const(), rtol=rtol)


def Z_lower(v, zeta: ZetaConvexDecreasing, C, omega: WeightSpec | None = None, *, rtol=None) -> FunctionalValue:
    """``∫_{C ∩ dom v} zeta(det Hess v) omega dx`` in ``[0, inf]``."""
    if not isinstance(zeta, ZetaConvexDecreasing):
        raise IncompatibleFunctionalError("the lower functional needs a decreasing convex integrand")
    omega = omega or WeightSpec.const()
    lo = np.atleast_1d(np.asarray(C[0], dtype=float))
    hi = np.atleast_1d(np.asarray(C[1], dtype=float))
    if isinstance(v, MaxAffineFunction):
        z0 = zeta.at_zero
        if v.domain.is_whole_space:
            region = None
        else:
            region = v.domain

        def w(X):
            vals = v.unrestricted(X)
            return omega(X, vals)

        if region is None:
            from .quadrature import integrate_box

            if omega.is_unit:
                mass, err = float(np.prod(hi - lo)), 0.0
            else:
                r = integrate_box(w, lo, hi)
                mass, err = r.value, r.error
        else:
            if omega.is_unit and v.dim == 1:
                a, b = region.bounding_box()
                mass, err = max(0.0, min(hi[0], b[0]) - max(lo[0], a[0])), 0.0
            elif omega.is_unit and v.dim == 2 and region.is_full_dimensional:
                poly = region.polygon
                for k in range(2):
                    e = np.eye(2)[k]
                    poly = clip_polygon(clip_polygon(poly, e, hi[k]), -e, -lo[k])
                mass, err = (polygon_area(poly) if len(poly) >= 3 else 0.0), 0.0
            else:
                r = integrate_on_domain(region, w, box=(lo, hi))
                mass, err = r.value, r.error
        if mass <= 0:
            return FunctionalValue(0.0, 0.0, True, None, {"exact": "piecewise linear"})
        if math.isinf(z0):
            return FunctionalValue(INF, 0.0, True, "zeta-infinite-at-0", {"exact": "piecewise linear"})
        return FunctionalValue(float(z0 * mass), float(z0 * err), True, None, {"exact": "piecewise linear"})
    res = _density_integral(v, zeta, omega, (lo, hi), rtol=rtol)
    if math.isinf(res.value) and math.isinf(zeta.at_zero):
        return FunctionalValue(INF, INF, True, "zeta-infinite-at-0", res.breakdown)
    return res


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class JensenResult:
    lhs: float
    rhs: float
    ok: bool
    direction: str


def jensen_check(zeta, f, C=None, m=401) -> JensenResult:
    """Compare ``mean(zeta(f))`` with ``zeta(mean(f))`` over ``C``.

    ``f`` is either an array of non-negative samples or a vectorized callable
    evaluated at midpoints of an ``m``-per-axis grid on the box ``C``.
    """
    if callable(f):
        lo = np.atleast_1d(np.asarray(C[0], dtype=float))
        hi = np.atleast_1d(np.asarray(C[1], dtype=float))
        if np.any(hi <= lo):
            raise ConvexError("Jensen check needs a box of positive volume")
        axes = [a + (np.arange(m) + 0.5) * (b - a) / m for a, b in zip(lo, hi)]
        X = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
        vals = np.asarray(f(X), dtype=float)
    else:
        vals = np.asarray(f, dtype=float).ravel()
    if np.any(vals < 0):
        raise ConvexError("Jensen check needs f >= 0")
    lhs = float(np.mean(zeta(vals)))
    rhs = float(zeta(np.mean(vals)))
    if isinstance(zeta, ZetaConcave):
        return JensenResult(lhs, rhs, lhs <= rhs + 1e-12, "concave")
    return JensenResult(lhs, rhs, lhs >= rhs - 1e-12, "convex")


@dataclass(frozen=True)
class DualityGap:
    gap: float
    primal: FunctionalValue
    dual: FunctionalValue

    def __float__(self):
        return float(self.gap)

    @property
    def tolerance(self):
        return self.primal.error + self.dual.error


def duality_gap(u, zeta: ZetaConcave, conj=None, *, rtol=None) -> DualityGap:
    """``|Z_primal(u, zeta) - Z_dual(u*, zeta~)|`` with an exact conjugate."""
    if conj is None:
        conj = conjugate_closed_form(u)
    p = Z_primal(u, zeta, rtol=rtol)
    d = Z_dual(conj, zeta_dual(zeta), rtol=rtol)
    return DualityGap(abs(p.value - d.value), p, d)
