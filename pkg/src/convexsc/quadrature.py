"""Adaptive midpoint cubature on boxes and balls.

Each cell compares its one-point midpoint value with the sum over its ``2^n``
children; the difference divided by 3 is the Richardson error estimate of the
refined value, and the extrapolated value is what accepted cells contribute.
Refinement proceeds level by level on arrays so evaluations stay vectorized.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    converged: bool
    n_evals: int
    levels: int

    def to_dict(self):
        return {"value": _num(self.value), "error": _num(self.error),
                "converged": self.converged, "n_evals": self.n_evals, "levels": self.levels}


def _num(x):
    return "inf" if math.isinf(x) else float(x)


def integrate_box(f, lower, upper, *, atol=1e-10, rtol=None, m0=None,
                  max_level=40, max_evals=None):
    """Integrate vectorized ``f: (N, n) -> (N,)`` over the box ``[lower, upper]``.

    Non-finite integrand values make the result ``inf`` (not converged).
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    n = len(lower)
    if m0 is None:
        m0 = {1: 16, 2: 8}.get(n, 4)
    if rtol is None:
        rtol = {1: 1e-7, 2: 1e-5}.get(n, 1e-4)
    if max_evals is None:
        max_evals = {1: 200_000, 2: 2_000_000}.get(n, 3_000_000)
    h0 = (upper - lower) / m0
    if np.any(h0 <= 0):
        return QuadResult(0.0, 0.0, True, 0, 0)
    axes = [lo + (np.arange(m0) + 0.5) * h for lo, h in zip(lower, h0)]
    centers = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    offsets = np.array(list(itertools.product((-0.25, 0.25), repeat=n)))
    nchild = len(offsets)

    vals = np.asarray(f(centers), dtype=float)
    evals = len(centers)
    vol = float(np.prod(h0))
    parent = vals * vol
    total, err_acc = 0.0, 0.0
    level = 0
    while len(centers):
        if not np.all(np.isfinite(parent)):
            return QuadResult(math.inf, math.inf, False, evals, level)
        h = h0 / 2**level
        vol = float(np.prod(h))
        kids = (centers[:, None, :] + offsets[None, :, :] * h).reshape(-1, n)
        kv = np.asarray(f(kids), dtype=float).reshape(len(centers), nchild)
        evals += len(kids)
        if not np.all(np.isfinite(kv)):
            return QuadResult(math.inf, math.inf, False, evals, level)
        child_int = kv * (vol / nchild)
        refined = child_int.sum(axis=1)
        err = np.abs(refined - parent) / 3.0
        best = refined + (refined - parent) / 3.0
        estimate = total + best.sum()
        tol = max(atol, rtol * abs(estimate))
        budget_left = evals + len(kids) * nchild > max_evals
        if err_acc + err.sum() <= tol or level + 1 >= max_level or budget_left:
            total += best.sum()
            err_acc += err.sum()
            level += 1
            break
        # accept cells whose share of the tolerance is met
        local = 0.5 * tol * vol / float(np.prod(upper - lower))
        done = err <= local
        total += best[done].sum()
        err_acc += err[done].sum()
        keep = ~done
        centers = kids.reshape(len(centers), nchild, n)[keep].reshape(-1, n)
        parent = child_int[keep].ravel()
        level += 1
    total_tol = max(atol, rtol * abs(total))
    return QuadResult(float(total), float(err_acc), bool(err_acc <= total_tol), evals, level)


def _sphere_coords(n, w, angles):
    """Unit directions and the angular Jacobian for hyperspherical angles."""
    if n == 1:
        return angles[:, :1], np.ones(len(w))
    if n == 2:
        th = angles[:, 0]
        return np.column_stack([np.cos(th), np.sin(th)]), np.ones(len(w))
    th, ph = angles[:, 0], angles[:, 1]
    d = np.column_stack([np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)])
    return d, np.sin(ph)


def integrate_ball(f, center, radius, *, inner_margin=0.0, **kw):
    """Integrate ``f`` over a ball with the substitution ``r = R (1 - w^2)``.

    The map clusters nodes at the sphere, where integrands of the form
    ``(R - r)^(-1/2)`` become smooth in ``w``. ``inner_margin`` drops the
    shell ``R - r < margin``.
    """
    c = np.atleast_1d(np.asarray(center, dtype=float))
    n = len(c)
    R = float(radius)
    w_lo = math.sqrt(inner_margin / R) if inner_margin > 0 else 0.0
    if n == 1:
        return _ball_1d(f, c, R, w_lo, **kw)
    if n == 2:
        lo, hi = [w_lo, 0.0], [1.0, 2 * math.pi]
    elif n == 3:
        lo, hi = [w_lo, 0.0, 0.0], [1.0, 2 * math.pi, math.pi]
    else:
        raise ValueError("ball quadrature supports n <= 3")

    def g(Z):
        w = Z[:, 0]
        r = R * (1 - w * w)
        d, jac = _sphere_coords(n, w, Z[:, 1:])
        X = c + r[:, None] * d
        return f(X) * (r ** (n - 1)) * 2 * R * w * jac

    return integrate_box(g, lo, hi, **kw)


def _ball_1d(f, c, R, w_lo, **kw):
    def g(W):
        w = W[:, 0]
        r = R * (1 - w * w)
        jac = 2 * R * w
        return (f((c + r)[:, None]) + f((c - r)[:, None])) * jac

    return integrate_box(g, [w_lo], [1.0], **kw)


def integrate_on_domain(domain, f, box=None, margin=0.0, **kw):
    """Integrate ``f`` over ``domain ∩ box`` keeping a distance ``margin`` from ``∂domain``.

    Balls contained in ``box`` use the radial substitution; everything else
    uses box cubature with an interior indicator.
    """
    if box is None:
        if domain.is_whole_space:
            raise ValueError("an integration box is required on R^n")
        lo, hi = domain.bounding_box()
    else:
        lo = np.atleast_1d(np.asarray(box[0], dtype=float))
        hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    if not domain.is_whole_space:
        dlo, dhi = domain.bounding_box()
        if hasattr(domain, "radius") and np.all(lo <= dlo) and np.all(hi >= dhi):
            return integrate_ball(f, domain.center, domain.radius, inner_margin=margin, **kw)
        lo, hi = np.maximum(lo, dlo), np.minimum(hi, dhi)
        if np.any(hi <= lo):
            return QuadResult(0.0, 0.0, True, 0, 0)

    if domain.is_whole_space:
        g = f
    else:
        def g(X):
            inside = domain.distance_to_boundary(X) > margin
            out = np.zeros(len(X))
            if inside.any():
                out[inside] = f(X[inside])
            return out

    return integrate_box(g, lo, hi, **kw)
