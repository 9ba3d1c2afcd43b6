"""Finite-schedule evidence for epi-, tau- and tau*-convergence.

No finite computation certifies a limit. Every check here works on an
explicit k-schedule, reports the full per-k data and states its proxy:

* epi: sup-norm errors on interior probes are non-increasing and end below
  ``tol_epi``; on exterior probes the probe minimum grows without bound.
* tau: epi plus Lipschitz constants that stop growing.
* tau*: epi plus Monge-Ampere support radii that stop growing.
* semicontinuity: extremum over the final window of 3 schedule points.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from .convex_core import Ball, DomainPolytope, MaxAffineFunction, lipschitz_constant
from .errors import ConvexError, IncompatibleFunctionalError
from .functionals import (
    FunctionalValue,
    WeightSpec,
    ZetaConcave,
    ZetaConvexDecreasing,
    Z_dual,
    Z_lower,
    Z_primal,
    Z_weighted,
)
from .legendre import conjugate_closed_form
from .subgrad_ma import ma_atoms_pl

TOL_SC = 0.02
TOL_ABS = 1e-6
WINDOW = 3
LIP_SLACK = 1.05


@dataclass(frozen=True, eq=False)
class SequenceFamily:
    """``k -> u_k`` on a schedule, with a declared limit and convergence mode."""

    name: str
    generator: Callable
    limit: object
    schedule: tuple
    mode: str = "none"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sched = tuple(int(k) for k in self.schedule)
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])) or sched[0] < 1:
            raise ConvexError("schedule must be a non-empty increasing list of positive integers")
        if self.mode not in ("epi", "tau", "tau_star", "none"):
            raise ConvexError(f"unknown convergence mode {self.mode!r}")
        object.__setattr__(self, "schedule", sched)

    def member(self, k):
        if k not in self._cache:
            self._cache[k] = self.generator(k)
        return self._cache[k]

    def members(self):
        return [self.member(k) for k in self.schedule]

    def mapped(self, fn, name=None, mode="none"):
        """Family ``k -> fn(u_k)`` with limit ``fn(u)``."""
        return SequenceFamily(name or f"{self.name}*", lambda k: fn(self.member(k)),
                              fn(self.limit), self.schedule, mode)


@dataclass(frozen=True)
class Probe:
    """A compact probe set; ``exterior`` probes lie outside ``dom(limit)``."""

    region: object
    exterior: bool = False
    label: str = ""


@dataclass
class ConvergenceReport:
    family: str
    mode: str
    schedule: tuple
    certified: bool
    epi_certified: bool
    probe_errors: dict = field(default_factory=dict)
    exterior_minima: dict = field(default_factory=dict)
    lipschitz: Optional[list] = None
    support_radii: Optional[list] = None
    bound: Optional[float] = None
    tol_epi: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "family": self.family, "mode": self.mode, "schedule": list(self.schedule),
            "certified": self.certified, "epi_certified": self.epi_certified,
            "probe_errors": {k: [_enc(x) for x in v] for k, v in self.probe_errors.items()},
            "exterior_minima": {k: [_enc(x) for x in v] for k, v in self.exterior_minima.items()},
            "lipschitz": None if self.lipschitz is None else [_enc(x) for x in self.lipschitz],
            "support_radii": None if self.support_radii is None else [_enc(x) for x in self.support_radii],
            "bound": _enc(self.bound), "tol_epi": self.tol_epi, "notes": list(self.notes),
        }


def _enc(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# ---------------------------------------------------------------------------
# probes


def _probe_points(region, m=None):
    n = region.dim
    m = m or {1: 81, 2: 41}.get(n, 13)
    lo, hi = region.bounding_box()
    axes = [np.linspace(a, b, m) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    X = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    if isinstance(region, Ball) or (isinstance(region, DomainPolytope) and region._box is None):
        X = X[region.contains(X)]
    return X


def default_probes(limit):
    """Limit domain shrunk 5% per side, plus one exterior box when ``dom != R^n``."""
    dom = limit.domain
    n = limit.dim
    probes = []
    if dom.is_whole_space:
        R = 1.0 + _support_radius(limit)
        if not math.isfinite(R):
            R = 2.0
        probes.append(Probe(DomainPolytope.box(-R * np.ones(n), R * np.ones(n)), False, "interior"))
        return probes
    if dom.is_full_dimensional:
        probes.append(Probe(dom.shrunk(0.05), False, "interior"))
    lo, hi = (np.asarray(v, dtype=float) for v in dom.bounding_box())
    w = float(np.max(hi - lo))
    gap = 0.05 * max(w, 1.0) if w > 0 else 0.5
    elo, ehi = lo.copy(), hi.copy()
    elo[0] = hi[0] + gap
    ehi[0] = hi[0] + gap + (0.5 * max(w, 1.0) if w > 0 else 0.5)
    probes.append(Probe(DomainPolytope.box(elo, ehi), True, "exterior"))
    return probes


def _check_probe(probe: Probe, dom, margin):
    """Reject probes that come within ``margin`` of the limit domain's boundary."""
    if dom.is_whole_space:
        if probe.exterior:
            raise ConvexError("exterior probes need a limit with a proper domain")
        return
    region = probe.region
    if not probe.exterior:
        if not isinstance(dom, (DomainPolytope, Ball)) or not dom.is_full_dimensional:
            raise ConvexError("interior probe but the limit domain has empty interior")
        pts = region.vertices if isinstance(region, DomainPolytope) else _probe_points(region)
        if np.any(dom.distance_to_boundary(pts) < margin):
            raise ConvexError(f"probe {probe.label!r} touches the boundary of dom(limit)")
        return
    # exterior: the probe enlarged by margin must miss the domain
    if isinstance(dom, Ball) or not isinstance(region, DomainPolytope):
        pts = _probe_points(region)
        if np.any(dom.contains(pts, tol=0) | (dom.distance_to_boundary(pts) > -margin)):
            raise ConvexError(f"probe {probe.label!r} touches the boundary of dom(limit)")
        return
    n = dom.dim
    A = np.vstack([dom.A, region.A])
    norms = np.linalg.norm(region.A, axis=1)
    b = np.concatenate([dom.b, region.b + margin * norms])
    res = linprog(np.zeros(n), A_ub=A, b_ub=b, bounds=[(None, None)] * n)
    if res.status == 0:
        raise ConvexError(f"probe {probe.label!r} touches the boundary of dom(limit)")


def _sup_error(u, v, X):
    a, b = np.asarray(u(X), dtype=float), np.asarray(v(X), dtype=float)
    both_inf = np.isinf(a) & np.isinf(b)
    with np.errstate(invalid="ignore"):
        d = np.where(both_inf, 0.0, np.abs(a - b))
    return float(np.max(d)) if len(d) else 0.0


def _map(fn, items, parallel):
    if not parallel:
        return [fn(x) for x in items]
    with ThreadPoolExecutor() as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# checks


def epi_convergence_estimate(family: SequenceFamily, probes=None, *, tol_epi=None,
                             margin=1e-6, parallel=False) -> ConvergenceReport:
    """Per-k sup errors on probes; certify when they behave as epi-convergence predicts."""
    limit = family.limit
    probes = list(probes) if probes is not None else default_probes(limit)
    for p in probes:
        _check_probe(p, limit.domain, margin)
    errors, minima = {}, {}
    notes = []
    ok = True
    scale = 0.0
    for i, p in enumerate(probes):
        label = p.label or f"probe{i}"
        X = _probe_points(p.region)
        if p.exterior:
            m = _map(lambda u: float(np.min(u(X))), family.members(), parallel)
            minima[label] = m
            ok &= _diverges(m)
            if not _diverges(m):
                notes.append(f"{label}: probe minima do not grow without bound")
        else:
            lv = np.asarray(limit(X), dtype=float)
            scale = max(scale, float(np.abs(lv[np.isfinite(lv)]).max(initial=0.0)))
            errors[label] = _map(lambda u: _sup_error(u, limit, X), family.members(), parallel)
    tol = tol_epi if tol_epi is not None else 1e-3 * (1.0 + scale)
    for label, e in errors.items():
        e = np.asarray(e)
        mono = np.all(np.diff(e) <= 1e-12 * (1.0 + scale))
        if not mono:
            notes.append(f"{label}: errors are not non-increasing")
        if not e[-1] <= tol:
            notes.append(f"{label}: final error {e[-1]:.3g} above tol_epi {tol:.3g}")
        ok &= bool(mono and e[-1] <= tol)
    return ConvergenceReport(family.name, "epi", family.schedule, bool(ok), bool(ok),
                             errors, minima, tol_epi=tol, notes=notes)


def _diverges(m):
    m = np.asarray(m, dtype=float)
    if np.all(np.isinf(m)):
        return True
    fin = m[np.isfinite(m)]
    if np.any(np.diff(m) < 0):
        return False
    tail = m[-WINDOW:]
    strictly = np.all(np.diff(tail) > 0) or np.isinf(tail[-1])
    return bool(strictly and m[-1] >= 2 * abs(fin[0]) + 1)


def _bounded(values):
    """Finite-schedule boundedness proxy; returns ``(bounded, extrapolated bound)``.

    Bounded when the last value is within 5% of the first-half maximum, or when
    the increments over the final window shrink geometrically (ratio <= 0.75),
    in which case the geometric tail is added to the bound.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        return False, math.inf
    head = v[: max(1, len(v) // 2)]
    if v[-1] <= LIP_SLACK * head.max() + 1e-9:
        return True, float(v.max())
    d = np.diff(v[-WINDOW:])
    if len(d) >= 2 and np.all(d > 0):
        ratios = d[1:] / d[:-1]
        r = float(ratios.max())
        if r <= 0.75:
            return True, float(v[-1] + d[-1] * r / (1 - r))
    return False, math.inf


def _lipschitz(u):
    return float(lipschitz_constant(u))


def _support_radius(v):
    if isinstance(v, MaxAffineFunction):
        if not v.domain.is_whole_space:
            raise ConvexError("support radius needs a finite-valued function")
        return float(ma_atoms_pl(v).support_radius)
    return float(v.ma_support_radius)


def tau_check(family: SequenceFamily, probes=None, *, parallel=False, **kw) -> ConvergenceReport:
    """Epi certification plus uniformly bounded Lipschitz constants."""
    rep = epi_convergence_estimate(family, probes, parallel=parallel, **kw)
    lips = _map(_lipschitz, family.members(), parallel)
    bounded, bound = _bounded(lips)
    if not bounded:
        rep.notes.append("Lipschitz constants grow along the schedule")
    rep.mode = "tau"
    rep.lipschitz = lips
    rep.bound = bound
    rep.certified = rep.epi_certified and bounded
    return rep


def tau_star_check(family: SequenceFamily, probes=None, *, parallel=False, **kw) -> ConvergenceReport:
    """Epi certification plus Monge-Ampere supports in a common ball."""
    rep = epi_convergence_estimate(family, probes, parallel=parallel, **kw)
    radii = _map(_support_radius, family.members(), parallel)
    bounded, bound = _bounded(radii)
    if not bounded:
        rep.notes.append("Monge-Ampere support radii grow along the schedule")
    rep.mode = "tau_star"
    rep.support_radii = radii
    rep.bound = bound
    rep.certified = rep.epi_certified and bounded
    return rep


@dataclass
class TransportReport:
    primal: ConvergenceReport
    dual: ConvergenceReport
    agree: bool
    bound_discrepancy: float

    @property
    def ok(self):
        return self.agree and self.bound_discrepancy <= 1e-9

    def to_dict(self):
        return {"primal": self.primal.to_dict(), "dual": self.dual.to_dict(),
                "agree": self.agree, "bound_discrepancy": self.bound_discrepancy}


def duality_transport(family: SequenceFamily, *, parallel=False):
    """Conjugate family plus agreement of tau (primal) and tau* (dual) certification."""
    for u in [family.limit] + family.members():
        if u.dim > 2:
            from .errors import UnsupportedDimensionError

            raise UnsupportedDimensionError("duality transport is exact for n <= 2")
    dual = family.mapped(conjugate_closed_form, name=f"{family.name}*", mode="tau_star")
    p = tau_check(family, parallel=parallel)
    d = tau_star_check(dual, parallel=parallel)
    disc = [abs(a - b) / (1.0 + abs(a)) for a, b in zip(p.lipschitz, d.support_radii)]
    return dual, TransportReport(p, d, p.certified == d.certified, float(max(disc)))


# ---------------------------------------------------------------------------
# semicontinuity verdicts


@dataclass(frozen=True)
class FunctionalDescriptor:
    """Which functional to track: upper mode needs a concave ``zeta``, lower a convex one and ``C``."""

    zeta: object
    mode: str = "upper"
    omega: Optional[WeightSpec] = None
    C: Optional[tuple] = None

    def __post_init__(self):
        if self.mode == "upper" and not isinstance(self.zeta, ZetaConcave):
            raise IncompatibleFunctionalError("upper mode needs a concave integrand")
        if self.mode == "lower":
            if not isinstance(self.zeta, ZetaConvexDecreasing):
                raise IncompatibleFunctionalError("lower mode needs a decreasing convex integrand")
            if self.C is None:
                raise IncompatibleFunctionalError("lower mode needs a compact box C")
        if self.mode not in ("upper", "lower"):
            raise IncompatibleFunctionalError(f"unknown mode {self.mode!r}")

    def evaluate(self, u) -> FunctionalValue:
        if self.mode == "lower":
            return Z_lower(u, self.zeta, self.C, self.omega)
        if isinstance(u, MaxAffineFunction) or not u.domain.is_whole_space:
            if self.omega is not None and not self.omega.is_unit:
                return Z_weighted(u, self.zeta, self.omega)
            return Z_primal(u, self.zeta)
        if self.omega is not None:
            return Z_weighted(u, self.zeta, self.omega)
        return Z_dual(u, self.zeta)


@dataclass
class VerdictRecord:
    family: str
    mode: str
    schedule: tuple
    values: list
    errors: list
    lipschitz: list
    support_radii: list
    limit_value: float
    limit_error: float
    proxy: float
    verdict: str
    gap: float
    k_burn: Optional[int]
    tol_sc: float = TOL_SC
    tol_abs: float = TOL_ABS
    proxy_note: str = f"extremum over the final {WINDOW} schedule points (finite-window proxy)"

    @property
    def passed(self):
        return self.verdict == "PASS"

    def to_dict(self):
        return {
            "family": self.family, "mode": self.mode, "schedule": list(self.schedule),
            "values": [_enc(v) for v in self.values], "errors": [_enc(v) for v in self.errors],
            "lipschitz": [_enc(v) for v in self.lipschitz],
            "support_radii": [_enc(v) for v in self.support_radii],
            "limit_value": _enc(self.limit_value), "limit_error": _enc(self.limit_error),
            "proxy": _enc(self.proxy), "verdict": self.verdict, "gap": _enc(self.gap),
            "k_burn": self.k_burn, "tol_sc": self.tol_sc, "tol_abs": self.tol_abs,
            "proxy_note": self.proxy_note,
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "Z_k", "lipschitz_k", "support_radius_k"])
        for row in zip(self.schedule, self.values, self.lipschitz, self.support_radii):
            w.writerow([row[0]] + [_csv(x) for x in row[1:]])
        return buf.getvalue()


def _csv(x):
    if x is None:
        return ""
    x = float(x)
    return "inf" if math.isinf(x) else repr(x)


def _safe(fn, u):
    try:
        return fn(u)
    except ConvexError:
        return None


def semicontinuity_verdict(family: SequenceFamily, descriptor: FunctionalDescriptor, *,
                           tol_sc=TOL_SC, tol_abs=TOL_ABS, parallel=False) -> VerdictRecord:
    """Compare the final-window extremum of ``Z(u_k)`` with ``Z(u)``."""
    vals = _map(descriptor.evaluate, family.members(), parallel)
    lim = descriptor.evaluate(family.limit)
    Z = [float(v.value) for v in vals]
    Zu = float(lim.value)
    lips = [_safe(_lipschitz, u) for u in family.members()]
    radii = [_safe(_support_radius, u) if u.domain.is_whole_space else None for u in family.members()]
    tail = Z[-WINDOW:]
    if descriptor.mode == "upper":
        proxy = max(tail)
        bound = Zu * (1 + tol_sc) + tol_abs
        ok_k = [z <= bound for z in Z]
        if math.isinf(Zu):
            passed = True
        else:
            passed = proxy <= bound
        gap = Zu - proxy
    else:
        proxy = min(tail)
        bound = Zu * (1 - tol_sc) - tol_abs
        ok_k = [z >= bound for z in Z]
        passed = True if math.isinf(proxy) else (not math.isinf(Zu) and proxy >= bound)
        gap = proxy - Zu if not (math.isinf(proxy) and math.isinf(Zu)) else 0.0
    k_burn = None
    for i in range(len(Z)):
        if all(ok_k[i:]):
            k_burn = family.schedule[i]
            break
    return VerdictRecord(family.name, descriptor.mode, family.schedule, Z,
                         [float(v.error) for v in vals], lips, radii, Zu, float(lim.error),
                         proxy, "PASS" if passed else "FAIL", gap, k_burn, tol_sc, tol_abs)
