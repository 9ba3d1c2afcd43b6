"""Named scenarios, config ingestion and report persistence.

Each scenario returns verdicts with the outcome the registry expects, any
trajectories (also written as CSV) and identity gaps. Reports are JSON with
sorted keys and contain no timings, so equal configs give equal bytes;
wall-clock time goes to a separate ``timing.json``.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .convergence import (
    FunctionalDescriptor,
    semicontinuity_verdict,
    tau_check,
)
from .convex_core import Ball, DomainPolytope, hemisphere, huber, quadratic
from .errors import ConvexError
from .families import (
    example21_family,
    huber_family,
    mollified_tangent_family,
    pl_tangent_family,
    random_pl,
    sqrt_family,
)
from .functionals import (
    WeightSpec,
    ZetaConcave,
    ZetaConvexDecreasing,
    Z_primal,
    Z_weighted,
    duality_gap,
    zeta_from_dict,
)
from .legendre import conjugate_closed_form
from .subgrad_ma import TestFunction, total_mass_check, weak_star_box_gap, weak_star_gap

OUT_ENV = "CONVEXSC_OUT"


class ConfigError(ConvexError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class ScenarioEntry:
    name: str
    anchor: str
    dims: tuple
    run: Callable
    defaults: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    scenario: str
    n: int = 1
    schedule: Optional[list] = None
    zeta: Optional[dict] = None
    omega: Optional[str] = None
    C: Optional[list] = None
    out: Optional[str] = None
    seed: int = 0
    samples: Optional[int] = None
    parallel: bool = False

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "scenario" not in d:
            raise ConfigError("config needs a 'scenario' key")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        entry = REGISTRY.get(self.scenario)
        if entry is None:
            raise ConfigError(f"unknown scenario {self.scenario!r}; see 'list'")
        if self.n not in entry.dims:
            raise ConfigError(f"scenario {self.scenario!r} supports n in {list(entry.dims)}, got {self.n}")
        if self.schedule is not None:
            s = list(self.schedule)
            if not s or any(int(k) != k or k < 1 for k in s) or any(b <= a for a, b in zip(s, s[1:])):
                raise ConfigError("schedule must be a non-empty increasing list of positive integers")
        if self.C is not None and (len(self.C) != 2 or any(len(np.atleast_1d(c)) != self.n for c in self.C)):
            raise ConfigError("C must be [lower, upper] with n entries each")
        if self.zeta is not None:
            try:
                zeta_from_dict(self.zeta)
            except (ConvexError, KeyError, TypeError) as exc:
                raise ConfigError(f"invalid zeta: {exc}") from exc
        if self.omega not in (None, "const", "exp"):
            raise ConfigError("omega must be 'const' or 'exp'")
        return self

    def get(self, key):
        val = getattr(self, key)
        if val is None:
            return REGISTRY[self.scenario].defaults.get(key)
        return val

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        d.pop("parallel")
        return d


@dataclass
class ExperimentReport:
    config: dict
    verdicts: dict
    trajectories: dict
    identity_gaps: dict
    version: str = __version__
    csv: dict = field(default_factory=dict)

    @property
    def as_expected(self):
        return all(v["observed"] == v["expected"] for v in self.verdicts.values())

    def to_json(self):
        body = {"config": self.config, "verdicts": self.verdicts, "trajectories": self.trajectories,
                "identity_gaps": self.identity_gaps, "version": self.version,
                "as_expected": self.as_expected}
        return json.dumps(_clean(body), sort_keys=True, indent=2) + "\n"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _verdict(observed, expected):
    return {"observed": observed, "expected": expected}


def _zeta(cfg, default):
    return zeta_from_dict(cfg.zeta) if cfg.zeta is not None else default


# ---------------------------------------------------------------------------
# scenarios


def _example1(cfg):
    n = cfg.n
    fam = example21_family(n, tuple(cfg.get("schedule")))
    zeta = _zeta(cfg, ZetaConcave.power(1 / 3))
    rec = semicontinuity_verdict(fam, FunctionalDescriptor(zeta), parallel=cfg.parallel)
    tau = tau_check(fam, parallel=cfg.parallel)
    vol = Ball((0.0,) * n, 1.0).volume
    closed = [vol * float(zeta((2.0 * k) ** n)) for k in fam.schedule]
    dev = max(abs(a - b) / b for a, b in zip(rec.values, closed))
    return {
        "verdicts": {
            "upper": _verdict(rec.verdict, "FAIL"),
            "epi": _verdict(tau.epi_certified, True),
            "tau": _verdict(tau.certified, False),
            "closed_form": _verdict(dev <= 1e-6, True),
        },
        "trajectories": {"Z": rec.to_dict(), "closed_form": closed, "lipschitz_witness": tau.lipschitz},
        "identity_gaps": {"closed_form_rel_dev": dev, "limit_value": rec.limit_value},
        "csv": {"trajectory.csv": rec.to_csv()},
    }


_HEMISPHERE_REF = {1: math.pi, 2: 2 * math.pi, 3: math.pi**2}


def _hemisphere(cfg):
    n = cfg.n
    zeta = _zeta(cfg, ZetaConcave.power(1.0 / (n + 2)))
    val = Z_primal(hemisphere(1.0, n), zeta)
    ref = _HEMISPHERE_REF[n]
    rel = abs(val.value - ref) / ref
    tol = 0.01 if n == 1 else 0.02
    return {
        "verdicts": {"value": _verdict(rel <= tol, True)},
        "trajectories": {},
        "identity_gaps": {"value": val.to_dict(), "reference": ref, "rel_error": rel, "tolerance": tol},
    }


def _duality(cfg):
    ks = cfg.get("schedule")
    zetas = [zeta_from_dict(cfg.zeta)] if cfg.zeta else [ZetaConcave.power(1 / 3), ZetaConcave("log1p")]
    rows, ok = [], True
    dom = DomainPolytope.box([-1.0], [1.0]) if cfg.n == 1 else None
    for k in ks:
        u = quadratic(k * np.eye(cfg.n), domain=dom or _ball(cfg.n))
        for z in zetas:
            g = duality_gap(u, z)
            rel = g.gap / max(abs(g.primal.value), 1e-300)
            ok &= rel <= 0.01
            rows.append({"k": k, "zeta": z.to_dict(), "primal": g.primal.value, "dual": g.dual.value,
                         "gap": g.gap, "rel_gap": rel, "quadrature_tolerance": g.tolerance})
    lines = ["k,zeta,primal,dual,gap"] + [
        f"{r['k']},{r['zeta']['kind']},{r['primal']!r},{r['dual']!r},{r['gap']!r}" for r in rows]
    return {
        "verdicts": {"duality": _verdict(bool(ok), True)},
        "trajectories": {},
        "identity_gaps": {"duality": rows},
        "csv": {"duality.csv": "\n".join(lines) + "\n"},
    }


def _ball(n):
    return Ball((0.0,) * n, 1.0)


def _pl_usc(cfg):
    n = cfg.n
    zeta = _zeta(cfg, ZetaConcave.power(1 / 3))
    sched = tuple(cfg.get("schedule"))
    out, csvs, gaps = {}, {}, {}
    ok_pass, ok_gap = True, True
    for a in (0.5, 1.0, 2.0):
        for kind, make in (("pl", pl_tangent_family), ("mollified", mollified_tangent_family)):
            fam = make(a, n, sched)
            rec = semicontinuity_verdict(fam, FunctionalDescriptor(zeta), parallel=cfg.parallel)
            key = f"{kind}_a{a:g}"
            out[key] = rec.to_dict()
            csvs[f"{key}.csv"] = rec.to_csv()
            ok_pass &= rec.passed
            if kind == "pl":
                gaps[key] = rec.gap
                ok_gap &= rec.gap > 0
    return {
        "verdicts": {"upper": _verdict("PASS" if ok_pass else "FAIL", "PASS"),
                     "strict_gap_pl": _verdict(bool(ok_gap), True)},
        "trajectories": out,
        "identity_gaps": {"pl_gap": gaps},
        "csv": csvs,
    }


def _weighted(cfg):
    n = cfg.n
    zeta = _zeta(cfg, ZetaConcave.power(1.0 / (n + 2)))
    omega = WeightSpec.exp_height(n) if cfg.get("omega") in (None, "exp") else WeightSpec.const()
    fam = huber_family(n, tuple(cfg.get("schedule")))
    rec = semicontinuity_verdict(fam, FunctionalDescriptor(zeta, "upper", omega), parallel=cfg.parallel)
    # closed form: the unit Huber core with density 1
    val = Z_weighted(huber(1.0, 1.0, n), zeta, omega).value
    ref = _weighted_reference(n, omega)
    rel = abs(val - ref) / ref
    return {
        "verdicts": {"upper": _verdict(rec.verdict, "PASS"), "reference": _verdict(rel <= 0.01, True)},
        "trajectories": {"Z": rec.to_dict()},
        "identity_gaps": {"weighted_value": val, "reference": ref, "rel_error": rel},
        "csv": {"trajectory.csv": rec.to_csv()},
    }


def _weighted_reference(n, omega):
    """``∫_{|y|<=1} omega(y, |y|^2/2) dy`` in polar form by scipy quadrature."""
    from scipy.integrate import quad

    surf = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    f = lambda r: surf * r ** (n - 1) * float(omega(np.zeros((1, n)), np.array([0.5 * r * r]))[0])
    return quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]


def _lower(cfg):
    n = cfg.n
    C = cfg.get("C") or [[-0.5] * n, [0.5] * n]
    C = (np.asarray(C[0], dtype=float), np.asarray(C[1], dtype=float))
    fam = pl_tangent_family(1.0, n, tuple(cfg.get("schedule")))
    out, csvs, verdicts = {}, {}, {}
    zetas = [zeta_from_dict(cfg.zeta)] if cfg.zeta else [ZetaConvexDecreasing("exp"),
                                                         ZetaConvexDecreasing("power", q=0.5)]
    for z in zetas:
        rec = semicontinuity_verdict(fam, FunctionalDescriptor(z, "lower", C=C), parallel=cfg.parallel)
        key = f"{z.kind}"
        out[key] = rec.to_dict()
        csvs[f"{key}.csv"] = rec.to_csv()
        verdicts[key] = _verdict(rec.verdict, "PASS")
    return {"verdicts": verdicts, "trajectories": out, "identity_gaps": {}, "csv": csvs}


def _mass(cfg):
    count = cfg.get("samples")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    rows, worst = [], 0.0
    for i in range(count):
        n = 1 + i % 2 if cfg.n == 0 else cfg.n
        u = random_pl(rng, n)
        chk = total_mass_check(u)
        rel = chk.gap / (1 + chk.rhs)
        worst = max(worst, rel)
        rows.append({"n": n, "pieces": u.n_pieces, "lhs": chk.lhs, "rhs": chk.rhs, "gap": chk.gap})
    return {
        "verdicts": {"mass": _verdict(worst <= 1e-9, True)},
        "trajectories": {},
        "identity_gaps": {"worst_relative_gap": worst, "instances": rows},
    }


def _weakstar(cfg):
    fam = sqrt_family(tuple(cfg.get("schedule")))
    beta = TestFunction.hat(0.0, 1.0)
    gaps = [weak_star_gap(fam, beta, k) for k in fam.schedule]
    closed = [2 * (math.sqrt(1 + 1 / k) - 1 / math.sqrt(k)) - 2 for k in fam.schedule]
    mono = all(abs(b) <= abs(a) + 1e-9 for a, b in zip(gaps, gaps[1:]))
    # companion: conjugates of the blow-up family on C = [-2, 2]^n
    blow = example21_family(1, tuple(cfg.get("schedule"))).mapped(conjugate_closed_form)
    box_gaps = [weak_star_box_gap(blow, [-2.0], [2.0], k) for k in blow.schedule]
    tail = box_gaps[-3:]
    limsup_ok = all(b <= a + 1e-12 for a, b in zip(tail, tail[1:])) and tail[-1] <= 0.02
    lines = ["k,gap,closed_form,box_gap"] + [f"{k},{g!r},{c!r},{b!r}"
                                             for k, g, c, b in zip(fam.schedule, gaps, closed, box_gaps)]
    return {
        "verdicts": {"decreasing": _verdict(bool(mono), True),
                     "final_below_0.05": _verdict(abs(gaps[-1]) < 0.05, True),
                     "limsup_box": _verdict(bool(limsup_ok), True)},
        "trajectories": {"gap": gaps, "closed_form": closed, "box_gap": box_gaps},
        "identity_gaps": {"max_closed_form_dev": max(abs(a - b) for a, b in zip(gaps, closed))},
        "csv": {"weakstar.csv": "\n".join(lines) + "\n"},
    }


REGISTRY = {e.name: e for e in [
    ScenarioEntry("example1", "epi-convergence alone does not give upper semicontinuity: "
                  "k|x|^2 + I_B blows up while its Lipschitz constants are unbounded",
                  (1, 2), _example1, {"schedule": [1, 2, 4, 8, 16, 32, 64, 128, 256]}),
    ScenarioEntry("hemisphere-asa", "functional affine surface area of the hemisphere, "
                  "zeta(t) = t^(1/(n+2))", (1, 2, 3), _hemisphere),
    ScenarioEntry("duality-identity", "Z_zeta(u) = Z_zeta~(u*) with zeta~(t) = t zeta(1/t)",
                  (1, 2), _duality, {"schedule": [1, 2, 8]}),
    ScenarioEntry("pl-approx-usc", "upper semicontinuity under tau-convergence; "
                  "the functional vanishes on piecewise linear functions", (1, 2), _pl_usc,
                  {"schedule": [4, 8, 16, 32, 64]}),
    ScenarioEntry("weighted-asa", "weighted functional with omega(x, t) = exp(-n t / (n+2)) "
                  "under tau*-convergence", (1, 2), _weighted, {"schedule": [4, 8, 16, 32, 64]}),
    ScenarioEntry("lower-sc", "lower semicontinuity on compacts for decreasing convex zeta",
                  (1, 2), _lower, {"schedule": [4, 8, 16, 32, 64]}),
    ScenarioEntry("mass-identity", "total Monge-Ampere mass of u* equals the volume of dom(u)",
                  (0, 1, 2), _mass, {"samples": 50}),
    ScenarioEntry("weakstar", "weak-* convergence of Monge-Ampere measures under smoothing",
                  (1,), _weakstar, {"schedule": [1, 4, 16, 64, 256, 1024, 2048]}),
]}


def list_scenarios():
    """Registry entries in stable (alphabetical) order."""
    return [{"name": e.name, "anchor": e.anchor, "dims": list(e.dims)}
            for e in sorted(REGISTRY.values(), key=lambda e: e.name)]


def default_out_dir():
    return os.environ.get(OUT_ENV, "convexsc-out")


def run_scenario(cfg: ScenarioConfig, out_dir=None, write=True) -> ExperimentReport:
    """Execute a scenario; when ``write`` is set persist JSON, CSV and timing files."""
    cfg.validate()
    t0 = time.perf_counter()
    res = REGISTRY[cfg.scenario].run(cfg)
    elapsed = time.perf_counter() - t0
    report = ExperimentReport(cfg.to_dict(), res["verdicts"], res["trajectories"],
                              res["identity_gaps"], csv=res.get("csv", {}))
    if write:
        base = Path(out_dir or cfg.out or default_out_dir()) / cfg.scenario
        try:
            base.mkdir(parents=True, exist_ok=True)
            (base / "report.json").write_text(report.to_json())
            for name, text in sorted(report.csv.items()):
                (base / name).write_text(text)
            (base / "timing.json").write_text(json.dumps({"seconds": round(elapsed, 3)}) + "\n")
        except OSError as exc:
            raise ConfigError(f"cannot write to {base}: {exc}") from exc
    report.elapsed = elapsed
    return report
