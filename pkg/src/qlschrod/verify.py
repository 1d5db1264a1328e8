"""Post-solve checks in the original variables (u, v) = (f(w), f(z)).

* weak form of the quasilinear system against a bank of compact test
  functions, assembled independently of the solver's stencil (spline
  interpolation of w, Gauss-Legendre quadrature per cell);
* smallness of the solution off Omega_eps (the penalisation is inactive there);
* log-linear fit of the tail;
* max of |(w, z)| on the boundary of Omega_eps across an epsilon sweep.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .discretization import RadialGrid, StatePair, sphere_area
from .transform import DualTransform


class ConfigurationError(ValueError):
    pass


class DecayFitError(ValueError):
    pass


def map_back(transform: DualTransform, state: StatePair):
    return transform.f(state.w), transform.f(state.z)


# test functions -------------------------------------------------------------

@dataclass(frozen=True)
class RadialBump:
    """Smooth compact shell exp(1 - 1/(1 - s^2)), s = (r - center)/width."""

    center: float
    width: float

    def _s(self, r):
        return (np.asarray(r, dtype=float) - self.center) / self.width

    def value(self, r):
        s = self._s(r)
        out = np.zeros_like(s)
        m = np.abs(s) < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
        return out

    def derivative(self, r):
        s = self._s(r)
        out = np.zeros_like(s)
        m = np.abs(s) < 1
        sm = s[m]
        out[m] = np.exp(1.0 - 1.0 / (1.0 - sm ** 2)) * (-2.0 * sm / (1.0 - sm ** 2) ** 2) / self.width
        return out


def random_test_bank(count: int, support_radius: float, seed: int = 0):
    """Bumps with random centres in [0, support_radius) and widths in [0.5, 3]."""
    rng = np.random.default_rng(seed)
    bank = []
    for _ in range(count):
        width = rng.uniform(0.5, 3.0)
        center = rng.uniform(0.0, max(support_radius - width, 0.0))
        bank.append(RadialBump(center, width))
    return bank


class _CompositeTest:
    """f(w)/f'(w) = u sqrt(1 + 2u^2) built from the solution's own spline."""

    def __init__(self, spline, transform, cutoff):
        self.spline, self.transform, self.cutoff = spline, transform, cutoff

    def value(self, r):
        u = self.transform.f(self.spline(r))
        return u * np.sqrt(1.0 + 2.0 * u * u) * self.cutoff.value(r)

    def derivative(self, r):
        w = self.spline(r)
        u, fp, _ = self.transform.evaluate(w)
        du = fp * self.spline(r, 1)
        g = u * np.sqrt(1.0 + 2.0 * u * u)
        dg = (1.0 + 4.0 * u * u) / np.sqrt(1.0 + 2.0 * u * u) * du
        return dg * self.cutoff.value(r) + g * self.cutoff.derivative(r)


# weak residual --------------------------------------------------------------

def _radial_quadrature(grid: RadialGrid, order: int = 6):
    xg, wg = np.polynomial.legendre.leggauss(order)
    lo, hi = grid.r[:-1], grid.r[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    r = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    wt = (half[:, None] * wg[None, :]).ravel() * sphere_area(grid.dimension) * r ** (grid.dimension - 1)
    return r, wt


def _spline(grid: RadialGrid, field: np.ndarray) -> CubicSpline:
    # radial fields are even in r: zero slope at the origin
    return CubicSpline(grid.r, field, bc_type=((1, 0.0), "not-a-knot"))


def weak_form_terms(ctx, state: StatePair, test) -> np.ndarray:
    """Four integrals of each identity, rows (u, v), columns
    [(1+2u^2) u' phi', 2 |u'|^2 u phi, W u phi, -Q_u phi]."""
    grid = ctx.grid
    r, wt = _radial_quadrature(grid)
    tr = ctx.transform
    pot_w = np.interp(r, grid.r, ctx.W_field)
    pot_v = np.interp(r, grid.r, ctx.V_field)
    sw, sz = _spline(grid, state.w), _spline(grid, state.z)
    u, fpu, _ = tr.evaluate(sw(r))
    v, fpv, _ = tr.evaluate(sz(r))
    du = fpu * sw(r, 1)
    dv = fpv * sz(r, 1)
    qu, qv = ctx.q.grad(u, v)
    phi, dphi = test.value(r), test.derivative(r)
    rows = []
    for x, dx, pot, qx in ((u, du, pot_w, qu), (v, dv, pot_v, qv)):
        rows.append([
            math.fsum(wt * (1.0 + 2.0 * x * x) * dx * dphi),
            math.fsum(wt * 2.0 * dx * dx * x * phi),
            math.fsum(wt * pot * x * phi),
            -math.fsum(wt * qx * phi),
        ])
    return np.array(rows)


def _test_h1_norm(grid: RadialGrid, test) -> float:
    r, wt = _radial_quadrature(grid)
    return math.sqrt(math.fsum(wt * (test.value(r) ** 2 + test.derivative(r) ** 2)))


def weak_residual_original(ctx, state: StatePair, test_bank, with_composites: bool = True):
    """Weak-form defect of the original quasilinear system.

    Returns (relative, details): relative is the largest |sum of terms| /
    sum |terms| over the bank and both identities.  ``details`` also holds
    the largest defect divided by the test function's H^1 norm.
    """
    grid = ctx.grid
    if not isinstance(grid, RadialGrid):
        raise ConfigurationError("the weak-form check is implemented for radial grids")
    bank = list(test_bank)
    if with_composites:
        cutoff = RadialBump(0.0, 0.9 * grid.radius)
        bank.append(_CompositeTest(_spline(grid, state.w), ctx.transform, cutoff))
        bank.append(_CompositeTest(_spline(grid, state.z), ctx.transform, cutoff))
    rel, absn = 0.0, 0.0
    per_test = []
    for test in bank:
        terms = weak_form_terms(ctx, state, test)
        defect = np.abs(terms.sum(axis=1))
        scale = np.abs(terms).sum(axis=1)
        ratio = np.where(scale > 0, defect / np.where(scale > 0, scale, 1.0), 0.0)
        norm = _test_h1_norm(grid, test)
        rel = max(rel, float(ratio.max()))
        absn = max(absn, float(defect.max()) / norm if norm > 0 else 0.0)
        per_test.append(float(ratio.max()))
    return rel, {"max_defect_over_h1_norm": absn, "per_test_relative": per_test,
                 "test_count": len(bank)}


# penalisation ---------------------------------------------------------------

def _omega_extent(omega) -> float:
    return getattr(omega, "radius", None) or omega.half_width


def penalization_consistency(state: StatePair, transform: DualTransform, grid, omega,
                             epsilon: float, a: float) -> dict:
    """sup of |(f(w), f(z))| off Omega_eps, compared with a and with f^{-1}(a/2)."""
    extent = grid.radius if isinstance(grid, RadialGrid) else grid.half_width
    if _omega_extent(omega) / epsilon >= extent:
        raise ConfigurationError("Omega_eps reaches past the truncated domain")
    outside = ~omega.contains(epsilon * grid.points)
    u, v = map_back(transform, state)
    amp = np.sqrt(u * u + v * v)
    sup = float(np.max(amp[outside], initial=0.0))
    w_sup = float(max(np.max(np.abs(state.w[outside]), initial=0.0),
                      np.max(np.abs(state.z[outside]), initial=0.0)))
    threshold = transform.t_of_f(0.5 * a)
    return {"outside_sup": sup, "a": a, "ok": bool(sup < a),
            "outside_dual_sup": w_sup, "strict_threshold": threshold,
            "strict_ok": bool(w_sup < threshold)}


# decay ----------------------------------------------------------------------

def _fit_tail(x, y, tail_fraction):
    usable = y > 1e-14
    xs, ys = x[usable], y[usable]
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    count = int(math.floor(tail_fraction * xs.size))
    if count < 8:
        raise DecayFitError(f"only {count} usable tail nodes")
    xs, ly = xs[-count:], np.log(ys[-count:])
    slope, intercept = np.polyfit(xs, ly, 1)
    pred = intercept + slope * xs
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(intercept), float(slope), r2, count


def decay_fit(radii, u, v, epsilon: float, tail_fraction: float = 0.3,
              max_radius: float | None = None) -> dict:
    """Least-squares line of log u against |x| = eps * r over the outer tail.

    C1 = exp(intercept), C2 = -slope * eps (likewise C3, C4 for v).  Nodes
    with r > ``max_radius`` are dropped first: next to a Dirichlet wall the
    profile bends down to zero and is no longer the free-space tail.
    """
    if not 0 < tail_fraction < 0.5:
        raise ValueError("tail_fraction must lie in (0, 0.5)")
    radii = np.asarray(radii, dtype=float)
    keep = np.ones(radii.shape, dtype=bool) if max_radius is None else radii <= max_radius
    x = epsilon * radii[keep]
    iu, su, r2u, nu = _fit_tail(x, np.asarray(u, dtype=float)[keep], tail_fraction)
    iv, sv, r2v, nv = _fit_tail(x, np.asarray(v, dtype=float)[keep], tail_fraction)
    return {"C1": math.exp(iu), "C2": -su * epsilon, "C3": math.exp(iv), "C4": -sv * epsilon,
            "r2_u": r2u, "r2_v": r2v, "r2": min(r2u, r2v), "tail_nodes": min(nu, nv)}


def decay_curve_csv(radii, u, v) -> str:
    lines = ["r,log_u,log_v"]
    for r, a, b in zip(radii, u, v):
        if a > 1e-14 and b > 1e-14:
            lines.append(f"{float(r)!r},{math.log(a)!r},{math.log(b)!r}")
    return "\n".join(lines) + "\n"


# boundary maximum -------------------------------------------------------------

CONVENTIONS = ("scaled_domain", "growing_ball")


def boundary_radius(omega_radius: float, epsilon: float, convention: str) -> float:
    """Radius of Omega_eps: omega_radius/eps, or (1/eps)/eps for the growing ball."""
    if convention == "scaled_domain":
        return omega_radius / epsilon
    if convention == "growing_ball":
        return 1.0 / epsilon ** 2
    raise ValueError(f"unknown convention {convention!r}")


def boundary_max(grid, state: StatePair, radius: float):
    """max |(w, z)| over nodes within one spacing of the sphere |x| = radius."""
    extent = grid.radius if isinstance(grid, RadialGrid) else grid.half_width
    if radius >= extent:
        return None
    ring = np.abs(grid.radii - radius) <= grid.spacing * (1 + 1e-12)
    if not ring.any():
        return None
    return float(np.max(np.hypot(state.w[ring], state.z[ring])))


def boundary_max_sweep(results, grid, omega_radius: float, tolerance: float = 0.10) -> dict:
    """m_eps for each (eps, state), on both readings of Omega_eps.

    ``trend_ok`` is True when every available consecutive pair satisfies
    m_next <= (1 + tolerance) m_prev, None when fewer than two values exist.
    A state of None (failed solve) yields None in the series.
    """
    eps = [float(e) for e, _ in results]
    if len(eps) > 1 and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon values must be strictly decreasing")
    out = {"epsilon": eps}
    for conv in CONVENTIONS:
        series = [None if s is None else boundary_max(grid, s, boundary_radius(omega_radius, e, conv))
                  for e, s in results]
        vals = [(e, m) for e, m in zip(eps, series) if m is not None]
        if len(vals) < 2:
            trend = None
        else:
            trend = all(b[1] <= (1.0 + tolerance) * a[1] for a, b in zip(vals, vals[1:]))
        out[conv] = {"m_eps": series, "trend_ok": trend}
    return out


# report -----------------------------------------------------------------------

@dataclass
class VerificationReport:
    weak_residual_max: float
    outside_sup: float
    a_used: float
    decay_C1: float
    decay_C2: float
    decay_C3: float
    decay_C4: float
    decay_fit_r2: float
    m_eps_series: list = field(default_factory=list)
    positivity_ok: bool = False
    penalization_ok: bool = False
    strict_threshold_ok: bool = False
    weak_residual_ok: bool = False
    decay_ok: bool = False
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.positivity_ok and self.penalization_ok and self.weak_residual_ok
                    and self.decay_ok)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def positivity(transform: DualTransform, grid, state: StatePair) -> dict:
    u, v = map_back(transform, state)
    m = grid.interior
    return {"nonnegative": bool(np.all(u >= 0) and np.all(v >= 0)),
            "strictly_positive_interior": bool(np.all(u[m] > 0) and np.all(v[m] > 0)),
            "min_u": float(np.min(u)), "min_v": float(np.min(v))}


def verify_solution(ctx, state: StatePair, test_count: int = 16, seed: int = 0,
                    weak_tolerance: float = 1e-3, r2_min: float = 0.99,
                    tail_fraction: float = 0.3, wall_layer: float = 0.05) -> VerificationReport:
    """All single-epsilon checks bundled into one report."""
    grid, tr = ctx.grid, ctx.transform
    omega = ctx.h.omega
    pen = penalization_consistency(state, tr, grid, omega, ctx.epsilon, ctx.h.a)
    bank = random_test_bank(test_count - 2, 0.9 * grid.radius, seed)
    rel, weak_details = weak_residual_original(ctx, state, bank)
    u, v = map_back(tr, state)
    try:
        extent = grid.radius if isinstance(grid, RadialGrid) else grid.half_width
        fit = decay_fit(grid.radii, u, v, ctx.epsilon, tail_fraction,
                        max_radius=(1.0 - wall_layer) * extent)
        decay_ok = fit["r2"] >= r2_min and fit["C2"] > 0 and fit["C4"] > 0
    except DecayFitError as exc:
        fit = {"C1": float("nan"), "C2": float("nan"), "C3": float("nan"), "C4": float("nan"),
               "r2": float("nan"), "error": str(exc)}
        decay_ok = False
    pos = positivity(tr, grid, state)
    return VerificationReport(
        weak_residual_max=rel, outside_sup=pen["outside_sup"], a_used=ctx.h.a,
        decay_C1=fit["C1"], decay_C2=fit["C2"], decay_C3=fit["C3"], decay_C4=fit["C4"],
        decay_fit_r2=fit["r2"],
        positivity_ok=pos["nonnegative"] and pos["strictly_positive_interior"],
        penalization_ok=pen["ok"], strict_threshold_ok=pen["strict_ok"],
        weak_residual_ok=rel <= weak_tolerance, decay_ok=bool(decay_ok),
        details={"penalization": pen, "weak": weak_details, "decay": fit, "positivity": pos})
