"""Penalisation of the coupling outside a bounded region.

Outside the region the coupling Q is blended, through a C^1 cutoff of the
amplitude |(s, t)|, into the quadratic surrogate A (s^2 + t^2), where A is the
largest value of Q / (s^2 + t^2) on the annulus a <= |(s, t)| <= 5a.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .nonlinearity import HomogeneousQ


@dataclass(frozen=True)
class CutoffEta:
    """Cubic smoothstep: 1 on (-inf, a], 0 on [5a, inf), |eta'| <= 3/(8a)."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("cutoff radius a must be positive")

    def _tau(self, s):
        return np.clip((np.asarray(s, dtype=float) - self.a) / (4.0 * self.a), 0.0, 1.0)

    def __call__(self, s):
        tau = self._tau(s)
        out = 1.0 - 3.0 * tau ** 2 + 2.0 * tau ** 3
        return out if out.ndim else float(out)

    def prime(self, s):
        tau = self._tau(s)
        out = 6.0 * tau * (tau - 1.0) / (4.0 * self.a)
        return out if out.ndim else float(out)

    @property
    def slope_bound(self) -> float:
        return 3.0 / (8.0 * self.a)


def eta(s, a):
    return CutoffEta(a)(s)


def eta_prime(s, a):
    return CutoffEta(a).prime(s)


def angular_max(q: HomogeneousQ, grid_points: int = 4097) -> float:
    """max over phi in [0, pi/2] of Q(cos phi, sin phi), grid search + golden polish."""
    phi = np.linspace(0.0, 0.5 * np.pi, grid_points)
    vals = q.value(np.cos(phi), np.sin(phi))
    i = int(np.argmax(vals))
    best = float(vals[i])
    if 0 < i < grid_points - 1:
        res = minimize_scalar(lambda x: -q.value(np.cos(x), np.sin(x)),
                              bracket=(phi[i - 1], phi[i], phi[i + 1]), method="golden",
                              options={"xtol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def compute_A(q: HomogeneousQ, a: float) -> float:
    """max of Q(s,t)/(s^2+t^2) over a <= |(s,t)| <= 5a.

    Q vanishes off the open positive quadrant, so the max over the full annulus
    equals the max over its positive quarter and is never negative.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if q.is_zero:
        return 0.0
    g = angular_max(q)
    if g <= 0:
        return 0.0
    return (5.0 * a) ** (q.p - 2.0) * g


@dataclass(frozen=True)
class Ball:
    radius: float

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(np.atleast_2d(x), axis=-1) < self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.radius * factor)


@dataclass(frozen=True)
class Box:
    half_width: float

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all(np.abs(np.atleast_2d(x)) < self.half_width, axis=-1)

    def scaled(self, factor: float) -> "Box":
        return Box(self.half_width * factor)


@dataclass(frozen=True)
class PenalizedH:
    q: HomogeneousQ
    a: float
    omega: Ball | Box
    W0: float
    V0: float
    A: float = field(default=None)

    def __post_init__(self):
        if not (self.W0 > 0 and self.V0 > 0):
            raise ValueError("potential floors must be positive")
        if self.A is None:
            object.__setattr__(self, "A", compute_A(self.q, self.a))

    @property
    def eta(self) -> CutoffEta:
        return CutoffEta(self.a)

    @property
    def k(self) -> float:
        return 4.0 * self.q.p / (self.q.p - 2.0)

    @property
    def smallness_ok(self) -> bool:
        return self.A < 0.25 * min(self.W0, self.V0)

    def inside(self, x) -> np.ndarray:
        return self.omega.contains(x)

    # Q-hat on R^2 ------------------------------------------------------

    def qhat(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        r2 = s * s + t * t
        e = self.eta(np.sqrt(r2))
        return e * self.q.value(s, t) + (1.0 - e) * self.A * r2

    def qhat_grad(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        r2 = s * s + t * t
        r = np.sqrt(r2)
        e = self.eta(r)
        ep = self.eta.prime(r)
        qv = self.q.value(s, t)
        qs, qt = self.q.grad(s, t)
        # eta' vanishes for r <= a, so the division is safe where it matters
        coef = np.where(r > 0, ep * (qv - self.A * r2) / np.where(r > 0, r, 1.0), 0.0)
        hs = coef * s + e * qs + (1.0 - e) * 2.0 * self.A * s
        ht = coef * t + e * qt + (1.0 - e) * 2.0 * self.A * t
        return hs, ht

    # H(x, s, t) --------------------------------------------------------

    def value_masked(self, inside, s, t):
        inside = np.asarray(inside, dtype=bool)
        out = np.where(inside, self.q.value(s, t), self.qhat(s, t))
        return out if out.ndim else float(out)

    def grad_masked(self, inside, s, t):
        inside = np.asarray(inside, dtype=bool)
        qs, qt = self.q.grad(s, t)
        hs, ht = self.qhat_grad(s, t)
        gs = np.where(inside, qs, hs)
        gt = np.where(inside, qt, ht)
        if gs.ndim == 0:
            return float(gs), float(gt)
        return gs, gt

    def h_value(self, x, s, t):
        inside = self.inside(x)
        if np.ndim(s) == 0 and inside.size == 1:
            inside = inside[0]
        return self.value_masked(inside, s, t)

    def h_grad(self, x, s, t):
        inside = self.inside(x)
        if np.ndim(s) == 0 and inside.size == 1:
            inside = inside[0]
        return self.grad_masked(inside, s, t)

    def with_a(self, a: float) -> "PenalizedH":
        return PenalizedH(self.q, a, self.omega, self.W0, self.V0)


# bound verification -------------------------------------------------------

@dataclass
class BoundReport:
    sample_count: int
    a: float
    A: float
    k: float
    smallness_ok: bool
    violations: dict[str, int]
    max_excess: dict[str, float]
    examples: dict[str, list] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.smallness_ok and not any(self.violations.values())

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _amplitude_samples(rng, n, a, r_max_factor=40.0):
    r = np.exp(rng.uniform(np.log(1e-3 * a), np.log(r_max_factor * a), n))
    # half the samples in the positive quadrant, where Q is active
    phi = np.where(rng.random(n) < 0.5, rng.uniform(0, 0.5 * np.pi, n), rng.uniform(0, 2 * np.pi, n))
    return r * np.cos(phi), r * np.sin(phi)


def _h3_conditions(h: PenalizedH, s, t):
    hs, ht = h.qhat_grad(s, t)
    m = min(h.W0, h.V0)
    lhs = s * hs + t * ht
    rhs = (h.W0 * s * s + h.V0 * t * t) / h.k
    slack = 1e-12 * (1.0 + np.abs(rhs))
    first = lhs - rhs - slack
    # |H_s| <= (min/4) |s|, |H_t| <= (min/4) |t|
    second_s = np.abs(hs) - 0.25 * m * np.abs(s) - 1e-12 * (1.0 + np.abs(hs))
    second_t = np.abs(ht) - 0.25 * m * np.abs(t) - 1e-12 * (1.0 + np.abs(ht))
    return first, np.maximum(second_s, second_t), hs, ht


def h3_sampled_ok(h: PenalizedH, sample_count: int = 4000, seed: int = 12345) -> bool:
    rng = np.random.default_rng(seed)
    s, t = _amplitude_samples(rng, sample_count, h.a)
    first, second, _, _ = _h3_conditions(h, s, t)
    return bool(np.all(first <= 0) and np.all(second <= 0))


def choose_a(q: HomogeneousQ, W0: float, V0: float, omega=None, max_halvings: int = 60) -> float:
    """Largest a = 2^-j meeting A < min(W0,V0)/4 and the sampled exterior bounds, halved once."""
    if not (W0 > 0 and V0 > 0):
        raise ValueError("W0 and V0 must be positive")
    omega = omega if omega is not None else Ball(1.0)
    for j in range(max_halvings + 1):
        a = 2.0 ** (-j)
        h = PenalizedH(q, a, omega, W0, V0)
        if h.smallness_ok and h3_sampled_ok(h):
            return 0.5 * a
    raise RuntimeError("no admissible cutoff radius found on the dyadic grid")


def verify_H_bounds(h: PenalizedH, sample_count: int = 10_000, seed: int = 0,
                    keep_examples: int = 5) -> BoundReport:
    """Sampled check of the Euler identity inside Omega and the exterior bounds outside."""
    if sample_count < 1000:
        raise ValueError("sample_count must be at least 1000")
    rng = np.random.default_rng(seed)
    n_in = sample_count // 2
    n_out = sample_count - n_in
    p = h.q.p
    violations: dict[str, int] = {}
    excess: dict[str, float] = {}
    examples: dict[str, list] = {}

    def record(name, bad, amount, pts):
        violations[name] = int(np.count_nonzero(bad))
        excess[name] = float(np.max(amount, initial=-np.inf)) if np.size(amount) else 0.0
        examples[name] = [list(map(float, row)) for row in np.asarray(pts)[bad][:keep_examples]]

    # inside Omega: p H = s H_s + t H_t
    s, t = _amplitude_samples(rng, n_in, h.a, r_max_factor=400.0)
    inside = np.ones(n_in, dtype=bool)
    hv = h.value_masked(inside, s, t)
    gs, gt = h.grad_masked(inside, s, t)
    scale = np.abs(p * hv) + np.abs(s * gs) + np.abs(t * gt)
    dev = np.abs(p * hv - s * gs - t * gt)
    rel = np.where(scale > 0, dev / np.where(scale > 0, scale, 1.0), 0.0)
    record("H1", rel > 1e-9, rel, np.column_stack([s, t]))

    # outside Omega
    s, t = _amplitude_samples(rng, n_out, h.a)
    outside = np.zeros(n_out, dtype=bool)
    hv = h.value_masked(outside, s, t)
    gs, gt = h.grad_masked(outside, s, t)
    euler = s * gs + t * gt
    h2 = 2.0 * hv - euler - 1e-12 * (1.0 + np.abs(euler))
    pts = np.column_stack([s, t])
    record("H2", h2 > 0, h2, pts)
    first, second, _, _ = _h3_conditions(h, s, t)
    record("H3_energy", first > 0, first, pts)
    record("H3_slope", second > 0, second, pts)
    # literal |H_s|/a <= min/4 form, only bounded on the cutoff annulus
    ring = np.hypot(s, t) <= 5.0 * h.a
    lit = np.maximum(np.abs(gs), np.abs(gt)) / h.a - 0.25 * min(h.W0, h.V0)
    record("H3_over_a_annulus", ring & (lit > 1e-12), np.where(ring, lit, -np.inf), pts)

    return BoundReport(sample_count, h.a, h.A, h.k, h.smallness_ok, violations, excess, examples)


@dataclass
class SeamReport:
    max_value_jump: float
    max_derivative_mismatch: float
    max_grad_mismatch: float

    def ok(self, tol: float) -> bool:
        return max(self.max_value_jump, self.max_derivative_mismatch, self.max_grad_mismatch) <= tol


def seam_check(h: PenalizedH, angles: int = 64, rel_step: float = 1e-7) -> SeamReport:
    """Two-sided finite differences of Q-hat across |(s,t)| = a and 5a."""
    phi = np.linspace(0.02, 0.5 * np.pi - 0.02, angles)
    jumps, dmis, gmis = [], [], []
    for r0 in (h.a, 5.0 * h.a):
        d = rel_step * r0
        c, sn = np.cos(phi), np.sin(phi)
        f0 = h.qhat(r0 * c, r0 * sn)
        fm = h.qhat((r0 - d) * c, (r0 - d) * sn)
        fp = h.qhat((r0 + d) * c, (r0 + d) * sn)
        left = (f0 - fm) / d
        right = (fp - f0) / d
        # 2 A r is the size of the surrogate's radial slope at the seam
        scale = np.maximum(np.maximum(np.abs(left), np.abs(right)), 2.0 * h.A * r0) + 1e-300
        gs, gt = h.qhat_grad(r0 * c, r0 * sn)
        radial = gs * c + gt * sn
        jumps.append(np.max(np.abs(fp - fm) / (scale * r0)))
        dmis.append(np.max(np.abs(right - left) / scale))
        gmis.append(np.max(np.abs(radial - 0.5 * (left + right)) / scale))
    return SeamReport(float(max(jumps)), float(max(dmis)), float(max(gmis)))
