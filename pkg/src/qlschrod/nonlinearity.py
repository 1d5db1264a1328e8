"""p-homogeneous coupling nonlinearity Q(u, v) and its hypothesis checker.

Q(u, v) = a u^p + sum_i b_i u^alpha_i v^beta_i + c v^p on the open positive
quadrant, and Q = 0 whenever u <= 0 or v <= 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class ContinuityWarning(UserWarning):
    """Pure-power terms make the truncated Q jump across the quadrant axes."""


@dataclass(frozen=True)
class MixedTerm:
    b: float
    alpha: float
    beta: float


def critical_exponent(dimension: int) -> float:
    if dimension < 3:
        raise ValueError("Sobolev exponent 2N/(N-2) requires N >= 3")
    return 2.0 * dimension / (dimension - 2.0)


@dataclass(frozen=True)
class HomogeneousQ:
    p: float
    a: float = 0.0
    c: float = 0.0
    mixed: tuple[MixedTerm, ...] = ()
    dimension: int = 3

    def __post_init__(self):
        object.__setattr__(self, "mixed", tuple(
            m if isinstance(m, MixedTerm) else MixedTerm(*m) for m in self.mixed))
        coeffs = [self.a, self.c, self.p] + [x for m in self.mixed for x in (m.b, m.alpha, m.beta)]
        if not all(np.isfinite(coeffs)):
            raise ValueError("nonlinearity coefficients must be finite")
        for m in self.mixed:
            if m.alpha < 1 or m.beta < 1:
                raise ValueError(f"mixed term exponents must be >= 1, got ({m.alpha}, {m.beta})")
            if abs(m.alpha + m.beta - self.p) > 1e-12 * max(1.0, self.p):
                raise ValueError(f"mixed term exponents must sum to p={self.p}")
        if self.a == 0 and self.c == 0 and all(m.b == 0 for m in self.mixed):
            raise ValueError("at least one coefficient must be nonzero")
        if self.a != 0 or self.c != 0:
            warnings.warn("pure-power terms are discontinuous on the quadrant axes "
                          "after truncation to u, v > 0", ContinuityWarning, stacklevel=2)

    @classmethod
    def product(cls, alpha=3.0, beta=3.0, b=1.0, dimension=3):
        """b u^alpha v^beta, the default coupling (u^3 v^3)."""
        return cls(p=alpha + beta, mixed=(MixedTerm(b, alpha, beta),), dimension=dimension)

    @classmethod
    def from_dict(cls, d: dict, dimension: int = 3):
        mixed = tuple(MixedTerm(float(m["b"]), float(m["alpha"]), float(m["beta"]))
                      for m in d.get("mixed", []))
        return cls(p=float(d["p"]), a=float(d.get("a", 0.0)), c=float(d.get("c", 0.0)),
                   mixed=mixed, dimension=dimension)

    def to_dict(self) -> dict:
        return {"p": self.p, "a": self.a, "c": self.c,
                "mixed": [{"b": m.b, "alpha": m.alpha, "beta": m.beta} for m in self.mixed]}

    def scaled(self, factor: float) -> "HomogeneousQ":
        if factor == 0:
            return HomogeneousQ.zero(self.p, self.dimension)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ContinuityWarning)
            return HomogeneousQ(self.p, self.a * factor, self.c * factor,
                                tuple(MixedTerm(m.b * factor, m.alpha, m.beta) for m in self.mixed),
                                self.dimension)

    @classmethod
    def zero(cls, p=6.0, dimension=3):
        """Identically vanishing Q; bypasses the nonzero-coefficient invariant."""
        obj = object.__new__(cls)
        for name, val in (("p", p), ("a", 0.0), ("c", 0.0), ("mixed", ()), ("dimension", dimension)):
            object.__setattr__(obj, name, val)
        return obj

    @property
    def is_zero(self) -> bool:
        return self.a == 0 and self.c == 0 and all(m.b == 0 for m in self.mixed)

    # evaluation ---------------------------------------------------------

    def _logs(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        u, v = np.broadcast_arrays(u, v)
        pos = (u > 0) & (v > 0)
        lu = np.log(np.where(pos, u, 1.0))
        lv = np.log(np.where(pos, v, 1.0))
        return pos, lu, lv

    def value(self, u, v):
        pos, lu, lv = self._logs(u, v)
        out = self.a * np.exp(self.p * lu) + self.c * np.exp(self.p * lv)
        for m in self.mixed:
            out = out + m.b * np.exp(m.alpha * lu + m.beta * lv)
        out = np.where(pos, out, 0.0)
        return out if out.ndim else float(out)

    def grad(self, u, v):
        pos, lu, lv = self._logs(u, v)
        p = self.p
        qu = p * self.a * np.exp((p - 1) * lu)
        qv = p * self.c * np.exp((p - 1) * lv)
        for m in self.mixed:
            qu = qu + m.b * m.alpha * np.exp((m.alpha - 1) * lu + m.beta * lv)
            qv = qv + m.b * m.beta * np.exp(m.alpha * lu + (m.beta - 1) * lv)
        qu = np.where(pos, qu, 0.0)
        qv = np.where(pos, qv, 0.0)
        if qu.ndim == 0:
            return float(qu), float(qv)
        return qu, qv


def q_value(q: HomogeneousQ, u, v):
    return q.value(u, v)


def q_grad(q: HomogeneousQ, u, v):
    return q.grad(u, v)


@dataclass
class HypothesisReport:
    results: dict[str, bool]
    details: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.results.values())

    def to_dict(self):
        return {"ok": self.ok, "results": dict(self.results), "details": dict(self.details)}


def check_hypotheses(q: HomogeneousQ, sample_count: int = 1000, seed: int = 0) -> HypothesisReport:
    """Sample-based check of the growth/sign/homogeneity hypotheses on Q.

    Keys: Q0 (range of p and homogeneity), Q1 (gradient growth), Q2, Q3 (axis
    derivatives), Q4 (positivity), Q5 (monotonicity), euler (p Q = u Q_u + v Q_v).
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    rng = np.random.default_rng(seed)
    u = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), sample_count))
    v = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), sample_count))
    t = rng.uniform(0.0, 1e3, sample_count)
    t[t == 0] = 1e3

    results: dict[str, bool] = {}
    details: dict[str, float] = {}

    two_star = critical_exponent(q.dimension)
    in_range = 4.0 < q.p < 2.0 * two_star
    qv = q.value(u, v)
    with np.errstate(over="ignore"):
        scaled = q.value(t * u, t * v)
        expected = t ** q.p * qv
    fin = np.isfinite(scaled) & np.isfinite(expected)
    hom_err = np.abs(scaled - expected)[fin] / (1.0 + np.abs(expected[fin]))
    details["homogeneity_max_rel"] = float(hom_err.max(initial=0.0))
    details["p_upper_bound"] = 2.0 * two_star
    results["Q0"] = bool(in_range and details["homogeneity_max_rel"] <= 1e-10)

    qu, qvv = q.grad(u, v)
    # on the unit circle |grad Q| is bounded, so homogeneity gives a global C
    phi = np.linspace(1e-6, np.pi / 2 - 1e-6, 2001)
    cu, cv = q.grad(np.cos(phi), np.sin(phi))
    denom = np.cos(phi) ** (q.p - 1) + np.sin(phi) ** (q.p - 1)
    growth_const = float(np.max((np.abs(cu) + np.abs(cv)) / denom))
    details["Q1_constant"] = growth_const
    lhs = np.abs(qu) + np.abs(qvv)
    rhs = growth_const * (u ** (q.p - 1) + v ** (q.p - 1))
    results["Q1"] = bool(np.isfinite(growth_const) and np.all(lhs <= rhs * (1 + 1e-9) + 1e-300))

    # axis derivatives, as one-sided limits into the open quadrant
    d = 1e-9
    qu01 = q.grad(d, 1.0)[0]
    qv10 = q.grad(1.0, d)[1]
    qu10 = q.grad(1.0, d)[0]
    qv01 = q.grad(d, 1.0)[1]
    axis_tol = 1e-6
    details.update({"Qu(0,1)": qu01, "Qv(1,0)": qv10, "Qu(1,0)": qu10, "Qv(0,1)": qv01})
    results["Q2"] = bool(abs(qu01) <= axis_tol and abs(qv10) <= axis_tol)
    results["Q3"] = bool(abs(qu10) <= axis_tol and abs(qv01) <= axis_tol)

    results["Q4"] = bool(np.all(qv > 0))
    results["Q5"] = bool(np.all(qu >= 0) and np.all(qvv >= 0))

    euler = np.abs(q.p * qv - u * qu - v * qvv)
    details["euler_max_residual"] = float(np.max(euler / (1.0 + np.abs(q.p * qv))))
    results["euler"] = bool(np.all(euler <= 1e-10 * (1.0 + np.abs(q.p * qv))))
    return HypothesisReport(results, details)
