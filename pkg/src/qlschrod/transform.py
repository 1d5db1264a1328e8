"""Change of variables u = f(w) used to regularise the quasilinear energy.

f solves f' = (1 + 2 f^2)^(-1/2), f(0) = 0, extended as an odd function.  Its
inverse has the closed form

    t(y) = y sqrt(1 + 2 y^2) / 2 + asinh(sqrt(2) y) / (2 sqrt(2)),

so f itself is obtained by inverting t(y) with a safeguarded Newton iteration.
Since t(y) is increasing and convex on [0, inf) and the starting guess
min(t, 2^(1/4) sqrt(t)) lies to the right of the root, the iteration decreases
monotonically onto the root.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

SQRT2 = np.sqrt(2.0)
FOURTH_ROOT_2 = 2.0 ** 0.25


class TransformDomainError(ValueError):
    """Raised for non-finite arguments."""


class TransformConvergenceError(RuntimeError):
    """Raised when neither Newton nor the bisection fallback converge."""


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise TransformDomainError("dual transform evaluated at a non-finite argument")


SERIES_CUTOFF = 1e-6


def _antiderivative(y: np.ndarray) -> np.ndarray:
    # y >= 0 only; the cubic series avoids asinh rounding on subnormals
    y = np.asarray(y, dtype=float)
    closed = 0.5 * y * np.sqrt(1.0 + 2.0 * y * y) + np.arcsinh(SQRT2 * y) / (2.0 * SQRT2)
    return np.where(y < SERIES_CUTOFF, y + y ** 3 / 3.0, closed)


@dataclass(frozen=True)
class DualTransform:
    """Evaluator for f, f', f'' and f^{-1}.

    ``newton_tolerance`` bounds the residual |t(f) - t| relative to max(1, |t|):
    an absolute bound is not representable in double precision once |t| is
    large.
    """

    newton_tolerance: float = 1e-12
    max_newton_iterations: int = 50
    large_argument_threshold: float = 1e8

    def __post_init__(self):
        if not self.newton_tolerance > 0:
            raise ValueError("newton_tolerance must be positive")
        if self.max_newton_iterations < 8:
            raise ValueError("max_newton_iterations must be at least 8")
        if not self.large_argument_threshold > 0:
            raise ValueError("large_argument_threshold must be positive")

    def t_of_f(self, y):
        """Inverse transform f^{-1}(y), exact closed form (odd in y)."""
        y = np.asarray(y, dtype=float)
        _check_finite(y)
        out = np.sign(y) * _antiderivative(np.abs(y))
        return out if out.ndim else float(out)

    def _seed(self, a: np.ndarray) -> np.ndarray:
        y0 = np.minimum(a, FOURTH_ROOT_2 * np.sqrt(a))
        big = a > self.large_argument_threshold
        if np.any(big):
            # t(y) = y^2/sqrt2 + 1/(4 sqrt2) + ln(2 sqrt2 y)/(2 sqrt2) + O(y^-2)
            ab = a[big]
            yb = FOURTH_ROOT_2 * np.sqrt(ab)
            y0[big] = np.sqrt(SQRT2 * ab - 0.25 - 0.5 * np.log(2.0 * SQRT2 * yb))
        return y0

    def _invert(self, a: np.ndarray) -> np.ndarray:
        y = self._seed(a)
        scale = np.maximum(1.0, a)
        tol = self.newton_tolerance * scale
        tiny = a < SERIES_CUTOFF
        y[tiny] = a[tiny] - a[tiny] ** 3 / 3.0
        active = ~tiny
        if not active.any():
            return y
        for _ in range(self.max_newton_iterations):
            ya = y[active]
            res = _antiderivative(ya) - a[active]
            step = res / np.sqrt(1.0 + 2.0 * ya * ya)
            ynew = np.maximum(ya - step, 0.0)
            done = (np.abs(res) <= tol[active]) | (ynew == ya)
            y[active] = ynew
            idx = np.flatnonzero(active)
            active[idx[done]] = False
            if not active.any():
                return y
        return self._bisect(a, y, active)

    def _bisect(self, a, y, active):
        # reached only if Newton stalls; bracket [0, seed] always contains the root
        lo = np.zeros(int(active.sum()))
        hi = np.maximum(self._seed(a[active]), 1e-300)
        target = a[active]
        for _ in range(2000):
            mid = 0.5 * (lo + hi)
            below = _antiderivative(mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.spacing(hi)):
                break
        else:
            raise TransformConvergenceError("bisection fallback did not converge")
        y[active] = 0.5 * (lo + hi)
        return y

    def f(self, t):
        """f(t): odd, increasing, |f(t)| <= min(|t|, 2^(1/4) sqrt|t|)."""
        t = np.asarray(t, dtype=float)
        _check_finite(t)
        flat = t.ravel()
        out = np.sign(flat) * self._invert(np.abs(flat))
        out = out.reshape(t.shape)
        return out if out.ndim else float(out)

    def f_prime(self, t):
        fv = np.asarray(self.f(t))
        out = 1.0 / np.sqrt(1.0 + 2.0 * fv * fv)
        return out if out.ndim else float(out)

    def f_second(self, t):
        fv = np.asarray(self.f(t))
        fp = 1.0 / np.sqrt(1.0 + 2.0 * fv * fv)
        out = -2.0 * fv * fp ** 4
        return out if out.ndim else float(out)

    def evaluate(self, t):
        """Return (f, f', f'') with a single inversion."""
        fv = np.asarray(self.f(t), dtype=float)
        fp = 1.0 / np.sqrt(1.0 + 2.0 * fv * fv)
        return fv, fp, -2.0 * fv * fp ** 4


def transform_table(transform: DualTransform, t_min: float, t_max: float, step: float) -> str:
    """CSV text with columns t, f, f_prime, f_second."""
    if step <= 0 or t_max < t_min:
        raise ValueError("need step > 0 and t_max >= t_min")
    count = int(np.floor((t_max - t_min) / step + 1e-9)) + 1
    t = t_min + step * np.arange(count)
    fv, fp, fpp = transform.evaluate(t)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "f", "f_prime", "f_second"])
    for row in zip(t, fv, fp, fpp):
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()
