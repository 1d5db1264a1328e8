"""Elastic-string mountain-pass search and Newton polish for Phi_eps.

A discrete path of ``path_nodes`` states joins 0 to an endpoint with negative
energy.  Every outer iteration moves the highest node downhill along the
preconditioned gradient (Armijo backtracking on Phi) and pulls its two
neighbours back onto the midpoints of their own neighbours.  Moving the top
node downhill slides it off the ridge along the path, so two safeguards keep
the ridge resolved: a segment whose midpoint is higher than every node gets
that midpoint inserted (the lowest node elsewhere is dropped), and if the
gradient at the maximum stops shrinking the path is rebuilt with all interior
nodes packed around the maximum.  The candidate is then sharpened by damped
Newton on phi_grad = 0.

Descent and Newton work in the X inner product
    <g, h>_X = int grad g . grad h + W g h
whose Gram matrix on the free nodes is ``K + diag(weights W)``; the
preconditioned direction is its Riesz representative of the derivative.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import RadialGrid, StatePair
from .functional import FunctionalContext, rescale_to_sigma


class GeometryFailure(RuntimeError):
    """The mountain-pass geometry could not be realised on this configuration."""


POLISH_MODES = ("none", "damped_newton", "nonlinear_cg")


@dataclass(frozen=True)
class SolverConfig:
    path_nodes: int = 17
    descent_step: float = 1.0
    grad_tolerance: float = 1e-8
    max_outer_iterations: int = 4000
    polish: str = "damped_newton"
    rho: float = 1.0
    seed: int = 0
    mp_tolerance: float = 1e-3
    refine_patience: int = 30
    max_polish_iterations: int = 60
    geometry_samples: int = 64
    bump_fraction: float = 0.5

    def __post_init__(self):
        if self.path_nodes < 9 or self.path_nodes % 2 == 0:
            raise ValueError("path_nodes must be odd and at least 9")
        if not self.descent_step > 0:
            raise ValueError("descent_step must be positive")
        if not self.grad_tolerance > 0 or not self.mp_tolerance > 0:
            raise ValueError("tolerances must be positive")
        if self.polish not in POLISH_MODES:
            raise ValueError(f"polish must be one of {POLISH_MODES}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.bump_fraction <= 1:
            raise ValueError("bump_fraction must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MPResult:
    state: StatePair
    energy: float
    grad_norm: float
    alpha_estimate: float
    iterations: int
    converged: bool
    status: str
    trace: list = field(default_factory=list)
    path_history: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"energy": self.energy, "grad_norm": self.grad_norm,
                "alpha_estimate": self.alpha_estimate, "iterations": self.iterations,
                "converged": self.converged, "status": self.status,
                "path_history": self.path_history, "flags": self.flags}


def trace_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stage", "iteration", "max_node_energy", "grad_norm"])
    for row in trace:
        writer.writerow([row[0], row[1], repr(float(row[2])), repr(float(row[3]))])
    return buf.getvalue()


# X-inner-product preconditioner -----------------------------------------

class _Preconditioner:
    def __init__(self, ctx: FunctionalContext):
        g = ctx.grid
        m = g.interior
        self.mask = m
        K = g.stiffness[m][:, m]
        wt = g.weights[m]
        block_w = (K + sp.diags(wt * ctx.W_field[m])).tocsc()
        block_z = (K + sp.diags(wt * ctx.V_field[m])).tocsc()
        self._lu_w = spla.splu(block_w)
        self._lu_z = spla.splu(block_z)
        self.block_w, self.block_z = block_w, block_z

    def solve(self, G: StatePair) -> StatePair:
        m = self.mask
        out_w = np.zeros_like(G.w)
        out_z = np.zeros_like(G.z)
        out_w[m] = self._lu_w.solve(G.w[m])
        out_z[m] = self._lu_z.solve(G.z[m])
        return StatePair(out_w, out_z)

    def apply(self, d: StatePair) -> StatePair:
        m = self.mask
        out_w = np.zeros_like(d.w)
        out_z = np.zeros_like(d.z)
        out_w[m] = self.block_w @ d.w[m]
        out_z[m] = self.block_z @ d.z[m]
        return StatePair(out_w, out_z)


def _weak(ctx: FunctionalContext, state: StatePair) -> StatePair:
    return StatePair.from_flat(ctx.weak_gradient(state))


def _dot(a: StatePair, b: StatePair) -> float:
    return float(a.w @ b.w + a.z @ b.z)


# endpoint -----------------------------------------------------------------

def bump_profile(grid, radius: float) -> np.ndarray:
    """exp(1 - 1/(1 - (|x|/radius)^2)) inside the ball, 0 outside (peak 1)."""
    r = grid.radii
    s = np.clip(r / radius, 0.0, 1.0)
    out = np.zeros_like(r)
    m = s < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def endpoint_bump_radius(ctx: FunctionalContext, fraction: float = 0.5) -> float:
    """Radius of the endpoint bump: a fraction of the inscribed radius of Omega_eps.

    The bump is centred at the origin, so it needs Omega to contain a ball
    around 0; the radius is also capped by the grid's own extent.
    """
    omega = ctx.h.omega
    extent = getattr(omega, "radius", None)
    if extent is None:
        extent = omega.half_width
    inscribed = extent / ctx.epsilon
    grid_extent = ctx.grid.radius if isinstance(ctx.grid, RadialGrid) else ctx.grid.half_width
    return fraction * min(inscribed, grid_extent)


def construct_endpoint(ctx: FunctionalContext, fraction: float = 0.5,
                       target: float = -1.0, max_exponent: int = 60):
    """Return (endpoint, info): t (phi, phi) with Phi < target, t found by doubling."""
    if not bool(ctx.h.omega.contains(np.zeros((1, ctx.grid.points.shape[1])))[0]):
        raise GeometryFailure("Omega must contain the origin to host the endpoint bump")
    radius = endpoint_bump_radius(ctx, fraction)
    phi = bump_profile(ctx.grid, radius)
    resolved = int(np.count_nonzero(phi > 0))
    if resolved < 8:
        raise GeometryFailure(f"endpoint bump resolved by only {resolved} nodes")
    base = StatePair(phi, phi.copy())
    t = 1.0
    for exponent in range(max_exponent + 1):
        t = 2.0 ** exponent
        e = base.scaled(t)
        value = ctx.phi(e)
        if value < target:
            return e, {"t_star": t, "phi_endpoint": value, "psi_endpoint": ctx.psi(e),
                       "bump_radius": radius, "bump_nodes": resolved}
    raise GeometryFailure(f"Phi stayed >= {target} up to t = 2^{max_exponent}")


# geometry -----------------------------------------------------------------

def _random_state(grid, rng) -> StatePair:
    r = grid.radii
    scale = float(np.max(r))
    fields = []
    for _ in range(2):
        f = np.zeros(grid.size)
        for _ in range(int(rng.integers(1, 4))):
            if grid.points.shape[1] > 1 and not isinstance(grid, RadialGrid):
                c = rng.uniform(-0.4 * scale, 0.4 * scale, grid.points.shape[1])
                d2 = np.sum((grid.points - c) ** 2, axis=1)
            else:
                d2 = (r - rng.uniform(0.0, 0.4 * scale)) ** 2
            width = rng.uniform(0.05, 0.25) * scale
            f += rng.uniform(0.2, 1.0) * np.exp(-d2 / width ** 2)
        f[~grid.interior] = 0.0
        fields.append(f)
    return StatePair(*fields)


def check_geometry(ctx: FunctionalContext, rho: float, sample_count: int = 64,
                   seed: int = 0, directions=()) -> float:
    """min of Phi over random states rescaled onto Psi = rho^2.

    ``directions`` adds explicit states (for instance the endpoint bump) to the
    random sample.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    rng = np.random.default_rng(seed)
    samples = [_random_state(ctx.grid, rng) for _ in range(sample_count)]
    samples.extend(directions)
    values = [ctx.phi(rescale_to_sigma(ctx, s, rho)) for s in samples]
    return float(min(values))


# elastic string -------------------------------------------------------------

def _linear_path(endpoint: StatePair, m: int):
    return [endpoint.scaled(i / (m - 1)) for i in range(m)]


def _packed_path(path, j: int, m: int):
    """New path 0, [segment x_{j-1} -> x_j -> x_{j+1}], endpoint with m nodes."""
    inner = m - 2
    half = (inner - 1) // 2
    seg = []
    a, b, c = path[j - 1], path[j], path[j + 1]
    for k in range(half):
        s = k / half
        seg.append(a.scaled(1.0 - s) + b.scaled(s))
    for k in range(half + 1):
        s = k / half
        seg.append(b.scaled(1.0 - s) + c.scaled(s))
    return [path[0]] + seg + [path[-1]]


def _insert_midpoint(path, energies, k, mid, e_mid):
    """Put ``mid`` between nodes k and k+1 and drop the lowest interior node
    away from the new one, keeping the node count fixed."""
    path = path[: k + 1] + [mid] + path[k + 1:]
    energies = np.concatenate([energies[: k + 1], [e_mid], energies[k + 1:]])
    candidates = [i for i in range(1, len(path) - 1) if abs(i - (k + 1)) > 1]
    drop = min(candidates, key=lambda i: energies[i])
    del path[drop]
    return path, np.delete(energies, drop)


def run_mountain_pass(ctx: FunctionalContext, config: SolverConfig, endpoint: StatePair | None = None,
                      path=None, alpha_estimate: float = float("nan")) -> MPResult:
    """Elastic-string descent; returns the highest path node as the candidate."""
    pre = _Preconditioner(ctx)
    m = config.path_nodes
    history = {"refinements": 0, "armijo_failures": 0, "midpoint_insertions": 0}
    if path is None:
        if endpoint is None:
            endpoint, info = construct_endpoint(ctx, config.bump_fraction)
            history.update(info)
        path = _linear_path(endpoint, m)
    else:
        path = list(path)
        m = len(path)
    energies = np.array([ctx.phi(x) for x in path])
    if energies[-1] > 0:
        raise GeometryFailure("path endpoint has positive energy")
    trace = []
    step = config.descent_step
    best_gn = math.inf
    since_best = 0
    it = 0
    gn = math.inf
    while True:
        # the ridge may fall between two nodes once they slide down both sides
        mids = [(path[k] + path[k + 1]).scaled(0.5) for k in range(m - 1)]
        e_mids = np.array([ctx.phi(y) for y in mids])
        k = int(np.argmax(e_mids))
        if e_mids[k] > energies.max():
            path, energies = _insert_midpoint(path, energies, k, mids[k], e_mids[k])
            history["midpoint_insertions"] += 1
        j = int(np.argmax(energies))
        if j == 0 or j == m - 1:
            raise GeometryFailure(f"path maximum escaped to node {j}")
        x = path[j]
        G = _weak(ctx, x)
        gn = ctx.grad_norm(ctx.phi_grad(x))
        trace.append(("mp", it, energies[j], gn))
        if gn <= config.mp_tolerance:
            if not energies[j] > 0:
                raise GeometryFailure("path collapsed onto the trivial critical point")
            converged = True
            break
        if it >= config.max_outer_iterations:
            converged = False
            break
        if gn < 0.7 * best_gn:
            best_gn, since_best = gn, 0
        else:
            since_best += 1
        if since_best >= config.refine_patience:
            path = _packed_path(path, j, m)
            energies = np.array([ctx.phi(y) for y in path])
            history["refinements"] += 1
            best_gn, since_best = math.inf, 0
            it += 1
            continue
        d = pre.solve(G).scaled(-1.0)
        slope = _dot(G, d)
        s = step
        e0 = energies[j]
        for _ in range(50):
            trial = x + d.scaled(s)
            e1 = ctx.phi(trial)
            if e1 <= e0 + 1e-4 * s * slope:
                break
            s *= 0.5
        else:
            history["armijo_failures"] += 1
            trial, e1 = x, e0
        step = min(2.0 * s, config.descent_step)
        path[j] = trial
        energies[j] = e1
        if j - 1 >= 1:
            path[j - 1] = (path[j - 2] + path[j]).scaled(0.5)
            energies[j - 1] = ctx.phi(path[j - 1])
        if j + 1 <= m - 2:
            path[j + 1] = (path[j] + path[j + 2]).scaled(0.5)
            energies[j + 1] = ctx.phi(path[j + 1])
        it += 1
    j = int(np.argmax(energies))
    history["max_index"] = j
    status = "converged" if converged else "max_iterations"
    return MPResult(path[j], float(energies[j]), gn, alpha_estimate, it, converged, status,
                    trace, history)


# polish -------------------------------------------------------------------

def _free(ctx, state: StatePair) -> np.ndarray:
    m = ctx.grid.interior
    return np.concatenate([state.w[m], state.z[m]])


def _embed(ctx, vec: np.ndarray) -> StatePair:
    m = ctx.grid.interior
    k = int(m.sum())
    w = np.zeros(ctx.grid.size)
    z = np.zeros(ctx.grid.size)
    w[m] = vec[:k]
    z[m] = vec[k:]
    return StatePair(w, z)


def polish(ctx: FunctionalContext, state: StatePair, config: SolverConfig,
           alpha_estimate: float = float("nan"), trace=None) -> MPResult:
    """Drive phi_grad to zero from a mountain-pass candidate.

    Steps are accepted when they reduce the gradient norm and keep Phi away
    from 0 (the trivial critical point).
    """
    trace = [] if trace is None else trace
    flags = {"trivial_state": False, "fallback_steps": 0, "stagnated": False}
    gn = ctx.grad_norm(ctx.phi_grad(state))
    energy = ctx.phi(state)
    if not math.isfinite(gn):
        raise ValueError("polish needs a finite gradient norm")
    if not np.any(state.w) and not np.any(state.z):
        flags["trivial_state"] = True
        return MPResult(state, energy, gn, alpha_estimate, 0, False, "trivial_state",
                        trace, flags=flags)
    floor = 0.5 * energy if energy > 0 else 0.0
    gn0 = gn
    it = 0
    if config.polish == "none" or gn <= config.grad_tolerance:
        return MPResult(state, energy, gn, alpha_estimate, 0, gn <= config.grad_tolerance,
                        "converged" if gn <= config.grad_tolerance else "not_polished", trace,
                        flags=flags)
    pre = _Preconditioner(ctx)
    prev_dir = None
    prev_res = None
    while it < config.max_polish_iterations and gn > config.grad_tolerance:
        F = _free(ctx, _weak(ctx, state))
        J = ctx.jacobian(state)
        if config.polish == "damped_newton":
            try:
                delta = spla.spsolve(J, -F)
                if not np.all(np.isfinite(delta)):
                    raise np.linalg.LinAlgError("non-finite Newton step")
            except (RuntimeError, np.linalg.LinAlgError):
                flags["fallback_steps"] += 1
                delta = -(J.T @ F)
        else:
            # Polak-Ribiere CG on m(x) = 1/2 F^T P^-1 F, gradient J P^-1 F
            PF = _free(ctx, pre.solve(_embed(ctx, F)))
            grad_m = J @ PF
            res = _free(ctx, pre.solve(_embed(ctx, grad_m)))
            if prev_dir is None:
                delta = -res
            else:
                beta = max(0.0, float(grad_m @ (res - prev_res)) / float(prev_grad @ prev_res))
                delta = -res + beta * prev_dir
                if float(delta @ grad_m) >= 0:
                    delta = -res
            prev_dir, prev_res, prev_grad = delta, res, grad_m
            # minimiser of the quadratic model of m along delta
            Jd = J @ delta
            curv = float(Jd @ _free(ctx, pre.solve(_embed(ctx, Jd))))
            merit0 = 0.5 * float(F @ PF)
        s = 1.0 if config.polish == "damped_newton" else -float(grad_m @ delta) / curv
        accepted = False
        for _ in range(40):
            trial = state + _embed(ctx, s * delta)
            try:
                tgn = ctx.grad_norm(ctx.phi_grad(trial))
                te = ctx.phi(trial)
                if config.polish == "damped_newton":
                    better = tgn < gn
                else:
                    TF = _free(ctx, _weak(ctx, trial))
                    better = 0.5 * float(TF @ _free(ctx, pre.solve(_embed(ctx, TF)))) < merit0
            except ValueError:
                s *= 0.5
                continue
            if better and te > floor:
                accepted = True
                break
            s *= 0.5
        it += 1
        if not accepted:
            flags["stagnated"] = True
            break
        state, gn, energy = trial, tgn, te
        trace.append(("polish", it, energy, gn))
    converged = gn <= config.grad_tolerance
    if not converged and gn > 1e-2 * gn0:
        flags["stagnated"] = True
    status = "converged" if converged else ("stagnated" if flags["stagnated"] else "max_iterations")
    return MPResult(state, energy, gn, alpha_estimate, it, converged, status, trace, flags=flags)


def clamp_negative(ctx: FunctionalContext, state: StatePair, rel: float = 1e-10):
    """Zero out negative node values; report those below -rel * scale."""
    scale = max(float(np.max(np.abs(state.w))), float(np.max(np.abs(state.z))), 1e-300)
    worst = min(float(np.min(state.w)), float(np.min(state.z)), 0.0)
    significant = int(np.count_nonzero(state.w < -rel * scale) + np.count_nonzero(state.z < -rel * scale))
    clamped = StatePair(np.maximum(state.w, 0.0), np.maximum(state.z, 0.0))
    report = {"clamped_nodes": significant, "most_negative": worst, "scale": scale,
              "positivity_ok": significant == 0}
    return clamped, report


def solve(ctx: FunctionalContext, config: SolverConfig) -> MPResult:
    """Endpoint, geometry estimate, elastic string, polish and positivity clamp."""
    endpoint, info = construct_endpoint(ctx, config.bump_fraction)
    base = endpoint.scaled(1.0 / info["t_star"])
    alpha = check_geometry(ctx, config.rho, config.geometry_samples, config.seed, directions=[base])
    mp = run_mountain_pass(ctx, config, endpoint=endpoint, alpha_estimate=alpha)
    mp.path_history.update(info)
    mp.path_history["rho"] = config.rho
    trace = list(mp.trace)
    if not mp.converged:
        mp.trace = trace
        return mp
    final = polish(ctx, mp.state, config, alpha_estimate=alpha, trace=trace)
    state, pos = clamp_negative(ctx, final.state)
    gn = ctx.grad_norm(ctx.phi_grad(state))
    energy = ctx.phi(state)
    converged = gn <= config.grad_tolerance
    flags = dict(final.flags)
    flags.update(pos)
    flags["mp_iterations"] = mp.iterations
    flags["mp_grad_norm"] = mp.grad_norm
    status = "converged" if converged else final.status
    return MPResult(state, energy, gn, alpha, mp.iterations + final.iterations, converged, status,
                    trace, mp.path_history, flags)
