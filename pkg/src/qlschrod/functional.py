"""Penalised energy Phi_eps in the dual variables (w, z), its gradient and residuals.

    Phi(w, z) = 1/2 int |grad w|^2 + |grad z|^2 + W(eps x) f(w)^2 + V(eps x) f(z)^2
                - int H(eps x, f(w), f(z))

``phi_grad`` returns the L^2(weights) representative of the derivative, which
is the node-wise strong form

    -Lap w + W f(w) f'(w) - H_s(eps x, f(w), f(z)) f'(w)

(and likewise for z).  With the finite-volume grids this is the exact gradient
of the discrete energy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .discretization import PotentialSpec, StatePair
from .nonlinearity import HomogeneousQ
from .penalization import PenalizedH
from .transform import DualTransform


class FunctionalEvaluationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FunctionalContext:
    grid: object
    W_field: np.ndarray
    V_field: np.ndarray
    h: PenalizedH
    epsilon: float = 1.0
    transform: DualTransform = DualTransform()
    raw_q: bool = False
    kappa: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.kappa != 1.0:
            raise ValueError("only kappa = 1 is supported")
        self.grid.check(self.W_field)
        self.grid.check(self.V_field)

    @classmethod
    def build(cls, grid, W: PotentialSpec, V: PotentialSpec, h: PenalizedH,
              epsilon: float = 1.0, transform: DualTransform | None = None) -> "FunctionalContext":
        return cls(grid, W.sample(grid, epsilon), V.sample(grid, epsilon), h, epsilon,
                   transform or DualTransform())

    def unpenalized(self) -> "FunctionalContext":
        """Same context with H replaced by Q everywhere (the functional I_eps)."""
        return replace(self, raw_q=True)

    @property
    def q(self) -> HomogeneousQ:
        return self.h.q

    @property
    def inside(self) -> np.ndarray:
        """Nodes of Omega_eps = {x : eps x in Omega}."""
        if self.raw_q:
            return np.ones(self.grid.size, dtype=bool)
        return self.h.omega.contains(self.epsilon * self.grid.points)

    # pieces -------------------------------------------------------------

    def _check(self, state: StatePair):
        if not state.is_finite():
            raise FunctionalEvaluationError("state contains non-finite values")
        self.grid.check(state.w)
        self.grid.check(state.z)

    def _h_terms(self, fw, fz):
        inside = self.inside
        hv = self.h.value_masked(inside, fw, fz)
        hs, ht = self.h.grad_masked(inside, fw, fz)
        return hv, hs, ht

    def local_terms(self, w, z):
        """Reaction parts of the gradient, node-wise."""
        fw, fpw, _ = self.transform.evaluate(w)
        fz, fpz, _ = self.transform.evaluate(z)
        _, hs, ht = self._h_terms(fw, fz)
        gw = (self.W_field * fw - hs) * fpw
        gz = (self.V_field * fz - ht) * fpz
        return gw, gz

    def local_jacobian(self, w, z):
        """Node-wise 2x2 derivative of ``local_terms`` by central differences."""
        dw = 1e-7 * (1.0 + np.abs(w))
        dz = 1e-7 * (1.0 + np.abs(z))
        gw_p, gz_p = self.local_terms(w + dw, z)
        gw_m, gz_m = self.local_terms(w - dw, z)
        d_ww = (gw_p - gw_m) / (2 * dw)
        d_zw = (gz_p - gz_m) / (2 * dw)
        gw_p, gz_p = self.local_terms(w, z + dz)
        gw_m, gz_m = self.local_terms(w, z - dz)
        d_wz = (gw_p - gw_m) / (2 * dz)
        d_zz = (gz_p - gz_m) / (2 * dz)
        # the exact Hessian is symmetric; average the two cross estimates
        cross = 0.5 * (d_wz + d_zw)
        return d_ww, cross, d_zz

    # energies -----------------------------------------------------------

    def phi(self, state: StatePair) -> float:
        self._check(state)
        g = self.grid
        fw = self.transform.f(state.w)
        fz = self.transform.f(state.z)
        hv = self.h.value_masked(self.inside, fw, fz) if not self.raw_q else self.q.value(fw, fz)
        kinetic = 0.5 * (g.dirichlet_energy(state.w) + g.dirichlet_energy(state.z))
        potential = 0.5 * g.integrate(self.W_field * fw * fw + self.V_field * fz * fz)
        return kinetic + potential - g.integrate(hv)

    def weak_gradient(self, state: StatePair) -> np.ndarray:
        """Flat vector K w + weights * local terms (boundary entries zeroed)."""
        self._check(state)
        g = self.grid
        gw, gz = self.local_terms(state.w, state.z)
        out_w = g.stiffness @ state.w + g.weights * gw
        out_z = g.stiffness @ state.z + g.weights * gz
        out_w[~g.interior] = 0.0
        out_z[~g.interior] = 0.0
        return np.concatenate([out_w, out_z])

    def phi_grad(self, state: StatePair) -> StatePair:
        G = self.weak_gradient(state)
        wt = np.concatenate([self.grid.weights, self.grid.weights])
        return StatePair.from_flat(G / wt)

    def residual_aux(self, state: StatePair):
        """Strong-form residuals of the auxiliary system at every node."""
        self._check(state)
        g = self.grid
        gw, gz = self.local_terms(state.w, state.z)
        rw = -g.laplacian(state.w) + gw
        rz = -g.laplacian(state.z) + gz
        rw[~g.interior] = 0.0
        rz[~g.interior] = 0.0
        return rw, rz

    def i_eps(self, state: StatePair) -> float:
        return self.unpenalized().phi(state)

    def grad_norm(self, grad: StatePair) -> float:
        """sqrt(int g_w^2 + g_z^2) over the free nodes."""
        m = self.grid.interior
        wt = self.grid.weights[m]
        return float(np.sqrt(np.sum(wt * (grad.w[m] ** 2 + grad.z[m] ** 2))))

    def pairing(self, a: StatePair, b: StatePair) -> float:
        wt = self.grid.weights
        return float(np.sum(wt * (a.w * b.w + a.z * b.z)))

    def jacobian(self, state: StatePair) -> sp.csr_matrix:
        """Sparse symmetric Jacobian of ``weak_gradient`` on the free nodes."""
        g = self.grid
        m = g.interior
        d_ww, d_wz, d_zz = self.local_jacobian(state.w, state.z)
        K = g.stiffness[m][:, m]
        wt = g.weights[m]
        top = K + sp.diags(wt * d_ww[m])
        bot = K + sp.diags(wt * d_zz[m])
        off = sp.diags(wt * d_wz[m])
        return sp.bmat([[top, off], [off, bot]], format="csc")

    def x_norm_sq(self, state: StatePair) -> float:
        g = self.grid
        return (g.dirichlet_energy(state.w) + g.dirichlet_energy(state.z)
                + g.integrate(self.W_field * state.w ** 2 + self.V_field * state.z ** 2))

    def psi(self, state: StatePair) -> float:
        g = self.grid
        fw, fz = self.transform.f(state.w), self.transform.f(state.z)
        return (g.dirichlet_energy(state.w) + g.dirichlet_energy(state.z)
                + g.integrate(self.W_field * fw * fw + self.V_field * fz * fz))


def rescale_to_sigma(ctx: FunctionalContext, state: StatePair, rho: float,
                     tol: float = 1e-12, max_iter: int = 200) -> StatePair:
    """Scalar multiple t*state with Psi(t*state) = rho^2, by bisection on t.

    Psi(t*state) is strictly increasing in t > 0 for a nonzero state.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    target = rho * rho
    if ctx.psi(state) == 0:
        raise ValueError("cannot rescale the zero state")
    lo, hi = 0.0, 1.0
    while ctx.psi(state.scaled(hi)) < target:
        lo, hi = hi, 2.0 * hi
        if hi > 2.0 ** 200:
            raise RuntimeError("Psi did not reach rho^2")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if ctx.psi(state.scaled(mid)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return state.scaled(0.5 * (lo + hi))


def geometry_exponent(dimension: int, p: float) -> float:
    """(2N + 2p)/(N + 2); exceeds 2 exactly when p > 2."""
    return (2.0 * dimension + 2.0 * p) / (dimension + 2.0)
