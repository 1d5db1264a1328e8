"""Grids, quadrature, discrete Laplacians and the X-norm / Psi functionals.

Both grids are finite-volume: every node owns a control volume (its quadrature
weight) and the Dirichlet energy is a sum over faces,

    int |grad w|^2  ~  w^T K w,

with K a sparse symmetric stiffness matrix.  The discrete Laplacian is defined
as -K w / weights, so it is exactly the L^2(weights) gradient of the discrete
Dirichlet energy.  Radially the control volumes are exact shell volumes, which
makes the Laplacian of |x|^2 equal to 2N at every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .transform import DualTransform


class GridMismatchError(ValueError):
    """A field does not live on the grid it was passed with."""


def sphere_area(dimension: int) -> float:
    """Surface area of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0)


def _stiffness_from_edges(n, i, j, c) -> sp.csr_matrix:
    diag = np.bincount(i, c, minlength=n) + np.bincount(j, c, minlength=n)
    off = sp.coo_matrix((-c, (i, j)), shape=(n, n))
    return (sp.diags(diag) + off + off.T).tocsr()


class _GridOps:
    weights: np.ndarray
    stiffness: sp.csr_matrix
    interior: np.ndarray
    edges: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def size(self) -> int:
        return self.weights.size

    def check(self, field) -> np.ndarray:
        field = np.asarray(field, dtype=float)
        if field.shape != (self.size,):
            raise GridMismatchError(f"field of shape {field.shape} on a grid of {self.size} nodes")
        return field

    def integrate(self, field) -> float:
        return math.fsum(self.weights * self.check(field))

    def dirichlet_energy(self, field) -> float:
        """int |grad w|^2 as a compensated sum over faces."""
        w = self.check(field)
        i, j, c = self.edges
        d = w[j] - w[i]
        return math.fsum(c * d * d)

    def laplacian(self, field) -> np.ndarray:
        w = self.check(field)
        out = -(self.stiffness @ w) / self.weights
        out[~self.interior] = 0.0
        return out

    def zero_field(self) -> np.ndarray:
        return np.zeros(self.size)


@dataclass(frozen=True, eq=False)
class RadialGrid(_GridOps):
    dimension: int
    radius: float
    nodes: int
    weights: np.ndarray = field(init=False, repr=False)
    stiffness: sp.csr_matrix = field(init=False, repr=False)
    edges: tuple = field(init=False, repr=False)
    r: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.nodes < 64:
            raise ValueError("radial grids need at least 64 nodes")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        n, N = self.nodes, self.dimension
        h = self.radius / (n - 1)
        r = h * np.arange(n)
        omega = sphere_area(N)
        lo = np.maximum(r - 0.5 * h, 0.0)
        hi = np.minimum(r + 0.5 * h, self.radius)
        weights = omega * (hi ** N - lo ** N) / N
        faces = r[:-1] + 0.5 * h
        c = omega * faces ** (N - 1) / h
        edges = (np.arange(n - 1), np.arange(1, n), c)
        object.__setattr__(self, "edges", edges)
        K = _stiffness_from_edges(n, *edges)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "stiffness", K)

    @property
    def spacing(self) -> float:
        return self.radius / (self.nodes - 1)

    @property
    def interior(self) -> np.ndarray:
        m = np.ones(self.nodes, dtype=bool)
        m[-1] = False
        return m

    @property
    def radii(self) -> np.ndarray:
        return self.r

    @property
    def points(self) -> np.ndarray:
        pts = np.zeros((self.nodes, self.dimension))
        pts[:, 0] = self.r
        return pts

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.dimension, self.radius, factor * (self.nodes - 1) + 1)

    def describe(self) -> dict:
        return {"kind": "radial", "dimension": self.dimension, "radius": self.radius,
                "nodes": self.nodes}


@dataclass(frozen=True, eq=False)
class BoxGrid(_GridOps):
    dimension: int
    half_width: float
    resolution: int
    weights: np.ndarray = field(init=False, repr=False)
    stiffness: sp.csr_matrix = field(init=False, repr=False)
    edges: tuple = field(init=False, repr=False)
    _points: np.ndarray = field(init=False, repr=False)
    _interior: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("box grids support d = 2 or 3")
        if self.resolution < 24:
            raise ValueError("box grids need at least 24 nodes per axis")
        d, m = self.dimension, self.resolution
        x = np.linspace(-self.half_width, self.half_width, m)
        h = x[1] - x[0]
        mesh = np.meshgrid(*([x] * d), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        index = np.arange(m ** d).reshape((m,) * d)
        ii, jj = [], []
        for axis in range(d):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[axis] = slice(0, m - 1)
            hi[axis] = slice(1, m)
            ii.append(index[tuple(lo)].ravel())
            jj.append(index[tuple(hi)].ravel())
        i_all = np.concatenate(ii)
        j_all = np.concatenate(jj)
        edges = (i_all, j_all, np.full(i_all.size, h ** (d - 2)))
        object.__setattr__(self, "edges", edges)
        K = _stiffness_from_edges(m ** d, *edges)
        on_face = np.any(np.isclose(np.abs(pts), self.half_width), axis=1)
        object.__setattr__(self, "_points", pts)
        object.__setattr__(self, "_interior", ~on_face)
        # tensor trapezoid: half weight per boundary coordinate
        half = np.isclose(np.abs(pts), self.half_width)
        object.__setattr__(self, "weights", h ** d * np.prod(np.where(half, 0.5, 1.0), axis=1))
        object.__setattr__(self, "stiffness", K.tocsr())

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.resolution - 1)

    @property
    def interior(self) -> np.ndarray:
        return self._interior

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self._points, axis=1)

    @property
    def extrapolation(self) -> bool:
        """d = 2 lies outside the N >= 3 setting of the theory."""
        return self.dimension < 3

    def describe(self) -> dict:
        return {"kind": "box", "dimension": self.dimension, "half_width": self.half_width,
                "resolution": self.resolution, "extrapolation": self.extrapolation}


def make_grid(spec: dict):
    kind = spec.get("kind", "radial")
    if kind == "radial":
        return RadialGrid(int(spec["dimension"]), float(spec["radius"]), int(spec["nodes"]))
    if kind == "box":
        return BoxGrid(int(spec["dimension"]), float(spec["half_width"]), int(spec["resolution"]))
    raise ValueError(f"unknown grid kind {kind!r}")


# potentials --------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Potential W or V with floor <= values <= ceiling.

    kinds: ``constant`` (value = floor), ``class2_bump``
    (floor + height (1 - exp(-|x - center|^2)), nondegenerate gradient on the
    sphere of radius ``lambda_radius``) and ``custom_table`` (radial table,
    linear interpolation, constant beyond the last entry).
    """

    kind: str
    floor: float
    ceiling: float | None = None
    height: float = 1.0
    center: tuple[float, ...] | None = None
    lambda_radius: float = 1.0
    table_r: tuple[float, ...] = ()
    table_values: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError("potential floor must be positive")
        if self.kind == "constant":
            ceiling = self.floor if self.ceiling is None else self.ceiling
        elif self.kind == "class2_bump":
            if not self.height > 0:
                raise ValueError("class2_bump height must be positive")
            ceiling = self.floor + self.height if self.ceiling is None else self.ceiling
        elif self.kind == "custom_table":
            if len(self.table_r) < 2 or len(self.table_r) != len(self.table_values):
                raise ValueError("custom_table needs matching r and value lists of length >= 2")
            if np.any(np.diff(self.table_r) <= 0):
                raise ValueError("custom_table radii must be increasing")
            ceiling = max(self.table_values) if self.ceiling is None else self.ceiling
            vals = np.asarray(self.table_values)
            if np.any(vals < self.floor) or np.any(vals > ceiling):
                raise ValueError("custom_table values violate floor <= V <= ceiling")
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if ceiling < self.floor:
            raise ValueError("ceiling must be >= floor")
        if self.kind == "class2_bump" and ceiling < self.floor + self.height:
            raise ValueError("class2_bump exceeds its ceiling")
        if self.kind == "constant" and ceiling != self.floor:
            raise ValueError("constant potential must have ceiling == floor")
        object.__setattr__(self, "ceiling", float(ceiling))

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        return cls(kind=d["kind"], floor=float(d["floor"]),
                   ceiling=None if d.get("ceiling") is None else float(d["ceiling"]),
                   height=float(d.get("height", 1.0)),
                   center=None if d.get("center") is None else tuple(map(float, d["center"])),
                   lambda_radius=float(d.get("lambda_radius", 1.0)),
                   table_r=tuple(map(float, d.get("table_r", ()))),
                   table_values=tuple(map(float, d.get("table_values", ()))))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "floor": self.floor, "ceiling": self.ceiling}
        if self.kind == "class2_bump":
            d.update(height=self.height, lambda_radius=self.lambda_radius,
                     center=None if self.center is None else list(self.center))
        if self.kind == "custom_table":
            d.update(table_r=list(self.table_r), table_values=list(self.table_values))
        return d

    def _shifted(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.center is not None:
            x = x - np.asarray(self.center)[: x.shape[1]]
        return x

    def __call__(self, x) -> np.ndarray:
        x = self._shifted(x)
        r2 = np.sum(x * x, axis=1)
        if self.kind == "constant":
            return np.full(r2.shape, self.floor)
        if self.kind == "class2_bump":
            return self.floor + self.height * (1.0 - np.exp(-r2))
        return np.interp(np.sqrt(r2), self.table_r, self.table_values)

    def gradient_norm(self, x) -> np.ndarray:
        x = self._shifted(x)
        r2 = np.sum(x * x, axis=1)
        r = np.sqrt(r2)
        if self.kind == "constant":
            return np.zeros_like(r)
        if self.kind == "class2_bump":
            return 2.0 * self.height * r * np.exp(-r2)
        slopes = np.diff(self.table_values) / np.diff(self.table_r)
        idx = np.clip(np.searchsorted(self.table_r, r) - 1, 0, len(slopes) - 1)
        inside = (r >= self.table_r[0]) & (r <= self.table_r[-1])
        return np.where(inside, np.abs(slopes[idx]), 0.0)

    def sample(self, grid, epsilon: float) -> np.ndarray:
        """Values W(eps x) at the grid nodes."""
        return self(epsilon * grid.points)


# states ------------------------------------------------------------------

@dataclass
class StatePair:
    w: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.w.shape != self.z.shape:
            raise GridMismatchError("w and z must live on the same grid")

    @classmethod
    def zeros(cls, grid) -> "StatePair":
        return cls(grid.zero_field(), grid.zero_field())

    @classmethod
    def from_flat(cls, x: np.ndarray) -> "StatePair":
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w, self.z])

    def scaled(self, t: float) -> "StatePair":
        return StatePair(t * self.w, t * self.z)

    def __add__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.w + other.w, self.z + other.z)

    def __sub__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.w - other.w, self.z - other.z)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.z)))


def integrate(grid, field) -> float:
    return grid.integrate(field)


def laplacian(grid, field) -> np.ndarray:
    return grid.laplacian(field)


def x_norm_sq(grid, state: StatePair, Wf, Vf) -> float:
    """int |grad w|^2 + |grad z|^2 + W w^2 + V z^2."""
    w, z = grid.check(state.w), grid.check(state.z)
    return (grid.dirichlet_energy(w) + grid.dirichlet_energy(z)
            + grid.integrate(Wf * w * w + Vf * z * z))


def psi(grid, state: StatePair, Wf, Vf, transform: DualTransform | None = None) -> float:
    """int |grad w|^2 + |grad z|^2 + W f(w)^2 + V f(z)^2."""
    transform = transform or DualTransform()
    w, z = grid.check(state.w), grid.check(state.z)
    fw, fz = transform.f(w), transform.f(z)
    return (grid.dirichlet_energy(w) + grid.dirichlet_energy(z)
            + grid.integrate(Wf * fw * fw + Vf * fz * fz))


def field_csv(grid, columns: dict[str, np.ndarray]) -> str:
    """CSV text: node coordinate(s) followed by the named columns."""
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(grid, RadialGrid):
        coords = grid.r[:, None]
        head = ["r"]
    else:
        coords = grid.points
        head = [f"x{i}" for i in range(grid.dimension)]
    writer.writerow(head + list(columns))
    cols = [np.asarray(c) for c in columns.values()]
    for i in range(grid.size):
        writer.writerow([repr(float(x)) for x in coords[i]] + [repr(float(c[i])) for c in cols])
    return buf.getvalue()
