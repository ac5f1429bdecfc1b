"""Constraint-set geometry.

Membership, signed boundary margins, normal-cone generators, and
deterministic quasi-uniform boundary sampling for the supported compact set
variants: ball, box, polytope (unit outward rows), and smooth sublevel sets
(ellipsoid).  All "for every boundary point" quantifiers elsewhere in the
package are discretized through :func:`sample_boundary`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, DimensionMismatch, UnknownVariant, UnsupportedVariant

_DIRECTIONS_SEED = 20240917


@dataclass(frozen=True, eq=False)
class ConeQuery:
    """Normal-cone data at a boundary point.

    ``normals`` holds unit generators of the normal cone (one row for smooth
    points, one per active constraint at corners).  ``margin(v)`` is positive
    iff v points strictly inward with respect to every generator; at corners
    the margin is the minimum over generators.
    """

    point: np.ndarray
    normals: np.ndarray
    active: tuple[int, ...] = ()

    def margin(self, v: np.ndarray) -> float:
        return float(np.min(-self.normals @ np.asarray(v, dtype=float)))


class ConstraintSet:
    """Compact constraint set with nonempty interior."""

    variant = "abstract"
    dim: int

    # -- membership ------------------------------------------------------
    def boundary_margin(self, x) -> float:
        """Signed margin: zero on the boundary, negative inside, positive
        outside.  Euclidean distance for balls/boxes/polytopes; for smooth
        sublevel sets a monotone surrogate with the same zero level set."""
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-12) -> bool:
        return self.boundary_margin(x) <= tol

    # -- geometry --------------------------------------------------------
    def bounding_radius(self) -> float:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def interior_point(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def tol_active(self) -> float:
        return 1e-9 * self.bounding_radius()

    def normal_generators(self, x) -> tuple[np.ndarray, tuple[int, ...]]:
        """Unit normal generators and active-constraint indices at x."""
        raise NotImplementedError

    def cone_query(self, x) -> ConeQuery:
        x = np.asarray(x, dtype=float)
        normals, active = self.normal_generators(x)
        return ConeQuery(point=x, normals=normals, active=active)

    def sample_boundary(self, density: int) -> list[ConeQuery]:
        raise NotImplementedError


def _unit_directions(dim: int, count: int) -> np.ndarray:
    """Deterministic quasi-uniform directions on the unit sphere."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if dim == 3:
        # Fibonacci lattice
        golden = (1.0 + np.sqrt(5.0)) / 2.0
        k = np.arange(count) + 0.5
        phi = 2.0 * np.pi * k / golden
        z = 1.0 - 2.0 * k / count
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    rng = np.random.default_rng(_DIRECTIONS_SEED)
    dirs = rng.standard_normal((count, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


class Ball(ConstraintSet):
    variant = "ball"

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dim = len(self.center)
        if self.radius <= 0.0:
            raise ConfigError("ball radius must be positive")

    def boundary_margin(self, x):
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.center)
                     - self.radius)

    def bounding_radius(self):
        return float(np.linalg.norm(self.center) + self.radius)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def interior_point(self):
        return self.center.copy()

    def normal_generators(self, x):
        d = np.asarray(x, dtype=float) - self.center
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            raise ValueError("normal cone queried at the ball center")
        return (d / nrm)[None, :], ()

    def sample_boundary(self, density):
        dirs = _unit_directions(self.dim, density)
        return [self.cone_query(self.center + self.radius * d) for d in dirs]


class Polytope(ConstraintSet):
    """{x : <a_i, x> <= c_i} with unit rows a_i; compact with interior."""

    variant = "polytope"

    def __init__(self, normals, offsets, interior=None):
        a = np.asarray(normals, dtype=float)
        c = np.asarray(offsets, dtype=float)
        if a.ndim != 2 or len(c) != len(a):
            raise DimensionMismatch("polytope rows/offsets mismatch")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0.0):
            raise ConfigError("polytope has a zero normal row")
        self.a = a / norms[:, None]
        self.c = c / norms
        self.dim = a.shape[1]
        self._bbox = self._compute_bbox()
        self._interior = (np.asarray(interior, dtype=float)
                          if interior is not None else self._chebyshev_center())
        if self.boundary_margin(self._interior) >= -1e-12:
            raise ConfigError("polytope interior witness is not strictly inside")

    def _support(self, d: np.ndarray) -> float:
        res = linprog(-d, A_ub=self.a, b_ub=self.c,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 3:
            raise ConfigError("polytope is unbounded")
        if not res.success:
            raise ConfigError(f"polytope support LP failed: {res.message}")
        return float(d @ res.x)

    def _compute_bbox(self):
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            hi[i] = self._support(e)
            lo[i] = -self._support(-e)
        return lo, hi

    def _chebyshev_center(self) -> np.ndarray:
        # maximize r subject to a_i x + r <= c_i
        k = len(self.c)
        cost = np.zeros(self.dim + 1)
        cost[-1] = -1.0
        a_ub = np.hstack([self.a, np.ones((k, 1))])
        res = linprog(cost, A_ub=a_ub, b_ub=self.c,
                      bounds=[(None, None)] * self.dim + [(0.0, None)],
                      method="highs")
        if not res.success or res.x[-1] <= 1e-12:
            raise ConfigError("polytope has empty interior")
        return res.x[:-1]

    def boundary_margin(self, x):
        return float(np.max(self.a @ np.asarray(x, dtype=float) - self.c))

    def bounding_radius(self):
        lo, hi = self._bbox
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))

    def bounding_box(self):
        lo, hi = self._bbox
        return lo.copy(), hi.copy()

    def interior_point(self):
        return self._interior.copy()

    def normal_generators(self, x):
        resid = self.a @ np.asarray(x, dtype=float) - self.c
        active = tuple(int(i) for i in np.nonzero(resid >= -self.tol_active)[0])
        if not active:
            raise ValueError("normal cone queried at an interior point")
        return self.a[list(active)], active

    def _vertices_2d(self) -> np.ndarray:
        pts = []
        k = len(self.c)
        for i in range(k):
            for j in range(i + 1, k):
                m = np.array([self.a[i], self.a[j]])
                if abs(np.linalg.det(m)) < 1e-12:
                    continue
                v = np.linalg.solve(m, np.array([self.c[i], self.c[j]]))
                if np.max(self.a @ v - self.c) <= 1e-9:
                    pts.append(v)
        uniq: dict[tuple, np.ndarray] = {}
        for v in pts:
            uniq[tuple(np.round(v, 12))] = v
        verts = np.array(list(uniq.values()))
        center = self._interior
        order = np.argsort(np.arctan2(verts[:, 1] - center[1],
                                      verts[:, 0] - center[0]))
        return verts[order]

    def sample_boundary(self, density):
        if self.dim == 1:
            # one-dimensional polytope is an interval
            lo, hi = self._bbox
            return [self.cone_query(np.array([lo[0]])),
                    self.cone_query(np.array([hi[0]]))]
        if self.dim != 2:
            raise UnsupportedVariant(
                "polytope boundary sampling implemented for dim <= 2")
        verts = self._vertices_2d()
        m = max(2, int(density))
        points = []
        for i in range(len(verts)):
            v0, v1 = verts[i], verts[(i + 1) % len(verts)]
            for theta in np.linspace(0.0, 1.0, m, endpoint=False):
                points.append((1.0 - theta) * v0 + theta * v1)
        return [self.cone_query(p) for p in points]


class Box(Polytope):
    """Axis-aligned box as a polytope with rows ±e_i."""

    variant = "box"

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("box lo/hi mismatch")
        if np.any(hi <= lo):
            raise ConfigError("box needs lo < hi per axis")
        n = len(lo)
        eye = np.eye(n)
        super().__init__(np.vstack([eye, -eye]),
                         np.concatenate([hi, -lo]),
                         interior=0.5 * (lo + hi))
        self.lo = lo
        self.hi = hi

    def sample_boundary(self, density):
        n = self.dim
        m = max(2, int(density))
        if n == 1:
            pts = [np.array([self.lo[0]]), np.array([self.hi[0]])]
        else:
            axes = [np.linspace(self.lo[i], self.hi[i], m) for i in range(n)]
            pts_map: dict[tuple, np.ndarray] = {}
            for face_axis in range(n):
                rest = [axes[i] for i in range(n) if i != face_axis]
                mesh = np.meshgrid(*rest, indexing="ij")
                coords = np.stack([g.ravel() for g in mesh], axis=1)
                for bound in (self.lo[face_axis], self.hi[face_axis]):
                    for row in coords:
                        p = np.empty(n)
                        p[face_axis] = bound
                        p[[i for i in range(n) if i != face_axis]] = row
                        pts_map[tuple(np.round(p, 12))] = p
            pts = list(pts_map.values())
        return [self.cone_query(p) for p in pts]


class Ellipsoid(ConstraintSet):
    """Smooth sublevel set {x : sum_i w_i (x_i - c_i)^2 <= 1}, w_i > 0."""

    variant = "ellipsoid"

    def __init__(self, center, weights):
        self.center = np.asarray(center, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.dim = len(self.center)
        if self.weights.shape != self.center.shape or np.any(self.weights <= 0):
            raise ConfigError("ellipsoid needs positive per-axis weights")
        self.semi_axes = 1.0 / np.sqrt(self.weights)

    def boundary_margin(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return float(np.sqrt(np.sum(self.weights * d * d)) - 1.0)

    def bounding_radius(self):
        return float(np.linalg.norm(self.center) + np.max(self.semi_axes))

    def bounding_box(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    def interior_point(self):
        return self.center.copy()

    def normal_generators(self, x):
        # gradient of the defining function, normalized
        g = self.weights * (np.asarray(x, dtype=float) - self.center)
        nrm = np.linalg.norm(g)
        if nrm == 0.0:
            raise ValueError("normal cone queried at the ellipsoid center")
        return (g / nrm)[None, :], ()

    def sample_boundary(self, density):
        dirs = _unit_directions(self.dim, density)
        return [self.cone_query(self.center + self.semi_axes * d) for d in dirs]


def sample_boundary(omega: ConstraintSet, density: int) -> list[ConeQuery]:
    """Deterministic quasi-uniform boundary sample with cone data per point."""
    if density <= 0:
        raise ValueError("density must be positive")
    return omega.sample_boundary(density)


def constraint_from_config(entry: dict, dim: int) -> ConstraintSet:
    variant = entry.get("variant")
    params = entry.get("params", {})
    if variant == "ball":
        omega = Ball(params.get("center", np.zeros(dim)), params.get("radius", 1.0))
    elif variant == "box":
        omega = Box(params.get("lo"), params.get("hi"))
    elif variant == "polytope":
        omega = Polytope(params.get("normals"), params.get("offsets"),
                         interior=params.get("interior_point"))
    elif variant == "ellipsoid":
        omega = Ellipsoid(params.get("center", np.zeros(dim)),
                          params.get("weights"))
    else:
        raise UnknownVariant(f"omega: unknown variant {variant!r}")
    if omega.dim != dim:
        raise DimensionMismatch(
            f"omega has dimension {omega.dim}, state has {dim}")
    return omega
