"""Problem definition.

A problem couples structured dynamics

    xi'(s) = grad_h(xi)^{-1} A(s) h(xi) + grad_h(xi)^{-1} B(s) u

with a marginal-function running cost

    L(s, x, u) = sup_{alpha >= 0} l(s, x, u, alpha),
    l(s, x, u, alpha) = (K(s)/2 + a(alpha)) |h(x)|^2 + |u|^2 / 2 - b(alpha),

a compact constraint set Omega, and a time grid.  The control weight is fixed
to R = I/2, and b must grow strictly faster than a (q > p) so the supremum is
finite with argmax ((p c g)/(q d))^{1/(q-p)} at g = |h(x)|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import catalog, geometry
from .errors import (ConfigError, DimensionMismatch, GrowthViolation,
                     IntegrabilityMismatch, NegativeAlpha, NonconformingWeight,
                     NotIntegrable, UnboundedSup)


@dataclass(frozen=True)
class TimeGridSpec:
    """Default grid parameters: start time, step, and maximum horizon."""

    t0: float
    dt: float
    t_max: float

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigError("grid.dt must be positive")
        if self.t_max <= self.t0:
            raise ConfigError("grid.t_max must exceed grid.t0")


@dataclass(frozen=True, eq=False)
class AlphaPolicy:
    """Adversarial weight policy sampled on a time grid.

    Piecewise constant: alpha(s) = values[i] on [nodes[i], nodes[i+1]); after
    the last node the policy takes the value ``tail`` (default 0, which keeps
    b(alpha(.)) integrable on the infinite horizon).  Queries before the first
    node clamp to values[0].
    """

    nodes: np.ndarray
    values: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise ValueError("alpha policy nodes/values mismatch")
        if len(nodes) < 1:
            raise ValueError("alpha policy needs at least one node")
        if len(nodes) > 1 and np.any(np.diff(nodes) <= 0.0):
            raise ValueError("alpha policy grid must be strictly increasing")
        if np.any(values < 0.0) or self.tail < 0.0:
            raise NegativeAlpha("alpha policy values must be nonnegative")

    @classmethod
    def constant(cls, value: float, t0: float, t1: float) -> "AlphaPolicy":
        """value on [t0, t1], zero afterwards."""
        return cls(np.array([t0, t1]), np.array([value, value]), tail=0.0)

    @classmethod
    def zero(cls, t0: float, t1: float) -> "AlphaPolicy":
        return cls.constant(0.0, t0, t1)

    def value(self, s: float) -> float:
        i = int(np.searchsorted(self.nodes, s, side="right")) - 1
        if i < 0:
            return float(self.values[0])
        if i >= len(self.nodes) - 1:
            if s > self.nodes[-1]:
                return self.tail
            return float(self.values[-1])
        return float(self.values[i])

    def values_at(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, s, side="right") - 1,
                      0, len(self.nodes) - 1)
        out = self.values[idx]
        return np.where(s > self.nodes[-1], self.tail, out)

    def maximum(self) -> float:
        return float(max(np.max(self.values), self.tail))

    def piecewise_integral(self, fn: Callable[[float], float], t_from: float,
                           t_to: float | None = None) -> float:
        """Exact integral of fn(alpha(s)) over [t_from, t_to] (None -> inf).

        Diverging tails (fn(tail) != 0 on an infinite horizon) raise
        NotIntegrable.
        """
        nodes, values = self.nodes, self.values
        total = 0.0
        # region before the grid clamps to values[0]
        if t_from < nodes[0]:
            hi = nodes[0] if t_to is None else min(t_to, nodes[0])
            total += float(fn(values[0])) * max(0.0, hi - t_from)
        for i in range(len(nodes) - 1):
            lo = max(t_from, nodes[i])
            hi = nodes[i + 1] if t_to is None else min(t_to, nodes[i + 1])
            if hi > lo:
                total += float(fn(values[i])) * (hi - lo)
        tail_rate = float(fn(self.tail))
        lo = max(t_from, nodes[-1])
        if t_to is None:
            if tail_rate != 0.0:
                raise NotIntegrable(
                    "alpha policy tail makes the integrand non-integrable")
        elif t_to > lo:
            total += tail_rate * (t_to - lo)
        return total


def _sup_alpha_gain(a: catalog.PowerLaw, b: catalog.PowerLaw, g: float
                    ) -> tuple[float, float]:
    """(argmax, max) of a(alpha)*g - b(alpha) over alpha >= 0.

    Power catalog closed form; ties broken by the smallest maximizer
    (alpha = 0 whenever the gain there is zero).
    """
    if b.exponent <= a.exponent:
        raise UnboundedSup("b must grow strictly faster than a")
    if g <= 0.0 or a.coeff == 0.0:
        return 0.0, 0.0
    if b.coeff <= 0.0:
        raise UnboundedSup("b must be strictly increasing for alpha > 0")
    p, q = a.exponent, b.exponent
    alpha_star = (p * a.coeff * g / (q * b.coeff)) ** (1.0 / (q - p))
    gain = a.coeff * g * alpha_star**p - b.coeff * alpha_star**q
    return float(alpha_star), float(gain)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Validated problem data; immutable and safe to share across threads."""

    dim_state: int
    dim_control: int
    A: catalog.TimeMatrix
    B: catalog.TimeMatrix
    K: catalog.StateWeight
    a: catalog.PowerLaw
    b: catalog.PowerLaw
    h: catalog.DiffeoMap
    omega: geometry.ConstraintSet
    grid: TimeGridSpec
    R: np.ndarray = field(init=False)
    Rinv: np.ndarray = field(init=False)

    def __post_init__(self):
        m = self.dim_control
        object.__setattr__(self, "R", 0.5 * np.eye(m))
        object.__setattr__(self, "Rinv", 2.0 * np.eye(m))

    def q_coeff(self, s: float, alpha: float) -> float:
        """Scalar multiplier of the identity in Q(s, alpha)."""
        return 0.5 * self.K.value(s) + float(self.a(alpha))

    def q_coeffs(self, s: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        return 0.5 * self.K.values(s) + self.a(np.asarray(alpha, dtype=float))

    def b_norm_bound(self) -> float:
        """Declared sup-norm bound of B (falls back to the derived one)."""
        return self.B.bound if self.B.bound is not None else self.B.norm_bound()


def eval_dynamics(spec: ProblemSpec, s: float, x: np.ndarray, u: np.ndarray
                  ) -> np.ndarray:
    """State derivative grad_h(x)^{-1} (A(s) h(x) + B(s) u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    hx = spec.h.forward(x)
    rhs = spec.A.value(s) @ hx + spec.B.value(s) @ u
    return spec.h.apply_jacobian_inv(x, rhs)


def eval_dynamics_batch(spec: ProblemSpec, s: float, xs: np.ndarray,
                        u: np.ndarray) -> np.ndarray:
    """Vectorized dynamics over stacked states (M, n) at one (s, u)."""
    hxs = spec.h.forward_batch(xs)
    rhs = hxs @ spec.A.value(s).T + np.asarray(u, dtype=float) @ spec.B.value(s).T
    return spec.h.apply_jacobian_inv_batch(xs, rhs)


def eval_lagrangian(spec: ProblemSpec, s: float, x: np.ndarray, u: np.ndarray,
                    alpha: float) -> float:
    """(K(s)/2 + a(alpha)) |h(x)|^2 + |u|^2/2 - b(alpha)."""
    if alpha < 0.0:
        raise NegativeAlpha("alpha must be nonnegative")
    hx = spec.h.forward(np.asarray(x, dtype=float))
    u = np.asarray(u, dtype=float)
    return float(spec.q_coeff(s, alpha) * (hx @ hx) + 0.5 * (u @ u)
                 - spec.b(alpha))


def eval_sup_lagrangian(spec: ProblemSpec, s: float, x: np.ndarray,
                        u: np.ndarray) -> float:
    """Marginal-function cost sup over alpha of the parametrized rate."""
    hx = spec.h.forward(np.asarray(x, dtype=float))
    u = np.asarray(u, dtype=float)
    g = float(hx @ hx)
    _, gain = _sup_alpha_gain(spec.a, spec.b, g)
    return float(0.5 * spec.K.value(s) * g + 0.5 * (u @ u) + gain)


def _validate_r(entry: dict, m: int) -> None:
    if entry is None:
        return
    variant = entry.get("variant")
    if variant == "half_identity":
        return
    if variant is not None:
        raise NonconformingWeight(
            f"control weight must be I/2, got variant {variant!r}")
    value = entry.get("value")
    if value is None:
        raise NonconformingWeight("control weight entry carries no data")
    r = np.asarray(value, dtype=float)
    if r.shape != (m, m) or not np.allclose(r, 0.5 * np.eye(m), atol=1e-12):
        raise NonconformingWeight("control weight must be one half identity")


def _verify_weight_tags(entry: dict, weight: catalog.StateWeight) -> None:
    tags = entry.get("tags", {})
    for key, attr in (("l1", weight.is_l1), ("l2", weight.is_l2)):
        if key in tags and bool(tags[key]) != attr:
            raise IntegrabilityMismatch(
                f"K declared {key}={tags[key]} but variant gives {attr}")
    if not weight.is_l1:
        raise IntegrabilityMismatch("state weight K must be integrable")


def _verify_diffeo(h: catalog.DiffeoMap) -> None:
    """Spot-check the map identities at deterministic sample points."""
    rng = np.random.default_rng(7)
    for _ in range(8):
        x = rng.uniform(-1.5, 1.5, size=h.dim)
        jac = h.jacobian(x)
        if np.max(np.abs(jac @ h.jacobian_inv(x) - np.eye(h.dim))) > 1e-10:
            raise ConfigError("h: jacobian inverse identity fails")
        if np.max(np.abs(h.inverse(h.forward(x)) - x)) > 1e-9:
            raise ConfigError("h: inverse round trip fails")


def _verify_b_bound(b_mat: catalog.TimeMatrix, grid: TimeGridSpec) -> None:
    if b_mat.bound is None:
        return
    samples = np.linspace(grid.t0, grid.t_max, 201)
    worst = max(float(np.linalg.norm(b_mat.value(s), 2)) for s in samples)
    if b_mat.bound < worst - 1e-12:
        raise ConfigError(
            f"declared |B| bound {b_mat.bound} below observed {worst}")


def build_problem(config: dict) -> ProblemSpec:
    """Validate a parsed configuration document and build the problem.

    See ``config_schema.json`` for field names.  Raises subclasses of
    ConfigError naming the offending key.
    """
    dims = config.get("dims", {})
    try:
        n = int(dims["state"])
        m = int(dims["control"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatch("dims.state and dims.control required") from exc
    if n < 1 or m < 1:
        raise DimensionMismatch("dimensions must be >= 1")

    for key in ("A", "B", "K", "a", "b", "h", "omega", "grid"):
        if key not in config:
            raise ConfigError(f"missing config key {key!r}")

    a_mat = catalog.time_matrix_from_config(config["A"], (n, n), "A")
    b_mat = catalog.time_matrix_from_config(config["B"], (n, m), "B")
    k_weight = catalog.state_weight_from_config(config["K"])
    _verify_weight_tags(config["K"], k_weight)
    a_fn = catalog.power_law_from_config(config["a"], "a")
    b_fn = catalog.power_law_from_config(config["b"], "b")
    if b_fn.exponent <= a_fn.exponent:
        raise GrowthViolation(
            f"b exponent {b_fn.exponent} must exceed a exponent {a_fn.exponent}")
    if a_fn.coeff > 0.0 and b_fn.coeff <= 0.0:
        raise GrowthViolation("b must be strictly positive for alpha > 0")
    _validate_r(config.get("R"), m)
    h = catalog.diffeo_from_config(config["h"], n)
    _verify_diffeo(h)
    omega = geometry.constraint_from_config(config["omega"], n)

    grid_entry = config["grid"]
    try:
        grid = TimeGridSpec(float(grid_entry["t0"]), float(grid_entry["dt"]),
                            float(grid_entry["t_max"]))
    except KeyError as exc:
        raise ConfigError(f"grid missing key {exc}") from exc
    _verify_b_bound(b_mat, grid)

    return ProblemSpec(dim_state=n, dim_control=m, A=a_mat, B=b_mat,
                       K=k_weight, a=a_fn, b=b_fn, h=h, omega=omega, grid=grid)
