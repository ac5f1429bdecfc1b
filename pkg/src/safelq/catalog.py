"""Function catalogs for problem data.

Every time-dependent coefficient, scalar weight, and coordinate map is a
tagged, parameter-complete value: configurations serialize to JSON and
integrability is decided symbolically per variant instead of by quadrature
to infinity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatch, NonPositiveWeight, SingularJacobian,
                     UnknownVariant)

TIME_MATRIX_VARIANTS = ("constant", "sinusoid")
STATE_WEIGHT_VARIANTS = ("truncated_constant", "exponential")
DIFFEO_VARIANTS = ("identity", "linear", "odd_cubic")


@dataclass(frozen=True, eq=False)
class TimeMatrix:
    """Matrix-valued function of time.

    constant:  M(s) = base
    sinusoid:  M(s) = base + amplitude * sin(omega * s)

    ``bound`` is the declared sup-norm bound (required for input matrices,
    where the geometric sufficient condition consumes it).
    """

    variant: str
    base: np.ndarray
    amplitude: np.ndarray | None = None
    omega: float = 0.0
    bound: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape

    def is_constant(self) -> bool:
        return self.variant == "constant" or (
            self.amplitude is not None and not np.any(self.amplitude))

    def value(self, s: float) -> np.ndarray:
        if self.variant == "constant":
            return self.base
        return self.base + self.amplitude * np.sin(self.omega * s)

    def values(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.variant == "constant":
            return np.broadcast_to(self.base, s.shape + self.base.shape).copy()
        return self.base + np.sin(self.omega * s)[:, None, None] * self.amplitude

    def norm_bound(self) -> float:
        """Exact sup-norm bound derived from the parameters."""
        b = float(np.linalg.norm(self.base, 2))
        if self.variant == "sinusoid":
            b += float(np.linalg.norm(self.amplitude, 2))
        return b


def time_matrix_from_config(entry: dict, shape: tuple[int, int],
                            name: str) -> TimeMatrix:
    variant = entry.get("variant")
    params = entry.get("params", {})
    if variant not in TIME_MATRIX_VARIANTS:
        raise UnknownVariant(f"{name}: unknown variant {variant!r}")

    def _matrix(key):
        if key not in params:
            raise DimensionMismatch(f"{name}: missing {key!r}")
        m = np.asarray(params[key], dtype=float)
        if m.shape != shape:
            raise DimensionMismatch(
                f"{name}.{key}: expected shape {shape}, got {m.shape}")
        return m

    bound = params.get("bound")
    if variant == "constant":
        return TimeMatrix("constant", _matrix("value"), bound=bound)
    return TimeMatrix("sinusoid", _matrix("base"), _matrix("amplitude"),
                      omega=float(params.get("omega", 1.0)), bound=bound)


@dataclass(frozen=True)
class StateWeight:
    """Scalar state weight K(s) >= 0 on s >= 0.

    truncated_constant:  level on [0, t_cut], zero after
    exponential:         level * exp(-rate * s), rate > 0

    Both variants are L1 and L2 on [0, inf) by construction, which is exactly
    what the symbolic integrability tags certify.
    """

    variant: str
    level: float
    t_cut: float = 0.0
    rate: float = 0.0

    def value(self, s: float) -> float:
        if self.variant == "truncated_constant":
            return self.level if 0.0 <= s <= self.t_cut else 0.0
        return self.level * np.exp(-self.rate * s) if s >= 0.0 else 0.0

    def values(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.variant == "truncated_constant":
            return np.where((s >= 0.0) & (s <= self.t_cut), self.level, 0.0)
        return np.where(s >= 0.0, self.level * np.exp(-self.rate * s), 0.0)

    def integral(self, t0: float, t1: float | None = None) -> float:
        """Closed-form integral of K over [max(t0,0), t1] (t1=None -> inf)."""
        t0 = max(t0, 0.0)
        if self.variant == "truncated_constant":
            hi = self.t_cut if t1 is None else min(t1, self.t_cut)
            return self.level * max(0.0, hi - t0)
        if self.rate <= 0.0:
            raise NonPositiveWeight("exponential weight needs a positive rate")
        upper = 0.0 if t1 is None else np.exp(-self.rate * t1)
        return self.level / self.rate * (np.exp(-self.rate * t0) - upper)

    @property
    def is_l1(self) -> bool:
        return self.variant == "truncated_constant" or self.rate > 0.0

    @property
    def is_l2(self) -> bool:
        return self.is_l1


def state_weight_from_config(entry: dict) -> StateWeight:
    variant = entry.get("variant")
    params = entry.get("params", {})
    if variant not in STATE_WEIGHT_VARIANTS:
        raise UnknownVariant(f"K: unknown variant {variant!r}")
    level = float(params.get("level", 0.0))
    if level < 0.0:
        raise NonPositiveWeight("K level must be nonnegative")
    if variant == "truncated_constant":
        t_cut = float(params.get("t_cut", 0.0))
        if t_cut < 0.0:
            raise NonPositiveWeight("K t_cut must be nonnegative")
        return StateWeight(variant, level, t_cut=t_cut)
    rate = float(params.get("rate", 0.0))
    if rate <= 0.0:
        raise NonPositiveWeight("K exponential rate must be positive")
    return StateWeight(variant, level, rate=rate)


@dataclass(frozen=True)
class PowerLaw:
    """coeff * alpha**exponent on alpha >= 0 (linear when exponent == 1)."""

    coeff: float
    exponent: float

    def __call__(self, alpha):
        return self.coeff * np.power(alpha, self.exponent)


def power_law_from_config(entry: dict, name: str) -> PowerLaw:
    variant = entry.get("variant")
    params = entry.get("params", {})
    if variant not in ("linear", "power"):
        raise UnknownVariant(f"{name}: unknown variant {variant!r}")
    coeff = float(params.get("coeff", 1.0))
    exponent = 1.0 if variant == "linear" else float(params.get("exponent", 1.0))
    if coeff < 0.0:
        raise NonPositiveWeight(f"{name}: coefficient must be nonnegative")
    if exponent < 1.0:
        raise NonPositiveWeight(f"{name}: exponent must be >= 1")
    return PowerLaw(coeff, exponent)


def _cubic_inverse(y: np.ndarray, beta: float) -> np.ndarray:
    """Unique real root of beta*x^3 + x = y for beta > 0 (Cardano + one
    Newton polish step)."""
    p = 1.0 / beta
    q = -y / beta
    disc = np.sqrt(0.25 * q * q + (p / 3.0) ** 3)
    x = np.cbrt(-0.5 * q + disc) + np.cbrt(-0.5 * q - disc)
    return x - (beta * x**3 + x - y) / (3.0 * beta * x * x + 1.0)


@dataclass(frozen=True, eq=False)
class DiffeoMap:
    """Coordinate diffeomorphism of R^n from the catalog.

    identity:   h(x) = x
    linear:     h(x) = M x, M invertible
    odd_cubic:  h_i(x) = x_i + beta * x_i**3, beta >= 0

    Identity and odd_cubic have diagonal Jacobians, which batch operations
    exploit.
    """

    variant: str
    dim: int
    matrix: np.ndarray | None = None
    matrix_inv: np.ndarray | None = None
    beta: float = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.variant == "identity":
            return x.copy()
        if self.variant == "linear":
            return self.matrix @ x
        return x + self.beta * x**3

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        if self.variant == "identity":
            return np.array(xs, dtype=float)
        if self.variant == "linear":
            return xs @ self.matrix.T
        return xs + self.beta * xs**3

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.variant == "identity":
            return y.copy()
        if self.variant == "linear":
            return self.matrix_inv @ y
        if self.beta == 0.0:
            return y.copy()
        return _cubic_inverse(y, self.beta)

    def _diag_jacobian(self, x: np.ndarray) -> np.ndarray:
        return 1.0 + 3.0 * self.beta * np.asarray(x, dtype=float) ** 2

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.variant == "identity":
            return np.eye(self.dim)
        if self.variant == "linear":
            return self.matrix.copy()
        return np.diag(self._diag_jacobian(x))

    def jacobian_inv(self, x: np.ndarray) -> np.ndarray:
        if self.variant == "identity":
            return np.eye(self.dim)
        if self.variant == "linear":
            return self.matrix_inv.copy()
        return np.diag(1.0 / self._diag_jacobian(x))

    def apply_jacobian_inv(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """grad h(x)^{-1} v without forming the inverse for diagonal maps."""
        if self.variant == "identity":
            return np.asarray(v, dtype=float).copy()
        if self.variant == "linear":
            return self.matrix_inv @ v
        return v / self._diag_jacobian(x)

    def apply_jacobian_inv_t(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """grad h(x)^{-T} v (inverse transpose applied to a vector)."""
        if self.variant == "identity":
            return np.asarray(v, dtype=float).copy()
        if self.variant == "linear":
            return self.matrix_inv.T @ v
        return v / self._diag_jacobian(x)

    def apply_jacobian_t(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """grad h(x)^T v."""
        if self.variant == "identity":
            return np.asarray(v, dtype=float).copy()
        if self.variant == "linear":
            return self.matrix.T @ v
        return v * self._diag_jacobian(x)

    def apply_jacobian_inv_batch(self, xs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Row-wise grad h(x_i)^{-1} v_i for stacked states/vectors."""
        if self.variant == "identity":
            return np.array(vs, dtype=float)
        if self.variant == "linear":
            return vs @ self.matrix_inv.T
        return vs / (1.0 + 3.0 * self.beta * xs**2)


def diffeo_from_config(entry: dict, dim: int) -> DiffeoMap:
    variant = entry.get("variant")
    params = entry.get("params", {})
    if variant not in DIFFEO_VARIANTS:
        raise UnknownVariant(f"h: unknown variant {variant!r}")
    if variant == "identity":
        return DiffeoMap("identity", dim)
    if variant == "linear":
        m = np.asarray(params.get("matrix"), dtype=float)
        if m.shape != (dim, dim):
            raise DimensionMismatch(
                f"h.matrix: expected shape {(dim, dim)}, got {m.shape}")
        try:
            m_inv = np.linalg.inv(m)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian("h.matrix is singular") from exc
        if not np.all(np.isfinite(m_inv)) or np.linalg.cond(m) > 1e12:
            raise SingularJacobian("h.matrix is numerically singular")
        return DiffeoMap("linear", dim, matrix=m, matrix_inv=m_inv)
    beta = float(params.get("beta", 0.0))
    if beta < 0.0:
        raise NonPositiveWeight("h odd_cubic beta must be nonnegative")
    return DiffeoMap("odd_cubic", dim, beta=beta)
