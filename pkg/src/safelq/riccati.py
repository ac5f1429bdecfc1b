"""Riccati sweeps and stabilizing solutions.

The finite-horizon terminal-value problem

    -P'(s) = A(s)^T P + P A(s) - P B(s) R^{-1} B(s)^T P + Q^alpha(s),
     P(T)  = 0,     Q^alpha(s) = (K(s)/2 + a(alpha(s))) I,

is integrated backward with fixed-step RK4, symmetrizing after every step.
The stabilizing (minimal) infinite-horizon solution is obtained
constructively as the limit of finite-horizon sweeps over geometrically
growing horizons, compared on the evaluation window until the gap drops
below tolerance.  A Newton-Kleinman algebraic solve provides an independent
cross-check for constant coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NonFiniteState, NotStabilizable, OutOfGrid
from .model import AlphaPolicy, ProblemSpec
from .numerics import SampledPath, sym


@dataclass(frozen=True)
class ConvergenceCertificate:
    """Horizon-doubling record: the horizons tried and the gaps achieved."""

    horizons: tuple[float, ...]
    gaps: tuple[float, ...]
    tol: float
    converged: bool

    def to_dict(self) -> dict:
        return {"horizons": list(self.horizons), "gaps": list(self.gaps),
                "tol": self.tol, "converged": self.converged}


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Symmetric P(s) on a uniform ascending grid with dense output.

    ``kind`` is "finite_horizon" (P vanishes at the terminal node) or
    "stabilizing" (converged limit restricted to the evaluation window, with
    a certificate).  ``dP`` stores the exact time derivative at each node so
    dense output is cubic Hermite.
    """

    nodes: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    kind: str
    alpha: AlphaPolicy
    horizon: float | None = None
    certificate: ConvergenceCertificate | None = None

    @property
    def t_start(self) -> float:
        return float(self.nodes[0])

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def dt(self) -> float:
        if len(self.nodes) < 2:
            return 0.0
        return float(self.nodes[1] - self.nodes[0])

    def _path(self) -> SampledPath:
        return SampledPath(nodes=self.nodes, values=self.P, derivs=self.dP)

    def at(self, s: float) -> np.ndarray:
        return sym(self._path().at(s))

    def at_many(self, s: np.ndarray) -> np.ndarray:
        vals = self._path().at_many(s)
        return 0.5 * (vals + np.swapaxes(vals, -1, -2))

    def node_index(self, s: float, tol: float = 1e-9) -> int:
        """Index of the grid node nearest to s."""
        if len(self.nodes) == 1:
            if abs(s - self.nodes[0]) > tol:
                raise OutOfGrid(f"time {s} not on the solution grid")
            return 0
        i = int(round((s - self.t_start) / self.dt))
        if i < 0 or i >= len(self.nodes):
            raise OutOfGrid(f"time {s} outside [{self.t_start}, {self.t_end}]")
        return i

    def csv_rows(self) -> tuple[list[str], list[list[float]]]:
        """Header and rows: s plus the upper triangle of P, row-major."""
        n = self.P.shape[1]
        header = ["s"] + [f"P_{i + 1}{j + 1}" for i in range(n)
                          for j in range(i, n)]
        iu = [(i, j) for i in range(n) for j in range(i, n)]
        rows = [[float(s)] + [float(p[i, j]) for (i, j) in iu]
                for s, p in zip(self.nodes, self.P)]
        return header, rows


def _stage_data(spec: ProblemSpec, alpha: AlphaPolicy, times: np.ndarray):
    """Per-time coefficient arrays A(s), S(s) = B R^{-1} B^T, q(s)."""
    a_arr = spec.A.values(times)
    b_arr = spec.B.values(times)
    s_arr = 2.0 * np.einsum("kij,klj->kil", b_arr, b_arr)
    q_arr = spec.q_coeffs(times, alpha.values_at(times))
    return a_arr, s_arr, q_arr


def _riccati_rhs(p, a, s, q, eye):
    # backward equation: P' = -(A^T P + P A - P S P + q I)
    return -(a.T @ p + p @ a - p @ s @ p + q * eye)


def _sweep(spec: ProblemSpec, alpha: AlphaPolicy, t: float, T: float,
           dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward RK4 sweep from P(T) = 0; returns ascending (nodes, P, dP)."""
    n = spec.dim_state
    eye = np.eye(n)
    if T < t:
        raise ValueError("terminal time must not precede the start time")
    steps = max(0, int(round((T - t) / dt)))
    if steps == 0:
        nodes = np.array([t])
        p0 = np.zeros((1, n, n))
        dp0 = np.array([_riccati_rhs(np.zeros((n, n)), spec.A.value(t),
                                     2.0 * spec.B.value(t) @ spec.B.value(t).T,
                                     spec.q_coeff(t, alpha.value(t)), eye)])
        return nodes, p0, dp0
    h = (T - t) / steps

    # anchor stage times at t so sweeps with different horizons evaluate the
    # (possibly discontinuous) coefficients at bit-identical times
    node_times = t + h * np.arange(steps, -1, -1)      # descending
    mid_times = node_times[:-1] - 0.5 * h
    a_n, s_n, q_n = _stage_data(spec, alpha, node_times)
    a_m, s_m, q_m = _stage_data(spec, alpha, mid_times)

    p = np.zeros((n, n))
    p_desc = np.empty((steps + 1, n, n))
    dp_desc = np.empty_like(p_desc)
    p_desc[0] = p
    for k in range(steps):
        k1 = _riccati_rhs(p, a_n[k], s_n[k], q_n[k], eye)
        dp_desc[k] = k1
        k2 = _riccati_rhs(p - 0.5 * h * k1, a_m[k], s_m[k], q_m[k], eye)
        k3 = _riccati_rhs(p - 0.5 * h * k2, a_m[k], s_m[k], q_m[k], eye)
        k4 = _riccati_rhs(p - h * k3, a_n[k + 1], s_n[k + 1], q_n[k + 1], eye)
        p = sym(p - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if not np.all(np.isfinite(p)):
            raise NonFiniteState(
                f"Riccati sweep escaped at s={node_times[k + 1]}",
                time=float(node_times[k + 1]))
        p_desc[k + 1] = p
    dp_desc[steps] = _riccati_rhs(p, a_n[steps], s_n[steps], q_n[steps], eye)

    return node_times[::-1].copy(), p_desc[::-1].copy(), dp_desc[::-1].copy()


def solve_finite_horizon(spec: ProblemSpec, alpha: AlphaPolicy, t: float,
                         T: float, dt: float | None = None) -> RiccatiSolution:
    """Finite-horizon sweep with zero terminal condition on [t, T]."""
    dt = spec.grid.dt if dt is None else dt
    nodes, p, dp = _sweep(spec, alpha, t, T, dt)
    return RiccatiSolution(nodes=nodes, P=p, dP=dp, kind="finite_horizon",
                           alpha=alpha, horizon=T)


def solve_stabilizing(spec: ProblemSpec, alpha: AlphaPolicy, t: float,
                      T_eval: float, tol: float = 1e-8,
                      T_growth: float = 2.0, dt: float | None = None,
                      T_max: float | None = None) -> RiccatiSolution:
    """Stabilizing solution as the limit of growing finite horizons.

    Horizons grow geometrically by ``T_growth`` until consecutive sweeps agree
    on [t, T_eval] to within ``tol`` (Frobenius norm per node); the converged
    sweep restricted to the window is returned together with the certificate.
    Raises NoConvergence when the cap ``T_max`` is reached first.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if T_growth <= 1.0:
        raise ValueError("T_growth must exceed 1")
    dt = spec.grid.dt if dt is None else dt
    T_max = spec.grid.t_max if T_max is None else T_max
    if T_eval < t:
        raise ValueError("T_eval must be >= t")

    m_eval = int(round((T_eval - t) / dt))
    # first horizon strictly beyond the window: near its own terminal node a
    # finite-horizon sweep is nowhere near the limit
    steps = m_eval + max(int(math.ceil(max(1.0, T_eval - t) / dt)), 1)
    cap_steps = max(int(round((T_max - t) / dt)), steps)

    horizons: list[float] = []
    gaps: list[float] = []
    prev = None
    while True:
        T_k = t + steps * dt
        nodes, p, dp = _sweep(spec, alpha, t, T_k, dt)
        window = p[: m_eval + 1]
        horizons.append(T_k)
        if prev is not None:
            gap = float(np.max(np.linalg.norm(window - prev, axis=(1, 2))))
            gaps.append(gap)
            if gap < tol:
                cert = ConvergenceCertificate(tuple(horizons), tuple(gaps),
                                              tol, True)
                return RiccatiSolution(
                    nodes=nodes[: m_eval + 1], P=window.copy(),
                    dP=dp[: m_eval + 1].copy(), kind="stabilizing",
                    alpha=alpha, certificate=cert)
        prev = window
        if steps >= cap_steps:
            raise NoConvergence(
                f"stabilizing limit gap {gaps[-1] if gaps else float('nan')} "
                f"not below {tol} at horizon cap {T_k}",
                attempts=tuple(zip(horizons, [float('nan')] + gaps)))
        steps = min(cap_steps, int(math.ceil(steps * T_growth)))


def solve_are_constant(A: np.ndarray, B: np.ndarray, R: np.ndarray,
                       Q: np.ndarray, tol: float = 1e-9,
                       max_iter: int = 60) -> np.ndarray:
    """Stabilizing root of A^T P + P A - P B R^{-1} B^T P + Q = 0.

    Newton-Kleinman iteration from a stabilizing initial gain (zero when A is
    already Hurwitz, otherwise a Bass-type gain from a shifted Lyapunov
    solve).  Each iterate solves one Lyapunov equation; convergence is
    quadratic.  Raises NotStabilizable when no stabilizing gain exists or the
    residual does not drop below tolerance.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    r_inv = np.linalg.inv(R)

    def abscissa(m):
        return float(np.max(np.linalg.eigvals(m).real))

    if abscissa(A) < 0.0:
        gain = np.zeros((B.shape[1], n))
    else:
        beta = float(np.linalg.norm(A, "fro")) + 1.0
        try:
            z = scipy.linalg.solve_continuous_lyapunov(
                -(A + beta * np.eye(n)), -2.0 * B @ B.T)
            gain = B.T @ np.linalg.inv(z)
        except np.linalg.LinAlgError as exc:
            raise NotStabilizable("Bass initialization failed") from exc
        if abscissa(A - B @ gain) >= 0.0:
            raise NotStabilizable("no stabilizing initial gain found")

    p = np.zeros((n, n))
    for _ in range(max_iter):
        a_cl = A - B @ gain
        if abscissa(a_cl) >= 0.0:
            raise NotStabilizable("closed loop lost stability during iteration")
        p_new = scipy.linalg.solve_continuous_lyapunov(
            a_cl.T, -(Q + gain.T @ R @ gain))
        p_new = sym(p_new)
        gain = r_inv @ B.T @ p_new
        if np.linalg.norm(p_new - p, "fro") <= tol * max(1.0, np.linalg.norm(p_new, "fro")):
            p = p_new
            break
        p = p_new

    residual = A.T @ p + p @ A - p @ B @ r_inv @ B.T @ p + Q
    if np.linalg.norm(residual, "fro") >= tol * 10.0:
        raise NotStabilizable(
            f"Riccati residual {np.linalg.norm(residual, 'fro'):.3e} not below tolerance")
    if abscissa(A - B @ r_inv @ B.T @ p) >= 0.0:
        raise NotStabilizable("candidate solution is not stabilizing")
    return p


@dataclass(frozen=True)
class MonotoneReport:
    ok: bool
    lambda_min: float


def check_monotone_in_T(spec: ProblemSpec, alpha: AlphaPolicy, t: float,
                        s_probe: float, T1: float, T2: float,
                        dt: float | None = None) -> MonotoneReport:
    """Smallest eigenvalue of P_{T2}(s) - P_{T1}(s) at the probe time.

    Growing the horizon must not shrink the solution: the report is ok when
    the eigenvalue stays above -1e-9.
    """
    if T2 < T1:
        raise ValueError("T2 must be >= T1")
    p1 = solve_finite_horizon(spec, alpha, t, T1, dt=dt)
    p2 = solve_finite_horizon(spec, alpha, t, T2, dt=dt)
    diff = sym(p2.at(s_probe) - p1.at(s_probe))
    lam = float(np.linalg.eigvalsh(diff)[0])
    return MonotoneReport(ok=lam >= -1e-9, lambda_min=lam)
