"""The adversarial weight player.

The pointwise best response to a state x is the argmax map

    Lambda(s, x) = argmax over beta >= 0 of a(beta) |h(x)|^2 - b(beta),

single valued for the power catalog with ties broken by the smallest
maximizer.  The game value sup over policies alpha of W^alpha(t, x) is
approached from below by constant-policy sweeps and computed by a relaxed
Picard iteration on the coupled (P, xi, alpha) system: each pass solves the
stabilizing Riccati equation for the current alpha, simulates its closed
loop, and re-samples alpha from Lambda along the trajectory.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .model import AlphaPolicy, ProblemSpec, _sup_alpha_gain
from .riccati import RiccatiSolution, solve_stabilizing
from .synthesis import Trajectory, simulate_closed_loop, value_from_riccati


def lambda_map(spec: ProblemSpec, s: float, x: np.ndarray) -> float:
    """Smallest maximizer of a(beta) |h(x)|^2 - b(beta) over beta >= 0."""
    hx = spec.h.forward(np.asarray(x, dtype=float))
    alpha_star, _ = _sup_alpha_gain(spec.a, spec.b, float(hx @ hx))
    return alpha_star


def lambda_map_numeric(spec: ProblemSpec, s: float, x: np.ndarray,
                       beta_max: float | None = None,
                       tol: float = 1e-12) -> float:
    """Golden-section fallback for the argmax; cross-checks the closed form."""
    hx = spec.h.forward(np.asarray(x, dtype=float))
    g = float(hx @ hx)

    def gain(beta):
        return float(spec.a(beta)) * g - float(spec.b(beta))

    if beta_max is None:
        # beyond this point the penalty surely dominates the gain
        p, q = spec.a.exponent, spec.b.exponent
        c, d = max(spec.a.coeff, 1e-30), max(spec.b.coeff, 1e-30)
        beta_max = max(1.0, (2.0 * c * max(g, 1.0) / d) ** (1.0 / (q - p)))
    lo, hi = 0.0, beta_max
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = gain(x1), gain(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = gain(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = gain(x1)
    best = 0.5 * (lo + hi)
    # tie break toward zero when the gain there is no worse
    if gain(0.0) >= gain(best) - 1e-15:
        return 0.0
    return float(best)


def lambda_lipschitz_estimate(spec: ProblemSpec, s: float,
                              sample_pairs) -> float:
    """max |Lambda(s,x) - Lambda(s,y)| / |x - y| over the supplied pairs."""
    worst = 0.0
    for x, y in sample_pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gap = np.linalg.norm(x - y)
        if gap == 0.0:
            continue
        worst = max(worst, abs(lambda_map(spec, s, x)
                               - lambda_map(spec, s, y)) / gap)
    return float(worst)


@dataclass(frozen=True, eq=False)
class ConstantAlphaSweep:
    """Lower bound on the game value from constant-on-window policies."""

    w_lower: float
    best_alpha: float
    table: tuple[tuple[float, float], ...]  # (alpha, value); -inf when skipped

    def to_dict(self) -> dict:
        return {"w_lower": self.w_lower, "best_alpha": self.best_alpha,
                "table": [[a, v] for a, v in self.table]}


def sup_over_constant_alpha(spec: ProblemSpec, t: float, x: np.ndarray,
                            alpha_grid, support_horizon: float | None = None,
                            riccati_tol: float = 1e-8) -> ConstantAlphaSweep:
    """Evaluate W^alpha for each constant policy on the grid and keep the max.

    Each policy holds its value on [t, t + support window] and is zero
    afterwards, so the b-integral stays finite.  The max is a certified lower
    bound on the supremum over all measurable policies.  Policies whose
    stabilizing solve fails are skipped with a warning and scored -inf.
    """
    support = (spec.grid.t_max - t if support_horizon is None
               else support_horizon)
    table = []
    best = -np.inf
    best_alpha = float(alpha_grid[0])
    for val in alpha_grid:
        policy = AlphaPolicy.constant(float(val), t, t + support)
        try:
            sol = solve_stabilizing(spec, policy, t, t, tol=riccati_tol)
            w = value_from_riccati(spec, sol, policy, t, x)
        except NoConvergence as exc:
            warnings.warn(f"constant alpha={val}: {exc}")
            w = -np.inf
        table.append((float(val), float(w)))
        if w > best:
            best = w
            best_alpha = float(val)
    return ConstantAlphaSweep(w_lower=float(best), best_alpha=best_alpha,
                              table=tuple(table))


@dataclass(frozen=True, eq=False)
class GameSolution:
    """Fixed point of the coupled weight/Riccati/trajectory system."""

    alpha_star: AlphaPolicy
    P_star: RiccatiSolution
    xi_star: Trajectory
    W: float
    iterations: int
    alpha_update_norm: float
    converged: bool

    def to_dict(self) -> dict:
        return {"W": self.W, "iterations": self.iterations,
                "alpha_update_norm": self.alpha_update_norm,
                "converged": self.converged,
                "alpha_star": [float(v) for v in self.alpha_star.values]}


def solve_coupled(spec: ProblemSpec, t: float, x0: np.ndarray,
                  tol: float = 1e-6, max_iter: int = 50,
                  relaxation: float = 0.5, T_sim: float | None = None,
                  dt: float | None = None,
                  riccati_tol: float | None = None) -> GameSolution:
    """Relaxed Picard iteration for the coupled (P*, xi*, alpha*) system.

    Starting from alpha = 0 (the pure quadratic solve), each pass computes
    the stabilizing P for the current policy, simulates the closed loop from
    x0, and blends the policy toward Lambda sampled along the trajectory.
    Stops when the sup-norm policy update drops below ``tol``; on max_iter
    the last iterate is returned with ``converged`` False.  The reported
    value W re-solves P for the final policy so all pieces are consistent.
    """
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0, dtype=float)
    if not spec.omega.contains(x0, tol=1e-9):
        raise ValueError("initial state is outside the constraint set")
    dt = spec.grid.dt if dt is None else dt
    if T_sim is None:
        T_sim = t + min(16.0, spec.grid.t_max - t)
    riccati_tol = min(1e-8, 0.01 * tol) if riccati_tol is None else riccati_tol

    n_steps = max(1, int(round((T_sim - t) / dt)))
    nodes = t + (T_sim - t) / n_steps * np.arange(n_steps + 1)
    alpha = AlphaPolicy(nodes, np.zeros_like(nodes))

    update_norm = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        sol = solve_stabilizing(spec, alpha, t, T_sim, tol=riccati_tol, dt=dt)
        traj = simulate_closed_loop(spec, sol, alpha, t, x0, T_sim, dt=dt)
        target = np.array([lambda_map(spec, float(s), traj.states[k])
                           for k, s in enumerate(nodes)])
        new_values = (1.0 - relaxation) * alpha.values + relaxation * target
        update_norm = float(np.max(np.abs(new_values - alpha.values)))
        alpha = AlphaPolicy(nodes, new_values)
        if update_norm < tol:
            converged = True
            break

    p_star = solve_stabilizing(spec, alpha, t, T_sim, tol=riccati_tol, dt=dt)
    xi_star = simulate_closed_loop(spec, p_star, alpha, t, x0, T_sim, dt=dt)
    w = value_from_riccati(spec, p_star, alpha, t, x0)
    return GameSolution(alpha_star=alpha, P_star=p_star, xi_star=xi_star,
                        W=float(w), iterations=iterations,
                        alpha_update_norm=update_norm, converged=converged)
