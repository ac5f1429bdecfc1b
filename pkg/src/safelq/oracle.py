"""Brute-force dynamic-programming oracle.

Backward value iteration on a rectangular state lattice over the constraint
set, a bounded control grid, and an explicit-Euler time discretization:

    V(s_i, x) = min over u of [ cost(s_i, x, u) dt + V(s_{i+1}, x + f dt) ]

with multilinear interpolation for off-grid next states.  Any transition
whose interpolation cell touches the complement of Omega is poisoned to
+inf, so feasibility is never certified through boundary-crossing cells.
Restricting controls to a finite grid makes the table an upper bound on the
true value; it serves as the independent ground truth for the Riccati-based
values at desk scale (state dimension <= 2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarseWarning
from .model import (AlphaPolicy, ProblemSpec, eval_dynamics_batch,
                    _sup_alpha_gain)

_INF = np.inf


@dataclass(frozen=True, eq=False)
class DPProblem:
    """Discretization of the control problem for value iteration.

    cost_mode "fixed" evaluates the alpha-parametrized rate along ``alpha``;
    "sup" evaluates the marginal-function rate (the adversarial supremum).
    """

    spec: ProblemSpec
    t: float
    T: float
    n_steps: int
    state_axes: tuple[np.ndarray, ...]
    controls: np.ndarray          # (n_u, m)
    cost_mode: str = "sup"
    alpha: AlphaPolicy | None = None

    @property
    def dt(self) -> float:
        return (self.T - self.t) / self.n_steps

    @property
    def state_shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.state_axes)

    def state_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.state_axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


def build_dp(spec: ProblemSpec, t: float, T: float, n_steps: int,
             state_res: int, u_max: float, control_res: int,
             cost_mode: str = "sup",
             alpha: AlphaPolicy | None = None) -> DPProblem:
    """Uniform lattice over the bounding box of Omega with a box control grid."""
    n = spec.dim_state
    if n > 2:
        raise ValueError("the oracle supports state dimension <= 2")
    if cost_mode not in ("sup", "fixed"):
        raise ValueError("cost_mode must be 'sup' or 'fixed'")
    if cost_mode == "fixed" and alpha is None:
        raise ValueError("fixed cost mode needs an alpha policy")
    if (n_steps + 1) * state_res**n > 50_000_000:
        raise ValueError("value table would exceed the 5e7-entry budget")
    lo, hi = spec.omega.bounding_box()
    axes = tuple(np.linspace(lo[i], hi[i], state_res) for i in range(n))
    m = spec.dim_control
    per_axis = [np.linspace(-u_max, u_max, control_res)] * m
    mesh = np.meshgrid(*per_axis, indexing="ij")
    controls = np.stack([g.ravel() for g in mesh], axis=1)
    return DPProblem(spec=spec, t=t, T=T, n_steps=n_steps, state_axes=axes,
                     controls=controls, cost_mode=cost_mode, alpha=alpha)


def _interpolate(values: np.ndarray, axes: tuple[np.ndarray, ...],
                 points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation, conservatively poisoned.

    A query is +inf when it falls off the lattice or when ANY corner of its
    cell is non-finite, regardless of that corner's weight: feasibility is
    never certified through a cell touching the constraint complement.
    """
    n = len(axes)
    n_pts = points.shape[0]
    idx = []
    frac = []
    outside = np.zeros(n_pts, dtype=bool)
    snap = 1e-9
    for d in range(n):
        ax = axes[d]
        step = ax[1] - ax[0]
        pos = (points[:, d] - ax[0]) / step
        outside |= (pos < -snap) | (pos > len(ax) - 1 + snap)
        i = np.clip(np.floor(pos).astype(int), 0, len(ax) - 2)
        f = np.clip(pos - i, 0.0, 1.0)
        # snap on-node queries so a zero-weight neighbor cannot poison them
        f = np.where(f < snap, 0.0, np.where(f > 1.0 - snap, 1.0, f))
        idx.append(i)
        frac.append(f)
    flat_values = values.ravel()
    out = np.zeros(n_pts)
    bad = outside.copy()
    for corner in range(1 << n):
        weight = np.ones(n_pts)
        flat = np.zeros(n_pts, dtype=int)
        stride = 1
        for d in reversed(range(n)):
            bit = (corner >> d) & 1
            weight *= frac[d] if bit else (1.0 - frac[d])
            flat += (idx[d] + bit) * stride
            stride *= len(axes[d])
        vals = flat_values[flat]
        finite = np.isfinite(vals)
        bad |= ~finite & (weight > 0.0)
        out += weight * np.where(finite, vals, 0.0)
    out[bad] = _INF
    return out


def _stage_cost(dp: DPProblem, s: float, states: np.ndarray,
                u: np.ndarray) -> np.ndarray:
    spec = dp.spec
    hx = spec.h.forward_batch(states)
    g = np.sum(hx * hx, axis=1)
    u_sq = 0.5 * float(u @ u)
    if dp.cost_mode == "fixed":
        alpha_val = dp.alpha.value(s)
        return (spec.q_coeff(s, alpha_val) * g + u_sq
                - float(spec.b(alpha_val)))
    half_k = 0.5 * spec.K.value(s)
    gains = np.array([_sup_alpha_gain(spec.a, spec.b, gi)[1] for gi in g])
    return half_k * g + u_sq + gains


def _check_cfl(dp: DPProblem, states: np.ndarray) -> None:
    spec = dp.spec
    cell = min(float(ax[1] - ax[0]) for ax in dp.state_axes)
    u_extreme = dp.controls[np.argmax(np.linalg.norm(dp.controls, axis=1))]
    speeds = np.linalg.norm(
        eval_dynamics_batch(spec, dp.t, states, u_extreme), axis=1)
    if float(np.max(speeds)) * dp.dt > cell:
        warnings.warn(
            "DP transitions step across more than one cell; refine the grids",
            GridTooCoarseWarning)


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Backward-iteration output: V[i] is the table at time node i."""

    dp: DPProblem
    V: np.ndarray          # (n_steps + 1,) + state_shape
    time_nodes: np.ndarray

    def value_at(self, x: np.ndarray, time_index: int = 0) -> float:
        pt = np.asarray(x, dtype=float)[None, :]
        return float(_interpolate(self.V[time_index], self.dp.state_axes, pt)[0])

    def feasible_mask(self, time_index: int = 0) -> np.ndarray:
        return np.isfinite(self.V[time_index])

    def csv_rows(self) -> tuple[list[str], list[list[float]]]:
        n = len(self.dp.state_axes)
        header = ["s"] + [f"x_{i + 1}" for i in range(n)] + ["V"]
        pts = self.dp.state_points()
        rows = []
        for i, s in enumerate(self.time_nodes):
            for p, v in zip(pts, self.V[i].ravel()):
                rows.append([float(s)] + [float(c) for c in p] + [float(v)])
        return header, rows


def brute_force_value(dp: DPProblem, spec: ProblemSpec | None = None
                      ) -> ValueTable:
    """Backward value iteration; transitions leaving Omega score +inf."""
    spec = dp.spec if spec is None else spec
    states = dp.state_points()
    n_pts = states.shape[0]
    shape = dp.state_shape
    dt = dp.dt
    time_nodes = dp.t + dt * np.arange(dp.n_steps + 1)

    margins = np.array([spec.omega.boundary_margin(p) for p in states])
    inside = margins <= 1e-12
    _check_cfl(dp, states[inside] if np.any(inside) else states)

    v = np.where(inside, 0.0, _INF)
    tables = np.empty((dp.n_steps + 1, n_pts))
    tables[dp.n_steps] = v
    for i in range(dp.n_steps - 1, -1, -1):
        s = float(time_nodes[i])
        best = np.full(n_pts, _INF)
        for u in dp.controls:
            nxt = states + dt * eval_dynamics_batch(spec, s, states, u)
            cont = _interpolate(tables[i + 1].reshape(shape), dp.state_axes, nxt)
            total = _stage_cost(dp, s, states, u) * dt + cont
            np.minimum(best, total, out=best)
        best[~inside] = _INF
        tables[i] = best
    return ValueTable(dp=dp, V=tables.reshape((dp.n_steps + 1,) + shape),
                      time_nodes=time_nodes)


def oracle_feasible_set(dp: DPProblem, spec: ProblemSpec | None = None
                        ) -> np.ndarray:
    """States from which some control-grid sequence stays in Omega.

    Boolean mask over the state lattice: the zero-cost value table is finite
    exactly on the discrete viability kernel surrogate.
    """
    spec = dp.spec if spec is None else spec
    states = dp.state_points()
    n_pts = states.shape[0]
    shape = dp.state_shape
    dt = dp.dt

    margins = np.array([spec.omega.boundary_margin(p) for p in states])
    inside = margins <= 1e-12
    feasible = np.where(inside, 0.0, _INF)
    for i in range(dp.n_steps - 1, -1, -1):
        s = float(dp.t + i * dt)
        best = np.full(n_pts, _INF)
        for u in dp.controls:
            nxt = states + dt * eval_dynamics_batch(spec, s, states, u)
            cont = _interpolate(feasible.reshape(shape), dp.state_axes, nxt)
            np.minimum(best, cont, out=best)
        best[~inside] = _INF
        feasible = best
    return np.isfinite(feasible).reshape(shape)
