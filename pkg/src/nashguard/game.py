"""Costs, coupled constraints, and the game definition.

Constraints are written in "<= 0 is feasible" form:
  collision:  r^2 - ||p_i - p_j||^2   for every unordered agent pair
  boundary:   r^2 - ||p_i - q_b||^2   with q_b the closest point of polyline b

Canonical constraint ordering is time-major; within a time step all agent
pairs come first in lexicographic order, then (boundary, agent) entries in
lexicographic order. Multipliers and warm starts rely on this layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import STATE_DIM
from .errors import DimensionError, InvalidInputError

_SYM_TOL = 1e-9


def _check_symmetric_psd(name: str, mat: np.ndarray, strict: bool) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInputError(f"{name} must be square, got {mat.shape}")
    if not np.allclose(mat, mat.T, atol=_SYM_TOL):
        raise InvalidInputError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    if strict:
        if eigs.min() <= 0:
            raise InvalidInputError(f"{name} must be positive definite (min eig {eigs.min():g})")
    elif eigs.min() < -_SYM_TOL:
        raise InvalidInputError(f"{name} must be positive semidefinite (min eig {eigs.min():g})")


@dataclass(frozen=True)
class QuadraticCost:
    """Quadratic tracking cost toward a desired final joint state.

    Q and Qf weight the joint state (PSD), R weights the agent's own control
    (PD). ``xf`` is the desired final joint state, flattened to length 4N.
    """

    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray
    xf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "Qf", np.asarray(self.Qf, dtype=float))
        object.__setattr__(self, "xf", np.asarray(self.xf, dtype=float).ravel())
        _check_symmetric_psd("Q", self.Q, strict=False)
        _check_symmetric_psd("Qf", self.Qf, strict=False)
        _check_symmetric_psd("R", self.R, strict=True)
        if self.Q.shape != self.Qf.shape:
            raise DimensionError("Q and Qf must have the same shape")
        if self.xf.shape[0] != self.Q.shape[0]:
            raise DimensionError("xf length must match Q dimension")

    @property
    def n(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class ConstraintSet:
    """Collision radius plus road boundary polylines.

    Each boundary is an (k, 2) array of vertices; vehicles must keep at least
    the collision radius away from every boundary polyline.
    """

    radius: float
    boundaries: tuple = ()

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError(f"collision radius must be positive, got {self.radius}")
        polys = tuple(np.asarray(b, dtype=float) for b in self.boundaries)
        for b in polys:
            if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] < 2:
                raise InvalidInputError("each boundary must be a (k>=2, 2) polyline")
        object.__setattr__(self, "boundaries", polys)

    def constraints_per_step(self, n_agents: int) -> int:
        return n_agents * (n_agents - 1) // 2 + len(self.boundaries) * n_agents


@dataclass(frozen=True)
class GameDefinition:
    """An N-player open-loop game over H steps (H-1 controls per player)."""

    n_agents: int
    horizon: int
    dt: float
    costs: tuple
    constraints: ConstraintSet

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        if self.horizon < 2:
            raise InvalidInputError(f"horizon must be >= 2, got {self.horizon}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if len(self.costs) != self.n_agents:
            raise DimensionError("one cost per agent required")
        n = STATE_DIM * self.n_agents
        for c in self.costs:
            if c.n != n:
                raise DimensionError(f"cost dimension {c.n} does not match joint dim {n}")

    def with_cost(self, agent: int, cost: QuadraticCost) -> "GameDefinition":
        costs = list(self.costs)
        costs[agent] = cost
        return GameDefinition(self.n_agents, self.horizon, self.dt, tuple(costs), self.constraints)


@dataclass
class NashSolution:
    """Open-loop Nash point with multipliers and solve diagnostics."""

    X: np.ndarray              # (H, N, 4) including the initial state
    pi: np.ndarray             # (N, H-1, 2)
    eq_multipliers: np.ndarray   # (N, H-1, 4N) one copy of dynamics duals per player
    ineq_multipliers: np.ndarray  # (g,) shared across players, >= 0
    residual_norm: float
    iterations: int
    wall_time: float
    converged: bool = True
    penalty_levels: int = 0
    stats: dict = field(default_factory=dict)


def stage_cost(x: np.ndarray, u_i: np.ndarray, cost: QuadraticCost) -> float:
    """0.5 (x - xf)^T Q (x - xf) + 0.5 u^T R u for one time step."""
    dx = np.asarray(x, dtype=float).ravel() - cost.xf
    u = np.asarray(u_i, dtype=float).ravel()
    if dx.shape[0] != cost.n:
        raise DimensionError(f"state length {dx.shape[0]} does not match cost dim {cost.n}")
    if u.shape[0] != cost.R.shape[0]:
        raise DimensionError(f"control length {u.shape[0]} does not match R dim {cost.R.shape[0]}")
    return 0.5 * dx @ cost.Q @ dx + 0.5 * u @ cost.R @ u


def total_cost(X: np.ndarray, pi_i: np.ndarray, cost: QuadraticCost) -> float:
    """Stage costs over (X[k], pi_i[k]) plus terminal cost at X[-1].

    X has one more entry than pi_i; X[0] pairs with pi_i[0].
    """
    X = np.asarray(X, dtype=float)
    pi_i = np.asarray(pi_i, dtype=float)
    if X.shape[0] != pi_i.shape[0] + 1:
        raise DimensionError(
            f"trajectory length {X.shape[0]} must be control length {pi_i.shape[0]} + 1"
        )
    total = 0.0
    for k in range(pi_i.shape[0]):
        total += stage_cost(X[k], pi_i[k], cost)
    dx = X[-1].ravel() - cost.xf
    return total + 0.5 * dx @ cost.Qf @ dx


def closest_boundary_points(poly: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Closest point on a polyline for each query point, shape like points."""
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    starts = poly[:-1]
    ends = poly[1:]
    seg = ends - starts                                # (S, 2)
    seg_len2 = np.maximum((seg ** 2).sum(axis=1), 1e-300)
    rel = flat[:, None, :] - starts[None, :, :]        # (P, S, 2)
    t = np.clip((rel * seg[None, :, :]).sum(axis=2) / seg_len2[None, :], 0.0, 1.0)
    proj = starts[None, :, :] + t[:, :, None] * seg[None, :, :]
    d2 = ((flat[:, None, :] - proj) ** 2).sum(axis=2)
    best = np.argmin(d2, axis=1)
    closest = proj[np.arange(flat.shape[0]), best]
    return closest.reshape(pts.shape)


def agent_pairs(n_agents: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_agents) for j in range(i + 1, n_agents)]


def evaluate_constraints(X: np.ndarray, cs: ConstraintSet) -> np.ndarray:
    """All constraint values over a trajectory, canonical (time-major) order."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None, :, :]
    steps, n_agents, _ = X.shape
    pos = X[:, :, :2]
    r2 = cs.radius ** 2
    pairs = agent_pairs(n_agents)
    per_step = len(pairs) + len(cs.boundaries) * n_agents
    vals = np.empty((steps, per_step))
    for p_idx, (i, j) in enumerate(pairs):
        diff = pos[:, i, :] - pos[:, j, :]
        vals[:, p_idx] = r2 - (diff ** 2).sum(axis=1)
    col = len(pairs)
    for b in cs.boundaries:
        q = closest_boundary_points(b, pos)            # (steps, N, 2)
        vals[:, col:col + n_agents] = r2 - ((pos - q) ** 2).sum(axis=2)
        col += n_agents
    return vals.ravel()


def constraint_jacobian(X: np.ndarray, cs: ConstraintSet) -> np.ndarray:
    """Jacobian of evaluate_constraints w.r.t. the stacked trajectory.

    Rows follow the canonical constraint order; columns are X flattened to
    length steps * 4N. The gradient of a squared distance to a convex segment
    passes through the projection, so boundary rows are exact wherever the
    closest point is unique.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None, :, :]
    steps, n_agents, _ = X.shape
    n = STATE_DIM * n_agents
    pos = X[:, :, :2]
    pairs = agent_pairs(n_agents)
    per_step = len(pairs) + len(cs.boundaries) * n_agents
    jac = np.zeros((steps * per_step, steps * n))
    for t in range(steps):
        base = t * per_step
        for p_idx, (i, j) in enumerate(pairs):
            diff = pos[t, i, :] - pos[t, j, :]
            row = base + p_idx
            jac[row, t * n + STATE_DIM * i: t * n + STATE_DIM * i + 2] = -2.0 * diff
            jac[row, t * n + STATE_DIM * j: t * n + STATE_DIM * j + 2] = 2.0 * diff
        col = len(pairs)
        for b in cs.boundaries:
            q = closest_boundary_points(b, pos[t])
            for i in range(n_agents):
                row = base + col + i
                jac[row, t * n + STATE_DIM * i: t * n + STATE_DIM * i + 2] = (
                    -2.0 * (pos[t, i] - q[i])
                )
            col += n_agents
    return jac
