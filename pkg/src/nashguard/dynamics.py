"""Discrete-time unicycle dynamics for a team of agents.

State per agent: (px, py, theta, v); control per agent: (omega, a).
The joint system stacks agents along the first axis; agents are dynamically
decoupled, so the joint step is the per-agent step applied row-wise and the
joint Jacobians are block diagonal. Integration is explicit Euler with a
fixed step ``dt``; heading is never wrapped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError

STATE_DIM = 4
CONTROL_DIM = 2

# Array conventions used throughout the package:
#   JointState        (N, 4)
#   JointControl      (N, 2)
#   Policy            (N, T, 2)   with T = H - 1 control steps
#   StateTrajectory   (T + 1, N, 4)  including the initial state


@dataclass(frozen=True)
class AgentState:
    """Planar unicycle state: position [m], heading [rad], speed [m/s]."""

    px: float
    py: float
    theta: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.theta, self.v], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "AgentState":
        px, py, theta, v = np.asarray(arr, dtype=float)
        return cls(px, py, theta, v)


@dataclass(frozen=True)
class AgentControl:
    """Unicycle control: angular velocity [rad/s] and acceleration [m/s^2]."""

    omega: float
    a: float

    def as_array(self) -> np.ndarray:
        return np.array([self.omega, self.a], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "AgentControl":
        omega, a = np.asarray(arr, dtype=float)
        return cls(omega, a)


def _require_finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise InvalidInputError(f"{name} contains non-finite entries")


def step_agent(state: AgentState, control: AgentControl, dt: float) -> AgentState:
    """Advance one agent by one explicit-Euler step."""
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidInputError(f"dt must be positive and finite, got {dt}")
    x = state.as_array()
    u = control.as_array()
    _require_finite("state", x)
    _require_finite("control", u)
    nxt = step_joint(x[None, :], u[None, :], dt)
    return AgentState.from_array(nxt[0])


def step_joint(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Advance the joint state (N, 4) under joint control (N, 2)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim != 2 or x.shape[1] != STATE_DIM:
        raise DimensionError(f"joint state must be (N, {STATE_DIM}), got {x.shape}")
    if u.shape != (x.shape[0], CONTROL_DIM):
        raise DimensionError(
            f"joint control must be ({x.shape[0]}, {CONTROL_DIM}), got {u.shape}"
        )
    out = x.copy()
    out[:, 0] += dt * x[:, 3] * np.cos(x[:, 2])
    out[:, 1] += dt * x[:, 3] * np.sin(x[:, 2])
    out[:, 2] += dt * u[:, 0]
    out[:, 3] += dt * u[:, 1]
    return out


def rollout(x0: np.ndarray, pi: np.ndarray, dt: float) -> np.ndarray:
    """Propagate a policy (N, T, 2) from x0, returning (T + 1, N, 4) incl. x0."""
    x0 = np.asarray(x0, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 3 or pi.shape[0] != x0.shape[0] or pi.shape[2] != CONTROL_DIM:
        raise DimensionError(f"policy must be (N, T, {CONTROL_DIM}), got {pi.shape}")
    horizon = pi.shape[1]
    if horizon < 1:
        raise DimensionError("policy horizon must be >= 1")
    traj = np.empty((horizon + 1, x0.shape[0], STATE_DIM))
    traj[0] = x0
    for k in range(horizon):
        traj[k + 1] = step_joint(traj[k], pi[:, k, :], dt)
    return traj


def linearize(x: np.ndarray, u: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of step_joint at (x, u).

    Returns (A, B) with A of shape (4N, 4N) and B of shape (4N, 2N), both
    block diagonal per agent. B is constant: controls enter linearly.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n_agents = x.shape[0]
    blocks_a = agent_state_jacobians(x, dt)
    a_mat = np.zeros((STATE_DIM * n_agents, STATE_DIM * n_agents))
    b_mat = np.zeros((STATE_DIM * n_agents, CONTROL_DIM * n_agents))
    for i in range(n_agents):
        r = slice(STATE_DIM * i, STATE_DIM * (i + 1))
        c = slice(CONTROL_DIM * i, CONTROL_DIM * (i + 1))
        a_mat[r, r] = blocks_a[i]
        b_mat[r, c] = control_jacobian_block(dt)
    return a_mat, b_mat


def agent_state_jacobians(x: np.ndarray, dt: float) -> np.ndarray:
    """Per-agent 4x4 state Jacobians, shape (N, 4, 4)."""
    x = np.asarray(x, dtype=float)
    n_agents = x.shape[0]
    blocks = np.tile(np.eye(STATE_DIM), (n_agents, 1, 1))
    theta = x[:, 2]
    v = x[:, 3]
    blocks[:, 0, 2] = -dt * v * np.sin(theta)
    blocks[:, 0, 3] = dt * np.cos(theta)
    blocks[:, 1, 2] = dt * v * np.cos(theta)
    blocks[:, 1, 3] = dt * np.sin(theta)
    return blocks


def control_jacobian_block(dt: float) -> np.ndarray:
    """The constant 4x2 per-agent control Jacobian."""
    b = np.zeros((STATE_DIM, CONTROL_DIM))
    b[2, 0] = dt
    b[3, 1] = dt
    return b


def costate_hessian_block(x_agent: np.ndarray, mu_agent: np.ndarray, dt: float) -> np.ndarray:
    """Second-order dynamics term d/dx (-A(x)^T mu) for one agent.

    Only the (theta, theta) and (theta, v) entries of the Euler unicycle are
    nonlinear, so the result has three nonzero entries.
    """
    theta, v = x_agent[2], x_agent[3]
    mu_px, mu_py = mu_agent[0], mu_agent[1]
    out = np.zeros((STATE_DIM, STATE_DIM))
    out[2, 2] = dt * v * (mu_px * np.cos(theta) + mu_py * np.sin(theta))
    cross = dt * (mu_px * np.sin(theta) - mu_py * np.cos(theta))
    out[2, 3] = cross
    out[3, 2] = cross
    return out
