"""Open-loop generalized Nash equilibrium solver.

Every player minimizes its own quadratic cost subject to the shared joint
dynamics and shared inequality constraints. The first-order conditions of all
players are concatenated into one square root-finding problem over
(states, controls, per-player dynamics multipliers):

    rows:    [dynamics defect; per-player control stationarity;
              per-player state stationarity]
    columns: [states; per-player controls; per-player dynamics multipliers]

Inequality constraints enter each player's stationarity through an augmented
Lagrangian with multipliers shared across players, using the clamped form
w = max(0, lam + rho * c). An outer loop updates lam <- w and grows rho
geometrically. The inner problem is solved by Newton iterations with an
analytic sparse Jacobian, Levenberg regularization, and a backtracking line
search on the residual norm.

The returned trajectory is always an exact rollout of the returned policy;
the inner loop converges well below the reported tolerances so that the
final re-rollout does not disturb stationarity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dynamics import (
    CONTROL_DIM,
    STATE_DIM,
    agent_state_jacobians,
    control_jacobian_block,
    linearize,
    rollout,
    step_joint,
)
from .errors import (
    InvalidInputError,
    MaxIterationsExceeded,
    NonFiniteIterate,
    SingularKKTSystem,
)
from .game import (
    GameDefinition,
    NashSolution,
    agent_pairs,
    evaluate_constraints,
    constraint_jacobian,
)


@dataclass(frozen=True)
class SolverParams:
    """Tolerances and iteration limits for the Nash solver."""

    tol_stationarity: float = 1e-6
    tol_feasibility: float = 1e-6
    tol_complementarity: float = 1e-6
    max_newton_per_level: int = 100
    max_penalty_levels: int = 7
    rho_init: float = 1.0
    rho_factor: float = 10.0
    rho_max: float = 1e7
    reg_init: float = 1e-8
    reg_max: float = 1e-3
    inner_tol: float = 1e-10
    max_backtracks: int = 16


DEFAULT_PARAMS = SolverParams()


def cost_gradient(X: np.ndarray, pi_i: np.ndarray, cost) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of total_cost w.r.t. every trajectory state and control."""
    X = np.asarray(X, dtype=float)
    pi_i = np.asarray(pi_i, dtype=float)
    steps = X.shape[0]
    dx = X.reshape(steps, -1) - cost.xf[None, :]
    g_x = np.empty_like(dx)
    g_x[:-1] = dx[:-1] @ cost.Q
    g_x[-1] = dx[-1] @ cost.Qf
    g_u = pi_i @ cost.R
    return g_x, g_u


def _pair_geometry(x_dec: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Position differences p_a - p_b, shape (T, P, 2)."""
    if not pairs:
        return np.zeros((x_dec.shape[0], 0, 2))
    a_idx = np.array([p[0] for p in pairs])
    b_idx = np.array([p[1] for p in pairs])
    return x_dec[:, a_idx, :2] - x_dec[:, b_idx, :2]


def _boundary_geometry(x_dec: np.ndarray, boundaries) -> tuple[np.ndarray, np.ndarray]:
    """Offsets p - q to each boundary and an interior-projection mask.

    Returns (d, interior) with d of shape (T, B, N, 2) and interior of shape
    (T, B, N); interior is True where the closest point falls strictly inside
    a segment, which selects the rank-one curvature of the squared distance.
    """
    steps, n_agents, _ = x_dec.shape
    n_b = len(boundaries)
    d = np.zeros((steps, n_b, n_agents, 2))
    interior = np.zeros((steps, n_b, n_agents), dtype=bool)
    pos = x_dec[:, :, :2].reshape(-1, 2)
    for bi, poly in enumerate(boundaries):
        starts, ends = poly[:-1], poly[1:]
        seg = ends - starts
        seg_len2 = np.maximum((seg ** 2).sum(axis=1), 1e-300)
        rel = pos[:, None, :] - starts[None, :, :]
        t_raw = (rel * seg[None, :, :]).sum(axis=2) / seg_len2[None, :]
        t_cl = np.clip(t_raw, 0.0, 1.0)
        proj = starts[None, :, :] + t_cl[:, :, None] * seg[None, :, :]
        d2 = ((pos[:, None, :] - proj) ** 2).sum(axis=2)
        best = np.argmin(d2, axis=1)
        rows = np.arange(pos.shape[0])
        q = proj[rows, best]
        t_best = t_raw[rows, best]
        d[:, bi] = (pos - q).reshape(steps, n_agents, 2)
        interior[:, bi] = ((t_best > 0.0) & (t_best < 1.0)).reshape(steps, n_agents)
    return d, interior


class _Workspace:
    """Per-game flattened layout, fixed sparsity pattern, and evaluators."""

    def __init__(self, game: GameDefinition, x0: np.ndarray):
        self.game = game
        self.x0 = np.asarray(x0, dtype=float)
        n_agents = game.n_agents
        self.T = game.horizon - 1
        self.n = STATE_DIM * n_agents
        self.n_x = self.n * self.T
        self.n_u_agent = CONTROL_DIM * self.T
        self.n_u = self.n_u_agent * n_agents
        self.n_mu = self.n_x * n_agents
        self.dim = self.n_x + self.n_u + self.n_mu
        self.pairs = agent_pairs(n_agents)
        self.n_pairs = len(self.pairs)
        self.n_bounds = len(game.constraints.boundaries)
        self.per_step = game.constraints.constraints_per_step(n_agents)
        self.n_con = self.per_step * self.T
        # column offsets
        self.off_u = self.n_x
        self.off_mu = self.n_x + self.n_u
        # row offsets
        self.row_gd = 0
        self.row_gu = self.n_x
        self.row_gx = self.n_x + self.n_u
        self._build_pattern()

    # -- packing ----------------------------------------------------------

    def pack(self, x_dec, u, mu):
        return np.concatenate([x_dec.ravel(), u.ravel(), mu.ravel()])

    def unpack(self, z):
        T, n_agents = self.T, self.game.n_agents
        x_dec = z[: self.n_x].reshape(T, n_agents, STATE_DIM)
        u = z[self.off_u: self.off_mu].reshape(n_agents, T, CONTROL_DIM)
        mu = z[self.off_mu:].reshape(n_agents, T, self.n)
        return x_dec, u, mu

    def reroll(self, z):
        """Replace the state part with the exact rollout of the controls."""
        x_dec, u, mu = self.unpack(z)
        traj = rollout(self.x0, np.ascontiguousarray(u), self.game.dt)
        return self.pack(traj[1:], u, mu)

    # -- residual ----------------------------------------------------------

    def constraints(self, x_dec):
        return evaluate_constraints(x_dec, self.game.constraints)

    def residual(self, z, lam, rho):
        game = self.game
        T, n_agents, n = self.T, game.n_agents, self.n
        dt = game.dt
        x_dec, u, mu = self.unpack(z)
        states_prev = np.concatenate([self.x0[None], x_dec[:-1]], axis=0)
        ctrl = u.transpose(1, 0, 2)
        f_all = states_prev.copy()
        f_all[:, :, 0] += dt * states_prev[:, :, 3] * np.cos(states_prev[:, :, 2])
        f_all[:, :, 1] += dt * states_prev[:, :, 3] * np.sin(states_prev[:, :, 2])
        f_all[:, :, 2] += dt * ctrl[:, :, 0]
        f_all[:, :, 3] += dt * ctrl[:, :, 1]
        g_d = (x_dec - f_all).ravel()

        if self.n_con:
            c = self.constraints(x_dec)
            w = np.maximum(0.0, lam + rho * c).reshape(T, self.per_step)
            grad_con = np.zeros((T, n_agents, 2))
            diffs = _pair_geometry(x_dec, self.pairs)
            for p_idx, (a, b) in enumerate(self.pairs):
                contrib = -2.0 * diffs[:, p_idx, :] * w[:, p_idx, None]
                grad_con[:, a] += contrib
                grad_con[:, b] -= contrib
            if self.n_bounds:
                d_b, _ = _boundary_geometry(x_dec, game.constraints.boundaries)
                for bi in range(self.n_bounds):
                    wb = w[:, self.n_pairs + bi * n_agents: self.n_pairs + (bi + 1) * n_agents]
                    grad_con += -2.0 * d_b[:, bi] * wb[:, :, None]
        else:
            grad_con = None

        a_dec = agent_state_jacobians(x_dec[:-1].reshape(-1, STATE_DIM), dt).reshape(
            T - 1, n_agents, STATE_DIM, STATE_DIM
        ) if T > 1 else None

        g_u = np.empty((n_agents, T, CONTROL_DIM))
        g_x = np.empty((n_agents, T, n))
        flat_dec = x_dec.reshape(T, n)
        for i in range(n_agents):
            cost = game.costs[i]
            mu_i = mu[i]
            g_u[i] = u[i] @ cost.R
            g_u[i, :, 0] -= dt * mu_i[:, STATE_DIM * i + 2]
            g_u[i, :, 1] -= dt * mu_i[:, STATE_DIM * i + 3]
            dx = flat_dec - cost.xf[None, :]
            gx = np.empty((T, n))
            gx[:-1] = dx[:-1] @ cost.Q
            gx[-1] = dx[-1] @ cost.Qf
            gx += mu_i
            if T > 1:
                mu_next = mu_i[1:].reshape(T - 1, n_agents, STATE_DIM)
                gx[:-1] -= np.einsum("tnab,tna->tnb", a_dec, mu_next).reshape(T - 1, n)
            if grad_con is not None:
                gxr = gx.reshape(T, n_agents, STATE_DIM)
                gxr[:, :, :2] += grad_con
            g_x[i] = gx
        return np.concatenate([g_d, g_u.ravel(), g_x.ravel()])

    # -- sparsity pattern ---------------------------------------------------

    def _build_pattern(self):
        game = self.game
        T, n_agents, n = self.T, game.n_agents, self.n
        dt = game.dt
        rows, cols, vals = [], [], []

        def add_const(r, c, v):
            rows.append(np.asarray(r, dtype=np.int64).ravel())
            cols.append(np.asarray(c, dtype=np.int64).ravel())
            vals.append(np.asarray(v, dtype=float).ravel())

        # (g_d, x_{k+1}) identity
        idx = np.arange(self.n_x)
        add_const(self.row_gd + idx, idx, np.ones(self.n_x))
        # (g_d, u_k) constant -B per agent
        for i in range(n_agents):
            k = np.arange(T)
            r_th = self.row_gd + k * n + STATE_DIM * i + 2
            r_v = self.row_gd + k * n + STATE_DIM * i + 3
            c_om = self.off_u + i * self.n_u_agent + CONTROL_DIM * k
            c_a = c_om + 1
            add_const(r_th, c_om, np.full(T, -dt))
            add_const(r_v, c_a, np.full(T, -dt))
        # (g_u^i, u^i) = R blocks, (g_u^i, mu^i) = -B^T
        for i in range(n_agents):
            cost = game.costs[i]
            base_r = self.row_gu + i * self.n_u_agent
            base_c = self.off_u + i * self.n_u_agent
            k = np.arange(T)
            for a in range(CONTROL_DIM):
                for b in range(CONTROL_DIM):
                    if cost.R[a, b] != 0.0:
                        add_const(base_r + CONTROL_DIM * k + a,
                                  base_c + CONTROL_DIM * k + b,
                                  np.full(T, cost.R[a, b]))
            mu_base = self.off_mu + i * self.n_x
            add_const(base_r + CONTROL_DIM * k, mu_base + k * n + STATE_DIM * i + 2,
                      np.full(T, -dt))
            add_const(base_r + CONTROL_DIM * k + 1, mu_base + k * n + STATE_DIM * i + 3,
                      np.full(T, -dt))
        # (g_x^i, mu^i_{t-1}) identity, and constant cost Hessian blocks
        for i in range(n_agents):
            base_r = self.row_gx + i * self.n_x
            mu_base = self.off_mu + i * self.n_x
            idx = np.arange(self.n_x)
            add_const(base_r + idx, mu_base + idx, np.ones(self.n_x))
            cost = game.costs[i]
            for mat, t_range in ((cost.Q, np.arange(T - 1)), (cost.Qf, np.array([T - 1]))):
                nz_r, nz_c = np.nonzero(mat)
                if nz_r.size == 0:
                    continue
                for t in t_range:
                    add_const(base_r + t * n + nz_r, t * n + nz_c, mat[nz_r, nz_c])

        self._const_rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        self._const_cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        self._const_vals = np.concatenate(vals) if vals else np.zeros(0)

        # varying A blocks: entries (0,2),(0,3),(1,2),(1,3) of -A_t, t = 1..T-1
        if T > 1:
            t = np.repeat(np.arange(1, T), n_agents * 4)
            ag = np.tile(np.repeat(np.arange(n_agents), 4), T - 1)
            er = np.tile(np.array([0, 0, 1, 1]), (T - 1) * n_agents)
            ec = np.tile(np.array([2, 3, 2, 3]), (T - 1) * n_agents)
            # rows in g_d block t, columns of decision x_t (index t-1)
            self._a_gd_rows = self.row_gd + t * n + STATE_DIM * ag + er
            self._a_gd_cols = (t - 1) * n + STATE_DIM * ag + ec
            # transposed copies in (g_x^i, mu^i_t)
            r_list, c_list = [], []
            for i in range(n_agents):
                base_r = self.row_gx + i * self.n_x
                mu_base = self.off_mu + i * self.n_x
                r_list.append(base_r + (t - 1) * n + STATE_DIM * ag + ec)
                c_list.append(mu_base + t * n + STATE_DIM * ag + er)
            self._a_gx_rows = np.concatenate(r_list)
            self._a_gx_cols = np.concatenate(c_list)
            # costate curvature entries (theta,theta),(theta,v),(v,theta)
            tm = np.repeat(np.arange(1, T), n_agents * 3)
            agm = np.tile(np.repeat(np.arange(n_agents), 3), T - 1)
            mr = np.tile(np.array([2, 2, 3]), (T - 1) * n_agents)
            mc = np.tile(np.array([2, 3, 2]), (T - 1) * n_agents)
            r_list, c_list = [], []
            for i in range(n_agents):
                base_r = self.row_gx + i * self.n_x
                r_list.append(base_r + (tm - 1) * n + STATE_DIM * agm + mr)
                c_list.append((tm - 1) * n + STATE_DIM * agm + mc)
            self._m_rows = np.concatenate(r_list)
            self._m_cols = np.concatenate(c_list)
        else:
            self._a_gd_rows = self._a_gd_cols = np.zeros(0, dtype=np.int64)
            self._a_gx_rows = self._a_gx_cols = np.zeros(0, dtype=np.int64)
            self._m_rows = self._m_cols = np.zeros(0, dtype=np.int64)

        # constraint curvature blocks in (g_x^i, x_t); entry order must match
        # _jacobian_values: (pair/boundary, block, entry) outermost, time innermost
        pr_list, pc_list = [], []
        t = np.arange(self.T)
        for p_idx, (a, b) in enumerate(self.pairs):
            for (ra, ca) in ((a, a), (a, b), (b, a), (b, b)):
                for er in range(2):
                    for ec in range(2):
                        pr_list.append(t * n + STATE_DIM * ra + er)
                        pc_list.append(t * n + STATE_DIM * ca + ec)
        pair_rows = np.concatenate(pr_list) if pr_list else np.zeros(0, dtype=np.int64)
        pair_cols = np.concatenate(pc_list) if pc_list else np.zeros(0, dtype=np.int64)

        br_list, bc_list = [], []
        for bi in range(self.n_bounds):
            for ag in range(n_agents):
                for er in range(2):
                    for ec in range(2):
                        br_list.append(t * n + STATE_DIM * ag + er)
                        bc_list.append(t * n + STATE_DIM * ag + ec)
        bound_rows = np.concatenate(br_list) if br_list else np.zeros(0, dtype=np.int64)
        bound_cols = np.concatenate(bc_list) if bc_list else np.zeros(0, dtype=np.int64)

        con_rows, con_cols = [], []
        for i in range(n_agents):
            base_r = self.row_gx + i * self.n_x
            con_rows.append(base_r + pair_rows)
            con_cols.append(pair_cols)
            con_rows.append(base_r + bound_rows)
            con_cols.append(bound_cols)
        self._con_rows = np.concatenate(con_rows) if con_rows else np.zeros(0, dtype=np.int64)
        self._con_cols = np.concatenate(con_cols) if con_cols else np.zeros(0, dtype=np.int64)
        self._n_pair_vals = pair_rows.size
        self._n_bound_vals = bound_rows.size

        diag = np.arange(self.dim)
        self._all_rows = np.concatenate([
            self._const_rows, self._a_gd_rows, self._a_gx_rows,
            self._m_rows, self._con_rows, diag,
        ])
        self._all_cols = np.concatenate([
            self._const_cols, self._a_gd_cols, self._a_gx_cols,
            self._m_cols, self._con_cols, diag,
        ])

    def _jacobian_values(self, z, lam, rho):
        """Values for the varying part of the pattern (everything but reg)."""
        game = self.game
        T, n_agents, n = self.T, game.n_agents, self.n
        dt = game.dt
        x_dec, u, mu = self.unpack(z)

        if T > 1:
            th = x_dec[:-1, :, 2]
            v = x_dec[:-1, :, 3]
            sin, cos = np.sin(th), np.cos(th)
            a_vals = np.stack(
                [dt * v * sin, -dt * cos, -dt * v * cos, -dt * sin], axis=-1
            ).ravel()
            a_gx_vals = np.tile(a_vals, n_agents)
            m_list = []
            for i in range(n_agents):
                mu_next = mu[i][1:].reshape(T - 1, n_agents, STATE_DIM)
                mpx = mu_next[:, :, 0]
                mpy = mu_next[:, :, 1]
                m_tt = dt * v * (mpx * cos + mpy * sin)
                m_tv = dt * (mpx * sin - mpy * cos)
                m_list.append(np.stack([m_tt, m_tv, m_tv], axis=-1).ravel())
            m_vals = np.concatenate(m_list)
        else:
            a_vals = a_gx_vals = m_vals = np.zeros(0)

        if self.n_con:
            c = self.constraints(x_dec).reshape(T, self.per_step)
            lam_r = lam.reshape(T, self.per_step)
            act = lam_r + rho * c
            w = np.maximum(0.0, act)
            ract = np.where(act > 0.0, rho, 0.0)
            pair_vals = []
            diffs = _pair_geometry(x_dec, self.pairs)
            eye2 = np.eye(2)
            for p_idx in range(self.n_pairs):
                d = diffs[:, p_idx, :]
                outer = 4.0 * d[:, :, None] * d[:, None, :]
                k_blk = ract[:, p_idx, None, None] * outer \
                    - 2.0 * w[:, p_idx, None, None] * eye2
                kf = k_blk.reshape(T, 4).T.ravel()       # (entry, t)
                pair_vals.append(np.concatenate([kf, -kf, -kf, kf]))
            pair_vals = np.concatenate(pair_vals) if pair_vals else np.zeros(0)
            bound_vals = []
            if self.n_bounds:
                d_b, interior = _boundary_geometry(x_dec, game.constraints.boundaries)
                for bi in range(self.n_bounds):
                    sl = slice(self.n_pairs + bi * n_agents, self.n_pairs + (bi + 1) * n_agents)
                    wb = w[:, sl]
                    rb = ract[:, sl]
                    d = d_b[:, bi]                           # (T, N, 2)
                    norms = np.sqrt((d ** 2).sum(axis=2))
                    safe = norms > 1e-12
                    nhat = np.where(safe[:, :, None], d / np.maximum(norms, 1e-12)[:, :, None], 0.0)
                    hess = np.where(
                        (interior[:, bi] & safe)[:, :, None, None],
                        nhat[:, :, :, None] * nhat[:, :, None, :],
                        eye2[None, None, :, :],
                    )
                    k_blk = rb[:, :, None, None] * 4.0 * d[:, :, :, None] * d[:, :, None, :] \
                        - 2.0 * wb[:, :, None, None] * hess
                    # pattern order is (agent, entry, t)
                    bound_vals.append(k_blk.reshape(T, n_agents * 4).T.ravel())
            bound_vals = np.concatenate(bound_vals) if bound_vals else np.zeros(0)
            con_vals = np.tile(np.concatenate([pair_vals, bound_vals]), n_agents)
        else:
            con_vals = np.zeros(0)

        return np.concatenate([self._const_vals, a_vals, a_gx_vals, m_vals, con_vals])

    def jacobian(self, z, lam, rho, reg):
        vals = self._jacobian_values(z, lam, rho)
        all_vals = np.concatenate([vals, np.full(self.dim, reg)])
        mat = sp.coo_matrix((all_vals, (self._all_rows, self._all_cols)),
                            shape=(self.dim, self.dim))
        return mat.tocsc()


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteIterate(f"{what} became non-finite")


def _stationarity_parts(ws: _Workspace, z, multipliers):
    """KKT residual pieces at fixed inequality multipliers (no penalty)."""
    g = ws.residual(z, multipliers, 0.0)
    dyn = g[: ws.n_x]
    stat = g[ws.n_x:]
    return float(np.abs(stat).max(initial=0.0)), float(np.abs(dyn).max(initial=0.0))


def _newton_loop(ws, z, lam, rho, params, budget):
    """Newton iterations until the inner target, a stall, or the budget."""
    its = 0
    g = ws.residual(z, lam, rho)
    _check_finite(g, "residual")
    while its < budget:
        gnorm = np.abs(g).max(initial=0.0)
        if gnorm <= params.inner_tol:
            return z, its, "converged"
        reg = params.reg_init
        delta = None
        while True:
            try:
                jac = ws.jacobian(z, lam, rho, reg)
                lu = spla.splu(jac)
                delta = lu.solve(-g)
                if np.all(np.isfinite(delta)):
                    break
            except RuntimeError:
                pass
            reg *= 10.0
            if reg > params.reg_max:
                raise SingularKKTSystem(
                    f"KKT system singular at regularization {reg:g}")
        phi0 = float(np.linalg.norm(g))
        alpha = 1.0
        accepted = False
        for _ in range(params.max_backtracks):
            z_new = z + alpha * delta
            if np.all(np.isfinite(z_new)):
                g_new = ws.residual(z_new, lam, rho)
                if np.all(np.isfinite(g_new)):
                    phi = float(np.linalg.norm(g_new))
                    if phi <= (1.0 - 1e-4 * alpha) * phi0:
                        accepted = True
                        break
            alpha *= 0.5
        its += 1
        if not accepted:
            return z, its, "stalled"
        z, g = z_new, g_new
    return z, its, "budget"


def _inner_solve(ws, z, lam, rho, params):
    """Newton solve followed by exact re-rollouts of the state block."""
    total = 0
    budget = params.max_newton_per_level
    z, its, status = _newton_loop(ws, z, lam, rho, params, budget)
    total += its
    for _ in range(3):
        z_rolled = ws.reroll(z)
        g = ws.residual(z_rolled, lam, rho)
        if np.abs(g).max(initial=0.0) <= max(100.0 * params.inner_tol, 1e-9) \
                or status == "stalled" or total >= budget:
            return z_rolled, total, status
        z, its, status = _newton_loop(ws, z_rolled, lam, rho, params, budget - total)
        total += its
    return ws.reroll(z), total, status


def initial_guess(game: GameDefinition, x0: np.ndarray) -> np.ndarray:
    """Deterministic cold start: zero controls, straight constant-speed rollout."""
    pi = np.zeros((game.n_agents, game.horizon - 1, CONTROL_DIM))
    traj = rollout(np.asarray(x0, dtype=float), pi, game.dt)
    mu = np.zeros((game.n_agents, game.horizon - 1, STATE_DIM * game.n_agents))
    return traj[1:], pi, mu


def shift_warm_start(solution: NashSolution, steps: int):
    """Time-shift a previous solution's policy and multipliers by ``steps``."""
    if steps < 0:
        raise InvalidInputError("shift must be nonnegative")
    pi = solution.pi
    horizon = pi.shape[1]
    idx = np.minimum(np.arange(horizon) + steps, horizon - 1)
    pi_s = pi[:, idx, :]
    mu_s = solution.eq_multipliers[:, idx, :]
    lam = solution.ineq_multipliers
    if lam.size:
        per_step = lam.size // horizon
        lam_s = lam.reshape(horizon, per_step)[idx].ravel()
    else:
        lam_s = lam
    return pi_s, mu_s, lam_s


def solve_open_loop_nash(
    game: GameDefinition,
    x0: np.ndarray,
    warm: NashSolution | None = None,
    warm_shift: int = 0,
    params: SolverParams = DEFAULT_PARAMS,
) -> NashSolution:
    """Solve for an open-loop generalized Nash equilibrium from x0.

    A warm start reuses the given solution's policy and multipliers, shifted
    forward by ``warm_shift`` steps; the state block is always re-rolled from
    x0. Raises MaxIterationsExceeded / SingularKKTSystem / NonFiniteIterate
    with the best iterate attached.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (game.n_agents, STATE_DIM):
        raise InvalidInputError(f"x0 must be ({game.n_agents}, {STATE_DIM}), got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 contains non-finite entries")
    t_start = time.perf_counter()
    ws = _Workspace(game, x0)
    if warm is not None:
        pi, mu, lam = shift_warm_start(warm, warm_shift)
        pi = pi.copy()
        mu = mu.copy()
        lam = lam.astype(float).copy()
        traj = rollout(x0, pi, game.dt)
        x_dec = traj[1:]
    else:
        x_dec, pi, mu = initial_guess(game, x0)
        lam = np.zeros(ws.n_con)
    z = ws.pack(x_dec, pi, mu)
    rho = params.rho_init
    total_iters = 0
    best = None

    def build_solution(z_final, w_final, resid, converged, levels):
        x_dec_f, u_f, mu_f = ws.unpack(z_final)
        traj_f = rollout(x0, np.ascontiguousarray(u_f), game.dt)
        return NashSolution(
            X=traj_f,
            pi=np.ascontiguousarray(u_f),
            eq_multipliers=np.ascontiguousarray(mu_f),
            ineq_multipliers=w_final,
            residual_norm=resid,
            iterations=total_iters,
            wall_time=time.perf_counter() - t_start,
            converged=converged,
            penalty_levels=levels,
        )

    levels_run = 0
    try:
        for level in range(params.max_penalty_levels):
            levels_run = level + 1
            z, its, _status = _inner_solve(ws, z, lam, rho, params)
            total_iters += its
            x_dec_cur = ws.unpack(z)[0]
            if ws.n_con:
                c = ws.constraints(x_dec_cur)
                w = np.maximum(0.0, lam + rho * c)
                feas = float(np.maximum(0.0, c).max(initial=0.0))
                comp = float(np.abs(w * c).max(initial=0.0))
            else:
                c = np.zeros(0)
                w = lam
                feas = 0.0
                comp = 0.0
            stat, dyn = _stationarity_parts(ws, z, w)
            resid = max(stat, dyn, feas)
            best = build_solution(z, w, resid, False, levels_run)
            if (stat <= params.tol_stationarity
                    and dyn <= params.tol_feasibility
                    and feas <= params.tol_feasibility
                    and comp <= params.tol_complementarity):
                return build_solution(z, w, resid, True, levels_run)
            lam = w
            rho = min(rho * params.rho_factor, params.rho_max)
    except (SingularKKTSystem, NonFiniteIterate) as exc:
        exc.solution = best
        raise
    raise MaxIterationsExceeded(
        f"no convergence after {levels_run} penalty levels "
        f"({total_iters} Newton iterations, residual {best.residual_norm:.3e})",
        solution=best,
    )


def nash_residual(game: GameDefinition, x0: np.ndarray, solution: NashSolution) -> float:
    """Stacked stationarity and feasibility residual, recomputed plainly.

    Uses only the public dynamics/constraint operations and explicit loops so
    it stays independent of the solver's vectorized assembly.
    """
    x0 = np.asarray(x0, dtype=float)
    X = np.asarray(solution.X, dtype=float)
    pi = np.asarray(solution.pi, dtype=float)
    mu = np.asarray(solution.eq_multipliers, dtype=float)
    lam = np.asarray(solution.ineq_multipliers, dtype=float)
    n_agents = game.n_agents
    horizon = pi.shape[1]
    n = STATE_DIM * n_agents
    worst = 0.0
    # dynamics defect
    for k in range(horizon):
        defect = X[k + 1] - step_joint(X[k], pi[:, k, :], game.dt)
        worst = max(worst, float(np.abs(defect).max()))
    # inequality violation
    x_dec = X[1:]
    if game.constraints.constraints_per_step(n_agents):
        c = evaluate_constraints(x_dec, game.constraints)
        worst = max(worst, float(np.maximum(0.0, c).max(initial=0.0)))
        con_term = (constraint_jacobian(x_dec, game.constraints).T @ lam).reshape(horizon, n)
    else:
        con_term = np.zeros((horizon, n))
    # per-player stationarity
    jac_a = [linearize(X[k], pi[:, k, :], game.dt)[0] for k in range(horizon)]
    b_mat = linearize(X[0], pi[:, 0, :], game.dt)[1]
    for i in range(n_agents):
        cost = game.costs[i]
        for k in range(horizon):
            u_cols = slice(CONTROL_DIM * i, CONTROL_DIM * (i + 1))
            g_u = cost.R @ pi[i, k, :] - b_mat[:, u_cols].T @ mu[i, k]
            worst = max(worst, float(np.abs(g_u).max()))
        for t in range(1, horizon + 1):
            dx = X[t].ravel() - cost.xf
            g_x = (cost.Qf if t == horizon else cost.Q) @ dx
            g_x = g_x + mu[i, t - 1]
            if t <= horizon - 1:
                g_x = g_x - jac_a[t].T @ mu[i, t]
            g_x = g_x + con_term[t - 1]
            worst = max(worst, float(np.abs(g_x).max()))
    return worst
