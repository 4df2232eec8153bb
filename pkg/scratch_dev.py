"""Dev scratch: validate solver internals (not part of the deliverable)."""
import numpy as np
from nashguard.game import QuadraticCost, ConstraintSet, GameDefinition
from nashguard.solver import _Workspace

rng = np.random.default_rng(0)

N, H, dt = 2, 5, 0.1
n = 4 * N
Q = np.diag(rng.uniform(0.1, 1.0, n))
R = np.diag(rng.uniform(0.1, 1.0, 2))
xf = rng.normal(0, 1, n)
costs = tuple(QuadraticCost(Q, R, 10 * Q, xf) for _ in range(N))
cs = ConstraintSet(radius=1.0, boundaries=(np.array([[-5.0, -3.0], [5.0, -3.0], [8.0, -1.0]]),))
game = GameDefinition(N, H, dt, costs, cs)
x0 = rng.normal(0, 1, (N, 4))
ws = _Workspace(game, x0)

z = rng.normal(0, 1, ws.dim)
lam = rng.uniform(0, 1, ws.n_con)
rho = 3.0

G0 = ws.residual(z, lam, rho)
J = ws.jacobian(z, lam, rho, 0.0).toarray()

h = 1e-7
J_fd = np.zeros_like(J)
for k in range(ws.dim):
    zp = z.copy(); zp[k] += h
    zm = z.copy(); zm[k] -= h
    J_fd[:, k] = (ws.residual(zp, lam, rho) - ws.residual(zm, lam, rho)) / (2 * h)

err = np.abs(J - J_fd)
print("max |J - J_fd| =", err.max())
bad = np.argwhere(err > 1e-4)
print("num bad entries:", len(bad))
if len(bad):
    for r, c in bad[:10]:
        print(f"  row {r} col {c}: analytic {J[r, c]:.6g} fd {J_fd[r, c]:.6g}")
