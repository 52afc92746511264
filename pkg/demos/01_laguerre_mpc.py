"""
Laguerre-parameterized NMPC on the buck-boost converter
=======================================================

Builds the Laguerre basis, solves the full-horizon NMPC and the reduced
Laguerre problem from a few states, and checks that alpha = 0 with M = N
gives the same first input as plain NMPC.
"""

# %% setup
import numpy as np

from lagmpc.mpc import MpcConfig, solve_lagnmpc, solve_nmpc
from lagmpc.plant import BuckBoost, steady_state

plant = BuckBoost()
cfg = MpcConfig()
print("equilibrium x1 = %.5f A, u = %.2f" % steady_state(plant.params, -10.0))

# %% the basis: N x M columns decaying with pole alpha; they are orthonormal
# over an infinite horizon, so truncation at N=20 leaves norms below one
basis = cfg.basis()
print("L shape", basis.L.shape)
print("first row L0 =", np.round(basis.L0, 6))
print("column norms over N=20:", np.round(np.linalg.norm(basis.L, axis=0), 4))

# %% solve both problems from the two closed-loop start points
for x0 in ([0.01, 0.0], [0.5, -19.0], [1.0, -5.0]):
    full = solve_nmpc(cfg, plant, x0)
    lag = solve_lagnmpc(cfg, basis, plant, x0)
    print(f"x0={x0}: NMPC u0={full.u0:.4f} J={full.cost:.3f} [{full.status.value}]  "
          f"LagNMPC u0={lag.u0:.4f} J={lag.cost:.3f} [{lag.status.value}]  "
          f"eta={np.round(lag.eta, 3)}")

# %% 4 coefficients instead of 20 inputs cost a little optimality (J above).
# With alpha = 0 and M = N the Laguerre columns are unit vectors, so the two
# problems coincide.
eq = cfg.replace(alpha=0.0, M=cfg.N)
x0 = [0.8, -14.0]
a, b = solve_nmpc(eq, plant, x0), solve_lagnmpc(eq, eq.basis(), plant, x0)
print(f"alpha=0, M=N: |du0| = {abs(a.u0 - b.u0):.2e}")

# %% predicted trajectory of the Laguerre solution
lag = solve_lagnmpc(cfg, basis, plant, [0.5, -19.0])
traj = plant.rollout(np.array([0.5, -19.0]), lag.U)
for k in (0, 5, 10, 20):
    print(f"k={k:2d} x={np.round(traj[k], 3)}")
