"""
Closed loop and fixed-point deployment
======================================

Runs the online Laguerre controller and a learned controller with the
offset-free correction from the two standard start points, then quantizes
the network to Q15.16 and times the integer forward pass.

The learned controller is trained briefly on a small dataset; its numbers
illustrate the pipeline rather than the full-budget result.
"""

# %% setup
import numpy as np

from lagmpc import nn
from lagmpc.closed_loop import Controller, ControllerSpec, Kind, simulate
from lagmpc.fixedpoint import bench_latency, forward_fixed, quantize_net
from lagmpc.mpc import MpcConfig
from lagmpc.plant import BuckBoost
from lagmpc.sampling import generate_dataset, halton_sample_states
from lagmpc.training import TrainConfig, train

plant, cfg = BuckBoost(), MpcConfig()
basis = cfg.basis()
head = nn.LaguerreHead.from_basis(basis, cfg.u_ss)
ds = generate_dataset(cfg, plant, halton_sample_states(cfg.X, 1500), basis=basis)
params, _ = train(ds, TrainConfig(epochs=150, batch_size=32), plant, cfg.X, head)

# %% simulate 600 steps (60 ms) from each start point
controllers = {
    "online LagNMPC": Controller(ControllerSpec(Kind.ONLINE_LAGNMPC, False), cfg, plant),
    "learned + offset-free": Controller(ControllerSpec(Kind.NN_LAGNMPC, True, 0.3), cfg, plant,
                                        params, head),
}
for name, ctrl in controllers.items():
    for x0 in ([0.01, 0.0], [0.5, -19.0]):
        tr = simulate(plant, ctrl, x0, 600)
        d = tr.distance_to(cfg.x_ss)
        print(f"{name:22s} x0={x0}: final x={np.round(tr.states[-1], 3)} dist {d[-1]:.3f}, "
              f"violations {tr.violation.sum()}, offset-free steps {tr.offset_free.sum()}")

# %% the capacitor discharges through R at most by a factor (1 - Ts/RC) per
# step while x1 >= 0, so from x2 = -19 no admissible controller can reach -10
# within 600 steps; a law that beats this bound has driven x1 below zero
p = plant.params
print("best reachable x2 after 600 steps:", -19 * (1 - p.Ts / (p.R_load * p.C_cap)) ** 600)

# %% equilibrium: the offset-free law returns u_ss exactly
print("u(x_ss) =", controllers["learned + offset-free"](cfg.x_ss).u)

# %% quantize: batch norm and input scaling folded, Q15.16 integers
q = quantize_net(params, head)
states = np.array(halton_sample_states(cfg.X, 1000))
ref = nn.forward_lagnmpc_first(params, head, states)
fx = np.array([forward_fixed(q, x) for x in states])
print(f"max |fixed - float| = {np.abs(fx - ref).max():.2e}")
print({k: round(v) for k, v in bench_latency(q, states[:100], 5000).items()})
