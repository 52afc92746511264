"""
Learning the Laguerre law, with and without the constraint penalty
==================================================================

Generates a Halton dataset of LagNMPC solutions, trains one network on the
supervised loss and one with the one-step constraint penalty added, and
draws control-law maps with the nodes whose successor leaves X.

The sizes here are small so the script runs in a few minutes; the CLI
defaults (20000 samples, 1000 epochs) reproduce the full experiment.
"""

# %% setup
from pathlib import Path

from lagmpc import nn
from lagmpc.closed_loop import Controller, ControllerSpec, Kind
from lagmpc.evaluation import Grid, control_law_map, export_heatmap, violation_count
from lagmpc.mpc import MpcConfig
from lagmpc.plant import BuckBoost
from lagmpc.sampling import generate_dataset, halton_sample_states
from lagmpc.training import TrainConfig, train

N_SAMPLES, EPOCHS = 1500, 150
out = Path("demo_out")
out.mkdir(exist_ok=True)

plant, cfg = BuckBoost(), MpcConfig()
basis = cfg.basis()
head = nn.LaguerreHead.from_basis(basis, cfg.u_ss)

# %% data: Halton states inside X, each labelled with the optimal coefficients
stats = {}
states = halton_sample_states(cfg.X, N_SAMPLES, stats=stats)
ds = generate_dataset(cfg, plant, states, basis=basis)
print(f"{len(ds)} labelled samples, solver status counts {ds.counts}, halton {stats}")

# %% two networks, same seed and budget
nets = {}
for loss in ("supervised", "coninf"):
    tc = TrainConfig(epochs=EPOCHS, loss=loss, batch_size=32)
    nets[loss], hist = train(ds, tc, plant, cfg.X, head)
    print(f"{loss:10s} train {hist.train_loss[-1]:.3e} val {hist.val_loss[-1]:.3e} "
          f"penalty {hist.coninf[-1]:.2e}")

# %% maps over a 100 x 100 grid; red markers are one-step violations
grid = Grid.over(cfg.X, (100, 100))
for loss, p in nets.items():
    ctrl = Controller(ControllerSpec(Kind.NN_LAGNMPC, offset_free=False), cfg, plant, p, head)
    m = control_law_map(ctrl, plant, grid)
    csv_path, svg_path = export_heatmap(m, out / f"map_{loss}", title=loss)
    print(f"{loss:10s} violation nodes {violation_count(m):4d} "
          f"(x1 {violation_count(m, 0)}, x2 {violation_count(m, 1)}) -> {svg_path}")
