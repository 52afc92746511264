"""Neural approximations of Laguerre-parameterized nonlinear MPC.

The package covers the full pipeline for a buck-boost dc-dc converter:
single-shooting (Lag)NMPC solvers, Halton sampling of the state box,
clamped MLPs trained with a constraints-informed loss, closed-loop
simulation with an offset-free correction, and 32-bit fixed-point inference.
"""

__version__ = "0.1.0"

from .laguerre import LaguerreBasis, build_AL, first_input, laguerre_basis, reconstruct_sequence
from .plant import (BoxSet, BuckBoost, BuckBoostParams, DEFAULT_U, DEFAULT_X, PlantModel,
                    buckboost_input_gradient, buckboost_step, steady_state)
from .mpc import (MpcConfig, SolveResult, Status, StateOutsideConstraintsError, lagnmpc_cost,
                  nmpc_cost, rollout, solve_lagnmpc, solve_nmpc)
