"""Closed-loop simulation of the plant under online or learned controllers."""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .mpc import StateOutsideConstraintsError, Status, solve_lagnmpc, solve_nmpc


class Kind(str, enum.Enum):
    ONLINE_NMPC = "OnlineNMPC"
    ONLINE_LAGNMPC = "OnlineLagNMPC"
    NN_NMPC = "NnNmpc"
    NN_LAGNMPC = "NnLagNmpc"

    @property
    def is_nn(self):
        return self in (Kind.NN_NMPC, Kind.NN_LAGNMPC)


@dataclass(frozen=True)
class ControllerSpec:
    kind: Kind
    offset_free: bool = True
    epsilon: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.offset_free and not self.epsilon > 0:
            raise ValueError("trigger radius must be positive when offset-free is enabled")


class ControllerError(RuntimeError):
    """The controller could not produce an input at this step."""


def offset_free_input(raw, at_ss, u_ss):
    """Shift the learned law so that it returns ``u_ss`` exactly at ``x_ss``."""
    return raw - at_ss + u_ss


@dataclass
class ControlOutput:
    u: float
    offset_free: bool = False
    saturated: bool = False


class Controller:
    """Maps a measured state to an admissible input.

    Online kinds solve the (Lag)NMPC problem and apply its first input.
    Learned kinds evaluate the network in inference mode and, inside the
    ball ``|x - x_ss| <= epsilon``, apply the offset-free correction.
    """

    def __init__(self, spec, mpc_cfg, plant, params=None, head=None, basis=None):
        self.spec = spec
        self.cfg = mpc_cfg
        self.plant = plant
        self.params = params
        self.head = head
        self.basis = basis
        self.u_min = float(mpc_cfg.U.lower[0])
        self.u_max = float(mpc_cfg.U.upper[0])
        kind = spec.kind
        if kind.is_nn:
            if params is None:
                raise ValueError(f"{kind.value} needs trained network parameters")
            if kind is Kind.NN_LAGNMPC and head is None:
                raise ValueError("NnLagNmpc needs a Laguerre head")
            self._law = nn.policy(params, head if kind is Kind.NN_LAGNMPC else None)
            self.at_ss = self._law(np.asarray(mpc_cfg.x_ss, dtype=float))
        elif kind is Kind.ONLINE_LAGNMPC and self.basis is None:
            self.basis = mpc_cfg.basis()

    def raw(self, x):
        """Controller output with the offset-free switch disabled."""
        x = np.asarray(x, dtype=float)
        kind = self.spec.kind
        if kind.is_nn:
            return self._law(x)
        try:
            if kind is Kind.ONLINE_NMPC:
                res = solve_nmpc(self.cfg, self.plant, x)
            else:
                res = solve_lagnmpc(self.cfg, self.basis, self.plant, x)
        except StateOutsideConstraintsError as exc:
            raise ControllerError(str(exc)) from exc
        if res.status is Status.INFEASIBLE:
            raise ControllerError(f"solver reported infeasibility at x={x}")
        return res.u0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = self.raw(x)
        active = False
        if (self.spec.kind.is_nn and self.spec.offset_free
                and np.linalg.norm(x - self.cfg.x_ss) <= self.spec.epsilon):
            u = offset_free_input(u, self.at_ss, self.cfg.u_ss)
            active = True
        u = float(min(max(u, self.u_min), self.u_max))
        return ControlOutput(u, active, u <= self.u_min or u >= self.u_max)

    def law(self, X):
        """Vectorized raw law over a stack of states (learned kinds only)."""
        if not self.spec.kind.is_nn:
            return np.array([self.raw(x) for x in X])
        head = self.head if self.spec.kind is Kind.NN_LAGNMPC else None
        if head is None:
            return nn.forward_nmpc(self.params, X)
        return nn.forward_lagnmpc_first(self.params, head, X)


def control(controller, x):
    return controller(x).u


@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    offset_free: np.ndarray
    saturated: np.ndarray
    violation: np.ndarray
    status: str = "ok"
    error: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return len(self.inputs)

    def distance_to(self, x_ss):
        return np.linalg.norm(self.states - np.asarray(x_ss), axis=1)


def simulate(plant, controller, x0, T=600, X=None):
    """Run ``T`` closed-loop steps from ``x0``.

    A controller failure ends the run early with ``status='error'``.
    """
    if T < 1:
        raise ValueError("number of steps must be >= 1")
    X = X if X is not None else controller.cfg.X
    states = [np.asarray(x0, dtype=float)]
    inputs, of, sat, viol = [], [], [], []
    status, error = "ok", ""
    for _ in range(T):
        x = states[-1]
        try:
            out = controller(x)
        except ControllerError as exc:
            status, error = "error", str(exc)
            break
        x_next = plant.step(x, out.u)
        inputs.append(out.u)
        of.append(out.offset_free)
        sat.append(out.saturated)
        viol.append(not bool(X.contains(x_next)))
        states.append(x_next)
    return Trajectory(
        states=np.array(states), inputs=np.array(inputs, dtype=float),
        offset_free=np.array(of, dtype=bool), saturated=np.array(sat, dtype=bool),
        violation=np.array(viol, dtype=bool), status=status, error=error,
        meta={"kind": controller.spec.kind.value, "x0": list(map(float, x0))},
    )
