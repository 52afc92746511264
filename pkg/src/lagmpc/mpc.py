"""Single-shooting NMPC and Laguerre-parameterized NMPC solvers.

Both problems share one objective::

    J = |x_N - x_ss|_P^2 + sum_i |x_i - x_ss|_Q^2 + R (u_i - u_ss)^2

over the rollout of the plant from the measured state.  The decision variable
is either the full input sequence U (length N) or the Laguerre coefficients
eta (length M) with ``U = L eta + u_ss``.  Problems are solved with SLSQP
using exact first derivatives from forward sensitivities.  The input box is
imposed through simple bounds (NMPC) or linear inequalities (LagNMPC), and
the state box through nonlinear inequalities on x_1..x_N.
"""

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .laguerre import laguerre_basis
from .plant import DEFAULT_U, DEFAULT_X, BoxSet, BuckBoostParams, steady_state

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


class StateOutsideConstraintsError(ValueError):
    """Raised when a solve is requested from a state outside the state box."""


@dataclass(frozen=True, eq=False)
class MpcConfig:
    N: int = 20
    Q: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.1]))
    R: float = 0.7
    P: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0]))
    x_ss: np.ndarray = None
    u_ss: float = None
    X: BoxSet = DEFAULT_X
    U: BoxSet = DEFAULT_U
    M: int = 4
    alpha: float = 0.9
    stat_tol: float = 1e-8
    constr_tol: float = 1e-6
    max_iter: int = 500
    n_starts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.x_ss is None or self.u_ss is None:
            x1, u = steady_state(BuckBoostParams(), -10.0)
            object.__setattr__(self, "x_ss", np.array([x1, -10.0]))
            object.__setattr__(self, "u_ss", u)
        object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=float)))
        object.__setattr__(self, "P", np.atleast_2d(np.asarray(self.P, dtype=float)))
        object.__setattr__(self, "x_ss", np.asarray(self.x_ss, dtype=float))
        object.__setattr__(self, "u_ss", float(self.u_ss))
        self.validate()

    def validate(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"horizon N must be >= 1, got {self.N}")
        for name in ("Q", "P"):
            A = getattr(self, name)
            if A.shape != (self.X.dim, self.X.dim):
                raise ValueError(f"{name} must be {self.X.dim}x{self.X.dim}")
            if not np.allclose(A, A.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(A).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not (np.all(self.x_ss > self.X.lower) and np.all(self.x_ss < self.X.upper)):
            raise ValueError("x_ss must lie in the interior of X")
        if not (self.U.lower[0] < self.u_ss < self.U.upper[0]):
            raise ValueError("u_ss must lie in the interior of U")
        if not (1 <= self.M <= self.N):
            raise ValueError("Laguerre size must satisfy 1 <= M <= N")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"Laguerre pole must lie in [0, 1), got {self.alpha}")
        if self.n_starts < 1 or self.max_iter < 1:
            raise ValueError("n_starts and max_iter must be positive")

    @property
    def U_ss(self):
        return np.full(self.N, self.u_ss)

    def basis(self):
        return laguerre_basis(self.alpha, self.M, self.N)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class SolveResult:
    U: np.ndarray
    cost: float
    status: Status
    max_violation: float
    eta: np.ndarray = None
    iterations: int = 0
    states: np.ndarray = None

    @property
    def u0(self):
        return float(self.U[0])

    @property
    def converged(self):
        return self.status is Status.CONVERGED


def rollout(plant, x0, U):
    return plant.rollout(np.asarray(x0, dtype=float), np.asarray(U, dtype=float))


def _cost_from_states(cfg, xs, U):
    dx = xs - cfg.x_ss
    du = np.asarray(U, dtype=float) - cfg.u_ss
    stage = np.einsum("ij,jk,ik->", dx[:-1], cfg.Q, dx[:-1])
    terminal = dx[-1] @ cfg.P @ dx[-1]
    return float(terminal + stage + cfg.R * (du @ du))


def nmpc_cost(cfg, plant, x0, U):
    U = np.asarray(U, dtype=float)
    if U.shape != (cfg.N,):
        raise ValueError(f"expected input sequence of length {cfg.N}")
    return _cost_from_states(cfg, rollout(plant, x0, U), U)


def lagnmpc_cost(cfg, basis, plant, x0, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (basis.M,):
        raise ValueError(f"expected {basis.M} Laguerre coefficients")
    dU = basis.L @ eta
    U = dU + cfg.u_ss
    xs = rollout(plant, x0, U)
    dx = xs - cfg.x_ss
    stage = np.einsum("ij,jk,ik->", dx[:-1], cfg.Q, dx[:-1])
    return float(dx[-1] @ cfg.P @ dx[-1] + stage + cfg.R * (dU @ dU))


class _ShootingProblem:
    """Objective, constraints and derivatives for one measured state.

    ``T`` maps the decision variable z to the input deviation ``U - u_ss``;
    it is the identity for NMPC and L for LagNMPC.
    """

    def __init__(self, cfg, plant, x0, T):
        self.cfg = cfg
        self.plant = plant
        self.x0 = np.asarray(x0, dtype=float)
        self.T = T
        self._z = None
        self.xlo = cfg.X.lower
        self.xhi = cfg.X.upper

    def _eval(self, z):
        if self._z is not None and np.array_equal(z, self._z):
            return
        cfg = self.cfg
        dU = self.T @ z
        U = dU + cfg.u_ss
        xs, S = self.plant.rollout_sensitivity(self.x0, U)
        dx = xs - cfg.x_ss
        Qdx = dx[:-1] @ cfg.Q
        Pdx = cfg.P @ dx[-1]
        self.f = float(np.einsum("ij,ij->", Qdx, dx[:-1]) + Pdx @ dx[-1] + cfg.R * (dU @ dU))
        # dJ/dU through the sensitivities, then chained through T
        gU = 2.0 * (np.einsum("ij,ijk->k", Qdx, S[:-1]) + Pdx @ S[-1]) + 2.0 * cfg.R * dU
        self.g = self.T.T @ gU
        Sz = S[1:] @ self.T  # (N, n_x, nz)
        self.c = np.concatenate([(xs[1:] - self.xlo).ravel(), (self.xhi - xs[1:]).ravel()])
        J = Sz.reshape(-1, Sz.shape[-1])
        self.cj = np.vstack([J, -J])
        self.xs = xs
        self._z = np.array(z, copy=True)

    def fun(self, z):
        self._eval(z)
        return self.f

    def jac(self, z):
        self._eval(z)
        return self.g

    def cons(self, z):
        self._eval(z)
        return self.c

    def cons_jac(self, z):
        self._eval(z)
        return self.cj


def _check_state(cfg, x0):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (cfg.X.dim,):
        raise ValueError(f"state must have {cfg.X.dim} entries")
    # a converged solve may land up to constr_tol outside X, so the next
    # measured state is held to the same tolerance
    if cfg.X.max_violation(x0) > cfg.constr_tol:
        raise StateOutsideConstraintsError(f"initial state {x0} lies outside X")
    return x0


def _violation(cfg, xs, U):
    vx = np.abs(cfg.X.violation(xs[1:])).max()
    vu = np.abs(cfg.U.violation(U[:, None])).max()
    return float(max(vx, vu))


def _run_slsqp(prob, z0, bounds, extra_cons, cfg):
    constraints = [{"type": "ineq", "fun": prob.cons, "jac": prob.cons_jac}]
    constraints.extend(extra_cons)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(prob.fun, z0, jac=prob.jac, method="SLSQP", bounds=bounds,
                       constraints=constraints,
                       options={"maxiter": cfg.max_iter, "ftol": cfg.stat_tol})
    return res


def _starts(cfg, dim, scale):
    rng = np.random.default_rng(cfg.seed)
    starts = [np.zeros(dim)]
    for _ in range(cfg.n_starts - 1):
        starts.append(scale * rng.standard_normal(dim))
    return starts


def _pick(results):
    """Lowest cost among feasible results, else the least infeasible one."""
    feasible = [r for r in results if r.status is not Status.INFEASIBLE]
    if feasible:
        best = min(feasible, key=lambda r: (r.status is not Status.CONVERGED, r.cost))
    else:
        best = min(results, key=lambda r: r.max_violation)
    return best


def _classify(res, viol, cfg):
    if viol > cfg.constr_tol:
        return Status.INFEASIBLE
    if res.success:
        return Status.CONVERGED
    # SLSQP exit 9: iteration limit
    if res.status == 9:
        return Status.MAX_ITERATIONS
    # exit 8 (line search cannot decrease) happens at feasible optima when the
    # merit function is flat to rounding; accept if the step is stationary
    if res.status == 8:
        return Status.CONVERGED
    return Status.MAX_ITERATIONS


def solve_nmpc(cfg, plant, x0):
    """Minimize J over the full input sequence from state ``x0``."""
    x0 = _check_state(cfg, x0)
    N = cfg.N
    T = np.eye(N)
    lo, hi = cfg.U.lower[0] - cfg.u_ss, cfg.U.upper[0] - cfg.u_ss
    bounds = [(lo, hi)] * N
    span = cfg.U.upper[0] - cfg.U.lower[0]
    results = []
    for z0 in _starts(cfg, N, 0.25 * span):
        z0 = np.clip(z0, lo, hi)
        prob = _ShootingProblem(cfg, plant, x0, T)
        res = _run_slsqp(prob, z0, bounds, [], cfg)
        # exact projection onto the input box, after the offset so that
        # rounding in (u_min - u_ss) + u_ss cannot leave the box
        U = np.clip(res.x + cfg.u_ss, cfg.U.lower[0], cfg.U.upper[0])
        xs = rollout(plant, x0, U)
        viol = _violation(cfg, xs, U)
        results.append(SolveResult(U=U, cost=_cost_from_states(cfg, xs, U),
                                   status=_classify(res, viol, cfg), max_violation=viol,
                                   iterations=int(res.nit), states=xs))
    best = _pick(results)
    log.debug("nmpc solve", extra={"x0": x0.tolist(), "cost": best.cost,
                                   "status": best.status.value,
                                   "violation": best.max_violation,
                                   "iterations": best.iterations})
    return best


def solve_lagnmpc(cfg, basis, plant, x0):
    """Minimize J over Laguerre coefficients from state ``x0``."""
    x0 = _check_state(cfg, x0)
    if basis.N != cfg.N:
        raise ValueError("basis horizon does not match the controller horizon")
    L = basis.L
    lo, hi = cfg.U.lower[0] - cfg.u_ss, cfg.U.upper[0] - cfg.u_ss
    input_cons = {
        "type": "ineq",
        "fun": lambda z: np.concatenate([L @ z - lo, hi - L @ z]),
        "jac": lambda z: np.vstack([L, -L]),
    }
    span = cfg.U.upper[0] - cfg.U.lower[0]
    results = []
    for z0 in _starts(cfg, basis.M, 0.25 * span):
        prob = _ShootingProblem(cfg, plant, x0, L)
        res = _run_slsqp(prob, z0, None, [input_cons], cfg)
        eta = np.asarray(res.x, dtype=float)
        U = L @ eta + cfg.u_ss
        xs = rollout(plant, x0, U)
        viol = _violation(cfg, xs, U)
        results.append(SolveResult(U=U, cost=lagnmpc_cost(cfg, basis, plant, x0, eta),
                                   status=_classify(res, viol, cfg), max_violation=viol,
                                   eta=eta, iterations=int(res.nit), states=xs))
    best = _pick(results)
    log.debug("lagnmpc solve", extra={"x0": x0.tolist(), "cost": best.cost,
                                      "status": best.status.value,
                                      "violation": best.max_violation,
                                      "iterations": best.iterations})
    return best
