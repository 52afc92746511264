"""Discrete-time plant interface and the averaged buck-boost converter model."""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``{z : lower <= z <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same shape")
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"empty box: lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    def contains(self, z):
        """Elementwise interval test; works on a point or a (..., dim) stack."""
        z = np.asarray(z, dtype=float)
        return np.all((z >= self.lower) & (z <= self.upper), axis=-1)

    def violation(self, z):
        """Signed excess ``max(0, z - upper) + min(0, z - lower)``."""
        z = np.asarray(z, dtype=float)
        return np.maximum(0.0, z - self.upper) + np.minimum(0.0, z - self.lower)

    def max_violation(self, z):
        v = np.abs(self.violation(z))
        return float(v.max()) if v.size else 0.0

    def clip(self, z):
        return np.clip(z, self.lower, self.upper)

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))


class PlantModel(ABC):
    """Discrete-time plant ``x+ = f(x, u)``.

    Implementations must be deterministic and accept stacked states of shape
    ``(..., n_x)`` with inputs of shape ``(...)`` for the single-input case.
    """

    n_x: int
    n_u: int = 1

    @abstractmethod
    def step(self, x, u):
        ...

    @abstractmethod
    def input_gradient(self, x, u=None):
        """Partial derivative of the successor state with respect to ``u``."""

    def rollout(self, x0, U):
        """States ``x_0..x_N`` under the input sequence ``U``."""
        U = np.asarray(U, dtype=float)
        xs = np.empty((U.shape[0] + 1, self.n_x))
        xs[0] = x0
        for i, u in enumerate(U):
            xs[i + 1] = self.step(xs[i], u)
        return xs

    def rollout_sensitivity(self, x0, U):
        """Rollout plus ``S[i] = d x_i / d U`` of shape ``(N+1, n_x, N)``."""
        U = np.asarray(U, dtype=float)
        N = U.shape[0]
        xs = self.rollout(x0, U)
        S = np.zeros((N + 1, self.n_x, N))
        for i in range(N):
            A = self.state_jacobian(xs[i], U[i])
            S[i + 1, :, :i] = A @ S[i, :, :i]
            S[i + 1, :, i] = self.input_gradient(xs[i], U[i])
        return xs, S

    def state_jacobian(self, x, u, h=1e-7):
        # central differences; concrete plants override with the analytic form
        x = np.asarray(x, dtype=float)
        J = np.empty((self.n_x, self.n_x))
        for j in range(self.n_x):
            e = np.zeros(self.n_x)
            e[j] = h
            J[:, j] = (self.step(x + e, u) - self.step(x - e, u)) / (2 * h)
        return J


@dataclass(frozen=True)
class BuckBoostParams:
    Ts: float = 1e-4
    Vin: float = 15.0
    L_ind: float = 4.2e-3
    C_cap: float = 2.2e-3
    R_load: float = 165.0

    def __post_init__(self):
        for name in ("Ts", "Vin", "L_ind", "C_cap", "R_load"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")


# Constraint sets of the converter experiment.
DEFAULT_X = BoxSet([0.01, -20.0], [2.0, 0.0])
DEFAULT_U = BoxSet([0.1], [0.9])


def buckboost_step(p, x, u):
    """Averaged converter model; ``x = [inductor current, capacitor voltage]``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    a = p.Ts / p.L_ind
    c = p.Ts / p.C_cap
    n1 = x1 + a * x2 + a * (p.Vin - x2) * u
    n2 = -c * x1 + (1.0 - p.Ts / (p.R_load * p.C_cap)) * x2 + c * x1 * u
    return np.stack([n1, n2], axis=-1)


def buckboost_input_gradient(p, x):
    x = np.asarray(x, dtype=float)
    g1 = (p.Ts / p.L_ind) * (p.Vin - x[..., 1])
    g2 = (p.Ts / p.C_cap) * x[..., 0]
    return np.stack([g1, g2], axis=-1)


def buckboost_state_jacobian(p, x, u):
    a = p.Ts / p.L_ind
    c = p.Ts / p.C_cap
    x = np.asarray(x, dtype=float)
    return np.array([[1.0, a * (1.0 - u)],
                     [-c * (1.0 - u), 1.0 - p.Ts / (p.R_load * p.C_cap)]])


def steady_state(p, x2_ss):
    """Equilibrium current and duty cycle for a target capacitor voltage.

    Returns ``(x1_ss, u_ss)``.
    """
    if x2_ss == p.Vin:
        raise ValueError("singular reference: x2_ss equals the input voltage")
    u_ss = x2_ss / (x2_ss - p.Vin)
    if u_ss == 1.0:
        raise ValueError("reference yields unit duty cycle")
    x1_ss = x2_ss / (p.R_load * (u_ss - 1.0))
    return x1_ss, u_ss


class BuckBoost(PlantModel):
    n_x = 2
    n_u = 1

    def __init__(self, params=None):
        self.params = params if params is not None else BuckBoostParams()

    def step(self, x, u):
        return buckboost_step(self.params, x, u)

    def input_gradient(self, x, u=None):
        return buckboost_input_gradient(self.params, x)

    def state_jacobian(self, x, u, h=None):
        return buckboost_state_jacobian(self.params, x, u)

    def steady_state(self, x2_ss):
        return steady_state(self.params, x2_ss)

    def rollout(self, x0, U):
        p = self.params
        a = p.Ts / p.L_ind
        c = p.Ts / p.C_cap
        d = 1.0 - p.Ts / (p.R_load * p.C_cap)
        Vin = p.Vin
        x1, x2 = float(x0[0]), float(x0[1])
        out = [(x1, x2)]
        for u in np.asarray(U, dtype=float).tolist():
            x1, x2 = x1 + a * x2 + a * (Vin - x2) * u, -c * x1 + d * x2 + c * x1 * u
            out.append((x1, x2))
        return np.array(out)

    def rollout_sensitivity(self, x0, U):
        # scalar loop; the generic path spends most of its time in tiny numpy calls
        p = self.params
        a = p.Ts / p.L_ind
        c = p.Ts / p.C_cap
        d = 1.0 - p.Ts / (p.R_load * p.C_cap)
        Vin = p.Vin
        U = np.asarray(U, dtype=float)
        N = U.shape[0]
        xs = self.rollout(x0, U)
        S = np.zeros((N + 1, 2, N))
        for i, u in enumerate(U.tolist()):
            x1, x2 = xs[i]
            s1, s2 = S[i, 0, :i], S[i, 1, :i]
            S[i + 1, 0, :i] = s1 + a * (1.0 - u) * s2
            S[i + 1, 1, :i] = -c * (1.0 - u) * s1 + d * s2
            S[i + 1, 0, i] = a * (Vin - x2)
            S[i + 1, 1, i] = c * x1
        return xs, S

    def __repr__(self):
        return f"BuckBoost({self.params})"
