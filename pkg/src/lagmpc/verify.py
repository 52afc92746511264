"""Self-checks run by ``lagmpc verify``.

Each check returns a :class:`Check` with a pass flag, the measured value and
the bound it was compared against.  They use only the configured plant and
controller settings plus seeded random networks, so no trained artifacts
are required.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import nn
from .closed_loop import Controller, ControllerSpec, Kind
from .fixedpoint import forward_fixed, quantize_net
from .laguerre import build_AL, laguerre_basis
from .mpc import Status, solve_lagnmpc, solve_nmpc
from .plant import steady_state
from .sampling import halton_sample_states
from .training import CONINF, HEAD_LAG, HEAD_NMPC, Batch, TrainConfig, loss_and_grad, total_loss


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""
    seconds: float = 0.0


def _timed(fn):
    def run(*args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        out.seconds = time.perf_counter() - t0
        return out
    run.__name__ = fn.__name__
    return run


@_timed
def check_steady_state(rc):
    x1, u = steady_state(rc.plant_params, -10.0)
    err = abs(x1 - 0.101)
    return Check("steady_state", u == 0.4 and err <= 5e-4, err, 5e-4,
                 f"u_ss={u!r} x1_ss={x1:.6f}")


@_timed
def check_laguerre(rc):
    alpha, M = rc.mpc.alpha, rc.mpc.M
    b = laguerre_basis(alpha, M, rc.mpc.N)
    A = build_AL(alpha, M)
    resid = float(np.max(np.abs(b.L[1:] - b.L[:-1] @ A.T))) if b.N > 1 else 0.0
    long = laguerre_basis(alpha, M, 2000)
    orth = float(np.max(np.abs(long.L.T @ long.L - np.eye(M))))
    ok = resid <= 1e-12 and orth <= 1e-6
    return Check("laguerre_basis", ok, max(resid, orth), 1e-6,
                 f"recursion residual {resid:.2e}, orthonormality {orth:.2e}")


@_timed
def check_equivalence(rc, n_states=50):
    """alpha=0, M=N makes the Laguerre problem a reparameterization of NMPC."""
    cfg = rc.mpc.replace(alpha=0.0, M=rc.mpc.N)
    basis = cfg.basis()
    plant = rc.plant
    worst, used = 0.0, 0
    for x in halton_sample_states(cfg.X, n_states):
        a = solve_nmpc(cfg, plant, x)
        b = solve_lagnmpc(cfg, basis, plant, x)
        if a.status is Status.CONVERGED and b.status is Status.CONVERGED:
            worst = max(worst, abs(a.u0 - b.u0))
            used += 1
    return Check("laguerre_equivalence", used > 0 and worst <= 1e-3, worst, 1e-3,
                 f"{used} of {n_states} states solved by both")


def finite_difference(fn, params, h=1e-6):
    """Central differences of ``fn(params)`` for every trainable entry."""
    out = {}
    for name, arr, _ in params.trainable():
        g = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + h
            fp = fn(params)
            arr[i] = old - h
            fm = fn(params)
            arr[i] = old
            g[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def gradient_error(params, batch, cfg, plant, X, head=None, zero_tol=1e-8):
    """Largest per-tensor relative error of backprop against central differences.

    Tensors whose true gradient is structurally zero (biases feeding a batch
    norm) are compared in absolute terms instead.
    """
    _, _, _, grads, _ = loss_and_grad(params, batch, cfg, plant, X, head, "train")
    fd = finite_difference(lambda p: total_loss(p, batch, cfg, plant, X, head, "train"),
                           params)
    worst = 0.0
    for name, g, _ in grads.trainable():
        diff = float(np.linalg.norm(g - fd[name]))
        scale = np.linalg.norm(g) + np.linalg.norm(fd[name])
        if scale <= zero_tol:
            worst = max(worst, 0.0 if diff <= zero_tol else 1.0)
        else:
            worst = max(worst, diff / scale)
    return worst


@_timed
def check_gradients(rc, seed=None):
    seed = rc.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    plant, X = rc.plant, rc.mpc.X
    basis = rc.mpc.basis()
    head = nn.LaguerreHead.from_basis(basis, rc.mpc.u_ss)
    x = X.lower + rng.random((16, 2)) * (X.upper - X.lower)
    batch = Batch(x=x, u_star=rng.uniform(0.1, 0.9, 16),
                  U_star=rng.uniform(0.1, 0.9, (16, basis.N)))
    worst = 0.0
    for h, kind in ((None, HEAD_NMPC), (head, HEAD_LAG)):
        cfg = TrainConfig(loss=CONINF, head=kind, Gamma=rc.train.Gamma)
        p = nn.init_params(n_out=1 if h is None else basis.M, hidden=(6, 5), seed=seed,
                           input_box=X)
        worst = max(worst, gradient_error(p, batch, cfg, plant, X, h))
    return Check("gradients", worst <= 1e-5, worst, 1e-5, "NMPC and Laguerre heads, ConInf loss")


@_timed
def check_clamp(rc, n_nets=20, n_points=500):
    rng = np.random.default_rng(rc.seed)
    basis = rc.mpc.basis()
    head = nn.LaguerreHead.from_basis(basis, rc.mpc.u_ss)
    lo, hi = rc.mpc.U.lower[0], rc.mpc.U.upper[0]
    bad = 0
    for k in range(n_nets):
        p = nn.init_params(n_out=basis.M, hidden=(8, 8), seed=int(rng.integers(2**31)))
        for w in p.W:
            w *= rng.uniform(1, 50)
        x = rng.normal(0, 20, (n_points, 2))
        U = nn.forward_lagnmpc(p, head, x)
        bad += int(np.count_nonzero((U < lo) | (U > hi)))
        q = quantize_net(p, head, rc.fixed)
        for xi in x[:20]:
            u = forward_fixed(q, xi)
            bad += int(u < lo or u > hi)
    return Check("clamp", bad == 0, bad, 0, f"{n_nets} random networks")


@_timed
def check_offset_free(rc):
    p = nn.init_params(n_out=rc.mpc.M, seed=rc.seed, input_box=rc.mpc.X)
    head = nn.LaguerreHead.from_basis(rc.mpc.basis(), rc.mpc.u_ss)
    worst = 0.0
    for kind, params, h in ((Kind.NN_LAGNMPC, p, head),
                            (Kind.NN_NMPC, nn.init_params(seed=rc.seed), None)):
        ctrl = Controller(ControllerSpec(kind, True, rc.controller.epsilon), rc.mpc, rc.plant,
                          params, h)
        worst = max(worst, abs(ctrl(rc.mpc.x_ss).u - rc.mpc.u_ss))
    return Check("offset_free", worst == 0.0, worst, 0.0, "output at x_ss equals u_ss")


@_timed
def check_fixed_point(rc, n_states=1000):
    p = nn.init_params(n_out=rc.mpc.M, seed=rc.seed, input_box=rc.mpc.X)
    head = nn.LaguerreHead.from_basis(rc.mpc.basis(), rc.mpc.u_ss)
    q = quantize_net(p, head, rc.fixed)
    states = np.array(halton_sample_states(rc.mpc.X, n_states))
    ref = nn.forward_lagnmpc_first(p, head, states)
    fx = np.array([forward_fixed(q, x) for x in states])
    err = float(np.max(np.abs(fx - ref)))
    return Check("fixed_point", err <= 1e-3, err, 1e-3,
                 f"Q{31 - rc.fixed.frac_bits}.{rc.fixed.frac_bits}, untrained network")


CHECKS = (check_steady_state, check_laguerre, check_equivalence, check_gradients,
          check_clamp, check_offset_free, check_fixed_point)


def run_checks(rc, checks=CHECKS):
    return [c(rc) for c in checks]
