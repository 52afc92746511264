"""Multilayer perceptron with batch normalization and a clamped output.

Hidden layers are ``affine -> batchnorm -> ReLU``.  The output layer is
affine and produces either the control input directly (NMPC head) or a
vector of Laguerre coefficients that a frozen affine layer maps to the input
sequence ``L eta + u_ss`` (Laguerre head).  A clamp onto ``[u_min, u_max]``
closes the network, so every output satisfies the input box by construction.

Arrays are batch-major: inputs ``(B, n_in)``, weights ``(n_out, n_in)``.
"""

from dataclasses import dataclass, field

import numpy as np

BN_EPS = 1e-5


class StaleCacheError(RuntimeError):
    """Backward called without a matching training-mode forward pass."""


@dataclass
class MlpParams:
    W: list
    b: list
    gamma: list
    beta: list
    running_mean: list
    running_var: list
    u_min: float = 0.1
    u_max: float = 0.9
    momentum: float = 0.1
    version: int = 0
    # frozen input scaling x -> (x - in_offset) * in_scale
    in_offset: np.ndarray = None
    in_scale: np.ndarray = None

    def __post_init__(self):
        n = self.W[0].shape[1]
        if self.in_offset is None:
            self.in_offset = np.zeros(n)
        if self.in_scale is None:
            self.in_scale = np.ones(n)

    @property
    def n_hidden(self):
        return len(self.gamma)

    @property
    def n_in(self):
        return self.W[0].shape[1]

    @property
    def n_out(self):
        return self.W[-1].shape[0]

    @property
    def widths(self):
        return [w.shape[0] for w in self.W[:-1]]

    def trainable(self):
        """``(name, array, decayed)`` for each trainable tensor, in a fixed order."""
        out = []
        for j in range(len(self.W)):
            out.append((f"W{j}", self.W[j], True))
            out.append((f"b{j}", self.b[j], True))
            if j < self.n_hidden:
                out.append((f"gamma{j}", self.gamma[j], False))
                out.append((f"beta{j}", self.beta[j], False))
        return out

    def copy(self):
        c = lambda xs: [np.array(x, copy=True) for x in xs]
        return MlpParams(c(self.W), c(self.b), c(self.gamma), c(self.beta),
                         c(self.running_mean), c(self.running_var),
                         self.u_min, self.u_max, self.momentum, self.version,
                         self.in_offset.copy(), self.in_scale.copy())

    def zero_like(self):
        z = lambda xs: [np.zeros_like(x) for x in xs]
        return MlpParams(z(self.W), z(self.b), z(self.gamma), z(self.beta),
                         z(self.running_mean), z(self.running_var),
                         self.u_min, self.u_max, self.momentum, 0,
                         self.in_offset, self.in_scale)


def init_params(n_in=2, n_out=1, hidden=(20, 20), seed=0, u_min=0.1, u_max=0.9,
                input_box=None):
    """Seeded uniform fan-in initialization.

    Hidden weights use the He bound ``sqrt(6 / fan_in)``; the output layer uses
    ``sqrt(1 / fan_in)`` so the clamp is not saturated at the start.  With
    ``input_box`` the inputs are mapped affinely from the box onto [-1, 1].
    """
    if u_min > u_max:
        raise ValueError("u_min exceeds u_max")
    rng = np.random.default_rng(seed)
    sizes = [n_in, *hidden, n_out]
    W, b = [], []
    for j, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / fi) if j < len(hidden) else np.sqrt(1.0 / fi)
        W.append(rng.uniform(-bound, bound, size=(fo, fi)))
        b.append(np.zeros(fo))
    offset = scale = None
    if input_box is not None:
        offset = 0.5 * (input_box.lower + input_box.upper)
        scale = 2.0 / (input_box.upper - input_box.lower)
    return MlpParams(
        W=W, b=b, in_offset=offset, in_scale=scale,
        gamma=[np.ones(n) for n in hidden],
        beta=[np.zeros(n) for n in hidden],
        running_mean=[np.zeros(n) for n in hidden],
        running_var=[np.ones(n) for n in hidden],
        u_min=float(u_min), u_max=float(u_max),
    )


@dataclass(frozen=True, eq=False)
class LaguerreHead:
    L: np.ndarray
    u_ss: float
    U_ss: np.ndarray = field(init=False)

    def __post_init__(self):
        L = np.array(self.L, dtype=float, copy=True)
        L.setflags(write=False)
        U_ss = np.full(L.shape[0], float(self.u_ss))
        U_ss.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "u_ss", float(self.u_ss))
        object.__setattr__(self, "U_ss", U_ss)

    @classmethod
    def from_basis(cls, basis, u_ss):
        return cls(basis.L, u_ss)

    @property
    def L0(self):
        return self.L[0]


def clamp(xi, u_min, u_max):
    if u_min > u_max:
        raise ValueError("u_min exceeds u_max")
    return np.minimum(np.maximum(xi, u_min), u_max)


def clamp_grad(xi, u_min, u_max):
    """Subgradient of the clamp: 1 on the closed interval, 0 outside."""
    return ((xi >= u_min) & (xi <= u_max)).astype(float)


@dataclass
class Cache:
    X: np.ndarray
    mode: str
    version: int
    layers: list
    eta: np.ndarray = None
    batch_mean: list = field(default_factory=list)
    batch_var: list = field(default_factory=list)


def _as_batch(params, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.n_in:
        raise ValueError(f"expected inputs with {params.n_in} features, got shape {x.shape}")
    return X, single


def trunk_forward(params, X, mode="infer"):
    """Everything before the head; returns ``(eta, cache)`` with ``eta`` of shape (B, n_out)."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    cache = Cache(X=X, mode=mode, version=params.version, layers=[])
    a = (X - params.in_offset) * params.in_scale
    for j in range(params.n_hidden):
        z = a @ params.W[j].T + params.b[j]
        if mode == "train":
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            cache.batch_mean.append(mu)
            cache.batch_var.append(var)
        else:
            mu = params.running_mean[j]
            var = params.running_var[j]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        zhat = (z - mu) * inv_std
        y = params.gamma[j] * zhat + params.beta[j]
        a_next = np.maximum(y, 0.0)
        cache.layers.append((a, zhat, inv_std, y))
        a = a_next
    eta = a @ params.W[-1].T + params.b[-1]
    cache.layers.append((a,))
    cache.eta = eta
    return eta, cache


def trunk_backward(params, cache, d_eta):
    """Parameter gradients given ``dLoss/d eta``; batch statistics are differentiated."""
    if cache is None or cache.eta is None:
        raise StaleCacheError("no forward cache available")
    if cache.version != params.version:
        raise StaleCacheError("forward cache predates the latest parameter update")
    grads = params.zero_like()
    (a_last,) = cache.layers[-1]
    grads.W[-1] = d_eta.T @ a_last
    grads.b[-1] = d_eta.sum(axis=0)
    da = d_eta @ params.W[-1]
    B = cache.X.shape[0]
    for j in reversed(range(params.n_hidden)):
        a_in, zhat, inv_std, y = cache.layers[j]
        dy = da * (y > 0.0)
        grads.gamma[j] = (dy * zhat).sum(axis=0)
        grads.beta[j] = dy.sum(axis=0)
        dzhat = dy * params.gamma[j]
        if cache.mode == "train":
            dz = inv_std / B * (B * dzhat - dzhat.sum(axis=0)
                                - zhat * (dzhat * zhat).sum(axis=0))
        else:
            dz = dzhat * inv_std
        grads.W[j] = dz.T @ a_in
        grads.b[j] = dz.sum(axis=0)
        da = dz @ params.W[j]
    return grads


def update_running_stats(params, cache):
    """Exponential moving average of batch statistics (unbiased variance)."""
    if cache.mode != "train":
        return
    B = cache.X.shape[0]
    m = params.momentum
    for j, (mu, var) in enumerate(zip(cache.batch_mean, cache.batch_var)):
        unbiased = var * B / (B - 1) if B > 1 else var
        params.running_mean[j] = (1.0 - m) * params.running_mean[j] + m * mu
        params.running_var[j] = (1.0 - m) * params.running_var[j] + m * unbiased


# heads: each returns (pre-clamp value, output) from eta

def nmpc_head(params, eta):
    v = eta[:, 0]
    return v, clamp(v, params.u_min, params.u_max)


def lag_head(params, head, eta):
    v = eta @ head.L.T + head.U_ss
    return v, clamp(v, params.u_min, params.u_max)


def lag_first_head(params, head, eta):
    v = eta @ head.L0 + head.u_ss
    return v, clamp(v, params.u_min, params.u_max)


def nmpc_head_backward(params, eta, v, d_out):
    d_eta = np.zeros_like(eta)
    d_eta[:, 0] = d_out * clamp_grad(v, params.u_min, params.u_max)
    return d_eta


def lag_head_backward(params, head, v, d_out):
    return (d_out * clamp_grad(v, params.u_min, params.u_max)) @ head.L


def lag_first_head_backward(params, head, v, d_out):
    g = d_out * clamp_grad(v, params.u_min, params.u_max)
    return g[:, None] * head.L0[None, :]


def _check_head(params, head):
    if head is None:
        if params.n_out != 1:
            raise ValueError("NMPC head needs a single network output")
    elif params.n_out != head.L.shape[1]:
        raise ValueError(f"network outputs {params.n_out} coefficients, head expects {head.L.shape[1]}")


def forward_nmpc(params, x, mode="infer"):
    _check_head(params, None)
    X, single = _as_batch(params, x)
    eta, _ = trunk_forward(params, X, mode)
    _, u = nmpc_head(params, eta)
    return float(u[0]) if single else u


def forward_lagnmpc(params, head, x, mode="infer"):
    _check_head(params, head)
    X, single = _as_batch(params, x)
    eta, _ = trunk_forward(params, X, mode)
    _, U = lag_head(params, head, eta)
    return U[0] if single else U


def forward_lagnmpc_first(params, head, x, mode="infer"):
    _check_head(params, head)
    X, single = _as_batch(params, x)
    eta, _ = trunk_forward(params, X, mode)
    _, u = lag_first_head(params, head, eta)
    return float(u[0]) if single else u


def policy(params, head=None):
    """Scalar control law ``x -> u`` in inference mode."""
    if head is None:
        return lambda x: forward_nmpc(params, x)
    return lambda x: forward_lagnmpc_first(params, head, x)


def backward(params, cache, d_out, head=None, first=False):
    """Gradients of a loss with respect to all trainable parameters.

    ``d_out`` is the loss gradient with respect to the clamped network
    output produced by the forward pass that filled ``cache``.
    """
    if cache is None or cache.eta is None:
        raise StaleCacheError("no forward cache available")
    eta = cache.eta
    if head is None:
        v, _ = nmpc_head(params, eta)
        d_eta = nmpc_head_backward(params, eta, v, np.asarray(d_out, dtype=float))
    elif first:
        v, _ = lag_first_head(params, head, eta)
        d_eta = lag_first_head_backward(params, head, v, np.asarray(d_out, dtype=float))
    else:
        v, _ = lag_head(params, head, eta)
        d_eta = lag_head_backward(params, head, v, np.asarray(d_out, dtype=float))
    return trunk_backward(params, cache, d_eta)


class AdamW:
    """Adam with decoupled weight decay on weights and biases only."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p, _ in params.trainable()}
        self.v = {name: np.zeros_like(p) for name, p, _ in params.trainable()}

    def step(self, params, grads):
        self.t += 1
        adamw_step(params, grads, self.m, self.v, self.t, self.lr, self.weight_decay,
                   self.betas, self.eps)

    def state_dict(self):
        return {"t": self.t, "m": self.m, "v": self.v}


def adamw_step(params, grads, m, v, t, lr=1e-4, weight_decay=1e-2,
               betas=(0.9, 0.999), eps=1e-8):
    """One in-place AdamW update; ``m`` and ``v`` are per-tensor moment dicts."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if t < 1:
        raise ValueError("step counter starts at 1")
    b1, b2 = betas
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    gmap = {name: g for name, g, _ in grads.trainable()}
    for name, p, decayed in params.trainable():
        g = gmap[name]
        if decayed and weight_decay:
            p *= 1.0 - lr * weight_decay
        m[name] = b1 * m[name] + (1.0 - b1) * g
        v[name] = b2 * v[name] + (1.0 - b2) * g * g
        p -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + eps)
    params.version += 1
    return params
