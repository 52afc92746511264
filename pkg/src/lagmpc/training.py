"""Supervised and constraints-informed losses, and the minibatch training loop."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn

log = logging.getLogger(__name__)

SUPERVISED = "supervised"
CONINF = "coninf"
HEAD_NMPC = "nmpc"
HEAD_LAG = "lagnmpc"


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-4
    batch_size: int = 1024
    split: float = 0.7
    Gamma: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.1]))
    loss: str = CONINF
    head: str = HEAD_LAG
    seed: int = 0
    hidden: tuple = (20, 20)
    weight_decay: float = 1e-2
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    normalize_inputs: bool = True

    def __post_init__(self):
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        self.hidden = tuple(int(n) for n in self.hidden)
        self.validate()

    def validate(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        if not np.allclose(self.Gamma, np.diag(np.diag(self.Gamma))) or np.any(np.diag(self.Gamma) < 0):
            raise ValueError("Gamma must be diagonal and nonnegative")
        if self.loss not in (SUPERVISED, CONINF):
            raise ValueError(f"unknown loss mode {self.loss!r}")
        if self.head not in (HEAD_NMPC, HEAD_LAG):
            raise ValueError(f"unknown head {self.head!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch size and learning rate must be positive")


@dataclass
class Batch:
    x: np.ndarray
    u_star: np.ndarray = None
    U_star: np.ndarray = None
    eta_star: np.ndarray = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if len(self.x) == 0:
            raise ValueError("empty batch")
        for name in ("u_star", "U_star", "eta_star"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))

    @classmethod
    def of(cls, data, idx=None):
        if isinstance(data, Batch) and idx is None:
            return data
        pick = (lambda a: a) if idx is None else (lambda a: None if a is None else a[idx])
        return cls(x=pick(data.x), u_star=pick(data.u_star), U_star=pick(data.U_star),
                   eta_star=pick(getattr(data, "eta_star", None)))

    def sequence_targets(self, head):
        if self.eta_star is not None:
            return self.eta_star @ head.L.T + head.U_ss
        if self.U_star is not None:
            return np.asarray(self.U_star, dtype=float)
        raise ValueError("batch carries no sequence labels")


def _violation_terms(x_next, X, Gamma):
    """Per-sample ConInf penalty and its gradient with respect to x_next."""
    viol = X.violation(x_next)
    pen = np.einsum("bi,ij,bj->b", viol, Gamma, viol)
    return pen, 2.0 * viol @ Gamma.T


# --- loss values -----------------------------------------------------------

def loss_supervised_nmpc(params, batch, mode="train"):
    batch = Batch.of(batch)
    if batch.u_star is None:
        raise ValueError("batch carries no input labels")
    u = nn.forward_nmpc(params, batch.x, mode)
    return float(np.mean((np.asarray(batch.u_star) - u) ** 2))


def loss_supervised_lagnmpc(params, head, batch, mode="train"):
    batch = Batch.of(batch)
    target = batch.sequence_targets(head)
    U = nn.forward_lagnmpc(params, head, batch.x, mode)
    return float(np.mean(np.sum((target - U) ** 2, axis=1)))


def loss_coninf(params, batch, plant, X, Gamma, head=None, mode="train"):
    """Mean Gamma-weighted squared one-step violation of the state box."""
    batch = Batch.of(batch)
    if not hasattr(plant, "input_gradient"):
        raise TypeError("plant does not provide an input gradient")
    if head is None:
        u = nn.forward_nmpc(params, batch.x, mode)
    else:
        u = nn.forward_lagnmpc_first(params, head, batch.x, mode)
    pen, _ = _violation_terms(plant.step(batch.x, u), X, np.asarray(Gamma, dtype=float))
    return float(np.mean(pen))


def total_loss(params, batch, cfg, plant=None, X=None, head=None, mode="train"):
    batch = Batch.of(batch)
    if head is None:
        ls = loss_supervised_nmpc(params, batch, mode)
    else:
        ls = loss_supervised_lagnmpc(params, head, batch, mode)
    if cfg.loss == SUPERVISED:
        return ls
    return ls + loss_coninf(params, batch, plant, X, cfg.Gamma, head, mode)


# --- loss with gradient ----------------------------------------------------

def loss_and_grad(params, batch, cfg, plant=None, X=None, head=None, mode="train"):
    """Return ``(total, L_s, L_x, grads, cache)`` from one shared forward pass."""
    batch = Batch.of(batch)
    B = batch.x.shape[0]
    eta, cache = nn.trunk_forward(params, batch.x, mode)
    if head is None:
        v, u = nn.nmpc_head(params, eta)
        r = u - np.asarray(batch.u_star, dtype=float)
        ls = float(np.mean(r * r))
        d_eta = nn.nmpc_head_backward(params, eta, v, 2.0 * r / B)
        u_first, v_first = u, v
    else:
        v, U = nn.lag_head(params, head, eta)
        r = U - batch.sequence_targets(head)
        ls = float(np.mean(np.sum(r * r, axis=1)))
        d_eta = nn.lag_head_backward(params, head, v, 2.0 * r / B)
        if cfg.loss == CONINF:
            v_first, u_first = nn.lag_first_head(params, head, eta)

    lx = 0.0
    if cfg.loss == CONINF:
        if plant is None or X is None:
            raise ValueError("constraints-informed loss needs a plant and a state set")
        pen, d_xnext = _violation_terms(plant.step(batch.x, u_first), X, cfg.Gamma)
        lx = float(np.mean(pen))
        d_u = np.einsum("bi,bi->b", d_xnext, plant.input_gradient(batch.x, u_first)) / B
        if head is None:
            d_eta = d_eta + nn.nmpc_head_backward(params, eta, v_first, d_u)
        else:
            d_eta = d_eta + nn.lag_first_head_backward(params, head, v_first, d_u)

    grads = nn.trunk_backward(params, cache, d_eta)
    return ls + lx, ls, lx, grads, cache


# --- training loop ---------------------------------------------------------

@dataclass
class History:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    supervised: list = field(default_factory=list)
    coninf: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.epoch, self.train_loss, self.val_loss, self.supervised, self.coninf))


def split_indices(n, split, seed):
    perm = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(np.floor(split * n)))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train(dataset, cfg, plant=None, X=None, head=None, params=None):
    """Train a network on ``dataset``; returns ``(params, history)``.

    With ``head`` given the network outputs Laguerre coefficients and is
    fitted on full input sequences; otherwise it fits the first input.
    """
    n = len(dataset.x)
    if n == 0:
        raise ValueError("empty dataset")
    if (head is None) != (cfg.head == HEAD_NMPC):
        raise ValueError(f"head mode {cfg.head!r} inconsistent with the supplied head")
    if cfg.loss == CONINF and (plant is None or X is None):
        raise ValueError("constraints-informed training needs a plant and a state set")

    if n == 1:
        train_idx, val_idx = np.array([0]), np.array([], dtype=int)
    else:
        train_idx, val_idx = split_indices(n, cfg.split, cfg.seed)
    train_set = Batch.of(dataset, train_idx)
    val_set = Batch.of(dataset, val_idx) if len(val_idx) else None

    n_out = 1 if head is None else head.L.shape[1]
    if params is None:
        params = nn.init_params(n_in=train_set.x.shape[1], n_out=n_out, hidden=cfg.hidden,
                                seed=cfg.seed, input_box=X if cfg.normalize_inputs else None)
    opt = nn.AdamW(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps,
                   weight_decay=cfg.weight_decay)
    hist = History()

    n_train = len(train_idx)
    bs = cfg.batch_size
    if bs > n_train:
        msg = f"batch size {bs} exceeds training set size {n_train}; using {n_train}"
        log.warning(msg)
        hist.warnings.append(msg)
        bs = n_train
    rng = np.random.default_rng(cfg.seed + 1)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_train)
        tot = sup = con = 0.0
        seen = 0
        for start in range(0, n_train, bs):
            idx = order[start:start + bs]
            # batch norm needs two samples for a variance
            if len(idx) < 2 and n_train >= 2:
                continue
            batch = Batch.of(train_set, idx)
            loss, ls, lx, grads, cache = loss_and_grad(params, batch, cfg, plant, X, head, "train")
            nn.update_running_stats(params, cache)
            opt.step(params, grads)
            k = len(idx)
            tot += loss * k
            sup += ls * k
            con += lx * k
            seen += k
        val = np.nan
        if val_set is not None:
            val = total_loss(params, val_set, cfg, plant, X, head, mode="infer")
        hist.epoch.append(epoch)
        hist.train_loss.append(tot / seen)
        hist.val_loss.append(float(val))
        hist.supervised.append(sup / seen)
        hist.coninf.append(con / seen)
        if epoch == 1 or epoch % 100 == 0 or epoch == cfg.epochs:
            log.info("epoch %d train %.3e val %.3e", epoch, tot / seen, val)
    return params, hist
