"""Halton sampling of the state constraint set and dataset generation."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .mpc import Status, solve_lagnmpc, solve_nmpc
from .plant import BoxSet

log = logging.getLogger(__name__)


def first_primes(d):
    """The first ``d`` primes by trial division."""
    primes = []
    k = 2
    while len(primes) < d:
        if all(k % p for p in primes if p * p <= k):
            primes.append(k)
        k += 1
    return primes


def _is_prime(p):
    return p >= 2 and all(p % q for q in range(2, math.isqrt(p) + 1))


def radical_inverse_exact(p, n):
    """Radical inverse of ``n`` in base ``p`` as an exact fraction."""
    if not _is_prime(p):
        raise ValueError(f"base must be prime, got {p}")
    if n < 0:
        raise ValueError("index must be non-negative")
    num, den = 0, 1
    while n > 0:
        n, digit = divmod(n, p)
        num = num * p + digit
        den *= p
    return Fraction(num, den)


def radical_inverse(p, n):
    """Reflect the base-``p`` digits of ``n`` about the radix point."""
    return float(radical_inverse_exact(p, n))


def halton_point(d, n, primes=None):
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if n < 0:
        raise ValueError("index must be non-negative")
    primes = primes or first_primes(d)
    return np.array([radical_inverse(p, n) for p in primes[:d]])


@dataclass(frozen=True)
class ConstraintSet:
    """A state set given by a membership predicate and axis-aligned bounds."""

    contains_fn: object
    bounds: BoxSet

    def contains(self, x):
        return bool(self.contains_fn(np.asarray(x, dtype=float)))


def bounding_box(X):
    """Smallest axis-aligned box containing ``X``."""
    if isinstance(X, BoxSet):
        box = X
    elif isinstance(X, ConstraintSet):
        box = X.bounds
    else:
        raise TypeError(f"unsupported constraint set {type(X).__name__}")
    if not np.all(np.isfinite(box.lower)) or not np.all(np.isfinite(box.upper)):
        raise ValueError("constraint set must be bounded")
    if box.volume <= 0.0:
        raise ValueError("bounding box has zero volume")
    return box


def halton_sample_states(X, N_d, max_index=None, stats=None):
    """First ``N_d`` Halton points (index from 1) that fall inside ``X``.

    Indices advance in blocks of ``N_d``; points are affinely mapped from the
    unit cube onto the bounding box and rejected if outside ``X``.  If a dict
    is passed as ``stats`` it receives the tried and rejected counts.
    """
    if N_d < 1:
        raise ValueError("number of samples must be >= 1")
    box = bounding_box(X)
    d = box.dim
    primes = first_primes(d)
    if max_index is None:
        max_index = 1000 * N_d + 10000
    contains = X.contains if isinstance(X, ConstraintSet) else (lambda x: bool(box.contains(x)))
    span = box.upper - box.lower
    out = []
    n = 1
    while len(out) < N_d:
        if n > max_index:
            raise RuntimeError(
                f"only {len(out)} of {N_d} samples found in {max_index} Halton points; "
                "constraint set may have zero measure")
        block_end = n + N_d - len(out)
        for k in range(n, block_end):
            h = np.array([radical_inverse(p, k) for p in primes])
            x = box.lower + h * span
            if contains(x):
                out.append(x)
        n = block_end
    if stats is not None:
        stats.update(tried=n - 1, rejected=n - 1 - len(out))
    return out


@dataclass
class Dataset:
    x: np.ndarray
    u_star: np.ndarray
    U_star: np.ndarray
    cost: np.ndarray
    status: list
    eta_star: np.ndarray = None
    n_requested: int = 0
    counts: dict = field(default_factory=dict)

    @property
    def n_retained(self):
        return self.x.shape[0]

    @property
    def laguerre(self):
        return self.eta_star is not None

    def __len__(self):
        return self.n_retained

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(x=self.x[idx], u_star=self.u_star[idx], U_star=self.U_star[idx],
                       cost=self.cost[idx], status=[self.status[i] for i in idx],
                       eta_star=None if self.eta_star is None else self.eta_star[idx],
                       n_requested=self.n_requested, counts=dict(self.counts))


# worker state for the process pool
_job = {}


def _init_worker(cfg, plant, basis):
    _job.update(cfg=cfg, plant=plant, basis=basis)


def _solve_one(x):
    cfg, plant, basis = _job["cfg"], _job["plant"], _job["basis"]
    if basis is None:
        return solve_nmpc(cfg, plant, x)
    return solve_lagnmpc(cfg, basis, plant, x)


def generate_dataset(cfg, plant, states, basis=None, workers=1, chunksize=16):
    """Solve (Lag)NMPC at each state and keep the converged solutions.

    Results are ordered by sample index regardless of ``workers``.
    """
    states = [np.asarray(x, dtype=float) for x in states]
    for x in states:
        if not cfg.X.contains(x):
            raise ValueError(f"state {x} lies outside X")
    if workers > 1 and len(states) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg, plant, basis)) as ex:
            results = list(ex.map(_solve_one, states, chunksize=chunksize))
    else:
        _init_worker(cfg, plant, basis)
        results = [_solve_one(x) for x in states]

    keep = [i for i, r in enumerate(results) if r.status is Status.CONVERGED]
    counts = {s.value: sum(r.status is s for r in results) for s in Status}
    log.info("dataset solved", extra={"requested": len(states), "retained": len(keep),
                                      **counts})
    if not keep:
        raise RuntimeError("no converged solutions; dataset would be empty")
    res = [results[i] for i in keep]
    return Dataset(
        x=np.array([states[i] for i in keep]),
        u_star=np.array([r.u0 for r in res]),
        U_star=np.array([r.U for r in res]),
        eta_star=None if basis is None else np.array([r.eta for r in res]),
        cost=np.array([r.cost for r in res]),
        status=[r.status.value for r in res],
        n_requested=len(states),
        counts=counts,
    )
