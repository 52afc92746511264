"""Discrete-time Laguerre basis for parameterizing a predicted input sequence.

The input sequence over a horizon of N steps is written as a weighted sum of
M orthonormal Laguerre functions, ``U = L @ eta + u_ss``.  Row i of ``L`` is
generated from row 0 by the difference equation ``L[i+1] = A_L @ L[i]``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def build_AL(alpha, M):
    """Return the M x M lower-triangular Laguerre state matrix.

    Diagonal entries are ``alpha``; entry (i, j) below the diagonal is
    ``(-alpha)**(i - j - 1) * beta`` with ``beta = 1 - alpha**2``.
    """
    _check_alpha_M(alpha, M)
    beta = 1.0 - alpha * alpha
    A = np.zeros((M, M))
    for i in range(M):
        A[i, i] = alpha
        for j in range(i):
            A[i, j] = (-alpha) ** (i - j - 1) * beta
    return A


def _check_alpha_M(alpha, M):
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"Laguerre pole must lie in [0, 1), got {alpha!r}")
    if int(M) != M or M < 1:
        raise ValueError(f"basis size M must be a positive integer, got {M!r}")


@dataclass(frozen=True, eq=False)
class LaguerreBasis:
    alpha: float
    M: int
    N: int
    L: np.ndarray = field(repr=False)
    beta: float

    @property
    def L0(self):
        return self.L[0]

    def reconstruct(self, eta, u_ss):
        return reconstruct_sequence(self, eta, u_ss)


def laguerre_basis(alpha, M, N):
    """Build the N x M Laguerre matrix by iterating the row recursion."""
    return _cached_basis(float(alpha), int(M), int(N))


@lru_cache(maxsize=32)
def _cached_basis(alpha, M, N):
    _check_alpha_M(alpha, M)
    if N < 1:
        raise ValueError(f"horizon N must be positive, got {N}")
    if M > N:
        raise ValueError(f"basis size M={M} exceeds horizon N={N}")
    beta = 1.0 - alpha * alpha
    A = build_AL(alpha, M)
    L = np.empty((N, M))
    L[0] = np.sqrt(beta) * (-alpha) ** np.arange(M)
    for i in range(N - 1):
        L[i + 1] = A @ L[i]
    L.setflags(write=False)
    return LaguerreBasis(alpha=alpha, M=M, N=N, L=L, beta=beta)


def _as_eta(basis, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (basis.M,):
        raise ValueError(f"expected {basis.M} Laguerre coefficients, got shape {eta.shape}")
    return eta


def reconstruct_sequence(basis, eta, u_ss):
    """Input sequence ``L @ eta + u_ss`` of length N."""
    return basis.L @ _as_eta(basis, eta) + u_ss


def first_input(basis, eta, u_ss):
    """First element of the reconstructed sequence, ``L0 @ eta + u_ss``."""
    # taken from the full product so both paths share one summation order
    return float(reconstruct_sequence(basis, eta, u_ss)[0])
