"""32-bit fixed-point inference for trained controllers.

Values are two's-complement integers with ``F`` fractional bits.  Batch
normalization and the input scaling are folded into the affine layers
before quantization, so inference is multiply-accumulate, shift, ReLU and
clamp only.  Products accumulate in 64 bits; every rescale rounds to nearest
even and saturates instead of wrapping.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .nn import BN_EPS

INT64_MAX = np.iinfo(np.int64).max
INT64_MIN = np.iinfo(np.int64).min


class QuantizationRangeError(ValueError):
    pass


@dataclass(frozen=True)
class FixedFormat:
    frac_bits: int = 16
    word_length: int = 32

    def __post_init__(self):
        if self.word_length != 32:
            raise ValueError("only 32-bit words are supported")
        if not 1 <= self.frac_bits <= 30:
            raise ValueError("fractional bits must lie in [1, 30]")

    @property
    def scale(self):
        return 1 << self.frac_bits

    @property
    def quantum(self):
        return 1.0 / self.scale

    @property
    def int_min(self):
        return -(1 << (self.word_length - 1))

    @property
    def int_max(self):
        return (1 << (self.word_length - 1)) - 1

    @property
    def max_value(self):
        return self.int_max / self.scale

    @property
    def min_value(self):
        return self.int_min / self.scale


def quantize(v, fmt, name="value"):
    """Round-to-nearest-even onto the fixed grid; out-of-range values raise."""
    v = np.asarray(v, dtype=float)
    q = np.rint(v * fmt.scale)
    if np.any(~np.isfinite(q)) or np.any(q > fmt.int_max) or np.any(q < fmt.int_min):
        worst = float(np.max(np.abs(v))) if v.size else 0.0
        raise QuantizationRangeError(
            f"{name} holds {worst:g}, outside the representable range "
            f"[{fmt.min_value:g}, {fmt.max_value:g}] for Q{31 - fmt.frac_bits}.{fmt.frac_bits}")
    return q.astype(np.int64)


def dequantize(q, fmt):
    return np.asarray(q, dtype=float) / fmt.scale


def fold_network(params):
    """Float affine layers equivalent to the network in inference mode.

    Returns a list of ``(W, b)``; all but the last are followed by ReLU.
    """
    layers = []
    W0 = params.W[0] * params.in_scale[None, :]
    b0 = params.b[0] - params.W[0] @ (params.in_offset * params.in_scale)
    Ws = [W0] + [w for w in params.W[1:]]
    bs = [b0] + [b for b in params.b[1:]]
    for j in range(params.n_hidden):
        var = params.running_var[j]
        if not (np.all(np.isfinite(var)) and np.all(var >= 0)
                and np.all(np.isfinite(params.running_mean[j]))):
            raise ValueError(f"batch-norm statistics of layer {j} cannot be folded")
        k = params.gamma[j] / np.sqrt(var + BN_EPS)
        layers.append((k[:, None] * Ws[j], k * (bs[j] - params.running_mean[j]) + params.beta[j]))
    layers.append((Ws[-1], bs[-1]))
    return layers


def forward_folded(layers, X, head=None, u_min=0.1, u_max=0.9):
    """Float reference through the folded layers (first input only)."""
    a = np.atleast_2d(np.asarray(X, dtype=float))
    for W, b in layers[:-1]:
        a = np.maximum(a @ W.T + b, 0.0)
    W, b = layers[-1]
    eta = a @ W.T + b
    v = eta[:, 0] if head is None else eta @ head.L0 + head.u_ss
    return np.clip(v, u_min, u_max)


@dataclass(frozen=True, eq=False)
class QuantizedNet:
    fmt: FixedFormat
    W: list
    b: list
    u_min_q: int
    u_max_q: int
    L: np.ndarray = None
    u_ss_q: int = None
    max_error: dict = field(default_factory=dict)
    # layers whose worst-case accumulation could leave int64
    unsafe: tuple = ()
    # biases pre-shifted into the Q(2F) accumulator scale
    b_acc: list = field(init=False, repr=False)

    def __post_init__(self):
        F = self.fmt.frac_bits
        b_acc = [np.asarray(b, dtype=np.int64) << F for b in self.b]
        if self.L is not None:
            b_acc.append(np.array([self.u_ss_q], dtype=np.int64) << F)
        object.__setattr__(self, "b_acc", b_acc)

    @property
    def laguerre(self):
        return self.L is not None

    @property
    def u_min(self):
        return self.u_min_q / self.fmt.scale

    @property
    def u_max(self):
        return self.u_max_q / self.fmt.scale


def quantize_net(params, head=None, fmt=None):
    """Fold and quantize a trained network.

    Clamp bounds that are not exactly representable are tightened inward by
    rounding the lower bound up and the upper bound down.
    """
    fmt = fmt or FixedFormat()
    layers = fold_network(params)
    W, b, err = [], [], {}
    for j, (Wf, bf) in enumerate(layers):
        Wq = quantize(Wf, fmt, f"W{j}")
        bq = quantize(bf, fmt, f"b{j}")
        err[f"W{j}"] = float(np.max(np.abs(dequantize(Wq, fmt) - Wf), initial=0.0))
        err[f"b{j}"] = float(np.max(np.abs(dequantize(bq, fmt) - bf), initial=0.0))
        W.append(Wq)
        b.append(bq)
    lo = int(np.ceil(params.u_min * fmt.scale))
    hi = int(np.floor(params.u_max * fmt.scale))
    L = u_ss_q = None
    if head is not None:
        L = quantize(head.L, fmt, "laguerre_L")
        err["laguerre_L"] = float(np.max(np.abs(dequantize(L, fmt) - head.L)))
        u_ss_q = int(quantize(head.u_ss, fmt, "u_ss"))
        err["u_ss"] = abs(u_ss_q / fmt.scale - head.u_ss)
    unsafe = []
    mats = list(W) + ([L[:1]] if L is not None else [])
    biases = list(b) + ([np.array([u_ss_q])] if L is not None else [])
    for j, (Wq, bq) in enumerate(zip(mats, biases)):
        worst = (np.abs(Wq).astype(float).sum(axis=1) * float(-fmt.int_min)
                 + np.abs(bq).astype(float) * fmt.scale)
        if np.any(worst >= 2.0 ** 62):
            unsafe.append(j)
    return QuantizedNet(fmt=fmt, W=W, b=b, u_min_q=lo, u_max_q=hi, L=L, u_ss_q=u_ss_q,
                        max_error=err, unsafe=tuple(unsafe))


def round_shift(acc, F):
    """``acc / 2**F`` rounded to nearest, ties to even.

    Adding ``half - 1`` plus the lowest kept bit before the floor shift
    carries exactly when the remainder exceeds half, or equals half with an
    odd quotient.
    """
    return (acc + ((1 << (F - 1)) - 1) + ((acc >> F) & 1)) >> F


def _mac_exact(Wq, a, b_acc, F):
    """``(W a + b) / 2**F`` in unbounded integers, rounded, then saturated to int64.

    Rounding happens before saturation so the carry of the rounding shift
    can never wrap a saturated accumulator.
    """
    rows = []
    hit = False
    for w_row, b_j in zip(Wq.tolist(), b_acc.tolist()):
        s = round_shift(sum(w * x for w, x in zip(w_row, a.tolist())) + b_j, F)
        if s > INT64_MAX or s < INT64_MIN:
            hit = True
            s = max(min(s, INT64_MAX), INT64_MIN)
        rows.append(s)
    return np.array(rows, dtype=np.int64), hit


def forward_fixed_q(qnet, x):
    """Integer-domain forward pass; returns ``(u_q, overflow_flag)``."""
    fmt = qnet.fmt
    F = fmt.frac_bits
    lo, hi = fmt.int_min, fmt.int_max
    # Python's round() is round-half-even, matching quantize()
    a = np.array([min(max(round(float(v) * fmt.scale), lo), hi) for v in x], dtype=np.int64)
    mats = qnet.W if qnet.L is None else [*qnet.W, qnet.L[:1]]
    last = len(qnet.W) - 1
    flag = False
    for j, Wq in enumerate(mats):
        if j in qnet.unsafe:
            a, hit = _mac_exact(Wq, a, qnet.b_acc[j], F)
            flag |= hit
        else:
            a = round_shift(Wq @ a + qnet.b_acc[j], F)
        if j < last:
            a = np.maximum(a, 0)
            if int(a.max()) > hi:
                a = np.minimum(a, hi)
                flag = True
        elif int(a.max()) > hi or int(a.min()) < lo:
            a = np.clip(a, lo, hi)
            flag = True
    u_q = int(min(max(int(a[0]), qnet.u_min_q), qnet.u_max_q))
    return u_q, flag


def forward_fixed(qnet, x, return_flag=False):
    u_q, flag = forward_fixed_q(qnet, x)
    u = u_q / qnet.fmt.scale
    return (u, flag) if return_flag else u


def bench_latency(qnet, samples, repetitions=1000, warmup=None):
    """Wall-clock per-inference latency of the fixed-point path, in ns."""
    if repetitions < 100:
        raise ValueError("at least 100 repetitions are required")
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise ValueError("no samples to benchmark")
    warmup = min(100, repetitions // 10) if warmup is None else warmup
    pinned = _pin_single_cpu()
    try:
        for i in range(warmup):
            forward_fixed_q(qnet, samples[i % len(samples)])
        times = np.empty(repetitions)
        clock = time.perf_counter_ns
        for i in range(repetitions):
            x = samples[i % len(samples)]
            t0 = clock()
            forward_fixed_q(qnet, x)
            times[i] = clock() - t0
    finally:
        if pinned is not None:
            os.sched_setaffinity(0, pinned)
    return {
        "repetitions": repetitions,
        "min_ns": float(times.min()),
        "median_ns": float(np.median(times)),
        "p99_ns": float(np.percentile(times, 99)),
        "mean_ns": float(times.mean()),
    }


def _pin_single_cpu():
    if not hasattr(os, "sched_setaffinity"):
        return None
    try:
        old = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(old)})
        return old
    except OSError:
        return None
