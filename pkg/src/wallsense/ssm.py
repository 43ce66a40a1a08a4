"""State-space kernels: ZOH discretization, LTI scans, and the selective scan.

The selective scan evaluates h_k = abar_k * h_{k-1} + bbar_k * x_k with
per-step parameters, either step by step or with a work-efficient parallel
prefix sweep over the associative operator
(a1, b1) o (a2, b2) = (a2*a1, a2*b1 + b2).  Both variants are differentiable;
the adjoint is the same recurrence run in reverse time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _make

# Below this sequence length the parallel entry point falls back to the loop.
PARALLEL_THRESHOLD = 64


class SsmError(ValueError):
    """Invalid state-space parameters."""


# ---------------------------------------------------------------------------
# Continuous / discrete LTI systems
# ---------------------------------------------------------------------------

@dataclass
class ContinuousSsm:
    """Continuous-time (A, B, C) with step size delta."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    delta: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], 1)
        self.C = np.asarray(self.C, dtype=float).reshape(1, self.A.shape[0])
        if self.A.shape[0] != self.A.shape[1]:
            raise SsmError("A must be square")
        if self.delta <= 0.0:
            raise SsmError("delta must be > 0")
        if not (np.isfinite(self.A).all() and np.isfinite(self.B).all()
                and np.isfinite(self.C).all()):
            raise SsmError("parameters must be finite")


@dataclass
class DiscreteSsm:
    A_bar: np.ndarray
    B_bar: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A_bar = np.atleast_2d(np.asarray(self.A_bar, dtype=float))
        self.B_bar = np.asarray(self.B_bar, dtype=float).reshape(self.A_bar.shape[0], 1)
        self.C = np.asarray(self.C, dtype=float).reshape(1, self.A_bar.shape[0])
        if not (np.isfinite(self.A_bar).all() and np.isfinite(self.B_bar).all()
                and np.isfinite(self.C).all()):
            raise SsmError("parameters must be finite")


def matrix_exponential(m: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring Taylor evaluation of exp(m)."""
    m = np.asarray(m, dtype=float)
    norm = float(np.max(np.sum(np.abs(m), axis=1))) if m.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    ms = m / (2.0 ** squarings)
    out = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for k in range(1, 40):
        term = term @ ms / k
        out = out + term
        if np.max(np.abs(term)) < 1e-20 * max(1.0, np.max(np.abs(out))):
            break
    for _ in range(squarings):
        out = out @ out
    return out


def expm1_over_x_np(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z with the series limit 1 + z/2 + z^2/6 near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-9
    zsafe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(zsafe) / zsafe)


def _expm1_over_x_deriv_np(z: np.ndarray) -> np.ndarray:
    """d/dz of (exp(z)-1)/z, series 1/2 + z/3 + z^2/8 + z^3/30 near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zsafe = np.where(small, 1.0, z)
    series = 0.5 + z / 3.0 + z * z / 8.0 + z ** 3 / 30.0
    exact = (np.exp(zsafe) * (zsafe - 1.0) + 1.0) / (zsafe * zsafe)
    return np.where(small, series, exact)


def expm1_over_x(z: Tensor) -> Tensor:
    """Differentiable (exp(z) - 1) / z."""
    out_data = expm1_over_x_np(z.data)

    def bw(g):
        z.accumulate_grad(g * _expm1_over_x_deriv_np(z.data))
    return _make(out_data, (z,), bw)


def zoh_discretize(ssm: ContinuousSsm) -> DiscreteSsm:
    """Zero-order-hold discretization: A_bar = exp(dA), B_bar = (dA)^-1 (exp(dA)-I) dB.

    Diagonal transition matrices use element-wise closed forms with a
    series-safe limit; dense ones go through the augmented matrix
    exp([[A, B], [0, 0]] * delta), which needs no inversion.
    """
    d = ssm.delta
    a = ssm.A
    n = a.shape[0]
    if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        diag = np.diag(a) * d
        with np.errstate(over="ignore"):
            a_bar = np.diag(np.exp(diag))
            b_bar = (d * expm1_over_x_np(diag))[:, None] * ssm.B
    else:
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = a * d
        aug[:n, n:] = ssm.B * d
        phi = matrix_exponential(aug)
        a_bar = phi[:n, :n]
        b_bar = phi[:n, n:]
    if not (np.isfinite(a_bar).all() and np.isfinite(b_bar).all()):
        raise OverflowError("matrix exponential overflowed; reduce delta")
    return DiscreteSsm(A_bar=a_bar, B_bar=b_bar, C=ssm.C)


def recurrent_scan(ssm: DiscreteSsm, inputs: np.ndarray) -> np.ndarray:
    """y_k = C h_k with h_k = A_bar h_{k-1} + B_bar x_k, h_{-1} = 0."""
    x = np.asarray(inputs, dtype=float).ravel()
    h = np.zeros(ssm.A_bar.shape[0])
    out = np.empty_like(x)
    for k, xk in enumerate(x):
        h = ssm.A_bar @ h + ssm.B_bar[:, 0] * xk
        out[k] = ssm.C[0] @ h
    return out


def conv_kernel(ssm: DiscreteSsm, length: int) -> np.ndarray:
    """Impulse-response kernel (C B_bar, C A_bar B_bar, ..., C A_bar^(L-1) B_bar)."""
    if length < 1:
        raise SsmError("length must be >= 1")
    v = ssm.B_bar[:, 0].copy()
    kernel = np.empty(length)
    for k in range(length):
        kernel[k] = ssm.C[0] @ v
        v = ssm.A_bar @ v
    return kernel


def apply_kernel(kernel: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Causal convolution of the input with the SSM kernel."""
    x = np.asarray(inputs, dtype=float).ravel()
    return np.convolve(x, kernel)[: x.size]


# ---------------------------------------------------------------------------
# Linear recurrence scans (numpy level)
# ---------------------------------------------------------------------------

def _sequential_scan_np(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    b = np.moveaxis(b, axis, 0)
    out = np.empty_like(b)
    h = np.zeros_like(b[0])
    for k in range(b.shape[0]):
        h = a[k] * h + b[k]
        out[k] = h
    return np.moveaxis(out, 0, axis)


def _blelloch_scan_np(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    """Inclusive affine scan via an up/down sweep, padded to a power of two.

    The operator identity is (1, 0); order of composition is preserved, so the
    sweep is valid for this non-commutative monoid.  The reduction tree is a
    fixed function of the length, making results run-to-run deterministic.
    """
    a0 = np.moveaxis(a, axis, 0)
    b0 = np.moveaxis(b, axis, 0)
    length = a0.shape[0]
    n = 1 << (length - 1).bit_length()
    pad = [(0, n - length)] + [(0, 0)] * (a0.ndim - 1)
    acc_a = np.pad(a0, pad, constant_values=1.0)
    acc_b = np.pad(b0, pad, constant_values=0.0)

    # Up-sweep: each parent absorbs (left o right) of its children, in order.
    d = 1
    while d < n:
        ls = slice(d - 1, n - d, 2 * d)
        rs = slice(2 * d - 1, n, 2 * d)
        acc_b[rs] += acc_a[rs] * acc_b[ls]
        acc_a[rs] *= acc_a[ls]
        d *= 2

    # Down-sweep turns subtree products into exclusive prefixes.
    acc_a[n - 1] = 1.0
    acc_b[n - 1] = 0.0
    d = n // 2
    while d >= 1:
        ls = slice(d - 1, n - d, 2 * d)
        rs = slice(2 * d - 1, n, 2 * d)
        ta = acc_a[ls].copy()
        tb = acc_b[ls].copy()
        acc_a[ls] = acc_a[rs]
        acc_b[ls] = acc_b[rs]
        acc_b[rs] *= ta
        acc_b[rs] += tb
        acc_a[rs] *= ta
        d //= 2

    # Inclusive prefix applied to h_{-1} = 0 leaves only the offset part.
    h = a0 * acc_b[:length] + b0
    return np.moveaxis(h, 0, axis)


def _scan_np(a: np.ndarray, b: np.ndarray, axis: int, mode: str) -> np.ndarray:
    if mode == "sequential" or (mode == "parallel" and a.shape[axis] < PARALLEL_THRESHOLD):
        return _sequential_scan_np(a, b, axis)
    if mode == "parallel":
        return _blelloch_scan_np(a, b, axis)
    raise SsmError(f"unknown scan mode {mode!r}")


def _shift_along(arr: np.ndarray, axis: int, fill: float) -> np.ndarray:
    """Shift one step toward larger indices along axis, filling the front."""
    moved = np.moveaxis(arr, axis, 0)
    out = np.empty_like(moved)
    out[0] = fill
    out[1:] = moved[:-1]
    return np.moveaxis(out, 0, axis)


def linear_recurrence(a: Tensor, b: Tensor, axis: int = -3, mode: str = "parallel") -> Tensor:
    """Differentiable h_k = a_k h_{k-1} + b_k along the given axis.

    The adjoint g_k = dh_k + a_{k+1} g_{k+1} is itself an affine recurrence in
    reverse time and reuses the same scan mode, so parallel-mode gradients are
    computed with parallel sweeps.
    """
    h_data = _scan_np(a.data, b.data, axis, mode)

    def bw(g):
        rev = [slice(None)] * g.ndim
        rev[axis] = slice(None, None, -1)
        rev = tuple(rev)
        a_rev = a.data[rev]
        # Coefficient sequence for the reversed recurrence: a_{k+1} ahead of g_k.
        a_adj = _shift_along(a_rev, axis, fill=1.0)
        g_adj = _scan_np(a_adj, g[rev], axis, mode)[rev]
        h_prev = _shift_along(h_data, axis, fill=0.0)
        a.accumulate_grad(g_adj * h_prev)
        b.accumulate_grad(g_adj)
    return _make(h_data, (a, b), bw)


# ---------------------------------------------------------------------------
# Selective (input-dependent) scan
# ---------------------------------------------------------------------------

@dataclass
class SelectiveParams:
    """Per-step discretization inputs: delta [.., L, D], B and C [.., L, N],
    shared diagonal transition A [D, N]."""

    delta: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        if self.A.ndim != 2:
            raise SsmError("A must be [channels x state]")
        if self.delta.shape[-1] != self.A.shape[0]:
            raise SsmError("delta channel count must match A")
        if self.B.shape[-1] != self.A.shape[1] or self.C.shape[-1] != self.A.shape[1]:
            raise SsmError("B/C state size must match A")
        if self.B.shape[:-1] != self.delta.shape[:-1] or self.C.shape[:-1] != self.delta.shape[:-1]:
            raise SsmError("delta, B, C must share leading/sequence dims")
        if not (self.delta > 0).all():
            raise SsmError("delta must be positive")


def _phi_from_exp(z: np.ndarray, ez: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-4
    zsafe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z * (0.5 + z / 6.0), (ez - 1.0) / zsafe)


def _phi_deriv_from_phi(z: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """d/dz of (exp(z)-1)/z, via the identity phi' = phi + (1 - phi)/z."""
    small = np.abs(z) < 1e-6
    zsafe = np.where(small, 1.0, z)
    return np.where(small, 0.5 + z / 3.0, phi + (1.0 - phi) / zsafe)


def _adjoint_scan(a: np.ndarray, dh: np.ndarray, axis: int, mode: str) -> np.ndarray:
    """Solve g_k = dh_k + a_{k+1} g_{k+1}: the same scan run in reverse time."""
    rev = [slice(None)] * dh.ndim
    rev[axis] = slice(None, None, -1)
    rev = tuple(rev)
    a_adj = _shift_along(a[rev], axis, fill=1.0)
    return _scan_np(a_adj, dh[rev], axis, mode)[rev]


def selective_scan_t(delta: Tensor, a_diag: Tensor, b_in: Tensor, c_out: Tensor,
                     x: Tensor, mode: str = "parallel") -> Tensor:
    """Tensor-level selective scan: ZOH per step, recurrence, output projection.

    Shapes: delta/x [.., L, D], a_diag [D, N], b_in/c_out [.., L, N];
    returns [.., L, D].  Fused into one tape node: the backward pass reuses
    exp(z) and runs the adjoint recurrence with the same scan mode.
    """
    dd, aa = delta.data, a_diag.data
    bb, cc, xx = b_in.data, c_out.data, x.data
    z = dd[..., None] * aa                       # [.., L, D, N]
    ez = np.exp(z)
    phi = _phi_from_exp(z, ez)
    dbx = dd * xx                                # [.., L, D]
    bx = phi * (dbx[..., None] * bb[..., None, :])
    h = _scan_np(ez, bx, axis=-3, mode=mode)
    y = np.einsum("...ldn,...ln->...ld", h, cc)

    def bw(gy):
        dh = gy[..., None] * cc[..., None, :]
        g = _adjoint_scan(ez, dh, axis=-3, mode=mode)
        d_ez = g * _shift_along(h, -3, fill=0.0)
        tmp = g * phi
        d_dbx = np.einsum("...ldn,...ln->...ld", tmp, bb)
        b_in.accumulate_grad(np.einsum("...ldn,...ld->...ln", tmp, dbx))
        d_phi = g * (dbx[..., None] * bb[..., None, :])
        d_z = d_ez * ez + d_phi * _phi_deriv_from_phi(z, phi)
        delta.accumulate_grad(np.einsum("...ldn,dn->...ld", d_z, aa) + d_dbx * xx)
        nd, nn = aa.shape
        a_diag.accumulate_grad(np.einsum("kdn,kd->dn", d_z.reshape(-1, nd, nn),
                                         np.ascontiguousarray(dd).reshape(-1, nd)))
        x.accumulate_grad(d_dbx * dd)
        c_out.accumulate_grad(np.einsum("...ldn,...ld->...ln", h, gy))
    return _make(y, (delta, a_diag, b_in, c_out, x), bw)


def selective_scan_sequential(params: SelectiveParams, inputs: np.ndarray) -> np.ndarray:
    return _selective_scan_np(params, inputs, mode="sequential")


def selective_scan_parallel(params: SelectiveParams, inputs: np.ndarray) -> np.ndarray:
    return _selective_scan_np(params, inputs, mode="parallel")


def _selective_scan_np(params: SelectiveParams, inputs: np.ndarray, mode: str) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.shape != params.delta.shape:
        raise SsmError("input shape must match delta")
    out = selective_scan_t(Tensor(params.delta), Tensor(params.A), Tensor(params.B),
                           Tensor(params.C), Tensor(x), mode=mode)
    return out.data
