"""Parameterized layers on top of the autodiff engine."""
from __future__ import annotations

import math

import numpy as np

from .autodiff import (Tensor, add, concatenate, layer_norm, matmul, mul,
                       pad_axis, silu, softplus, texp, tmean)
from .ssm import selective_scan_t

DELTA_FLOOR = 1e-4


class Module:
    """Lightweight parameter container; attribute order fixes parameter order."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                out.append((key, val))
            elif isinstance(val, Module):
                out.extend((f"{key}.{n}", p) for n, p in val.named_parameters())
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend((f"{key}.{i}.{n}", p) for n, p in item.named_parameters())
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def named_parameters_data(self) -> list[tuple[str, np.ndarray]]:
        return [(n, p.data) for n, p in self.named_parameters()]

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch; missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()


def _param(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, name: str = "linear"):
        k = 1.0 / math.sqrt(in_dim)
        self.weight = _param(rng.uniform(-k, k, size=(in_dim, out_dim)), f"{name}.weight")
        self.bias = _param(np.zeros(out_dim), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = add(out, self.bias)
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, name: str = "ln"):
        self.gain = _param(np.ones(dim), f"{name}.gain")
        self.bias = _param(np.zeros(dim), f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class DepthwiseConv1d(Module):
    """Causal per-channel convolution over [batch, length, channels]."""

    def __init__(self, channels: int, width: int, rng: np.random.Generator,
                 bias: bool = True, name: str = "conv"):
        if width < 1:
            raise ValueError("kernel width must be >= 1")
        k = 1.0 / math.sqrt(width)
        self.kernel = _param(rng.uniform(-k, k, size=(width, channels)), f"{name}.kernel")
        self.bias = _param(np.zeros(channels), f"{name}.bias") if bias else None
        self.width = width

    def __call__(self, x: Tensor) -> Tensor:
        L = x.shape[-2]
        padded = pad_axis(x, axis=-2, before=self.width - 1, after=0)
        out = None
        for k in range(self.width):
            tap = mul(padded[..., k:k + L, :], self.kernel[k])
            out = tap if out is None else add(out, tap)
        if self.bias is not None:
            out = add(out, self.bias)
        return out


class SelectiveSsmLayer(Module):
    """Input-dependent state-space layer over [batch, length, channels].

    Step sizes go through softplus plus a small floor to stay positive; the
    diagonal transition is parameterized as -exp(a_log) so it stays negative
    (stable) during training, initialized to -(1..N) per channel.
    """

    def __init__(self, d_model: int, state_dim: int, rng: np.random.Generator,
                 mode: str = "parallel", name: str = "ssm"):
        self.w_delta = Linear(d_model, d_model, rng, bias=True, name=f"{name}.delta")
        # Bias chosen so initial step sizes land log-uniformly in [1e-3, 1e-1].
        dt = np.exp(rng.uniform(math.log(1e-3), math.log(1e-1), size=d_model))
        self.w_delta.bias.data = np.log(np.expm1(dt))
        self.w_b = Linear(d_model, state_dim, rng, bias=False, name=f"{name}.b")
        self.w_c = Linear(d_model, state_dim, rng, bias=False, name=f"{name}.c")
        self.a_log = _param(np.tile(np.log(np.arange(1, state_dim + 1, dtype=float)),
                                    (d_model, 1)), f"{name}.a_log")
        self.mode = mode

    def __call__(self, u: Tensor) -> Tensor:
        delta = add(softplus(self.w_delta(u)), Tensor(DELTA_FLOOR))
        a_diag = mul(texp(self.a_log), Tensor(-1.0))
        b_in = self.w_b(u)
        c_out = self.w_c(u)
        return selective_scan_t(delta, a_diag, b_in, c_out, u, mode=self.mode)


def avg_pool_over_sequence(x: Tensor) -> Tensor:
    """Mean over the sequence axis of [batch, length, channels]."""
    return tmean(x, axis=-2)


def concat_features(parts: list[Tensor]) -> Tensor:
    return concatenate(parts, axis=-1)


def mlp_head(x: Tensor, hidden: Linear, out: Linear) -> Tensor:
    return out(silu(hidden(x)))
