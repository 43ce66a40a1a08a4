"""Dual-stream selective state-space classifier for CSI amplitude sequences.

Two parallel encoders process the same [batch, length, channels] input through
different embeddings (a plain linear map versus a nonlinear map with position
information); their pooled outputs are combined by learned softmax weights and
classified by a small MLP head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, add, concatenate, dropout, mul, silu, softmax,
                       swapaxes)
from .nn import (DepthwiseConv1d, LayerNorm, Linear, Module, SelectiveSsmLayer,
                 avg_pool_over_sequence, mlp_head)

VARIANTS = ("full", "concat-fusion", "freq-only", "time-only")


class ModelConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    input_len: int = 150
    input_channels: int = 64
    model_dim: int = 32
    state_dim: int = 8
    num_blocks: int = 2
    conv_kernel_width: int = 4
    num_classes: int = 6
    dropout: float = 0.0
    positional: str = "learned"          # or "sinusoidal"
    freq_stream_axis: str = "time"       # or "channel" (non-default reading)
    scan_mode: str = "parallel"
    variant: str = "full"

    def __post_init__(self):
        for name in ("input_len", "input_channels", "model_dim", "state_dim",
                     "num_blocks", "conv_kernel_width", "num_classes"):
            if getattr(self, name) < 1:
                raise ModelConfigError(f"{name} must be positive")
        if self.num_classes < 2:
            raise ModelConfigError("num_classes must be >= 2")
        if not (0.0 <= self.dropout < 1.0):
            raise ModelConfigError("dropout must be in [0, 1)")
        if self.positional not in ("learned", "sinusoidal"):
            raise ModelConfigError(f"unknown positional mode {self.positional!r}")
        if self.freq_stream_axis not in ("time", "channel"):
            raise ModelConfigError(f"unknown freq_stream_axis {self.freq_stream_axis!r}")
        if self.variant not in VARIANTS:
            raise ModelConfigError(f"unknown variant {self.variant!r}; options: {VARIANTS}")


def _sinusoidal_table(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table


class EncoderBlock(Module):
    """Pre-norm gated block: conv -> SiLU -> selective SSM on one branch,
    SiLU gate on the other, output projection, zero-initialized residual scale."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        d = cfg.model_dim
        self.norm = LayerNorm(d, name=f"{name}.norm")
        self.in_proj = Linear(d, 2 * d, rng, name=f"{name}.in_proj")
        self.conv = DepthwiseConv1d(d, cfg.conv_kernel_width, rng, name=f"{name}.conv")
        self.ssm = SelectiveSsmLayer(d, cfg.state_dim, rng, mode=cfg.scan_mode,
                                     name=f"{name}.ssm")
        self.out_proj = Linear(d, d, rng, name=f"{name}.out_proj")
        self.alpha = Tensor(np.zeros(()), requires_grad=True, name=f"{name}.alpha")
        self.d = d

    def __call__(self, r: Tensor) -> Tensor:
        z = self.in_proj(self.norm(r))
        u1 = z[..., : self.d]
        u2 = z[..., self.d:]
        h1 = self.ssm(silu(self.conv(u1)))
        h2 = silu(u2)
        f = self.out_proj(mul(h1, h2))
        return add(mul(f, self.alpha), r)


class StreamEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str):
        self.blocks = [EncoderBlock(cfg, rng, name=f"{name}.block{i}")
                       for i in range(cfg.num_blocks)]

    def block_states(self, e: Tensor) -> list[Tensor]:
        """All residual-stream states R_0..R_N (R_0 is the embedding itself)."""
        states = [e]
        for block in self.blocks:
            states.append(block(states[-1]))
        return states

    def __call__(self, e: Tensor) -> Tensor:
        return avg_pool_over_sequence(self.block_states(e)[-1])


class DualStreamClassifier(Module):
    """Frequency and temporal streams with weighted fusion and an MLP head.

    Ablation variants: "concat-fusion" skips the learned weighting,
    "freq-only"/"time-only" drop one stream and feed the head directly.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
        d = cfg.model_dim
        self.cfg = cfg

        self.uses_freq = cfg.variant in ("full", "concat-fusion", "freq-only")
        self.uses_time = cfg.variant in ("full", "concat-fusion", "time-only")

        if self.uses_freq:
            freq_in = cfg.input_channels if cfg.freq_stream_axis == "time" else cfg.input_len
            self.embed_freq = Linear(freq_in, d, rng, bias=False, name="embed_freq")
            self.enc_freq = StreamEncoder(cfg, rng, name="freq")
        if self.uses_time:
            self.embed_time = Linear(cfg.input_channels, d, rng, bias=True, name="embed_time")
            if cfg.positional == "learned":
                self.pos_table = Tensor(np.zeros((cfg.input_len, d)),
                                        requires_grad=True, name="pos_table")
            else:
                self.pos_table = Tensor(_sinusoidal_table(cfg.input_len, d))
            self.enc_time = StreamEncoder(cfg, rng, name="time")

        if cfg.variant == "full":
            self.fuse_norm = LayerNorm(2 * d, name="fuse_norm")
            self.fuse_proj = Linear(2 * d, 2, rng, name="fuse_proj")
        head_in = 2 * d if cfg.variant in ("full", "concat-fusion") else d
        self.head_hidden = Linear(head_in, d, rng, name="head_hidden")
        self.head_out = Linear(d, cfg.num_classes, rng, name="head_out")

    # -- pieces exposed for direct testing ----------------------------------
    def embed(self, x: Tensor) -> tuple[Tensor, Tensor]:
        e_f = self.embed_freq(x) if self.cfg.freq_stream_axis == "time" else \
            self.embed_freq(swapaxes(x, -1, -2))
        e_t = add(silu(self.embed_time(x)), self.pos_table)
        return e_f, e_t

    def fuse(self, p_f: Tensor, p_t: Tensor) -> tuple[Tensor, Tensor]:
        h = self.fuse_norm(concatenate([p_f, p_t], axis=-1))
        weights = softmax(self.fuse_proj(h), axis=-1)
        w_f = weights[..., 0:1]
        w_t = weights[..., 1:2]
        fused = concatenate([mul(w_f, p_f), mul(w_t, p_t)], axis=-1)
        return fused, weights

    def classify(self, y: Tensor) -> Tensor:
        return mlp_head(y, self.head_hidden, self.head_out)

    def __call__(self, x: Tensor, train_rng: np.random.Generator | None = None) -> Tensor:
        cfg = self.cfg
        p_f = p_t = None
        if self.uses_freq:
            if cfg.freq_stream_axis == "time":
                e_f = self.embed_freq(x)
            else:
                e_f = self.embed_freq(swapaxes(x, -1, -2))
            p_f = self.enc_freq(e_f)
        if self.uses_time:
            e_t = add(silu(self.embed_time(x)), self.pos_table)
            p_t = self.enc_time(e_t)

        if cfg.variant == "full":
            y, _ = self.fuse(p_f, p_t)
        elif cfg.variant == "concat-fusion":
            y = concatenate([p_f, p_t], axis=-1)
        elif cfg.variant == "freq-only":
            y = p_f
        else:
            y = p_t
        if train_rng is not None and cfg.dropout > 0.0:
            y = dropout(y, cfg.dropout, train_rng)
        return self.classify(y)


def build_model(cfg: ModelConfig, seed: int = 0) -> DualStreamClassifier:
    return DualStreamClassifier(cfg, seed=seed)


def ablation_variant(cfg: ModelConfig, variant: str, seed: int = 0) -> DualStreamClassifier:
    if variant not in VARIANTS:
        raise ModelConfigError(f"unknown variant {variant!r}; options: {VARIANTS}")
    sub = ModelConfig(**{**cfg.__dict__, "variant": variant})
    return DualStreamClassifier(sub, seed=seed)


def count_params(model: Module) -> int:
    return int(sum(p.data.size for p in model.parameters()))


def count_macs(cfg: ModelConfig) -> int:
    """Analytic multiply-accumulate count for one sample.

    Linear layers count in*out per token, the depthwise convolution
    len*channels*kernel, and each selective scan len*state*channels; gating
    and normalization products are not counted.
    """
    L, M, D, N = cfg.input_len, cfg.input_channels, cfg.model_dim, cfg.state_dim
    freq_tokens = L if cfg.freq_stream_axis == "time" else M

    def block_macs(tokens: int) -> int:
        per_token = D * 2 * D + D * D + D * N + D * N + D * D
        conv = tokens * D * cfg.conv_kernel_width
        scan = tokens * N * D
        return tokens * per_token + conv + scan

    total = 0
    if cfg.variant in ("full", "concat-fusion", "freq-only"):
        embed_in = M if cfg.freq_stream_axis == "time" else L
        total += freq_tokens * embed_in * D + cfg.num_blocks * block_macs(freq_tokens)
    if cfg.variant in ("full", "concat-fusion", "time-only"):
        total += L * M * D + cfg.num_blocks * block_macs(L)
    if cfg.variant == "full":
        total += 2 * D * 2
    head_in = 2 * D if cfg.variant in ("full", "concat-fusion") else D
    total += head_in * D + D * cfg.num_classes
    return int(total)
