"""CSI amplitude preprocessing: Butterworth low-pass denoising, segmentation, normalization.

The filter is designed from the analog Butterworth prototype (poles on the
unit circle of the s-plane) via the bilinear transform with frequency
prewarping, realized as cascaded second-order sections, and applied
forward-backward for zero phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import CsiFrame


class FilterDesignError(ValueError):
    """Cutoff or order outside the designable range."""


class SeriesLengthError(ValueError):
    """Input series too short for edge-safe zero-phase filtering."""


@dataclass
class FilterSpec:
    order: int = 4
    cutoff_hz: float = 10.0
    sample_rate_hz: float = 50.0

    def __post_init__(self):
        if self.order < 1:
            raise FilterDesignError("order must be >= 1")
        if not (0.0 < self.cutoff_hz < self.sample_rate_hz / 2.0):
            raise FilterDesignError("cutoff must lie strictly below Nyquist")


def design_butterworth(spec: FilterSpec) -> np.ndarray:
    """Low-pass second-order sections [n_sections x 6] with exact unit DC gain.

    Analog poles exp(j*pi*(2k+n-1)/(2n)) are scaled by the prewarped cutoff
    2*fs*tan(pi*fc/fs) and mapped with s = 2*fs*(z-1)/(z+1); every analog pole
    contributes a digital zero at z = -1.
    """
    n = spec.order
    fs = spec.sample_rate_hz
    warped = 2.0 * fs * math.tan(math.pi * spec.cutoff_hz / fs)

    poles = [
        warped * np.exp(1j * math.pi * (2.0 * k + n - 1.0) / (2.0 * n))
        for k in range(1, n + 1)
    ]
    # Bilinear map of each pole; pair conjugates into biquads.
    zp = [(2.0 * fs + p) / (2.0 * fs - p) for p in poles]
    conj_pairs = [p for p in zp if p.imag > 1e-12]
    real_poles = [p.real for p in zp if abs(p.imag) <= 1e-12]

    sections = []
    for p in conj_pairs:
        a1 = -2.0 * p.real
        a2 = abs(p) ** 2
        den_at_dc = 1.0 + a1 + a2
        b = den_at_dc / 4.0
        sections.append([b, 2.0 * b, b, 1.0, a1, a2])
    # An odd order leaves one real pole; realize it as a first-order section.
    for p in real_poles:
        a1 = -p
        den_at_dc = 1.0 + a1
        b = den_at_dc / 2.0
        sections.append([b, b, 0.0, 1.0, a1, 0.0])
    sos = np.array(sections, dtype=float)
    if not np.isfinite(sos).all():
        raise FilterDesignError("filter design produced non-finite coefficients")
    return sos


def sos_frequency_response(sos: np.ndarray, freqs_hz, sample_rate_hz: float) -> np.ndarray:
    """Complex cascade response at the given frequencies."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate_hz
    z1 = np.exp(-1j * w)
    z2 = z1 * z1
    h = np.ones_like(z1, dtype=complex)
    for b0, b1, b2, _, a1, a2 in sos:
        h *= (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
    return h


def butterworth_prototype_magnitude(freqs_hz, spec: FilterSpec) -> np.ndarray:
    """Analytic magnitude the digital design should match after prewarping.

    The bilinear transform maps digital frequency f to the analog prototype at
    the warped ratio tan(pi f / fs) / tan(pi fc / fs), where the magnitude is
    1 / sqrt(1 + r^(2n)).
    """
    f = np.asarray(freqs_hz, dtype=float)
    r = np.tan(np.pi * f / spec.sample_rate_hz) / math.tan(
        math.pi * spec.cutoff_hz / spec.sample_rate_hz)
    return 1.0 / np.sqrt(1.0 + r ** (2 * spec.order))


def _sos_steady_state(section: np.ndarray) -> np.ndarray:
    """Direct-form-II-transposed state that makes a unit-step input transient-free."""
    b0, b1, b2, _, a1, a2 = section
    m = np.array([[1.0 + a1, -1.0], [a2, 1.0]])
    rhs = np.array([b1 - a1 * b0, b2 - a2 * b0])
    return np.linalg.solve(m, rhs)


def _sosfilt(sos: np.ndarray, x: np.ndarray, zi_scale: np.ndarray) -> np.ndarray:
    """Causal cascade filtering along the last axis, states seeded per section.

    zi_scale broadcasts over the leading axes; it is normally the first sample
    of x so that constant inputs pass through without transients.
    """
    y = np.array(x, dtype=float)
    scale = np.asarray(zi_scale, dtype=float)
    for section in sos:
        b0, b1, b2, _, a1, a2 = section
        zss = _sos_steady_state(section)
        z1 = zss[0] * scale
        z2 = zss[1] * scale
        out = np.empty_like(y)
        for i in range(y.shape[-1]):
            xi = y[..., i]
            yi = b0 * xi + z1
            z1 = b1 * xi + z2 - a1 * yi
            z2 = b2 * xi - a2 * yi
            out[..., i] = yi
        dc = (b0 + b1 + b2) / (1.0 + a1 + a2)
        scale = scale * dc
        y = out
    return y


def lowpass_filter(series: np.ndarray, spec: FilterSpec,
                   sos: Optional[np.ndarray] = None) -> np.ndarray:
    """Zero-phase (forward-backward) low-pass along the last axis.

    Edges are extended by odd reflection before filtering so transients decay
    inside the padding; output length equals input length.
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[-1]
    if n < 3 * spec.order:
        raise SeriesLengthError(f"series length {n} < 3 x order {spec.order}")
    if sos is None:
        sos = design_butterworth(spec)
    padlen = min(3 * (2 * len(sos) + 1), n - 1)

    left = 2.0 * x[..., :1] - x[..., padlen:0:-1]
    right = 2.0 * x[..., -1:] - x[..., -2:-padlen - 2:-1]
    ext = np.concatenate([left, x, right], axis=-1)

    fwd = _sosfilt(sos, ext, ext[..., 0])
    bwd = _sosfilt(sos, fwd[..., ::-1], fwd[..., -1])
    out = bwd[..., ::-1]
    return out[..., padlen:padlen + n]


def amplitude(frame: CsiFrame) -> np.ndarray:
    """Element-wise modulus of the frame, shape preserved."""
    return np.abs(frame.data)


class SegmentationError(ValueError):
    """Window/stride combination yields no segments."""


@dataclass
class FeatureTensor:
    """Windowed real features [segments x time_steps x channels] with labels."""

    data: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.data.ndim != 3:
            raise ValueError("feature tensor must be [segments x time x channels]")
        if self.labels.shape[0] != self.data.shape[0]:
            raise ValueError("one label per segment required")
        if not np.isfinite(self.data).all():
            raise ValueError("feature tensor must be finite")

    @property
    def time_steps(self) -> int:
        return self.data.shape[1]


def segment(series: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Sliding windows along axis 0: floor((len - window)/stride) + 1 segments."""
    x = np.asarray(series)
    if stride < 1:
        raise SegmentationError("stride must be >= 1")
    if window < 1 or window > x.shape[0]:
        raise SegmentationError(
            f"window {window} exceeds stream length {x.shape[0]}")
    count = (x.shape[0] - window) // stride + 1
    return np.stack([x[i * stride:i * stride + window] for i in range(count)])


def segment_stream(stream: np.ndarray, label, window: int, stride: int) -> FeatureTensor:
    """Window one labeled recording [length x channels]; segments inherit the label."""
    segs = segment(stream, window, stride)
    return FeatureTensor(data=segs, labels=np.full(segs.shape[0], label))


def segment_count(length: int, window: int, stride: int) -> int:
    if window > length:
        raise SegmentationError("window exceeds stream length")
    return (length - window) // stride + 1


@dataclass
class NormStats:
    """Fitted normalization parameters, persistable for reuse at evaluation."""

    mode: str
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    vmin: Optional[float] = None
    vmax: Optional[float] = None
    flagged_channels: list[int] = field(default_factory=list)

    def apply(self, tensor: np.ndarray) -> np.ndarray:
        x = np.asarray(tensor, dtype=float)
        if self.mode == "zscore":
            std = np.where(self.std == 0.0, 1.0, self.std)
            return (x - self.mean) / std
        if self.mode == "minmax":
            if self.vmax == self.vmin:
                return x.copy()
            return (x - self.vmin) / (self.vmax - self.vmin)
        raise ValueError(f"unknown normalization mode {self.mode!r}")

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "flagged_channels": self.flagged_channels}
        if self.mean is not None:
            out["mean"] = self.mean.tolist()
            out["std"] = self.std.tolist()
        if self.vmin is not None:
            out["vmin"] = self.vmin
            out["vmax"] = self.vmax
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            mode=d["mode"],
            mean=np.asarray(d["mean"], dtype=float) if "mean" in d else None,
            std=np.asarray(d["std"], dtype=float) if "std" in d else None,
            vmin=d.get("vmin"),
            vmax=d.get("vmax"),
            flagged_channels=list(d.get("flagged_channels", [])),
        )


def fit_normalization(tensor: np.ndarray, mode: str = "zscore",
                      fit_indices: Optional[np.ndarray] = None) -> NormStats:
    """Fit per-channel z-score (last axis) or global min-max statistics.

    fit_indices restricts the fit to a subset along axis 0 (the training
    split); zero-variance channels are flagged and left unscaled.
    """
    x = np.asarray(tensor, dtype=float)
    fit = x if fit_indices is None else x[np.asarray(fit_indices)]
    if mode == "zscore":
        axes = tuple(range(fit.ndim - 1))
        mean = fit.mean(axis=axes)
        std = fit.std(axis=axes)
        # A channel is constant when its spread is at rounding level.
        degenerate = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        flagged = [int(i) for i in np.nonzero(degenerate)[0]]
        mean = np.where(degenerate, 0.0, mean)
        std = np.where(degenerate, 0.0, std)
        return NormStats(mode="zscore", mean=mean, std=std, flagged_channels=flagged)
    if mode == "minmax":
        vmin = float(fit.min())
        vmax = float(fit.max())
        flagged = [] if vmax > vmin else [-1]
        return NormStats(mode="minmax", vmin=vmin, vmax=vmax, flagged_channels=flagged)
    raise ValueError(f"unknown normalization mode {mode!r}")


def normalize(tensor: np.ndarray, mode: str = "zscore",
              fit_indices: Optional[np.ndarray] = None) -> tuple[np.ndarray, NormStats]:
    stats = fit_normalization(tensor, mode=mode, fit_indices=fit_indices)
    return stats.apply(tensor), stats
