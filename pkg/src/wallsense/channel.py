"""Through-wall multipath CSI synthesis and link-budget arithmetic.

The channel is a sum of static and dynamic propagation paths, each attenuated
and phase-shifted by a lossy wall, optionally re-weighted per path by a
transmissive surface.  All synthesis is deterministic given (scene, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .ris import CascadeChannel, PhaseMatrix

SPEED_OF_LIGHT = 299792458.0

ACTIVITY_CLASSES = (
    "kicking",
    "picking up",
    "sitting down",
    "standing",
    "standing up",
    "walking",
)


class ChannelError(ValueError):
    """Invalid channel-model input."""


class EmptySceneError(ChannelError):
    """Scene has no propagation paths."""


class InvalidMaterialError(ChannelError):
    """Wall material parameters produce a non-finite attenuation."""


# ---------------------------------------------------------------------------
# Wall material and link budget
# ---------------------------------------------------------------------------

@dataclass
class WallModel:
    """Lossy dielectric wall: real relative permittivity, conductivity, thickness."""

    rel_permittivity_real: float
    conductivity: float
    thickness: float

    def __post_init__(self):
        if not np.isfinite([self.rel_permittivity_real, self.conductivity, self.thickness]).all():
            raise InvalidMaterialError("wall parameters must be finite")
        if self.rel_permittivity_real < 1.0:
            raise ChannelError("rel_permittivity_real must be >= 1")
        if self.conductivity < 0.0:
            raise ChannelError("conductivity must be >= 0")
        if self.thickness <= 0.0:
            raise ChannelError("thickness must be > 0")


@dataclass
class LinkBudget:
    """Additive dB accounting from transmit power to receive power."""

    tx_power: float            # dBm
    tx_gain: float             # dBi
    rx_gain: float             # dBi
    amp_gain: float            # dB
    carrier_freq: float        # Hz
    distance: float            # m
    cable_length: float = 0.0  # m
    cable_loss_rate: float = 0.0   # dB/m
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0   # m
    obstruction_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.carrier_freq <= 0.0:
            raise ChannelError("carrier_freq must be > 0")
        if self.distance <= 0.0:
            raise ChannelError("distance must be > 0")
        if self.reference_distance <= 0.0:
            raise ChannelError("reference_distance must be > 0")
        if self.cable_loss_rate < 0.0:
            raise ChannelError("cable_loss_rate must be >= 0")


def wall_attenuation_rate(wall: WallModel) -> float:
    """Through-material attenuation in dB/m: 1636 * sigma / sqrt(eps_r')."""
    rate = 1636.0 * wall.conductivity / math.sqrt(wall.rel_permittivity_real)
    if not math.isfinite(rate):
        raise InvalidMaterialError("attenuation rate is not finite")
    return rate


def free_space_term(carrier_freq: float, distance: float) -> float:
    """The 20*log10(lambda / (4 pi d)) free-space term in dB."""
    if carrier_freq <= 0.0 or distance <= 0.0:
        raise ChannelError("carrier_freq and distance must be > 0")
    lam = SPEED_OF_LIGHT / carrier_freq
    return 20.0 * math.log10(lam / (4.0 * math.pi * distance))


def log_distance_path_loss(budget: LinkBudget, pl_at_ref: float) -> float:
    """Distance-dependent path loss: PL(d0) + 10 n log10(d/d0)."""
    if budget.distance < budget.reference_distance:
        raise ChannelError("distance must be >= reference_distance")
    ratio = budget.distance / budget.reference_distance
    return pl_at_ref + 10.0 * budget.path_loss_exponent * math.log10(ratio)


def received_power(budget: LinkBudget) -> float:
    """Receive power in dBm: gains plus free-space term minus cable and obstructions."""
    return (
        budget.tx_power
        + budget.tx_gain
        + budget.rx_gain
        + budget.amp_gain
        + free_space_term(budget.carrier_freq, budget.distance)
        - budget.cable_length * budget.cable_loss_rate
        - sum(budget.obstruction_losses)
    )


@dataclass
class WallChannelEffect:
    """Wall as a per-path channel factor: amplitude scale, phase shift, extra delay."""

    amplitude_factor: float
    phase_shift: float = 0.0
    extra_delay: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.amplitude_factor <= 1.0):
            raise ChannelError("amplitude_factor must be in (0, 1]")
        if self.extra_delay < 0.0:
            raise ChannelError("extra_delay must be >= 0")

    @classmethod
    def none(cls) -> "WallChannelEffect":
        return cls(amplitude_factor=1.0, phase_shift=0.0, extra_delay=0.0)


def wall_channel_effect(wall: WallModel, carrier_freq: float) -> WallChannelEffect:
    """Derive the channel-level wall factor from the material model.

    Amplitude converts the dB/m rate times thickness to a linear field factor;
    the extra delay comes from the sqrt(eps_r') propagation slowing, and the
    phase shift is that delay evaluated at the carrier, wrapped to (-pi, pi].
    """
    loss_db = wall_attenuation_rate(wall) * wall.thickness
    amplitude = 10.0 ** (-loss_db / 20.0)
    extra_delay = wall.thickness * (math.sqrt(wall.rel_permittivity_real) - 1.0) / SPEED_OF_LIGHT
    phase = -2.0 * math.pi * carrier_freq * extra_delay
    phase = math.remainder(phase, 2.0 * math.pi)
    return WallChannelEffect(amplitude_factor=amplitude, phase_shift=phase, extra_delay=extra_delay)


# ---------------------------------------------------------------------------
# Paths and scenes
# ---------------------------------------------------------------------------

TimeFn = Callable[[np.ndarray], np.ndarray]


def _as_time_fn(value) -> TimeFn:
    if callable(value):
        return value
    const = float(value)
    return lambda t: np.full_like(np.asarray(t, dtype=float), const)


@dataclass
class PathComponent:
    """One propagation path: static (constant delay) or dynamic (delay trajectory).

    attenuation may be a scalar or a callable (freq_col, time_row) -> complex;
    delay is a scalar (static) or callable time -> seconds (dynamic).  The
    surface factors default to the identity (gain 1, phase 0, delay 0).
    """

    kind: str
    attenuation: object = 1.0
    base_phase: float = 0.0
    delay: object = 0.0
    ris_gain: object = 1.0
    ris_phase: object = 0.0
    ris_delay: object = 0.0
    max_ris_gain: float = 256.0

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ChannelError(f"unknown path kind {self.kind!r}")
        if self.kind == "static":
            if callable(self.delay) or callable(self.attenuation):
                raise ChannelError("static paths must have constant attenuation and delay")
            if self.delay < 0.0:
                raise ChannelError("delay must be >= 0")
        for name in ("ris_gain",):
            v = getattr(self, name)
            if not callable(v) and abs(float(v)) > self.max_ris_gain:
                raise ChannelError("ris_gain exceeds the configured maximum")

    def delay_at(self, t: np.ndarray) -> np.ndarray:
        if callable(self.delay):
            return np.asarray(self.delay(t), dtype=float)
        return np.full_like(np.asarray(t, dtype=float), float(self.delay))

    def attenuation_at(self, f_col: np.ndarray, t_row: np.ndarray) -> np.ndarray:
        if callable(self.attenuation):
            return np.asarray(self.attenuation(f_col, t_row))
        return np.asarray(self.attenuation)


@dataclass
class Scene:
    """Everything needed to synthesize one CSI frame deterministically."""

    wall: Optional[WallModel]
    wall_effect: WallChannelEffect
    paths: list[PathComponent]
    freq_grid: np.ndarray
    time_grid: np.ndarray
    noise_variance: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        self.freq_grid = np.asarray(self.freq_grid, dtype=float)
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        for name, grid in (("freq_grid", self.freq_grid), ("time_grid", self.time_grid)):
            if grid.ndim != 1 or grid.size == 0:
                raise ChannelError(f"{name} must be a non-empty 1-D array")
            if grid.size > 1 and not np.all(np.diff(grid) > 0):
                raise ChannelError(f"{name} must be strictly increasing")
        if self.noise_variance < 0.0:
            raise ChannelError("noise_variance must be >= 0")

    @property
    def sample_rate(self) -> float:
        if self.time_grid.size < 2:
            return 0.0
        return 1.0 / float(self.time_grid[1] - self.time_grid[0])


@dataclass
class CsiFrame:
    """Complex frequency-by-time channel snapshot with sampling metadata."""

    data: np.ndarray
    sample_rate: float
    label: Optional[str] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 2:
            raise ChannelError("frame data must be [freq_bins x time_samples]")
        if not np.isfinite(self.data).all():
            raise ChannelError("frame entries must be finite")
        self.data.setflags(write=False)

    @property
    def freq_bins(self) -> int:
        return self.data.shape[0]

    @property
    def time_samples(self) -> int:
        return self.data.shape[1]

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.data) ** 2))


# Per-path surface factors: gain(t), phase(t), delay(t).
RisFactors = tuple[TimeFn, TimeFn, TimeFn]

IDENTITY_FACTORS: RisFactors = (
    lambda t: np.ones_like(np.asarray(t, dtype=float)),
    lambda t: np.zeros_like(np.asarray(t, dtype=float)),
    lambda t: np.zeros_like(np.asarray(t, dtype=float)),
)


def _synthesize(scene: Scene, factors: Optional[Sequence[RisFactors]]) -> CsiFrame:
    if not scene.paths:
        raise EmptySceneError("scene has no paths")
    f = scene.freq_grid[:, None]
    t = scene.time_grid[None, :]
    t_flat = scene.time_grid
    wall = scene.wall_effect

    total = np.zeros((scene.freq_grid.size, scene.time_grid.size), dtype=complex)
    for i, path in enumerate(scene.paths):
        if factors is None:
            gain_fn = _as_time_fn(path.ris_gain)
            phase_fn = _as_time_fn(path.ris_phase)
            delay_fn = _as_time_fn(path.ris_delay)
        else:
            gain_fn, phase_fn, delay_fn = factors[i]
        beta = np.asarray(gain_fn(t_flat), dtype=float)[None, :]
        theta = np.asarray(phase_fn(t_flat), dtype=float)[None, :]
        tau_ris = np.asarray(delay_fn(t_flat), dtype=float)[None, :]
        tau = path.delay_at(t_flat)[None, :] + wall.extra_delay + tau_ris
        phase = path.base_phase + theta + wall.phase_shift - 2.0 * np.pi * f * tau
        amp = wall.amplitude_factor * path.attenuation_at(f, t) * beta
        total += amp * np.exp(1j * phase)

    if scene.noise_variance > 0.0:
        rng = np.random.default_rng(scene.rng_seed)
        sigma = math.sqrt(scene.noise_variance / 2.0)
        total = total + sigma * (rng.standard_normal(total.shape)
                                 + 1j * rng.standard_normal(total.shape))
    return CsiFrame(data=total, sample_rate=scene.sample_rate)


def synthesize_csi(scene: Scene) -> CsiFrame:
    """Sum the static and dynamic paths into an [F x T] frame, plus seeded AWGN."""
    return _synthesize(scene, factors=None)


# ---------------------------------------------------------------------------
# Surface-to-path coupling
# ---------------------------------------------------------------------------

@dataclass
class ElementPathCoupling:
    """Maps a phase configuration to per-path (gain, phase, delay) factors.

    Each path owns a subset of surface elements; the path factor is the
    coherent sum of that subset's transmission coefficients weighted by the
    element cascade gains, normalized by the subset's RMS energy.  The induced
    extra delay is zero.
    """

    chan: Optional[CascadeChannel] = None
    assignments: Optional[list[np.ndarray]] = None
    explicit: Optional[list[tuple[float, float, float]]] = None

    @classmethod
    def identity(cls) -> "ElementPathCoupling":
        return cls()

    @classmethod
    def from_factors(cls, factors: list[tuple[float, float, float]]) -> "ElementPathCoupling":
        return cls(explicit=list(factors))

    @classmethod
    def shared(cls, chan: CascadeChannel, n_paths: int) -> "ElementPathCoupling":
        """Every path couples to the full element set (default)."""
        full = np.arange(chan.num_elements)
        return cls(chan=chan, assignments=[full] * n_paths)

    @classmethod
    def partition(cls, chan: CascadeChannel, n_paths: int) -> "ElementPathCoupling":
        """Disjoint contiguous element blocks, one per path."""
        if n_paths < 1:
            raise ChannelError("n_paths must be >= 1")
        blocks = np.array_split(np.arange(chan.num_elements), n_paths)
        return cls(chan=chan, assignments=[np.asarray(b) for b in blocks])

    def path_factors(self, config: Optional[PhaseMatrix], n_paths: int) -> list[RisFactors]:
        if self.explicit is not None:
            if len(self.explicit) != n_paths:
                raise ChannelError("explicit factors must match the path count")
            return [
                (_as_time_fn(b), _as_time_fn(th), _as_time_fn(tau))
                for b, th, tau in self.explicit
            ]
        if self.chan is None or self.assignments is None:
            return [IDENTITY_FACTORS] * n_paths
        if config is None:
            raise ChannelError("a phase configuration is required for element coupling")
        if len(self.assignments) != n_paths:
            raise ChannelError("assignments must match the path count")
        if config.num_elements != self.chan.num_elements:
            raise ChannelError("config dimensions do not match the coupling channel")
        gains = self.chan.cascade_gains()
        coeffs = config.transmission_coefficients()
        factors = []
        for subset in self.assignments:
            energy = float(np.sum(np.abs(gains[subset]) ** 2))
            if energy == 0.0:
                factors.append(IDENTITY_FACTORS)
                continue
            c = np.sum(gains[subset] * coeffs[subset]) / math.sqrt(energy)
            factors.append((_as_time_fn(abs(c)), _as_time_fn(float(np.angle(c))), _as_time_fn(0.0)))
        return factors


def synthesize_csi_with_ris(scene: Scene, config: Optional[PhaseMatrix],
                            coupling: ElementPathCoupling) -> CsiFrame:
    """Synthesize with per-path surface factors derived from the configuration.

    With the identity coupling the output matches synthesize_csi bit-for-bit
    under the same seed.
    """
    factors = coupling.path_factors(config, len(scene.paths))
    return _synthesize(scene, factors=factors)


# ---------------------------------------------------------------------------
# Activity profiles and dataset generation
# ---------------------------------------------------------------------------

@dataclass
class JitterSpec:
    """Per-sample randomization of trajectory parameters."""

    amplitude_frac: float = 0.15
    timing_s: float = 0.35
    phase: bool = True
    scale: float = 1.0


@dataclass
class TrajectoryTemplate:
    """Parametric path-length excursion (meters) over the frame interval.

    Shapes: sway (small sinusoid), ramp_osc (steady drift plus gait ripple),
    logistic (one smooth level transition), bump (gaussian out-and-back).
    Peak excursion rates stay below ~0.4 m/s so motion energy lands under the
    10 Hz preprocessing cutoff.  am_depth couples the path attenuation to the
    same motion envelope (limb crossing the beam changes the scattered power),
    which puts the signature into |H| directly.
    """

    shape: str
    amplitude_m: float
    rate_hz: float = 0.0
    center_s: float = 1.4
    width_s: float = 0.3
    base_length_m: float = 5.0
    attenuation: float = 0.5
    am_depth: float = 0.5

    def excursion(self, t: np.ndarray, amp: float, center: float,
                  width: float, phase0: float) -> np.ndarray:
        if self.shape == "sway":
            return amp * np.sin(2.0 * np.pi * self.rate_hz * t + phase0)
        if self.shape == "ramp_osc":
            ripple = 0.02 * amp * np.sin(2.0 * np.pi * self.rate_hz * t + phase0)
            return amp * 0.22 * t + ripple
        if self.shape == "logistic":
            return amp / (1.0 + np.exp(-(t - center) / max(width, 1e-3)))
        if self.shape == "bump":
            return amp * np.exp(-0.5 * ((t - center) / max(width, 1e-3)) ** 2)
        raise ChannelError(f"unknown trajectory shape {self.shape!r}")

    def envelope(self, t: np.ndarray, center: float, width: float,
                 phase0: float) -> np.ndarray:
        """Unit-scale motion-intensity envelope matching the excursion shape."""
        if self.shape == "sway":
            return np.sin(2.0 * np.pi * self.rate_hz * t + phase0)
        if self.shape == "ramp_osc":
            return np.sin(2.0 * np.pi * self.rate_hz * t + phase0)
        if self.shape == "logistic":
            sign = 1.0 if self.amplitude_m >= 0 else -1.0
            return sign / (1.0 + np.exp(-(t - center) / max(width, 1e-3)))
        if self.shape == "bump":
            return np.exp(-0.5 * ((t - center) / max(width, 1e-3)) ** 2)
        raise ChannelError(f"unknown trajectory shape {self.shape!r}")

    def build_path(self, rng: np.random.Generator, jitter: JitterSpec) -> PathComponent:
        s = jitter.scale
        amp = self.amplitude_m * (1.0 + s * jitter.amplitude_frac * rng.uniform(-1.0, 1.0))
        center = self.center_s + s * jitter.timing_s * rng.uniform(-1.0, 1.0)
        width = self.width_s * (1.0 + 0.5 * s * jitter.amplitude_frac * rng.uniform(-1.0, 1.0))
        phase0 = rng.uniform(0.0, 2.0 * np.pi) if jitter.phase else 0.0
        base_phase = rng.uniform(0.0, 2.0 * np.pi) if jitter.phase else 0.0
        base_len = self.base_length_m * (1.0 + 0.05 * s * rng.uniform(-1.0, 1.0))
        atten = self.attenuation * (1.0 + 0.2 * s * jitter.amplitude_frac * rng.uniform(-1.0, 1.0))
        depth = float(np.clip(self.am_depth, -0.85, 0.85))

        def delay_fn(t, _amp=amp, _c=center, _w=width, _p0=phase0, _bl=base_len):
            return (_bl + self.excursion(np.asarray(t, dtype=float), _amp, _c, _w, _p0)) / SPEED_OF_LIGHT

        def atten_fn(f, t, _c=center, _w=width, _p0=phase0, _a=atten, _d=depth):
            env = self.envelope(np.asarray(t, dtype=float), _c, _w, _p0)
            return _a * (1.0 + _d * env)

        return PathComponent(kind="dynamic", attenuation=atten_fn,
                             base_phase=base_phase, delay=delay_fn)


@dataclass
class ActivityProfile:
    """A named activity class and the dynamic paths its motion contributes."""

    class_name: str
    dynamic_path_templates: list[TrajectoryTemplate]
    variability: JitterSpec = field(default_factory=JitterSpec)

    def __post_init__(self):
        if self.class_name not in ACTIVITY_CLASSES:
            raise ChannelError(f"unknown activity class {self.class_name!r}")

    def build_paths(self, rng: np.random.Generator) -> list[PathComponent]:
        return [tpl.build_path(rng, self.variability) for tpl in self.dynamic_path_templates]


def default_activity_profiles(jitter_scale: float = 1.0) -> list[ActivityProfile]:
    """Six activity classes with distinct motion envelopes.

    Velocity profiles are chosen so each class leaves a different amplitude
    ripple: sustained near-6 Hz for walking, a short pulse for kicking, slow
    one-way transitions for sitting/standing up, a dip-and-return for picking
    up, and near-static sway for standing.
    """
    j = JitterSpec(scale=jitter_scale)
    return [
        ActivityProfile("kicking", [
            TrajectoryTemplate("bump", amplitude_m=0.095, center_s=1.4, width_s=0.17,
                               base_length_m=5.2, attenuation=0.6, am_depth=0.85),
        ], j),
        ActivityProfile("picking up", [
            TrajectoryTemplate("bump", amplitude_m=-0.24, center_s=1.5, width_s=0.45,
                               base_length_m=5.0, attenuation=0.5, am_depth=0.6),
        ], j),
        ActivityProfile("sitting down", [
            TrajectoryTemplate("logistic", amplitude_m=-0.34, center_s=1.4, width_s=0.30,
                               base_length_m=5.4, attenuation=0.45, am_depth=0.45),
        ], j),
        ActivityProfile("standing", [
            TrajectoryTemplate("sway", amplitude_m=0.016, rate_hz=0.4,
                               base_length_m=5.1, attenuation=0.5, am_depth=0.15),
        ], j),
        ActivityProfile("standing up", [
            TrajectoryTemplate("logistic", amplitude_m=0.30, center_s=1.3, width_s=0.16,
                               base_length_m=5.3, attenuation=0.65, am_depth=0.75),
        ], j),
        ActivityProfile("walking", [
            TrajectoryTemplate("ramp_osc", amplitude_m=1.35, rate_hz=1.9,
                               base_length_m=4.8, attenuation=0.6, am_depth=0.65),
        ], j),
    ]


def default_static_paths(rng_seed: int = 1234, count: int = 3) -> list[PathComponent]:
    """Fixed background paths: a direct through-wall path plus reflections."""
    rng = np.random.default_rng(rng_seed)
    amps = [1.0, 0.4, 0.25, 0.15, 0.1][:count]
    lengths = [3.8, 5.6, 7.1, 8.4, 9.9][:count]
    return [
        PathComponent(kind="static", attenuation=amps[i],
                      base_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
                      delay=lengths[i] / SPEED_OF_LIGHT)
        for i in range(len(amps))
    ]


def default_grids(freq_bins: int = 64, time_samples: int = 150,
                  sample_rate: float = 50.0, carrier_freq: float = 5.8e9,
                  bandwidth: float = 160e6) -> tuple[np.ndarray, np.ndarray]:
    freq = carrier_freq + np.linspace(-bandwidth / 2.0, bandwidth / 2.0, freq_bins)
    time = np.arange(time_samples) / sample_rate
    return freq, time


def _sample_seed(base_seed: int, class_idx: int, sample_idx: int, stream: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), int(class_idx), int(sample_idx), int(stream)])
    return int(ss.generate_state(1)[0])


def generate_activity_dataset(profiles: Sequence[ActivityProfile], scene_template: Scene,
                              samples_per_class: int, with_ris: bool = False,
                              config: Optional[PhaseMatrix] = None,
                              coupling: Optional[ElementPathCoupling] = None) -> list[CsiFrame]:
    """Labeled frames, samples_per_class per profile, deterministically jittered.

    Noise and jitter seeds derive only from (scene seed, class, sample index),
    so RIS-on and RIS-off variants of the same dataset are sample-aligned.
    """
    if samples_per_class < 1:
        raise ChannelError("samples_per_class must be >= 1")
    if with_ris and (config is None or coupling is None):
        raise ChannelError("with_ris requires both a configuration and a coupling")
    frames = []
    for ci, profile in enumerate(profiles):
        for k in range(samples_per_class):
            jitter_rng = np.random.default_rng(
                _sample_seed(scene_template.rng_seed, ci, k, stream=0))
            paths = list(scene_template.paths) + profile.build_paths(jitter_rng)
            scene = replace(
                scene_template, paths=paths,
                rng_seed=_sample_seed(scene_template.rng_seed, ci, k, stream=1))
            if with_ris:
                frame = synthesize_csi_with_ris(scene, config, coupling)
            else:
                frame = synthesize_csi(scene)
            frames.append(CsiFrame(data=frame.data, sample_rate=frame.sample_rate,
                                   label=profile.class_name))
    return frames
