"""1-bit transmissive surface configuration: cascaded channel power and greedy optimization.

The surface is an M x N grid of elements, each switchable between two
transmission phases (-pi/2, +pi/2).  The received signal through the surface is
y = h1^H diag(exp(j*phi)) h2 x + n, so the noiseless receive power depends only
on the per-element cascade gains g_l = conj(h1_l) * h2_l and the chosen phases.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

PHASE_LOW = -np.pi / 2
PHASE_HIGH = +np.pi / 2

# Linear powers below this floor are treated as zero when forming dB ratios.
POWER_FLOOR = 1e-30


class RisError(ValueError):
    """Invalid surface configuration or channel input."""


@dataclass
class PhaseMatrix:
    """M x N grid of 1-bit phase states, each entry exactly -pi/2 or +pi/2."""

    phases: np.ndarray

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=float)
        if self.phases.ndim != 2:
            raise RisError("phase matrix must be 2-D")
        ok = np.isclose(self.phases, PHASE_LOW) | np.isclose(self.phases, PHASE_HIGH)
        if not ok.all():
            raise RisError("phase entries must be -pi/2 or +pi/2")

    @property
    def rows(self) -> int:
        return self.phases.shape[0]

    @property
    def cols(self) -> int:
        return self.phases.shape[1]

    @property
    def num_elements(self) -> int:
        return self.phases.size

    @classmethod
    def initial(cls, rows: int, cols: int) -> "PhaseMatrix":
        """All-elements-low starting configuration used by the greedy sweep."""
        return cls(np.full((rows, cols), PHASE_LOW))

    def flip_row(self, m: int) -> "PhaseMatrix":
        out = self.phases.copy()
        out[m, :] = -out[m, :]
        return PhaseMatrix(out)

    def flip_col(self, n: int) -> "PhaseMatrix":
        out = self.phases.copy()
        out[:, n] = -out[:, n]
        return PhaseMatrix(out)

    def transmission_coefficients(self) -> np.ndarray:
        """Per-element complex coefficients exp(j*phi), flattened row-major."""
        return np.exp(1j * self.phases.ravel())

    def half_pi_multipliers(self) -> np.ndarray:
        """Integer view of the grid: +1 for +pi/2, -1 for -pi/2."""
        return np.where(self.phases > 0, 1, -1).astype(int)


@dataclass
class CascadeChannel:
    """Channel vectors around the surface plus measurement settings.

    h1 is surface->receiver, h2 is transmitter->surface; both length L = M*N.
    """

    h1: np.ndarray
    h2: np.ndarray
    tx_symbol_power: float = 1.0
    noise_variance: float = 0.0
    averaging_samples: int = 1

    def __post_init__(self):
        self.h1 = np.asarray(self.h1, dtype=complex).ravel()
        self.h2 = np.asarray(self.h2, dtype=complex).ravel()
        if self.h1.shape != self.h2.shape:
            raise RisError("h1 and h2 must have equal length")
        if not (np.isfinite(self.h1).all() and np.isfinite(self.h2).all()):
            raise RisError("channel vectors must be finite")
        if self.averaging_samples < 1:
            raise RisError("averaging_samples must be >= 1")
        if self.noise_variance < 0:
            raise RisError("noise_variance must be >= 0")

    @property
    def num_elements(self) -> int:
        return self.h1.size

    def cascade_gains(self) -> np.ndarray:
        """Per-element products conj(h1_l) * h2_l."""
        return np.conj(self.h1) * self.h2

    @classmethod
    def from_gains(cls, gains, **kwargs) -> "CascadeChannel":
        """Channel whose conj(h1)*h2 equals the given per-element gains."""
        gains = np.asarray(gains, dtype=complex).ravel()
        return cls(h1=np.ones_like(gains), h2=gains, **kwargs)

    @classmethod
    def random(cls, num_elements: int, seed: int, **kwargs) -> "CascadeChannel":
        """i.i.d. unit-variance complex Gaussian h1 and h2."""
        rng = np.random.default_rng(seed)
        h1 = (rng.standard_normal(num_elements) + 1j * rng.standard_normal(num_elements)) / math.sqrt(2)
        h2 = (rng.standard_normal(num_elements) + 1j * rng.standard_normal(num_elements)) / math.sqrt(2)
        return cls(h1=h1, h2=h2, **kwargs)


@dataclass
class PowerTrace:
    """Accepted power after each step plus the per-step measurement record.

    values[k] is the power retained after step k (values[0] is the initial
    measurement), so it has length M+N+1.  candidates[k] is the power measured
    for the k-th trial flip before the keep/revert decision.
    """

    values: list[float] = field(default_factory=list)
    candidates: list[float] = field(default_factory=list)
    flipped_index: list[str] = field(default_factory=list)
    accepted_flips: list[bool] = field(default_factory=list)

    def gain_db(self) -> float:
        p0 = max(self.values[0], POWER_FLOOR)
        return 10.0 * math.log10(max(self.values[-1], POWER_FLOOR) / p0)

    def initial_was_floored(self) -> bool:
        return self.values[0] <= POWER_FLOOR


def combined_gain(config: PhaseMatrix, chan: CascadeChannel) -> complex:
    """Scalar end-to-end gain h1^H diag(exp(j*phi)) h2."""
    if config.num_elements != chan.num_elements:
        raise RisError(
            f"config has {config.num_elements} elements, channel expects {chan.num_elements}"
        )
    return np.sum(chan.cascade_gains() * config.transmission_coefficients())


def measure_power(config: PhaseMatrix, chan: CascadeChannel, seed: int = 0) -> float:
    """Average received power over the channel's sample count.

    Noiseless channels return |h1^H W h2|^2 * E|x|^2 exactly; with noise the
    per-sample AWGN draw is deterministic under the seed.
    """
    g = combined_gain(config, chan)
    amp = math.sqrt(chan.tx_symbol_power)
    if chan.noise_variance == 0.0:
        return float(abs(g) ** 2 * chan.tx_symbol_power)
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(chan.noise_variance / 2.0)
    n = sigma * (rng.standard_normal(chan.averaging_samples)
                 + 1j * rng.standard_normal(chan.averaging_samples))
    y = g * amp + n
    return float(np.mean(np.abs(y) ** 2))


def greedy_optimize(chan: CascadeChannel, rows: int, cols: int,
                    measure=None, seed: int = 0) -> tuple[PhaseMatrix, PowerTrace]:
    """Single-pass row-then-column flip sweep from the all-low configuration.

    Each of the M rows and then each of the N columns is trial-inverted once,
    in index order; a flip is kept only when the measured power strictly
    exceeds the previously accepted value (reverted on ties).  Exactly M+N
    measurements happen beyond the initial one.
    """
    if rows * cols != chan.num_elements:
        raise RisError("grid size does not match channel length")
    if measure is None:
        def measure(cfg, step):
            return measure_power(cfg, chan, seed=seed + step)

    config = PhaseMatrix.initial(rows, cols)
    trace = PowerTrace()
    power = float(measure(config, 0))
    trace.values.append(power)

    step = 0
    for kind, count in (("row", rows), ("col", cols)):
        for idx in range(count):
            step += 1
            candidate = config.flip_row(idx) if kind == "row" else config.flip_col(idx)
            p_new = float(measure(candidate, step))
            accept = p_new > power
            if accept:
                config, power = candidate, p_new
            trace.candidates.append(p_new)
            trace.flipped_index.append(f"{kind}{idx}")
            trace.accepted_flips.append(accept)
            trace.values.append(power)
    return config, trace


def exhaustive_oracle(chan: CascadeChannel, rows: int, cols: int,
                      max_elements: int = 16) -> tuple[PhaseMatrix, float]:
    """Global noiseless optimum by enumerating all 2^(M*N) phase assignments."""
    L = rows * cols
    if L != chan.num_elements:
        raise RisError("grid size does not match channel length")
    if L > max_elements:
        raise RisError(f"exhaustive search refused for {L} > {max_elements} elements")
    g = chan.cascade_gains()
    idx = np.arange(2 ** L, dtype=np.uint64)
    # Bit l of each index selects the sign of element l; exp(+/- j pi/2) = +/- 1j,
    # and the global j factors out of |.|^2.
    signs = (((idx[:, None] >> np.arange(L, dtype=np.uint64)) & 1).astype(float) * 2.0 - 1.0)
    powers = np.abs(signs @ g) ** 2 * chan.tx_symbol_power
    best = int(np.argmax(powers))
    phases = np.where(signs[best] > 0, PHASE_HIGH, PHASE_LOW).reshape(rows, cols)
    return PhaseMatrix(phases), float(powers[best])


@dataclass
class GainReport:
    """Distribution of greedy dB gains over random channel draws."""

    gains_db: np.ndarray
    floored_trials: list[int]

    @property
    def mean_db(self) -> float:
        return float(np.mean(self.gains_db))

    @property
    def median_db(self) -> float:
        return float(np.median(self.gains_db))

    def percentile_db(self, q: float) -> float:
        return float(np.percentile(self.gains_db, q))

    def summary(self) -> dict:
        return {
            "trials": int(self.gains_db.size),
            "mean_db": self.mean_db,
            "median_db": self.median_db,
            "p10_db": self.percentile_db(10.0),
            "p90_db": self.percentile_db(90.0),
            "floored_trials": list(self.floored_trials),
        }


def array_gain_report(trials: int, grid: tuple[int, int], seed: int = 0,
                      tx_symbol_power: float = 1.0, threads: int = 1) -> GainReport:
    """Greedy gain statistics over i.i.d. complex-Gaussian cascade draws.

    Trials whose initial power underflows the dB floor are flagged rather than
    dropped, so an all-cancelling start cannot silently inflate the mean.
    """
    if trials < 1:
        raise RisError("trials must be >= 1")
    rows, cols = grid
    seeds = np.random.SeedSequence(seed).spawn(trials)

    def run_trial(i: int) -> tuple[float, bool]:
        rng = np.random.default_rng(seeds[i])
        L = rows * cols
        h1 = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / math.sqrt(2)
        h2 = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / math.sqrt(2)
        chan = CascadeChannel(h1=h1, h2=h2, tx_symbol_power=tx_symbol_power)
        _, trace = greedy_optimize(chan, rows, cols)
        return trace.gain_db(), trace.initial_was_floored()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_trial, range(trials)))
    else:
        results = [run_trial(i) for i in range(trials)]

    gains = np.array([g for g, _ in results])
    floored = [i for i, (_, f) in enumerate(results) if f]
    return GainReport(gains_db=gains, floored_trials=floored)


def power_to_dbm(p_linear: float) -> float:
    """Linear power (mW convention) to dBm, floored to avoid -inf."""
    return 10.0 * math.log10(max(p_linear, POWER_FLOOR))
