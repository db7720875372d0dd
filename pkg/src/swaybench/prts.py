"""Pseudorandom ternary stimulus (PRTS) generation.

A maximal-length shift register over GF(3) yields a ternary velocity
profile; integrating it gives the support-surface tilt trajectory used to
probe posture control. All power sits on odd multiples of the fundamental
1/period, which is what makes the single-bin analysis grid work.
"""

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NonMaximalTapsError
from .util import config_hash

# Maximal-length feedback taps per register length, found by find_maximal_taps
# and re-verified at generation time (never assumed).
DEFAULT_TAPS = {
    2: (1, 1),
    3: (2, 0, 1),
    4: (1, 0, 0, 1),
    5: (2, 0, 0, 0, 1),
    6: (1, 0, 0, 0, 0, 1),
}

_SYMBOL_MAP = (0, 1, -1)  # register output 0/1/2 -> tilt velocity level


@dataclass(frozen=True)
class TernarySequence:
    """One period of a ternary sequence with symbols in {-1, 0, +1}."""

    values: np.ndarray
    stages: int

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TiltTrajectory:
    """Sampled support-surface tilt angle, tiled over full periods."""

    samples: np.ndarray  # [deg]
    sample_rate: float  # [Hz]
    period: float  # [s]
    n_periods: int
    peak_to_peak: float  # [deg], configured target
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    @property
    def samples_per_period(self) -> int:
        return len(self.samples) // self.n_periods


@dataclass(frozen=True)
class PeakGrid:
    """Analysis frequencies: odd multiples of the stimulus fundamental."""

    f_peak: np.ndarray  # [Hz], strictly increasing
    base_freq: float  # [Hz]

    def __len__(self) -> int:
        return len(self.f_peak)


def _register_step(state: tuple, taps: tuple) -> tuple:
    fb = 0
    for t, s in zip(taps, state):
        fb += t * s
    return state[1:] + (fb % 3,)


def generate_ternary_sequence(stages: int, taps, seed_state) -> TernarySequence:
    """Run the GF(3) register for one full cycle and map to symbols.

    Maximality of the taps is checked by construction: the register must
    return to the seed exactly at step 3**stages - 1 and not earlier.
    """
    if stages < 2:
        raise ConfigError(f"stages must be >= 2, got {stages}")
    taps = tuple(int(t) % 3 for t in taps)
    seed_state = tuple(int(s) % 3 for s in seed_state)
    if len(taps) != stages or len(seed_state) != stages:
        raise ConfigError("taps and seed_state must have length == stages")
    if not any(seed_state):
        raise ConfigError("seed_state must not be all zeros (absorbing state)")

    target = 3**stages - 1
    out = np.empty(target, dtype=np.int8)
    state = seed_state
    for i in range(target):
        out[i] = _SYMBOL_MAP[state[0]]
        state = _register_step(state, taps)
        if state == seed_state and i < target - 1:
            raise NonMaximalTapsError(
                f"taps {taps} cycle after {i + 1} steps, expected {target}"
            )
    if state != seed_state:
        raise NonMaximalTapsError(
            f"taps {taps} do not return to seed after {target} steps"
        )
    return TernarySequence(values=out, stages=stages)


def find_maximal_taps(stages: int):
    """Brute-force the first maximal-length tap set for a register length."""
    target = 3**stages - 1
    seed = (0,) * (stages - 1) + (1,)
    for taps in itertools.product(range(3), repeat=stages):
        if taps[0] == 0:
            continue  # singular register, cannot be maximal
        state = _register_step(seed, taps)
        n = 1
        while state != seed and n <= target:
            state = _register_step(state, taps)
            n += 1
        if n == target:
            return taps
    raise NonMaximalTapsError(f"no maximal taps found for stages={stages}")


def ternary_to_tilt(
    seq: TernarySequence,
    state_duration: float,
    sample_rate: float,
    peak_to_peak: float,
    n_periods: int,
) -> TiltTrajectory:
    """Integrate the ternary velocity profile into a tilt position trace.

    Each symbol holds a constant angular velocity for ``state_duration``.
    The velocity is sampled onto the output grid (symbol boundaries need
    not align with samples; only samples-per-period must be an integer),
    mean-removed so the period integral is zero, accumulated into a
    position trace, mean-removed again, rescaled to the exact target
    peak-to-peak, and tiled.
    """
    if peak_to_peak <= 0:
        raise ConfigError(f"peak_to_peak must be > 0, got {peak_to_peak}")
    if n_periods < 1:
        raise ConfigError(f"n_periods must be >= 1, got {n_periods}")
    n_states = len(seq)
    period = n_states * state_duration
    n_float = period * sample_rate
    n = round(n_float)
    if n < 1 or abs(n_float - n) > 1e-9 * max(1.0, n):
        raise ConfigError(
            f"samples per period must be an integer, got {n_float!r}"
        )

    # Exact integer map from sample index to register state index.
    idx = (np.arange(n) * n_states) // n
    velocity = seq.values[idx].astype(np.float64)
    velocity -= velocity.mean()

    dt = 1.0 / sample_rate
    pos = np.concatenate(([0.0], np.cumsum(velocity)))[:n] * dt
    pos -= pos.mean()

    span = pos.max() - pos.min()
    degenerate = bool(span == 0.0)
    if not degenerate:
        pos *= peak_to_peak / span
        # Phase the period to start at the sample nearest zero tilt so a
        # trial begins without a support-surface step.
        pos = np.roll(pos, -int(np.argmin(np.abs(pos))))

    return TiltTrajectory(
        samples=np.tile(pos, n_periods),
        sample_rate=float(sample_rate),
        period=float(period),
        n_periods=int(n_periods),
        peak_to_peak=float(peak_to_peak),
        degenerate=degenerate,
        meta={"stages": seq.stages, "n_states": n_states},
    )


def analysis_peaks(base_freq: float, max_freq: float) -> PeakGrid:
    """All odd multiples of the fundamental up to max_freq inclusive."""
    if base_freq <= 0:
        raise ConfigError(f"base_freq must be > 0, got {base_freq}")
    if max_freq < base_freq:
        raise ConfigError("max_freq must be >= base_freq")
    n_odd = int(math.floor(max_freq / base_freq * (1 + 1e-12) + 1)) // 2
    mult = 2 * np.arange(n_odd) + 1
    return PeakGrid(f_peak=mult * base_freq, base_freq=float(base_freq))


@dataclass(frozen=True)
class StimulusConfig:
    """Everything needed to regenerate a stimulus bit-identically."""

    stages: int = 5
    taps: tuple = DEFAULT_TAPS[5]
    seed_state: tuple = (0, 0, 0, 0, 1)
    state_duration: float = 20.0 / 242.0
    sample_rate: float = 100.0
    peak_to_peak: float = 1.0  # [deg]
    n_periods: int = 6
    discard_periods: int = 1  # transient periods dropped before analysis

    def __post_init__(self):
        if self.discard_periods < 0 or self.discard_periods >= self.n_periods:
            raise ConfigError(
                "discard_periods must be in [0, n_periods)"
            )

    @property
    def period(self) -> float:
        return (3**self.stages - 1) * self.state_duration

    @property
    def base_freq(self) -> float:
        return 1.0 / self.period

    def build(self) -> TiltTrajectory:
        seq = generate_ternary_sequence(self.stages, self.taps, self.seed_state)
        traj = ternary_to_tilt(
            seq,
            self.state_duration,
            self.sample_rate,
            self.peak_to_peak,
            self.n_periods,
        )
        traj.meta.update(self.descriptor())
        return traj

    def descriptor(self) -> dict:
        return {
            "stages": self.stages,
            "taps": list(self.taps),
            "seed_state": list(self.seed_state),
            "state_duration_s": self.state_duration,
            "sample_rate_hz": self.sample_rate,
            "peak_to_peak_deg": self.peak_to_peak,
            "n_periods": self.n_periods,
            "discard_periods": self.discard_periods,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.descriptor())

    @classmethod
    def from_dict(cls, d: dict) -> "StimulusConfig":
        try:
            return cls(
                stages=int(d["stages"]),
                taps=tuple(d["taps"]),
                seed_state=tuple(d["seed_state"]),
                state_duration=float(d["state_duration_s"]),
                sample_rate=float(d["sample_rate_hz"]),
                peak_to_peak=float(d["peak_to_peak_deg"]),
                n_periods=int(d["n_periods"]),
                discard_periods=int(d.get("discard_periods", 1)),
            )
        except KeyError as exc:
            raise ConfigError(f"stimulus config missing key {exc}") from exc

    def with_periods(self, n_periods: int) -> "StimulusConfig":
        return replace(self, n_periods=n_periods)


def write_trajectory_csv(traj: TiltTrajectory, path) -> None:
    t = traj.t
    with open(path, "w") as fh:
        fh.write("t_s,tilt_deg\n")
        for ti, xi in zip(t, traj.samples):
            fh.write(f"{ti:.12g},{xi:.12g}\n")


def write_trajectory_meta(traj: TiltTrajectory, config: StimulusConfig, path) -> None:
    meta = {
        "stages": config.stages,
        "taps": list(config.taps),
        "seed": list(config.seed_state),
        "period_s": traj.period,
        "sample_rate_hz": traj.sample_rate,
        "peak_to_peak_deg": traj.peak_to_peak,
        "n_periods": traj.n_periods,
        "discard_periods": config.discard_periods,
        "degenerate": traj.degenerate,
        "stimulus_hash": config.hash,
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
