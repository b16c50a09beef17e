"""Single-photon-level counting simulation.

Each trial draws Poisson counts for every detection window from the expected
per-mode means.  Every trial owns an independent, reproducible random
substream keyed by (seed, trial index), so results never depend on how
trials are batched or parallelised.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .device import (ArrayDevice, CellParams, StorageConfig,
                     spin_wave_efficiency, window_capture_fraction)
from .errors import ConfigError
from .sequence import (EventKind, SequencePlan, Timeline, TimingConstraints,
                       compile_plan)

__all__ = [
    "RunKind", "NoiseParams", "LeakageMatrix", "TrialCounts",
    "ModeExpectations", "expected_signal_per_mode", "expected_noise_per_mode",
    "mode_expectations", "run_trials", "run_crosstalk_scan", "trial_rng",
]


class RunKind(enum.Enum):
    SIGNAL = "signal"        # inputs on: windows see echo plus noise
    NOISE = "noise"          # inputs blocked: windows see noise only
    CROSSTALK = "crosstalk"  # input cell i, read-out cell j, all pairs


@dataclass(frozen=True)
class NoiseParams:
    """Unconditional noise model for one detection window.

    mean = base_noise_per_window
         + fluorescence_amplitude * exp(-dt / fluorescence_decay)
         + dark_rate * window_seconds

    where dt is the gap between the end of the second control pulse and the
    window start.  ``offresonant_echo_leak`` holds extra per-window means for
    specific (input, output) cell pairs during cross-talk scans.
    """

    base_noise_per_window: float
    fluorescence_amplitude: float
    fluorescence_decay: float  # us
    dark_rate: float           # Hz
    offresonant_echo_leak: dict[tuple[int, int], float] = field(
        default_factory=dict)

    def __post_init__(self):
        for name in ("base_noise_per_window", "fluorescence_amplitude",
                     "dark_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.fluorescence_decay <= 0:
            raise ConfigError("fluorescence_decay must be positive")
        for (i, j), v in self.offresonant_echo_leak.items():
            if v < 0:
                raise ConfigError(f"offresonant_echo_leak[{i},{j}] must be >= 0")


@dataclass(frozen=True)
class LeakageMatrix:
    """Relative neighbour leakage: values[i][j] scales the echo of input
    cell i that appears in output cell j's window (diagonal is unity)."""

    cell_ids: tuple[int, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        n = len(self.cell_ids)
        if n == 0:
            raise ConfigError("leakage matrix needs at least one cell")
        if len(set(self.cell_ids)) != n:
            raise ConfigError("leakage matrix has duplicate cell ids")
        if len(self.values) != n or any(len(r) != n for r in self.values):
            raise ConfigError(f"leakage matrix must be {n}x{n}")
        for i, row in enumerate(self.values):
            for j, v in enumerate(row):
                if i == j:
                    if v != 1.0:
                        raise ConfigError(
                            f"leakage diagonal must be 1 (cell "
                            f"{self.cell_ids[i]} has {v})")
                elif not 0.0 <= v < 1.0:
                    raise ConfigError(
                        f"off-diagonal leakage must be in [0, 1), got {v} at "
                        f"({self.cell_ids[i]}, {self.cell_ids[j]})")

    def _index(self, cell_id: int) -> int:
        try:
            return self.cell_ids.index(cell_id)
        except ValueError:
            raise ConfigError(f"cell {cell_id} not in leakage matrix "
                              f"(has {list(self.cell_ids)})") from None

    def leak(self, input_cell: int, output_cell: int) -> float:
        return self.values[self._index(input_cell)][self._index(output_cell)]

    @classmethod
    def identity(cls, cell_ids) -> "LeakageMatrix":
        ids = tuple(cell_ids)
        n = len(ids)
        return cls(cell_ids=ids,
                   values=tuple(tuple(1.0 if i == j else 0.0
                                      for j in range(n)) for i in range(n)))


@dataclass(frozen=True)
class TrialCounts:
    """Accumulated counts of one run: (cell_id, temporal_index) -> total."""

    kind: RunKind
    counts: dict[tuple[int, int], int]
    n_trials: int
    pair: tuple[int, int] | None = None  # (input, output) for scan entries

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if any(v < 0 for v in self.counts.values()):
            raise ConfigError("counts must be non-negative")

    def mean(self, key: tuple[int, int]) -> float:
        return self.counts[key] / self.n_trials

    def total(self) -> int:
        return sum(self.counts.values())


# --------------------------------------------------------------------------
# expected means


def expected_signal_per_mode(cell: CellParams, config: StorageConfig,
                             device: ArrayDevice) -> float:
    """Mean echo counts per detection window for one cell.

    The mean photon number is calibrated downstream of the multiplexer, so
    eta_mux does not appear here: signal = n_bar * spin-wave efficiency *
    eta_demux * eta_fiber * eta_detection_path * window capture fraction.
    """
    capture = window_capture_fraction(config.input_shape,
                                      config.detection_window)
    return (config.mean_photon_number
            * spin_wave_efficiency(cell, config.tau)
            * cell.eta_demux
            * cell.eta_fiber
            * device.eta_detection_path
            * capture)


def expected_noise_per_mode(mode: tuple[int, int], timeline: Timeline,
                            noise: NoiseParams) -> float:
    """Mean noise counts in the detection window of one (cell, temporal
    index) mode of a compiled timeline.

    Control-pulse fluorescence decays with the gap between the second
    control pulse and the window, so early temporal modes are the noisiest.
    """
    cell_id, k = mode
    window = None
    for ev in timeline.events:
        if (ev.kind is EventKind.ECHO_WINDOW and ev.cell_id == cell_id
                and ev.temporal_index == k):
            window = ev
            break
    if window is None:
        raise ConfigError(f"mode (cell {cell_id}, temporal {k}) is not in "
                          f"the timeline")
    cp2 = timeline.control_pulse(cell_id, EventKind.CONTROL2)
    dt = window.start - cp2.end
    if dt < 0:
        raise ConfigError(
            f"echo window of mode (cell {cell_id}, temporal {k}) opens "
            f"{-dt:g} us before its control pulse has finished")
    window_seconds = window.duration * 1e-6
    return (noise.base_noise_per_window
            + noise.fluorescence_amplitude * math.exp(-dt / noise.fluorescence_decay)
            + noise.dark_rate * window_seconds)


@dataclass(frozen=True)
class ModeExpectations:
    """Per-mode Poisson means, echo and noise separately, in block order."""

    signal: dict[tuple[int, int], float]
    noise: dict[tuple[int, int], float]

    def keys(self) -> list[tuple[int, int]]:
        return list(self.signal)

    def total(self, key: tuple[int, int]) -> float:
        return self.signal[key] + self.noise[key]


def mode_expectations(device: ArrayDevice, plan: SequencePlan,
                      noise: NoiseParams,
                      constraints: TimingConstraints = TimingConstraints(),
                      ) -> ModeExpectations:
    """Expected echo and noise means for every (cell, temporal mode) of a
    plan.  Compiles the plan, so infeasible plans fail here."""
    timeline = compile_plan(plan, constraints)
    cfg = plan.storage
    sig: dict[tuple[int, int], float] = {}
    bkg: dict[tuple[int, int], float] = {}
    for cell_id in plan.cell_order:
        s = expected_signal_per_mode(device.cell(cell_id), cfg, device)
        for k in range(1, cfg.n_temporal + 1):
            sig[(cell_id, k)] = s
            bkg[(cell_id, k)] = expected_noise_per_mode((cell_id, k),
                                                        timeline, noise)
    return ModeExpectations(signal=sig, noise=bkg)


# --------------------------------------------------------------------------
# trial engine


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """The random substream of one trial: keyed by (seed, trial) so any
    partitioning of trials over workers reproduces identical draws."""
    return np.random.default_rng([seed, trial])


def _sum_poisson_range(lam: np.ndarray, seed: int, start: int,
                       stop: int) -> np.ndarray:
    total = np.zeros(lam.shape, dtype=np.int64)
    for trial in range(start, stop):
        total += trial_rng(seed, trial).poisson(lam)
    return total


def _partition(n_trials: int, workers: int) -> list[tuple[int, int]]:
    chunk = -(-n_trials // workers)  # ceil
    return [(lo, min(lo + chunk, n_trials))
            for lo in range(0, n_trials, chunk)]


def _accumulate(lam: np.ndarray, n_trials: int, seed: int,
                workers: int) -> np.ndarray:
    if workers <= 1 or n_trials < 2 * workers:
        return _sum_poisson_range(lam, seed, 0, n_trials)
    parts = _partition(n_trials, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sum_poisson_range, lam, seed, lo, hi)
                   for lo, hi in parts]
        return sum(f.result() for f in futures)


def _check_run_args(n_trials: int, seed: int, workers: int) -> None:
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")


def run_trials(plan: SequencePlan, device: ArrayDevice, noise: NoiseParams,
               n_trials: int, seed: int, with_input: bool = True,
               constraints: TimingConstraints = TimingConstraints(),
               workers: int = 1) -> TrialCounts:
    """Accumulate Poisson counts over ``n_trials`` independent trials.

    With inputs on, each window draws from echo + noise means; with inputs
    blocked (``with_input=False``, the noise-floor measurement) from the
    noise means alone.  Compilation errors from an infeasible plan
    propagate.
    """
    _check_run_args(n_trials, seed, workers)
    exp = mode_expectations(device, plan, noise, constraints)
    keys = exp.keys()
    if with_input:
        lam = np.array([exp.total(key) for key in keys])
    else:
        lam = np.array([exp.noise[key] for key in keys])
    totals = _accumulate(lam, n_trials, seed, workers)
    counts = {key: int(t) for key, t in zip(keys, totals)}
    kind = RunKind.SIGNAL if with_input else RunKind.NOISE
    return TrialCounts(kind=kind, counts=counts, n_trials=n_trials)


def run_crosstalk_scan(device: ArrayDevice, leak: LeakageMatrix,
                       noise: NoiseParams, config: StorageConfig,
                       n_trials: int, seed: int,
                       constraints: TimingConstraints = TimingConstraints(),
                       workers: int = 1,
                       ) -> dict[tuple[int, int], TrialCounts]:
    """Sweep every ordered (input cell, output cell) pair of the leakage
    matrix: the input enters cell i while collection is set to output j.

    Expected counts per window:
        leak[i][j] * signal_i + noise + offresonant_echo_leak[i, j]
    All pairs are drawn from one vector per trial (substream (seed, trial)),
    so scan results are reproducible and worker-count independent.
    """
    _check_run_args(n_trials, seed, workers)
    if config.n_temporal != 1:
        raise ConfigError(f"cross-talk scans use a single input pulse per "
                          f"trial; got n_temporal={config.n_temporal}")
    cells = list(leak.cell_ids)
    # Per-pair trials share one cell block's timing, so the noise term is
    # the single-mode noise of any one cell's block.
    timeline = compile_plan(SequencePlan(storage=config,
                                         cell_order=(cells[0],)),
                            constraints)
    noise_per_window = expected_noise_per_mode((cells[0], 1), timeline, noise)
    sig = {c: expected_signal_per_mode(device.cell(c), config, device)
           for c in cells}

    index = []  # (input, output) in canonical order
    lam = []
    for i in cells:
        for j in cells:
            extra = noise.offresonant_echo_leak.get((i, j), 0.0)
            index.append((i, j))
            lam.append(leak.leak(i, j) * sig[i] + noise_per_window + extra)
    totals = _accumulate(np.array(lam), n_trials, seed, workers)

    return {(i, j): TrialCounts(kind=RunKind.CROSSTALK,
                                counts={(j, 1): int(total)},
                                n_trials=n_trials, pair=(i, j))
            for (i, j), total in zip(index, totals)}
