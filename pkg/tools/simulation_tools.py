import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from numba import njit
from scipy import stats
from tqdm import tqdm

from entanglement.qstate import DensityMatrix, werner_state
from entanglement.witness import SETTINGS, SettingsPair, outcome_probabilities
from tools.config_tools import CHANNELS, ExperimentConfig, config_to_flat

logger = logging.getLogger(__name__)

PATH_LOST = -1
PATH_STORED = 0
PATH_TRANSMITTED = 1
PATH_TAGS = ("stored", "transmitted")

EVENT_COLUMNS = ("time_ps", "detector", "pulse_index", "setting_x", "setting_y", "path_tag")
NEVER = -(2 ** 62)
JITTER_CLIP = 5.0
# tail mass of the truncated pair-number law beyond this many extra pairs is negligible
_PAIR_NUMBER_SPAN = 60


# --- Types ---

@dataclass(frozen=True)
class Segment:
    """A run interval with fixed settings (x, y), in pump pulses [first_pulse, first_pulse + n_pulses)."""
    index: int
    x: int
    y: int
    first_pulse: int
    n_pulses: int

    @property
    def stop_pulse(self) -> int:
        return self.first_pulse + self.n_pulses

    def bounds_ps(self, period_ps: int) -> Tuple[int, int]:
        return self.first_pulse * period_ps, self.stop_pulse * period_ps


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Pairs created in a set of pulses; every pair carries the same Werner state."""
    pulse_index: np.ndarray
    creation_ps: np.ndarray
    state: DensityMatrix

    def __len__(self) -> int:
        return int(self.pulse_index.size)


@dataclass
class ChannelState:
    last_click_ps: int = NEVER


@dataclass(frozen=True)
class DetectionEvent:
    time_ps: int
    detector: str
    pulse_index: int
    path_tag: Optional[str] = None


@dataclass
class SimulationStatistics:
    """Tallies accumulated while streaming a run, for the simulate summary."""
    pulses_with_pairs: int = 0
    pairs: int = 0
    stored_signals: int = 0
    transmitted_signals: int = 0
    arrivals: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in CHANNELS})
    accepted: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in CHANNELS})

    def live_fractions(self) -> Dict[str, float]:
        """Fraction of efficiency-passed photons that survived the dead time, per channel."""
        return {c: self.accepted[c] / self.arrivals[c] if self.arrivals[c] else 1.0 for c in CHANNELS}


@dataclass
class EventStream:
    config: ExperimentConfig
    events: pd.DataFrame
    segments: List[Segment]
    statistics: SimulationStatistics

    @property
    def config_echo(self) -> Dict[str, str]:
        return config_to_flat(self.config)


def empty_events() -> pd.DataFrame:
    return pd.DataFrame({
        "time_ps": pd.Series([], dtype="int64"),
        "detector": pd.Categorical([], categories=CHANNELS),
        "pulse_index": pd.Series([], dtype="int64"),
        "setting_x": pd.Series([], dtype="int8"),
        "setting_y": pd.Series([], dtype="int8"),
        "path_tag": pd.Categorical([], categories=PATH_TAGS),
    })


# --- RNG and schedule ---

def block_rng(seed: int, segment: int, block: int) -> np.random.Generator:
    """Independent Philox stream per (segment, block), so blocks can be generated in any order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(segment, block))))


def schedule(config: ExperimentConfig) -> List[Segment]:
    """Four equal segments in the order 00, 01, 10, 11, contiguous in pulse index."""
    n = config.pulses_per_segment
    return [Segment(index=k, x=x, y=y, first_pulse=k * n, n_pulses=n) for k, (x, y) in enumerate(SETTINGS)]


# --- Single-step operations ---

def _place_pairs(config: ExperimentConfig, pulses: np.ndarray, state: DensityMatrix,
                 rng: np.random.Generator) -> PairBatch:
    offsets = np.rint(rng.uniform(0.0, config.pulse_width_ps, size=pulses.size)).astype(np.int64)
    return PairBatch(pulses, pulses * config.period_ps + offsets, state)


def generate_pairs(config: ExperimentConfig, pulse_index, rng: np.random.Generator) -> PairBatch:
    """Poisson(mu) pairs per pulse, created uniformly over the square pump pulse."""
    pulses = np.atleast_1d(np.asarray(pulse_index, dtype=np.int64))
    counts = rng.poisson(config.mean_pairs_per_pulse, size=pulses.size)
    return _place_pairs(config, np.repeat(pulses, counts), werner_state(config.visibility), rng)


def measure_pair(state: DensityMatrix, x: int, y: int, settings: SettingsPair, rng: np.random.Generator,
                 size: int | None = None):
    """
    Samples polarization outcomes from p(ab|xy).

    Returns (a, b) as ints, or two int8 arrays when `size` is given.
    """
    probs = outcome_probabilities(state, x, y, settings)
    index = rng.choice(4, size=size, p=probs)
    a = 1 - 2 * (index // 2)
    b = 1 - 2 * (index % 2)
    if size is None:
        return int(a), int(b)
    return a.astype(np.int8), b.astype(np.int8)


def route_signal(creation_ps, config: ExperimentConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (path, emission_ps); path is PATH_STORED, PATH_TRANSMITTED or PATH_LOST."""
    creation_ps = np.atleast_1d(np.asarray(creation_ps, dtype=np.int64))
    u = rng.random(creation_ps.size)
    paths = np.full(creation_ps.size, PATH_LOST, dtype=np.int8)
    stored = u < config.memory_efficiency
    transmitted = ~stored & (u < config.memory_efficiency + config.transmission_prob)
    paths[stored] = PATH_STORED
    paths[transmitted] = PATH_TRANSMITTED
    emission = creation_ps + np.where(stored, config.storage_ps, 0).astype(np.int64)
    return paths, emission


def jitter(rng: np.random.Generator, sigma_ps: float, size: int) -> np.ndarray:
    """Gaussian jitter truncated at 5 sigma, in whole picoseconds toward zero."""
    if sigma_ps <= 0:
        return np.zeros(size, dtype=np.int64)
    limit = JITTER_CLIP * sigma_ps
    return np.trunc(np.clip(rng.normal(0.0, sigma_ps, size), -limit, limit)).astype(np.int64)


def detect(arrival_ps: int, channel: str, config: ExperimentConfig, state: ChannelState, rng: np.random.Generator,
           pulse_index: int = 0, path_tag: str | None = None) -> DetectionEvent | None:
    """One photon arriving at one detector; non-paralyzable dead time, state updated on accepted clicks only."""
    spec = config.detectors[channel]
    if rng.random() >= spec.efficiency:
        return None
    time_ps = int(arrival_ps + jitter(rng, spec.jitter_ps, 1)[0])
    if time_ps - state.last_click_ps < config.dead_time_ps(channel):
        return None
    state.last_click_ps = time_ps
    return DetectionEvent(time_ps, channel, pulse_index, path_tag)


@njit(cache=True)
def _dead_time_mask(times, dead_time_ps, last_click_ps):
    keep = np.zeros(times.size, dtype=np.bool_)
    last = last_click_ps
    for k in range(times.size):
        if times[k] - last >= dead_time_ps:
            keep[k] = True
            last = times[k]
    return keep, last


# --- Block generation ---

def _bernoulli_positions(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices in [0, n) selected independently with probability p, drawn through geometric gaps."""
    if n <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n, dtype=np.int64)
    chunks = []
    current = -1
    while True:
        remaining = (n - current - 1) * p
        draw = int(remaining + 6 * math.sqrt(remaining) + 16)
        positions = current + np.cumsum(rng.geometric(p, size=draw))
        inside = positions[positions < n]
        chunks.append(inside)
        if inside.size < positions.size:
            return np.concatenate(chunks).astype(np.int64)
        current = int(positions[-1])


def _truncated_poisson(mu: float, minimum: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if size == 0:
        return np.empty(0, dtype=np.int64)
    values = np.arange(minimum, minimum + _PAIR_NUMBER_SPAN)
    pmf = stats.poisson.pmf(values, mu)
    return rng.choice(values, size=size, p=pmf / pmf.sum())


def sample_occupied_pulses(config: ExperimentConfig, start: int, stop: int, rng: np.random.Generator,
                           minimum: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pulses in [start, stop) carrying at least `minimum` pairs, with their pair numbers. Equivalent in law to
    drawing Poisson(mu) for every pulse and discarding the pulses below `minimum`.
    """
    mu = config.mean_pairs_per_pulse
    p_occupied = float(stats.poisson.sf(minimum - 1, mu)) if mu > 0 else 0.0
    positions = _bernoulli_positions(stop - start, p_occupied, rng)
    return positions + start, _truncated_poisson(mu, minimum, positions.size, rng)


@dataclass
class _Block:
    stop_pulse: int
    pulses_with_pairs: int
    pairs: int
    paths: np.ndarray
    arrivals: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _generate_block(config: ExperimentConfig, state: DensityMatrix, segment: Segment, block: int,
                    start: int, stop: int) -> _Block:
    rng = block_rng(config.rng_seed, segment.index, block)
    minimum = 2 if config.pulse_sampling == "multi_pair" else 1
    pulses, counts = sample_occupied_pulses(config, start, stop, rng, minimum)
    pairs = _place_pairs(config, np.repeat(pulses, counts), state, rng)

    a, b = measure_pair(state, segment.x, segment.y, config.settings, rng, size=len(pairs))
    paths, emission = route_signal(pairs.creation_ps, config, rng)
    routed = paths != PATH_LOST

    arrivals = {}
    legs = (
        ("s+", routed & (a == 1), emission, paths),
        ("s-", routed & (a == -1), emission, paths),
        ("i+", b == 1, pairs.creation_ps, None),
        ("i-", b == -1, pairs.creation_ps, None),
    )
    for channel, mask, times, tags in legs:
        spec = config.detectors[channel]
        selected = np.flatnonzero(mask)
        selected = selected[rng.random(selected.size) < spec.efficiency]
        clicks = times[selected] + jitter(rng, spec.jitter_ps, selected.size)
        tag = tags[selected] if tags is not None else np.full(selected.size, PATH_LOST, dtype=np.int8)
        arrivals[channel] = (clicks, pairs.pulse_index[selected], tag)
    return _Block(stop, int(pulses.size), len(pairs), paths, arrivals)


class _EventMerger:
    """Holds back events that later blocks could still precede, then applies dead time in time order."""

    def __init__(self, config: ExperimentConfig, segments: List[Segment], statistics: SimulationStatistics):
        self.config = config
        self.statistics = statistics
        self.margin_ps = int(math.ceil(JITTER_CLIP * max(d.jitter_ps for d in config.detectors.values()))) + 1
        self.segment_starts = np.array([s.first_pulse for s in segments], dtype=np.int64)
        self.segment_settings = np.array([(s.x, s.y) for s in segments], dtype=np.int8)
        self.last_click = {c: NEVER for c in CHANNELS}
        self.pending = {c: (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int8)) for c in CHANNELS}

    def push(self, block: Optional[_Block]) -> pd.DataFrame:
        horizon = block.stop_pulse * self.config.period_ps - self.margin_ps if block is not None else None
        times, channels, pulses, tags = [], [], [], []
        for code, channel in enumerate(CHANNELS):
            held = self.pending[channel]
            if block is not None:
                fresh = block.arrivals[channel]
                self.statistics.arrivals[channel] += fresh[0].size
                held = tuple(np.concatenate([h, f]) for h, f in zip(held, fresh))
            order = np.argsort(held[0], kind="stable")
            held = tuple(column[order] for column in held)
            split = held[0].size if horizon is None else int(np.searchsorted(held[0], horizon, side="left"))
            ready = tuple(column[:split] for column in held)
            self.pending[channel] = tuple(column[split:] for column in held)

            keep, self.last_click[channel] = _dead_time_mask(ready[0], self.config.dead_time_ps(channel),
                                                             self.last_click[channel])
            self.statistics.accepted[channel] += int(keep.sum())
            times.append(ready[0][keep])
            pulses.append(ready[1][keep])
            tags.append(ready[2][keep])
            channels.append(np.full(int(keep.sum()), code, dtype=np.int8))
        return self._frame(np.concatenate(times), np.concatenate(channels), np.concatenate(pulses),
                           np.concatenate(tags))

    def _frame(self, times, channels, pulses, tags) -> pd.DataFrame:
        if times.size == 0:
            return empty_events()
        order = np.lexsort((channels, times))
        times, channels, pulses, tags = times[order], channels[order], pulses[order], tags[order]
        segment = np.searchsorted(self.segment_starts, pulses, side="right") - 1
        settings = self.segment_settings[segment]
        return pd.DataFrame({
            "time_ps": times,
            "detector": pd.Categorical.from_codes(channels, categories=CHANNELS),
            "pulse_index": pulses,
            "setting_x": settings[:, 0],
            "setting_y": settings[:, 1],
            "path_tag": pd.Categorical.from_codes(tags, categories=PATH_TAGS),
        })


def _tasks(config: ExperimentConfig, segments: List[Segment]) -> List[Tuple[Segment, int, int, int]]:
    tasks = []
    for segment in segments:
        for block, start in enumerate(range(segment.first_pulse, segment.stop_pulse, config.block_pulses)):
            tasks.append((segment, block, start, min(start + config.block_pulses, segment.stop_pulse)))
    return tasks


def iter_event_blocks(config: ExperimentConfig, statistics: SimulationStatistics | None = None,
                      progress: bool = False) -> Iterator[pd.DataFrame]:
    """
    Streams the run as time-ordered DataFrame blocks. Every event in a block precedes every event of later
    blocks, and the concatenation does not depend on the thread count.
    """
    statistics = statistics if statistics is not None else SimulationStatistics()
    segments = schedule(config)
    state = werner_state(config.visibility)
    merger = _EventMerger(config, segments, statistics)
    tasks = _tasks(config, segments)
    batch = max(1, 2 * config.threads)

    with ThreadPoolExecutor(max_workers=config.threads) as pool, \
            tqdm(total=len(tasks), desc="simulating", unit="block", disable=not progress) as bar:
        for first in range(0, len(tasks), batch):
            chunk = tasks[first:first + batch]
            blocks = pool.map(lambda task: _generate_block(config, state, *task), chunk)
            for block in blocks:
                statistics.pulses_with_pairs += block.pulses_with_pairs
                statistics.pairs += block.pairs
                statistics.stored_signals += int(np.count_nonzero(block.paths == PATH_STORED))
                statistics.transmitted_signals += int(np.count_nonzero(block.paths == PATH_TRANSMITTED))
                frame = merger.push(block)
                bar.update(1)
                if len(frame):
                    yield frame
    frame = merger.push(None)
    if len(frame):
        yield frame


def run(config: ExperimentConfig, progress: bool = False) -> EventStream:
    logger.info("---SIMULATE---")
    logger.info("  %d pulses per setting, mu = %g, sampling = %s", config.pulses_per_segment,
                config.mean_pairs_per_pulse, config.pulse_sampling)
    statistics = SimulationStatistics()
    frames = list(iter_event_blocks(config, statistics, progress))
    events = pd.concat(frames, ignore_index=True) if frames else empty_events()
    logger.info("  %d pairs, %d events", statistics.pairs, len(events))
    return EventStream(config, events, schedule(config), statistics)
