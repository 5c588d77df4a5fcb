import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from entanglement.errors import EmptyDataError, RangeError, UnclassifiableError
from entanglement.witness import CountTable, witness_statistic
from tools.config_tools import CHANNELS

logger = logging.getLogger(__name__)

SIGNAL_CHANNELS = ("s+", "s-")
IDLER_CHANNELS = ("i+", "i-")
LEG_CLASSES = ("stored", "transmitted")
EVENT_CLASSES = ("stored-stored", "stored-transmitted", "transmitted-stored", "transmitted-transmitted")
DIAGNOSTIC_KEYS = ("dropped_ambiguous", "unclassifiable", "cross_segment")

# two-fold histograms extend this far beyond the 0 and storage-time peaks
HISTOGRAM_MARGIN_NS = 20.0
DEFAULT_DELAY_SCAN_NS = (10.0, 20.0, 30.0, 40.0, 50.0, 75.0, 100.0, 200.0, 300.0, 400.0, 500.0)

_UNCLASSIFIED = -1
_STORED = 0
_TRANSMITTED = 1


def _ps(ns: float) -> int:
    return int(round(ns * 1000))


class CoincidenceWindows(BaseModel):
    """
    Analysis windows, all in ns.

    Attributes:
        window_ns (float): Full width of the signal-idler window around the 0 and storage-time offsets used for
                           four-folds.
        min_delay_ns (float): Lower cut on the delay between the two pairs of a four-fold.
        max_delay_ns (float): Upper cut on that delay.
        storage_time_ns (float): Offset of the stored peak.
        twofold_window_ns (float): Full width of the window used for two-fold rates.
        conflict_horizon_ns (float): Largest pair delay considered when assembling and de-conflicting four-folds.
                                     Fixed independently of max_delay_ns so that tables shrink monotonically.
        histogram_bin_ns (float): Bin width of the two-fold delay histograms.
    """
    model_config = ConfigDict(frozen=True)

    window_ns: float = Field(5.0, gt=0.0)
    min_delay_ns: float = Field(5.0, ge=0.0)
    max_delay_ns: float = Field(50.0, gt=0.0)
    storage_time_ns: float = Field(50.0, gt=0.0)
    twofold_window_ns: float = Field(4.0, gt=0.0)
    conflict_horizon_ns: float = Field(500.0, gt=0.0)
    histogram_bin_ns: float = Field(0.5, gt=0.0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.min_delay_ns > self.max_delay_ns:
            raise ValueError(f"min_delay_ns {self.min_delay_ns} exceeds max_delay_ns {self.max_delay_ns}")
        if self.max_delay_ns > self.conflict_horizon_ns:
            raise ValueError(f"max_delay_ns {self.max_delay_ns} exceeds the conflict horizon {self.conflict_horizon_ns}")
        if self.storage_time_ns <= max(self.window_ns, self.twofold_window_ns):
            raise ValueError("storage time must exceed the coincidence windows to separate the two peaks")
        return self

    @property
    def search_ps(self) -> int:
        """Legs are searched this far outside the two peaks; matches there count as unclassifiable."""
        return _ps(self.window_ns)

    @property
    def span_ps(self) -> int:
        """No candidate or histogram entry spans an event-free gap longer than this."""
        fourfold = _ps(self.conflict_horizon_ns) + _ps(self.storage_time_ns) + 2 * self.search_ps
        histogram = _ps(self.storage_time_ns) + 2 * _ps(HISTOGRAM_MARGIN_NS)
        return max(fourfold, histogram) + 1

    def as_dict(self) -> Dict[str, float]:
        return self.model_dump()


# --- Histograms ---

@dataclass(frozen=True, eq=False)
class Histogram:
    """
    Bins of width bin_width starting at origin + k*bin_width, in ps. Left-closed bins hold
    [start, start + width); right-closed bins hold (start, start + width].
    """
    bin_width_ps: int
    origin_ps: int
    counts: np.ndarray
    label: str = ""
    closed: Literal["left", "right"] = "left"

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise RangeError(f"bin width must be positive, got {self.bin_width_ps} ps")
        counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(counts < 0):
            raise RangeError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_values(cls, values_ps, bin_width_ps: int, origin_ps: int, n_bins: int, label: str = "",
                    closed: Literal["left", "right"] = "left") -> "Histogram":
        values = np.asarray(values_ps, dtype=np.int64)
        if closed == "right":
            # integer ps: (start, start + width] is [start + 1, start + width + 1)
            values = values - 1
        index = np.floor_divide(values - origin_ps, bin_width_ps)
        index = index[(index >= 0) & (index < n_bins)]
        return cls(bin_width_ps, origin_ps, np.bincount(index, minlength=n_bins), label, closed)

    @property
    def bin_starts_ps(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.counts.size, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.bin_width_ps, self.origin_ps, self.counts.size, self.closed) != \
                (other.bin_width_ps, other.origin_ps, other.counts.size, other.closed):
            raise RangeError("cannot add histograms with different binning")
        return Histogram(self.bin_width_ps, self.origin_ps, self.counts + other.counts, self.label, self.closed)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_start_ps": self.bin_starts_ps, "count": self.counts})


def _twofold_binning(windows: CoincidenceWindows) -> Tuple[int, int, int]:
    width = _ps(windows.histogram_bin_ns)
    origin = -_ps(HISTOGRAM_MARGIN_NS)
    n_bins = int(math.ceil((_ps(windows.storage_time_ns) + 2 * _ps(HISTOGRAM_MARGIN_NS)) / width))
    return width, origin, n_bins


# --- Click matching ---

def _channel_codes(events: pd.DataFrame) -> np.ndarray:
    codes = pd.Categorical(events["detector"], categories=CHANNELS).codes
    if np.any(codes < 0):
        raise RangeError(f"unknown detector labels {sorted(set(events['detector'][codes < 0].astype(str)))}")
    return np.asarray(codes)


def _pairs_in_range(signal_t: np.ndarray, idler_t: np.ndarray, lo: int, hi: int) -> Tuple[np.ndarray, np.ndarray]:
    """All index pairs with lo <= signal_t[s] - idler_t[i] <= hi; idler_t must be sorted."""
    left = np.searchsorted(idler_t, signal_t - hi, side="left")
    right = np.searchsorted(idler_t, signal_t - lo, side="right")
    counts = right - left
    s_index = np.repeat(np.arange(signal_t.size), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    i_index = np.repeat(left, counts) + (np.arange(counts.sum()) - starts)
    return s_index, i_index


def _leg_class(delay_ps: np.ndarray, windows: CoincidenceWindows) -> np.ndarray:
    half = _ps(windows.window_ns) / 2
    delay_ps = np.asarray(delay_ps)
    classes = np.full(delay_ps.shape, _UNCLASSIFIED, dtype=np.int8)
    classes[np.abs(delay_ps - _ps(windows.storage_time_ns)) <= half] = _STORED
    classes[np.abs(delay_ps) <= half] = _TRANSMITTED
    return classes


@dataclass(frozen=True)
class FourFold:
    """
    Two detected pairs with one click on each detector. The earlier pair (by idler time) carries the pattern
    (a, b); the later one is (-a, -b) by construction.
    """
    signal_plus_ps: int
    signal_minus_ps: int
    idler_plus_ps: int
    idler_minus_ps: int
    a: int
    b: int
    x: int
    y: int
    delay_ps: int
    first_leg_ps: int
    second_leg_ps: int
    event_class: str

    @property
    def pattern(self) -> Tuple[int, int, int, int]:
        return self.a, self.b, -self.a, -self.b

    @property
    def delay_ns(self) -> float:
        return self.delay_ps / 1000


def classify_fourfold(f: FourFold, windows: CoincidenceWindows | None = None) -> str:
    """Labels each signal leg stored or transmitted from its delay to the idler of the same pair."""
    windows = windows or CoincidenceWindows()
    legs = _leg_class(np.array([f.first_leg_ps, f.second_leg_ps]), windows)
    if np.any(legs == _UNCLASSIFIED):
        raise UnclassifiableError(f"signal legs at {f.first_leg_ps} ps and {f.second_leg_ps} ps match neither peak")
    return EVENT_CLASSES[2 * int(legs[0]) + int(legs[1])]


FOURFOLD_COLUMNS = ("signal_plus_ps", "signal_minus_ps", "idler_plus_ps", "idler_minus_ps", "a", "b", "x", "y",
                    "delay_ps", "first_leg_ps", "second_leg_ps", "event_class", "first_tag", "second_tag")


def empty_fourfolds() -> pd.DataFrame:
    frame = pd.DataFrame({column: pd.Series([], dtype="int64") for column in FOURFOLD_COLUMNS})
    frame["event_class"] = pd.Categorical([], categories=EVENT_CLASSES)
    frame["first_tag"] = pd.Categorical([], categories=LEG_CLASSES)
    frame["second_tag"] = pd.Categorical([], categories=LEG_CLASSES)
    return frame


def fourfold_frame(fourfolds: Sequence[FourFold]) -> pd.DataFrame:
    if not fourfolds:
        return empty_fourfolds()
    frame = pd.DataFrame([f.__dict__ for f in fourfolds])
    frame["event_class"] = pd.Categorical(frame["event_class"], categories=EVENT_CLASSES)
    frame["first_tag"] = pd.Categorical([None] * len(frame), categories=LEG_CLASSES)
    frame["second_tag"] = pd.Categorical([None] * len(frame), categories=LEG_CLASSES)
    return frame


def _as_frame(fourfolds) -> pd.DataFrame:
    if isinstance(fourfolds, FourfoldExtraction):
        return fourfolds.selected
    if isinstance(fourfolds, pd.DataFrame):
        return fourfolds
    return fourfold_frame(list(fourfolds))


def _assemble(events: pd.DataFrame, windows: CoincidenceWindows, diagnostics: Counter) -> pd.DataFrame:
    """Resolved four-folds of one time-ordered chunk, without delay cuts."""
    codes = _channel_codes(events)
    times = events["time_ps"].to_numpy(dtype=np.int64)
    xs = events["setting_x"].to_numpy(dtype=np.int64)
    ys = events["setting_y"].to_numpy(dtype=np.int64)
    if "path_tag" in events:
        tags = np.asarray(pd.Categorical(events["path_tag"], categories=LEG_CLASSES).codes, dtype=np.int8)
    else:
        tags = np.full(times.size, -1, dtype=np.int8)

    signal_rows = np.flatnonzero(codes < 2)
    idler_rows = np.flatnonzero(codes >= 2)
    storage = _ps(windows.storage_time_ns)
    s_local, i_local = _pairs_in_range(times[signal_rows], times[idler_rows], -windows.search_ps,
                                       storage + windows.search_ps)
    s_row, i_row = signal_rows[s_local], idler_rows[i_local]
    if s_row.size < 2:
        return empty_fourfolds()

    order = np.lexsort((s_row, i_row))
    s_row, i_row = s_row[order], i_row[order]
    t_idler = times[i_row]
    legs = times[s_row] - t_idler
    leg_class = _leg_class(legs, windows)
    s_port = codes[s_row]
    i_port = codes[i_row]
    horizon = _ps(windows.conflict_horizon_ns)

    first, second = [], []
    n = s_row.size
    for shift in range(1, n):
        dt = t_idler[shift:] - t_idler[:n - shift]
        near = dt <= horizon
        if not near.any():
            break
        k = np.flatnonzero(near & (s_port[:n - shift] != s_port[shift:]) & (i_port[:n - shift] != i_port[shift:]))
        first.append(k)
        second.append(k + shift)
    if not first:
        return empty_fourfolds()
    first, second = np.concatenate(first), np.concatenate(second)
    if first.size == 0:
        return empty_fourfolds()

    # key = rows of the (s+, s-, i+, i-) clicks
    s_plus = np.where(s_port[first] == 0, s_row[first], s_row[second])
    s_minus = np.where(s_port[first] == 0, s_row[second], s_row[first])
    i_plus = np.where(i_port[first] == 2, i_row[first], i_row[second])
    i_minus = np.where(i_port[first] == 2, i_row[second], i_row[first])
    keys = np.stack([s_plus, s_minus, i_plus, i_minus], axis=1)
    unique_keys, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    valid = (leg_class[first] != _UNCLASSIFIED) & (leg_class[second] != _UNCLASSIFIED)
    n_valid = np.bincount(inverse, weights=valid, minlength=len(unique_keys)).astype(np.int64)
    diagnostics["dropped_ambiguous"] += int(np.count_nonzero(n_valid >= 2))
    diagnostics["unclassifiable"] += int(np.count_nonzero(n_valid == 0))

    chosen = np.flatnonzero(valid & (n_valid[inverse] == 1))
    # a click used by two accepted click sets cannot be attributed to either
    clicks = keys[chosen].reshape(-1)
    values, multiplicity = np.unique(clicks, return_counts=True)
    shared_clicks = values[multiplicity > 1]
    shared = np.isin(keys[chosen], shared_clicks).any(axis=1)
    diagnostics["dropped_ambiguous"] += int(np.count_nonzero(shared))
    chosen = chosen[~shared]

    k, m = first[chosen], second[chosen]
    same_setting = (xs[i_row[k]] == xs[i_row[m]]) & (ys[i_row[k]] == ys[i_row[m]])
    diagnostics["cross_segment"] += int(np.count_nonzero(~same_setting))
    k, m, chosen = k[same_setting], m[same_setting], chosen[same_setting]
    delay = t_idler[m] - t_idler[k]
    positive = delay > 0
    diagnostics["dropped_ambiguous"] += int(np.count_nonzero(~positive))
    k, m, chosen, delay = k[positive], m[positive], chosen[positive], delay[positive]
    if k.size == 0:
        return empty_fourfolds()

    frame = pd.DataFrame({
        "signal_plus_ps": times[keys[chosen, 0]],
        "signal_minus_ps": times[keys[chosen, 1]],
        "idler_plus_ps": times[keys[chosen, 2]],
        "idler_minus_ps": times[keys[chosen, 3]],
        "a": np.where(s_port[k] == 0, 1, -1),
        "b": np.where(i_port[k] == 2, 1, -1),
        "x": xs[i_row[k]],
        "y": ys[i_row[k]],
        "delay_ps": delay,
        "first_leg_ps": legs[k],
        "second_leg_ps": legs[m],
        "event_class": pd.Categorical.from_codes(2 * leg_class[k] + leg_class[m], categories=EVENT_CLASSES),
        "first_tag": pd.Categorical.from_codes(tags[s_row[k]], categories=LEG_CLASSES),
        "second_tag": pd.Categorical.from_codes(tags[s_row[m]], categories=LEG_CLASSES),
    })
    return frame.sort_values(["idler_plus_ps", "idler_minus_ps"], kind="stable").reset_index(drop=True)


def _twofold_pairs(events: pd.DataFrame, windows: CoincidenceWindows) -> Dict[Tuple[str, str], np.ndarray]:
    """Signal-minus-idler delays per (signal, idler) channel pair within the histogram span."""
    codes = _channel_codes(events)
    times = events["time_ps"].to_numpy(dtype=np.int64)
    width, origin, n_bins = _twofold_binning(windows)
    delays = {}
    for s_code, signal in enumerate(SIGNAL_CHANNELS):
        for i_code, idler in enumerate(IDLER_CHANNELS, start=2):
            s_t, i_t = times[codes == s_code], times[codes == i_code]
            s_index, i_index = _pairs_in_range(s_t, i_t, origin, origin + width * n_bins - 1)
            delays[(signal, idler)] = s_t[s_index] - i_t[i_index]
    return delays


# --- Extraction ---

@dataclass
class FourfoldExtraction:
    """Outcome of a pass over a stream: resolved four-folds (uncut), diagnostics and two-fold statistics."""
    frame: pd.DataFrame
    windows: CoincidenceWindows
    diagnostics: Dict[str, int]
    twofold: Dict[Tuple[str, str], Histogram]
    twofold_counts: Dict[str, int]
    events: int = 0
    first_time_ps: Optional[int] = None
    last_time_ps: Optional[int] = None

    @property
    def selected(self) -> pd.DataFrame:
        return select_delays(self.frame, self.windows.min_delay_ns, self.windows.max_delay_ns)

    def __len__(self) -> int:
        return len(self.selected)

    def __iter__(self) -> Iterator[FourFold]:
        return iter(fourfold_records(self.selected))

    def twofold_total(self) -> Histogram:
        histograms = list(self.twofold.values())
        total = histograms[0]
        for h in histograms[1:]:
            total = total + h
        return Histogram(total.bin_width_ps, total.origin_ps, total.counts, "all")

    @property
    def observed_span_s(self) -> float:
        if self.first_time_ps is None:
            return 0.0
        return (self.last_time_ps - self.first_time_ps) / 1e12


def select_delays(frame: pd.DataFrame, min_delay_ns: float, max_delay_ns: float) -> pd.DataFrame:
    delay = frame["delay_ps"]
    return frame[(delay >= _ps(min_delay_ns)) & (delay <= _ps(max_delay_ns))].reset_index(drop=True)


def fourfold_records(frame: pd.DataFrame) -> List[FourFold]:
    fields = FourFold.__dataclass_fields__
    return [
        FourFold(**{name: (str(row[name]) if name == "event_class" else int(row[name])) for name in fields})
        for _, row in frame.iterrows()
    ]


class FourfoldExtractor:
    """
    Incremental four-fold extraction. Chunks fed in time order are processed up to the last event-free gap
    longer than the interaction span, so results do not depend on how the stream is chunked.
    """

    def __init__(self, windows: CoincidenceWindows | None = None):
        self.windows = windows or CoincidenceWindows()
        self.diagnostics: Counter = Counter({key: 0 for key in DIAGNOSTIC_KEYS})
        width, origin, n_bins = _twofold_binning(self.windows)
        self.twofold = {
            (s, i): Histogram(width, origin, np.zeros(n_bins, dtype=np.int64), f"{s}/{i}")
            for s in SIGNAL_CHANNELS for i in IDLER_CHANNELS
        }
        self.twofold_counts = {name: 0 for name in LEG_CLASSES}
        self.events = 0
        self.first_time_ps: Optional[int] = None
        self.last_time_ps: Optional[int] = None
        self._frames: List[pd.DataFrame] = []
        self._pending: Optional[pd.DataFrame] = None

    def feed(self, events: pd.DataFrame) -> None:
        if len(events) == 0:
            return
        times = events["time_ps"].to_numpy(dtype=np.int64)
        if np.any(np.diff(times) < 0) or (self.last_time_ps is not None and times[0] < self.last_time_ps):
            raise RangeError("events must be fed in non-decreasing time order")
        if self.first_time_ps is None:
            self.first_time_ps = int(times[0])
        self.last_time_ps = int(times[-1])
        self.events += len(events)

        buffer = events if self._pending is None else pd.concat([self._pending, events], ignore_index=True)
        buffer_times = buffer["time_ps"].to_numpy(dtype=np.int64)
        gaps = np.flatnonzero(np.diff(buffer_times) > self.windows.span_ps)
        if gaps.size == 0:
            self._pending = buffer
            return
        cut = int(gaps[-1]) + 1
        self._process(buffer.iloc[:cut].reset_index(drop=True))
        self._pending = buffer.iloc[cut:].reset_index(drop=True)

    def finish(self) -> FourfoldExtraction:
        if self._pending is not None and len(self._pending):
            self._process(self._pending)
        self._pending = None
        frames = [f for f in self._frames if len(f)]
        frame = pd.concat(frames, ignore_index=True) if frames else empty_fourfolds()
        logger.info("  %d four-folds before delay cuts, diagnostics %s", len(frame), dict(self.diagnostics))
        return FourfoldExtraction(frame, self.windows, dict(self.diagnostics), dict(self.twofold),
                                  dict(self.twofold_counts), self.events, self.first_time_ps, self.last_time_ps)

    def _process(self, events: pd.DataFrame) -> None:
        width, origin, n_bins = _twofold_binning(self.windows)
        half = _ps(self.windows.twofold_window_ns) / 2
        storage = _ps(self.windows.storage_time_ns)
        for key, delays in _twofold_pairs(events, self.windows).items():
            self.twofold[key] = self.twofold[key] + Histogram.from_values(delays, width, origin, n_bins)
            self.twofold_counts["stored"] += int(np.count_nonzero(np.abs(delays - storage) <= half))
            self.twofold_counts["transmitted"] += int(np.count_nonzero(np.abs(delays) <= half))
        self._frames.append(_assemble(events, self.windows, self.diagnostics))


def _events_of(stream) -> pd.DataFrame:
    return stream.events if hasattr(stream, "events") else stream


def extract_fourfolds(stream, window: float = 5.0, min_delay: float = 5.0, max_delay: float = 50.0,
                      windows: CoincidenceWindows | None = None) -> FourfoldExtraction:
    """
    Finds four-folds in a whole stream (EventStream or events DataFrame). Iterating the result yields the
    FourFolds passing min_delay <= delta_t <= max_delay; `.frame` keeps every resolved four-fold.
    """
    if windows is None:
        windows = CoincidenceWindows(window_ns=window, min_delay_ns=min_delay, max_delay_ns=max_delay)
    extractor = FourfoldExtractor(windows)
    extractor.feed(_events_of(stream))
    return extractor.finish()


def twofold_histogram(stream, signal_channel: str, idler_channel: str, bin_width: float = 0.5,
                      storage_time: float = 50.0) -> Histogram:
    """Histogram of t_signal - t_idler in ns-denominated bins over [-20 ns, storage_time + 20 ns)."""
    if signal_channel not in SIGNAL_CHANNELS or idler_channel not in IDLER_CHANNELS:
        raise RangeError(f"expected a signal and an idler channel, got {signal_channel!r}, {idler_channel!r}")
    windows = CoincidenceWindows(storage_time_ns=storage_time, histogram_bin_ns=bin_width)
    events = _events_of(stream)
    width, origin, n_bins = _twofold_binning(windows)
    if len(events) == 0:
        return Histogram(width, origin, np.zeros(n_bins, dtype=np.int64), f"{signal_channel}/{idler_channel}")
    delays = _twofold_pairs(events, windows)[(signal_channel, idler_channel)]
    return Histogram.from_values(delays, width, origin, n_bins, f"{signal_channel}/{idler_channel}")


def fourfold_delay_histogram(fourfolds, bin_width: float = 5.0, span: float | None = None) -> Histogram:
    """
    Counts versus pair delay in right-closed bins (k*w, (k+1)*w], so that a bin never straddles the
    inclusive max_delay cut. `span` (ns) defaults to covering the largest delay.
    """
    frame = _as_frame(fourfolds)
    width = _ps(bin_width)
    delays = frame["delay_ps"].to_numpy(dtype=np.int64)
    if span is not None:
        n_bins = int(math.ceil(_ps(span) / width))
    else:
        n_bins = int((delays.max() - 1) // width) + 1 if delays.size else 0
    return Histogram.from_values(delays, width, 0, n_bins, "delta_t", closed="right")


def mode_capacity(histogram: Histogram, low: float = 5.0, high: float = 50.0) -> int:
    """
    Occupied 5 ns divisions starting in [low, high) plus one; 0 when none is occupied. On the right-closed
    pair-delay histogram these divisions cover delays in (low, high].
    """
    if histogram.bin_width_ps != _ps(5.0) or (_ps(low) - histogram.origin_ps) % histogram.bin_width_ps:
        raise RangeError("mode capacity needs 5 ns bins aligned to the lower delay cut")
    starts = histogram.bin_starts_ps
    inside = (starts >= _ps(low)) & (starts < _ps(high))
    occupied = int(np.count_nonzero(histogram.counts[inside] > 0))
    return occupied + 1 if occupied else 0


def count_table(fourfolds, event_class: str = "stored-stored") -> CountTable:
    if event_class not in EVENT_CLASSES:
        raise RangeError(f"unknown event class {event_class!r}; expected one of {EVENT_CLASSES}")
    frame = _as_frame(fourfolds)
    frame = frame[frame["event_class"] == event_class]
    counts = np.zeros((2, 2, 2, 2))
    np.add.at(counts, (frame["x"].to_numpy(dtype=np.int64), frame["y"].to_numpy(dtype=np.int64),
                       (frame["a"].to_numpy(dtype=np.int64) == -1).astype(np.int64),
                       (frame["b"].to_numpy(dtype=np.int64) == -1).astype(np.int64)), 1.0)
    return CountTable(counts)


def witness_vs_max_delay(extraction: FourfoldExtraction, event_class: str = "stored-stored",
                         max_delays: Sequence[float] = DEFAULT_DELAY_SCAN_NS) -> List[List[float]]:
    """Rows [max_delay_ns, T, sigma_T] for each cut that leaves a usable table."""
    rows = []
    for max_delay in max_delays:
        if max_delay > extraction.windows.conflict_horizon_ns or max_delay < extraction.windows.min_delay_ns:
            raise RangeError(f"max delay {max_delay} ns outside [{extraction.windows.min_delay_ns}, "
                             f"{extraction.windows.conflict_horizon_ns}] ns")
        table = count_table(select_delays(extraction.frame, extraction.windows.min_delay_ns, max_delay), event_class)
        try:
            value = witness_statistic(table)
        except EmptyDataError:
            continue
        rows.append([float(max_delay), value.T, value.sigma_T])
    return rows
