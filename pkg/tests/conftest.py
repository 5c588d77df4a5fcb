import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from entanglement.witness import SettingsPair
from tools.config_tools import CHANNELS, DetectorSpec, ExperimentConfig
from tools.io_tools import read_count_table
from tools.simulation_tools import PATH_TAGS

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
PROFILES = ROOT / "profiles"


@pytest.fixture
def stored_table_path() -> Path:
    return FIXTURES / "stored_counts.csv"


@pytest.fixture
def transmitted_table_path() -> Path:
    return FIXTURES / "transmitted_counts.csv"


@pytest.fixture
def stored_table(stored_table_path):
    return read_count_table(stored_table_path)


@pytest.fixture
def transmitted_table(transmitted_table_path):
    return read_count_table(transmitted_table_path)


@pytest.fixture
def default_settings() -> SettingsPair:
    return SettingsPair()


@pytest.fixture(autouse=True)
def _isolated_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith("ENTANGLEMENT_"):
            monkeypatch.delenv(key, raising=False)


def make_events(rows) -> pd.DataFrame:
    """
    Builds a time-ordered event frame from (time_ns, detector, x, y) or (time_ns, detector, x, y, path_tag) rows.
    The pulse index is derived from a 100 ns pump period.
    """
    rows = sorted(rows, key=lambda row: (row[0], CHANNELS.index(row[1])))
    times = np.array([int(round(row[0] * 1000)) for row in rows], dtype=np.int64)
    return pd.DataFrame({
        "time_ps": times,
        "detector": pd.Categorical([row[1] for row in rows], categories=CHANNELS),
        "pulse_index": times // 100_000,
        "setting_x": np.array([row[2] for row in rows], dtype=np.int8),
        "setting_y": np.array([row[3] for row in rows], dtype=np.int8),
        "path_tag": pd.Categorical([row[4] if len(row) > 4 else None for row in rows], categories=PATH_TAGS),
    })


def fourfold_rows(t0_ns: float, delay_ns: float, first=("stored", "s+", "i+"), second=("stored", "s-", "i-"),
                  x: int = 0, y: int = 0, second_setting=None):
    """Two detected pairs whose idlers are `delay_ns` apart; each leg is stored (+50 ns) or transmitted (+0)."""
    rows = []
    for start, (path, signal, idler), setting in ((t0_ns, first, (x, y)),
                                                  (t0_ns + delay_ns, second, second_setting or (x, y))):
        offset = 50.0 if path == "stored" else 0.0
        rows.append((start, idler, *setting))
        rows.append((start + offset, signal, *setting, path))
    return rows


@pytest.fixture
def events_builder():
    return make_events


def ideal_detectors(efficiency: float = 1.0, dead_time_ns: float = 0.0, jitter_ps: float = 0.0):
    spec = DetectorSpec(efficiency=efficiency, dead_time_ns=dead_time_ns, jitter_ps=jitter_ps)
    return {channel: spec for channel in CHANNELS}


@pytest.fixture
def fast_config() -> ExperimentConfig:
    """A short run with enough pairs to exercise every code path in well under a second."""
    return ExperimentConfig(mean_pairs_per_pulse=0.05, duration_s=0.01, rng_seed=11)
