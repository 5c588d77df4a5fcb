import logging
import os
from pathlib import Path
from typing import Dict, Literal, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from entanglement.errors import ConfigError
from entanglement.witness import SettingsPair

load_dotenv()

logger = logging.getLogger(__name__)

ENV_PREFIX = "ENTANGLEMENT_"

CHANNELS = ("s+", "s-", "i+", "i-")
CHANNEL_KEYS = {"s+": "S_PLUS", "s-": "S_MINUS", "i+": "I_PLUS", "i-": "I_MINUS"}
DETECTOR_FIELDS = {"EFFICIENCY": "efficiency", "DEAD_TIME_NS": "dead_time_ns", "JITTER_PS": "jitter_ps"}
SETTING_KEYS = {"ALICE_0": ("alice", 0), "ALICE_1": ("alice", 1), "BOB_0": ("bob", 0), "BOB_1": ("bob", 1)}

# mu giving ~200 Hz stored two-folds with the default efficiencies, see analysis/calibrate_mu.py
CALIBRATED_MU = 0.00095


class DetectorSpec(BaseModel):
    """
    One single-photon detector.

    Attributes:
        efficiency (float): Click probability per arriving photon.
        dead_time_ns (float): Non-paralyzable dead time after an accepted click.
        jitter_ps (float): Standard deviation of the Gaussian timing jitter, truncated at 5 sigma.
    """
    model_config = ConfigDict(frozen=True)

    efficiency: float = Field(ge=0.0, le=1.0)
    dead_time_ns: float = Field(ge=0.0)
    jitter_ps: float = Field(ge=0.0)


def _default_detectors() -> Dict[str, DetectorSpec]:
    signal = DetectorSpec(efficiency=0.40, dead_time_ns=1000.0, jitter_ps=400.0)
    idler = DetectorSpec(efficiency=0.75, dead_time_ns=100.0, jitter_ps=300.0)
    return {"s+": signal, "s-": signal, "i+": idler, "i-": idler}


class ExperimentConfig(BaseModel):
    """
    Every parameter of a simulated acquisition. Defaults reproduce the reference experiment.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    pump_rep_rate_hz: float = Field(1e7, gt=0.0)
    pulse_width_ns: float = Field(50.0, gt=0.0)
    mean_pairs_per_pulse: float = Field(CALIBRATED_MU, ge=0.0)
    visibility: float = Field(0.912, ge=0.0, le=1.0)
    coherence_time_ns: float = Field(1.9, gt=0.0)
    memory_efficiency: float = Field(0.07, ge=0.0, le=1.0)
    transmission_prob: float = Field(0.20, ge=0.0, le=1.0)
    storage_time_ns: float = Field(50.0, ge=0.0)
    detectors: Dict[str, DetectorSpec] = Field(default_factory=_default_detectors)
    settings: SettingsPair = Field(default_factory=SettingsPair)
    duration_s: float = Field(1.0, ge=0.0)
    rng_seed: int = Field(1, ge=0, lt=2 ** 64)
    pulse_sampling: Literal["all", "multi_pair"] = "all"
    block_pulses: int = Field(2 ** 24, gt=0)
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        if set(self.detectors) != set(CHANNELS):
            raise ValueError(f"detectors must be given for exactly {CHANNELS}, got {sorted(self.detectors)}")
        if self.memory_efficiency + self.transmission_prob > 1.0 + 1e-12:
            raise ValueError(
                f"memory_efficiency + transmission_prob = {self.memory_efficiency + self.transmission_prob} exceeds 1"
            )
        if self.period_ps < self.pulse_width_ps:
            raise ValueError(f"pump period {self.period_ps} ps is shorter than the pulse width {self.pulse_width_ps} ps")
        if self.pulse_width_ns > self.storage_time_ns:
            logger.warning("pulse width %.1f ns exceeds the storage time %.1f ns", self.pulse_width_ns,
                           self.storage_time_ns)
        return self

    @property
    def period_ps(self) -> int:
        return int(round(1e12 / self.pump_rep_rate_hz))

    @property
    def pulse_width_ps(self) -> int:
        return int(round(self.pulse_width_ns * 1000))

    @property
    def storage_ps(self) -> int:
        return int(round(self.storage_time_ns * 1000))

    def dead_time_ps(self, channel: str) -> int:
        return int(round(self.detectors[channel].dead_time_ns * 1000))

    @property
    def pulses_per_segment(self) -> int:
        return int(self.duration_s * self.pump_rep_rate_hz) // 4


# --- Flat key=value mapping ---

_SCALAR_KEYS = {
    "PUMP_REP_RATE_HZ": "pump_rep_rate_hz",
    "PULSE_WIDTH_NS": "pulse_width_ns",
    "MEAN_PAIRS_PER_PULSE": "mean_pairs_per_pulse",
    "VISIBILITY": "visibility",
    "COHERENCE_TIME_NS": "coherence_time_ns",
    "MEMORY_EFFICIENCY": "memory_efficiency",
    "TRANSMISSION_PROB": "transmission_prob",
    "STORAGE_TIME_NS": "storage_time_ns",
    "DURATION_S": "duration_s",
    "RNG_SEED": "rng_seed",
    "PULSE_SAMPLING": "pulse_sampling",
    "BLOCK_PULSES": "block_pulses",
    "THREADS": "threads",
}


def _components(key: str, text: str) -> tuple:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated Bloch components, got {text!r}") from None


def config_from_flat(values: Mapping[str, Optional[str]]) -> ExperimentConfig:
    """Validates flat KEY=value pairs into an ExperimentConfig; unknown keys are rejected."""
    fields: dict = {}
    detectors = {channel: spec.model_dump() for channel, spec in _default_detectors().items()}
    settings = SettingsPair().model_dump()
    settings = {"alice": list(settings["alice"]), "bob": list(settings["bob"]), "idler_frame": settings["idler_frame"]}
    unknown = []

    for key, raw in values.items():
        key = key.strip().upper()
        if raw is None:
            raise ConfigError(f"{key}: missing value")
        value = raw.strip()
        if key in _SCALAR_KEYS:
            fields[_SCALAR_KEYS[key]] = value
        elif key in SETTING_KEYS:
            party, index = SETTING_KEYS[key]
            settings[party][index] = _components(key, value)
        elif key == "IDLER_FRAME":
            settings["idler_frame"] = value
        elif key.startswith("DETECTOR_"):
            channel = next((c for c, name in CHANNEL_KEYS.items() if key.startswith(f"DETECTOR_{name}_")), None)
            suffix = key.removeprefix(f"DETECTOR_{CHANNEL_KEYS[channel]}_") if channel else None
            if suffix not in DETECTOR_FIELDS:
                unknown.append(key)
                continue
            detectors[channel][DETECTOR_FIELDS[suffix]] = value
        else:
            unknown.append(key)

    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    try:
        return ExperimentConfig(**fields, detectors=detectors, settings=settings)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def format_validation_error(error: ValidationError) -> str:
    """One line per offending field, e.g. 'visibility: Input should be less than or equal to 1'."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def _format_number(value) -> str:
    return str(value) if isinstance(value, int) else repr(float(value))


def config_to_flat(config: ExperimentConfig) -> Dict[str, str]:
    """Inverse of config_from_flat; the echo written next to a stream is this mapping."""
    flat = {}
    for key, field in _SCALAR_KEYS.items():
        value = getattr(config, field)
        flat[key] = value if isinstance(value, str) else _format_number(value)
    for channel in CHANNELS:
        spec = config.detectors[channel]
        for suffix, field in DETECTOR_FIELDS.items():
            flat[f"DETECTOR_{CHANNEL_KEYS[channel]}_{suffix}"] = _format_number(getattr(spec, field))
    for key, (party, index) in SETTING_KEYS.items():
        flat[key] = ",".join(repr(float(c)) for c in getattr(config.settings, party)[index])
    flat["IDLER_FRAME"] = config.settings.idler_frame
    return flat


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | None = None,
                use_environment: bool = True) -> ExperimentConfig:
    """
    Reads a profile, then applies ENTANGLEMENT_<KEY> environment variables, then explicit overrides.

    Args:
        path (str | Path | None): Profile in KEY=value format. None starts from the built-in defaults.
        overrides (Mapping[str, str] | None): Highest-priority KEY=value pairs, e.g. from CLI flags.
        use_environment (bool): Whether to honour ENTANGLEMENT_ prefixed environment variables.

    Returns:
        ExperimentConfig: The validated configuration.
    """
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"configuration file {path} does not exist")
        values.update(dotenv_values(path))
        logger.info("  loaded %d keys from %s", len(values), path)
    if use_environment:
        for key, value in os.environ.items():
            if key.startswith(ENV_PREFIX):
                values[key.removeprefix(ENV_PREFIX)] = value
    if overrides:
        values.update({key: str(value) for key, value in overrides.items()})
    return config_from_flat(values)
