from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from entanglement import __version__

SCHEMA_VERSION = "1"

CertificationLevel = Literal["none", "at_least_one_pair", "more_than_one_pair"]
Provenance = Literal["published", "recomputed"]


class WitnessValue(BaseModel):
    """
    The restricted-count witness statistic together with its propagated uncertainty.

    Attributes:
        T (float): Witness value (C00 + C01 + C10 - C11) / N.
        sigma_T (float): One standard deviation from first-order Poisson propagation.
        correlators (Tuple[float, ...]): Normalized correlators C_xy / N in the order 00, 01, 10, 11.
        correlator_sigmas (Tuple[float, ...]): Propagated uncertainties of the normalized correlators,
                                               computed through the global N.
        raw_correlators (Tuple[float, ...]): Unnormalized correlators sum_ab ab N_ab|xy.
        normalization (float): N = 1/4 of the total four-fold count.
        total (float): Total number of four-folds in the table.
    """
    model_config = ConfigDict(frozen=True)

    T: float
    sigma_T: float = Field(ge=0.0)
    correlators: Tuple[float, float, float, float]
    correlator_sigmas: Tuple[float, float, float, float]
    raw_correlators: Tuple[float, float, float, float]
    normalization: float
    total: float

    @field_validator("correlators")
    @classmethod
    def _loose_cap(cls, values):
        if any(abs(v) > 4.0 + 1e-9 for v in values):
            raise ValueError(f"normalized correlators {values} exceed the algebraic cap of 4")
        return values


class CertificationVerdict(BaseModel):
    """
    Outcome of comparing a witness value with the certification bounds.

    Attributes:
        level (CertificationLevel): none, at_least_one_pair or more_than_one_pair.
        margin_sigmas (float): (T - relevant bound) / sigma_T. The relevant bound is the one-pair bound for
                               more_than_one_pair and the PPT bound otherwise.
        T (float): The witness value that was certified.
        sigma_T (float): Its standard deviation.
        ppt_bound (float): Bound on T for PPT (hence separable) states.
        one_pair_bound (float): Bound on T for states holding at most one entangled pair.
        provenance (Provenance): Whether the bounds are the shipped published constants or were recomputed.
    """
    model_config = ConfigDict(frozen=True)

    level: CertificationLevel
    margin_sigmas: float
    T: float
    sigma_T: float
    ppt_bound: float
    one_pair_bound: float
    provenance: Provenance = "published"


class BoundReport(BaseModel):
    """
    One certification bound as printed by `bounds` and embedded in run reports.

    Attributes:
        constraint (str): State set the bound refers to (ppt, schmidt_2, one_pair, separable, ...).
        bound (float): Value of the bound on T.
        gap (float): Duality gap of the final solve, or the spread for see-saw values.
        method (str): fractional_sdp, bisection, seesaw or published.
        iterations (int): Interior-point iterations (or restarts for see-saw).
        published (Optional[float]): Published value for the same constraint, when one exists.
        flagged (bool): True when the computed value disagrees with the published one beyond tolerance.
        note (str): Free-form remark on the provenance of the value.
    """
    constraint: str
    bound: float
    gap: float = 0.0
    method: str
    iterations: int = 0
    published: Optional[float] = None
    flagged: bool = False
    note: str = ""


class ClassResult(BaseModel):
    """
    Per-event-class outcome of an analysis.

    Attributes:
        fourfolds (int): Number of four-folds in the class after the delay cuts.
        table (List[List]): Count table rows [x, y, a, b, count].
        witness (Optional[WitnessValue]): Witness value, absent when the table is empty.
    """
    fourfolds: int
    table: List[List]
    witness: Optional[WitnessValue] = None


class RunReport(BaseModel):
    """
    Machine-readable result of an `analyze` or `certify` run. Contains no wall-clock data so that reruns
    are byte-identical; timings go to the sidecar log.

    Attributes:
        schema_version (str): Report schema version.
        tool_version (str): Package version that produced the report.
        source (str): Input file name the numbers trace to.
        seed (Optional[int]): RNG seed of the simulation, when the input came with a config echo.
        config (Optional[Dict[str, str]]): Config echo of the simulation, when available.
        non_standard_settings (bool): True when measurement settings differ from the default CHSH-optimal ones.
        windows_ns (Dict[str, float]): Coincidence windows and delay cuts used by the analysis.
        classes (Dict[str, ClassResult]): Results per four-fold event class.
        verdict (Optional[CertificationVerdict]): Certification of the stored class (or of the table input).
        bounds (List[BoundReport]): Bounds used for the verdict.
        histograms (Dict[str, str]): Histogram CSV files written next to the report.
        mode_capacity (Optional[int]): Number of distinguishable temporal modes in the stored class.
        twofold_rates_hz (Dict[str, float]): Two-fold coincidence rates per class.
        delay_scan (Dict[str, List[List[float]]]): Witness value versus maximum delay, rows [max_delay_ns, T, sigma_T].
        diagnostics (Dict[str, int]): Dropped and unclassifiable event tallies.
    """
    schema_version: str = SCHEMA_VERSION
    tool_version: str = __version__
    source: str
    seed: Optional[int] = None
    config: Optional[Dict[str, str]] = None
    non_standard_settings: bool = False
    windows_ns: Dict[str, float] = Field(default_factory=dict)
    classes: Dict[str, ClassResult] = Field(default_factory=dict)
    verdict: Optional[CertificationVerdict] = None
    bounds: List[BoundReport] = Field(default_factory=list)
    histograms: Dict[str, str] = Field(default_factory=dict)
    mode_capacity: Optional[int] = None
    twofold_rates_hz: Dict[str, float] = Field(default_factory=dict)
    delay_scan: Dict[str, List[List[float]]] = Field(default_factory=dict)
    diagnostics: Dict[str, int] = Field(default_factory=dict)
