import logging
from pathlib import Path
from typing import Any, Dict, TypedDict

from langgraph.graph import END, START, StateGraph

from entanglement.certify import SEESAW_RESTARTS, certification_bounds, certify, compute_bounds, published_bounds
from entanglement.errors import EmptyDataError
from entanglement.state import ClassResult, RunReport
from entanglement.witness import CountTable, SettingsPair, witness_statistic
from tools.coincidence_tools import (EVENT_CLASSES, CoincidenceWindows, FourfoldExtraction, FourfoldExtractor,
                                     count_table, fourfold_delay_histogram, mode_capacity, witness_vs_max_delay)
from tools.config_tools import CHANNEL_KEYS, ExperimentConfig, config_from_flat, config_to_flat
from tools.io_tools import (config_echo_path, read_config_echo, read_count_table, read_events, write_config_echo,
                            write_events, write_histogram)
from tools.simulation_tools import SimulationStatistics, iter_event_blocks

logger = logging.getLogger(__name__)

EVENTS_FILE = "events.csv"
TABLE_CLASS = "table"
CERTIFIED_CLASS = "stored-stored"
SCANNED_CLASSES = ("stored-stored", "transmitted-transmitted")


class PipelineState(TypedDict, total=False):
    """
    State passed between the simulate, analyze and certify nodes.

    Attributes:
        config (ExperimentConfig): Simulation parameters; present when the run starts from a simulation.
        stream_path (str): Event stream CSV to analyze, written by simulate or given by the user.
        table_path (str): Count table CSV, which skips the simulate and analyze stages.
        out_dir (str): Directory receiving events, histograms and the report.
        windows (CoincidenceWindows): Analysis windows and delay cuts.
        recompute (bool): Recompute the certification bounds instead of using the shipped constants.
        restarts (int): See-saw restarts when recomputing.
        seed (int): See-saw seed when recomputing.
        threads (int): Worker threads for simulation blocks and see-saw restarts.
        progress (bool): Show tqdm progress bars.
        simulation (Dict[str, Any]): Summary of the simulate stage.
        report (RunReport): Report built by analyze and completed by certify.
    """
    config: ExperimentConfig
    stream_path: str
    table_path: str
    out_dir: str
    windows: CoincidenceWindows
    recompute: bool
    restarts: int
    seed: int
    threads: int
    progress: bool
    simulation: Dict[str, Any]
    report: RunReport


# --- Stage functions ---

def simulate_to_file(config: ExperimentConfig, out_path: str | Path, windows: CoincidenceWindows | None = None,
                     progress: bool = False) -> Dict[str, Any]:
    """Streams a simulation into a CSV plus config echo and returns its summary (two-fold rates, live fractions)."""
    logger.info("---SIMULATE---")
    out_path = Path(out_path)
    windows = windows or CoincidenceWindows(storage_time_ns=config.storage_time_ns)
    extractor = FourfoldExtractor(windows)
    statistics = SimulationStatistics()

    def blocks():
        for block in iter_event_blocks(config, statistics, progress):
            extractor.feed(block)
            yield block

    rows = write_events(blocks(), out_path)
    write_config_echo(config_to_flat(config), config_echo_path(out_path))
    extraction = extractor.finish()
    logger.info("  %d events written to %s", rows, out_path)

    duration = config.duration_s
    return {
        "events": rows,
        "pairs": statistics.pairs,
        "pulses_with_pairs": statistics.pulses_with_pairs,
        "stored_signals": statistics.stored_signals,
        "transmitted_signals": statistics.transmitted_signals,
        "live_fractions": statistics.live_fractions(),
        "twofold_rates_hz": _rates(extraction, duration),
        "stored_fourfolds": int((extraction.selected["event_class"] == CERTIFIED_CLASS).sum()),
        "events_path": str(out_path),
        "config_path": str(config_echo_path(out_path)),
    }


def _rates(extraction: FourfoldExtraction, duration_s: float) -> Dict[str, float]:
    if duration_s <= 0:
        return {name: 0.0 for name in extraction.twofold_counts}
    return {name: count / duration_s for name, count in extraction.twofold_counts.items()}


def _class_result(table: CountTable) -> ClassResult:
    try:
        witness = witness_statistic(table)
    except EmptyDataError:
        witness = None
    return ClassResult(fourfolds=int(table.total), table=table.records(), witness=witness)


def analyze_table(table_path: str | Path) -> RunReport:
    logger.info("---ANALYZE---")
    table = read_count_table(table_path)
    result = _class_result(table)
    if result.witness is None:
        raise EmptyDataError(f"count table {table_path} holds no four-folds")
    logger.info("  T = %.4f +- %.4f from %d four-folds", result.witness.T, result.witness.sigma_T, result.fourfolds)
    return RunReport(source=Path(table_path).name, classes={TABLE_CLASS: result})


def make_windows(storage_time_ns: float = 50.0, **overrides) -> CoincidenceWindows:
    """Default windows for a storage time, with any field overridden; unset (None) overrides are ignored."""
    values = {"storage_time_ns": storage_time_ns}
    values.update({key: value for key, value in overrides.items() if value is not None})
    return CoincidenceWindows(**values)


def analyze_stream(stream_path: str | Path, out_dir: str | Path, windows: CoincidenceWindows | None = None,
                   **window_overrides) -> RunReport:
    """
    Reduces an event stream to two-fold and pair-delay histograms, per-class count tables, witness values,
    the mode capacity and the witness versus maximum delay. Histograms are written as CSV into `out_dir`.
    """
    logger.info("---ANALYZE---")
    stream_path, out_dir = Path(stream_path), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = read_config_echo(stream_path)
    config = config_from_flat(echo) if echo else None
    if windows is None:
        windows = make_windows(config.storage_time_ns if config else 50.0, **window_overrides)

    extractor = FourfoldExtractor(windows)
    for chunk in read_events(stream_path):
        extractor.feed(chunk)
    extraction = extractor.finish()
    if extraction.events == 0:
        raise EmptyDataError(f"event stream {stream_path} contains no events")
    logger.info("  %d events, %d four-folds after delay cuts", extraction.events, len(extraction))

    selected = extraction.selected
    classes = {name: _class_result(count_table(selected, name)) for name in EVENT_CLASSES}
    for name, result in classes.items():
        if result.witness is not None:
            logger.info("  %s: T = %.4f +- %.4f (%d four-folds)", name, result.witness.T, result.witness.sigma_T,
                        result.fourfolds)

    stored = extraction.frame[extraction.frame["event_class"] == CERTIFIED_CLASS]
    delay_histogram = fourfold_delay_histogram(stored, bin_width=5.0, span=windows.conflict_horizon_ns)
    histograms = {"twofold": "twofold_histogram.csv", "delta_t": "delta_t_histogram.csv"}
    write_histogram(extraction.twofold_total(), out_dir / histograms["twofold"])
    write_histogram(delay_histogram, out_dir / histograms["delta_t"])
    for (signal, idler), histogram in extraction.twofold.items():
        name = f"twofold_{CHANNEL_KEYS[signal].lower()}_{CHANNEL_KEYS[idler].lower()}"
        histograms[name] = f"{name}.csv"
        write_histogram(histogram, out_dir / histograms[name])

    duration = config.duration_s if config else extraction.observed_span_s
    return RunReport(
        source=stream_path.name,
        seed=config.rng_seed if config else None,
        config=echo,
        non_standard_settings=bool(config and not config.settings.is_standard()),
        windows_ns=windows.as_dict(),
        classes=classes,
        histograms=histograms,
        mode_capacity=mode_capacity(delay_histogram),
        twofold_rates_hz=_rates(extraction, duration),
        delay_scan={name: witness_vs_max_delay(extraction, name) for name in SCANNED_CLASSES},
        diagnostics=extraction.diagnostics,
    )


def certify_report(report: RunReport, recompute: bool = False, settings: SettingsPair | None = None,
                   restarts: int = SEESAW_RESTARTS, seed: int = 0, threads: int = 1) -> RunReport:
    """
    Adds the verdict for the certified class (stored-stored, or the table input) and the bounds used.
    Without explicit settings, recomputed bounds use the settings of the report's config echo.
    """
    logger.info("---CERTIFY---")
    if settings is None and report.config:
        settings = config_from_flat(report.config).settings
    name = TABLE_CLASS if TABLE_CLASS in report.classes else CERTIFIED_CLASS
    result = report.classes.get(name)
    if result is None or result.witness is None:
        raise EmptyDataError(f"no {name} four-folds to certify")

    if recompute:
        bounds = compute_bounds(settings, restarts=restarts, seed=seed, threads=threads)
        ppt_bound, one_pair_bound = certification_bounds(bounds)
        provenance = "recomputed"
    else:
        if report.non_standard_settings:
            logger.warning("  published bounds assume the standard settings; rerun with --recompute")
        bounds = published_bounds()
        ppt_bound, one_pair_bound = certification_bounds(bounds)
        provenance = "published"

    verdict = certify(result.witness, ppt_bound, one_pair_bound, provenance)
    logger.info("  %s at %.2f sigma", verdict.level, verdict.margin_sigmas)
    return report.model_copy(update={"verdict": verdict, "bounds": bounds})


# --- Nodes ---

def simulate_node(state: PipelineState) -> dict:
    stream_path = Path(state["out_dir"]) / EVENTS_FILE
    summary = simulate_to_file(state["config"], stream_path, state.get("windows"), state.get("progress", False))
    return {"stream_path": str(stream_path), "simulation": summary}


def analyze_node(state: PipelineState) -> dict:
    if state.get("table_path"):
        return {"report": analyze_table(state["table_path"])}
    return {"report": analyze_stream(state["stream_path"], state["out_dir"], state.get("windows"))}


def certify_node(state: PipelineState) -> dict:
    config = state.get("config")
    report = certify_report(
        state["report"],
        recompute=state.get("recompute", False),
        settings=config.settings if config else None,
        restarts=state.get("restarts", SEESAW_RESTARTS),
        seed=state.get("seed", 0),
        threads=state.get("threads", 1),
    )
    return {"report": report}


def route_entry(state: PipelineState) -> str:
    if state.get("config") is not None and not state.get("stream_path"):
        return "simulate"
    return "analyze"


def create_workflow():
    workflow = StateGraph(PipelineState)
    workflow.add_node("simulate", simulate_node)
    workflow.add_node("analyze", analyze_node)
    workflow.add_node("certify", certify_node)
    workflow.add_conditional_edges(START, route_entry, {"simulate": "simulate", "analyze": "analyze"})
    workflow.add_edge("simulate", "analyze")
    workflow.add_edge("analyze", "certify")
    workflow.add_edge("certify", END)
    return workflow.compile()


def run_pipeline(out_dir: str | Path, config: ExperimentConfig | None = None, stream_path: str | None = None,
                 table_path: str | None = None, **options) -> PipelineState:
    """simulate -> analyze -> certify; starts from whichever input is given."""
    state: PipelineState = {"out_dir": str(out_dir), **options}
    if config is not None:
        state["config"] = config
    if stream_path:
        state["stream_path"] = str(stream_path)
    if table_path:
        state["table_path"] = str(table_path)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    return create_workflow().invoke(state)
