import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from entanglement import __version__
from entanglement.certify import SEESAW_RESTARTS, certification_bounds, certify_T, compute_bounds, published_bounds
from entanglement.errors import InputError, NumericalError, SolverError
from entanglement.witness import min_certifying_visibility, predict_T_from_S, predict_T_from_visibility
from entanglement.workflow import analyze_stream, analyze_table, certify_report, run_pipeline, simulate_to_file
from tools.config_tools import format_validation_error, load_config
from tools.io_tools import is_count_table, report_json, write_report

load_dotenv()

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
REPORT_FILE = "report.json"
LOG_FILE = "run.log"


# --- Logging ---

def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper()), stream=sys.stderr, format="%(message)s", force=True)


def attach_sidecar_log(directory: str | Path) -> None:
    """Timestamps live only in this sidecar, never in reports or event files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(directory / LOG_FILE, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)


def emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


# --- Commands ---

def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


def _overrides(args) -> dict:
    overrides = {}
    if args.threads is not None:
        overrides["THREADS"] = str(args.threads)
    if args.seed is not None:
        overrides["RNG_SEED"] = str(args.seed)
    if args.duration_s is not None:
        overrides["DURATION_S"] = repr(float(args.duration_s))
    return overrides


def cmd_simulate(args) -> int:
    out_path = Path(args.out)
    attach_sidecar_log(out_path.parent)
    config = load_config(args.config, overrides=_overrides(args))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    summary = simulate_to_file(config, out_path, progress=args.progress)
    logger.info("  stored two-fold rate %.1f Hz", summary["twofold_rates_hz"]["stored"])
    emit(summary)
    return EXIT_OK


def _window_options(args) -> dict:
    return {
        "window_ns": args.window_ns,
        "min_delay_ns": args.min_delay_ns,
        "max_delay_ns": args.max_delay_ns,
        "twofold_window_ns": args.twofold_window_ns,
    }


def _analyze(path: Path, out_dir: Path, args):
    if is_count_table(path):
        return analyze_table(path)
    return analyze_stream(path, out_dir, **_window_options(args))


def cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    attach_sidecar_log(out_dir)
    report = _analyze(Path(args.input), out_dir, args)
    write_report(report, out_dir / REPORT_FILE)
    print(report_json(report))
    return EXIT_OK


def cmd_certify(args) -> int:
    if args.input is None and args.T is None:
        raise InputError("give a count table, an event stream or --T with --sigma")
    if args.input is not None and args.T is not None:
        raise InputError("give either an input file or --T, not both")

    if args.T is not None:
        if args.sigma is None:
            raise InputError("--T needs --sigma")
        if args.recompute:
            bounds = compute_bounds(restarts=args.restarts, seed=args.seed or 0, threads=_threads(args))
            provenance = "recomputed"
        else:
            bounds = published_bounds()
            provenance = "published"
        ppt_bound, one_pair_bound = certification_bounds(bounds)
        verdict = certify_T(args.T, args.sigma, ppt_bound, one_pair_bound, provenance)
        emit({"verdict": verdict.model_dump(mode="json"), "bounds": [b.model_dump(mode="json") for b in bounds]})
        return EXIT_OK

    out_dir = Path(args.out_dir)
    attach_sidecar_log(out_dir)
    report = _analyze(Path(args.input), out_dir, args)
    report = certify_report(report, recompute=args.recompute, restarts=args.restarts, seed=args.seed or 0,
                            threads=_threads(args))
    write_report(report, out_dir / REPORT_FILE)
    print(report_json(report))
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.chsh is not None:
        predicted = predict_T_from_S(args.chsh)
    else:
        predicted = predict_T_from_visibility(args.visibility)
    emit({
        "predicted_T": predicted,
        "min_certifying_visibility": min_certifying_visibility(),
        "input": {"chsh": args.chsh} if args.chsh is not None else {"visibility": args.visibility},
    })
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.recompute:
        bounds = compute_bounds(restarts=args.restarts, seed=args.seed or 0, threads=_threads(args))
    else:
        bounds = published_bounds()
    emit([b.model_dump(mode="json") for b in bounds])
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out_dir = Path(args.out_dir)
    attach_sidecar_log(out_dir)
    config = load_config(args.config, overrides=_overrides(args))
    state = run_pipeline(out_dir, config=config, recompute=args.recompute, restarts=args.restarts,
                         seed=args.seed or 0, threads=_threads(args), progress=args.progress)
    write_report(state["report"], out_dir / REPORT_FILE)
    print(report_json(state["report"]))
    return EXIT_OK


# --- Parser ---

def _add_window_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--window-ns", type=float, default=None, help="four-fold signal-idler window (default 5)")
    parser.add_argument("--min-delay-ns", type=float, default=None, help="lower pair-delay cut (default 5)")
    parser.add_argument("--max-delay-ns", type=float, default=None, help="upper pair-delay cut (default 50)")
    parser.add_argument("--twofold-window-ns", type=float, default=None, help="two-fold rate window (default 4)")


def _add_bound_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--recompute", action="store_true", help="recompute the bounds by SDP and see-saw")
    parser.add_argument("--restarts", type=int, default=SEESAW_RESTARTS, help="see-saw restarts")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    common.add_argument("--seed", type=int, default=None, help="simulation or see-saw seed")

    parser = argparse.ArgumentParser(prog="app.py", description="Simulate and certify multiplexed entangled pairs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="write a simulated event stream")
    simulate.add_argument("--config", default=None, help="profile in KEY=value format")
    simulate.add_argument("--out", required=True, help="event stream CSV")
    simulate.add_argument("--duration-s", type=float, default=None)
    simulate.add_argument("--progress", action="store_true")
    simulate.set_defaults(handler=cmd_simulate)

    analyze = sub.add_parser("analyze", parents=[common], help="histograms, count tables and witness values")
    analyze.add_argument("input", help="event stream CSV or count table CSV")
    analyze.add_argument("--out-dir", required=True)
    _add_window_flags(analyze)
    analyze.set_defaults(handler=cmd_analyze)

    certify = sub.add_parser("certify", parents=[common], help="certification verdict")
    certify.add_argument("input", nargs="?", default=None, help="count table or event stream CSV")
    certify.add_argument("--T", type=float, default=None, help="witness value instead of an input file")
    certify.add_argument("--sigma", type=float, default=None, help="standard deviation of --T")
    certify.add_argument("--out-dir", default="certify_out")
    _add_window_flags(certify)
    _add_bound_flags(certify)
    certify.set_defaults(handler=cmd_certify)

    predict = sub.add_parser("predict", parents=[common], help="witness value expected for a Werner-state source")
    group = predict.add_mutually_exclusive_group(required=True)
    group.add_argument("--visibility", type=float)
    group.add_argument("--chsh", type=float)
    predict.set_defaults(handler=cmd_predict)

    bounds = sub.add_parser("bounds", parents=[common], help="certification bounds")
    _add_bound_flags(bounds)
    bounds.set_defaults(handler=cmd_bounds)

    pipeline = sub.add_parser("pipeline", parents=[common], help="simulate, analyze and certify in one run")
    pipeline.add_argument("--config", default=None)
    pipeline.add_argument("--out-dir", required=True)
    pipeline.add_argument("--duration-s", type=float, default=None)
    pipeline.add_argument("--progress", action="store_true")
    _add_bound_flags(pipeline)
    pipeline.set_defaults(handler=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error("invalid input: %s", format_validation_error(e))
        return EXIT_INPUT
    except InputError as e:
        logger.error("input error: %s", e)
        return EXIT_INPUT
    except SolverError as e:
        logger.error("solver failure (status %s, best bound %s): %s", e.status, e.best_bound, e)
        return EXIT_NUMERICAL
    except NumericalError as e:
        logger.error("numerical error: %s", e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
