"""
Calibrates the mean number of pairs per pulse against a target stored two-fold rate.

The analytic estimate ignores dead time and accidentals:
    rate = rep_rate * mu * memory_efficiency * signal_efficiency * idler_efficiency
A short simulation then measures the rate the analysis actually reports.

    python analysis/calibrate_mu.py --config profiles/reference.env --target-hz 200 --check-s 4
"""
import argparse
import json
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from tools.coincidence_tools import CoincidenceWindows, FourfoldExtractor  # noqa: E402
from tools.config_tools import ExperimentConfig, config_to_flat, load_config  # noqa: E402
from tools.io_tools import write_config_echo  # noqa: E402
from tools.simulation_tools import iter_event_blocks  # noqa: E402

logger = logging.getLogger("calibrate_mu")


def analytic_mu(config: ExperimentConfig, target_hz: float) -> float:
    signal = (config.detectors["s+"].efficiency + config.detectors["s-"].efficiency) / 2
    idler = (config.detectors["i+"].efficiency + config.detectors["i-"].efficiency) / 2
    per_pair = config.pump_rep_rate_hz * config.memory_efficiency * signal * idler
    if per_pair <= 0:
        raise ValueError("no stored two-folds are possible with these efficiencies")
    return target_hz / per_pair


def measured_rate(config: ExperimentConfig) -> float:
    extractor = FourfoldExtractor(CoincidenceWindows(storage_time_ns=config.storage_time_ns))
    for block in iter_event_blocks(config):
        extractor.feed(block)
    extraction = extractor.finish()
    return extraction.twofold_counts["stored"] / config.duration_s


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", default=None)
    parser.add_argument("--target-hz", type=float, default=200.0)
    parser.add_argument("--check-s", type=float, default=4.0, help="simulated seconds for the check (0 skips it)")
    parser.add_argument("--write", default=None, help="write the calibrated profile here")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    config = load_config(args.config)
    mu = analytic_mu(config, args.target_hz)
    calibrated = config.model_copy(update={"mean_pairs_per_pulse": mu})
    logger.info("---CALIBRATE---")
    logger.info("  analytic mu = %.6g for %.1f Hz", mu, args.target_hz)
    result = {"mean_pairs_per_pulse": mu, "target_hz": args.target_hz}

    if args.check_s > 0:
        check = calibrated.model_copy(update={"duration_s": args.check_s, "pulse_sampling": "all"})
        result["simulated_hz"] = measured_rate(check)
        logger.info("  simulated stored two-fold rate %.1f Hz over %.1f s", result["simulated_hz"], args.check_s)

    if args.write:
        write_config_echo(config_to_flat(calibrated), args.write)
        result["profile"] = args.write
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
