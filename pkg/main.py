import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from experiments.experiment_runner import run_experiment_async
from experiments.method_registry import MethodRegistryError, baselines
from processors.scma_processor import ScmaError
from utils.config_utils import (
    SCENARIOS,
    ConfigurationError,
    SimulationConfig,
    apply_overrides,
    load_config,
)

# 載入環境變量
load_dotenv()

# 設置日誌
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_INTERRUPTED = 130


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _name_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='isac',
        description='Double-RIS superimposed-pilot ISAC simulations',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py run --config config.example.json --out results.csv
  python main.py run --config config.desk.json --scenario multi-ue --snr-db 5,10,15 --trials 20
  python main.py run --config config.desk.json --methods algorithm1,sbl-ongrid --t1 32,64,128
  python main.py validate-config --config config.example.json
  python main.py list-methods
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    parser.add_argument('--quiet', '-q', action='store_true',
                        help='Only warnings and errors, no progress bar')
    commands = parser.add_subparsers(dest='command')

    run = commands.add_parser('run', help='Run a Monte Carlo sweep and write the CSV')
    run.add_argument('--config', type=str, help='JSON config file (default: $ISAC_CONFIG)')
    run.add_argument('--scenario', choices=SCENARIOS, help='Override the configured scenario')
    run.add_argument('--methods', type=_name_list, help='Comma-separated method names')
    run.add_argument('--snr-db', type=_float_list, help='Comma-separated SNR grid in dB')
    run.add_argument('--t1', type=_int_list, help='Comma-separated fixed-site block lengths')
    run.add_argument('--trials', type=int, help='Trials per sweep point')
    run.add_argument('--seed', type=int, help='Base seed')
    run.add_argument('--threads', type=int, help='Worker threads (default: $ISAC_THREADS)')
    run.add_argument('--out', type=str, default='results.csv', help='CSV output path')
    run.add_argument('--trace', nargs='?', const='trace.jsonl', default=None,
                     help='Write per-iteration JSON-lines traces (default file: trace.jsonl)')

    validate = commands.add_parser('validate-config', help='Check a config file')
    validate.add_argument('--config', type=str, help='JSON config file (default: $ISAC_CONFIG)')

    listing = commands.add_parser('list-methods', help='Show the registered methods')
    listing.add_argument('--config', type=str, help='JSON config file (default: built-in defaults)')
    return parser


def _load(args) -> SimulationConfig:
    config = load_config(args.config)
    if args.command == 'run':
        config = apply_overrides(config, scenario=args.scenario, methods=args.methods,
                                 snr_db=args.snr_db, t1=args.t1, trials=args.trials,
                                 seed=args.seed, trace=bool(args.trace) or None)
    return config


async def command_run(args) -> int:
    config = _load(args)
    baselines(config).select(config.scenario, config.methods)
    result = await run_experiment_async(config, out=args.out, threads=args.threads,
                                        trace_path=args.trace, progress=not args.quiet)
    if result.partial:
        logger.warning(f"⚠️ {result.failed_trials} method trials failed; see the log above")
        return EXIT_PARTIAL
    logger.info(f"✅ Results written to {Path(args.out).resolve()}")
    return EXIT_OK


def command_validate(args) -> int:
    config = _load(args)
    baselines(config).select(config.scenario, config.methods)
    logger.info(f"✅ Config is valid: scenario={config.scenario}, "
                f"{len(config.sweep.snr_db)} SNR points, {config.sweep.trials} trials")
    return EXIT_OK


def command_list(args) -> int:
    config = load_config(args.config) if args.config else SimulationConfig()
    registry = baselines(config)
    for scenario in SCENARIOS:
        print(f"{scenario}:")
        for provider in registry.select(scenario):
            print(f"  {provider.name:<18} {provider.description}")
    return EXIT_OK


async def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point with comprehensive error handling"""
    args = None
    try:
        parser = build_parser()
        args = parser.parse_args(argv)

        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        elif args.quiet:
            logging.getLogger().setLevel(logging.WARNING)

        if args.command is None:
            parser.print_help()
            return EXIT_CONFIG
        if args.command == 'run':
            return await command_run(args)
        if args.command == 'validate-config':
            return command_validate(args)
        return command_list(args)

    except (ConfigurationError, MethodRegistryError, ScmaError) as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        logger.info("Processing interrupted by user")
        return EXIT_INTERRUPTED
    except Exception as e:
        logger.error(f"❌ Unexpected application error: {e}")
        if args is not None and args.verbose:
            logger.exception("Full traceback:")
        return EXIT_CONFIG


if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        logger.info("Application interrupted")
        sys.exit(EXIT_INTERRUPTED)
