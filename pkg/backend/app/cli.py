"""
Command-line entry point.

    python -m app.cli protocol --config pair.json --theta pi-mm
    python -m app.cli verify-bound --config pair.json --trials 10000 --seed 7
    python -m app.cli chain --config chain.json --strategy random --trials 1000
    python -m app.cli optimize --lambda 0.5 0.3 0.2 --eta 0.5 0.3 0.2 --restarts 8
    python -m app.cli concurrence --config state.json
    python -m app.cli serve

Exit codes: 0 success, 1 parse or validation error, 2 bound violation,
3 internal invariant failure.
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config import settings
from app.errors import InvalidStateError, InvariantViolation
from app.models import ChainConfig, ConcurrenceConfig, OptimizeConfig, ProtocolConfig, RunReport, VerifyBoundConfig
from app.services.run_service import csv_rows, run_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_VIOLATION = 2
EXIT_INVARIANT = 3

CONFIG_MODELS = {
    "protocol": ProtocolConfig,
    "verify-bound": VerifyBoundConfig,
    "chain": ChainConfig,
    "optimize": OptimizeConfig,
    "concurrence": ConcurrenceConfig,
}

# flag destination -> config field
OVERRIDES = {
    "theta": "theta",
    "trials": "trials",
    "seed": "seed",
    "restarts": "restarts",
    "plan": "plan",
    "strategy": "strategy",
    "lam": "lambda",
    "eta": "eta",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="red-sim",
        description="Remote entanglement distribution and remote state preparation simulator",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser, config_required: bool = True) -> None:
        sub.add_argument("--config", required=config_required, help="JSON input document")
        sub.add_argument("--out", help="write the JSON report here instead of stdout")
        sub.add_argument("--csv", nargs="?", const="-", help="also write per-sample CSV rows (path or stdout)")

    protocol = subparsers.add_parser("protocol", help="run the remote-preparation protocol")
    add_common(protocol)
    protocol.add_argument("--theta", help="pi-mm | fourier | zero | paper-2x2 | paper-uniform | JSON file")

    verify = subparsers.add_parser("verify-bound", help="Monte Carlo check of C14 <= C12*C34")
    add_common(verify)
    verify.add_argument("--plan", help="strategy preset or family (default: all)")
    verify.add_argument("--trials", type=int)
    verify.add_argument("--seed", type=int)

    chain = subparsers.add_parser("chain", help="check the chain bound along N links")
    add_common(chain)
    chain.add_argument("--strategy", choices=["sequential-rpbes", "random"])
    chain.add_argument("--plan", help="strategy family for the random strategy")
    chain.add_argument("--theta", help="phases for sequential-rpbes")
    chain.add_argument("--trials", type=int)
    chain.add_argument("--seed", type=int)

    optimize = subparsers.add_parser("optimize", help="maximize the prepared concurrence over theta")
    add_common(optimize, config_required=False)
    optimize.add_argument("--lambda", dest="lam", type=float, nargs="+")
    optimize.add_argument("--eta", type=float, nargs="+")
    optimize.add_argument("--restarts", type=int)
    optimize.add_argument("--seed", type=int)

    conc = subparsers.add_parser("concurrence", help="concurrence and entanglement of formation of a state")
    add_common(conc)

    subparsers.add_parser("serve", help="start the HTTP API")
    return parser


def load_document(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    source = Path(path)
    try:
        document = json.loads(source.read_text())
    except FileNotFoundError:
        raise InvalidStateError(f"config file not found: {source}")
    except json.JSONDecodeError as e:
        raise InvalidStateError(f"{source}: line {e.lineno} column {e.colno}: {e.msg}")
    if not isinstance(document, dict):
        raise InvalidStateError(f"{source}: expected a JSON object at the top level")
    return document


def build_config(args: argparse.Namespace):
    document = load_document(args.config)
    for dest, field in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            document[field] = value
    return CONFIG_MODELS[args.command].model_validate(document)


def format_validation_error(error: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in item['loc']) or '<document>'}: {item['msg']}" for item in error.errors()]


def write_report(report: RunReport, out: Optional[str]) -> None:
    text = report.model_dump_json(indent=2)
    if out:
        Path(out).write_text(text + "\n")
        logger.info(f"Report written to {out}")
    else:
        sys.stdout.write(text + "\n")


def write_csv(report: RunReport, target: str) -> None:
    fieldnames, rows = csv_rows(report)
    if target == "-":
        writer = csv.DictWriter(sys.stdout, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
        return
    with open(target, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def run_command(args: argparse.Namespace) -> int:
    handlers = {
        "protocol": run_service.run_protocol,
        "verify-bound": run_service.run_verify_bound,
        "chain": run_service.run_chain,
        "optimize": run_service.run_optimize,
        "concurrence": run_service.run_concurrence,
    }
    try:
        config = build_config(args)
        report = handlers[args.command](config)
    except ValidationError as e:
        for line in format_validation_error(e):
            logger.error(f"Invalid input: {line}")
        return EXIT_INVALID
    except InvalidStateError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID
    except InvariantViolation as e:
        logger.error(f"Invariant violated: {e}")
        return EXIT_INVARIANT

    write_report(report, args.out)
    if args.csv:
        write_csv(report, args.csv)
    if report.payload.get("violations", 0) > 0:
        logger.error(f"{report.payload['violations']} samples exceed the bound")
        return EXIT_VIOLATION
    return EXIT_OK


def serve() -> int:
    import uvicorn

    uvicorn.run(
        "app.main:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=settings.debug,
        log_level=settings.logging_level.lower(),
    )
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=settings.logging_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return serve()
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
