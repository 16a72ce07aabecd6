"""
Command runner shared by the CLI and the HTTP router: resolves inputs, calls
the simulation services and packages the outcome into a RunReport.
"""
import asyncio
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from app.config import settings
from app.errors import InvalidStateError
from app.models import (
    ChainConfig,
    ConcurrenceConfig,
    OptimizeConfig,
    ProtocolConfig,
    RunReport,
    StateSpec,
    ThetaSource,
    VerifyBoundConfig,
    complex_pairs,
)
from app.services.bounds import BoundReport, simulate_chain, monte_carlo_red, strategy_plans
from app.services.entanglement import concurrence, entanglement_of_formation
from app.services.measurement import PhaseMatrix
from app.services.phase_optimizer import OptimizationResult, optimize_phases
from app.services.protocol import ProtocolResult, run_rpbes_mixed_class, run_rpbes_pure
from app.services.quantum_core import PureState, State

logger = logging.getLogger(__name__)

THETA_PRESETS: Dict[str, Callable[[int], PhaseMatrix]] = {
    "pi-mm": PhaseMatrix.pi_mm,
    "fourier": PhaseMatrix.fourier,
    "zero": PhaseMatrix.zero,
    "paper-2x2": PhaseMatrix.pi_mm,
    "paper-uniform": PhaseMatrix.fourier,
}


def resolve_theta(source: ThetaSource, d: int) -> PhaseMatrix:
    """Preset name, path to a JSON d x d matrix, or the matrix itself"""
    if isinstance(source, str):
        if source in THETA_PRESETS:
            return THETA_PRESETS[source](d)
        path = Path(source)
        if not path.is_file():
            raise InvalidStateError(
                f"unknown theta '{source}': expected one of {sorted(THETA_PRESETS)} or a JSON file"
            )
        try:
            source = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise InvalidStateError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}")
    try:
        theta = PhaseMatrix(theta=source)
    except ValidationError as e:
        raise InvalidStateError(f"invalid theta: {e.errors()[0]['msg']}")
    if theta.d != d:
        raise InvalidStateError(f"theta is {theta.d} x {theta.d}, expected {d} x {d}")
    return theta


def round_significant(value: float, digits: int) -> float:
    if value == 0.0 or not math.isfinite(value):
        return float(value)
    return float(f"{value:.{digits}g}")


def rounded(obj: Any, digits: Optional[int] = None) -> Any:
    """Round every float in a JSON-shaped document to ``digits`` significant digits"""
    digits = settings.report_significant_digits if digits is None else digits
    if isinstance(obj, dict):
        return {key: rounded(value, digits) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(value, digits) for value in obj]
    if isinstance(obj, (float, np.floating)):
        return round_significant(float(obj), digits)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _state_document(state: State) -> Dict[str, Any]:
    if isinstance(state, PureState):
        return {"kind": "pure", "dims": list(state.dims), "amplitudes": complex_pairs(state.amplitudes)}
    return {"kind": "density", "dims": list(state.dims), "matrix": complex_pairs(state.matrix)}


def _input_concurrence(spec: StateSpec) -> Optional[float]:
    state = spec.to_state()
    if isinstance(state, PureState) or state.dims == (2, 2):
        return concurrence(state)
    return None


def _eof_or_none(c: Optional[float], d: int) -> Optional[float]:
    if c is None or d != 2:
        return None
    return entanglement_of_formation(min(c, 1.0))


def protocol_payload(result: ProtocolResult, c12: Optional[float], c34: Optional[float]) -> Dict[str, Any]:
    final_c = result.final_concurrence
    bound = c12 * c34 if c12 is not None and c34 is not None else None
    return {
        "d": result.d,
        "theta": result.theta.theta.tolist(),
        "outcomes": [
            {"j": o.label[0], "j_prime": o.label[1], "probability": o.probability}
            for o in result.outcomes.outcomes
        ],
        "classical_bits": {"alice": result.classical_bits_alice, "bob": result.classical_bits_bob},
        "final_state": _state_document(result.final_state),
        "final_concurrence": final_c,
        "entanglement_of_formation": _eof_or_none(final_c, result.d),
        "c12": c12,
        "c34": c34,
        "bound": bound,
        "min_pairwise_fidelity": result.min_pairwise_fidelity,
        "max_pairwise_deviation": result.max_pairwise_deviation,
        "max_prediction_deviation": result.max_prediction_deviation,
    }


def bound_payload(report: BoundReport) -> Dict[str, Any]:
    payload = report.model_dump()
    payload["scope"] = "sampled LOCC strategy families; max_achieved carries no optimality claim"
    return payload


def optimization_payload(result: OptimizationResult) -> Dict[str, Any]:
    return {
        "theta_star": result.theta_star.theta.tolist(),
        "c_star": result.c_star,
        "baseline_c": result.baseline_c,
        "improvement": result.c_star - result.baseline_c,
        "iterations": result.iterations,
        "converged": result.converged,
        "restarts": result.restarts,
        "restart_values": list(result.restart_values),
    }


class RunService:
    """Runs one command and wraps its result in a reproducible report"""

    def __init__(self):
        self.executor = ThreadPoolExecutor(max_workers=settings.max_workers)

    def create_input_digest(self, document: Dict[str, Any]) -> str:
        """sha256 of the canonical JSON form of the input document"""
        canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def _report(self, command: str, config: BaseModel, seed: Optional[int], work: Callable[[], Dict[str, Any]]) -> RunReport:
        document = config.model_dump(mode="json", by_alias=True)
        started_at = datetime.now(timezone.utc)
        start_time = time.time()
        logger.info(f"Running '{command}' (seed {seed})")
        try:
            payload = rounded(work())
        except Exception as e:
            logger.error(f"Command '{command}' failed: {e}")
            raise
        duration = time.time() - start_time
        logger.info(f"'{command}' finished in {duration:.3f}s")
        return RunReport(
            command=command,
            arguments=document,
            seed=seed,
            input_digest=self.create_input_digest({"command": command, "input": document, "seed": seed}),
            payload=payload,
            started_at=started_at,
            duration_seconds=duration,
        )

    def run_protocol(self, config: ProtocolConfig) -> RunReport:
        def work():
            state_a, state_b = config.state_a, config.state_b
            d = state_a.to_state().dims[0]
            theta = resolve_theta(config.theta, d)
            if state_a.is_pure_schmidt and state_b.is_pure_schmidt:
                result = run_rpbes_pure(state_a.weights, state_b.weights, theta)
            else:
                result = run_rpbes_mixed_class(state_a.to_mixed_class(), state_b.to_mixed_class(), theta)
            return protocol_payload(result, _input_concurrence(state_a), _input_concurrence(state_b))

        return self._report("protocol", config, None, work)

    def run_verify_bound(self, config: VerifyBoundConfig) -> RunReport:
        seed = settings.default_seed if config.seed is None else config.seed

        def work():
            plans = strategy_plans(config.plan)
            report = monte_carlo_red(config.rho12.to_state(), config.rho34.to_state(), plans, config.trials, seed)
            return bound_payload(report)

        return self._report("verify-bound", config, seed, work)

    def run_chain(self, config: ChainConfig) -> RunReport:
        seed = settings.default_seed if config.seed is None else config.seed

        def work():
            links = [link.to_state() for link in config.links]
            plans = strategy_plans(config.plan) if config.plan else None
            theta = resolve_theta(config.theta, 2)
            report = simulate_chain(links, config.strategy, config.trials, seed, plans=plans, theta=theta)
            return bound_payload(report)

        return self._report("chain", config, seed, work)

    def run_optimize(self, config: OptimizeConfig) -> RunReport:
        seed = settings.default_seed if config.seed is None else config.seed

        def work():
            result = optimize_phases(
                config.lam, config.eta, config.restarts, seed, max_iters=config.max_iters, tol=config.tol
            )
            return optimization_payload(result)

        return self._report("optimize", config, seed, work)

    def run_concurrence(self, config: ConcurrenceConfig) -> RunReport:
        def work():
            state = config.state.to_state()
            c = concurrence(state)
            two_level = state.dims == (2, 2)
            return {
                "dims": list(state.dims),
                "concurrence": c,
                "entanglement_of_formation": entanglement_of_formation(min(c, 1.0)) if two_level else None,
            }

        return self._report("concurrence", config, None, work)

    async def run_async(self, command: str, config: BaseModel) -> RunReport:
        """Run a command off the event loop"""
        handlers = {
            "protocol": self.run_protocol,
            "verify-bound": self.run_verify_bound,
            "chain": self.run_chain,
            "optimize": self.run_optimize,
            "concurrence": self.run_concurrence,
        }
        loop = asyncio.get_event_loop()
        return await loop.run_in_executor(self.executor, handlers[command], config)


def csv_rows(report: RunReport) -> Tuple[List[str], List[Dict[str, Any]]]:
    """Flat per-sample rows of a report for external plotting"""
    payload = report.payload
    if report.command in ("verify-bound", "chain"):
        return ["trial", "strategy", "achieved", "branches"], payload["samples"]
    if report.command == "protocol":
        return ["j", "j_prime", "probability"], payload["outcomes"]
    if report.command == "optimize":
        rows = [{"restart": i, "c": value} for i, value in enumerate(payload["restart_values"])]
        return ["restart", "c"], rows
    return ["concurrence", "entanglement_of_formation"], [
        {"concurrence": payload["concurrence"], "entanglement_of_formation": payload["entanglement_of_formation"]}
    ]


# Global service instance
run_service = RunService()
