from fastapi import APIRouter, HTTPException, status
from datetime import datetime, timezone
import logging

from app.config import settings
from app.errors import InvalidStateError
from app.models import (
    ChainConfig, ConcurrenceConfig, HealthCheckResponse, OptimizeConfig,
    ProtocolConfig, RunReport, VerifyBoundConfig
)
from app.services.run_service import run_service

logger = logging.getLogger(__name__)

# Create router
router = APIRouter()


async def _run(command: str, config) -> RunReport:
    try:
        return await run_service.run_async(command, config)
    except InvalidStateError as e:
        logger.warning(f"Invalid {command} request: {str(e)}")
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )


@router.get("/health", response_model=HealthCheckResponse)
async def health_check():
    """Health check with the active numerical settings"""
    return HealthCheckResponse(
        status="healthy",
        timestamp=datetime.now(timezone.utc),
        version="1.0.0",
        settings={
            "tolerance": settings.tolerance,
            "measurement_tolerance": settings.measurement_tolerance,
            "bound_tolerance": settings.bound_tolerance,
            "default_seed": settings.default_seed,
            "max_workers": settings.max_workers,
        }
    )


@router.post("/protocol", response_model=RunReport)
async def run_protocol(request: ProtocolConfig):
    """Remote preparation of a bipartite state; returns outcomes and the final state"""
    return await _run("protocol", request)


@router.post("/verify-bound", response_model=RunReport)
async def verify_bound(request: VerifyBoundConfig):
    """Monte Carlo check of C14 <= C12*C34 over sampled LOCC strategies"""
    return await _run("verify-bound", request)


@router.post("/chain", response_model=RunReport)
async def chain(request: ChainConfig):
    """Chain bound along two-qubit links"""
    return await _run("chain", request)


@router.post("/optimize", response_model=RunReport)
async def optimize(request: OptimizeConfig):
    """Maximize the prepared concurrence over the supplier's phases"""
    return await _run("optimize", request)


@router.post("/concurrence", response_model=RunReport)
async def concurrence(request: ConcurrenceConfig):
    """Concurrence and entanglement of formation of one state"""
    return await _run("concurrence", request)
