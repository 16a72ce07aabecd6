from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import logging
import time
from contextlib import asynccontextmanager

from app.config import settings
from app.api.endpoints import router
from app.errors import InvariantViolation

# Configure logging
logging.basicConfig(
    level=settings.logging_level,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan events"""
    logger.info("Starting remote entanglement distribution simulator...")
    logger.info(
        f"Tolerance {settings.tolerance:.1e}, bound tolerance {settings.bound_tolerance:.1e}, "
        f"{settings.max_workers} workers, default seed {settings.default_seed}"
    )

    yield

    logger.info("Shutting down remote entanglement distribution simulator...")


# Create FastAPI application
app = FastAPI(
    title="Remote Entanglement Distribution Simulator",
    description="""
    Simulates a supplier that distributes entanglement to two nodes with local
    operations and classical communication.

    * **Protocol**: remote preparation of a bipartite entangled state whose
      corrected form does not depend on the supplier's measurement outcome
    * **Bounds**: Monte Carlo checks that no sampled strategy beats C12*C34,
      for pairs and for chains of links
    * **Optimizer**: phase choices that maximize the prepared concurrence

    Every endpoint accepts the same JSON document as the matching CLI command
    and returns the same run report.
    """,
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Request timing middleware
@app.middleware("http")
async def add_process_time_header(request: Request, call_next):
    start_time = time.time()
    response = await call_next(request)
    process_time = time.time() - start_time
    response.headers["X-Process-Time"] = str(process_time)
    return response


@app.exception_handler(InvariantViolation)
async def invariant_violation_handler(request: Request, exc: InvariantViolation):
    logger.error(f"Invariant violated: {str(exc)}")
    return JSONResponse(
        status_code=500,
        content={
            "detail": str(exc),
            "error_type": type(exc).__name__,
            "path": str(request.url)
        }
    )


# Global exception handler
@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error(f"Global exception handler caught: {str(exc)}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={
            "detail": "Internal server error",
            "error_type": type(exc).__name__,
            "path": str(request.url)
        }
    )


# Include API routes
app.include_router(router, prefix="/api/v1", tags=["Remote Entanglement Distribution"])


# Root endpoint
@app.get("/")
async def root():
    """Root endpoint with system information"""
    return {
        "name": "Remote Entanglement Distribution Simulator",
        "version": "1.0.0",
        "docs": "/docs",
        "health": "/api/v1/health",
        "endpoints": {
            "protocol": "POST /api/v1/protocol",
            "verify_bound": "POST /api/v1/verify-bound",
            "chain": "POST /api/v1/chain",
            "optimize": "POST /api/v1/optimize",
            "concurrence": "POST /api/v1/concurrence",
            "health_check": "GET /api/v1/health"
        }
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "app.main:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=settings.debug,
        log_level=settings.logging_level.lower()
    )
