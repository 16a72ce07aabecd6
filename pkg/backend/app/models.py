from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Dict, Any, List, Literal, Optional, Union
from datetime import datetime
from enum import Enum
import math

import numpy as np

from app.errors import InvalidStateError
from app.services.protocol import MixedClassSpec
from app.services.quantum_core import DensityMatrix, State, schmidt_state

# A complex entry on the wire: a plain real number or an [re, im] pair
ComplexValue = Union[float, List[float]]


def to_complex(value: ComplexValue) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if len(value) != 2:
        raise ValueError(f"complex entries are [re, im] pairs, got {value}")
    return complex(value[0], value[1])


def to_complex_array(rows: List[List[ComplexValue]]) -> np.ndarray:
    return np.array([[to_complex(v) for v in row] for row in rows], dtype=complex)


def complex_pairs(array: np.ndarray) -> Any:
    """Nested [re, im] lists for a complex array"""
    array = np.asarray(array, dtype=complex)
    return np.stack([array.real, array.imag], axis=-1).tolist()


# State documents
class StateKind(str, Enum):
    PURE_SCHMIDT = "pure-schmidt"
    MIXED_CLASS = "mixed-class"
    DENSE = "dense"


class StateSpec(BaseModel):
    """Bipartite state document; parsing enforces every state invariant"""

    kind: StateKind
    weights: Optional[List[float]] = Field(
        None, description="Schmidt weights (pure-schmidt) or mixture weights (mixed-class)"
    )
    amplitude_rows: Optional[List[List[ComplexValue]]] = Field(
        None, description="One amplitude row a_k per mixed-class term"
    )
    matrix: Optional[List[List[ComplexValue]]] = Field(None, description="Dense density matrix entries")
    dims: Optional[List[int]] = Field(None, description="Subsystem dimensions of a dense matrix")

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == StateKind.PURE_SCHMIDT and self.weights is None:
            raise ValueError("pure-schmidt states need 'weights'")
        if self.kind == StateKind.MIXED_CLASS and (self.weights is None or self.amplitude_rows is None):
            raise ValueError("mixed-class states need 'weights' and 'amplitude_rows'")
        if self.kind == StateKind.DENSE and self.matrix is None:
            raise ValueError("dense states need 'matrix'")
        self.to_state()
        return self

    @classmethod
    def pure_schmidt(cls, weights: List[float]) -> "StateSpec":
        return cls(kind=StateKind.PURE_SCHMIDT, weights=list(weights))

    @property
    def is_pure_schmidt(self) -> bool:
        return self.kind == StateKind.PURE_SCHMIDT

    def to_mixed_class(self) -> MixedClassSpec:
        if self.kind == StateKind.PURE_SCHMIDT:
            return MixedClassSpec.pure(self.weights)
        if self.kind == StateKind.MIXED_CLASS:
            return MixedClassSpec(weights=self.weights, amplitude_rows=to_complex_array(self.amplitude_rows))
        raise InvalidStateError("dense states cannot drive the remote-preparation protocol")

    def to_state(self) -> State:
        if self.kind == StateKind.PURE_SCHMIDT:
            return schmidt_state(self.weights)
        if self.kind == StateKind.MIXED_CLASS:
            return self.to_mixed_class().density_matrix()
        matrix = to_complex_array(self.matrix)
        dims = self.dims
        if dims is None:
            side = math.isqrt(matrix.shape[0])
            dims = [side, side]
        return DensityMatrix(matrix=matrix, dims=dims).require_valid()


ThetaSource = Union[str, List[List[float]]]


# Command documents
class ProtocolConfig(BaseModel):
    state_a: StateSpec = Field(..., description="State shared by Alice and the supplier (shares 0, 1)")
    state_b: StateSpec = Field(..., description="State shared by the supplier and Bob (shares 2, 3)")
    theta: ThetaSource = Field("pi-mm", description="Preset name, JSON file path or explicit d x d matrix")


class VerifyBoundConfig(BaseModel):
    rho12: StateSpec
    rho34: StateSpec
    plan: str = Field("all", description="Strategy preset or family")
    trials: int = Field(1000, ge=1)
    seed: Optional[int] = None


class ChainConfig(BaseModel):
    links: List[StateSpec] = Field(..., min_length=2)
    strategy: Literal["sequential-rpbes", "random"] = "sequential-rpbes"
    plan: Optional[str] = Field(None, description="Strategy family for the random strategy")
    theta: ThetaSource = "pi-mm"
    trials: int = Field(100, ge=1)
    seed: Optional[int] = None


class OptimizeConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: List[float] = Field(..., alias="lambda", min_length=2)
    eta: List[float] = Field(..., min_length=2)
    restarts: int = Field(8, ge=1)
    seed: Optional[int] = None
    max_iters: Optional[int] = Field(None, ge=1)
    tol: Optional[float] = Field(None, gt=0.0)


class ConcurrenceConfig(BaseModel):
    state: StateSpec


# Output documents
class RunReport(BaseModel):
    command: str
    arguments: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    input_digest: str = Field(..., description="sha256 of the canonical input document")
    payload: Dict[str, Any]
    started_at: datetime
    duration_seconds: float


class HealthCheckResponse(BaseModel):
    status: str
    timestamp: datetime
    version: str
    settings: Dict[str, Any]
