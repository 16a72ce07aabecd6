"""Kraus-operator measurements, outcome distributions and the samplers used by the bound checks."""
import logging
import math
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import field_validator, model_validator
from scipy.stats import unitary_group

from app.config import settings
from app.errors import IncompleteMeasurementError, InvalidStateError
from app.services.quantum_core import (
    BELL_STATES,
    ArrayModel,
    DensityMatrix,
    PureState,
    State,
    _readonly,
    apply_local_operator,
)

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

# Sapna holds shares 1 and 2 of the four-share network state
SUPPLIER_SHARES: Tuple[int, int] = (1, 2)


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Seeded generator; None falls back to the configured default seed"""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = settings.default_seed
    return np.random.default_rng(seed)


def derive_seed(master: int, index: int) -> np.random.SeedSequence:
    """Child seed for trial/restart ``index``; independent of execution order"""
    return np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))


class Measurement(ArrayModel):
    """Outcome-indexed Kraus operators acting on the target subsystems"""

    kraus: Tuple[np.ndarray, ...]
    target: Tuple[int, ...] = (0,)
    label: str = ""

    @field_validator("kraus", mode="before")
    @classmethod
    def _coerce_kraus(cls, value):
        operators = tuple(_readonly(np.array(k, dtype=complex)) for k in value)
        if not operators:
            raise ValueError("a measurement needs at least one Kraus operator")
        shape = operators[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"Kraus operators must be square, got shape {shape}")
        if any(k.shape != shape for k in operators):
            raise ValueError("all Kraus operators must share one shape")
        return operators

    @field_validator("target", mode="before")
    @classmethod
    def _coerce_target(cls, value):
        return tuple(int(t) for t in value)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def num_outcomes(self) -> int:
        return len(self.kraus)

    def on(self, target: Iterable[int]) -> "Measurement":
        """Same operators acting on other subsystems"""
        return self.model_copy(update={"target": tuple(int(t) for t in target)})

    def completeness_error(self) -> float:
        total = sum(k.conj().T @ k for k in self.kraus)
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def require_complete(self, tol: Optional[float] = None) -> "Measurement":
        tol = settings.measurement_tolerance if tol is None else tol
        error = self.completeness_error()
        if error > tol:
            raise IncompleteMeasurementError(
                f"Kraus operators violate completeness by {error:.3e} (tolerance {tol:.1e})"
            )
        return self


class PhaseMatrix(ArrayModel):
    """Free phases θ_mm′ (radians) of the supplier's projective basis"""

    theta: np.ndarray

    @field_validator("theta", mode="before")
    @classmethod
    def _coerce_theta(cls, value):
        theta = np.array(value, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1] or theta.shape[0] < 2:
            raise ValueError(f"phase matrix must be d x d with d >= 2, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("phase matrix entries must be finite")
        return _readonly(theta)

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def zero(cls, d: int) -> "PhaseMatrix":
        return cls(theta=np.zeros((d, d)))

    @classmethod
    def pi_mm(cls, d: int = 2) -> "PhaseMatrix":
        """θ_mm′ = π m m′"""
        m = np.arange(d)
        return cls(theta=np.pi * np.outer(m, m))

    @classmethod
    def fourier(cls, d: int) -> "PhaseMatrix":
        """θ_mm′ = 2π m m′ / d"""
        m = np.arange(d)
        return cls(theta=2 * np.pi * np.outer(m, m) / d)

    @classmethod
    def random(cls, d: int, seed: SeedLike = None) -> "PhaseMatrix":
        return cls(theta=make_rng(seed).uniform(0.0, 2 * np.pi, size=(d, d)))


class Outcome(ArrayModel):
    label: Tuple[int, ...]
    probability: float
    state: Union[PureState, DensityMatrix]


class OutcomeDistribution(ArrayModel):
    """Probabilities and post-measurement states {Q_j, σ_j}"""

    outcomes: Tuple[Outcome, ...]

    @model_validator(mode="after")
    def _check_probabilities(self):
        if any(o.probability < 0.0 for o in self.outcomes):
            raise ValueError("outcome probabilities must be nonnegative")
        return self

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([o.probability for o in self.outcomes])

    @property
    def states(self) -> Tuple[State, ...]:
        return tuple(o.state for o in self.outcomes)

    @property
    def labels(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(o.label for o in self.outcomes)

    def total_probability(self) -> float:
        return float(self.probabilities.sum())

    def __len__(self) -> int:
        return len(self.outcomes)


def rpbes_vectors(d: int, theta: PhaseMatrix) -> np.ndarray:
    """
    Rows are |P(j,j′)> = (1/d) Σ_mm′ exp(i[2π(dj+j′)(dm+m′)/d² + θ_mm′]) |mm′>,
    ordered by j·d + j′, amplitudes in row-major |mm′> order.
    """
    if d < 2:
        raise InvalidStateError(f"dimension must be >= 2, got {d}")
    if theta.d != d:
        raise InvalidStateError(f"phase matrix is {theta.d} x {theta.d}, expected {d} x {d}")
    m = np.arange(d)
    joint = (d * m[:, None] + m[None, :]).reshape(-1)
    outcome = np.arange(d * d)
    phases = 2 * np.pi * np.outer(outcome, joint) / d ** 2 + theta.theta.reshape(-1)[None, :]
    return np.exp(1j * phases) / d


def rpbes_basis(d: int, theta: PhaseMatrix, target: Sequence[int] = SUPPLIER_SHARES) -> Measurement:
    """The supplier's d²-outcome projective measurement; outcome index is j·d + j′"""
    vectors = rpbes_vectors(d, theta)
    projectors = [np.outer(v, v.conj()) for v in vectors]
    return Measurement(kraus=projectors, target=target, label=f"rpbes(d={d})")


def projective_measurement(vectors: np.ndarray, target: Sequence[int], label: str = "") -> Measurement:
    """Rank-one projectors onto the rows of an orthonormal basis"""
    return Measurement(kraus=[np.outer(v, v.conj()) for v in np.asarray(vectors)], target=target, label=label)


def bell_basis_measurement(target: Sequence[int] = SUPPLIER_SHARES) -> Measurement:
    vectors = np.array([BELL_STATES[name] for name in ("phi+", "phi-", "psi+", "psi-")])
    return projective_measurement(vectors, target, label="bell")


def computational_basis_measurement(dim: int, target: Sequence[int] = (0,)) -> Measurement:
    return projective_measurement(np.eye(dim), target, label="computational")


def identity_measurement(dim: int, target: Sequence[int] = (0,)) -> Measurement:
    return Measurement(kraus=[np.eye(dim)], target=target, label="identity")


def apply_measurement(
    state: State,
    measurement: Measurement,
    threshold: Optional[float] = None,
    tol: Optional[float] = None,
) -> OutcomeDistribution:
    """
    Outcome probabilities Q_j = Tr(M_j ρ M_j†) and normalized post-measurement states.

    Outcomes with Q_j below the zero-probability threshold are dropped.
    """
    threshold = settings.zero_probability_threshold if threshold is None else threshold
    measurement.require_complete(tol)
    local_size = math.prod(state.dims[i] for i in measurement.target if 0 <= i < len(state.dims))
    if len(measurement.target) == 0 or local_size != measurement.dim:
        raise InvalidStateError(
            f"measurement of dimension {measurement.dim} does not fit subsystems "
            f"{measurement.target} of a state with dims {state.dims}"
        )

    outcomes = []
    for index, kraus in enumerate(measurement.kraus):
        post = apply_local_operator(state, kraus, measurement.target)
        if isinstance(post, PureState):
            probability = float(np.vdot(post.amplitudes, post.amplitudes).real)
            if probability < threshold:
                continue
            post = PureState(amplitudes=post.amplitudes / math.sqrt(probability), dims=post.dims)
        else:
            probability = post.trace().real
            if probability < threshold:
                continue
            post = DensityMatrix(matrix=post.matrix / probability, dims=post.dims)
        outcomes.append(Outcome(label=(index,), probability=probability, state=post))

    logger.debug(f"Measurement '{measurement.label}' produced {len(outcomes)} outcomes")
    return OutcomeDistribution(outcomes=tuple(outcomes))


def haar_unitary(dim: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-distributed unitary (QR of a complex Ginibre matrix, phase-corrected)"""
    return unitary_group.rvs(dim, random_state=make_rng(seed))


def random_projective_measurement(dim: int, seed: SeedLike = None, target: Sequence[int] = (0,)) -> Measurement:
    """Projectors onto the columns of a Haar unitary"""
    if dim < 2:
        raise InvalidStateError(f"dimension must be >= 2, got {dim}")
    unitary = haar_unitary(dim, seed)
    return projective_measurement(unitary.T, target, label="random-projective")


def random_kraus_channel(
    dim: int, n_outcomes: int, seed: SeedLike = None, target: Sequence[int] = (0,)
) -> Measurement:
    """
    Generalized measurement with ``n_outcomes`` Kraus operators, cut from the first
    ``dim`` columns of a Haar unitary on the (n_outcomes·dim)-dimensional space.
    """
    if dim < 2:
        raise InvalidStateError(f"dimension must be >= 2, got {dim}")
    if n_outcomes < 1:
        raise InvalidStateError(f"a channel needs at least one outcome, got {n_outcomes}")
    isometry = haar_unitary(dim * n_outcomes, seed)[:, :dim]
    kraus = [isometry[j * dim:(j + 1) * dim, :] for j in range(n_outcomes)]
    return Measurement(kraus=kraus, target=target, label=f"random-kraus({n_outcomes})")


def random_local_unitary(dim: int, seed: SeedLike = None, target: Sequence[int] = (0,)) -> Measurement:
    return Measurement(kraus=[haar_unitary(dim, seed)], target=target, label="random-unitary")


def kraus_det_sum(measurement: Measurement) -> float:
    """Σ_j |det M_j|; at most 1 for a complete 2x2 Kraus set"""
    return float(sum(abs(np.linalg.det(k)) for k in measurement.kraus))
