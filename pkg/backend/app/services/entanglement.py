"""Concurrence, entanglement of formation and equal-concurrence decompositions."""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import field_validator, model_validator
from scipy.special import entr

from app.config import settings
from app.errors import InvalidStateError
from app.services.measurement import OutcomeDistribution
from app.services.quantum_core import (
    ArrayModel,
    DensityMatrix,
    PureState,
    State,
    _readonly,
    pure_state_of,
    schmidt_decomposition,
)

logger = logging.getLogger(__name__)

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SPIN_FLIP = np.real(np.kron(SIGMA_Y, SIGMA_Y))

# eigenvalues of ρ at or below this are treated as exact zeros
_EIGEN_FLOOR = 1e-14

_HADAMARD_4 = 0.5 * np.array(
    [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]], dtype=float
)


class Decomposition(ArrayModel):
    """Ensemble {p_l, |ψ_l>} of a density matrix"""

    weights: np.ndarray
    states: Tuple[PureState, ...]

    @field_validator("weights", mode="before")
    @classmethod
    def _coerce_weights(cls, value):
        return _readonly(np.array(value, dtype=float).reshape(-1))

    @model_validator(mode="after")
    def _check_weights(self):
        if self.weights.size != len(self.states) or not self.states:
            raise ValueError("a decomposition needs one weight per state")
        if np.any(self.weights <= 0.0):
            raise ValueError("decomposition weights must be positive")
        if abs(self.weights.sum() - 1.0) > settings.probability_tolerance:
            raise ValueError(f"decomposition weights sum to {self.weights.sum():.12g}")
        return self

    @property
    def terms(self) -> List[Tuple[float, PureState]]:
        return list(zip(self.weights.tolist(), self.states))

    def density_matrix(self) -> DensityMatrix:
        matrix = sum(p * np.outer(s.amplitudes, s.amplitudes.conj()) for p, s in self.terms)
        return DensityMatrix(matrix=matrix, dims=self.states[0].dims)

    def column_matrix(self) -> np.ndarray:
        """Subnormalized vectors √p_l |ψ_l> as columns"""
        return np.column_stack([math.sqrt(p) * s.amplitudes for p, s in self.terms])


def concurrence_pure(psi: PureState, cut=None) -> float:
    """√(2(1 − Σ_k λ_k²)) over the Schmidt weights of the cut"""
    weights = schmidt_decomposition(psi, cut).coefficients
    return math.sqrt(max(0.0, 2.0 * (1.0 - float(np.sum(weights ** 2)))))


def _require_two_qubit(rho: DensityMatrix) -> DensityMatrix:
    if not isinstance(rho, DensityMatrix) or rho.dims != (2, 2):
        dims = getattr(rho, "dims", None)
        raise InvalidStateError(f"expected a two-qubit density matrix, got dims {dims}")
    return rho.require_valid(settings.measurement_tolerance)


def _subnormalized_vectors(rho: DensityMatrix) -> np.ndarray:
    """Columns √w_i |e_i> from the eigendecomposition, largest weight first"""
    values, vectors = np.linalg.eigh((rho.matrix + rho.matrix.conj().T) / 2)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    keep = values > _EIGEN_FLOOR
    return vectors[:, keep] * np.sqrt(values[keep])


def _takagi(tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Symmetric factorization tau = Q diag(s) Q^T with Q unitary, s descending"""
    u, s, vh = np.linalg.svd(tau)
    phase = u.conj().T @ vh.T
    q = u @ scipy.linalg.sqrtm(phase)
    return s, q


def _wootters_values(vectors: np.ndarray) -> np.ndarray:
    tau = vectors.T @ SPIN_FLIP @ vectors
    values = np.linalg.svd(tau, compute_uv=False)
    return np.pad(values, (0, 4 - values.size))


def concurrence_two_qubit(rho: DensityMatrix) -> float:
    """
    Wootters concurrence max(0, μ1 − μ2 − μ3 − μ4).

    The μ_i are the singular values of the spin-flip overlap matrix of the
    subnormalized eigenvectors of ρ, which equal the square roots of the
    eigenvalues of ρ(Y⊗Y)ρ*(Y⊗Y) without taking square roots numerically.
    """
    rho = _require_two_qubit(rho)
    mu = _wootters_values(_subnormalized_vectors(rho))
    return max(0.0, float(mu[0] - mu[1] - mu[2] - mu[3]))


def concurrence(state: State) -> float:
    """Concurrence of a bipartite pure state (any d) or a two-qubit mixed state"""
    if isinstance(state, PureState):
        return concurrence_pure(state)
    if state.dims == (2, 2):
        return concurrence_two_qubit(state)
    if state.num_subsystems == 2:
        # mixed states beyond two qubits have no closed form; pure ones still do
        return concurrence_pure(pure_state_of(state))
    raise InvalidStateError(f"concurrence needs a bipartite state, got dims {state.dims}")


def binary_entropy(p: float) -> float:
    return float((entr(p) + entr(1.0 - p)) / math.log(2))


def entanglement_of_formation(c: float, tol: Optional[float] = None) -> float:
    """Two-qubit entanglement of formation h((1 + √(1 − C²))/2) in ebits"""
    tol = settings.tolerance if tol is None else tol
    if c < -tol or c > 1.0 + tol:
        raise InvalidStateError(f"two-qubit concurrence must lie in [0, 1], got {c}")
    c = min(max(c, 0.0), 1.0)
    return binary_entropy((1.0 + math.sqrt(1.0 - c * c)) / 2.0)


def average_concurrence(dist: OutcomeDistribution, tol: Optional[float] = None) -> float:
    """Σ_j Q_j C(σ_j)"""
    tol = settings.probability_tolerance if tol is None else tol
    if len(dist) == 0:
        raise InvalidStateError("cannot average over an empty outcome distribution")
    total = dist.total_probability()
    if abs(total - 1.0) > tol:
        raise InvalidStateError(f"outcome probabilities sum to {total:.12g}, expected 1")
    return float(sum(o.probability * concurrence(o.state) for o in dist.outcomes))


def decomposition_average_concurrence(decomposition: Decomposition) -> float:
    return float(sum(p * concurrence_pure(s) for p, s in decomposition.terms))


def _split(target: complex, a: float, b: float) -> Tuple[complex, complex]:
    """Two sides of lengths a, b that sum to target (triangle closure)"""
    length = abs(target)
    if a < _EIGEN_FLOOR:
        return 0j, target
    if length < _EIGEN_FLOOR:
        return complex(a), target - a
    cos_angle = np.clip((a * a + length * length - b * b) / (2 * a * length), -1.0, 1.0)
    first = a * np.exp(1j * (np.angle(target) + math.acos(cos_angle)))
    return complex(first), complex(target - first)


def _closing_phases(mu: np.ndarray) -> np.ndarray:
    """Unit phases w_j with Σ_j w_j μ_j = 0, given μ_0 ≤ μ_1 + μ_2 + μ_3"""
    m0, m1, m2, m3 = mu
    joint = min(max(m0 - m1, m2 - m3), m2 + m3)
    v1, rest = _split(-m0, m1, joint)
    v2, v3 = _split(rest, m2, m3)
    sides = np.array([m0, v1, v2, v3], dtype=complex)
    phases = np.ones(4, dtype=complex)
    nonzero = mu > _EIGEN_FLOOR
    phases[nonzero] = sides[nonzero] / mu[nonzero]
    return phases / np.abs(phases)


def _zero_diagonal_rotation(k: np.ndarray) -> np.ndarray:
    """Real orthogonal O with diag(O K O^T) = 0 for a traceless real symmetric K"""
    k = k.copy()
    n = k.shape[0]
    rotation = np.eye(n)
    scale = max(1.0, float(np.max(np.abs(k))))
    for _ in range(n):
        diag = np.diag(k)
        i = int(np.argmax(np.abs(diag)))
        if abs(diag[i]) <= _EIGEN_FLOOR * scale:
            break
        opposite = np.where(np.sign(diag) == -np.sign(diag[i]))[0]
        if opposite.size == 0:
            break
        j = int(opposite[np.argmax(np.abs(diag[opposite]))])
        # K_jj t² + 2 K_ij t + K_ii = 0 has real roots since K_ii K_jj < 0
        disc = math.sqrt(k[i, j] ** 2 - k[i, i] * k[j, j])
        t = (-k[i, j] + disc) / k[j, j]
        c = 1.0 / math.sqrt(1.0 + t * t)
        s = t * c
        givens = np.eye(n)
        givens[i, i], givens[i, j], givens[j, i], givens[j, j] = c, s, -s, c
        k = givens @ k @ givens.T
        rotation = givens @ rotation
    return rotation


def _decomposition_from_columns(columns: np.ndarray, dims: Tuple[int, ...]) -> Decomposition:
    weights = np.sum(np.abs(columns) ** 2, axis=0)
    keep = weights > _EIGEN_FLOOR
    weights, columns = weights[keep], columns[:, keep]
    states = tuple(
        PureState(amplitudes=columns[:, i] / math.sqrt(weights[i]), dims=dims)
        for i in range(columns.shape[1])
    )
    return Decomposition(weights=weights / weights.sum(), states=states)


def optimal_equal_concurrence_decomposition(rho: DensityMatrix) -> Decomposition:
    """
    Decomposition of a two-qubit state into at most four pure states, each with
    concurrence equal to C(ρ).

    Steps: subnormalized eigenvectors of ρ; symmetric (Takagi) diagonalization
    of their spin-flip overlap matrix; phase rotation of the vectors; a real
    orthogonal mixing that equalizes the concurrence of every member.
    """
    rho = _require_two_qubit(rho)
    vectors = _subnormalized_vectors(rho)
    tau = vectors.T @ SPIN_FLIP @ vectors
    mu, q = _takagi(tau)
    vectors = vectors @ q.conj()
    c = float(mu[0] - mu[1:].sum())

    if vectors.shape[1] == 1:
        return _decomposition_from_columns(vectors, rho.dims)

    if c > _EIGEN_FLOOR:
        vectors = vectors * np.array([1.0] + [1j] * (vectors.shape[1] - 1))
        overlap = vectors.T @ SPIN_FLIP @ vectors
        gram = vectors.conj().T @ vectors
        k = overlap.real - (np.trace(overlap.real) / np.trace(gram.real)) * gram.real
        mixing = _zero_diagonal_rotation(k)
    else:
        padded = np.zeros((4, 4), dtype=complex)
        padded[:, : vectors.shape[1]] = vectors
        phases = _closing_phases(np.pad(mu, (0, 4 - mu.size)))
        vectors = padded * np.sqrt(phases)
        mixing = _HADAMARD_4

    return _decomposition_from_columns(vectors @ mixing.T, rho.dims)


def unitary_remix(decomposition: Decomposition, unitary: np.ndarray) -> Decomposition:
    """Another decomposition of the same state: columns Z → Z U (Z padded to U's size)"""
    columns = decomposition.column_matrix()
    size = unitary.shape[0]
    if size < columns.shape[1]:
        raise InvalidStateError(f"mixing unitary of size {size} is smaller than the ensemble")
    padded = np.zeros((columns.shape[0], size), dtype=complex)
    padded[:, : columns.shape[1]] = columns
    return _decomposition_from_columns(padded @ unitary, decomposition.states[0].dims)


def det_scaled_concurrence(psi: PureState, a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """
    (C((A⊗B)|ψ>/‖·‖)·‖(A⊗B)|ψ>‖², |det A||det B| C(|ψ>)) for a two-qubit |ψ>.

    Both entries agree for every A, B; node measurements after the supplier's
    therefore cannot raise the average concurrence.
    """
    out = np.kron(a, b) @ psi.amplitudes
    weight = float(np.vdot(out, out).real)
    if weight < settings.zero_probability_threshold:
        lhs = 0.0
    else:
        lhs = concurrence_pure(PureState(amplitudes=out / math.sqrt(weight), dims=psi.dims)) * weight
    rhs = abs(np.linalg.det(a)) * abs(np.linalg.det(b)) * concurrence_pure(psi)
    return lhs, rhs


