"""
Remote preparation of a bipartite entangled state between Alice (share 0) and
Bob (share 3) by the supplier Sapna, who holds shares 1 and 2.

Sapna measures her shares in the basis of ``rpbes_basis``, broadcasts j′ to
Alice and (j, j′) to Bob, and the nodes undo the outcome-dependent phases.
"""
import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import field_validator, model_validator

from app.config import settings
from app.errors import InvalidStateError, InvariantViolation
from app.services.entanglement import concurrence
from app.services.measurement import (
    Outcome,
    OutcomeDistribution,
    PhaseMatrix,
    apply_measurement,
    rpbes_basis,
)
from app.services.quantum_core import (
    ArrayModel,
    DensityMatrix,
    PureState,
    _readonly,
    apply_local_operator,
    factor_out,
    fidelity,
    schmidt_state,
    tensor_product,
)

logger = logging.getLogger(__name__)

NODE_SHARES: Tuple[int, int] = (0, 3)


class MixedClassSpec(ArrayModel):
    """Σ_l p_l |ψ_l><ψ_l| with |ψ_l> = Σ_k a_k^(l) |kk> in one fixed basis"""

    weights: np.ndarray
    amplitude_rows: np.ndarray

    @field_validator("weights", mode="before")
    @classmethod
    def _coerce_weights(cls, value):
        return _readonly(np.array(value, dtype=float).reshape(-1))

    @field_validator("amplitude_rows", mode="before")
    @classmethod
    def _coerce_rows(cls, value):
        rows = np.array(value, dtype=complex)
        if rows.ndim == 1:
            rows = rows[None, :]
        return _readonly(rows)

    @model_validator(mode="after")
    def _check_invariants(self):
        tol = settings.tolerance
        n, d = self.amplitude_rows.shape
        if d < 2:
            raise ValueError(f"amplitude rows need at least two entries, got {d}")
        if self.weights.size != n:
            raise ValueError(f"{self.weights.size} weights for {n} amplitude rows")
        if n > d:
            raise ValueError(f"the class allows at most d = {d} terms, got {n}")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > tol:
            raise ValueError(f"weights sum to {self.weights.sum():.12g}, expected 1")
        norms = np.sum(np.abs(self.amplitude_rows) ** 2, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError(f"amplitude rows must have squared norm 1, got {norms.tolist()}")
        return self

    @classmethod
    def pure(cls, schmidt_weights: Sequence[float]) -> "MixedClassSpec":
        """Single-term spec for the pure state Σ_k √λ_k |kk>"""
        return cls(weights=[1.0], amplitude_rows=[np.sqrt(np.asarray(schmidt_weights, dtype=float))])

    @property
    def d(self) -> int:
        return self.amplitude_rows.shape[1]

    @property
    def n(self) -> int:
        return self.amplitude_rows.shape[0]

    def branch_states(self) -> List[Tuple[float, PureState]]:
        d = self.d
        branches = []
        for weight, row in zip(self.weights, self.amplitude_rows):
            if weight == 0.0:
                continue
            amplitudes = np.zeros(d * d, dtype=complex)
            amplitudes[np.arange(d) * (d + 1)] = row
            branches.append((float(weight), PureState(amplitudes=amplitudes, dims=(d, d))))
        return branches

    def density_matrix(self) -> DensityMatrix:
        d = self.d
        matrix = np.zeros((d * d, d * d), dtype=complex)
        for weight, state in self.branch_states():
            matrix += weight * np.outer(state.amplitudes, state.amplitudes.conj())
        return DensityMatrix(matrix=matrix, dims=(d, d))


class ProtocolResult(ArrayModel):
    """Outcome table, corrected states and the common final state of one run"""

    d: int
    theta: PhaseMatrix
    outcomes: OutcomeDistribution
    corrected_states: Tuple[Union[PureState, DensityMatrix], ...]
    final_state: Union[PureState, DensityMatrix]
    classical_bits_alice: float
    classical_bits_bob: float
    min_pairwise_fidelity: float
    max_pairwise_deviation: float
    max_prediction_deviation: float

    @property
    def final_concurrence(self) -> Optional[float]:
        """None for a mixed final state beyond two qubits"""
        state = self.final_state
        if isinstance(state, DensityMatrix) and state.dims != (2, 2):
            if state.purity() < 1.0 - settings.measurement_tolerance:
                return None
        return concurrence(state)

    def outcome_label(self, index: int) -> Tuple[int, int]:
        return self.outcomes.outcomes[index].label


def classical_cost(d: int) -> Tuple[float, float]:
    """Bits sent to (Alice, Bob): j′ to Alice, (j, j′) to Bob"""
    if d < 2:
        raise InvalidStateError(f"dimension must be >= 2, got {d}")
    return math.log2(d), 2 * math.log2(d)


def correction_unitaries(d: int, j: int, j_prime: int) -> Tuple[np.ndarray, np.ndarray]:
    """Alice's diag(e^{2πi j′m/d}) and Bob's diag(e^{2πi (dj+j′)m′/d²})"""
    if not (0 <= j < d and 0 <= j_prime < d):
        raise InvalidStateError(f"outcome ({j}, {j_prime}) out of range for d = {d}")
    m = np.arange(d)
    alice = np.diag(np.exp(2j * np.pi * j_prime * m / d))
    bob = np.diag(np.exp(2j * np.pi * (d * j + j_prime) * m / d ** 2))
    return alice, bob


def check_schmidt_weights(weights: Sequence[float], name: str) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size < 2:
        raise InvalidStateError(f"{name} must list at least two Schmidt weights")
    if np.any(weights < -settings.tolerance):
        raise InvalidStateError(f"{name} has negative entries: {weights.tolist()}")
    if abs(weights.sum() - 1.0) > settings.tolerance:
        raise InvalidStateError(f"{name} sums to {weights.sum():.12g}, expected 1")
    return np.clip(weights, 0.0, None)


def check_dimensions(d_a: int, d_b: int, theta: PhaseMatrix) -> int:
    if d_a != d_b:
        raise InvalidStateError(f"dimension mismatch: {d_a} vs {d_b}")
    if theta.d != d_a:
        raise InvalidStateError(f"phase matrix is {theta.d} x {theta.d}, expected {d_a} x {d_a}")
    return d_a


def predicted_final_state(lam: Sequence[float], eta: Sequence[float], theta: PhaseMatrix) -> PureState:
    """|F> = Σ_mm′ e^{−iθ_mm′} √(λ_m η_m′) |mm′>"""
    lam, eta = check_schmidt_weights(lam, "lambda"), check_schmidt_weights(eta, "eta")
    d = check_dimensions(lam.size, eta.size, theta)
    amplitudes = np.exp(-1j * theta.theta) * np.sqrt(np.outer(lam, eta))
    return PureState(amplitudes=amplitudes.reshape(-1), dims=(d, d))


def predicted_mixed_state(spec_a: MixedClassSpec, spec_b: MixedClassSpec, theta: PhaseMatrix) -> DensityMatrix:
    """σ = Σ_ll′ p_l q_l′ |φ_ll′><φ_ll′| with φ_ll′ = Σ a_k b_k′ e^{−iθ_kk′} |kk′>"""
    d = check_dimensions(spec_a.d, spec_b.d, theta)
    matrix = np.zeros((d * d, d * d), dtype=complex)
    for p, a in zip(spec_a.weights, spec_a.amplitude_rows):
        for q, b in zip(spec_b.weights, spec_b.amplitude_rows):
            phi = (np.exp(-1j * theta.theta) * np.outer(a, b)).reshape(-1)
            matrix += p * q * np.outer(phi, phi.conj())
    return DensityMatrix(matrix=matrix, dims=(d, d))


def mixed_class_state(spec: MixedClassSpec) -> DensityMatrix:
    return spec.density_matrix()


def mixed_class_concurrence(q: float, lambda0: float, theta: PhaseMatrix) -> float:
    """
    Closed form for √λ0|00> + √λ1|11> combined with q|χ+><χ+| + (1 − q)|χ−><χ−|:
    |2q − 1| √(λ0 λ1) |e^{i(θ00+θ11)} − e^{i(θ01+θ10)}|
    """
    t = theta.theta
    spread = abs(np.exp(1j * (t[0, 0] + t[1, 1])) - np.exp(1j * (t[0, 1] + t[1, 0])))
    return float(abs(2 * q - 1) * math.sqrt(lambda0 * (1 - lambda0)) * spread)


def _measure_branch(psi: PureState, chi: PureState, theta: PhaseMatrix):
    """Sapna's measurement on one pure branch: [(j, j′, probability, |φ>_14), ...]"""
    d = theta.d
    joint = tensor_product(psi, chi)
    distribution = apply_measurement(joint, rpbes_basis(d, theta))
    branches = []
    for outcome in distribution.outcomes:
        j, j_prime = divmod(outcome.label[0], d)
        branches.append((j, j_prime, outcome.probability, factor_out(outcome.state, NODE_SHARES)))
    return branches


def _correct(state, d: int, j: int, j_prime: int):
    alice, bob = correction_unitaries(d, j, j_prime)
    return apply_local_operator(apply_local_operator(state, alice, [0]), bob, [1])


def _max_pairwise_deviation(matrices: List[np.ndarray]) -> float:
    deviation = 0.0
    for a, b in itertools.combinations(matrices, 2):
        deviation = max(deviation, float(np.max(np.abs(a - b))))
    return deviation


def run_rpbes_pure(lam: Sequence[float], eta: Sequence[float], theta: PhaseMatrix) -> ProtocolResult:
    """Simulate steps (i)-(iv) on √λ|kk> ⊗ √η|k′k′> and check every corrected outcome against |F>"""
    predicted = predicted_final_state(lam, eta, theta)
    d = theta.d
    psi, chi = schmidt_state(lam), schmidt_state(eta)

    outcomes, corrected = [], []
    for j, j_prime, probability, phi in _measure_branch(psi, chi, theta):
        outcomes.append(Outcome(label=(j, j_prime), probability=probability, state=phi))
        corrected.append(_correct(phi, d, j, j_prime))

    stacked = np.array([s.amplitudes for s in corrected])
    overlaps = np.abs(stacked.conj() @ stacked.T) ** 2
    min_pairwise = float(overlaps.min())
    prediction_gap = float(1.0 - min(np.abs(stacked.conj() @ predicted.amplitudes) ** 2))
    projectors = [np.outer(s, s.conj()) for s in stacked]

    if 1.0 - min_pairwise > settings.measurement_tolerance or prediction_gap > settings.measurement_tolerance:
        logger.error(f"Outcome independence failed: min fidelity {min_pairwise:.12g}, gap {prediction_gap:.3e}")
        raise InvariantViolation(
            f"corrected outcomes disagree (min pairwise fidelity {min_pairwise:.12g}, "
            f"distance to predicted state {prediction_gap:.3e})"
        )

    bits_alice, bits_bob = classical_cost(d)
    logger.info(f"RPBES d={d}: {len(outcomes)} outcomes, min pairwise fidelity {min_pairwise:.12f}")
    return ProtocolResult(
        d=d,
        theta=theta,
        outcomes=OutcomeDistribution(outcomes=tuple(outcomes)),
        corrected_states=tuple(corrected),
        final_state=predicted,
        classical_bits_alice=bits_alice,
        classical_bits_bob=bits_bob,
        min_pairwise_fidelity=min_pairwise,
        max_pairwise_deviation=_max_pairwise_deviation(projectors),
        max_prediction_deviation=prediction_gap,
    )


def run_rpbes_mixed_class(spec_a: MixedClassSpec, spec_b: MixedClassSpec, theta: PhaseMatrix) -> ProtocolResult:
    """
    Run the protocol on a pair of mixed-class states. Every (l, l′) pure branch
    is propagated on its own and the per-outcome states are reassembled.
    """
    d = check_dimensions(spec_a.d, spec_b.d, theta)
    predicted = predicted_mixed_state(spec_a, spec_b, theta)

    size = d * d
    weights = np.zeros(size)
    raw = np.zeros((size, size, size), dtype=complex)
    for p, psi in spec_a.branch_states():
        for q, chi in spec_b.branch_states():
            for j, j_prime, probability, phi in _measure_branch(psi, chi, theta):
                index = j * d + j_prime
                weights[index] += p * q * probability
                raw[index] += p * q * probability * np.outer(phi.amplitudes, phi.amplitudes.conj())

    outcomes, corrected = [], []
    for index in range(size):
        if weights[index] < settings.zero_probability_threshold:
            continue
        j, j_prime = divmod(index, d)
        sigma = DensityMatrix(matrix=raw[index] / weights[index], dims=(d, d))
        outcomes.append(Outcome(label=(j, j_prime), probability=float(weights[index]), state=sigma))
        corrected.append(_correct(sigma, d, j, j_prime))

    matrices = [s.matrix for s in corrected]
    prediction_gap = max(float(np.max(np.abs(m - predicted.matrix))) for m in matrices)
    if prediction_gap > settings.probability_tolerance:
        logger.error(f"Mixed-class outcome deviates from the closed form by {prediction_gap:.3e}")
        raise InvariantViolation(f"corrected mixed-class state deviates by {prediction_gap:.3e}")

    min_pairwise = min((fidelity(a, b) for a, b in itertools.combinations(corrected, 2)), default=1.0)
    final = predicted.require_valid(settings.measurement_tolerance)
    bits_alice, bits_bob = classical_cost(d)
    logger.info(
        f"RPBES mixed class d={d}: n={spec_a.n}, n'={spec_b.n}, "
        f"deviation {prediction_gap:.3e}, min pairwise fidelity {min_pairwise:.12f}"
    )
    return ProtocolResult(
        d=d,
        theta=theta,
        outcomes=OutcomeDistribution(outcomes=tuple(outcomes)),
        corrected_states=tuple(corrected),
        final_state=final,
        classical_bits_alice=bits_alice,
        classical_bits_bob=bits_bob,
        min_pairwise_fidelity=min_pairwise,
        max_pairwise_deviation=_max_pairwise_deviation(matrices),
        max_prediction_deviation=prediction_gap,
    )
