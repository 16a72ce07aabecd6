import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.errors import InvalidStateError
from app.services.entanglement import concurrence, concurrence_pure, concurrence_two_qubit
from app.services.measurement import PhaseMatrix
from app.services.protocol import (
    MixedClassSpec,
    classical_cost,
    correction_unitaries,
    mixed_class_concurrence,
    mixed_class_state,
    predicted_final_state,
    predicted_mixed_state,
    run_rpbes_mixed_class,
    run_rpbes_pure,
)
from app.services.quantum_core import fidelity
from tests.helpers import chi_mixture, random_weights


def saturation_value(lam, eta) -> float:
    return 4 * math.sqrt(lam[0] * lam[1] * eta[0] * eta[1])


def test_classical_cost():
    assert classical_cost(2) == (1.0, 2.0)
    assert classical_cost(4) == (2.0, 4.0)
    alice, bob = classical_cost(3)
    assert alice == pytest.approx(math.log2(3))
    assert bob == pytest.approx(2 * math.log2(3))


def test_correction_unitaries_examples():
    alice, bob = correction_unitaries(2, 0, 0)
    assert_allclose(alice, np.eye(2))
    assert_allclose(bob, np.eye(2))
    alice, bob = correction_unitaries(2, 0, 1)
    assert_allclose(alice, np.diag([1, -1]), atol=1e-12)
    assert_allclose(bob, np.diag([1, 1j]), atol=1e-12)


def test_correction_unitaries_are_unitary():
    for d in (2, 3, 4):
        for j in range(d):
            for j_prime in range(d):
                for op in correction_unitaries(d, j, j_prime):
                    assert_allclose(op.conj().T @ op, np.eye(d), atol=1e-12)


def test_correction_unitaries_reject_out_of_range():
    with pytest.raises(InvalidStateError):
        correction_unitaries(2, 2, 0)


def test_predicted_final_state_examples():
    product = predicted_final_state([1.0, 0.0], [1.0, 0.0], PhaseMatrix.zero(2))
    assert_allclose(product.amplitudes, [1, 0, 0, 0], atol=1e-12)
    flat = predicted_final_state([0.8, 0.2], [0.6, 0.4], PhaseMatrix.zero(2))
    assert concurrence_pure(flat) == pytest.approx(0.0, abs=1e-7)
    saturated = predicted_final_state([0.8, 0.2], [0.6, 0.4], PhaseMatrix.pi_mm(2))
    assert concurrence_pure(saturated) == pytest.approx(0.783837, abs=1e-6)


def test_predicted_final_state_rejects_mismatch():
    with pytest.raises(InvalidStateError):
        predicted_final_state([0.5, 0.5], [0.2, 0.3, 0.5], PhaseMatrix.zero(2))
    with pytest.raises(InvalidStateError):
        predicted_final_state([0.5, 0.5], [0.5, 0.5], PhaseMatrix.zero(3))
    with pytest.raises(InvalidStateError):
        predicted_final_state([0.5, 0.4], [0.5, 0.5], PhaseMatrix.zero(2))


def test_maximally_entangled_qubit_inputs():
    result = run_rpbes_pure([0.5, 0.5], [0.5, 0.5], PhaseMatrix.pi_mm(2))
    assert result.final_concurrence == pytest.approx(1.0, abs=1e-10)
    assert_allclose(result.outcomes.probabilities, 0.25, atol=1e-12)
    assert result.classical_bits_alice == 1.0
    assert result.classical_bits_bob == 2.0


def test_uniform_qutrits_give_maximal_entanglement():
    third = [1 / 3, 1 / 3, 1 / 3]
    result = run_rpbes_pure(third, third, PhaseMatrix.fourier(3))
    assert result.final_concurrence == pytest.approx(math.sqrt(4 / 3), abs=1e-9)
    assert len(result.outcomes) == 9


def test_saturation_for_random_qubit_weights(rng):
    for _ in range(50):
        lam0, eta0 = rng.uniform(0.0, 1.0, size=2)
        lam, eta = [lam0, 1 - lam0], [eta0, 1 - eta0]
        result = run_rpbes_pure(lam, eta, PhaseMatrix.pi_mm(2))
        assert result.final_concurrence == pytest.approx(saturation_value(lam, eta), abs=1e-9)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_outcome_independence(d, rng):
    for _ in range(20):
        lam, eta = random_weights(rng, d), random_weights(rng, d)
        theta = PhaseMatrix.random(d, seed=rng)
        result = run_rpbes_pure(lam, eta, theta)
        assert len(result.outcomes) == d * d
        assert_allclose(result.outcomes.probabilities, 1 / d ** 2, atol=1e-10)
        assert result.min_pairwise_fidelity >= 1 - 1e-9
        for state in result.corrected_states:
            assert fidelity(state, result.final_state) >= 1 - 1e-9


def test_outcome_labels_follow_measurement_order():
    result = run_rpbes_pure([0.7, 0.2, 0.1], [0.5, 0.3, 0.2], PhaseMatrix.fourier(3))
    labels = [result.outcome_label(i) for i in range(9)]
    assert labels == [(j, j_prime) for j in range(3) for j_prime in range(3)]


def test_mixed_class_spec_validation():
    with pytest.raises(ValueError):
        MixedClassSpec(weights=[0.5, 0.4], amplitude_rows=[[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        MixedClassSpec(weights=[1.0], amplitude_rows=[[1, 1]])
    with pytest.raises(ValueError):
        MixedClassSpec(weights=[0.2, 0.3, 0.5], amplitude_rows=[[1, 0], [0, 1], [1, 0]])


def test_mixed_class_state_is_valid():
    rho = mixed_class_state(chi_mixture(0.3))
    rho.require_valid()
    assert concurrence_two_qubit(rho) == pytest.approx(0.4, abs=1e-10)


def test_pure_specs_reduce_to_pure_run(rng):
    lam, eta = random_weights(rng, 3), random_weights(rng, 3)
    theta = PhaseMatrix.random(3, seed=rng)
    mixed = run_rpbes_mixed_class(MixedClassSpec.pure(lam), MixedClassSpec.pure(eta), theta)
    pure = run_rpbes_pure(lam, eta, theta)
    assert fidelity(pure.final_state, mixed.final_state) == pytest.approx(1.0, abs=1e-9)
    assert_allclose(mixed.outcomes.probabilities, pure.outcomes.probabilities, atol=1e-10)
    assert mixed.min_pairwise_fidelity == pytest.approx(1.0, abs=1e-6)


def test_mixed_class_closing_example():
    spec_a = MixedClassSpec.pure([0.8, 0.2])
    result = run_rpbes_mixed_class(spec_a, chi_mixture(0.75), PhaseMatrix.pi_mm(2))
    assert result.final_concurrence == pytest.approx(0.4, abs=1e-9)
    assert_allclose(result.outcomes.probabilities, 0.25, atol=1e-10)
    assert result.max_pairwise_deviation < 1e-9
    assert result.min_pairwise_fidelity == pytest.approx(1.0, abs=1e-6)


QUTRIT_ROWS = [[1 / math.sqrt(3)] * 3, [1 / math.sqrt(3), -1 / math.sqrt(3), 1 / math.sqrt(3)]]


def test_mixed_qutrit_run_reports_fidelity_but_no_concurrence():
    spec_b = MixedClassSpec(weights=[0.5, 0.5], amplitude_rows=QUTRIT_ROWS)
    result = run_rpbes_mixed_class(MixedClassSpec.pure([0.5, 0.3, 0.2]), spec_b, PhaseMatrix.fourier(3))
    assert len(result.outcomes) == 9
    assert result.min_pairwise_fidelity == pytest.approx(1.0, abs=1e-6)
    assert result.final_state.purity() < 1.0 - 1e-3
    assert result.final_concurrence is None


def test_single_term_qutrit_class_keeps_its_concurrence(rng):
    lam, eta = random_weights(rng, 3), random_weights(rng, 3)
    theta = PhaseMatrix.fourier(3)
    mixed = run_rpbes_mixed_class(MixedClassSpec.pure(lam), MixedClassSpec.pure(eta), theta)
    pure = run_rpbes_pure(lam, eta, theta)
    assert mixed.final_concurrence == pytest.approx(pure.final_concurrence, abs=1e-8)


def test_mixed_class_balanced_mixture_is_unentangled():
    spec_a = MixedClassSpec.pure([0.8, 0.2])
    result = run_rpbes_mixed_class(spec_a, chi_mixture(0.5), PhaseMatrix.pi_mm(2))
    assert result.final_concurrence == pytest.approx(0.0, abs=1e-9)


def test_mixed_class_closed_form_matches_simulation(rng):
    for _ in range(50):
        q, lam0 = rng.uniform(0.0, 1.0, size=2)
        theta = PhaseMatrix.random(2, seed=rng)
        result = run_rpbes_mixed_class(MixedClassSpec.pure([lam0, 1 - lam0]), chi_mixture(q), theta)
        expected = mixed_class_concurrence(q, lam0, theta)
        assert concurrence(result.final_state) == pytest.approx(expected, abs=1e-9)


def test_predicted_mixed_state_matches_simulation(rng):
    for _ in range(20):
        d = int(rng.integers(2, 4))
        rows_a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rows_b = rng.normal(size=(2, d)) + 1j * rng.normal(size=(2, d))
        spec_a = MixedClassSpec(
            weights=random_weights(rng, d),
            amplitude_rows=rows_a / np.linalg.norm(rows_a, axis=1, keepdims=True),
        )
        spec_b = MixedClassSpec(
            weights=random_weights(rng, 2),
            amplitude_rows=rows_b / np.linalg.norm(rows_b, axis=1, keepdims=True),
        )
        theta = PhaseMatrix.random(d, seed=rng)
        result = run_rpbes_mixed_class(spec_a, spec_b, theta)
        predicted = predicted_mixed_state(spec_a, spec_b, theta)
        assert_allclose(result.final_state.matrix, predicted.matrix, atol=1e-9)
        assert_allclose(result.outcomes.probabilities, 1 / d ** 2, atol=1e-10)
        assert result.max_pairwise_deviation < 1e-8
