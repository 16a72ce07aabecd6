import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.errors import InvalidStateError
from app.services.entanglement import (
    average_concurrence,
    binary_entropy,
    concurrence,
    concurrence_pure,
    concurrence_two_qubit,
    decomposition_average_concurrence,
    det_scaled_concurrence,
    entanglement_of_formation,
    optimal_equal_concurrence_decomposition,
    unitary_remix,
)
from app.services.measurement import Outcome, OutcomeDistribution, PhaseMatrix, haar_unitary
from app.services.protocol import run_rpbes_pure
from app.services.quantum_core import (
    DensityMatrix,
    PureState,
    apply_local_operator,
    bell_state,
    fidelity,
    schmidt_state,
)
from tests.helpers import chi_mixture, random_density_matrix, random_pure_state


def werner(p: float) -> DensityMatrix:
    bell = bell_state().density_matrix().matrix
    return DensityMatrix(matrix=p * bell + (1 - p) * np.eye(4) / 4, dims=(2, 2))


def test_pure_concurrence_examples():
    assert concurrence_pure(bell_state()) == pytest.approx(1.0)
    assert concurrence_pure(PureState.basis([0, 1], [2, 2])) == pytest.approx(0.0, abs=1e-12)
    assert concurrence_pure(schmidt_state([0.8, 0.2])) == pytest.approx(0.8)
    assert concurrence_pure(schmidt_state([1 / 3, 1 / 3, 1 / 3])) == pytest.approx(math.sqrt(4 / 3))


def test_pure_concurrence_across_a_cut(rng):
    state = random_pure_state(rng, (2, 2, 2))
    assert 0.0 <= concurrence_pure(state, (0,)) <= 1.0 + 1e-12


def test_chi_mixture_concurrence_on_grid():
    for q in np.linspace(0.0, 1.0, 21):
        assert concurrence_two_qubit(chi_mixture(q).density_matrix()) == pytest.approx(abs(2 * q - 1), abs=1e-10)


def test_two_qubit_concurrence_examples():
    assert concurrence_two_qubit(chi_mixture(0.75).density_matrix()) == pytest.approx(0.5, abs=1e-10)
    assert concurrence_two_qubit(DensityMatrix.maximally_mixed([2, 2])) == pytest.approx(0.0, abs=1e-12)
    assert concurrence_two_qubit(werner(0.6)) == pytest.approx(0.4, abs=1e-10)


def test_two_qubit_concurrence_matches_pure_formula(rng):
    for _ in range(50):
        psi = random_pure_state(rng, (2, 2))
        assert concurrence_two_qubit(psi.density_matrix()) == pytest.approx(concurrence_pure(psi), abs=1e-10)


def test_two_qubit_concurrence_rejects_other_shapes():
    with pytest.raises(InvalidStateError):
        concurrence_two_qubit(DensityMatrix.maximally_mixed([3, 3]))


def test_concurrence_dispatch():
    assert concurrence(bell_state()) == pytest.approx(1.0)
    assert concurrence(werner(1.0)) == pytest.approx(1.0, abs=1e-10)
    qutrit = schmidt_state([1 / 3, 1 / 3, 1 / 3])
    assert concurrence(qutrit.density_matrix()) == pytest.approx(math.sqrt(4 / 3))
    with pytest.raises(InvalidStateError):
        concurrence(DensityMatrix.maximally_mixed([3, 3]))
    with pytest.raises(InvalidStateError):
        concurrence(DensityMatrix.maximally_mixed([2, 2, 2]))


def test_entanglement_of_formation_examples():
    assert entanglement_of_formation(0.0) == pytest.approx(0.0, abs=1e-12)
    assert entanglement_of_formation(1.0) == pytest.approx(1.0)
    assert entanglement_of_formation(0.8) == pytest.approx(0.721928, abs=1e-6)
    assert binary_entropy(0.5) == pytest.approx(1.0)


def test_entanglement_of_formation_is_strictly_increasing():
    values = [entanglement_of_formation(c) for c in np.linspace(0.01, 0.99, 50)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_entanglement_of_formation_rejects_out_of_range():
    with pytest.raises(InvalidStateError):
        entanglement_of_formation(1.5)
    with pytest.raises(InvalidStateError):
        entanglement_of_formation(-0.1)


def test_average_concurrence_of_single_outcome():
    psi = schmidt_state([0.8, 0.2])
    dist = OutcomeDistribution(outcomes=(Outcome(label=(0,), probability=1.0, state=psi),))
    assert average_concurrence(dist) == pytest.approx(0.8)


def test_average_concurrence_of_two_bell_states():
    dist = OutcomeDistribution(outcomes=(
        Outcome(label=(0,), probability=0.5, state=bell_state("phi+")),
        Outcome(label=(1,), probability=0.5, state=bell_state("psi-")),
    ))
    assert average_concurrence(dist) == pytest.approx(1.0)


def test_average_concurrence_of_rpbes_outcomes():
    result = run_rpbes_pure([0.8, 0.2], [0.6, 0.4], PhaseMatrix.pi_mm(2))
    expected = 4 * math.sqrt(0.8 * 0.2 * 0.6 * 0.4)
    assert average_concurrence(result.outcomes) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.783837, abs=1e-6)


def test_average_concurrence_rejects_bad_totals():
    dist = OutcomeDistribution(outcomes=(Outcome(label=(0,), probability=0.5, state=bell_state()),))
    with pytest.raises(InvalidStateError):
        average_concurrence(dist)
    with pytest.raises(InvalidStateError):
        average_concurrence(OutcomeDistribution(outcomes=()))


def test_decomposition_of_pure_input_is_the_state(rng):
    psi = random_pure_state(rng, (2, 2))
    decomposition = optimal_equal_concurrence_decomposition(psi.density_matrix())
    assert len(decomposition.states) == 1
    assert fidelity(decomposition.states[0], psi) == pytest.approx(1.0, abs=1e-10)


def test_decomposition_of_chi_mixture():
    rho = chi_mixture(0.75).density_matrix()
    decomposition = optimal_equal_concurrence_decomposition(rho)
    assert 2 <= len(decomposition.states) <= 4
    for state in decomposition.states:
        assert concurrence_pure(state) == pytest.approx(0.5, abs=1e-8)
    assert_allclose(decomposition.density_matrix().matrix, rho.matrix, atol=1e-8)


def test_decomposition_of_separable_werner_state():
    rho = werner(0.2)
    decomposition = optimal_equal_concurrence_decomposition(rho)
    for state in decomposition.states:
        assert concurrence_pure(state) == pytest.approx(0.0, abs=1e-8)
    assert_allclose(decomposition.density_matrix().matrix, rho.matrix, atol=1e-8)


@pytest.mark.parametrize("rank", [2, 3, 4])
def test_decomposition_reconstructs_and_equalizes(rank, rng):
    for _ in range(50):
        rho = random_density_matrix(rng, rank)
        target = concurrence_two_qubit(rho)
        decomposition = optimal_equal_concurrence_decomposition(rho)
        assert_allclose(decomposition.density_matrix().matrix, rho.matrix, atol=1e-8)
        for state in decomposition.states:
            assert concurrence_pure(state) == pytest.approx(target, abs=1e-8)
        assert decomposition_average_concurrence(decomposition) == pytest.approx(target, abs=1e-8)


def test_unitary_remix_keeps_density_matrix(rng):
    rho = random_density_matrix(rng, 3)
    decomposition = optimal_equal_concurrence_decomposition(rho)
    remixed = unitary_remix(decomposition, haar_unitary(5, seed=rng))
    assert_allclose(remixed.density_matrix().matrix, rho.matrix, atol=1e-8)
    assert decomposition_average_concurrence(remixed) >= concurrence_two_qubit(rho) - 1e-8


@pytest.mark.parametrize("seed", range(50))
def test_no_remixed_decomposition_beats_the_concurrence(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, 1 + seed % 4)
    target = concurrence_two_qubit(rho)
    decomposition = optimal_equal_concurrence_decomposition(rho)
    size = max(2, len(decomposition.states) + int(rng.integers(0, 3)))
    remixed = unitary_remix(decomposition, haar_unitary(size, seed=rng))
    assert_allclose(remixed.density_matrix().matrix, rho.matrix, atol=1e-8)
    assert decomposition_average_concurrence(remixed) >= target - 1e-8


@pytest.mark.parametrize("seed", range(50))
def test_pure_concurrence_survives_local_unitaries(seed):
    rng = np.random.default_rng(seed)
    dims = (2 + seed % 3, 2 + (seed // 3) % 3)
    psi = random_pure_state(rng, dims)
    rotated = apply_local_operator(psi, haar_unitary(dims[0], seed=rng), [0])
    rotated = apply_local_operator(rotated, haar_unitary(dims[1], seed=rng), [1])
    assert concurrence_pure(rotated) == pytest.approx(concurrence_pure(psi), abs=1e-10)


def test_unitary_remix_rejects_small_unitary(rng):
    decomposition = optimal_equal_concurrence_decomposition(random_density_matrix(rng, 4))
    with pytest.raises(InvalidStateError):
        unitary_remix(decomposition, np.eye(1))


def test_det_scaled_concurrence_identity(rng):
    for _ in range(50):
        psi = random_pure_state(rng, (2, 2))
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        lhs, rhs = det_scaled_concurrence(psi, a, b)
        assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, rhs))
