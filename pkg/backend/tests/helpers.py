import numpy as np

from app.services.protocol import MixedClassSpec
from app.services.quantum_core import DensityMatrix, PureState

CHI_ROWS = [[1 / np.sqrt(2), 1 / np.sqrt(2)], [1 / np.sqrt(2), -1 / np.sqrt(2)]]


def chi_mixture(q: float) -> MixedClassSpec:
    """q|χ+><χ+| + (1 − q)|χ−><χ−| with |χ±> = (|00> ± |11>)/√2"""
    return MixedClassSpec(weights=[q, 1 - q], amplitude_rows=CHI_ROWS)


def random_pure_state(rng: np.random.Generator, dims) -> PureState:
    size = int(np.prod(dims))
    amplitudes = rng.normal(size=size) + 1j * rng.normal(size=size)
    return PureState(amplitudes=amplitudes / np.linalg.norm(amplitudes), dims=dims)


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> DensityMatrix:
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return DensityMatrix(matrix=rho / np.trace(rho).real, dims=(2, 2))


def random_weights(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.dirichlet(np.ones(d))
