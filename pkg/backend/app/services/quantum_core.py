"""Dense linear algebra for multipartite pure states and density matrices.

Subsystems are indexed from 0 in row-major tensor order, so the four shares
of a supplier/node network (Alice, Sapna, Sapna, Bob) are 0, 1, 2, 3.
"""
import logging
import math
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.config import settings
from app.errors import InvalidStateError

logger = logging.getLogger(__name__)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class ArrayModel(BaseModel):
    """Frozen pydantic model that may hold numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class PureState(ArrayModel):
    """Amplitude vector over a tensor product of subsystems"""

    amplitudes: np.ndarray
    dims: Tuple[int, ...]

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _coerce_amplitudes(cls, value):
        return _readonly(np.array(value, dtype=complex).reshape(-1))

    @field_validator("dims", mode="before")
    @classmethod
    def _coerce_dims(cls, value):
        dims = tuple(int(d) for d in value)
        if not dims or any(d < 2 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {dims}")
        return dims

    @model_validator(mode="after")
    def _check_length(self):
        if self.amplitudes.size != math.prod(self.dims):
            raise ValueError(
                f"{self.amplitudes.size} amplitudes do not match dims {self.dims}"
            )
        return self

    @classmethod
    def basis(cls, indices: Sequence[int], dims: Sequence[int]) -> "PureState":
        """Computational basis state |i0 i1 ...>"""
        amplitudes = np.zeros(math.prod(dims), dtype=complex)
        amplitudes[np.ravel_multi_index(tuple(indices), tuple(dims))] = 1.0
        return cls(amplitudes=amplitudes, dims=dims)

    @property
    def num_subsystems(self) -> int:
        return len(self.dims)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        norm = self.norm()
        if norm == 0.0:
            raise InvalidStateError("cannot normalize the zero vector")
        return PureState(amplitudes=self.amplitudes / norm, dims=self.dims)

    def require_normalized(self, tol: Optional[float] = None) -> "PureState":
        """Raise unless the squared norm is 1 within tolerance"""
        tol = settings.tolerance if tol is None else tol
        deviation = abs(self.norm() ** 2 - 1.0)
        if deviation > tol:
            raise InvalidStateError(f"state is not normalized (|norm^2 - 1| = {deviation:.3e})")
        return self

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(
            matrix=np.outer(self.amplitudes, self.amplitudes.conj()), dims=self.dims
        )


class DensityMatrix(ArrayModel):
    """Square complex matrix over a subsystem structure"""

    matrix: np.ndarray
    dims: Tuple[int, ...]

    @field_validator("matrix", mode="before")
    @classmethod
    def _coerce_matrix(cls, value):
        matrix = np.array(value, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {matrix.shape}")
        return _readonly(matrix)

    @field_validator("dims", mode="before")
    @classmethod
    def _coerce_dims(cls, value):
        dims = tuple(int(d) for d in value)
        if not dims or any(d < 2 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {dims}")
        return dims

    @model_validator(mode="after")
    def _check_shape(self):
        if self.matrix.shape[0] != math.prod(self.dims):
            raise ValueError(f"matrix of size {self.matrix.shape[0]} does not match dims {self.dims}")
        return self

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityMatrix":
        size = math.prod(dims)
        return cls(matrix=np.eye(size) / size, dims=dims)

    @property
    def num_subsystems(self) -> int:
        return len(self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2)

    def normalized(self) -> "DensityMatrix":
        trace = self.trace().real
        if trace <= 0.0:
            raise InvalidStateError("cannot normalize a matrix with non-positive trace")
        return DensityMatrix(matrix=self.matrix / trace, dims=self.dims)

    def require_valid(self, tol: Optional[float] = None) -> "DensityMatrix":
        """Raise unless Hermitian, unit trace and positive semidefinite within tolerance"""
        tol = settings.tolerance if tol is None else tol
        hermiticity = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if hermiticity > tol:
            raise InvalidStateError(f"density matrix is not Hermitian (deviation {hermiticity:.3e})")
        trace = self.trace()
        if abs(trace - 1.0) > tol:
            raise InvalidStateError(f"density matrix trace is {trace.real:.12g}, expected 1")
        smallest = float(self.eigenvalues().min())
        if smallest < -tol:
            raise InvalidStateError(f"density matrix has negative eigenvalue {smallest:.3e}")
        return self

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


class SchmidtForm(ArrayModel):
    """Schmidt weights (squared coefficients) and local bases for one cut"""

    coefficients: np.ndarray
    basis_a: np.ndarray
    basis_b: np.ndarray
    group_a: Tuple[int, ...]
    group_b: Tuple[int, ...]
    dims: Tuple[int, ...]

    @field_validator("coefficients", "basis_a", "basis_b", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _readonly(np.array(value))

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    def reconstruct(self) -> PureState:
        """Rebuild Σ_k √λ_k |a_k>|b_k> in the original subsystem order"""
        matrix = self.basis_a @ np.diag(np.sqrt(self.coefficients)) @ self.basis_b.T
        order = self.group_a + self.group_b
        tensor = matrix.reshape(tuple(self.dims[i] for i in order))
        tensor = tensor.transpose(np.argsort(order))
        return PureState(amplitudes=tensor.reshape(-1), dims=self.dims)


State = Union[PureState, DensityMatrix]


def _check_targets(dims: Sequence[int], target: Iterable[int]) -> Tuple[int, ...]:
    target = tuple(int(t) for t in target)
    if not target:
        raise InvalidStateError("target subsystem list is empty")
    if len(set(target)) != len(target):
        raise InvalidStateError(f"duplicate subsystem indices in {target}")
    for index in target:
        if index < 0 or index >= len(dims):
            raise InvalidStateError(f"subsystem index {index} out of range for dims {tuple(dims)}")
    return target


def _contract(tensor: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply op to the given tensor axes, leaving the others untouched"""
    k = len(axes)
    local_shape = tuple(tensor.shape[a] for a in axes)
    op_tensor = op.reshape(local_shape + local_shape)
    out = np.tensordot(op_tensor, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def tensor_product(a: State, b: State) -> State:
    """Tensor product of two states of the same kind"""
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(amplitudes=np.kron(a.amplitudes, b.amplitudes), dims=a.dims + b.dims)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(matrix=np.kron(a.matrix, b.matrix), dims=a.dims + b.dims)
    raise InvalidStateError(
        f"cannot take the tensor product of {type(a).__name__} and {type(b).__name__}"
    )


def partial_trace(rho: State, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every subsystem not listed in keep; kept subsystems stay in original order"""
    if isinstance(rho, PureState):
        rho = rho.density_matrix()
    keep = sorted(_check_targets(rho.dims, keep))
    n = rho.num_subsystems
    drop = [i for i in range(n) if i not in keep]

    tensor = rho.matrix.reshape(rho.dims + rho.dims)
    perm = keep + drop + [n + i for i in keep] + [n + i for i in drop]
    kept_size = math.prod(rho.dims[i] for i in keep)
    dropped_size = math.prod(rho.dims[i] for i in drop)
    tensor = tensor.transpose(perm).reshape(kept_size, dropped_size, kept_size, dropped_size)
    reduced = np.einsum("ajbj->ab", tensor)
    return DensityMatrix(matrix=reduced, dims=tuple(rho.dims[i] for i in keep))


def _resolve_cut(dims: Sequence[int], cut) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    n = len(dims)
    if cut is None:
        if n != 2:
            raise InvalidStateError(f"a cut must be given for a {n}-partite state")
        return (0,), (1,)
    if len(cut) == 2 and all(isinstance(group, (list, tuple)) for group in cut):
        group_a, group_b = (tuple(int(i) for i in group) for group in cut)
    else:
        group_a = tuple(int(i) for i in cut)
        group_b = tuple(i for i in range(n) if i not in group_a)
    if not group_a or not group_b:
        raise InvalidStateError("both sides of a bipartition must be nonempty")
    if sorted(group_a + group_b) != list(range(n)):
        raise InvalidStateError(f"{group_a} | {group_b} is not a bipartition of {n} subsystems")
    return group_a, group_b


def schmidt_decomposition(psi: PureState, cut=None, cutoff: Optional[float] = None) -> SchmidtForm:
    """
    Schmidt decomposition of a pure state across a bipartition.

    The amplitude tensor is reshaped into a (dA x dB) matrix along the cut and
    decomposed by SVD; singular values below ``cutoff`` count as zero.

    Parameters
    ----------
    psi : PureState
        Normalized state.
    cut : pair of index groups, a single group (the rest forms side B), or
        None for a bipartite state.

    Returns
    -------
    SchmidtForm with descending weights λ_k = s_k².
    """
    psi.require_normalized()
    cutoff = settings.schmidt_cutoff if cutoff is None else cutoff
    group_a, group_b = _resolve_cut(psi.dims, cut)

    dim_a = math.prod(psi.dims[i] for i in group_a)
    dim_b = math.prod(psi.dims[i] for i in group_b)
    matrix = psi.tensor.transpose(group_a + group_b).reshape(dim_a, dim_b)
    u, s, vh = np.linalg.svd(matrix)
    s = np.where(s < cutoff, 0.0, s)
    rank = min(dim_a, dim_b)

    return SchmidtForm(
        coefficients=s[:rank] ** 2,
        basis_a=u[:, :rank],
        basis_b=vh[:rank, :].T,
        group_a=group_a,
        group_b=group_b,
        dims=psi.dims,
    )


def apply_local_operator(state: State, op: np.ndarray, target: Iterable[int]) -> State:
    """
    Apply op to the target subsystems: op|ψ> for kets, op ρ op† for density matrices.

    The result is not renormalized; measurement code reads probabilities off it.
    """
    target = _check_targets(state.dims, target)
    op = np.asarray(op, dtype=complex)
    local_size = math.prod(state.dims[i] for i in target)
    if op.shape != (local_size, local_size):
        raise InvalidStateError(
            f"operator of shape {op.shape} does not act on subsystems {target} of size {local_size}"
        )

    if isinstance(state, PureState):
        out = _contract(state.tensor, op, target)
        return PureState(amplitudes=out.reshape(-1), dims=state.dims)

    n = state.num_subsystems
    tensor = state.matrix.reshape(state.dims + state.dims)
    tensor = _contract(tensor, op, target)
    tensor = _contract(tensor, op.conj(), [n + t for t in target])
    size = state.matrix.shape[0]
    return DensityMatrix(matrix=tensor.reshape(size, size), dims=state.dims)


def fidelity(a: State, b: State) -> float:
    """Uhlmann fidelity; reduces to |<a|b>|² and <a|σ|a> when states are pure"""
    if a.dims != b.dims:
        raise InvalidStateError(f"cannot compare states with dims {a.dims} and {b.dims}")
    if isinstance(a, PureState) and isinstance(b, PureState):
        return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    if isinstance(a, PureState) or isinstance(b, PureState):
        psi, rho = (a, b) if isinstance(a, PureState) else (b, a)
        return float(np.real(np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)))
    # eigh keeps both square roots Hermitian for rank-deficient inputs
    values, vectors = scipy.linalg.eigh((a.matrix + a.matrix.conj().T) / 2)
    root = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T
    inner = scipy.linalg.eigvalsh(root @ b.matrix @ root.conj().T)
    return float(min(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2, 1.0))


def factor_out(psi: PureState, keep: Iterable[int], tol: Optional[float] = None) -> PureState:
    """Return the kept factor of a state that is a product across keep | rest"""
    tol = settings.measurement_tolerance if tol is None else tol
    keep = tuple(sorted(_check_targets(psi.dims, keep)))
    if len(keep) == psi.num_subsystems:
        return psi
    form = schmidt_decomposition(psi.normalized(), keep)
    if form.coefficients[0] < 1.0 - tol:
        raise InvalidStateError(
            f"state is entangled across {keep} (largest Schmidt weight {form.coefficients[0]:.12g})"
        )
    return PureState(amplitudes=form.basis_a[:, 0], dims=tuple(psi.dims[i] for i in keep))


def pure_state_of(rho: DensityMatrix, tol: Optional[float] = None) -> PureState:
    """Principal eigenvector of a rank-one density matrix"""
    tol = settings.measurement_tolerance if tol is None else tol
    values, vectors = np.linalg.eigh((rho.matrix + rho.matrix.conj().T) / 2)
    if values[-1] < 1.0 - tol:
        raise InvalidStateError(f"density matrix is mixed (largest eigenvalue {values[-1]:.12g})")
    return PureState(amplitudes=vectors[:, -1], dims=rho.dims)


def schmidt_state(weights: Sequence[float], tol: Optional[float] = None) -> PureState:
    """Σ_k √λ_k |kk> for the given Schmidt weights"""
    tol = settings.tolerance if tol is None else tol
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size < 2:
        raise InvalidStateError("Schmidt weights must be a list of at least two numbers")
    if np.any(weights < -tol):
        raise InvalidStateError(f"Schmidt weights must be nonnegative, got {weights.tolist()}")
    if abs(weights.sum() - 1.0) > tol:
        raise InvalidStateError(f"Schmidt weights sum to {weights.sum():.12g}, expected 1")
    d = weights.size
    amplitudes = np.zeros(d * d, dtype=complex)
    amplitudes[np.arange(d) * (d + 1)] = np.sqrt(np.clip(weights, 0.0, None))
    return PureState(amplitudes=amplitudes, dims=(d, d))


BELL_STATES = {
    "phi+": np.array([1, 0, 0, 1]) / np.sqrt(2),
    "phi-": np.array([1, 0, 0, -1]) / np.sqrt(2),
    "psi+": np.array([0, 1, 1, 0]) / np.sqrt(2),
    "psi-": np.array([0, 1, -1, 0]) / np.sqrt(2),
}


def bell_state(label: str = "phi+") -> PureState:
    try:
        return PureState(amplitudes=BELL_STATES[label], dims=(2, 2))
    except KeyError:
        raise InvalidStateError(f"unknown Bell state '{label}', expected one of {sorted(BELL_STATES)}")


def schmidt_alignment(psi: PureState) -> Tuple[np.ndarray, np.ndarray]:
    """Local unitaries (UA, UB) with (UA ⊗ UB)|ψ> = Σ_k √λ_k |kk>"""
    if psi.num_subsystems != 2 or psi.dims[0] != psi.dims[1]:
        raise InvalidStateError(f"alignment needs a d x d bipartite state, got dims {psi.dims}")
    form = schmidt_decomposition(psi)
    return form.basis_a.conj().T, form.basis_b.conj().T
