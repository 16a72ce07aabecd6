"""
Numerical checks of the distribution bound C14 <= C12·C34 and its chain form.

A strategy is an ``LoccRoundPlan``: the supplier measures first, then Alice,
Bob and the supplier may act again, each round conditioned on every earlier
outcome. Within one strategy the branch tree is expanded exactly; randomness
only enters when measurements are sampled.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, field_validator

from app.config import settings
from app.errors import InvalidPlanError, InvalidStateError
from app.services.entanglement import concurrence, concurrence_two_qubit, entanglement_of_formation
from app.services.measurement import (
    SUPPLIER_SHARES,
    Measurement,
    Outcome,
    OutcomeDistribution,
    PhaseMatrix,
    SeedLike,
    apply_measurement,
    bell_basis_measurement,
    derive_seed,
    identity_measurement,
    make_rng,
    random_kraus_channel,
    random_local_unitary,
    random_projective_measurement,
    rpbes_basis,
)
from app.services.protocol import NODE_SHARES, run_rpbes_pure
from app.services.quantum_core import (
    ArrayModel,
    DensityMatrix,
    PureState,
    State,
    partial_trace,
    pure_state_of,
    schmidt_alignment,
    schmidt_decomposition,
    tensor_product,
)

logger = logging.getLogger(__name__)


class Party(str, Enum):
    SUPPLIER = "supplier"
    ALICE = "alice"
    BOB = "bob"


class MeasurementSource(str, Enum):
    IDENTITY = "identity"
    FIXED = "fixed"
    RANDOM_PROJECTIVE = "random-projective"
    RANDOM_KRAUS = "random-kraus"
    RANDOM_UNITARY = "random-unitary"
    RPBES_BASIS = "rpbes-basis"


PARTY_SHARES: Dict[Party, Tuple[int, ...]] = {
    Party.SUPPLIER: SUPPLIER_SHARES,
    Party.ALICE: (0,),
    Party.BOB: (3,),
}


class LoccRound(ArrayModel):
    """
    One round of a plan.

    ``conditioned`` rounds draw a fresh measurement for every branch, so the
    operator may depend on all earlier outcomes; otherwise one draw serves
    every branch. ``outcomes`` bounds the Kraus count of random channels.
    """

    party: Party
    source: MeasurementSource
    kraus: Optional[Tuple[np.ndarray, ...]] = None
    theta: Optional[PhaseMatrix] = None
    outcomes: Tuple[int, int] = (2, 3)
    conditioned: bool = True

    @field_validator("kraus", mode="before")
    @classmethod
    def _coerce_kraus(cls, value):
        if value is None:
            return None
        return tuple(np.array(k, dtype=complex) for k in value)


class LoccRoundPlan(ArrayModel):
    """Ordered rounds; the supplier always acts first"""

    name: str = "custom"
    rounds: Tuple[LoccRound, ...]

    def validate_plan(self) -> "LoccRoundPlan":
        if not self.rounds:
            raise InvalidPlanError(f"plan '{self.name}' has no rounds")
        if self.rounds[0].party != Party.SUPPLIER:
            raise InvalidPlanError(
                f"plan '{self.name}' starts with {self.rounds[0].party.value}; the supplier must measure first"
            )
        for index, round_ in enumerate(self.rounds):
            if round_.source == MeasurementSource.FIXED and not round_.kraus:
                raise InvalidPlanError(f"round {index} of '{self.name}' is fixed but lists no Kraus operators")
            if round_.source == MeasurementSource.RPBES_BASIS and round_.party != Party.SUPPLIER:
                raise InvalidPlanError(f"round {index} of '{self.name}': only the supplier measures in the RPBES basis")
            low, high = round_.outcomes
            if low < 1 or high < low:
                raise InvalidPlanError(f"round {index} of '{self.name}' has outcome range {round_.outcomes}")
        return self

    @property
    def is_single_round(self) -> bool:
        return len(self.rounds) == 1


class BoundSample(BaseModel):
    trial: int
    strategy: str
    achieved: float
    branches: int


class BoundReport(BaseModel):
    """Sampled C14 values against the product of the link concurrences"""

    link_concurrences: Tuple[float, ...]
    bound: float
    eof_ceiling: float
    strategy: str
    seed: Optional[int] = None
    samples: Tuple[BoundSample, ...]
    max_achieved: float
    violations: int
    tolerance: float

    @property
    def c12(self) -> float:
        return self.link_concurrences[0]

    @property
    def c34(self) -> float:
        return self.link_concurrences[1]


def _as_two_qubit_density(state: State, name: str) -> DensityMatrix:
    if state.dims != (2, 2):
        raise InvalidStateError(f"{name} must be a two-qubit state, got dims {state.dims}")
    if isinstance(state, PureState):
        return state.require_normalized().density_matrix()
    return state.require_valid(settings.measurement_tolerance)


def link_product_bound(rho12: State, rho34: State) -> float:
    """C(ρ12)·C(ρ34)"""
    c12 = concurrence_two_qubit(_as_two_qubit_density(rho12, "rho12"))
    c34 = concurrence_two_qubit(_as_two_qubit_density(rho34, "rho34"))
    return c12 * c34


def proof_chain_bound(lam: Sequence[float], eta: Sequence[float], measurement: Measurement) -> float:
    """
    2√(λ0λ1η0η1) Σ_j Σ_r |M_r,00 M_r,11 − M_r,01 M_r,10| for a supplier measurement
    on two qubits, with inputs in computational Schmidt form.

    Sits between the achieved average concurrence and C12·C34.
    """
    lam, eta = np.asarray(lam, dtype=float), np.asarray(eta, dtype=float)
    if lam.size != 2 or eta.size != 2:
        raise InvalidStateError("the proof bound is defined for qubit links only")
    if measurement.dim != 4:
        raise InvalidStateError(f"expected a measurement on two qubits, got dimension {measurement.dim}")
    total = 0.0
    for kraus in measurement.kraus:
        total += float(np.sum(np.abs(kraus[:, 0] * kraus[:, 3] - kraus[:, 1] * kraus[:, 2])))
    return 2.0 * math.sqrt(lam[0] * lam[1] * eta[0] * eta[1]) * total


def _draw_measurement(round_: LoccRound, dim: int, rng: np.random.Generator) -> Measurement:
    target = PARTY_SHARES[round_.party]
    source = round_.source
    if source == MeasurementSource.IDENTITY:
        return identity_measurement(dim, target)
    if source == MeasurementSource.FIXED:
        return Measurement(kraus=round_.kraus, target=target, label="fixed")
    if source == MeasurementSource.RANDOM_PROJECTIVE:
        return random_projective_measurement(dim, rng, target)
    if source == MeasurementSource.RANDOM_KRAUS:
        low, high = round_.outcomes
        return random_kraus_channel(dim, int(rng.integers(low, high + 1)), rng, target)
    if source == MeasurementSource.RANDOM_UNITARY:
        return random_local_unitary(dim, rng, target)
    d = int(round(math.sqrt(dim)))
    theta = round_.theta if round_.theta is not None else PhaseMatrix.random(d, rng)
    return rpbes_basis(d, theta, target)


def multi_round_locc(
    rho12: State,
    rho34: State,
    plan: LoccRoundPlan,
    seed: SeedLike = None,
) -> OutcomeDistribution:
    """
    Expand the conditioned branch tree of a plan on ρ12 ⊗ ρ34.

    Returns {N, σ14} with one outcome per leaf, labelled by the concatenated
    outcome indices of every round. Leaves below the zero-probability
    threshold are dropped.
    """
    plan.validate_plan()
    rng = make_rng(seed)
    joint = tensor_product(_as_two_qubit_density(rho12, "rho12"), _as_two_qubit_density(rho34, "rho34"))
    threshold = settings.zero_probability_threshold

    branches: List[Tuple[Tuple[int, ...], float, DensityMatrix]] = [((), 1.0, joint)]
    for round_ in plan.rounds:
        dim = math.prod(joint.dims[i] for i in PARTY_SHARES[round_.party])
        shared = None if round_.conditioned else _draw_measurement(round_, dim, rng)
        expanded = []
        for label, probability, state in branches:
            measurement = shared if shared is not None else _draw_measurement(round_, dim, rng)
            for outcome in apply_measurement(state, measurement).outcomes:
                weight = probability * outcome.probability
                if weight >= threshold:
                    expanded.append((label + outcome.label, weight, outcome.state))
        branches = expanded

    outcomes = tuple(
        Outcome(label=label, probability=probability, state=partial_trace(state, NODE_SHARES))
        for label, probability, state in branches
    )
    logger.debug(f"Plan '{plan.name}' expanded to {len(outcomes)} branches")
    return OutcomeDistribution(outcomes=outcomes)


def _average_concurrence(distribution: OutcomeDistribution) -> float:
    return float(sum(o.probability * concurrence_two_qubit(o.state) for o in distribution.outcomes))


def _rpbes_round(theta: Optional[PhaseMatrix] = None) -> LoccRound:
    return LoccRound(party=Party.SUPPLIER, source=MeasurementSource.RPBES_BASIS, theta=theta)


def bell_plan() -> LoccRoundPlan:
    kraus = bell_basis_measurement().kraus
    return LoccRoundPlan(
        name="bell", rounds=(LoccRound(party=Party.SUPPLIER, source=MeasurementSource.FIXED, kraus=kraus),)
    )


def rpbes_plan(theta: Optional[PhaseMatrix] = None) -> LoccRoundPlan:
    """Supplier measures in the RPBES basis; a random θ is drawn when none is given"""
    name = "rpbes" if theta is None else "rpbes-fixed"
    return LoccRoundPlan(name=name, rounds=(_rpbes_round(theta),))


def _plan_presets() -> Dict[str, LoccRoundPlan]:
    supplier_projective = LoccRound(party=Party.SUPPLIER, source=MeasurementSource.RANDOM_PROJECTIVE)
    supplier_kraus = LoccRound(party=Party.SUPPLIER, source=MeasurementSource.RANDOM_KRAUS, outcomes=(2, 8))
    return {
        "bell": bell_plan(),
        "projective": LoccRoundPlan(name="projective", rounds=(supplier_projective,)),
        "kraus": LoccRoundPlan(name="kraus", rounds=(supplier_kraus,)),
        "rpbes": rpbes_plan(),
        "rpbes-pi-mm": LoccRoundPlan(name="rpbes-pi-mm", rounds=(_rpbes_round(PhaseMatrix.pi_mm(2)),)),
        "multi-round": LoccRoundPlan(
            name="multi-round",
            rounds=(
                LoccRound(party=Party.SUPPLIER, source=MeasurementSource.RANDOM_KRAUS, outcomes=(2, 3)),
                LoccRound(party=Party.ALICE, source=MeasurementSource.RANDOM_KRAUS, outcomes=(2, 2)),
                LoccRound(party=Party.BOB, source=MeasurementSource.RANDOM_KRAUS, outcomes=(2, 2)),
                LoccRound(party=Party.SUPPLIER, source=MeasurementSource.RANDOM_KRAUS, outcomes=(2, 2)),
            ),
        ),
        "local-unitary": LoccRoundPlan(
            name="local-unitary",
            rounds=(
                supplier_projective,
                LoccRound(party=Party.ALICE, source=MeasurementSource.RANDOM_UNITARY),
                LoccRound(party=Party.BOB, source=MeasurementSource.RANDOM_UNITARY),
            ),
        ),
    }


PLAN_FAMILIES: Dict[str, Tuple[str, ...]] = {
    "all": ("projective", "kraus", "rpbes", "multi-round"),
    "single": ("projective", "kraus", "rpbes"),
}


def strategy_plans(name: str) -> Tuple[LoccRoundPlan, ...]:
    """Plans of a named preset or family; trial i runs plans[i % len(plans)]"""
    presets = _plan_presets()
    if name in presets:
        return (presets[name],)
    if name in PLAN_FAMILIES:
        return tuple(presets[member] for member in PLAN_FAMILIES[name])
    raise InvalidPlanError(f"unknown plan '{name}', expected one of {sorted(presets) + sorted(PLAN_FAMILIES)}")


def _as_plans(plans: Union[LoccRoundPlan, Sequence[LoccRoundPlan]]) -> Tuple[LoccRoundPlan, ...]:
    if isinstance(plans, LoccRoundPlan):
        plans = (plans,)
    plans = tuple(plans)
    if not plans:
        raise InvalidPlanError("no strategy plans given")
    for plan in plans:
        plan.validate_plan()
    return plans


def _family_name(plans: Tuple[LoccRoundPlan, ...]) -> str:
    return "+".join(plan.name for plan in plans)


def _summarize(
    links: Sequence[float],
    samples: List[BoundSample],
    strategy: str,
    seed: Optional[int],
) -> BoundReport:
    bound = float(np.prod(links))
    tol = settings.bound_tolerance
    max_achieved = max((s.achieved for s in samples), default=0.0)
    violations = sum(1 for s in samples if s.achieved > bound + tol)
    if violations:
        logger.warning(f"{violations} of {len(samples)} samples exceed the bound {bound:.12g}")
    logger.info(
        f"Bound check '{strategy}': {len(samples)} samples, bound {bound:.9f}, "
        f"max achieved {max_achieved:.9f}, violations {violations}"
    )
    return BoundReport(
        link_concurrences=tuple(float(c) for c in links),
        bound=bound,
        eof_ceiling=entanglement_of_formation(min(bound, 1.0)),
        strategy=strategy,
        seed=seed,
        samples=tuple(samples),
        max_achieved=max_achieved,
        violations=violations,
        tolerance=tol,
    )


def _run_trials(worker, trials: int) -> List[BoundSample]:
    with ThreadPoolExecutor(max_workers=settings.max_workers) as executor:
        return list(executor.map(worker, range(trials)))


def monte_carlo_red(
    rho12: State,
    rho34: State,
    plans: Union[LoccRoundPlan, Sequence[LoccRoundPlan]],
    trials: int,
    seed: Optional[int] = None,
) -> BoundReport:
    """Average concurrence C14 of ``trials`` sampled strategies, checked against C12·C34"""
    if trials < 1:
        raise InvalidStateError(f"trials must be >= 1, got {trials}")
    plans = _as_plans(plans)
    seed = settings.default_seed if seed is None else int(seed)
    rho12 = _as_two_qubit_density(rho12, "rho12")
    rho34 = _as_two_qubit_density(rho34, "rho34")
    links = (concurrence_two_qubit(rho12), concurrence_two_qubit(rho34))

    def trial(index: int) -> BoundSample:
        plan = plans[index % len(plans)]
        distribution = multi_round_locc(rho12, rho34, plan, make_rng(derive_seed(seed, index)))
        return BoundSample(
            trial=index, strategy=plan.name, achieved=_average_concurrence(distribution), branches=len(distribution)
        )

    try:
        samples = _run_trials(trial, trials)
    except Exception as e:
        logger.error(f"Monte Carlo run failed: {e}")
        raise
    return _summarize(links, samples, _family_name(plans), seed)


def _sequential_rpbes(chain: Sequence[State], theta: Optional[PhaseMatrix]) -> float:
    """Fold the chain link by link with the pure-state protocol"""
    current = _pure_link(chain[0], 0)
    for index, link in enumerate(chain[1:], start=1):
        nxt = _pure_link(link, index)
        lam = schmidt_decomposition(current).coefficients
        eta = schmidt_decomposition(nxt).coefficients
        phases = theta if theta is not None else PhaseMatrix.pi_mm(2)
        current = run_rpbes_pure(lam, eta, phases).final_state
        logger.debug(f"Chain step {index}: concurrence {concurrence(current):.12f}")
    return concurrence(current)


def _pure_link(state: State, index: int) -> PureState:
    if state.dims != (2, 2):
        raise InvalidStateError(f"chain link {index} must be a two-qubit state, got dims {state.dims}")
    if isinstance(state, DensityMatrix):
        try:
            state = pure_state_of(state)
        except InvalidStateError:
            raise InvalidStateError(f"sequential RPBES needs pure links; link {index} is mixed")
    # alignment rotates the link into Σ√λ|kk>, which only changes local bases
    ua, ub = schmidt_alignment(state)
    return PureState(amplitudes=np.kron(ua, ub) @ state.amplitudes, dims=state.dims)


def simulate_chain(
    chain: Sequence[State],
    strategy: str = "sequential-rpbes",
    trials: int = 1,
    seed: Optional[int] = None,
    plans: Union[None, LoccRoundPlan, Sequence[LoccRoundPlan]] = None,
    theta: Optional[PhaseMatrix] = None,
) -> BoundReport:
    """
    Distribute entanglement along a chain of two-qubit links, one intermediate
    node at a time, and compare the end-to-end average concurrence with the
    product of link concurrences.

    ``sequential-rpbes`` is deterministic and yields one sample. ``random``
    samples a plan per trial (default family: single supplier measurements)
    and applies it at every intermediate node, branch by branch.
    """
    if len(chain) < 2:
        raise InvalidStateError(f"a chain needs at least two links, got {len(chain)}")
    links = [concurrence_two_qubit(_as_two_qubit_density(link, f"link {i}")) for i, link in enumerate(chain)]
    seed = settings.default_seed if seed is None else int(seed)

    if strategy == "sequential-rpbes":
        achieved = _sequential_rpbes(chain, theta)
        sample = BoundSample(trial=0, strategy=strategy, achieved=achieved, branches=4 ** (len(chain) - 1))
        return _summarize(links, [sample], strategy, seed)

    if strategy != "random":
        raise InvalidPlanError(f"unknown chain strategy '{strategy}', expected 'sequential-rpbes' or 'random'")
    if trials < 1:
        raise InvalidStateError(f"trials must be >= 1, got {trials}")
    plans = _as_plans(strategy_plans("single") if plans is None else plans)
    densities = [_as_two_qubit_density(link, f"link {i}") for i, link in enumerate(chain)]

    def trial(index: int) -> BoundSample:
        plan = plans[index % len(plans)]
        rng = make_rng(derive_seed(seed, index))
        branches: List[Tuple[float, DensityMatrix]] = [(1.0, densities[0])]
        for link in densities[1:]:
            expanded = []
            for probability, state in branches:
                for outcome in multi_round_locc(state, link, plan, rng).outcomes:
                    expanded.append((probability * outcome.probability, outcome.state))
            branches = expanded
        achieved = float(sum(p * concurrence_two_qubit(s) for p, s in branches))
        return BoundSample(trial=index, strategy=plan.name, achieved=achieved, branches=len(branches))

    try:
        samples = _run_trials(trial, trials)
    except Exception as e:
        logger.error(f"Chain simulation failed: {e}")
        raise
    return _summarize(links, samples, f"random:{_family_name(plans)}", seed)
