"""Independent standard-quantum-mechanics ground truth.

Ordinary Schrodinger propagation for constant and time-dependent
Hamiltonians, impulsive measurement couplings, and direct Kraus-chain
probabilities.  Everything the history layer predicts is checked against
the functions here; this module never looks at a history state.

Time-ordered exponentials are approximated by midpoint piecewise-constant
products (second order in the step).  A query with t < t0 uses the
anti-ordered inverse, which the signed-step product realizes exactly.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .tensor import Operator, StateVector, apply, embed_operator

if TYPE_CHECKING:
    from .measurement import MeasurementSchedule

DEFAULT_SUBSTEPS = 64  # midpoint steps per unit time


# ---------------------------------------------------------------------------
# scalar waveforms for time-dependent Hamiltonian terms


@dataclass(frozen=True)
class ConstantWave:
    value: float = 1.0

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class PiecewiseWave:
    """Step table: values[0] before times[0], values[i+1] from times[i] on."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.times) + 1:
            raise ValueError("piecewise table needs len(values) == len(times) + 1")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("piecewise breakpoints must be strictly increasing")

    def __call__(self, t: float) -> float:
        return self.values[bisect_right(self.times, t)]


@dataclass(frozen=True)
class SinusoidWave:
    amplitude: float
    frequency: float
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.sin(self.frequency * t + self.phase)


Waveform = ConstantWave | PiecewiseWave | SinusoidWave


@dataclass(frozen=True)
class HamiltonianSpec:
    """H(t) = sum_i w_i(t) * A_i with hermitian A_i on a common factor list."""

    terms: tuple[tuple[Operator, Waveform], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("Hamiltonian needs at least one term")
        object.__setattr__(self, "terms", tuple((op, wf) for op, wf in self.terms))
        first = self.terms[0][0]
        for op, _ in self.terms:
            op.require_hermitian()
            if op.factors != first.factors:
                raise ValueError("all Hamiltonian terms must share one factor list")

    @classmethod
    def constant(cls, op: Operator) -> "HamiltonianSpec":
        return cls(((op, ConstantWave()),))

    @property
    def factors(self):
        return self.terms[0][0].factors

    @property
    def dim(self) -> int:
        return self.terms[0][0].dim

    @property
    def is_constant(self) -> bool:
        return all(isinstance(wf, ConstantWave) for _, wf in self.terms)

    @cached_property
    def _constant_matrix(self) -> np.ndarray:
        out = sum(wf.value * op.matrix for op, wf in self.terms)
        out.setflags(write=False)
        return out

    @cached_property
    def _constant_eig(self) -> tuple[np.ndarray, np.ndarray]:
        evals, evecs = np.linalg.eigh(self._constant_matrix)
        evals.setflags(write=False)
        evecs.setflags(write=False)
        return evals, evecs

    def matrix_at(self, t: float) -> np.ndarray:
        if self.is_constant:
            return self._constant_matrix
        return sum(wf(t) * op.matrix for op, wf in self.terms)

    def embedded(self, factors) -> "HamiltonianSpec":
        """The same Hamiltonian extended by identities onto a larger space."""
        return HamiltonianSpec(
            tuple((embed_operator(op, factors), wf) for op, wf in self.terms)
        )


@dataclass(frozen=True)
class ImpulseEvent:
    """An instantaneous unitary kick acting at a single instant.

    The unitary may live on Q alone or on Q and one memory register; it is in
    effect for all query times t >= time (half-open segment convention).
    """

    time: float
    unitary: Operator

    def __post_init__(self):
        self.unitary.require_unitary()


# ---------------------------------------------------------------------------
# propagation


def _eigh_propagate(matrix: np.ndarray, amps: np.ndarray, span: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(matrix)
    return evecs @ (np.exp(-1j * evals * span) * (evecs.conj().T @ amps))


def evolve_const(h: Operator, psi0: StateVector, t: float, t0: float) -> StateVector:
    """exp(-i h (t - t0)) psi0, exact via eigendecomposition (works for t < t0)."""
    h.require_hermitian()
    if h.factors != psi0.factors:
        raise ValueError(
            f"factor mismatch: H on {h.factor_names()}, state on {psi0.factor_names()}"
        )
    return StateVector(psi0.factors, _eigh_propagate(h.matrix, psi0.amplitudes, t - t0))


def _n_steps(span: float, substeps: int) -> int:
    return max(1, int(math.ceil(abs(span) * substeps - 1e-12)))


def evolve_td(
    spec: HamiltonianSpec,
    psi0: StateVector,
    t: float,
    t0: float,
    substeps: int = DEFAULT_SUBSTEPS,
) -> StateVector:
    """Midpoint piecewise-constant product for the (anti-)time-ordered evolution.

    Constant specs collapse to the exact :func:`evolve_const` path.  For
    genuinely time-dependent specs the step count is ceil(|t - t0| * substeps)
    and the error is second order in the step.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if spec.factors != psi0.factors:
        raise ValueError(
            f"factor mismatch: H on {tuple(f.name for f in spec.factors)}, "
            f"state on {psi0.factor_names()}"
        )
    if spec.is_constant:
        evals, evecs = spec._constant_eig
        amps = evecs @ (np.exp(-1j * evals * (t - t0)) * (evecs.conj().T @ psi0.amplitudes))
        return StateVector(psi0.factors, amps)
    if t == t0:
        return psi0
    n = _n_steps(t - t0, substeps)
    delta = (t - t0) / n
    amps = psi0.amplitudes
    for i in range(n):
        mid = t0 + (i + 0.5) * delta
        amps = _eigh_propagate(spec.matrix_at(mid), amps, delta)
    return StateVector(psi0.factors, amps)


def evolve_schedule(
    spec: HamiltonianSpec,
    impulses: Sequence[ImpulseEvent],
    psi0_extended: StateVector,
    t: float,
    t0: float,
    substeps: int = DEFAULT_SUBSTEPS,
) -> StateVector:
    """Free evolution interleaved with impulse unitaries at their event times.

    ``psi0_extended`` lives on the system and all memory factors; the free
    Hamiltonian acts as identity on the memories.  An impulse at t_i has acted
    for every query time t >= t_i.
    """
    times = [e.time for e in impulses]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("impulse times must be strictly increasing")
    if times and times[0] < t0:
        raise ValueError(f"impulse at {times[0]} precedes start time {t0}")
    spec_ext = spec if spec.factors == psi0_extended.factors else spec.embedded(psi0_extended.factors)
    state = psi0_extended
    now = t0
    for event in impulses:
        if event.time > t:
            break
        state = evolve_td(spec_ext, state, event.time, now, substeps)
        v = embed_operator(event.unitary, psi0_extended.factors)
        state = apply(v, state)
        now = event.time
    return evolve_td(spec_ext, state, t, now, substeps)


# ---------------------------------------------------------------------------
# direct Kraus-chain probabilities


def oracle_chain_prob(
    schedule: "MeasurementSchedule",
    psi0: StateVector,
    assignments: Mapping[str, int],
    t: float,
    t0: float,
    substeps: int = DEFAULT_SUBSTEPS,
) -> float:
    """Probability of the assigned memory readings at clock time t.

    Computed on the system space alone by composing Kraus elements at their
    event times with free evolution between, never through a history state:
    assigned outcomes select one Kraus element, unassigned occurred events are
    summed over, and events after t score their assignment against the memory
    ready state (an event never disturbs statistics before it acts).
    Assignment values may index the full memory basis; the extra ready axis
    has probability 0 once the event has occurred.
    """
    known = {ev.memory.label: ev for ev in schedule.events}
    for name in assignments:
        if name not in known:
            raise ValueError(f"assignment references unknown memory {name!r}")
    prob_factor = 1.0
    branches = [psi0.amplitudes]
    now = t0
    for ev in schedule.events:
        assigned = assignments.get(ev.memory.label)
        if ev.time > t:  # not yet occurred: score against the ready state
            if assigned is not None:
                if not 0 <= assigned < ev.memory.dim:
                    raise ValueError(
                        f"outcome {assigned} out of range for memory {ev.memory.label}"
                    )
                prob_factor *= abs(ev.memory.ready_vector[assigned]) ** 2
            continue
        h = schedule.hamiltonian
        branches = [
            evolve_td(h, StateVector(psi0.factors, b), ev.time, now, substeps).amplitudes
            for b in branches
        ]
        now = ev.time
        kraus = [k.matrix for k in ev.instrument.kraus]
        if assigned is None:
            branches = [k @ b for k in kraus for b in branches]
        elif 0 <= assigned < len(kraus):
            branches = [kraus[assigned] @ b for b in branches]
        elif assigned < ev.memory.dim:
            return 0.0  # reading the ready axis after the event
        else:
            raise ValueError(
                f"outcome {assigned} out of range for memory {ev.memory.label}"
            )
    return prob_factor * float(sum(np.vdot(b, b).real for b in branches))
