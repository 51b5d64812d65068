"""Von Neumann measurement machinery over history states.

An instrument writes its outcome into a memory register through a dilation
unitary applied impulsively at the event time; the memory then never evolves
again, so a single clock conditioning recovers single-time, joint, marginal,
conditional and multi-time outcome statistics.

Memories have one extra dimension beyond the outcome labels: basis states
0..m-1 record outcomes, basis state m is the default "ready" state.  Keeping
the ready axis orthogonal to every outcome makes pre-event outcome
probabilities exactly zero (sharp step functions); a custom ready state with
outcome overlap reproduces the general |<a|r>|^2 pre-event statistics.
Sums over the *full* m+1 basis are complete at every time; sums over outcome
labels alone are complete only once the event has occurred.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .clockgrid import ClockGrid, Envelope
from .errors import NullConditioningError, ToleranceError
from .history import EPS_COND, HistoryState
from .oracle import DEFAULT_SUBSTEPS, HamiltonianSpec, ImpulseEvent, evolve_schedule
from .tensor import (
    KRAUS_TOL,
    Operator,
    SpaceLabel,
    StateVector,
    check_kraus_complete,
    kron_all,
    partial_project,
)


@dataclass(frozen=True)
class KrausInstrument:
    """Ordered outcome family {K_a} with sum_a K_a^dag K_a = I certified."""

    kraus: tuple[Operator, ...]

    def __post_init__(self):
        kraus = tuple(self.kraus)
        if not kraus:
            raise ValueError("instrument needs at least one outcome")
        first = kraus[0]
        for k in kraus:
            if k.factors != first.factors:
                raise ValueError("Kraus operators must share one factor list")
        cert = check_kraus_complete(kraus)
        if not cert.passed:
            raise ToleranceError(
                f"Kraus family violates completeness by {cert.max_deviation:.3e} "
                f"(> {KRAUS_TOL})"
            )
        object.__setattr__(self, "kraus", kraus)

    @property
    def n_outcomes(self) -> int:
        return len(self.kraus)

    @property
    def dim(self) -> int:
        return self.kraus[0].dim


def instrument_from_projectors(basis: Sequence[StateVector]) -> KrausInstrument:
    """Projective instrument K_a = |a><a| from a complete orthonormal basis."""
    if not basis:
        raise ValueError("empty basis")
    factors = basis[0].factors
    mat = np.column_stack([v.amplitudes for v in basis])
    for v in basis:
        if v.factors != factors:
            raise ValueError("basis vectors live on different factors")
    gram = mat.conj().T @ mat
    if mat.shape[0] != mat.shape[1] or np.max(np.abs(gram - np.eye(len(basis)))) > 1e-10:
        raise ValueError("basis is not a complete orthonormal set")
    return KrausInstrument(
        tuple(Operator(factors, np.outer(v.amplitudes, v.amplitudes.conj())) for v in basis)
    )


@dataclass(frozen=True)
class MemorySpec:
    """Memory register M_i: outcome basis 0..m-1 plus a ready axis at index m."""

    label: str
    n_outcomes: int
    ready: np.ndarray | None = None

    def __post_init__(self):
        space = SpaceLabel(self.label, self.n_outcomes + 1)  # validates the name
        if space.name == "T" or space.name == "Q":
            raise ValueError("memory labels must be M1, M2, ...")
        if self.n_outcomes < 1:
            raise ValueError("memory needs at least one outcome")
        if self.ready is not None:
            r = np.array(self.ready, dtype=complex)
            if r.shape != (self.dim,):
                raise ValueError(f"ready state length {r.shape} != dim {self.dim}")
            if abs(np.linalg.norm(r) - 1.0) > 1e-10:
                raise ValueError("ready state must have unit norm")
            r.setflags(write=False)
            object.__setattr__(self, "ready", r)

    @property
    def dim(self) -> int:
        return self.n_outcomes + 1

    @property
    def space(self) -> SpaceLabel:
        return SpaceLabel(self.label, self.dim)

    @property
    def ready_vector(self) -> np.ndarray:
        if self.ready is not None:
            return self.ready
        r = np.zeros(self.dim, dtype=complex)
        r[self.n_outcomes] = 1.0
        return r

    def ready_state(self) -> StateVector:
        return StateVector((self.space,), self.ready_vector)


@dataclass(frozen=True)
class ScheduledEvent:
    time: float
    instrument: KrausInstrument
    memory: MemorySpec

    def __post_init__(self):
        if self.memory.n_outcomes < self.instrument.n_outcomes:
            raise ValueError(
                f"memory {self.memory.label} has {self.memory.n_outcomes} outcome "
                f"slots, instrument needs {self.instrument.n_outcomes}"
            )


@dataclass(frozen=True)
class MeasurementSchedule:
    """Ordered measurement events plus the free system Hamiltonian.

    Memories are assumed dynamically frozen: the Hamiltonian must act on the
    system factor alone (schedules with memory self-dynamics are rejected,
    there is no defined statistics for them here).
    """

    events: tuple[ScheduledEvent, ...]
    hamiltonian: HamiltonianSpec

    def __post_init__(self):
        events = tuple(self.events)
        times = [e.time for e in events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        labels = [e.memory.label for e in events]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate memory labels in schedule: {labels}")
        names = {f.name for f in self.hamiltonian.factors}
        if names != {"Q"}:
            raise ValueError(
                f"schedule Hamiltonian must act on the system factor only, got {sorted(names)}"
            )
        for e in events:
            if e.instrument.dim != self.hamiltonian.dim:
                raise ValueError(
                    f"instrument at t = {e.time} acts on dim {e.instrument.dim}, "
                    f"system has dim {self.hamiltonian.dim}"
                )
        object.__setattr__(self, "events", events)

    @property
    def memories(self) -> tuple[MemorySpec, ...]:
        return tuple(e.memory for e in self.events)

    def event_for(self, memory_label: str) -> ScheduledEvent:
        for e in self.events:
            if e.memory.label == memory_label:
                return e
        raise ValueError(f"no event writes memory {memory_label!r}")


def _orthonormal_extension(columns: np.ndarray, order: Sequence[int] | None) -> np.ndarray:
    """Extend orthonormal columns to a square frame, deterministically.

    Candidates are standard basis vectors tried in index order (or in the
    given permutation); each is orthogonalized twice against the accepted
    columns for stability and kept when its remainder is non-negligible.
    """
    dim, have = columns.shape
    if order is None:
        order = range(dim)
    frame = np.zeros((dim, dim), dtype=complex)
    frame[:, :have] = columns
    count = have
    for idx in order:
        if count == dim:
            break
        v = np.zeros(dim, dtype=complex)
        v[idx] = 1.0
        for _ in range(2):
            v = v - frame[:, :count] @ (frame[:, :count].conj().T @ v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            frame[:, count] = v / nrm
            count += 1
    if count != dim:
        raise ValueError("failed to complete the dilation frame")
    return frame


def dilate_instrument(
    instr: KrausInstrument,
    mem: MemorySpec,
    completion_order: Sequence[int] | None = None,
) -> Operator:
    """Measurement unitary V on Q (x) M extending psi (x) ready -> sum_a K_a psi (x) a.

    Only the action on the Q (x) ready sector is physical; the orthogonal
    complement is filled by a deterministic orthonormal completion
    (``completion_order`` permutes the candidate order - any completion yields
    identical observable statistics).
    """
    if mem.n_outcomes < instr.n_outcomes:
        raise ValueError(
            f"memory {mem.label} too small for {instr.n_outcomes} outcomes"
        )
    dq, dm = instr.dim, mem.dim
    total = dq * dm
    ready = mem.ready_vector
    ins = np.zeros((total, dq), dtype=complex)
    outs = np.zeros((total, dq), dtype=complex)
    for q in range(dq):
        e_q = np.zeros(dq, dtype=complex)
        e_q[q] = 1.0
        ins[:, q] = np.kron(e_q, ready)
        image = np.zeros(total, dtype=complex)
        for a, k in enumerate(instr.kraus):
            e_a = np.zeros(dm, dtype=complex)
            e_a[a] = 1.0
            image += np.kron(k.matrix[:, q], e_a)
        outs[:, q] = image
    in_frame = _orthonormal_extension(ins, completion_order)
    out_frame = _orthonormal_extension(outs, completion_order)
    q_factor = instr.kraus[0].factors
    v = Operator(q_factor + (mem.space,), out_frame @ in_frame.conj().T)
    return v.require_unitary()


def build_measured_history(
    schedule: MeasurementSchedule,
    psi0: StateVector,
    t0: float,
    grid: ClockGrid,
    envelope: Envelope,
    substeps: int = DEFAULT_SUBSTEPS,
) -> HistoryState:
    """History of system + memories under the scheduled impulsive measurements.

    Branches before an event are product with that memory's ready state;
    branches at or after it carry the dilated unitary's entanglement.  The
    global norm stays 1 because every factor applied is unitary.
    """
    if abs(psi0.norm - 1.0) > 1e-10:
        raise ValueError("psi0 must have unit norm")
    if psi0.factors != schedule.hamiltonian.factors:
        raise ValueError("psi0 must live on the schedule's system factor")
    if not grid.contains(t0):
        raise ValueError(f"t0 = {t0} outside window [{grid.t_min}, {grid.t_max})")
    if envelope.grid != grid:
        raise ValueError("envelope built on a different grid")
    for e in schedule.events:
        if not grid.contains(e.time):
            raise ValueError(f"event at {e.time} outside window [{grid.t_min}, {grid.t_max})")
    if schedule.events and schedule.events[0].time <= t0:
        raise ValueError("t0 must precede the first measurement event")

    memories = sorted(schedule.memories, key=lambda m: m.space._sort_key())
    factors = psi0.factors + tuple(m.space for m in memories)
    psi_ext = kron_all([psi0] + [m.ready_state() for m in memories])
    impulses = [
        ImpulseEvent(e.time, dilate_instrument(e.instrument, e.memory))
        for e in schedule.events
    ]
    spec_ext = schedule.hamiltonian.embedded(factors)
    phi = envelope.weights
    branches = np.empty((grid.n, psi_ext.dim), dtype=complex)
    for k, t_k in enumerate(grid.times):
        branches[k] = evolve_schedule(spec_ext, impulses, psi_ext, t_k, t0, substeps).amplitudes
    return HistoryState(
        grid,
        envelope,
        factors,
        phi[:, None] * branches,
        event_times=tuple((e.memory.label, e.time) for e in schedule.events),
    )


def _conditioned_weight(hist: HistoryState, t: float, eps_cond: float) -> tuple[int, float]:
    k = hist.grid.nearest_index(t)
    phi_k = abs(hist.envelope.weights[k])
    if phi_k < eps_cond:
        raise NullConditioningError(
            f"probability query at null-probability time t_{k} = {hist.grid.times[k]}"
        )
    return k, phi_k**2


def joint_prob(
    hist: HistoryState,
    assignments: Mapping[str, int],
    t: float,
    eps_cond: float = EPS_COND,
) -> float:
    """Probability that the assigned memories read the given basis indices at t.

    The squared norm of the projected branch, renormalized by the clock weight
    |phi_k|^2 so values match the plain Kraus-chain scale.  Assignments may
    reference any basis index of a memory, including its ready axis.
    """
    k, weight = _conditioned_weight(hist, t, eps_cond)
    vec = hist.branch_state(k)
    for label, outcome in assignments.items():
        vec = partial_project(vec, label, outcome)
    return float(vec.norm**2 / weight)


def marginal_prob(
    hist: HistoryState,
    assignments: Mapping[str, int],
    t: float,
    eps_cond: float = EPS_COND,
) -> float:
    """Outcome probability for a subset of memories, others traced out.

    Implemented directly as the norm of the partially projected branch.  For
    memories whose events have occurred by t this equals the explicit sum of
    :func:`joint_prob` over their outcome labels; for pre-event memories the
    trace also includes the ready axis.
    """
    return joint_prob(hist, assignments, t, eps_cond)


def conditional_prob(
    hist: HistoryState,
    later: tuple[str, int, float],
    earlier: tuple[str, int, float],
    eps_cond: float = EPS_COND,
) -> float:
    """P[(later outcome at t2) given (earlier outcome at t1)] via the Bayes quotient."""
    mem2, out2, t2 = later
    mem1, out1, t1 = earlier
    if t1 > t2:
        raise ValueError(f"earlier time {t1} exceeds later time {t2}")
    p_earlier = joint_prob(hist, {mem1: out1}, t1, eps_cond)
    if p_earlier < eps_cond**2:
        raise NullConditioningError(
            f"conditioning on null-probability outcome {mem1}={out1} at t = {t1} "
            f"(P = {p_earlier:.3e})"
        )
    return joint_prob(hist, {mem1: out1, mem2: out2}, t2, eps_cond) / p_earlier


def multi_time_joint(
    hist: HistoryState,
    readings: Sequence[tuple[str, int, float]],
    eps_cond: float = EPS_COND,
) -> float:
    """Joint probability of outcomes read at several (increasing) times.

    Because memories never evolve after their event, the multi-time statistics
    reduce to a single conditioning at the latest queried time; each queried
    time must be at or after the corresponding event.
    """
    if not readings:
        raise ValueError("no readings given")
    times = [t for _, _, t in readings]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"reading times must be strictly increasing, got {times}")
    for label, _, t in readings:
        if t < hist.event_time_of(label):
            raise ValueError(
                f"memory {label!r} is read at {t}, before its event at "
                f"{hist.event_time_of(label)}"
            )
    assignments = {label: outcome for label, outcome, _ in readings}
    if len(assignments) != len(readings):
        raise ValueError("duplicate memory in readings")
    return joint_prob(hist, assignments, times[-1], eps_cond)


def prob_sweep(
    hist: HistoryState, assignments: Mapping[str, int]
) -> np.ndarray:
    """Vectorized :func:`joint_prob` over every clock point at once.

    Entries where the clock weight vanishes are NaN (no conditioning there).
    """
    names = [f.name for f in hist.sys_factors]
    dims = {f.name: f.dim for f in hist.sys_factors}
    unknown = set(assignments) - set(names)
    if unknown:
        raise ValueError(f"assignments reference unknown factors {sorted(unknown)}")
    block = hist.branches.reshape([hist.grid.n] + [f.dim for f in hist.sys_factors])
    remaining = list(names)
    for label, outcome in assignments.items():
        if not 0 <= outcome < dims[label]:
            raise ValueError(f"outcome {outcome} out of range for {label}")
        block = block.take(outcome, axis=1 + remaining.index(label))
        remaining.remove(label)
    p = np.sum(np.abs(block.reshape(hist.grid.n, -1)) ** 2, axis=1)
    weight = np.abs(hist.envelope.weights) ** 2
    return np.where(weight > 0, p / np.where(weight == 0, 1.0, weight), np.nan)
