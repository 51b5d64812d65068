"""Shared generators for randomized differential tests (all explicitly seeded)."""

import numpy as np

from clockhist import (
    HamiltonianSpec,
    KrausInstrument,
    MeasurementSchedule,
    MemorySpec,
    Operator,
    ScheduledEvent,
    SinusoidWave,
    SpaceLabel,
    StateVector,
    basis_vector,
    instrument_from_projectors,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def q_label(dim: int) -> SpaceLabel:
    return SpaceLabel("Q", dim)


def rabi_spec(angle=np.pi / 2) -> HamiltonianSpec:
    return HamiltonianSpec.constant(Operator((q_label(2),), angle * SX))


def random_hermitian(rng, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2.0


def random_unitary(rng, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(rng, d: int) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_state_vector(rng, d: int) -> StateVector:
    return StateVector((q_label(d),), random_state(rng, d))


def random_kraus_family(rng, d: int, m: int) -> list[np.ndarray]:
    """m Kraus operators with exact completeness, via G_a S^{-1/2}."""
    gs = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(m)]
    s = sum(g.conj().T @ g for g in gs)
    evals, evecs = np.linalg.eigh(s)
    s_inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.conj().T
    return [g @ s_inv_sqrt for g in gs]


def random_instrument(rng, d: int, projective: bool) -> KrausInstrument:
    label = q_label(d)
    if projective:
        u = random_unitary(rng, d)
        return instrument_from_projectors(
            [StateVector((label,), u[:, i]) for i in range(d)]
        )
    m = int(rng.integers(2, d + 1))
    return KrausInstrument(
        tuple(Operator((label,), k) for k in random_kraus_family(rng, d, m))
    )


def random_schedule(rng, grid, max_events=3, max_total_dim=64, allow_td=False):
    """Random system + instruments + event times on grid points after t0 = t_min."""
    d = int(rng.choice([2, 3]))
    label = q_label(d)
    h_op = Operator((label,), random_hermitian(rng, d, scale=1.5))
    if allow_td and rng.random() < 0.5:
        drive = Operator((label,), random_hermitian(rng, d, scale=0.5))
        spec = HamiltonianSpec(
            ((h_op, SinusoidWave(1.0, 0.0, np.pi / 2)),  # const via sin(pi/2)
             (drive, SinusoidWave(float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.5, 2.0)))))
        )
    else:
        spec = HamiltonianSpec.constant(h_op)
    n_events = int(rng.integers(1, max_events + 1))
    ks = rng.choice(np.arange(grid.n // 8, grid.n - grid.n // 8), size=n_events, replace=False)
    times = sorted(float(grid.times[k]) for k in ks)
    events = []
    total = d
    for i, t in enumerate(times):
        instr = random_instrument(rng, d, projective=bool(rng.random() < 0.5))
        mem = MemorySpec(f"M{i + 1}", instr.n_outcomes)
        if total * mem.dim > max_total_dim:
            break
        total *= mem.dim
        events.append(ScheduledEvent(t, instr, mem))
    if not events:  # always keep at least one event
        instr = instrument_from_projectors([basis_vector(label, i) for i in range(d)])
        events = [ScheduledEvent(times[0], instr, MemorySpec("M1", d))]
    return MeasurementSchedule(tuple(events), spec), random_state_vector(rng, d)
