"""Global history states over the clock lattice and their conditioning.

A history state stores one system branch per clock point, branch_k =
phi_k * |psi(t_k)>, exploiting the exact clock-block-diagonal structure of
the global vector: the full clock (x) system vector is never flattened except
when the dense constraint operator itself is requested.

Conditioning on a clock reading divides the envelope weight back out (the
Bayes rule for amplitudes); conditioning on a lattice frequency contracts
with the DFT column and, for flat envelopes, either vanishes or returns an
energy eigenvector of the system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .clockgrid import ClockGrid, Envelope, apply_omega, flat_envelope, spectral_derivative
from .errors import GuardError, NullConditioningError
from .oracle import DEFAULT_SUBSTEPS, HamiltonianSpec, evolve_td
from .tensor import Operator, SpaceLabel, StateVector

HISTORY_NORM_TOL = 1e-10
EPS_COND = 1e-8
EPS_NULL = 1e-8
EPS_EIG = 1e-6

CONSTRAINT_DENSE_LIMIT = 4096


@dataclass(frozen=True)
class HistoryState:
    """Clock-block representation of the global vector.

    branches[k] holds the amplitudes of phi_k * |psi(t_k)> on ``sys_factors``
    (system Q, plus memory registers for measured histories).  ``event_times``
    records, for measured histories, which memory was written when.
    """

    grid: ClockGrid
    envelope: Envelope
    sys_factors: tuple[SpaceLabel, ...]
    branches: np.ndarray
    event_times: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        sys_factors = tuple(self.sys_factors)
        d = math.prod(f.dim for f in sys_factors)
        branches = np.array(self.branches, dtype=complex)
        if branches.shape != (self.grid.n, d):
            raise ValueError(
                f"branches shape {branches.shape} != ({self.grid.n}, {d})"
            )
        if self.envelope.grid != self.grid:
            raise ValueError("envelope grid differs from history grid")
        total = float(np.sum(np.abs(branches) ** 2))
        if abs(total - 1.0) > HISTORY_NORM_TOL:
            raise ValueError(f"history norm^2 {total} deviates from 1 beyond {HISTORY_NORM_TOL}")
        branch_norms = np.linalg.norm(branches, axis=1)
        if float(np.max(np.abs(branch_norms - np.abs(self.envelope.weights)))) > 1e-8:
            raise ValueError("branch norms do not match the envelope weights")
        branches.setflags(write=False)
        object.__setattr__(self, "sys_factors", sys_factors)
        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "event_times", tuple(self.event_times))

    @property
    def sys_dim(self) -> int:
        return self.branches.shape[1]

    def branch_state(self, k: int) -> StateVector:
        return StateVector(self.sys_factors, self.branches[k])

    def event_time_of(self, memory: str) -> float:
        for name, t in self.event_times:
            if name == memory:
                return t
        raise ValueError(f"history has no measurement event on memory {memory!r}")


def build_history(
    spec: HamiltonianSpec,
    psi0: StateVector,
    t0: float,
    grid: ClockGrid,
    envelope: Envelope,
    substeps: int = DEFAULT_SUBSTEPS,
) -> HistoryState:
    """History of the free dynamics: branch_k = phi_k * U(t_k, t0) psi0.

    Branch states come from the oracle's evolution operations, so conditioning
    the result reproduces the oracle trajectory identically.  Any (t0, psi(t0))
    pair on the same trajectory builds the same history; with time-dependent
    terms that holds to machine precision when substeps * grid.dt is an
    integer (the midpoint partitions then align exactly).
    """
    if not grid.contains(t0):
        raise ValueError(f"t0 = {t0} outside window [{grid.t_min}, {grid.t_max})")
    if abs(psi0.norm - 1.0) > 1e-10:
        raise ValueError(f"psi0 norm {psi0.norm} != 1")
    if spec.factors != psi0.factors:
        raise ValueError("Hamiltonian and initial state factor lists differ")
    if envelope.grid != grid:
        raise ValueError("envelope built on a different grid")
    phi = envelope.weights
    if spec.is_constant:
        evals, evecs = spec._constant_eig
        coeff = evecs.conj().T @ psi0.amplitudes
        phases = np.exp(-1j * np.outer(grid.times - t0, evals))
        states = (phases * coeff) @ evecs.T
    else:
        states = np.empty((grid.n, spec.dim), dtype=complex)
        for k, t_k in enumerate(grid.times):
            states[k] = evolve_td(spec, psi0, t_k, t0, substeps).amplitudes
    return HistoryState(grid, envelope, psi0.factors, phi[:, None] * states)


def condition_on_time(
    hist: HistoryState, t: float, eps_cond: float = EPS_COND
) -> StateVector:
    """System state at the nearest clock point: branch_k / phi_k.

    Raises :class:`NullConditioningError` when the clock weight there is below
    ``eps_cond`` (conditioning on a null-probability time is undefined).
    """
    k = hist.grid.nearest_index(t)
    phi_k = hist.envelope.weights[k]
    if abs(phi_k) < eps_cond:
        raise NullConditioningError(
            f"conditioning on null-probability time t_{k} = {hist.grid.times[k]} "
            f"(|phi| = {abs(phi_k):.3e} < {eps_cond})"
        )
    return StateVector(hist.sys_factors, hist.branches[k] / phi_k)


def condition_on_frequency(hist: HistoryState, j: int) -> StateVector:
    """Unnormalized frequency slice sum_k e^{-i omega_j t_k} branch_k / sqrt(N).

    Supported for flat envelopes only.  For dynamics commensurate with the
    window the result is either null or an eigenvector of the system
    Hamiltonian with eigenvalue -omega_j (see :func:`eigen_residual`).
    """
    if not hist.envelope.is_flat:
        raise ValueError(
            "frequency conditioning requires a flat envelope "
            "(wave packets mix the frequency comb)"
        )
    w = hist.grid.omega_value(j)
    phases = np.exp(-1j * w * hist.grid.times) / math.sqrt(hist.grid.n)
    return StateVector(hist.sys_factors, phases @ hist.branches)


def eigen_residual(h: Operator, v: StateVector, omega: float) -> float:
    """Relative residual ||H v + omega v|| / ||v|| of the eigenvector relation."""
    if h.factors != v.factors:
        raise ValueError("operator/vector factor mismatch")
    nrm = v.norm
    if nrm == 0.0:
        raise ValueError("eigen residual of the zero vector is undefined")
    return float(np.linalg.norm(h.matrix @ v.amplitudes + omega * v.amplitudes)) / nrm


@dataclass(frozen=True)
class FrequencySlice:
    """A classified frequency slice: null, or an energy eigenvector.

    ``residual`` is the relative eigen-residual of H v = -omega v, present
    only when the slice is not null.
    """

    vector: StateVector
    omega: float
    is_null: bool
    residual: float | None


def frequency_dichotomy(
    hist: HistoryState,
    spec: HamiltonianSpec,
    j: int,
    eps_null: float = EPS_NULL,
    eps_eig: float = EPS_EIG,
) -> FrequencySlice:
    """Classify the frequency slice at lattice index j.

    For a flat-envelope history of a constant Hamiltonian commensurate with
    the window, every slice is either null (norm <= eps_null) or an
    eigenvector of the Hamiltonian with eigenvalue -omega_j (relative
    residual <= eps_eig).  A slice that is neither trips a guard: the
    dynamics do not line up with the frequency lattice.
    """
    if not spec.is_constant:
        raise ValueError("frequency classification needs a constant Hamiltonian")
    vec = condition_on_frequency(hist, j)
    omega = hist.grid.omega_value(j)
    if vec.norm <= eps_null:
        return FrequencySlice(vec, omega, True, None)
    h_op = Operator(spec.factors, spec._constant_matrix)
    res = eigen_residual(h_op, vec, omega)
    if res > eps_eig:
        raise GuardError(
            f"frequency slice at omega_{j} = {omega:.6g} is neither null "
            f"(norm {vec.norm:.3e}) nor an eigenvector (residual {res:.3e}); "
            "the window is not commensurate with the dynamics"
        )
    return FrequencySlice(vec, omega, False, res)


def propagator(
    spec: HamiltonianSpec,
    initial: StateVector,
    t_initial: float,
    final: StateVector,
    t_final: float,
    grid: ClockGrid,
    substeps: int = DEFAULT_SUBSTEPS,
) -> complex:
    """Transition amplitude <final| U(t_final, t_initial) |initial>.

    Reads a single overlap off the flat-envelope history built with
    t0 = t_initial: the sqrt(N) factor undoes the discrete-basis Jacobian, so
    the value matches the continuum amplitude directly.  t_final snaps to the
    nearest clock point.
    """
    for psi, name in ((initial, "initial"), (final, "final")):
        if abs(psi.norm - 1.0) > 1e-10:
            raise ValueError(f"{name} state must have unit norm")
    hist = build_history(spec, initial, t_initial, grid, flat_envelope(grid), substeps)
    k = grid.nearest_index(t_final)
    return complex(
        math.sqrt(grid.n) * np.vdot(final.amplitudes, hist.branches[k])
    )


def constraint_operator(spec: HamiltonianSpec, grid: ClockGrid) -> Operator:
    """Dense Omega (x) 1 + sum_k |t_k><t_k| (x) H(t_k) on clock (x) system."""
    d = spec.dim
    if grid.n * d > CONSTRAINT_DENSE_LIMIT:
        raise ValueError(
            f"dense constraint needs N * dim <= {CONSTRAINT_DENSE_LIMIT}, "
            f"got {grid.n} * {d}"
        )
    from .clockgrid import omega_operator  # local to keep module import light

    mat = np.kron(omega_operator(grid).matrix, np.eye(d))
    if spec.is_constant:
        mat += np.kron(np.eye(grid.n), spec._constant_matrix)
    else:
        for k, t_k in enumerate(grid.times):
            sl = slice(k * d, (k + 1) * d)
            mat[sl, sl] += spec.matrix_at(t_k)
    return Operator((grid.label,) + tuple(spec.factors), mat)


@dataclass(frozen=True)
class ConstraintResidual:
    """Norms of the constraint applied to a history.

    ``raw`` is ||(Omega (x) 1 + H) Phi||: for an envelope of width n it equals
    the envelope's frequency spread 1/sqrt(n) up to discretization, and it
    vanishes as the envelope flattens (the essential-eigenvalue sequence).
    ``regularized`` adds the i*phidot/phi counterterm that cancels the
    envelope contribution, so it measures pure discretization error and must
    vanish to grid accuracy for exactly built histories.
    """

    raw: float
    regularized: float


def constraint_residual(hist: HistoryState, spec: HamiltonianSpec) -> ConstraintResidual:
    """Constraint norms computed branch-wise (spectral Omega, no dense build)."""
    if tuple(spec.factors) != hist.sys_factors:
        raise ValueError(
            "constraint residual needs a measurement-free history on the "
            "Hamiltonian's own factors"
        )
    b = hist.branches
    grid = hist.grid
    if spec.is_constant:
        hb = b @ spec._constant_matrix.T
    else:
        hb = np.empty_like(b)
        for k, t_k in enumerate(grid.times):
            hb[k] = spec.matrix_at(t_k) @ b[k]
    ob = apply_omega(grid, b)
    raw = float(np.linalg.norm(ob + hb))

    phi = hist.envelope.weights
    phidot = spectral_derivative(grid, phi)
    keep = np.abs(phi) > 1e-14 * float(np.max(np.abs(phi)))
    ratio = np.where(keep, phidot / np.where(keep, phi, 1.0), 0.0)
    reg = float(np.linalg.norm(ob + 1j * ratio[:, None] * b + hb))
    return ConstraintResidual(raw, reg)
