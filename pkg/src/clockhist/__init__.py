"""Clock-conditioned history-state simulator.

Builds the static global history state of a quantum system over a finite
clock lattice, recovers ordinary time evolution, propagators and multi-time
measurement statistics by conditioning, and checks every prediction against
an independent Schrodinger/Kraus-chain oracle.
"""

from .clockgrid import (
    ClockGrid,
    Envelope,
    TruncationWarning,
    commensurate_grid,
    commutator_floor,
    flat_envelope,
    frequency_vector,
    gaussian_envelope,
    make_grid,
    omega_operator,
    time_operator,
)
from .errors import GuardError, NullConditioningError, ScenarioError, ToleranceError
from .history import (
    ConstraintResidual,
    FrequencySlice,
    HistoryState,
    build_history,
    condition_on_frequency,
    condition_on_time,
    constraint_operator,
    constraint_residual,
    eigen_residual,
    frequency_dichotomy,
    propagator,
)
from .measurement import (
    KrausInstrument,
    MeasurementSchedule,
    MemorySpec,
    ScheduledEvent,
    build_measured_history,
    conditional_prob,
    dilate_instrument,
    instrument_from_projectors,
    joint_prob,
    marginal_prob,
    multi_time_joint,
    prob_sweep,
)
from .oracle import (
    ConstantWave,
    HamiltonianSpec,
    ImpulseEvent,
    PiecewiseWave,
    SinusoidWave,
    evolve_const,
    evolve_schedule,
    evolve_td,
    oracle_chain_prob,
)
from .pauli import PauliExpression, PauliParseError, parse_pauli
from .tensor import (
    KrausCompleteness,
    Operator,
    SpaceLabel,
    StateVector,
    apply,
    basis_vector,
    check_kraus_complete,
    embed_operator,
    identity,
    kron,
    kron_all,
    matrix_exp,
    partial_project,
    permute_factors,
)

__version__ = "0.1.0"
