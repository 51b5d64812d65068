"""Scenario files: validation, execution, and the two-measurement verifier.

A scenario is a single JSON document (required ``"version": 1``) declaring a
clock grid, an envelope, the system and its Hamiltonian, an initial state, a
measurement schedule, and a list of queries.  Unknown keys anywhere in the
document are rejected, and every library precondition is checked while the
scenario objects are constructed - before any computation runs.

Queries emit CSV files (first column "t", one column per probability,
17-significant-digit decimals) plus a JSON run manifest recording the grid,
tolerances and the deviation of each query from its independent oracle.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .clockgrid import ClockGrid, Envelope, flat_envelope, gaussian_envelope, make_grid
from .errors import GuardError, ScenarioError
from .history import (
    HistoryState,
    build_history,
    constraint_residual,
    propagator,
)
from .measurement import (
    KrausInstrument,
    MeasurementSchedule,
    MemorySpec,
    ScheduledEvent,
    build_measured_history,
    conditional_prob,
    instrument_from_projectors,
    joint_prob,
    multi_time_joint,
    prob_sweep,
)
from .oracle import (
    DEFAULT_SUBSTEPS,
    ConstantWave,
    HamiltonianSpec,
    PiecewiseWave,
    SinusoidWave,
    evolve_td,
    oracle_chain_prob,
)
from .pauli import PauliParseError, parse_pauli
from .tensor import Operator, SpaceLabel, StateVector

VERIFY_TOL = 1e-9

_NUMBER = (int, float)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _check_keys(obj: Any, path: str, required: Sequence[str], optional: Sequence[str] = ()) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(path, f"expected an object, got {type(obj).__name__}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ScenarioError(path, f"missing required key(s) {missing}")
    unknown = [k for k in obj if k not in required and k not in optional]
    if unknown:
        raise ScenarioError(path, f"unknown key(s) {unknown}")


def _number(obj: dict, path: str, key: str) -> float:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, _NUMBER):
        raise ScenarioError(f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _integer(obj: dict, path: str, key: str) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"{path}.{key}", f"expected an integer, got {v!r}")
    return v


def _complex_entry(v: Any, path: str) -> complex:
    if (
        not isinstance(v, list)
        or len(v) != 2
        or any(isinstance(x, bool) or not isinstance(x, _NUMBER) for x in v)
    ):
        raise ScenarioError(path, f"expected an [re, im] pair, got {v!r}")
    return complex(v[0], v[1])


def _complex_vector(v: Any, path: str) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise ScenarioError(path, "expected a nonempty list of [re, im] pairs")
    return np.array([_complex_entry(x, f"{path}[{i}]") for i, x in enumerate(v)])


def _complex_matrix(v: Any, path: str) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise ScenarioError(path, "expected a nonempty list of rows")
    rows = [_complex_vector(row, f"{path}[{i}]") for i, row in enumerate(v)]
    if any(len(r) != len(rows[0]) for r in rows):
        raise ScenarioError(path, "ragged matrix rows")
    return np.array(rows)


# ---------------------------------------------------------------------------
# query descriptions


@dataclass(frozen=True)
class ProbVsTimeQuery:
    name: str
    probabilities: tuple[dict[str, int], ...]


@dataclass(frozen=True)
class JointQuery:
    name: str
    assignments: dict[str, int]
    time: float


@dataclass(frozen=True)
class ConditionalQuery:
    name: str
    later: tuple[str, int, float]
    earlier: tuple[str, int, float]


@dataclass(frozen=True)
class PropagatorQuery:
    name: str
    initial: StateVector
    t_initial: float
    final: StateVector
    t_final: float


@dataclass(frozen=True)
class ResidualSweepQuery:
    name: str
    n_values: tuple[float, ...]


Query = ProbVsTimeQuery | JointQuery | ConditionalQuery | PropagatorQuery | ResidualSweepQuery


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario, ready to execute."""

    grid: ClockGrid
    envelope: Envelope
    hamiltonian: HamiltonianSpec
    psi0: StateVector
    t0: float
    schedule: MeasurementSchedule | None
    queries: tuple[Query, ...]
    source: dict = field(repr=False)

    @property
    def system_label(self) -> SpaceLabel:
        return self.hamiltonian.factors[0]


# ---------------------------------------------------------------------------
# loading / validation


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from exc
    return parse_scenario(doc)


def parse_scenario(doc: Any) -> Scenario:
    _check_keys(
        doc,
        "$",
        required=["version", "grid", "envelope", "system", "initial_state", "t0", "queries"],
        optional=["schedule"],
    )
    if doc["version"] != 1:
        raise ScenarioError("$.version", f"unsupported version {doc['version']!r} (expected 1)")

    grid = _parse_grid(doc["grid"])
    envelope = _parse_envelope(doc["envelope"], grid)
    spec, q_label = _parse_system(doc["system"])
    psi0 = _parse_state(doc["initial_state"], q_label, "$.initial_state")
    t0 = _number(doc, "$", "t0")
    if not grid.contains(t0):
        raise ScenarioError("$.t0", f"t0 = {t0} outside window [{grid.t_min}, {grid.t_max})")
    if abs(psi0.norm - 1.0) > 1e-10:
        raise ScenarioError("$.initial_state", f"norm {psi0.norm} != 1")

    schedule = None
    if doc.get("schedule"):
        schedule = _parse_schedule(doc["schedule"], spec, q_label, grid, t0)

    queries = _parse_queries(doc["queries"], schedule, grid, q_label)
    return Scenario(grid, envelope, spec, psi0, t0, schedule, queries, source=doc)


def _parse_grid(obj: Any) -> ClockGrid:
    _check_keys(obj, "$.grid", required=["N", "t_min", "t_max"])
    try:
        return make_grid(_integer(obj, "$.grid", "N"), _number(obj, "$.grid", "t_min"), _number(obj, "$.grid", "t_max"))
    except ValueError as exc:
        raise ScenarioError("$.grid", str(exc)) from exc


def _parse_envelope(obj: Any, grid: ClockGrid) -> Envelope:
    _check_keys(obj, "$.envelope", required=["type"], optional=["n"])
    kind = obj["type"]
    if kind == "flat":
        if "n" in obj:
            raise ScenarioError("$.envelope", "'n' only applies to gaussian envelopes")
        return flat_envelope(grid)
    if kind == "gaussian":
        if "n" not in obj:
            raise ScenarioError("$.envelope", "gaussian envelope needs 'n'")
        try:
            return gaussian_envelope(grid, _number(obj, "$.envelope", "n"))
        except (ValueError, GuardError) as exc:
            raise ScenarioError("$.envelope", str(exc)) from exc
    raise ScenarioError("$.envelope.type", f"unknown envelope type {kind!r}")


def _parse_operator_on(obj: Any, label: SpaceLabel, n_qubits: int | None, path: str) -> Operator:
    if isinstance(obj, str):
        if n_qubits is None:
            raise ScenarioError(path, "Pauli expressions need a declared qubit count")
        try:
            return parse_pauli(obj, n_qubits).to_operator(n_qubits)
        except PauliParseError as exc:
            raise ScenarioError(path, str(exc)) from exc
    mat = _complex_matrix(obj, path)
    if mat.shape != (label.dim, label.dim):
        raise ScenarioError(path, f"matrix shape {mat.shape} != ({label.dim}, {label.dim})")
    return Operator((label,), mat)


def _parse_waveform(obj: Any, path: str):
    _check_keys(obj, path, required=["type"], optional=["value", "times", "values", "amplitude", "frequency", "phase"])
    kind = obj["type"]
    try:
        if kind == "const":
            _check_keys(obj, path, required=["type"], optional=["value"])
            return ConstantWave(_number(obj, path, "value") if "value" in obj else 1.0)
        if kind == "piecewise":
            _check_keys(obj, path, required=["type", "times", "values"])
            times = tuple(float(x) for x in obj["times"])
            values = tuple(float(x) for x in obj["values"])
            return PiecewiseWave(times, values)
        if kind == "sin":
            _check_keys(obj, path, required=["type", "amplitude", "frequency"], optional=["phase"])
            return SinusoidWave(
                _number(obj, path, "amplitude"),
                _number(obj, path, "frequency"),
                _number(obj, path, "phase") if "phase" in obj else 0.0,
            )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from exc
    raise ScenarioError(f"{path}.type", f"unknown waveform {kind!r} (expected const|piecewise|sin)")


def _parse_system(obj: Any) -> tuple[HamiltonianSpec, SpaceLabel]:
    _check_keys(obj, "$.system", required=["hamiltonian"], optional=["qubits", "dim", "time_dependent"])
    n_qubits = None
    if "qubits" in obj and "dim" in obj:
        raise ScenarioError("$.system", "give either 'qubits' or 'dim', not both")
    if "qubits" in obj:
        n_qubits = _integer(obj, "$.system", "qubits")
        if n_qubits < 1:
            raise ScenarioError("$.system.qubits", "need at least one qubit")
        dim = 2**n_qubits
    elif "dim" in obj:
        dim = _integer(obj, "$.system", "dim")
        if dim < 1:
            raise ScenarioError("$.system.dim", "dimension must be positive")
    else:
        raise ScenarioError("$.system", "need 'qubits' or 'dim'")
    label = SpaceLabel("Q", dim)

    terms = [(_parse_operator_on(obj["hamiltonian"], label, n_qubits, "$.system.hamiltonian"), ConstantWave())]
    for i, term in enumerate(obj.get("time_dependent", [])):
        tpath = f"$.system.time_dependent[{i}]"
        _check_keys(term, tpath, required=["operator", "waveform"])
        op = _parse_operator_on(term["operator"], label, n_qubits, f"{tpath}.operator")
        terms.append((op, _parse_waveform(term["waveform"], f"{tpath}.waveform")))
    try:
        return HamiltonianSpec(tuple(terms)), label
    except (ValueError, GuardError) as exc:
        raise ScenarioError("$.system", str(exc)) from exc


def _parse_state(obj: Any, label: SpaceLabel, path: str) -> StateVector:
    if isinstance(obj, bool):
        raise ScenarioError(path, "expected a basis index, bitstring or amplitude list")
    if isinstance(obj, int):
        if not 0 <= obj < label.dim:
            raise ScenarioError(path, f"basis index {obj} out of range for dim {label.dim}")
        amps = np.zeros(label.dim, dtype=complex)
        amps[obj] = 1.0
        return StateVector((label,), amps)
    if isinstance(obj, str):
        if not obj or any(c not in "01" for c in obj):
            raise ScenarioError(path, f"bitstring must be over {{0,1}}, got {obj!r}")
        if 2 ** len(obj) != label.dim:
            raise ScenarioError(path, f"bitstring length {len(obj)} does not address dim {label.dim}")
        amps = np.zeros(label.dim, dtype=complex)
        amps[int(obj, 2)] = 1.0
        return StateVector((label,), amps)
    amps = _complex_vector(obj, path)
    if amps.size != label.dim:
        raise ScenarioError(path, f"amplitude list length {amps.size} != dim {label.dim}")
    nrm = np.linalg.norm(amps)
    if abs(nrm - 1.0) > 1e-10:
        raise ScenarioError(path, f"state norm {nrm} != 1")
    return StateVector((label,), amps)


_PAULI_EIGENBASES = {
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "Y": np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2),
}


def _parse_instrument(obj: Any, label: SpaceLabel, path: str) -> KrausInstrument:
    _check_keys(obj, path, required=["type"], optional=["basis", "operators"])
    kind = obj["type"]
    try:
        if kind == "projective":
            _check_keys(obj, path, required=["type", "basis"])
            basis = obj["basis"]
            if isinstance(basis, str):
                if basis not in _PAULI_EIGENBASES:
                    raise ScenarioError(f"{path}.basis", f"unknown basis name {basis!r} (Z|X|Y)")
                if label.dim != 2:
                    raise ScenarioError(f"{path}.basis", "named bases apply to a single qubit")
                cols = _PAULI_EIGENBASES[basis]
            else:
                cols = _complex_matrix(basis, f"{path}.basis").T  # rows are basis vectors
            vectors = [StateVector((label,), cols[:, i]) for i in range(cols.shape[1])]
            return instrument_from_projectors(vectors)
        if kind == "kraus":
            _check_keys(obj, path, required=["type", "operators"])
            ops = [
                Operator((label,), _complex_matrix(m, f"{path}.operators[{i}]"))
                for i, m in enumerate(obj["operators"])
            ]
            return KrausInstrument(tuple(ops))
    except ScenarioError:
        raise
    except (ValueError, GuardError) as exc:
        raise ScenarioError(path, str(exc)) from exc
    raise ScenarioError(f"{path}.type", f"unknown instrument type {kind!r} (projective|kraus)")


def _parse_schedule(
    obj: Any, spec: HamiltonianSpec, label: SpaceLabel, grid: ClockGrid, t0: float
) -> MeasurementSchedule:
    if not isinstance(obj, list):
        raise ScenarioError("$.schedule", "expected a list of events")
    events = []
    for i, ev in enumerate(obj):
        epath = f"$.schedule[{i}]"
        _check_keys(ev, epath, required=["time", "memory", "instrument"], optional=["ready"])
        time = _number(ev, epath, "time")
        if not grid.contains(time):
            raise ScenarioError(f"{epath}.time", f"event time {time} outside window")
        instrument = _parse_instrument(ev["instrument"], label, f"{epath}.instrument")
        memory_label = ev["memory"]
        if not isinstance(memory_label, str):
            raise ScenarioError(f"{epath}.memory", "memory label must be a string")
        ready = None
        if "ready" in ev:
            ready = _complex_vector(ev["ready"], f"{epath}.ready")
        try:
            mem = MemorySpec(memory_label, instrument.n_outcomes, ready)
            events.append(ScheduledEvent(time, instrument, mem))
        except (ValueError, GuardError) as exc:
            raise ScenarioError(epath, str(exc)) from exc
    try:
        schedule = MeasurementSchedule(tuple(events), spec)
    except (ValueError, GuardError) as exc:
        raise ScenarioError("$.schedule", str(exc)) from exc
    if schedule.events and schedule.events[0].time <= t0:
        raise ScenarioError("$.schedule", f"first event at {schedule.events[0].time} must follow t0 = {t0}")
    return schedule


def _parse_assignments(obj: Any, schedule: MeasurementSchedule | None, path: str) -> dict[str, int]:
    if not isinstance(obj, dict) or not obj:
        raise ScenarioError(path, "expected a nonempty {memory: outcome} object")
    out: dict[str, int] = {}
    for mem, outcome in obj.items():
        if schedule is None:
            raise ScenarioError(path, "probability queries need a measurement schedule")
        try:
            event = schedule.event_for(mem)
        except ValueError as exc:
            raise ScenarioError(path, str(exc)) from exc
        if isinstance(outcome, bool) or not isinstance(outcome, int):
            raise ScenarioError(f"{path}.{mem}", f"outcome must be an integer, got {outcome!r}")
        if not 0 <= outcome < event.memory.dim:
            raise ScenarioError(
                f"{path}.{mem}", f"outcome {outcome} out of range (memory dim {event.memory.dim})"
            )
        out[mem] = outcome
    return out


def _parse_reading(obj: Any, schedule: MeasurementSchedule | None, grid: ClockGrid, path: str) -> tuple[str, int, float]:
    _check_keys(obj, path, required=["memory", "outcome", "time"])
    assignment = _parse_assignments({obj["memory"]: obj["outcome"]}, schedule, path)
    t = _number(obj, path, "time")
    if not grid.contains(t):
        raise ScenarioError(f"{path}.time", f"time {t} outside window")
    ((mem, outcome),) = assignment.items()
    return mem, outcome, t


def _parse_queries(
    obj: Any, schedule: MeasurementSchedule | None, grid: ClockGrid, label: SpaceLabel
) -> tuple[Query, ...]:
    if not isinstance(obj, list) or not obj:
        raise ScenarioError("$.queries", "expected a nonempty list")
    queries: list[Query] = []
    for i, q in enumerate(obj):
        qpath = f"$.queries[{i}]"
        if not isinstance(q, dict) or "type" not in q:
            raise ScenarioError(qpath, "query needs a 'type'")
        kind = q["type"]
        name = q.get("name", f"query{i:02d}_{kind}")
        if not isinstance(name, str) or not name:
            raise ScenarioError(f"{qpath}.name", "name must be a nonempty string")
        if kind == "prob_vs_time":
            _check_keys(q, qpath, required=["type", "probabilities"], optional=["name"])
            if not isinstance(q["probabilities"], list) or not q["probabilities"]:
                raise ScenarioError(f"{qpath}.probabilities", "expected a nonempty list")
            probs = tuple(
                _parse_assignments(p, schedule, f"{qpath}.probabilities[{j}]")
                for j, p in enumerate(q["probabilities"])
            )
            queries.append(ProbVsTimeQuery(name, probs))
        elif kind == "joint":
            _check_keys(q, qpath, required=["type", "assignments", "time"], optional=["name"])
            t = _number(q, qpath, "time")
            if not grid.contains(t):
                raise ScenarioError(f"{qpath}.time", f"time {t} outside window")
            queries.append(JointQuery(name, _parse_assignments(q["assignments"], schedule, f"{qpath}.assignments"), t))
        elif kind == "conditional":
            _check_keys(q, qpath, required=["type", "later", "earlier"], optional=["name"])
            later = _parse_reading(q["later"], schedule, grid, f"{qpath}.later")
            earlier = _parse_reading(q["earlier"], schedule, grid, f"{qpath}.earlier")
            if earlier[2] > later[2]:
                raise ScenarioError(qpath, "earlier reading must not follow the later one")
            queries.append(ConditionalQuery(name, later, earlier))
        elif kind == "propagator":
            _check_keys(q, qpath, required=["type", "initial", "t_initial", "final", "t_final"], optional=["name"])
            t_i = _number(q, qpath, "t_initial")
            t_f = _number(q, qpath, "t_final")
            for t, key in ((t_i, "t_initial"), (t_f, "t_final")):
                if not grid.contains(t):
                    raise ScenarioError(f"{qpath}.{key}", f"time {t} outside window")
            queries.append(
                PropagatorQuery(
                    name,
                    _parse_state(q["initial"], label, f"{qpath}.initial"),
                    t_i,
                    _parse_state(q["final"], label, f"{qpath}.final"),
                    t_f,
                )
            )
        elif kind == "residual_sweep":
            _check_keys(q, qpath, required=["type", "n_values"], optional=["name"])
            ns = q["n_values"]
            if not isinstance(ns, list) or not ns or any(
                isinstance(n, bool) or not isinstance(n, _NUMBER) or n <= 0 for n in ns
            ):
                raise ScenarioError(f"{qpath}.n_values", "expected a list of positive numbers")
            queries.append(ResidualSweepQuery(name, tuple(float(n) for n in ns)))
        else:
            raise ScenarioError(f"{qpath}.type", f"unknown query type {kind!r}")
    names = [q.name for q in queries]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ScenarioError("$.queries", f"duplicate query name(s) {dupes}")
    return tuple(queries)


# ---------------------------------------------------------------------------
# execution


def _column_label(assignments: Mapping[str, int]) -> str:
    # later memories first, matching P(M2=b,M1=a) reading order
    items = sorted(assignments.items(), key=lambda kv: int(kv[0][1:]), reverse=True)
    return "P(" + ",".join(f"{m}={o}" for m, o in items) + ")"


def _first_index_at_or_after(grid: ClockGrid, t: float) -> int:
    return min(int(math.ceil((t - grid.t_min) / grid.dt - 1e-9)), grid.n - 1)


def _segment_starts(grid: ClockGrid, schedule: MeasurementSchedule) -> list[int]:
    """First grid index of each inter-event segment (segment 0 starts at 0)."""
    return [0] + [_first_index_at_or_after(grid, e.time) for e in schedule.events]


def _oracle_sweep(
    scenario: Scenario, assignments: Mapping[str, int], substeps: int
) -> np.ndarray:
    """Kraus-chain oracle values at every grid time (piecewise constant)."""
    grid, schedule = scenario.grid, scenario.schedule
    out = np.empty(grid.n)
    starts = _segment_starts(grid, schedule)
    bounds = starts + [grid.n]
    for seg in range(len(starts)):
        lo, hi = bounds[seg], bounds[seg + 1]
        if lo >= hi:
            continue
        t_rep = grid.times[lo]
        out[lo:hi] = oracle_chain_prob(
            schedule, scenario.psi0, assignments, t_rep, scenario.t0, substeps
        )
    return out


@dataclass
class QueryResult:
    name: str
    kind: str
    csv_name: str
    header: list[str]
    rows: list[list[str]]
    oracle_deviation: float | None


@dataclass
class RunResult:
    scenario: Scenario
    queries: list[QueryResult]

    def max_oracle_deviation(self) -> float:
        devs = [q.oracle_deviation for q in self.queries if q.oracle_deviation is not None]
        return max(devs) if devs else 0.0


def _measured_history(scenario: Scenario, substeps: int) -> HistoryState:
    if scenario.schedule is None or not scenario.schedule.events:
        raise ScenarioError("$.schedule", "this operation needs at least one event")
    return build_measured_history(
        scenario.schedule, scenario.psi0, scenario.t0, scenario.grid, scenario.envelope, substeps
    )


def run_scenario(scenario: Scenario, substeps: int = DEFAULT_SUBSTEPS) -> RunResult:
    """Execute every query; deterministic for identical input documents."""
    results: list[QueryResult] = []
    hist: HistoryState | None = None
    needs_history = any(
        isinstance(q, (ProbVsTimeQuery, JointQuery, ConditionalQuery)) for q in scenario.queries
    )
    if needs_history:
        hist = _measured_history(scenario, substeps)
    grid = scenario.grid

    for q in scenario.queries:
        if isinstance(q, ProbVsTimeQuery):
            columns = [prob_sweep(hist, a) for a in q.probabilities]
            oracle_cols = [_oracle_sweep(scenario, a, substeps) for a in q.probabilities]
            dev = max(
                float(np.nanmax(np.abs(c - o))) for c, o in zip(columns, oracle_cols)
            )
            header = ["t"] + [_column_label(a) for a in q.probabilities]
            rows = [
                [_fmt(grid.times[k])] + [_fmt(float(c[k])) for c in columns]
                for k in range(grid.n)
            ]
            results.append(QueryResult(q.name, "prob_vs_time", f"{q.name}.csv", header, rows, dev))
        elif isinstance(q, JointQuery):
            value = joint_prob(hist, q.assignments, q.time)
            oracle = oracle_chain_prob(
                scenario.schedule,
                scenario.psi0,
                q.assignments,
                grid.times[grid.nearest_index(q.time)],
                scenario.t0,
                substeps,
            )
            header = ["t", _column_label(q.assignments)]
            rows = [[_fmt(q.time), _fmt(value)]]
            results.append(QueryResult(q.name, "joint", f"{q.name}.csv", header, rows, abs(value - oracle)))
        elif isinstance(q, ConditionalQuery):
            value = conditional_prob(hist, q.later, q.earlier)
            mem2, out2, t2 = q.later
            mem1, out1, t1 = q.earlier
            snap2 = grid.times[grid.nearest_index(t2)]
            snap1 = grid.times[grid.nearest_index(t1)]
            o_joint = oracle_chain_prob(
                scenario.schedule, scenario.psi0, {mem1: out1, mem2: out2}, snap2, scenario.t0, substeps
            )
            o_earlier = oracle_chain_prob(
                scenario.schedule, scenario.psi0, {mem1: out1}, snap1, scenario.t0, substeps
            )
            dev = abs(value - o_joint / o_earlier) if o_earlier > 0 else None
            header = ["t", "value"]
            rows = [[_fmt(t2), _fmt(value)]]
            results.append(QueryResult(q.name, "conditional", f"{q.name}.csv", header, rows, dev))
        elif isinstance(q, PropagatorQuery):
            g = propagator(scenario.hamiltonian, q.initial, q.t_initial, q.final, q.t_final, grid, substeps)
            evolved = evolve_td(scenario.hamiltonian, q.initial, q.t_final, q.t_initial, substeps)
            g_oracle = complex(np.vdot(q.final.amplitudes, evolved.amplitudes))
            header = ["t", "re", "im"]
            rows = [[_fmt(q.t_final), _fmt(g.real), _fmt(g.imag)]]
            results.append(QueryResult(q.name, "propagator", f"{q.name}.csv", header, rows, abs(g - g_oracle)))
        elif isinstance(q, ResidualSweepQuery):
            header = ["n", "residual", "regularized_residual"]
            rows = []
            dev = 0.0
            for n in q.n_values:
                env = gaussian_envelope(grid, n)
                h = build_history(scenario.hamiltonian, scenario.psi0, scenario.t0, grid, env, substeps)
                res = constraint_residual(h, scenario.hamiltonian)
                rows.append([_fmt(n), _fmt(res.raw), _fmt(res.regularized)])
                dev = max(dev, abs(res.raw - 1.0 / math.sqrt(n)))
            results.append(QueryResult(q.name, "residual_sweep", f"{q.name}.csv", header, rows, dev))
    return RunResult(scenario, results)


def write_outputs(
    result: RunResult,
    out_dir: str | Path,
    substeps: int = DEFAULT_SUBSTEPS,
    tolerance_scale: float = 1.0,
    scenario_path: str | None = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for q in result.queries:
        with open(out / q.csv_name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(q.header)
            writer.writerows(q.rows)
    grid = result.scenario.grid
    manifest = {
        "version": 1,
        "scenario": scenario_path,
        "grid": {"N": grid.n, "t_min": grid.t_min, "t_max": grid.t_max, "dt": grid.dt},
        "substeps": substeps,
        "tolerances": {
            "hermiticity": 1e-12,
            "unitarity": 1e-10,
            "kraus_completeness": 1e-10,
            "verify": VERIFY_TOL * tolerance_scale,
            "tolerance_scale": tolerance_scale,
        },
        "queries": [
            {
                "name": q.name,
                "type": q.kind,
                "csv": q.csv_name,
                "oracle_deviation": q.oracle_deviation,
            }
            for q in result.queries
        ],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


# ---------------------------------------------------------------------------
# two-measurement identity verification


@dataclass
class IdentityCheck:
    name: str
    max_deviation: float


@dataclass
class VerifyReport:
    checks: list[IdentityCheck]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.max_deviation <= self.tolerance for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "pass" if c.max_deviation <= self.tolerance else "FAIL"
            out.append(f"{status}  {c.name}: max deviation {c.max_deviation:.3e}")
        return out


def _corrupt(hist: HistoryState, branch_index: int) -> HistoryState:
    """Testing hook: displace the dominant amplitude of one branch.

    The dominant amplitude moves (sign-flipped) onto the neighbouring basis
    slot.  A plain sign flip would be invisible - every probability here is
    the norm of a basis slice - so the fault must move weight between slots
    to be catchable at all.
    """
    branches = np.array(hist.branches)
    k = branch_index % hist.grid.n
    j = int(np.argmax(np.abs(branches[k])))
    j2 = (j + 1) % branches.shape[1]
    branches[k, j], branches[k, j2] = branches[k, j2], -branches[k, j]
    return HistoryState(hist.grid, hist.envelope, hist.sys_factors, branches, hist.event_times)


def verify_report(
    scenario: Scenario,
    substeps: int = DEFAULT_SUBSTEPS,
    tolerance: float = VERIFY_TOL,
    corrupt_branch: int | None = None,
) -> VerifyReport:
    """Check the two-measurement probability identities against the Kraus oracle.

    For every ordered pair of events (other memories marginalized), over all
    grid times and the memories' full basis (outcome labels plus ready axis):

    * joint values match the oracle chain,
    * single-memory values equal both the oracle and the full-basis sum of
      the joint values,
    * multi-time joints reduce to the single conditioning at the later time,
    * the conditional is the Bayes quotient of oracle values (swept over
      post-event time pairs).
    """
    schedule = scenario.schedule
    if schedule is None or len(schedule.events) < 2:
        raise ScenarioError("$.schedule", "verification needs at least two events")
    hist = _measured_history(scenario, substeps)
    if corrupt_branch is not None:
        hist = _corrupt(hist, corrupt_branch)
    grid = scenario.grid

    dev_joint = dev_marg_a = dev_marg_b = dev_multi = dev_bayes = 0.0
    guard = 1e-6

    events = schedule.events
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            ea, eb = events[i], events[j]
            ma, mb = ea.memory, eb.memory
            sweep_a = {a: prob_sweep(hist, {ma.label: a}) for a in range(ma.dim)}
            sweep_b = {b: prob_sweep(hist, {mb.label: b}) for b in range(mb.dim)}
            sweep_ab = {
                (a, b): prob_sweep(hist, {ma.label: a, mb.label: b})
                for a in range(ma.dim)
                for b in range(mb.dim)
            }
            oracle_a = {a: _oracle_sweep(scenario, {ma.label: a}, substeps) for a in range(ma.dim)}
            oracle_b = {b: _oracle_sweep(scenario, {mb.label: b}, substeps) for b in range(mb.dim)}
            oracle_ab = {
                ab: _oracle_sweep(scenario, {ma.label: ab[0], mb.label: ab[1]}, substeps)
                for ab in sweep_ab
            }

            for (a, b), sw in sweep_ab.items():
                dev_joint = max(dev_joint, float(np.nanmax(np.abs(sw - oracle_ab[(a, b)]))))
            for a in range(ma.dim):
                total = np.sum([sweep_ab[(a, b)] for b in range(mb.dim)], axis=0)
                dev_marg_a = max(
                    dev_marg_a,
                    float(np.nanmax(np.abs(sweep_a[a] - total))),
                    float(np.nanmax(np.abs(sweep_a[a] - oracle_a[a]))),
                )
            for b in range(mb.dim):
                total = np.sum([sweep_ab[(a, b)] for a in range(ma.dim)], axis=0)
                dev_marg_b = max(
                    dev_marg_b,
                    float(np.nanmax(np.abs(sweep_b[b] - total))),
                    float(np.nanmax(np.abs(sweep_b[b] - oracle_b[b]))),
                )

            # first grid index at or after each event time; an event past the
            # last grid point has no post-event reading to check
            ka0 = _first_index_at_or_after(grid, ea.time)
            kb0 = _first_index_at_or_after(grid, eb.time)
            if grid.times[ka0] < ea.time or grid.times[kb0] < eb.time:
                continue
            k_last = grid.n - 1
            kp_idx = np.arange(ka0, grid.n)
            for a in range(ma.n_outcomes):
                pa = sweep_a[a][ka0:]
                pa_oracle = oracle_a[a][ka0:]
                for b in range(mb.n_outcomes):
                    joint_sw = sweep_ab[(a, b)]
                    # multi-time reduction: sweep the earlier reading time at
                    # fixed final time, then the final time at fixed earlier
                    for kp in range(ka0, min(kb0, k_last)):
                        mt = multi_time_joint(
                            hist,
                            [(ma.label, a, grid.times[kp]), (mb.label, b, grid.times[k_last])],
                        )
                        dev_multi = max(dev_multi, abs(mt - joint_sw[k_last]))
                    for kq in range(max(kb0, ka0 + 1), grid.n):
                        mt = multi_time_joint(
                            hist,
                            [(ma.label, a, grid.times[ka0]), (mb.label, b, grid.times[kq])],
                        )
                        dev_multi = max(dev_multi, abs(mt - joint_sw[kq]))

                    # Bayes quotient vs the oracle's, over all valid time pairs
                    for kq in range(kb0, grid.n):
                        mask = (kp_idx <= kq) & (pa_oracle > guard) & (pa > 0)
                        if not np.any(mask):
                            continue
                        h = joint_sw[kq] / pa[mask]
                        o = oracle_ab[(a, b)][kq] / pa_oracle[mask]
                        dev_bayes = max(dev_bayes, float(np.max(np.abs(h - o))))

    checks = [
        IdentityCheck("joint vs oracle chain", dev_joint),
        IdentityCheck("marginal of first memory (sum + oracle)", dev_marg_a),
        IdentityCheck("marginal of second memory (sum + oracle)", dev_marg_b),
        IdentityCheck("multi-time reduction to latest conditioning", dev_multi),
        IdentityCheck("Bayes conditional vs oracle", dev_bayes),
    ]
    return VerifyReport(checks, tolerance)
