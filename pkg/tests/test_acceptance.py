"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import csv
import itertools
from importlib import resources

import numpy as np
import pytest

import clockhist as ch
from clockhist import (
    HamiltonianSpec,
    Operator,
    StateVector,
    basis_vector,
    build_history,
    build_measured_history,
    commutator_floor,
    condition_on_frequency,
    condition_on_time,
    constraint_operator,
    constraint_residual,
    eigen_residual,
    evolve_const,
    flat_envelope,
    gaussian_envelope,
    joint_prob,
    make_grid,
    multi_time_joint,
    oracle_chain_prob,
    prob_sweep,
    propagator,
)
from clockhist.cli import EXIT_OK, EXIT_VERIFY, main
from clockhist.scenario import Scenario, verify_report

from helpers import (
    q_label,
    rabi_spec,
    random_hermitian,
    random_schedule,
    random_state_vector,
    random_unitary,
)

Q = q_label(2)


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] criterion {num} ({name}): {status} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


# ---------------------------------------------------------------------------
# shared randomized measurement suite (criteria 6 and 7)


@pytest.fixture(scope="module")
def measurement_suite():
    rng = np.random.default_rng(20250810)
    grid = make_grid(128, 0, 4)
    suite = []
    for _ in range(20):
        sched, psi0 = random_schedule(rng, grid, max_events=3)
        hist = build_measured_history(sched, psi0, 0.0, grid, flat_envelope(grid))
        suite.append((sched, psi0, hist))
    # the sampler must actually cover the required variety
    dims = {s.hamiltonian.dim for s, _, _ in suite}
    kinds = {len(e.instrument.kraus) == e.instrument.dim for s, _, _ in suite for e in s.events}
    assert dims == {2, 3} and kinds == {True, False}
    return grid, suite


def test_criterion_1_schrodinger_recovery():
    rng = np.random.default_rng(101)
    grid = make_grid(256, -8, 8)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 5))
        h = Operator((q_label(d),), random_hermitian(rng, d))
        spec = HamiltonianSpec.constant(h)
        psi0 = random_state_vector(rng, d)
        for env in (flat_envelope(grid), gaussian_envelope(grid, 9.0)):
            hist = build_history(spec, psi0, 0.0, grid, env)
            for k in range(grid.n):
                if abs(env.weights[k]) < 1e-8:
                    continue
                got = condition_on_time(hist, grid.times[k])
                want = evolve_const(h, psi0, grid.times[k], 0.0)
                worst = max(worst, float(np.linalg.norm(got.amplitudes - want.amplitudes)))
    _report(1, "Schrodinger recovery", worst <= 1e-8, f"max state deviation {worst:.3e}")


def test_criterion_2_eigenvector_dichotomy():
    e = np.pi / 2
    grid = ch.commensurate_grid(256, e, periods=8)
    spec = HamiltonianSpec.constant(Operator((Q,), np.diag([0.0, e]).astype(complex)))
    psi0 = StateVector((Q,), np.array([1, 1]) / np.sqrt(2))
    hist = build_history(spec, psi0, 0.0, grid, flat_envelope(grid))
    j_match = round(-e * grid.n * grid.dt / (2 * np.pi))
    worst_eig, worst_null = 0.0, 0.0
    for j in range(-grid.n // 2, grid.n // 2):
        vec = condition_on_frequency(hist, j)
        if j in (0, j_match):
            worst_eig = max(worst_eig, eigen_residual(spec.terms[0][0], vec, grid.omega_value(j)))
        else:
            worst_null = max(worst_null, vec.norm)
    ok = worst_eig <= 1e-6 and worst_null <= 1e-8
    _report(2, "eigenvector dichotomy", ok, f"eigen residual {worst_eig:.3e}, off-spectrum norm {worst_null:.3e}")


def test_criterion_3_propagator():
    grid = make_grid(256, 0, 4)
    g = propagator(rabi_spec(), basis_vector(Q, 0), 0.0, basis_vector(Q, 1), 1.0, grid)
    dev_rabi = abs(g - (-1j))
    rng = np.random.default_rng(303)
    worst_unitarity = 0.0
    for _ in range(10):
        spec = HamiltonianSpec.constant(Operator((Q,), random_hermitian(rng, 2)))
        i_state = random_state_vector(rng, 2)
        u = random_unitary(rng, 2)
        t_f = float(grid.times[int(rng.integers(1, grid.n))])
        g1 = propagator(spec, i_state, 0.0, StateVector((Q,), u[:, 0]), t_f, grid)
        g2 = propagator(spec, i_state, 0.0, StateVector((Q,), u[:, 1]), t_f, grid)
        worst_unitarity = max(worst_unitarity, abs(abs(g1) ** 2 + abs(g2) ** 2 - 1.0))
    ok = dev_rabi <= 1e-10 and worst_unitarity <= 1e-9
    _report(3, "propagator", ok, f"Rabi deviation {dev_rabi:.3e}, |G|^2 sum deviation {worst_unitarity:.3e}")


def test_criterion_4_weyl_criterion():
    grid = make_grid(256, -16, 16)
    static = HamiltonianSpec.constant(Operator((Q,), np.zeros((2, 2))))
    worst_rel = 0.0
    for n in (1, 4, 16):
        hist = build_history(static, basis_vector(Q, 0), 0.0, grid, gaussian_envelope(grid, n))
        raw = constraint_residual(hist, static).raw
        worst_rel = max(worst_rel, abs(raw - 1 / np.sqrt(n)) * np.sqrt(n))
    rabi_vals = [
        constraint_residual(
            build_history(rabi_spec(), basis_vector(Q, 0), 0.0, grid, gaussian_envelope(grid, n)),
            rabi_spec(),
        ).raw
        for n in (1, 4, 16)
    ]
    ok = worst_rel <= 0.05 and rabi_vals[0] > rabi_vals[1] > rabi_vals[2]
    _report(
        4,
        "Weyl criterion",
        ok,
        f"width-oracle relative deviation {worst_rel:.3e}, "
        f"Rabi residuals {rabi_vals[0]:.3f} > {rabi_vals[1]:.3f} > {rabi_vals[2]:.3f}",
    )


def test_criterion_5_spectrum_shift():
    rng = np.random.default_rng(505)
    grid = make_grid(32, 0, 8)
    h = random_hermitian(rng, 2)
    eps = 0.377
    base = np.sort(np.linalg.eigvalsh(
        constraint_operator(HamiltonianSpec.constant(Operator((Q,), h)), grid).matrix))
    shifted = np.sort(np.linalg.eigvalsh(
        constraint_operator(HamiltonianSpec.constant(Operator((Q,), h - eps * np.eye(2))), grid).matrix))
    dev = float(np.max(np.abs(shifted - (base - eps))))
    _report(5, "spectrum shift", dev <= 1e-9, f"max eigenvalue deviation {dev:.3e}")


def test_criterion_6_measurement_statistics(measurement_suite):
    grid, suite = measurement_suite
    worst_oracle = 0.0
    worst_step = 0.0
    worst_disturb = 0.0
    worst_identity = 0.0
    for sched, psi0, hist in suite:
        # every joint/marginal value against the independent Kraus chain
        mem_dims = {e.memory.label: e.memory.dim for e in sched.events}
        labels = list(mem_dims)
        for r in range(1, len(labels) + 1):
            for subset in itertools.combinations(labels, r):
                for combo in itertools.product(*(range(mem_dims[m]) for m in subset)):
                    assignment = dict(zip(subset, combo))
                    sweep = prob_sweep(hist, assignment)
                    starts = [0] + [grid.nearest_index(e.time) for e in sched.events]
                    for k in sorted({*starts, 40, 70, grid.n - 1}):
                        want = oracle_chain_prob(sched, psi0, assignment, grid.times[k], 0.0)
                        worst_oracle = max(worst_oracle, abs(float(sweep[k]) - want))
                    # step structure: constant between event indices
                    bounds = starts + [grid.n]
                    for lo, hi in zip(bounds, bounds[1:]):
                        if hi > lo:
                            seg = sweep[lo:hi]
                            worst_step = max(worst_step, float(seg.max() - seg.min()))
        # two-measurement identity closure (needs two events)
        if len(sched.events) >= 2:
            scn = Scenario(grid, flat_envelope(grid), sched.hamiltonian, psi0, 0.0, sched, (), {})
            report = verify_report(scn)
            worst_identity = max(worst_identity, max(c.max_deviation for c in report.checks))
            # non-disturbance: earlier statistics unchanged by later events
            from clockhist import MeasurementSchedule

            prefix = MeasurementSchedule(sched.events[:1], sched.hamiltonian)
            h1 = build_measured_history(prefix, psi0, 0.0, grid, flat_envelope(grid))
            first = sched.events[0].memory
            for a in range(first.dim):
                s1 = prob_sweep(h1, {first.label: a})
                s2 = prob_sweep(hist, {first.label: a})
                worst_disturb = max(worst_disturb, float(np.max(np.abs(s1 - s2))))
    ok = (
        worst_oracle <= 1e-8
        and worst_identity <= 1e-9
        and worst_step <= 1e-12
        and worst_disturb <= 1e-12
    )
    _report(
        6,
        "measurement statistics",
        ok,
        f"oracle dev {worst_oracle:.3e}, identity dev {worst_identity:.3e}, "
        f"step dev {worst_step:.3e}, disturbance {worst_disturb:.3e}",
    )


def test_criterion_7_multi_time_reduction(measurement_suite):
    grid, suite = measurement_suite
    worst = 0.0
    checked = 0
    for sched, psi0, hist in suite:
        if len(sched.events) < 2:
            continue
        event_index = {e.memory.label: grid.nearest_index(e.time) for e in sched.events}
        labels = [e.memory.label for e in sched.events]
        dims = [e.memory.n_outcomes for e in sched.events]
        for combo in itertools.product(*(range(d) for d in dims)):
            ks = sorted(event_index[m] for m in labels)
            times = [grid.times[k] for k in ks]
            times[-1] = grid.times[-1]
            readings = [
                (m, o, t)
                for (m, o, t) in zip(labels, combo, times)
            ]
            mt = multi_time_joint(hist, readings)
            single = joint_prob(hist, dict(zip(labels, combo)), times[-1])
            worst = max(worst, abs(mt - single))
            checked += 1
    _report(
        7,
        "multi-time reduction",
        worst == 0.0 and checked > 0,
        f"{checked} reading strings, max deviation {worst:.3e}",
    )


def test_criterion_8_grid_convergence():
    n_env = 0.2
    spec = rabi_spec()
    freqs = (0.0, np.pi / 2, -np.pi / 2)
    residuals, floors = [], []
    for n_grid in (128, 256, 512):
        grid = make_grid(n_grid, -16, 16)
        hist = build_history(spec, basis_vector(Q, 0), 0.0, grid, gaussian_envelope(grid, n_env))
        residuals.append(constraint_residual(hist, spec).regularized)
        floors.append(commutator_floor(grid, n_env, frequencies=freqs))
    res_ratios = [residuals[i] / residuals[i + 1] for i in range(2)]
    floor_ratios = [floors[i] / floors[i + 1] for i in range(2)]
    ok = all(r >= 1.8 for r in res_ratios + floor_ratios)
    _report(
        8,
        "grid convergence",
        ok,
        f"regularized residuals {residuals[0]:.2e} -> {residuals[1]:.2e} -> {residuals[2]:.2e}, "
        f"floors {floors[0]:.2e} -> {floors[1]:.2e} -> {floors[2]:.2e}",
    )


def test_criterion_9_cli_end_to_end(tmp_path):
    scenario = str(resources.files("clockhist").joinpath("scenarios/rabi_two_measurements.json"))
    out = tmp_path / "out"
    run_code = main(["run", scenario, "--out-dir", str(out)])
    joints = {}
    for name in ("joint_00", "joint_01", "joint_10", "joint_11"):
        with open(out / f"{name}.csv") as fh:
            rows = list(csv.reader(fh))
        joints[name] = float(rows[1][1])
    table_dev = max(abs(v - 0.25) for v in joints.values())
    verify_code = main(["verify", scenario])
    fault_code = main(["verify", scenario, "--inject-fault-branch", "60"])
    ok = (
        run_code == EXIT_OK
        and table_dev <= 1e-9
        and verify_code == EXIT_OK
        and fault_code == EXIT_VERIFY
    )
    _report(
        9,
        "CLI end to end",
        ok,
        f"run exit {run_code}, 1/4-table deviation {table_dev:.3e}, "
        f"verify exit {verify_code}, fault-injected exit {fault_code}",
    )
