import numpy as np
import pytest

from ismoc.controls import ControlField
from ismoc.decomposition import Decomposition
from ismoc.ism import IsmConfig, IsmError, intermediate_states, run_ism, split_states, verify_theorems
from ismoc.models.base import CapabilityError
from ismoc.objective import ControlProblem, evaluate_J, subproblems
from ismoc.optimizers import SolverSpec, gradient_step
from ismoc.problems import gpe_problem, initial_control, spin_problem
from ismoc.propagation import propagate

from conftest import random_problem, two_level_problem


def test_zero_iterations_returns_initial_field(rng):
    p, u = random_problem(rng)
    out, record = run_ism(p, u, IsmConfig(n=4, max_iter=0))
    assert out is u
    assert len(record) == 0


def test_interpolated_states_pinned_and_dual_path(rng):
    p, u = random_problem(rng, dim=2, steps=64)
    decomp = Decomposition.uniform(p.grid, 4)
    phi = intermediate_states(p, u, decomp).phi
    assert np.array_equal(phi[0], p.initial) and np.array_equal(phi[-1], p.target)
    psi = propagate(p.model, u, p.initial)
    chi = propagate(p.model, u, p.target, "backward")
    for n in range(1, 4):
        j = 16 * n
        w = j / 64
        assert np.max(np.abs(phi[n] - ((1 - w) * psi[j] + w * chi[j]))) <= 1e-14


def test_states_lie_on_trajectory_for_exact_transfer(rng):
    p, u = random_problem(rng, dim=3, steps=64, alpha=0.0)
    psi = propagate(p.model, u, p.initial)
    exact = ControlProblem(p.model, p.initial, psi[-1], p.grid, p.penalty)
    decomp = Decomposition.uniform(p.grid, 8)
    phi = intermediate_states(exact, u, decomp).phi
    for n, j in enumerate(decomp.indices):
        assert np.max(np.abs(phi[n] - psi[j])) <= 1e-13


def test_split_single_interval_is_full_problem(rng):
    p, u = random_problem(rng)
    decomp = Decomposition.uniform(p.grid, 1)
    (sub,) = subproblems(p, split_states(p, u, decomp), decomp)
    assert sub.beta == 1.0 and sub.problem.grid == p.grid
    assert np.array_equal(sub.problem.target, p.target)
    assert np.array_equal(sub.problem.penalty.values, p.penalty.values)


def test_split_single_interval_reproduces_gradient_step(rng):
    p, u = random_problem(rng, dim=3, steps=32)
    spec = SolverSpec(rho=0.3)
    out, _ = run_ism(p, u, IsmConfig(n=1, solver=spec, max_iter=1, variant="split"))
    assert np.max(np.abs(out.samples - gradient_step(p, u, 0.3).samples)) <= 1e-14


def test_gpe_split_states_end_on_forward_trajectory():
    p = gpe_problem()
    u = initial_control(p)
    states = split_states(p, u, Decomposition.uniform(p.grid, 4))
    assert np.max(np.abs(states.initial[-1] - propagate(p.model, u, p.initial)[-1])) <= 1e-12
    assert np.array_equal(states.target[-1], p.target)


def test_gpe_rejects_interpolated_states():
    p = gpe_problem()
    with pytest.raises(CapabilityError):
        intermediate_states(p, initial_control(p), Decomposition.uniform(p.grid, 2))
    with pytest.raises(CapabilityError):
        run_ism(p, initial_control(p), IsmConfig(n=2, variant="interpolated", max_iter=1))


def test_iterates_do_not_depend_on_n(rng):
    p, u0 = random_problem(rng, dim=4, steps=64, channels=2)
    ref = None
    for n in (1, 2, 4, 8):
        u, record = run_ism(p, u0, IsmConfig(n=n, solver=SolverSpec(rho=0.5), max_iter=4, eta=1e-12))
        assert len(record) == 5
        ref = u if ref is None else ref
        assert np.max(np.abs(u.samples - ref.samples)) <= 1e-10


def test_assembled_step_a_matches_sweep(rng):
    p, u0 = random_problem(rng, dim=3, steps=64)
    cfg = dict(n=4, solver=SolverSpec(rho=0.5), max_iter=3, eta=1e-12)
    a, ra = run_ism(p, u0, IsmConfig(assemble=True, **cfg))
    b, rb = run_ism(p, u0, IsmConfig(assemble=False, **cfg))
    assert np.max(np.abs(a.samples - b.samples)) <= 1e-12
    assert np.max(np.abs(np.array(ra.J) - np.array(rb.J))) <= 1e-12


def test_thread_mode_is_bit_identical(rng):
    p, u0 = random_problem(rng, dim=3, steps=64)
    cfg = dict(n=8, solver=SolverSpec(rho=0.5), max_iter=3, eta=1e-12)
    a, ra = run_ism(p, u0, IsmConfig(**cfg))
    b, rb = run_ism(p, u0, IsmConfig(workers=3, mode="thread", **cfg))
    assert a == b and ra.J == rb.J and ra.errors == rb.errors


def test_record_layout(rng):
    p, u0 = random_problem(rng, dim=2, steps=32)
    u, record = run_ism(p, u0, IsmConfig(n=2, solver=SolverSpec(rho=0.2), max_iter=3, eta=1e-12))
    assert [it.k for it in record.iterations] == [0, 1, 2, 3]
    assert record.iterations[0].err is None and all(e > 0 for e in record.errors[1:])
    assert abs(record.J[0] - evaluate_J(p, u0)) <= 1e-13
    assert abs(record.J[-1] - evaluate_J(p, u)) <= 1e-13
    assert len(record.iterations[1].sub_values) == 2


def test_stops_when_error_below_eta(rng):
    p, u0 = random_problem(rng, dim=2, steps=32, alpha=1.0)
    _, record = run_ism(p, u0, IsmConfig(n=2, solver=SolverSpec(rho=0.5), max_iter=5, eta=1.0))
    assert len(record) < 6 and record.errors[-1] <= 1.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_iterate_aborts():
    p = two_level_problem()
    u0 = ControlField(p.grid, np.ones(p.grid.steps))
    with pytest.raises(IsmError, match="non-finite") as info:
        run_ism(p, u0, IsmConfig(n=2, solver=SolverSpec(rho=1e305), max_iter=5))
    assert len(info.value.record) == 2


def test_verify_theorems_two_level_and_single_interval(rng):
    p, u = random_problem(rng, dim=2, steps=64)
    r = verify_theorems(p, u, Decomposition.uniform(p.grid, 2))
    assert r["theorem1_pass"] and r["theorem2_pass"]
    r = verify_theorems(p, u, Decomposition.uniform(p.grid, 1))
    assert r["theorem1_residual"] <= 1e-14 and r["theorem2_residual"] <= 1e-15


def test_verify_theorems_spin_eight_intervals(rng):
    p = spin_problem(3, 1.0 / 14.0, 2**7)
    u = initial_control(p, "random", 100.0, seed=3)
    r = verify_theorems(p, u, Decomposition.uniform(p.grid, 8))
    assert r["theorem1_pass"] and r["theorem2_pass"]
