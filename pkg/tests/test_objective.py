import dataclasses

import numpy as np
import pytest

from ismoc.controls import ControlField, PenaltySchedule, TimeGrid, restrict
from ismoc.decomposition import Decomposition
from ismoc.ism import intermediate_states
from ismoc.models.base import DenseModel
from ismoc.objective import (
    ControlProblem,
    IntermediateStates,
    Subproblem,
    error_norm,
    evaluate,
    evaluate_J,
    gradient,
    parallel_functional,
    sub_functional,
    sub_gradient,
    subproblems,
)
from ismoc.problems import rotor_problem, spin_problem
from ismoc.verify import fd_gradient, naive_fd_gradient, relative_error

from conftest import random_problem, random_state


def _static_problem(initial, target, alpha=0.0, dim=2, steps=8):
    model = DenseModel(np.zeros((dim, dim)), [np.zeros((dim, dim))])
    grid = TimeGrid(0.0, 1.0, steps)
    return ControlProblem(model, initial, target, grid, PenaltySchedule.constant(alpha, steps))


def test_evaluate_identity_and_orthogonal():
    e0, e1 = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    p = _static_problem(e0, e0)
    assert evaluate_J(p, p.zero_control()) == 1.0
    p = _static_problem(e0, e1)
    assert evaluate_J(p, p.zero_control()) == 0.0


def test_evaluate_matches_straight_line_code(rng):
    p, u = random_problem(rng, dim=2, steps=40)
    tau = p.grid.tau
    psi = p.initial.copy()
    for j in range(40):
        h = p.model.h0 + u.samples[0, j] * p.model.ops[0]
        psi = np.linalg.inv(np.eye(2) + 0.5j * tau * h) @ (np.eye(2) - 0.5j * tau * h) @ psi
    expected = np.real(np.conj(p.target) @ psi) - 0.5 * tau * np.sum(p.penalty.values * u.samples[0] ** 2)
    assert abs(evaluate_J(p, u) - expected) <= 1e-12


def test_gradient_trivial_cases(rng):
    e0 = np.array([1, 0], dtype=complex)
    p = _static_problem(e0, e0)
    assert np.array_equal(gradient(p, ControlField(p.grid, rng.standard_normal(8))), np.zeros((1, 8)))
    p = _static_problem(e0, e0, alpha=0.7)
    u = ControlField(p.grid, rng.standard_normal(8))
    assert np.allclose(gradient(p, u), -0.7 * p.grid.tau * u.samples, rtol=0, atol=1e-16)


def test_gradient_two_level_against_finite_differences(rng):
    p, u = random_problem(rng, dim=2, steps=16)
    g = gradient(p, u)
    assert np.max(relative_error(g, fd_gradient(p, u))) <= 1e-6
    # the plain re-propagating difference agrees to its own rounding level
    assert np.max(np.abs(g - naive_fd_gradient(p, u))) <= 1e-8


def test_checkpointed_gradient_equals_full(rng):
    p = spin_problem(3, 1.0 / 14.0, 2**8)
    u = ControlField(p.grid, 50.0 * rng.standard_normal((6, 2**8)))
    full = evaluate(p, u)
    cp = evaluate(dataclasses.replace(p, checkpoint_stride=17), u)
    assert cp.value == full.value
    assert np.max(np.abs(cp.gradient - full.gradient)) <= 1e-18
    p = rotor_problem(10, 1e5, 2**8)
    u = ControlField(p.grid, 1e-3 * rng.standard_normal((1, 2**8)))
    assert np.array_equal(evaluate(dataclasses.replace(p, checkpoint_stride=30), u).gradient, gradient(p, u))


def test_problem_validation():
    with pytest.raises(ValueError, match="initial"):
        _static_problem(np.ones(3), np.ones(2))


def _sub(initial, target, alpha=0.0):
    return Subproblem(0, _static_problem(initial, target, alpha), 1.0)


def test_sub_functional_trivial_values():
    e0, e1 = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    sub = _sub(e0, e0, alpha=3.0)
    assert sub_functional(sub, sub.problem.zero_control()) == 0.0
    sub = _sub(e0, e1)
    assert abs(sub_functional(sub, sub.problem.zero_control()) + 1.0) <= 1e-15


def test_tracking_equals_overlap_minus_norms(rng):
    p, u = random_problem(rng, dim=3, steps=20)
    target = 0.8 * random_state(rng, 3)
    sub = Subproblem(0, dataclasses.replace(p, target=target), 2.0)
    end = evaluate(sub.problem, u).forward[-1]
    lhs = sub_functional(sub, u, "tracking")
    rhs = sub_functional(sub, u, "overlap") - 0.5 * (np.linalg.norm(end) ** 2 + np.linalg.norm(target) ** 2)
    assert abs(lhs - rhs) <= 1e-13


def test_parallel_functional_single_interval(rng):
    p, u = random_problem(rng, dim=2, steps=16)
    decomp = Decomposition.uniform(p.grid, 1)
    states = IntermediateStates.interpolated([p.initial, p.target])
    assert abs(parallel_functional(p, u, states, decomp) - evaluate_J(p, u)) <= 1e-12


@pytest.mark.parametrize("n", [2, 4, 8])
def test_parallel_functional_at_optimal_states(rng, n):
    p, u = random_problem(rng, dim=4, steps=64)
    decomp = Decomposition.uniform(p.grid, n)
    phi = intermediate_states(p, u, decomp)
    j = evaluate_J(p, u)
    assert abs(parallel_functional(p, u, phi, decomp) - j) <= 1e-11 * (1 + abs(j))


def test_perturbing_a_boundary_state_decreases_parallel_functional(rng):
    p, u = random_problem(rng, dim=3, steps=32)
    decomp = Decomposition.uniform(p.grid, 4)
    phi = list(intermediate_states(p, u, decomp).phi)
    best = parallel_functional(p, u, IntermediateStates.interpolated(phi), decomp)
    for n in (1, 2, 3):
        for _ in range(5):
            trial = list(phi)
            trial[n] = phi[n] + 1e-3 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
            assert parallel_functional(p, u, IntermediateStates.interpolated(trial), decomp) < best


def test_parallel_functional_rejects_wrong_length(rng):
    p, u = random_problem(rng)
    with pytest.raises(ValueError, match="boundary states"):
        parallel_functional(p, u, IntermediateStates.interpolated([p.initial] * 3), Decomposition.uniform(p.grid, 4))


def test_sub_gradient_zero_for_control_free_subproblem(rng):
    sub = _sub(random_state(rng, 2), random_state(rng, 2))
    assert not np.any(sub_gradient(sub, ControlField(sub.problem.grid, rng.standard_normal(8))))


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_sub_gradient_restriction_identity(rng, n):
    p, u = random_problem(rng, dim=5, steps=64, channels=2)
    decomp = Decomposition.uniform(p.grid, n)
    g = gradient(p, u)
    for sub in subproblems(p, intermediate_states(p, u, decomp), decomp):
        j0, j1 = decomp.index_range(sub.index)
        assert np.max(np.abs(sub.beta * sub_gradient(sub, restrict(u, sub.index, decomp)) - g[:, j0:j1])) <= 1e-10


def test_sub_gradient_against_finite_differences(rng):
    p, u = random_problem(rng, dim=3, steps=32)
    decomp = Decomposition.uniform(p.grid, 4)
    sub = subproblems(p, intermediate_states(p, u, decomp), decomp)[2]
    u_n = restrict(u, 2, decomp)
    assert np.max(relative_error(sub_gradient(sub, u_n), fd_gradient(sub.problem, u_n))) <= 1e-6


def test_error_norm_values(rng):
    grid = TimeGrid(0.0, 2.5, 10)
    assert error_norm([ControlField.zeros(grid, 3)]) == 0.0
    assert abs(error_norm([ControlField(grid, np.full(10, -1.5))]) - 2.5 * 1.5) <= 1e-15
    parts = [ControlField(grid.sub(0, 5), rng.standard_normal((2, 5))),
             ControlField(grid.sub(5, 10), rng.standard_normal((2, 5)))]
    flat = 0.0
    for part in parts:
        for j in range(5):
            flat += 0.25 * np.sqrt(part.samples[0, j] ** 2 + part.samples[1, j] ** 2)
    assert abs(error_norm(parts) - flat) <= 1e-14
