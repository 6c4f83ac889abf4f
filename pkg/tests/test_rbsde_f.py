import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import KERNEL_KINDS, make_data, make_scenario, reference
from rbsde_horizon import (
    NO_BARRIER, BarrierError, DataTriplet, DensityKernel, build_random_time, build_tree,
    solve_f_rbsde, solve_f_rbsde_infinite, transform_data, verify_skorokhod,
)
from rbsde_horizon.oracles import count_stopping_times, f_stopping_value, stopping_rules
from rbsde_horizon.rbsde_f import constant_triplet


def no_default_model(depth):
    tree = build_tree(depth, 1.0)
    alpha = np.zeros((tree.n_leaves, depth + 2))
    alpha[:, -1] = 1.0
    return tree, build_random_time(tree, DensityKernel(alpha))


def test_no_default_recovers_classical_data():
    tree, model = no_default_model(3)
    trip = make_data(tree, np.random.default_rng(0))
    data = transform_data(trip, model, 3)
    assert np.array_equal(data.fF, trip.f)
    assert np.array_equal(data.SF, trip.S)
    assert np.array_equal(data.xiF, tree.level(trip.h, 3))
    assert np.all(data.dV == 0.0)


def test_reference_transformed_terminal():
    tree, model, _ = reference()
    data = transform_data(constant_triplet(tree, 1.0), model, 2)
    np.testing.assert_allclose(data.xiF, [0.3125, 5 / 12, 0.3125, 5 / 12], rtol=1e-15)
    data = transform_data(constant_triplet(tree, 2.5), model, 2)
    assert np.all(data.fF == 0.0) and data.SF is NO_BARRIER
    assert np.array_equal(data.xiF, 2.5 * tree.level(model.Etilde, 2))


def test_one_step_hand_example():
    tree, model = no_default_model(1)
    h = np.array([0.0, 3.0, 1.0])  # leaves: down = 3, up = 1
    S = np.array([5.0, 0.0, 0.0])
    sol = solve_f_rbsde(transform_data(DataTriplet(np.zeros(3), S, h), model, 1), tree)
    assert sol.Y[0] == 5.0
    assert sol.dK[0] == 3.0
    assert sol.Z[0] == -1.0
    sk = verify_skorokhod(sol, transform_data(DataTriplet(np.zeros(3), S, h), model, 1))
    assert sk["pairing"] == 0.0 and not sk["violation"]
    mirrored = solve_f_rbsde(transform_data(DataTriplet(np.zeros(3), S, h[[0, 2, 1]]), model, 1), tree)
    assert mirrored.Z[0] == 1.0


def test_constant_claim_is_c_times_etilde():
    tree, model, _ = reference()
    c = 1.75
    sol = solve_f_rbsde(transform_data(constant_triplet(tree, c), model, 2), tree)
    np.testing.assert_allclose(sol.Y, c * model.Etilde[:7], rtol=1e-15)
    assert np.all(sol.K == 0.0)


def test_zero_data_gives_zero_solution():
    tree, model, _ = reference()
    trip = DataTriplet(np.zeros(7), -np.ones(7), np.zeros(7))
    sol = solve_f_rbsde(transform_data(trip, model, 2), tree)
    assert np.all(sol.Y == 0.0) and np.all(sol.K == 0.0) and np.all(sol.Z == 0.0)


def test_finite_tau_unit_claim_prices_to_one():
    tree, model, _ = reference(finite_tau=True)
    data = transform_data(constant_triplet(tree, 1.0), model, 2)
    sol = solve_f_rbsde_infinite(data, tree, model)
    assert sol.Y[0] == pytest.approx(1.0, abs=1e-15)
    E_N = tree.level(model.Etilde, 2)
    assert np.all(E_N == 0.0)


def test_american_reference_against_enumeration():
    tree, model, _ = reference()
    payoff = np.maximum(tree.W, 0.0)
    data = transform_data(DataTriplet(np.zeros(7), payoff, payoff), model, 2)
    sol = solve_f_rbsde(data, tree)
    assert count_stopping_times(2) == 5
    assert sum(1 for _ in stopping_rules(2)) == 5
    assert f_stopping_value(data, tree) == pytest.approx(sol.Y[0], abs=1e-15)


def test_stopping_time_counts():
    assert [count_stopping_times(d) for d in range(5)] == [1, 2, 5, 26, 677]
    assert sum(1 for _ in stopping_rules(3)) == 26


def test_barrier_dominance_is_checked():
    tree, model, _ = reference()
    S = np.ones(7) * 2.0
    with pytest.raises(BarrierError) as exc:
        transform_data(DataTriplet(np.zeros(7), S, np.ones(7)), model, 2)
    assert exc.value.node is not None


def test_no_barrier_skorokhod_vacuous():
    tree, model, _ = reference()
    data = transform_data(constant_triplet(tree, 1.0), model, 2)
    out = verify_skorokhod(solve_f_rbsde(data, tree), data)
    assert out["vacuous"] and out["pairing"] == 0.0


@settings(max_examples=40, deadline=None)
@given(depth=st.integers(1, 9), seed=st.integers(0, 2**32 - 1),
       kind=st.sampled_from(KERNEL_KINDS), barrier=st.booleans())
def test_solver_postconditions(depth, seed, kind, barrier):
    rng = np.random.default_rng(seed)
    tree, model, _ = make_scenario(depth, rng, kind)
    T = int(rng.integers(0, depth + 1))
    data = transform_data(make_data(tree, rng, barrier), model, T)
    sol = solve_f_rbsde(data, tree)
    d = sol.diagnostics
    assert d["dynamics"] <= 1e-12 * d["scale"]
    if T > 0:
        assert d["min_dK"] >= 0.0
        assert d.get("barrier", 0.0) == 0.0
        sk = verify_skorokhod(sol, data)
        assert sk["pairing"] <= sk["tol"] and not sk["violation"]
    if not barrier:
        assert np.all(sol.K == 0.0)


@settings(max_examples=25, deadline=None)
@given(depth=st.integers(1, 4), seed=st.integers(0, 2**32 - 1), barrier=st.booleans())
def test_snell_value_is_optimal_stopping_value(depth, seed, barrier):
    rng = np.random.default_rng(seed)
    tree, model, _ = make_scenario(depth, rng, "anticipative")
    data = transform_data(make_data(tree, rng, barrier), model, depth)
    sol = solve_f_rbsde(data, tree)
    assert abs(f_stopping_value(data, tree) - sol.Y[0]) <= 1e-12 * (1 + abs(sol.Y[0]))
