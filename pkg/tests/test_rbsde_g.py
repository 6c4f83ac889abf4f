import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import KERNEL_KINDS, make_data, make_scenario, reference
from rbsde_horizon import (
    DataTriplet, DensityKernel, SolutionG, build_enlarged_space, build_random_time,
    build_tree, lift_solution, residual_check, solve_f_rbsde, solve_g_snell_oracle,
    transform_data,
)
from rbsde_horizon.estimates import solve_pipeline
from rbsde_horizon.oracles import conditional_sum_oracle, g_stopping_value
from rbsde_horizon.rbsde_f import constant_triplet
from rbsde_horizon.rbsde_g import all_pass


def test_constant_claim_is_riskless():
    tree, model, space = reference()
    c = -2.5
    trip = constant_triplet(tree, c)
    sol = solve_pipeline(trip, model, space, 2)
    assert np.all(sol.Y == c)
    # Z and M come from c * Etilde divided back by Etilde; zero up to rounding
    assert np.max(np.abs(sol.Z)) <= 1e-15 * abs(c)
    assert np.max(np.abs(sol.M)) <= 1e-15 * abs(c)
    assert np.all(sol.K == 0.0)
    assert all_pass(residual_check(sol, trip, space))


def test_reference_unit_claim_prices_to_one():
    tree, model, space = reference()
    sol = solve_pipeline(constant_triplet(tree, 1.0), model, space, 2)
    assert np.all(sol.Y[:, 0] == 1.0)


def test_no_default_embeds_f_solution():
    tree = build_tree(3, 0.5)
    alpha = np.zeros((8, 5))
    alpha[:, -1] = 1.0
    model = build_random_time(tree, DensityKernel(alpha))
    space = build_enlarged_space(tree, model)
    trip = make_data(tree, np.random.default_rng(2))
    solF = solve_f_rbsde(transform_data(trip, model, 3), tree)
    solG = lift_solution(solF, model, space, trip.h, 3)
    assert np.array_equal(solG.Y, space.path_matrix(solF.Y, 3))
    assert np.all(solG.M == 0.0)


def test_american_reference_g_enumeration():
    tree, model, space = reference()
    payoff = np.maximum(tree.W, 0.0)
    trip = DataTriplet(np.zeros(7), payoff, payoff)
    sol = solve_pipeline(trip, model, space, 2)
    oracle = solve_g_snell_oracle(trip, space, 2)
    assert np.max(np.abs(oracle - sol.Y)) <= 1e-15
    assert g_stopping_value(trip, space, 2) == pytest.approx(sol.Y[0, 0], abs=1e-15)


def test_corrupted_solution_is_flagged():
    tree, model, space = reference()
    trip = constant_triplet(tree, 1.0)
    sol = solve_pipeline(trip, model, space, 2)
    Y = sol.Y.copy()
    Y[4, 1] += 1e-3
    bad = SolutionG(space, 2, Y, sol.Z, sol.K, sol.M)
    rep = residual_check(bad, trip, space)
    assert not rep["dynamics"]["pass"]
    assert rep["dynamics"]["value"] == pytest.approx(1e-3, rel=1e-9)


def test_no_barrier_checks_are_vacuous():
    tree, model, space = reference()
    trip = constant_triplet(tree, 1.0)
    rep = residual_check(solve_pipeline(trip, model, space, 2), trip, space)
    assert rep["skorokhod"]["vacuous"] and rep["skorokhod"]["pass"]
    assert rep["barrier"]["vacuous"] and rep["barrier"]["pass"]


def test_remaining_lifetime_claim():
    tree, model, space = reference()
    f, h = np.ones(7), np.zeros(7)
    sol = solve_pipeline(DataTriplet(f, np.zeros(7) - 1, h), model, space, 2)
    ref = conditional_sum_oracle(f, h, space, 2)
    assert np.max(np.abs(sol.Y - ref)) <= 1e-15


@settings(max_examples=40, deadline=None)
@given(depth=st.integers(1, 7), seed=st.integers(0, 2**32 - 1),
       kind=st.sampled_from(KERNEL_KINDS), barrier=st.booleans(), finite=st.booleans())
def test_lift_equals_oracle_and_passes_residuals(depth, seed, kind, barrier, finite):
    rng = np.random.default_rng(seed)
    tree, model, space = make_scenario(depth, rng, kind, finite)
    T = int(rng.integers(0, depth + 1))
    trip = make_data(tree, rng, barrier)
    sol = solve_pipeline(trip, model, space, T)
    oracle = solve_g_snell_oracle(trip, space, T)
    assert np.max(np.abs(oracle - sol.Y)) <= 1e-10 * (1 + np.max(np.abs(oracle)))
    rep = residual_check(sol, trip, space)
    assert all_pass(rep), {k: v for k, v in rep.items() if not v["pass"]}


@settings(max_examples=20, deadline=None)
@given(depth=st.integers(1, 3), seed=st.integers(0, 2**32 - 1), barrier=st.booleans())
def test_g_value_is_optimal_over_g_stopping_times(depth, seed, barrier):
    rng = np.random.default_rng(seed)
    tree, model, space = make_scenario(depth, rng, "dirichlet")
    trip = make_data(tree, rng, barrier)
    sol = solve_pipeline(trip, model, space, depth)
    alive = space.death > 0
    y0 = sol.Y[alive, 0][0]
    assert abs(g_stopping_value(trip, space, depth) - y0) <= 1e-12 * (1 + abs(y0))
