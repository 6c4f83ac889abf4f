import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import KERNEL_KINDS, make_data, make_scenario, reference
from rbsde_horizon import (
    NO_BARRIER, DataTriplet, DensityKernel, build_enlarged_space, build_random_time,
    build_tree, kappa, solution_norms, solve_pipeline,
)
from rbsde_horizon.errors import ArgumentError
from rbsde_horizon.estimates import (
    DEFAULT_P_GRID, apriori_profile, verify_appendixA_inequality, verify_discounted,
    verify_lemma_discounting, verify_stability,
)
from rbsde_horizon.identities import (
    discounted_integral_bound, lemma_hazard_mass, lemma_vtilde_monotone, nondecreasing_sample,
)
from rbsde_horizon.rbsde_f import constant_triplet


def test_kappa_values():
    assert kappa(1.0) == 18.0
    assert kappa(0.5) == pytest.approx(9.0 * (5.0 + 4.0))
    assert kappa(2.0) == pytest.approx(np.sqrt(3.0) * (5.0 + np.sqrt(2.0)))


def test_zero_data_zero_norms():
    tree, model, space = reference()
    trip = DataTriplet(np.zeros(7), NO_BARRIER, np.zeros(7))
    rep = solution_norms(solve_pipeline(trip, model, space, 2), trip, space, 2.0)
    assert rep.total == 0.0 and rep.dataNorm == 0.0 and rep.ratio == 0.0


@pytest.mark.parametrize("p", DEFAULT_P_GRID)
def test_constant_claim_norms(p):
    tree, model, space = reference()
    c = -3.0
    trip = constant_triplet(tree, c)
    rep = solution_norms(solve_pipeline(trip, model, space, 2), trip, space, p)
    assert rep.yNorm == pytest.approx(abs(c), rel=1e-15)
    assert rep.kNorm == 0.0
    assert rep.zNorm <= 1e-14 and rep.mNorm <= 1e-14
    assert rep.dataNorm == pytest.approx(abs(c), rel=1e-15)
    assert rep.ratio == pytest.approx(1.0, abs=1e-14)


def test_reference_unit_claim_data_norm():
    tree, model, space = reference()
    trip = constant_triplet(tree, 1.0)
    rep = solution_norms(solve_pipeline(trip, model, space, 2), trip, space, 2.0)
    assert rep.dataNorm == pytest.approx(1.0, abs=1e-15)


def test_constant_claim_profile_is_flat():
    tree, model, space = reference()
    for rep in apriori_profile(constant_triplet(tree, 1.0), model, space, 1.5):
        assert rep.ratio == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_american_reference_ratio_finite(p):
    tree, model, space = reference()
    payoff = np.maximum(tree.W, 0.0)
    trip = DataTriplet(np.zeros(7), payoff, payoff)
    sol = solve_pipeline(trip, model, space, 2)
    assert np.isfinite(solution_norms(sol, trip, space, p).ratio)
    assert np.isfinite(verify_discounted(sol, trip, space, model, p).ratio)


def test_p_must_exceed_one():
    tree, model, space = reference()
    trip = constant_triplet(tree, 1.0)
    with pytest.raises(ArgumentError):
        solution_norms(solve_pipeline(trip, model, space, 2), trip, space, 1.0)


def test_stability_identical_data():
    tree, model, space = reference()
    trip = make_data(tree, np.random.default_rng(4))
    sol = solve_pipeline(trip, model, space, 2)
    out = verify_stability(sol, sol, trip, trip, space, 2.0)
    assert out["lhs"] == 0.0 and out["rhs_data"] == 0.0 and out["implied"] == 0.0


def test_stability_linear_in_payoff_shift():
    tree, model, space = make_scenario(5, np.random.default_rng(8), "anticipative")
    base = DataTriplet(np.zeros(tree.size), NO_BARRIER, np.sin(tree.W))
    sol0 = solve_pipeline(base, model, space, 5)
    per_eps = []
    for eps in (1e-3, 1e-1, 1.0):
        shifted = DataTriplet(base.f, NO_BARRIER, base.h + eps * np.cos(tree.W))
        out = verify_stability(solve_pipeline(shifted, model, space, 5), sol0, shifted, base, space, 2.0)
        per_eps.append(out["lhs"] / eps)
    assert max(per_eps) - min(per_eps) <= 1e-10 * max(per_eps)


def test_discounted_constant_claim_at_most_one():
    tree, model, space = reference()
    trip = constant_triplet(tree, 2.0)
    rep = verify_discounted(solve_pipeline(trip, model, space, 2), trip, space, model, 2.0)
    assert rep.ratio <= 1.0 + 1e-15


def test_discounted_equals_apriori_without_default():
    tree = build_tree(3, 0.5)
    alpha = np.zeros((8, 5))
    alpha[:, -1] = 1.0
    model = build_random_time(tree, DensityKernel(alpha))
    space = build_enlarged_space(tree, model)
    trip = make_data(tree, np.random.default_rng(1))
    sol = solve_pipeline(trip, model, space, 3)
    a = solution_norms(sol, trip, space, 2.0)
    b = verify_discounted(sol, trip, space, model, 2.0)
    assert a.ratio == pytest.approx(b.ratio, rel=1e-14)


def test_appendix_a_degenerate_and_ceiling():
    tree = build_tree(6, 0.25)
    assert verify_appendixA_inequality(tree, range(5), 4.0, 4.0, zero_martingale=True)["max_ratio"] == 0.0
    out = verify_appendixA_inequality(tree, range(50), 4.0, 4.0)
    assert out["finite"] and out["max_ratio"] < 100.0


@settings(max_examples=30, deadline=None)
@given(depth=st.integers(1, 7), seed=st.integers(0, 2**32 - 1),
       kind=st.sampled_from(KERNEL_KINDS), lam=st.sampled_from([0.1, 10.0, 3.7]),
       p=st.sampled_from(DEFAULT_P_GRID))
def test_ratio_is_scale_invariant(depth, seed, kind, lam, p):
    rng = np.random.default_rng(seed)
    tree, model, space = make_scenario(depth, rng, kind)
    trip = make_data(tree, rng, barrier=bool(rng.integers(2)))
    r1 = solution_norms(solve_pipeline(trip, model, space, depth), trip, space, p).ratio
    scaled = trip.scaled(lam)
    r2 = solution_norms(solve_pipeline(scaled, model, space, depth), scaled, space, p).ratio
    assert abs(r1 - r2) <= 1e-10 * r1


@settings(max_examples=30, deadline=None)
@given(depth=st.integers(1, 6), seed=st.integers(0, 2**32 - 1),
       kind=st.sampled_from(KERNEL_KINDS), finite=st.booleans(),
       p=st.sampled_from(DEFAULT_P_GRID))
def test_explicit_constant_inequalities(depth, seed, kind, finite, p):
    rng = np.random.default_rng(seed)
    tree, model, space = make_scenario(depth, rng, kind, finite)
    T = int(rng.integers(1, depth + 1))
    for name, (lhs, rhs) in verify_lemma_discounting(model, space, p, T, rng).items():
        assert lhs <= rhs * (1 + 1e-12), name
    X = nondecreasing_sample(tree, rng)
    for r in (1.0, p):
        lhs, rhs = discounted_integral_bound(space, model, X, T, r)
        assert lhs <= rhs * (1 + 1e-12)
    mass = lemma_hazard_mass(space, model, T)
    assert mass["qtilde_excess"] <= 1e-12 and mass["p_excess"] <= 1e-12
    assert mass["gtilde_excess"] <= 1e-12
    for a in (1.0 / p, 2.0 / p, 1.0, p):
        assert lemma_vtilde_monotone(model, a) >= -1e-15
