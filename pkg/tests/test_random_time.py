import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import KERNEL_KINDS, make_scenario, reference
from rbsde_horizon import (
    ConfigurationError, DensityKernel, PositivityError, build_enlarged_space,
    build_random_time, build_tree, cox_kernel, qtilde_expectation,
)
from rbsde_horizon.random_time import check_g_projection
from rbsde_horizon.tree import doleans_dade, increments

FIVE_TWELFTHS = 5.0 / 12.0  # Etilde_2 on second-step-up paths


def lv(tree, x, n):
    return list(tree.level(x, n))


def test_reference_kernel_hand_values():
    tree, model, _ = reference()
    assert model.G0 == 1.0
    assert lv(tree, model.G, 1) == [0.625, 0.625]
    assert lv(tree, model.Gtilde, 1) == [1.0, 1.0]
    assert lv(tree, model.dD, 1) == [0.375, 0.375]
    assert lv(tree, model.Etilde, 1) == [0.625, 0.625]
    # level 2 in node order down-down, down-up, up-down, up-up
    assert lv(tree, model.G, 2) == [0.25, 0.5, 0.25, 0.5]
    assert lv(tree, model.Gtilde, 2) == [0.5, 0.75, 0.5, 0.75]
    assert lv(tree, model.m, 2) == [0.875, 1.125, 0.875, 1.125]
    np.testing.assert_allclose(lv(tree, model.Ztilde, 2), [1.25, 1 / 1.2, 1.25, 1 / 1.2], rtol=1e-15)
    np.testing.assert_allclose(lv(tree, model.Etilde, 2), [0.3125, FIVE_TWELFTHS, 0.3125, FIVE_TWELFTHS],
                               rtol=1e-15)
    np.testing.assert_allclose(lv(tree, model.EGm, 2), [0.8, 1.2, 0.8, 1.2], rtol=1e-15)
    np.testing.assert_allclose(lv(tree, model.G0 * model.EGm * model.Etilde, 2),
                               [0.25, 0.5, 0.25, 0.5], rtol=1e-15)


def test_reference_stochastic_exponential_of_m():
    tree, model, _ = reference()
    dX = increments(tree, model.m)
    for n in range(1, 3):
        tree.level(dX, n)[:] /= np.repeat(tree.level(model.G, n - 1), 2)
    np.testing.assert_allclose(lv(tree, doleans_dade(tree, dX), 2), [0.8, 1.2, 0.8, 1.2], rtol=1e-15)


def test_reference_enlarged_space():
    _, _, space = reference()
    assert space.n_states == 12
    assert space.pweight.sum() == 1.0
    assert list(space.death[:3]) == [1, 2, 3]
    assert list(space.leaf) == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]


def test_reference_qtilde_values():
    _, _, space = reference()
    assert qtilde_expectation(space, np.ones(12), 2) == pytest.approx(1.0, abs=1e-15)
    assert np.sum(space.pweight * space.density(2)) == pytest.approx(1.0, abs=1e-15)
    died = (space.death <= 2).astype(float)
    assert qtilde_expectation(space, died, 2) == pytest.approx(0.5 * (0.25 + 0.25 / 1.2)
                                                              + 0.5 * (0.5 + 0.25 * 1.25), abs=1e-15)
    assert qtilde_expectation(space, died, 2) == pytest.approx(0.6354166666666666, abs=1e-15)


def test_g_projection_reference():
    tree, model, space = reference()
    assert check_g_projection(space, model, tree.W, 1) == 0.0
    assert check_g_projection(space, model, np.full(tree.size, 3.0), 1) <= 1e-15
    assert check_g_projection(space, model, model.G, 1) <= 1e-15
    alive_up = space.alive(1) & (space.prefix(1) == 1)
    assert np.all(space.atom_mean(space.at(tree.W, 1), 1, space.pweight)[alive_up] == 1.0)


def test_deterministic_death():
    tree = build_tree(1, 1.0)
    model = build_random_time(tree, DensityKernel(np.array([[0, 1.0, 0], [0, 1.0, 0]]), finite_tau=True))
    space = build_enlarged_space(tree, model)
    assert space.n_states == 2
    assert list(space.pweight) == [0.5, 0.5]
    assert list(space.death) == [1, 1]


def test_cox_kernel_is_immersed():
    tree = build_tree(6, 0.2)
    model = build_random_time(tree, cox_kernel(tree, lambda n, t, W: 0.5 + 0.3 * np.tanh(W)))
    np.testing.assert_allclose(model.m, model.G0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(model.Ztilde, 1.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("alpha,msg", [
    (np.array([[0.5, 0.5, 0.1], [0, 1, 0]]), "sums"),
    (np.array([[-0.1, 1.1, 0], [0, 1, 0]]), "negative"),
    (np.array([[0, 1.0], [0, 1.0]]), "shape"),
    (np.array([[np.nan, 1, 0], [0, 1, 0]]), "non-finite"),
])
def test_kernel_validation(alpha, msg):
    with pytest.raises(ConfigurationError, match=msg):
        DensityKernel(alpha)


def test_finite_tau_requires_zero_alpha_inf():
    with pytest.raises(ConfigurationError):
        DensityKernel(np.array([[0, 0.5, 0.5], [0, 0.5, 0.5]]), finite_tau=True)


def test_positivity_guard_names_node():
    tree = build_tree(2, 1.0)
    alpha = np.array([[0, 1, 0, 0], [0, 1, 0, 0], [0, 0.5, 0.25, 0.25], [0, 0.5, 0.25, 0.25]])
    with pytest.raises(PositivityError) as exc:
        build_random_time(tree, DensityKernel(alpha))
    assert exc.value.node == (1, 0)
    assert "level=1, path_bits=0" in str(exc.value)


def test_depth_mismatch():
    with pytest.raises(ConfigurationError):
        build_random_time(build_tree(3, 1.0), DensityKernel(np.array([[0, 1.0, 0], [0, 1.0, 0]])))


@settings(max_examples=40, deadline=None)
@given(depth=st.integers(1, 9), seed=st.integers(0, 2**32 - 1),
       kind=st.sampled_from(KERNEL_KINDS), finite=st.booleans())
def test_structural_identities(depth, seed, kind, finite):
    rng = np.random.default_rng(seed)
    tree, model, space = make_scenario(depth, rng, kind, finite)
    scale = max(1.0, float(model.EGm.max()), float(model.Ztilde.max()))
    for name, value in model.invariant_residuals().items():
        assert value <= 1e-12 * scale, name
    for T in range(depth + 1):
        assert abs(qtilde_expectation(space, np.ones(space.n_states), T) - 1.0) <= 1e-12 * scale
    assert np.all(model.Etilde >= 0) and np.all(model.Etilde <= 1.0)
