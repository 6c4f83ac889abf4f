"""Shared scenario generators for the test suite."""
import numpy as np

from rbsde_horizon import (
    NO_BARRIER, DataTriplet, anticipative_mix_kernel, build_enlarged_space,
    build_random_time, build_tree, cox_kernel, random_kernel, reference_kernel,
)

KERNEL_KINDS = ("dirichlet", "cox", "anticipative", "dirichlet_alpha0")


def reference(finite_tau=False):
    tree = build_tree(2, 1.0)
    model = build_random_time(tree, reference_kernel(finite_tau))
    return tree, model, build_enlarged_space(tree, model)


def make_kernel(tree, rng, kind, finite_tau=False):
    if kind == "dirichlet":
        return random_kernel(tree, rng, finite_tau=finite_tau, concentration=rng.uniform(0.5, 3))
    if kind == "dirichlet_alpha0":
        return random_kernel(tree, rng, finite_tau=finite_tau, alpha0=rng.uniform(0.05, 0.3))
    a, b = rng.uniform(0.1, 1.0), rng.uniform(-0.5, 0.5)
    if kind == "cox":
        return cox_kernel(tree, lambda n, t, W: a * np.exp(b * W), finite_tau=finite_tau)
    c = rng.uniform(0.0, 0.8)
    return anticipative_mix_kernel(
        tree, lambda n, t, W, s: a * np.exp(b * W) * (1.0 + c * s), rng.uniform(0.2, 1.0),
        finite_tau=finite_tau)


def make_scenario(depth, rng, kind="dirichlet", finite_tau=False, dt=None):
    tree = build_tree(depth, dt if dt is not None else 1.0 / depth)
    model = build_random_time(tree, make_kernel(tree, rng, kind, finite_tau))
    return tree, model, build_enlarged_space(tree, model)


def make_data(tree, rng, barrier=True, scale=1.0):
    """Random triplet with h >= S everywhere, so any horizon is admissible."""
    f = rng.normal(size=tree.size) * 0.5 * scale
    h = rng.normal(size=tree.size) * scale + np.maximum(tree.W, 0.0)
    if not barrier:
        return DataTriplet(f, NO_BARRIER, h)
    S = h - np.abs(rng.normal(size=tree.size)) * 0.3 * scale
    return DataTriplet(f, S, h)
