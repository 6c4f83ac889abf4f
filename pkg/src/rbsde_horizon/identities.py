"""Executable identities and bounds of the enlargement calculus.

Every function returns plain floats (residuals or left/right sides) so the
caller decides on tolerances. ``X`` arguments are flat F-adapted arrays.
"""
from __future__ import annotations

import numpy as np

from rbsde_horizon.random_time import EnlargedSpace, RandomTimeModel, qtilde_expectation
from rbsde_horizon.tree import TreeModel, expectation, increments


def _path_sum_at_leaves(tree: TreeModel, terms: np.ndarray, first: int, last: int) -> np.ndarray:
    """Per-leaf sum of ``terms`` over levels first..last (flat adapted input)."""
    acc = np.zeros(1 << first)
    for n in range(first, last + 1):
        if n > first:
            acc = np.repeat(acc, 2)
        acc = acc + tree.level(terms, n)
    return tree.expand(acc, tree.depth - last)


def qtilde_normalization(space: EnlargedSpace) -> float:
    return max(abs(qtilde_expectation(space, np.ones(space.n_states), T) - 1.0)
               for T in range(space.tree.depth + 1))


def stopped_density_martingale(space: EnlargedSpace) -> float:
    """Max one-step conditional drift of Ztilde^tau on alive G-atoms under P."""
    worst = 0.0
    for n in range(space.tree.depth):
        live = space.alive(n)
        if not np.any(live):
            continue
        now = space.density(n)
        nxt = space.density(n + 1)
        cond = space.atom_mean(nxt, n, space.pweight)
        worst = max(worst, float(np.max(np.abs(cond - now)[live])))
    return worst


def ng_martingale(space: EnlargedSpace) -> dict[str, float]:
    """Conditional increments of N^G on alive atoms, under P and under Q~_N."""
    N = space.tree.depth
    wq = space.qtilde_weights(N)
    out = {"P": 0.0, "Qtilde": 0.0}
    for n in range(N):
        live = space.alive(n)
        if not np.any(live):
            continue
        d = space.dNG(n + 1)
        out["P"] = max(out["P"], float(np.max(np.abs(space.atom_mean(d, n, space.pweight)[live]))))
        out["Qtilde"] = max(out["Qtilde"], float(np.max(np.abs(space.atom_mean(d, n, wq)[live]))))
    return out


def qtilde_stopped_via_vf(space: EnlargedSpace, model: RandomTimeModel, X: np.ndarray, T: int):
    """(lhs, rhs) of E^Q~[X_{T^tau}] = E[G0 sum X dV + G0 X_T Etilde_T + X_0 (1 - G0)]."""
    tree = space.tree
    lhs = qtilde_expectation(space, space.at(X, space.stop(T)), T)
    dV = model.dVF()
    G0 = model.G0
    rhs = sum(expectation(tree, tree.level(X, k) * tree.level(dV, k)) for k in range(1, T + 1))
    rhs = G0 * rhs + G0 * expectation(tree, tree.level(X, T) * tree.level(model.Etilde, T))
    rhs += X[0] * (1.0 - G0)
    return lhs, rhs


def qtilde_stopped_via_increments(space: EnlargedSpace, model: RandomTimeModel, X: np.ndarray, T: int):
    """(lhs, rhs) of E^Q~[X_{T^tau}] = E[X_0 + G0 sum_k Etilde_{k-1} dX_k]."""
    tree = space.tree
    lhs = qtilde_expectation(space, space.at(X, space.stop(T)), T)
    dX = increments(tree, X)
    rhs = sum(expectation(tree, np.repeat(tree.level(model.Etilde, k - 1), 2) * tree.level(dX, k))
              for k in range(1, T + 1))
    return lhs, X[0] + model.G0 * rhs


def discounted_integral_bound(space: EnlargedSpace, model: RandomTimeModel, X: np.ndarray, T: int,
                 r: float):
    """(lhs, rhs) of ||(Etilde_- . X)_T||_{L^r(P)} <= 2 G0^{-1/r} ||X_{T^tau}||_{L^r(Q~)}."""
    tree = space.tree
    dX = increments(tree, X)
    terms = tree.zeros()
    for k in range(1, T + 1):
        tree.level(terms, k)[:] = np.repeat(tree.level(model.Etilde, k - 1), 2) * tree.level(dX, k)
    leaf = _path_sum_at_leaves(tree, terms, 1, T) if T > 0 else np.zeros(tree.n_leaves)
    lhs = float(np.mean(np.abs(leaf) ** r)) ** (1.0 / r)
    q = qtilde_expectation(space, np.abs(space.at(X, space.stop(T))) ** r, T)
    return lhs, 2.0 * model.G0 ** (-1.0 / r) * q ** (1.0 / r)


def lemma_hazard_mass(space: EnlargedSpace, model: RandomTimeModel, T: int) -> dict[str, float]:
    """Conditional D^{o,F}-mass bounds on alive atoms at every t in 0..T-1.

    ``qtilde_excess``: max of E^Q~[sum_{k=t}^{T^tau} dD_k | G_t] - Gtilde_t (should be <= 0);
    ``gtilde_excess``: max of Gtilde - 1 (should be <= 0);
    ``p_excess``: max of E[sum_{k=t+1}^{T^tau} dD_k / Gtilde_k | G_t] - 1 (should be <= 0).
    """
    stop = space.stop(T)
    D = space.path_matrix(model.Dof)
    Q = space.path_matrix(_cum_q(model))
    wq = space.qtilde_weights(T)
    rows = np.arange(space.n_states)
    out = {"qtilde_excess": -np.inf, "p_excess": -np.inf,
           "gtilde_excess": float(np.max(model.Gtilde) - 1.0)}
    for t in range(T):
        live = stop > t
        if not np.any(live):
            continue
        before = D[:, t - 1] if t > 0 else np.zeros(space.n_states)
        mass = D[rows, stop] - before
        lhs = space.atom_mean(mass, t, wq)[live]
        out["qtilde_excess"] = max(out["qtilde_excess"],
                                   float(np.max(lhs - space.at(model.Gtilde, t)[live])))
        haz = Q[rows, stop] - Q[:, t]
        out["p_excess"] = max(out["p_excess"],
                              float(np.max(space.atom_mean(haz, t, space.pweight)[live] - 1.0)))
    return out


def _cum_q(model: RandomTimeModel) -> np.ndarray:
    tree = model.tree
    out = tree.zeros()
    for n in range(1, tree.depth + 1):
        tree.level(out, n)[:] = np.repeat(tree.level(out, n - 1), 2) + tree.level(model.q, n)
    return out


def vtilde_increments(q: np.ndarray, a: float) -> np.ndarray:
    """Increments 1 - (1 - q)^a, evaluated through log1p for q near 1."""
    with np.errstate(divide="ignore"):
        return -np.expm1(a * np.log1p(-q))


def lemma_vtilde_monotone(model: RandomTimeModel, a: float) -> float:
    """Min increment of max(a,1) Gtilde^{-1} . D^{o,F} - Vtilde^(a) (should be >= 0)."""
    q = model.q[1:]
    return float(np.min(max(a, 1.0) * q - vtilde_increments(q, a)))


def nondecreasing_sample(tree: TreeModel, rng: np.random.Generator) -> np.ndarray:
    """Random adapted X with X_0 >= 0 and nonnegative increments (input class of the r-norm bound)."""
    X = tree.zeros()
    X[0] = abs(rng.normal())
    for n in range(1, tree.depth + 1):
        step = np.abs(rng.normal(size=1 << n)) * rng.exponential()
        tree.level(X, n)[:] = np.repeat(tree.level(X, n - 1), 2) + step
    return X
