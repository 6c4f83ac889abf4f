"""Brute-force reference computations used to cross-check the solvers.

Nothing here shares code with the backward inductions: stopping rules are
enumerated explicitly and values are plain weighted sums over paths or states.
"""
from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from rbsde_horizon.random_time import EnlargedSpace
from rbsde_horizon.rbsde_f import DataTriplet, TransformedDataF
from rbsde_horizon.tree import TreeModel

MAX_ENUM_DEPTH = 4


def count_stopping_times(T: int) -> int:
    """Number of stopping rules on a depth-T binary tree: s(0)=1, s(d)=1+s(d-1)^2."""
    s = 1
    for _ in range(T):
        s = 1 + s * s
    return s


def _rules(level: int, T: int) -> Iterator[np.ndarray]:
    """Stop levels for the 2**(T-level) leaf paths below one node."""
    width = 1 << (T - level)
    if level == T:
        yield np.full(1, T, dtype=np.int64)
        return
    yield np.full(width, level, dtype=np.int64)
    subtrees = list(_rules(level + 1, T))
    for down in subtrees:
        for up in subtrees:
            yield np.concatenate([down, up])


def stopping_rules(T: int) -> Iterator[np.ndarray]:
    """Every stopping time of the horizon-T filtration, as a stop level per path."""
    if T > MAX_ENUM_DEPTH:
        raise ValueError(f"exhaustive enumeration limited to depth {MAX_ENUM_DEPTH}")
    yield from _rules(0, T)


def f_stopping_value(data: TransformedDataF, tree: TreeModel) -> float:
    """max over F-stopping times of E[sum_{k<s} fF dt + sum_{k<=s} h dV + reward_s]."""
    T = data.T
    leaves = np.arange(1 << T)
    # node values along each horizon-T path
    def path(x, n):
        return tree.level(x, n)[leaves >> (T - n)]
    best = -np.inf
    run = [np.zeros(1 << T)]
    for n in range(1, T + 1):
        run.append(run[-1] + path(data.fF, n - 1) * data.dt + path(data.h, n) * path(data.dV, n))
    for rule in stopping_rules(T):
        if not data.has_barrier and np.any(rule < T):
            continue
        acc = np.empty(1 << T)
        for n in range(T + 1):
            sel = rule == n
            if not np.any(sel):
                continue
            reward = data.xiF[leaves[sel]] if n == T else path(data.SF, n)[sel]
            acc[sel] = run[n][sel] + reward
        best = max(best, float(np.mean(acc)))
    return best


def g_stopping_value(triplet: DataTriplet, space: EnlargedSpace, T: int) -> float:
    """max over G-stopping times of the Q~_T payoff, conditional on survival at 0.

    A G-stopping rule on survivors is an F-rule sigma; the stop is min(sigma, T^tau)
    and pays S when sigma comes first, the frozen payoff h otherwise.
    """
    tree = space.tree
    stop = space.stop(T)
    alive0 = space.death > 0
    w = (space.pweight * space.density(T))[alive0]
    stop = stop[alive0]
    path_id = space.leaf[alive0] >> (tree.depth - T)
    f_run = np.zeros((alive0.sum(), T + 1))
    for n in range(1, T + 1):
        f_run[:, n] = f_run[:, n - 1] + space.at(triplet.f, n - 1)[alive0] * tree.dt
    rows = np.arange(stop.size)
    xi = space.at(triplet.h, space.stop(T))[alive0]
    s_path = space.path_matrix(triplet.S, T)[alive0] if triplet.has_barrier else None
    best = -np.inf
    for rule in stopping_rules(T):
        if not triplet.has_barrier and np.any(rule < T):
            continue
        sigma = rule[path_id]
        early = sigma < stop
        theta = np.where(early, sigma, stop)
        s_val = s_path[rows, theta] if triplet.has_barrier else 0.0
        pay = f_run[rows, theta] + np.where(early, s_val, xi)
        best = max(best, float(np.sum(w * pay) / np.sum(w)))
    return best


def conditional_sum_oracle(f: np.ndarray, h: np.ndarray, space: EnlargedSpace,
                           T: int) -> np.ndarray:
    """Y_n = E^Q~[sum_{n<=k<T^tau} f_k dt + h_{T^tau} | G_n] evaluated atom by atom."""
    tree = space.tree
    N = tree.depth
    stop = space.stop(T)
    rows = np.arange(space.n_states)
    w = space.pweight * space.density(T)
    run = np.zeros((space.n_states, N + 1))
    for n in range(1, N + 1):
        step = np.where(n - 1 < stop, space.at(f, n - 1) * tree.dt, 0.0)
        run[:, n] = run[:, n - 1] + step
    total = run[rows, stop] + space.at(h, stop)
    Y = np.empty((space.n_states, N + 1))
    for n in range(N + 1):
        live = stop > n
        payoff = total - run[:, np.minimum(n, N)]
        Y[:, n] = np.where(live, space.atom_mean(payoff, n, w), space.at(h, stop))
    return Y
