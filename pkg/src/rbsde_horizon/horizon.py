"""Unbounded horizon realised as the full tree with tau <= N almost surely.

With alpha_inf = 0 the survival process vanishes at level N, so Etilde_N = 0
and V^F carries unit mass. Long-horizon limits become exact statements at T = N.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rbsde_horizon.errors import ArgumentError, ConfigurationError
from rbsde_horizon.estimates import (
    NormReport, _lp, data_norm, discounted_quadruplet, verify_discounted,
)
from rbsde_horizon.identities import vtilde_increments
from rbsde_horizon.random_time import EnlargedSpace, RandomTimeModel, qtilde_expectation
from rbsde_horizon.rbsde_f import (
    NO_BARRIER, DataTriplet, solve_f_rbsde_infinite, transform_data,
)
from rbsde_horizon.rbsde_g import SolutionG, lift_solution, residual_check
from rbsde_horizon.tree import expectation


def _require_finite(model: RandomTimeModel) -> None:
    if not model.finite_tau:
        raise ConfigurationError(
            "V^F total mass < 1; norm undefined for infinite-horizon semantics")


def lp_pvf_norm(X: np.ndarray, model: RandomTimeModel, p: float) -> float:
    """(E[sum_k |X_k|^p dV^F_k])^{1/p}."""
    _require_finite(model)
    tree = model.tree
    dV = model.dVF()
    mass = sum(expectation(tree, np.abs(tree.level(X, k)) ** p * tree.level(dV, k))
               for k in range(1, tree.depth + 1))
    return mass ** (1.0 / p)


def running_abs_integral(triplet: DataTriplet, model: RandomTimeModel) -> np.ndarray:
    """F_n = sum_{k<n} |f_k| dt as a flat adapted array."""
    tree = model.tree
    F = tree.zeros()
    for n in range(1, tree.depth + 1):
        F_prev = tree.level(F, n - 1) + np.abs(tree.level(triplet.f, n - 1)) * tree.dt
        tree.level(F, n)[:] = np.repeat(F_prev, 2)
    return F


def running_sup(tree, X: np.ndarray) -> np.ndarray:
    out = tree.zeros()
    out[0] = X[0]
    for n in range(1, tree.depth + 1):
        tree.level(out, n)[:] = np.maximum(np.repeat(tree.level(out, n - 1), 2), tree.level(X, n))
    return out


def pvf_data_norm(triplet: DataTriplet, model: RandomTimeModel, p: float,
                  positive_part: bool = True) -> float:
    """||F + |h| + sup_{u<=.} S_u^+||_{L^p(P x V^F)} (or with |S| when not positive_part)."""
    tree = model.tree
    X = running_abs_integral(triplet, model) + np.abs(triplet.h)
    if triplet.has_barrier:
        S = np.maximum(triplet.S, 0.0) if positive_part else np.abs(triplet.S)
        X = X + running_sup(tree, S)
    return lp_pvf_norm(X, model, p)


def truncate(triplet: DataTriplet, model: RandomTimeModel, n: int) -> DataTriplet:
    """Data equal to the original on [0, n] and frozen afterwards.

    The driver is switched off from step n+1 on (f_k = 0 for k >= n), so the
    time integral of f up to any t <= n is unchanged.
    """
    tree = model.tree
    f = triplet.f.copy()
    h = triplet.h.copy()
    S = triplet.S.copy() if triplet.has_barrier else NO_BARRIER
    for k in range(n, tree.depth + 1):
        tree.level(f, k)[:] = 0.0
    for k in range(n + 1, tree.depth + 1):
        tree.level(h, k)[:] = np.repeat(tree.level(h, k - 1), 2)
        if S is not NO_BARRIER:
            tree.level(S, k)[:] = np.repeat(tree.level(S, k - 1), 2)
    return DataTriplet(f, S, h)


def infinite_pipeline(triplet: DataTriplet, model: RandomTimeModel, space: EnlargedSpace,
                      threads: int | None = None) -> SolutionG:
    _require_finite(model)
    N = model.tree.depth
    data = transform_data(triplet, model, N)
    solF = solve_f_rbsde_infinite(data, model.tree, model, threads)
    return lift_solution(solF, model, space, triplet.h, N)


@dataclass
class InfiniteResult:
    solution: SolutionG = field(repr=False)
    cutoffs: list
    cauchy: list
    discounted: NormReport
    pvf_data: float
    pvf_data_abs: float
    residuals: dict = field(repr=False)

    @property
    def discounted_ratio(self) -> float:
        return self.discounted.total / self.pvf_data if self.pvf_data > 0 else 0.0

    @property
    def cauchy_nonincreasing(self) -> bool:
        c = np.asarray(self.cauchy)
        return bool(np.all(np.diff(c) <= 1e-12 * (1.0 + c.max())) and c[-1] == 0.0)


def discounted_distance(a: SolutionG, b: SolutionG, model: RandomTimeModel, p: float) -> float:
    """P-norm distance of the discounted (Y, Z, M) parts."""
    Ya, Za, _, Ma = discounted_quadruplet(a, model, p)
    Yb, Zb, _, Mb = discounted_quadruplet(b, model, p)
    w = a.space.pweight
    dt = a.space.tree.dt
    return (_lp(w, np.max(np.abs(Ya - Yb), axis=1), p)
            + _lp(w, np.sqrt(np.sum((Za - Zb) ** 2, axis=1) * dt), p)
            + _lp(w, np.sqrt(np.sum((Ma - Mb) ** 2, axis=1)), p))


def solve_infinite(triplet: DataTriplet, model: RandomTimeModel, space: EnlargedSpace,
                   p: float, schedule=None, threads: int | None = None) -> InfiniteResult:
    _require_finite(model)
    N = model.tree.depth
    cutoffs = list(range(1, N + 1)) if schedule is None else sorted(set(schedule))
    if not cutoffs or cutoffs[0] < 0 or cutoffs[-1] > N:
        raise ArgumentError(f"cutoffs must lie in 0..{N}")
    if cutoffs[-1] != N:
        cutoffs.append(N)
    full = infinite_pipeline(triplet, model, space, threads)
    cauchy = []
    for n in cutoffs:
        sol_n = full if n == N else infinite_pipeline(truncate(triplet, model, n), model, space, threads)
        cauchy.append(discounted_distance(sol_n, full, model, p))
    return InfiniteResult(
        solution=full, cutoffs=cutoffs, cauchy=cauchy,
        discounted=verify_discounted(full, triplet, space, model, p, N),
        pvf_data=pvf_data_norm(triplet, model, p),
        pvf_data_abs=pvf_data_norm(triplet, model, p, positive_part=False),
        residuals=residual_check(full, triplet, space, N),
    )


def equivalent_rbsde_check(solG: SolutionG, triplet: DataTriplet, model: RandomTimeModel,
                           space: EnlargedSpace, p: float) -> dict:
    """Residuals of the Etilde^{1/p}-discounted equation with its Vtilde^(1/p) drift.

    Steps into a level where G vanishes (the last step in finite-tau mode) are
    excluded from the dynamics residual.
    """
    tree = space.tree
    N = tree.depth
    a = 1.0 / p
    T = solG.T
    stop = space.stop(T)
    E = space.path_matrix(model.Etilde)
    Ea = E ** a
    Yt, Zt, dKt, dMt = discounted_quadruplet(solG, model, p)
    scale = 1.0 + float(np.max(np.abs(Yt)))
    dyn = 0.0
    barrier = 0.0
    skor = 0.0
    for n in range(N):
        live = n < stop
        G_next = space.at(model.G, n + 1)
        use = live & (G_next > 0)
        if np.any(use):
            q = space.at(model.q, n + 1)
            dV = vtilde_increments(q, a)
            ratio = (space.at(model.Gtilde, n + 1)[use] / G_next[use]) ** a
            drift = Yt[use, n + 1] * ratio * dV[use]
            r = (Yt[use, n + 1] - Yt[use, n] + drift
                 + space.at(triplet.f, n)[use] * Ea[use, n] * tree.dt
                 + dKt[use, n] + dMt[use, n] - Zt[use, n] * space.at(tree.dW, n + 1)[use])
            dyn = max(dyn, float(np.max(np.abs(r))))
        if triplet.has_barrier and np.any(live):
            gap = Yt[live, n] - space.at(triplet.S, n)[live] * Ea[live, n]
            barrier = max(barrier, float(np.max(np.maximum(-gap, 0.0))))
            skor = max(skor, float(np.max(np.abs(gap * dKt[live, n]))))
    rows = np.arange(space.n_states)
    term = float(np.max(np.abs(Yt[rows, stop] - space.at(triplet.h, stop) * Ea[rows, stop])))
    tol = 1e-9 * scale
    out = {"dynamics": dyn, "barrier": barrier, "skorokhod": skor, "terminal": term, "tol": tol}
    out["pass"] = all(out[k] <= tol for k in ("dynamics", "barrier", "skorokhod", "terminal"))
    return out


def solve_bsde_infinite(f: np.ndarray, h: np.ndarray, model: RandomTimeModel,
                        space: EnlargedSpace, p: float, threads: int | None = None) -> dict:
    """No-barrier pipeline; K must vanish identically."""
    triplet = DataTriplet(f, NO_BARRIER, h)
    sol = infinite_pipeline(triplet, model, space, threads)
    disc = verify_discounted(sol, triplet, space, model, p, model.tree.depth)
    bound = lp_pvf_norm(running_abs_integral(triplet, model) + np.abs(h), model, p)
    return {"solution": sol, "k_zero": bool(np.all(sol.K == 0.0)),
            "discounted": disc, "pvf_data": bound,
            "ratio": disc.total / bound if bound > 0 else 0.0}


def qtilde_limit_check(X: np.ndarray, model: RandomTimeModel, space: EnlargedSpace) -> dict:
    """Profile T -> E^{Q~_T}[X_{T^tau}] and its limit target G_0 ||X||_{L^1(P x V^F)}."""
    _require_finite(model)
    tree = model.tree
    N = tree.depth
    if X[0] != 0:
        raise ArgumentError("limit check needs X_0 = 0")
    profile = [qtilde_expectation(space, space.at(X, space.stop(T)), T) for T in range(1, N + 1)]
    dV = model.dVF()
    target = model.G0 * sum(expectation(tree, tree.level(X, k) * tree.level(dV, k))
                            for k in range(1, N + 1))
    boundary = model.G0 * expectation(tree, tree.level(X, N) * tree.level(model.Etilde, N))
    bounded_ratio = float(np.max(np.abs(X) / model.EGm))
    return {"profile": profile, "target": target, "boundary": boundary,
            "error": abs(profile[-1] - (target + boundary)),
            "hypothesis_ratio": bounded_ratio,
            "hypothesis_ok": bool(np.isfinite(bounded_ratio))}
