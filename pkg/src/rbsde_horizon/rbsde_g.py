"""G-level solution: lift of the F-level solution and a brute-force oracle.

Per-state processes are ``(states, N+1)`` matrices indexed by level; ``Z`` is
``(states, N)`` with column n used over step n+1. Everything is frozen from
``T ^ tau`` on.

The orthogonal part is stored as ``M = (Y^F/Etilde - h) . N^G`` so that the
dynamics read ``Y_{n+1} - Y_n = -f_n dt - dK_{n+1} - dM_{n+1} + Z_n dW_{n+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rbsde_horizon.errors import ArgumentError, RBSDEError
from rbsde_horizon.random_time import EnlargedSpace, RandomTimeModel
from rbsde_horizon.rbsde_f import DataTriplet, SolutionF

TOL = 1e-10


@dataclass(frozen=True)
class SolutionG:
    space: EnlargedSpace = field(repr=False)
    T: int
    Y: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)

    @property
    def dK(self) -> np.ndarray:
        return np.diff(self.K, axis=1)

    @property
    def dM(self) -> np.ndarray:
        return np.diff(self.M, axis=1)

    def stop(self) -> np.ndarray:
        return self.space.stop(self.T)


def _frozen_payoff(space: EnlargedSpace, h: np.ndarray, T: int) -> np.ndarray:
    return space.at(h, space.stop(T))


def lift_solution(solF: SolutionF, model: RandomTimeModel, space: EnlargedSpace,
                  h: np.ndarray, T: int | None = None) -> SolutionG:
    T = solF.T if T is None else T
    if T != solF.T:
        raise ArgumentError("horizon mismatch between F-solution and lift")
    N = space.tree.depth
    S = space.n_states
    stop = space.stop(T)
    xi = _frozen_payoff(space, h, T)
    Y = np.repeat(xi[:, None], N + 1, axis=1)
    Z = np.zeros((S, N))
    dK = np.zeros((S, N))
    dM = np.zeros((S, N))
    for n in range(T):
        live = n < stop
        E_n = space.at(model.Etilde, n)[live]
        if np.any(E_n <= 0):
            raise RBSDEError("Etilde vanished before tau; positivity guard bypassed")
        Y[live, n] = space.at(solF.Y, n)[live] / E_n
        Z[live, n] = space.at(solF.Z, n)[live] / E_n
        dK[live, n] = space.at(solF.dK, n)[live] / E_n
        E_next = space.at(model.Etilde, n + 1)[live]
        yF_next = space.at(solF.Y, n + 1)[live]
        # Etilde_{n+1} = 0 only when the step kills every survivor; dN^G is 0 there
        ratio = np.divide(yF_next, E_next, out=np.zeros_like(E_next), where=E_next > 0)
        integrand = np.where(E_next > 0, ratio - space.at(h, n + 1)[live], 0.0)
        dM[live, n] = integrand * space.dNG(n + 1)[live]
    K = np.concatenate([np.zeros((S, 1)), np.cumsum(dK, axis=1)], axis=1)
    M = np.concatenate([np.zeros((S, 1)), np.cumsum(dM, axis=1)], axis=1)
    return SolutionG(space, T, Y, Z, K, M)


def solve_g_snell_oracle(triplet: DataTriplet, space: EnlargedSpace, T: int) -> np.ndarray:
    """Per-state Y by dynamic programming on the G-atoms under Q~_T."""
    tree = space.tree
    if not 0 <= T <= tree.depth:
        raise ArgumentError(f"horizon {T} outside 0..{tree.depth}")
    N = tree.depth
    stop = space.stop(T)
    Y = np.repeat(_frozen_payoff(space, triplet.h, T)[:, None], N + 1, axis=1)
    w = space.pweight * space.density(T)
    for n in range(T - 1, -1, -1):
        live = stop > n
        cont = space.at(triplet.f, n) * tree.dt + space.atom_mean(Y[:, n + 1], n, w)
        if triplet.has_barrier:
            cont = np.maximum(space.at(triplet.S, n), cont)
        Y[live, n] = cont[live]
    return Y


def _entry(value: float, tol: float, vacuous: bool = False) -> dict:
    return {"value": float(value), "tol": tol, "pass": bool(value <= tol), "vacuous": vacuous}


def residual_check(sol: SolutionG, triplet: DataTriplet, space: EnlargedSpace,
                   T: int | None = None) -> dict:
    """Evaluate every SolutionG invariant; returns name -> {value, tol, pass}."""
    T = sol.T if T is None else T
    tree = space.tree
    N = tree.depth
    stop = space.stop(T)
    scale = 1.0 + float(np.max(np.abs(sol.Y)))
    tol = TOL * scale
    dK, dM = sol.dK, sol.dM
    wq = space.pweight * space.density(T)
    rows = np.arange(space.n_states)

    out = {}
    out["terminal"] = _entry(np.max(np.abs(sol.Y[rows, stop] - _frozen_payoff(space, triplet.h, T))), tol)

    dyn = 0.0
    frozen = 0.0
    skor = np.zeros(space.n_states)
    barrier = 0.0
    q_mart = p_mart = w_mart = 0.0
    for n in range(N):
        live = n < stop
        dW = space.at(tree.dW, n + 1)
        r = (sol.Y[:, n + 1] - sol.Y[:, n] + space.at(triplet.f, n) * tree.dt
             + dK[:, n] + dM[:, n] - sol.Z[:, n] * dW)
        if np.any(live):
            dyn = max(dyn, float(np.max(np.abs(r[live]))))
        if np.any(~live):
            dead = ~live
            frozen = max(frozen, float(np.max(
                np.abs(sol.Y[dead, n + 1] - sol.Y[dead, n]) + np.abs(dK[dead, n])
                + np.abs(dM[dead, n]) + np.abs(sol.Z[dead, n]))))
        if triplet.has_barrier:
            gap = sol.Y[:, n] - space.at(triplet.S, n)
            skor += np.where(live, gap * dK[:, n], 0.0)
            if np.any(live):
                barrier = max(barrier, float(np.max(np.maximum(-gap[live], 0.0))))
        if n < T and np.any(live):
            q_mart = max(q_mart, float(np.max(np.abs(space.atom_mean(dM[:, n], n, wq)[live]))))
            p_mart = max(p_mart, float(np.max(np.abs(space.atom_mean(dM[:, n], n, space.pweight)[live]))))
            w_mart = max(w_mart, float(np.max(np.abs(space.atom_mean(np.where(live, dW, 0.0), n, wq)[live]))))
    out["dynamics"] = _entry(dyn, tol)
    out["stopped"] = _entry(frozen, tol)
    out["K_nondecreasing"] = _entry(max(0.0, -float(np.min(dK))) if dK.size else 0.0, tol)
    nb = not triplet.has_barrier
    out["barrier"] = _entry(barrier, tol, vacuous=nb)
    out["skorokhod"] = _entry(abs(float(np.sum(wq * skor))), tol, vacuous=nb)
    out["M_martingale_Qtilde"] = _entry(q_mart, tol)
    out["M_martingale_P"] = _entry(p_mart, tol)
    out["W_stopped_martingale_Qtilde"] = _entry(w_mart, 1e-12 * (1.0 + tree.sqrt_dt))
    return out


def all_pass(report: dict) -> bool:
    return all(v["pass"] for v in report.values())
