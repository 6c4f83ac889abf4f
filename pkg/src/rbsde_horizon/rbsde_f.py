"""F-level reflected BSDE: transformed data and Snell-envelope backward induction.

The recursion runs directly on Y:

    Y_T = xiF,
    Y_n = max(SF_n, fF_n dt + E[h_{n+1} dV_{n+1} + Y_{n+1} | F_n]),

which is the Snell envelope of the accumulated reward minus the accumulator.
The minimal reflection increment is ``dK_{n+1} = Y_n - (continuation value)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rbsde_horizon import kernels
from rbsde_horizon.errors import ArgumentError, BarrierError, InputError
from rbsde_horizon.random_time import RandomTimeModel
from rbsde_horizon.tree import TreeModel, flat_size


class _NoBarrier:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_BARRIER"

    def __reduce__(self):
        return (_NoBarrier, ())


NO_BARRIER = _NoBarrier()


@dataclass(frozen=True)
class DataTriplet:
    """RBSDE data on the tree: driver f, obstacle S (or NO_BARRIER), payoff h."""
    f: np.ndarray
    S: np.ndarray | _NoBarrier
    h: np.ndarray

    def __post_init__(self):
        for name in ("f", "h"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.S is not NO_BARRIER:
            object.__setattr__(self, "S", np.asarray(self.S, dtype=np.float64))
        for name, arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise InputError(f"data component {name} is not finite")
        shapes = {arr.shape for _, arr in self.arrays()}
        if len(shapes) != 1:
            raise InputError(f"data components have mismatched shapes {shapes}")

    @property
    def has_barrier(self) -> bool:
        return self.S is not NO_BARRIER

    def arrays(self):
        yield "f", self.f
        yield "h", self.h
        if self.has_barrier:
            yield "S", self.S

    def scaled(self, lam: float) -> "DataTriplet":
        S = self.S * lam if self.has_barrier else NO_BARRIER
        return DataTriplet(self.f * lam, S, self.h * lam)


def constant_triplet(tree: TreeModel, c: float, f: float = 0.0,
                     S: float | None = None) -> DataTriplet:
    ones = np.ones(tree.size)
    return DataTriplet(f * ones, NO_BARRIER if S is None else S * ones, c * ones)


@dataclass(frozen=True)
class TransformedDataF:
    T: int
    fF: np.ndarray
    SF: np.ndarray | _NoBarrier
    xiF: np.ndarray      # level-T array
    h: np.ndarray
    dV: np.ndarray       # increments of V^F per node
    dt: float

    @property
    def has_barrier(self) -> bool:
        return self.SF is not NO_BARRIER


@dataclass(frozen=True)
class SolutionF:
    tree: TreeModel
    T: int
    Y: np.ndarray = field(repr=False)    # levels 0..T
    Z: np.ndarray = field(repr=False)    # levels 0..T-1, used over the next step
    dK: np.ndarray = field(repr=False)   # levels 0..T-1, increment over the next step
    K: np.ndarray = field(repr=False)    # cumulative, stored on levels 0..T
    diagnostics: dict = field(default_factory=dict)


def check_terminal_dominance(triplet: DataTriplet, model: RandomTimeModel, T: int) -> None:
    """xi = h_{T^tau} >= S_{T^tau} wherever the stopping level is reachable."""
    if not triplet.has_barrier:
        return
    tree, lv = model.tree, model.tree.level
    for n in range(T + 1):
        reach = lv(model.dD, n) > 0 if n < T else lv(model.Gtilde, n) > 0
        bad = reach & (lv(triplet.h, n) < lv(triplet.S, n))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise BarrierError("terminal payoff below barrier (xi < S)", (n, i))


def transform_data(triplet: DataTriplet, model: RandomTimeModel, T: int) -> TransformedDataF:
    tree = model.tree
    if not 0 <= T <= tree.depth:
        raise ArgumentError(f"horizon {T} outside 0..{tree.depth}")
    if triplet.h.shape != (tree.size,):
        raise ArgumentError("triplet and model live on different trees")
    check_terminal_dominance(triplet, model, T)
    E = model.Etilde
    SF = E * triplet.S if triplet.has_barrier else NO_BARRIER
    xiF = tree.level(E, T) * tree.level(triplet.h, T)
    return TransformedDataF(T, E * triplet.f, SF, xiF.copy(), triplet.h, model.dVF(), tree.dt)


def solve_f_rbsde(data: TransformedDataF, tree: TreeModel, T: int | None = None,
                  threads: int | None = None) -> SolutionF:
    T = data.T if T is None else T
    if T != data.T:
        raise ArgumentError(f"data were transformed for horizon {data.T}, not {T}")
    if T == 0:
        Y = data.xiF.copy()
        return SolutionF(tree, 0, Y, np.zeros(0), np.zeros(0), np.zeros(1),
                         {"dynamics": 0.0, "scale": 1.0 + abs(float(Y[0]))})
    top, below = flat_size(T), flat_size(T - 1)
    for name, arr in (("fF", data.fF), ("xiF", data.xiF), ("h", data.h)):
        if not np.all(np.isfinite(arr)):
            raise InputError(f"transformed data {name} is not finite")
    Y = np.zeros(top)
    tree.level(Y, T)[:] = data.xiF
    drift = np.ascontiguousarray(data.fF[:below] * data.dt)
    gain = np.ascontiguousarray(data.h[:top] * data.dV[:top])
    barrier = data.has_barrier
    obstacle = np.ascontiguousarray(data.SF[:below]) if barrier else np.zeros(below)
    dK = np.zeros(below)
    Z = np.zeros(below)
    kernels.snell_backward(Y, drift, gain, obstacle, barrier, T, 2.0 * tree.sqrt_dt,
                           dK, Z, kernels.resolve_threads(threads))
    K = np.zeros(top)
    for n in range(1, T + 1):
        tree.level(K, n)[:] = np.repeat(tree.level(K, n - 1) + tree.level(dK, n - 1), 2)
    sol = SolutionF(tree, T, Y, Z, dK, K)
    sol.diagnostics.update(_diagnostics(sol, data))
    return sol


def solve_f_rbsde_infinite(data: TransformedDataF, tree: TreeModel, model: RandomTimeModel,
                           threads: int | None = None) -> SolutionF:
    """Full-tree problem with tau <= N a.s.; the terminal value is zero."""
    N = tree.depth
    if not model.finite_tau:
        raise ArgumentError("infinite-horizon solve needs a finite-tau kernel")
    if data.T != N:
        raise ArgumentError("infinite-horizon data must be transformed with T = N")
    if data.has_barrier:
        bad = tree.level(data.SF, N) > 0
        if np.any(bad):
            raise BarrierError("barrier violates terminal condition (SF_N > 0)",
                               (N, int(np.argmax(bad))))
    return solve_f_rbsde(data, tree, N, threads)


def _diagnostics(sol: SolutionF, data: TransformedDataF) -> dict:
    tree, T = sol.tree, sol.T
    lv = tree.level
    scale = 1.0 + float(np.max(np.abs(sol.Y)))
    worst = 0.0
    for n in range(T):
        pred = (lv(sol.Y, n + 1) + np.repeat(lv(data.fF, n) * data.dt + lv(sol.dK, n), 2)
                + lv(data.h, n + 1) * lv(data.dV, n + 1)
                - np.repeat(lv(sol.Z, n), 2) * lv(tree.dW, n + 1))
        worst = max(worst, float(np.max(np.abs(pred - np.repeat(lv(sol.Y, n), 2)))))
    out = {"dynamics": worst, "scale": scale,
           "terminal": float(np.max(np.abs(lv(sol.Y, T) - data.xiF))),
           "min_dK": float(np.min(sol.dK)) if sol.dK.size else 0.0}
    if data.has_barrier and T > 0:
        below = flat_size(T - 1)
        out["barrier"] = float(np.max(np.maximum(data.SF[:below] - sol.Y[:below], 0.0)))
    return out


def verify_skorokhod(sol: SolutionF, data: TransformedDataF) -> dict:
    """Pathwise sum of (Y_n - SF_n) dK_{n+1} and any slack node where K moves."""
    tree, T = sol.tree, sol.T
    tol = 1e-10 * (1.0 + float(np.max(np.abs(sol.Y))))
    if not data.has_barrier or T == 0:
        return {"pairing": 0.0, "violation": False, "tol": tol, "vacuous": True}
    lv = tree.level
    acc = np.zeros(1)
    violation = False
    for n in range(T):
        gap = lv(sol.Y, n) - lv(data.SF, n)
        term = gap * lv(sol.dK, n)
        violation |= bool(np.any((lv(sol.dK, n) > tol) & (gap > tol)))
        acc = np.repeat(acc + term, 2)
    return {"pairing": float(np.max(np.abs(acc))), "violation": violation, "tol": tol,
            "vacuous": False}
