"""Solution and data norms, estimate ratios, and the explicit-constant lemmas.

All expectations are exact weighted sums over enlarged-space states. Norms take
a weight vector, so the same code serves P and Q~_T.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from rbsde_horizon.errors import ArgumentError
from rbsde_horizon.random_time import EnlargedSpace, RandomTimeModel
from rbsde_horizon.rbsde_f import DataTriplet, solve_f_rbsde, transform_data
from rbsde_horizon.rbsde_g import SolutionG, lift_solution
from rbsde_horizon.tree import TreeModel

DEFAULT_P_GRID = (1.25, 1.5, 2.0, 3.0, 4.0)


def kappa(a: float) -> float:
    """3^{1/a} (5 + max(a, 1/a)^{1/a})."""
    return 3.0 ** (1.0 / a) * (5.0 + max(a, 1.0 / a) ** (1.0 / a))


@dataclass(frozen=True)
class NormReport:
    p: float
    measure: str
    T: int
    yNorm: float
    zNorm: float
    mNorm: float
    kNorm: float
    dataNorm: float

    @property
    def total(self) -> float:
        return self.yNorm + self.zNorm + self.mNorm + self.kNorm

    @property
    def ratio(self) -> float:
        if self.dataNorm > 0:
            return self.total / self.dataNorm
        return 0.0 if self.total == 0 else float("inf")

    def as_row(self) -> dict:
        row = asdict(self)
        row["ratio"] = self.ratio
        return row


def _check_p(p: float) -> None:
    if not p > 1:
        raise ArgumentError(f"p must exceed 1, got {p}")


def _lp(w: np.ndarray, x: np.ndarray, p: float) -> float:
    return float(np.sum(w * np.abs(x) ** p)) ** (1.0 / p)


def measure_weights(space: EnlargedSpace, measure: str, T: int) -> np.ndarray:
    if measure == "P":
        return space.pweight
    if measure in ("Qtilde", "Q~"):
        return space.qtilde_weights(T)
    raise ArgumentError(f"unknown measure {measure!r}")


def data_norm(triplet: DataTriplet, space: EnlargedSpace, w: np.ndarray, p: float, T: int,
              positive_part: bool = True) -> float:
    """||xi||_p + ||sum_{k<T^tau} |f_k| dt||_p + ||sup_{n<=T^tau} S_n^+||_p."""
    tree = space.tree
    stop = space.stop(T)
    xi = space.at(triplet.h, stop)
    F = np.zeros(space.n_states)
    for k in range(T):
        F += np.where(k < stop, np.abs(space.at(triplet.f, k)) * tree.dt, 0.0)
    total = _lp(w, xi, p) + _lp(w, F, p)
    if triplet.has_barrier:
        S = space.path_matrix(triplet.S, T)
        S = np.maximum(S, 0.0) if positive_part else np.abs(S)
        cols = np.arange(T + 1)[None, :] <= stop[:, None]
        total += _lp(w, np.max(np.where(cols, S, 0.0), axis=1), p)
    return total


def _norms(Y, Z, dK, dM, w, p, dt):
    y = _lp(w, np.max(np.abs(Y), axis=1), p)
    z = _lp(w, np.sqrt(np.sum(Z * Z, axis=1) * dt), p)
    m = _lp(w, np.sqrt(np.sum(dM * dM, axis=1)), p)
    k = _lp(w, np.sum(dK, axis=1), p)
    return y, z, m, k


def solution_norms(sol: SolutionG, triplet: DataTriplet, space: EnlargedSpace, p: float,
                   measure: str = "Qtilde", T: int | None = None) -> NormReport:
    _check_p(p)
    T = sol.T if T is None else T
    w = measure_weights(space, measure, T)
    y, z, m, k = _norms(sol.Y, sol.Z, sol.dK, sol.dM, w, p, space.tree.dt)
    return NormReport(p, measure, T, y, z, m, k, data_norm(triplet, space, w, p, T))


def solve_pipeline(triplet: DataTriplet, model: RandomTimeModel, space: EnlargedSpace,
                   T: int, threads: int | None = None) -> SolutionG:
    """Transform, solve at F level, lift to G."""
    solF = solve_f_rbsde(transform_data(triplet, model, T), model.tree, T, threads)
    return lift_solution(solF, model, space, triplet.h, T)


def verify_apriori_bounded(sol: SolutionG, triplet: DataTriplet, space: EnlargedSpace,
                           p: float, T: int | None = None) -> NormReport:
    """Norm report under Q~_T; the estimate holds iff its ratio is finite."""
    return solution_norms(sol, triplet, space, p, "Qtilde", T)


def apriori_profile(triplet: DataTriplet, model: RandomTimeModel, space: EnlargedSpace,
                    p: float, horizons=None, threads: int | None = None) -> list[NormReport]:
    horizons = range(1, model.tree.depth + 1) if horizons is None else horizons
    return [verify_apriori_bounded(solve_pipeline(triplet, model, space, T, threads),
                                   triplet, space, p, T) for T in horizons]


def _barrier_difference(a: DataTriplet, b: DataTriplet):
    if a.has_barrier != b.has_barrier:
        raise ArgumentError("stability compares triplets with and without a barrier")
    return (a.S - b.S) if a.has_barrier else None


def verify_stability(solA: SolutionG, solB: SolutionG, tripletA: DataTriplet,
                     tripletB: DataTriplet, space: EnlargedSpace, p: float,
                     T: int | None = None) -> dict:
    """LHS = ||dY|| + ||dZ|| + ||dM|| under Q~ against the two data aggregates."""
    _check_p(p)
    T = solA.T if T is None else T
    w = space.qtilde_weights(T)
    y, z, m, _ = _norms(solA.Y - solB.Y, solA.Z - solB.Z, solA.dK - solB.dK,
                        solA.dM - solB.dM, w, p, space.tree.dt)
    lhs = y + z + m
    dS = _barrier_difference(tripletA, tripletB)
    delta = DataTriplet(tripletA.f - tripletB.f, dS if dS is not None else tripletA.S,
                        tripletA.h - tripletB.h)
    rhs1 = data_norm(delta, space, w, p, T, positive_part=False)
    if dS is None:
        s_norm = 0.0
    else:
        stop = space.stop(T)
        S = np.abs(space.path_matrix(dS, T))
        cols = np.arange(T + 1)[None, :] <= stop[:, None]
        s_norm = _lp(w, np.max(np.where(cols, S, 0.0), axis=1), p)
    rhs2 = np.sqrt(s_norm) * np.sqrt(data_norm(tripletA, space, w, p, T)
                                     + data_norm(tripletB, space, w, p, T))
    rhs = rhs1 + rhs2
    implied = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else float("inf"))
    return {"lhs": lhs, "rhs_data": rhs1, "rhs_cross": float(rhs2), "implied": implied,
            "finite": bool(np.isfinite(implied))}


def discounted_quadruplet(sol: SolutionG, model: RandomTimeModel, p: float):
    """(Etilde^{1/p} Y, Etilde_-^{1/p} Z, Etilde_-^{1/p} dK, Etilde_-^{1/p} dM)."""
    space = sol.space
    E = space.path_matrix(model.Etilde) ** (1.0 / p)
    return E * sol.Y, E[:, :-1] * sol.Z, E[:, :-1] * sol.dK, E[:, :-1] * sol.dM


def verify_discounted(sol: SolutionG, triplet: DataTriplet, space: EnlargedSpace,
                      model: RandomTimeModel, p: float, T: int | None = None) -> NormReport:
    """P-norms of the discounted quadruplet against Delta under Q~_T."""
    _check_p(p)
    T = sol.T if T is None else T
    Y, Z, dK, dM = discounted_quadruplet(sol, model, p)
    y, z, m, k = _norms(Y, Z, dK, dM, space.pweight, p, space.tree.dt)
    dn = data_norm(triplet, space, space.qtilde_weights(T), p, T)
    return NormReport(p, "P-discounted", T, y, z, m, k, dn)


# ------------------------------------------------------------ explicit-constant lemmas

def _atom_field(space: EnlargedSpace, rng: np.random.Generator, draw, n_levels: int) -> np.ndarray:
    """(states, levels) matrix with one random draw per G_n atom."""
    N = space.tree.depth
    width = (1 << N) * (N + 2)
    out = np.empty((space.n_states, n_levels))
    for n in range(n_levels):
        values = draw(rng, width)
        out[:, n] = values[space.atom_codes(n)]
    return out


def verify_lemma_discounting(model: RandomTimeModel, space: EnlargedSpace, p: float, T: int,
                             rng: np.random.Generator) -> dict:
    """One random instance of each discounting inequality; name -> (lhs, rhs)."""
    _check_p(p)
    tree = space.tree
    N = tree.depth
    stop = space.stop(T)
    wp, wq = space.pweight, space.qtilde_weights(T)
    G0 = model.G0
    E = space.path_matrix(model.Etilde)
    Gt = space.path_matrix(model.Gtilde)
    cols = np.arange(N + 1)[None, :]
    upto = cols <= stop[:, None]          # levels 0..T^tau
    steps = (cols[:, 1:] <= stop[:, None])  # increments k = 1..T^tau
    out = {}

    Y = _atom_field(space, rng, lambda g, k: g.normal(size=k), N + 1)
    Y = np.where(upto, Y, 0.0)
    lhs = float(np.sum(wp * np.max(np.where(upto, E * np.abs(Y) ** p, 0.0), axis=1)))
    rhs = float(np.sum(wq * np.max(np.abs(Y) ** p, axis=1))) / G0
    out["a"] = (lhs, rhs)

    dK = _atom_field(space, rng, lambda g, k: np.abs(g.normal(size=k)), N + 1)[:, 1:]
    dK = np.where(steps, dK, 0.0)
    K_end = dK.sum(axis=1)
    for name, a in (("b_1/p", 1.0 / p), ("b_2/p", 2.0 / p)):
        lhs = float(np.sum(wp * np.sum(E[:, :-1] ** a * dK, axis=1) ** (1.0 / a)))
        rhs = kappa(a) / G0 * float(np.sum(wq * (K_end ** (1.0 / a)
                                                 + np.sum(Gt[:, 1:] * dK ** (1.0 / a), axis=1))))
        out[name] = (lhs, rhs)

    dN = np.stack([space.dNG(k) for k in range(1, N + 1)], axis=1)
    dN = np.where(steps, dN, 0.0)
    for name, H in (
        ("c", _atom_field(space, rng, lambda g, k: np.abs(g.normal(size=k)), N + 1)[:, 1:]),
        ("d", space.path_matrix(np.abs(rng.normal(size=tree.size)))[:, 1:]),
    ):
        inner = np.sum(E[:, :-1] ** (2.0 / p) * H * dN ** 2, axis=1)
        lhs = float(np.sum(wp * inner ** (p / 2.0)))
        bracket = np.sum(H * dN ** 2, axis=1) ** (p / 2.0)
        if name == "c":
            extra = np.sum(H ** (p / 2.0) * Gt[:, 1:] * np.abs(dN), axis=1)
        else:
            dD = space.path_matrix(model.dD)[:, 1:]
            before_tau = (cols[:, 1:] < space.death[:, None]) & (cols[:, 1:] <= T)
            extra = 2.0 * np.sum(np.where(before_tau, H ** (p / 2.0) * dD, 0.0), axis=1)
        rhs = kappa(2.0 / p) / G0 * float(np.sum(wq * (bracket + extra)))
        out[name] = (lhs, rhs)
    return out


def verify_appendixA_inequality(tree: TreeModel, seeds, a: float, b: float,
                                zero_martingale: bool = False) -> dict:
    """Empirical ratio ||sup|H.M|||_r / (||sup|X|||_a ||[M]^{1/2}||_b) over seeds."""
    if not (a > 1 and b > 1):
        raise ArgumentError("a and b must exceed 1")
    r = 1.0 / (1.0 / a + 1.0 / b)
    N = tree.depth
    lv = tree.level
    ratios = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        X = rng.normal(size=tree.size) * rng.exponential()
        u = rng.uniform(-1.0, 1.0, size=tree.size)
        leaf = np.zeros(tree.n_leaves) if zero_martingale else rng.standard_t(5, size=tree.n_leaves)
        M = tree.zeros()
        lv(M, N)[:] = leaf
        for n in range(N - 1, -1, -1):
            lv(M, n)[:] = (lv(M, n + 1)[0::2] + lv(M, n + 1)[1::2]) * 0.5
        HM = np.zeros(1)
        sup_hm = np.zeros(1)
        sup_x = np.abs(lv(X, 0))
        qv = np.zeros(1)
        for n in range(N):
            H = lv(u, n) * lv(X, n)
            assert np.all(np.abs(H) <= np.abs(lv(X, n))), "generator broke |H| <= |X_-|"
            dM = lv(M, n + 1) - np.repeat(lv(M, n), 2)
            HM = np.repeat(HM, 2) + np.repeat(H, 2) * dM
            sup_hm = np.maximum(np.repeat(sup_hm, 2), np.abs(HM))
            sup_x = np.maximum(np.repeat(sup_x, 2), np.abs(lv(X, n + 1)))
            qv = np.repeat(qv, 2) + dM ** 2
        lhs = float(np.mean(sup_hm ** r)) ** (1.0 / r)
        den = float(np.mean(sup_x ** a)) ** (1.0 / a) * float(np.mean(qv ** (b / 2.0))) ** (1.0 / b)
        ratios.append(lhs / den if den > 0 else 0.0)
    ratios = np.asarray(ratios)
    return {"r": r, "max_ratio": float(ratios.max()), "mean_ratio": float(ratios.mean()),
            "finite": bool(np.all(np.isfinite(ratios))), "n": int(ratios.size)}
