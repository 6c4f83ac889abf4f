"""The random horizon tau, its enlargement processes and the enlarged space.

tau is described by a density kernel: for each leaf path w a vector
``alpha[w] = (alpha_0, ..., alpha_N, alpha_inf)`` with ``alpha_j = P(tau = j | F_N)``.
Everything else (G, G-tilde, the dual optional projection, m, E-tilde, Z-tilde,
V^F) follows by exact backward conditional expectation on the tree.

Convention at time 0: ``Etilde_0 = 1`` and ``Ztilde_0 = 1``; mass placed at
``tau = 0`` only lowers ``G_0 = 1 - E[alpha_0]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from rbsde_horizon import kernels
from rbsde_horizon.errors import ConfigurationError, PositivityError
from rbsde_horizon.tree import TreeModel, cond_expectation

ROW_SUM_TOL = 1e-14
MAX_STATES = 1 << 23


@dataclass(frozen=True)
class DensityKernel:
    alpha: np.ndarray  # shape (2**N, N+2); last column is alpha_inf
    finite_tau: bool = False

    def __post_init__(self):
        a = np.ascontiguousarray(self.alpha, dtype=np.float64)
        object.__setattr__(self, "alpha", a)
        if a.ndim != 2:
            raise ConfigurationError("alpha must be a 2-D table (leaf, death index)")
        depth = a.shape[1] - 2
        if depth < 1 or a.shape[0] != 1 << depth:
            raise ConfigurationError(
                f"alpha has shape {a.shape}; expected (2**N, N+2) for some N >= 1")
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("alpha contains non-finite entries")
        if np.any(a < 0):
            leaf, j = np.argwhere(a < 0)[0]
            raise ConfigurationError(f"negative alpha at leaf {leaf}, index {j}")
        err = np.abs(a.sum(axis=1) - 1.0)
        if np.any(err > ROW_SUM_TOL):
            leaf = int(np.argmax(err))
            raise ConfigurationError(
                f"alpha row for leaf {leaf} sums to {a[leaf].sum()!r}, not 1")
        if self.finite_tau and np.any(a[:, -1] != 0):
            raise ConfigurationError("finite-tau kernel must have alpha_inf = 0")

    @property
    def depth(self) -> int:
        return self.alpha.shape[1] - 2


# ---------------------------------------------------------------- kernels

def reference_kernel(finite_tau: bool = False) -> DensityKernel:
    """The 2-step kernel with alpha_1 depending on the second (future) step.

    With ``finite_tau`` the alpha_inf mass is moved onto alpha_2.
    """
    up = [0.0, 0.25, 0.25, 0.5]
    down = [0.0, 0.5, 0.25, 0.25]
    rows = np.array([down, up, down, up])  # leaves 00, 01, 10, 11
    if finite_tau:
        rows[:, 2] += rows[:, 3]
        rows[:, 3] = 0.0
    return DensityKernel(rows, finite_tau=finite_tau)


def _leaf_grid(tree: TreeModel):
    """Per-leaf arrays of W_k and of the sign of dW_{k+1} for k = 0..N."""
    N = tree.depth
    leaves = np.arange(1 << N)
    W = np.stack([tree.leaf_values(tree.W, k) for k in range(N + 1)], axis=1)
    sign = np.zeros((1 << N, N + 1))
    for k in range(N):
        bit = (leaves >> (N - k - 1)) & 1
        sign[:, k] = np.where(bit == 1, 1.0, -1.0)
    return W, sign


def _kernel_from_steps(p: np.ndarray, alpha0: float, finite_tau: bool) -> DensityKernel:
    """alpha from per-step death probabilities p[:, k], k = 1..N."""
    n_leaves, width = p.shape
    N = width - 1
    if not 0.0 <= alpha0 < 1.0:
        raise ConfigurationError(f"alpha0 must lie in [0, 1), got {alpha0}")
    if finite_tau:
        p = p.copy()
        p[:, N] = 1.0
    alpha = np.zeros((n_leaves, N + 2))
    alpha[:, 0] = alpha0
    surv = np.full(n_leaves, 1.0 - alpha0)
    for k in range(1, N + 1):
        alpha[:, k] = surv * p[:, k]
        surv = surv * (1.0 - p[:, k])
    alpha[:, N + 1] = surv
    return DensityKernel(alpha, finite_tau=finite_tau)


def _step_probabilities(rate: np.ndarray, dt: float) -> np.ndarray:
    if not np.all(np.isfinite(rate)):
        raise ConfigurationError("hazard evaluates to a non-finite value")
    if np.any(rate < 0):
        raise ConfigurationError("hazard must be nonnegative")
    return -np.expm1(-rate * dt)


def cox_kernel(tree: TreeModel, hazard: Callable, alpha0: float = 0.0,
               finite_tau: bool = False) -> DensityKernel:
    """Kernel of an intensity model with hazard ``hazard(n, t, W)`` at step n.

    The death probability over step k is ``1 - exp(-hazard(k, t_k, W_k) dt)``.
    Such a tau is immersed: m is constant and Ztilde = 1.
    """
    N = tree.depth
    W, _ = _leaf_grid(tree)
    p = np.zeros((1 << N, N + 1))
    for k in range(1, N + 1):
        rate = np.broadcast_to(np.asarray(hazard(k, tree.time(k), W[:, k]), float), (1 << N,))
        p[:, k] = _step_probabilities(rate, tree.dt)
    return _kernel_from_steps(p, alpha0, finite_tau)


def anticipative_mix_kernel(tree: TreeModel, hazard: Callable, mix: float,
                            alpha0: float = 0.0, finite_tau: bool = False) -> DensityKernel:
    """Hazard ``hazard(n, t, W, s)`` where s is the sign of the next Brownian step.

    The effective rate blends the non-anticipative reading (s = 0) with the
    anticipative one: ``(1 - mix) * hazard(..., 0) + mix * hazard(..., s)``.
    At the last level s is 0.
    """
    if not 0.0 <= mix <= 1.0:
        raise ConfigurationError(f"mix must lie in [0, 1], got {mix}")
    N = tree.depth
    W, sign = _leaf_grid(tree)
    shape = (1 << N,)
    p = np.zeros((1 << N, N + 1))
    for k in range(1, N + 1):
        t = tree.time(k)
        plain = np.broadcast_to(np.asarray(hazard(k, t, W[:, k], np.zeros(shape)), float), shape)
        ahead = np.broadcast_to(np.asarray(hazard(k, t, W[:, k], sign[:, k]), float), shape)
        p[:, k] = _step_probabilities((1.0 - mix) * plain + mix * ahead, tree.dt)
    return _kernel_from_steps(p, alpha0, finite_tau)


def random_kernel(tree: TreeModel, rng: np.random.Generator, finite_tau: bool = False,
                  alpha0: float = 0.0, concentration: float = 1.0) -> DensityKernel:
    """Generic path-dependent kernel: Dirichlet rows over the death indices."""
    N = tree.depth
    cols = N + 1 if finite_tau else N + 2  # drop alpha_inf in finite mode
    body = rng.dirichlet(np.full(cols - 1, concentration), size=1 << N)
    alpha = np.zeros((1 << N, N + 2))
    alpha[:, 1:cols] = body * (1.0 - alpha0)
    alpha[:, 0] = alpha0
    return DensityKernel(alpha, finite_tau=finite_tau)


# ---------------------------------------------------------------- model

@dataclass(frozen=True)
class RandomTimeModel:
    tree: TreeModel
    kernel: DensityKernel = field(repr=False)
    G: np.ndarray = field(repr=False)
    Gtilde: np.ndarray = field(repr=False)
    dD: np.ndarray = field(repr=False)      # increments of D^{o,F}; dD_0 = E[alpha_0]
    Dof: np.ndarray = field(repr=False)     # cumulative D^{o,F}
    m: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)       # dD / Gtilde, the one-step death hazard
    Etilde: np.ndarray = field(repr=False)
    EGm: np.ndarray = field(repr=False)     # E(G_-^{-1} . m)
    Ztilde: np.ndarray = field(repr=False)
    VF: np.ndarray = field(repr=False)

    @property
    def finite_tau(self) -> bool:
        return self.kernel.finite_tau

    @property
    def G0(self) -> float:
        return float(self.G[0])

    def dVF(self) -> np.ndarray:
        """Increments of V^F per node (0 at the root)."""
        out = self.tree.zeros()
        for n in range(1, self.tree.depth + 1):
            lv = self.tree.level
            lv(out, n)[:] = np.repeat(lv(self.Etilde, n - 1), 2) * lv(self.q, n)
        return out

    def invariant_residuals(self) -> dict[str, float]:
        """Max absolute residual of every structural identity."""
        tree, lv = self.tree, self.tree.level
        N = tree.depth
        res = {"m_martingale": 0.0, "Gtilde_vs_Gminus_dm": 0.0,
               "Gtilde_minus_dD": 0.0, "decomposition": 0.0, "Ztilde_reciprocal": 0.0,
               "VF_monotone": 0.0}
        res["Gtilde_minus_dD"] = float(np.max(np.abs(self.Gtilde - self.dD - self.G)))
        for n in range(1, N + 1):
            parent_m = np.repeat(lv(self.m, n - 1), 2)
            parent_G = np.repeat(lv(self.G, n - 1), 2)
            res["m_martingale"] = max(res["m_martingale"], float(np.max(np.abs(
                kernels.halve(lv(self.m, n)) - lv(self.m, n - 1)))))
            res["Gtilde_vs_Gminus_dm"] = max(res["Gtilde_vs_Gminus_dm"], float(np.max(np.abs(
                parent_G + (lv(self.m, n) - parent_m) - lv(self.Gtilde, n)))))
            res["VF_monotone"] = max(res["VF_monotone"], float(np.max(np.maximum(
                np.repeat(lv(self.VF, n - 1), 2) - lv(self.VF, n), 0.0))))
        res["decomposition"] = float(np.max(np.abs(self.G0 * self.EGm * self.Etilde - self.G)))
        res["Ztilde_reciprocal"] = float(np.max(np.abs(self.Ztilde * self.EGm - 1.0)))
        return res


def _first_bad(tree: TreeModel, bad: np.ndarray) -> tuple[int, int]:
    idx = int(np.argmax(bad))
    n = (idx + 1).bit_length() - 1
    return n, idx - ((1 << n) - 1)


def build_random_time(tree: TreeModel, kernel: DensityKernel) -> RandomTimeModel:
    N = tree.depth
    if kernel.depth != N:
        raise ConfigurationError(f"kernel depth {kernel.depth} differs from tree depth {N}")
    lv = tree.level
    dD = tree.zeros()
    G = tree.zeros()
    # subtree averages of every alpha column, one halving per level
    cur = kernel.alpha
    for n in range(N, -1, -1):
        lv(dD, n)[:] = cur[:, n]
        if n == N:
            lv(G, N)[:] = cur[:, N + 1]
        if n > 0:
            cur = kernels.halve_rows(cur)
    for n in range(N - 1, -1, -1):
        lv(G, n)[:] = kernels.halve(lv(G, n + 1) + lv(dD, n + 1))
    Gtilde = G + dD  # root value is 1 up to rounding

    check_upto = N - 1 if kernel.finite_tau else N
    bad = G[: (1 << (check_upto + 1)) - 1] <= 0
    if np.any(bad):
        raise PositivityError("positivity violated: G <= 0", _first_bad(tree, bad))
    bad = Gtilde <= 0
    if np.any(bad):
        raise PositivityError("positivity violated: G-tilde <= 0", _first_bad(tree, bad))

    Dof = tree.zeros()
    Dof[0] = dD[0]
    for n in range(1, N + 1):
        lv(Dof, n)[:] = np.repeat(lv(Dof, n - 1), 2) + lv(dD, n)
    m = G + Dof

    q = dD / Gtilde
    q[0] = 0.0
    Etilde = tree.zeros()
    EGm = tree.zeros()
    Etilde[0] = EGm[0] = 1.0
    for n in range(1, N + 1):
        parent_G = np.repeat(lv(G, n - 1), 2)
        lv(Etilde, n)[:] = np.repeat(lv(Etilde, n - 1), 2) * (1.0 - lv(q, n))
        dm = lv(m, n) - np.repeat(lv(m, n - 1), 2)
        lv(EGm, n)[:] = np.repeat(lv(EGm, n - 1), 2) * (1.0 + dm / parent_G)
    Ztilde = 1.0 / EGm
    VF = 1.0 - Etilde
    for arr in (G, Gtilde, dD, Dof, m, q, Etilde, EGm, Ztilde, VF):
        arr.setflags(write=False)
    return RandomTimeModel(tree, kernel, G, Gtilde, dD, Dof, m, q, Etilde, EGm, Ztilde, VF)


# ---------------------------------------------------------------- enlarged space

@dataclass(frozen=True)
class EnlargedSpace:
    """All (leaf, death index) pairs with positive P-weight.

    ``death`` stores ``N + 1`` for tau = infinity. States are ordered by leaf,
    then death index, which is the CSV row order.
    """
    tree: TreeModel
    model: RandomTimeModel = field(repr=False)
    leaf: np.ndarray = field(repr=False)
    death: np.ndarray = field(repr=False)
    pweight: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.leaf.shape[0]

    @property
    def never(self) -> int:
        return self.tree.depth + 1

    def prefix(self, n: int) -> np.ndarray:
        return self.leaf >> (self.tree.depth - n)

    def at(self, x: np.ndarray, n) -> np.ndarray:
        """Per-state value of a flat F-adapted array at level n (scalar or per state)."""
        n = np.broadcast_to(np.asarray(n), self.leaf.shape)
        idx = (np.left_shift(1, n) - 1) + (self.leaf >> (self.tree.depth - n))
        return np.asarray(x)[idx]

    def path_matrix(self, x: np.ndarray, upto: int | None = None) -> np.ndarray:
        """(states, levels) matrix of a flat adapted array along each state's path."""
        upto = self.tree.depth if upto is None else upto
        return np.stack([self.at(x, n) for n in range(upto + 1)], axis=1)

    def stop(self, T: int) -> np.ndarray:
        return np.minimum(self.death, T)

    def alive(self, n: int) -> np.ndarray:
        return self.death > n

    def density(self, T: int) -> np.ndarray:
        """Ztilde_{T ^ tau} per state."""
        return self.at(self.model.Ztilde, self.stop(T))

    def atom_codes(self, n: int) -> np.ndarray:
        """Label of the G_n atom of each state: path prefix plus death class."""
        cls = np.where(self.death > n, self.never, self.death)
        return self.prefix(n) * (self.tree.depth + 2) + cls

    def atom_mean(self, values: np.ndarray, n: int, weights: np.ndarray) -> np.ndarray:
        """Per-state weighted mean of ``values`` over its G_n atom."""
        _, inv = np.unique(self.atom_codes(n), return_inverse=True)
        mass = np.bincount(inv, weights=weights)
        if np.any(mass <= 0):
            raise PositivityError("empty conditional mass on a G-atom")
        tot = np.bincount(inv, weights=weights * values)
        return (tot / mass)[inv]

    def dNG(self, n: int) -> np.ndarray:
        """Increment of N^G at step n >= 1 per state."""
        q = self.at(self.model.q, n)
        return (self.death == n).astype(float) - q * (self.death >= n)

    def qtilde_weights(self, T: int) -> np.ndarray:
        return self.pweight * self.density(T)


def build_enlarged_space(tree: TreeModel, model: RandomTimeModel,
                         kernel: DensityKernel | None = None) -> EnlargedSpace:
    kernel = model.kernel if kernel is None else kernel
    count = int(np.count_nonzero(kernel.alpha > 0))
    if count > MAX_STATES:
        raise ConfigurationError(
            f"enlarged space would hold {count} states (limit {MAX_STATES}); use a smaller depth")
    leaf, death = np.nonzero(kernel.alpha > 0)
    w = kernel.alpha[leaf, death] * tree.leaf_weight
    return EnlargedSpace(tree, model, leaf.astype(np.int64), death.astype(np.int64), w)


def qtilde_expectation(space: EnlargedSpace, X: np.ndarray, T: int) -> float:
    """E^{Q~_T}[X] for a per-state payoff X."""
    if not 0 <= T <= space.tree.depth:
        raise ConfigurationError(f"horizon {T} outside 0..{space.tree.depth}")
    return float(np.sum(space.qtilde_weights(T) * X))


def check_g_projection(space: EnlargedSpace, model: RandomTimeModel, X: np.ndarray,
                       n: int) -> float:
    """Max over alive G_n atoms of |E[X|G_n] - E[X 1{n<tau}|F_n] / G_n|.

    ``X`` is either a flat adapted array (its level-n value is used) or a
    per-leaf random variable of length 2**N.
    """
    tree = space.tree
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == tree.size:
        leaf_x = tree.leaf_values(X, n)
    elif X.shape[0] == tree.n_leaves:
        leaf_x = X
    else:
        raise ConfigurationError("X must be flat adapted or per-leaf")
    alive = space.alive(n)
    lhs = space.atom_mean(leaf_x[space.leaf], n, space.pweight)[alive]
    tail = model.kernel.alpha[:, n + 1:].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs_node = cond_expectation(tree, leaf_x * tail, n) / tree.level(model.G, n)
    rhs = rhs_node[space.prefix(n)][alive]
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
