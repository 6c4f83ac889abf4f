"""Non-recombining binary tree carrying a discrete Brownian motion.

Storage layout
--------------
An adapted process is a flat float64 array of length ``2**(N+1) - 1``. Node
``(n, i)`` lives at index ``2**n - 1 + i`` where ``i`` holds the first ``n``
branch bits of the path, most significant bit first, bit 1 meaning an up move.
The children of ``(n, i)`` are ``(n+1, 2i)`` (down) and ``(n+1, 2i+1)`` (up).

A predictable process uses the same layout truncated to levels ``0..N-1``
(length ``2**N - 1``): the entry at ``(n, i)`` is the value used over step
``n+1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from rbsde_horizon import kernels
from rbsde_horizon.errors import ArgumentError, ConfigurationError, ContractViolation

MAX_DEPTH = 22


def offset(n: int) -> int:
    return (1 << n) - 1


def flat_size(levels_through: int) -> int:
    """Number of nodes on levels ``0..levels_through``."""
    return (1 << (levels_through + 1)) - 1


def level_of_size(size: int) -> int:
    m = size.bit_length() - 1
    if size != 1 << m:
        raise ArgumentError(f"level array length {size} is not a power of two")
    return m


@dataclass(frozen=True)
class TreeModel:
    depth: int
    dt: float

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.dt))

    @property
    def size(self) -> int:
        return flat_size(self.depth)

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def leaf_weight(self) -> float:
        return 2.0 ** (-self.depth)

    def level(self, x: np.ndarray, n: int) -> np.ndarray:
        """View of level ``n`` inside a flat array."""
        return x[offset(n):offset(n + 1)]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def zeros_predictable(self) -> np.ndarray:
        return np.zeros(flat_size(self.depth - 1))

    def from_levels(self, levels) -> np.ndarray:
        out = self.zeros()
        for n, values in enumerate(levels):
            self.level(out, n)[:] = values
        return out

    def levels(self, x: np.ndarray, upto: int | None = None) -> list[np.ndarray]:
        upto = self.depth if upto is None else upto
        return [self.level(x, n) for n in range(upto + 1)]

    def time(self, n: int) -> float:
        return n * self.dt

    @cached_property
    def dW(self) -> np.ndarray:
        """Increment on the branch leading into each node (0 at the root)."""
        out = self.zeros()
        s = self.sqrt_dt
        for n in range(1, self.depth + 1):
            bits = np.arange(1 << n) & 1
            self.level(out, n)[:] = np.where(bits == 1, s, -s)
        return out

    @cached_property
    def W(self) -> np.ndarray:
        out = self.zeros()
        for n in range(1, self.depth + 1):
            self.level(out, n)[:] = np.repeat(self.level(out, n - 1), 2) + self.level(self.dW, n)
        return out

    @cached_property
    def n_index(self) -> np.ndarray:
        """Level number of every node, as float (handy in expressions)."""
        out = self.zeros()
        for n in range(self.depth + 1):
            self.level(out, n)[:] = n
        return out

    def expand(self, x_level: np.ndarray, levels: int = 1) -> np.ndarray:
        """Broadcast a level-n array to level n+levels (each value to its descendants)."""
        return np.repeat(x_level, 1 << levels)

    def leaf_values(self, x: np.ndarray, n: int) -> np.ndarray:
        """Level-n values indexed by leaf."""
        return self.expand(self.level(x, n), self.depth - n)


def build_tree(depth: int, dt: float) -> TreeModel:
    if not isinstance(depth, (int, np.integer)) or isinstance(depth, bool):
        raise ConfigurationError(f"depth must be an integer, got {depth!r}")
    if not 1 <= depth <= MAX_DEPTH:
        raise ConfigurationError(f"depth must lie in 1..{MAX_DEPTH}, got {depth}")
    if not np.isfinite(dt) or dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    return TreeModel(int(depth), float(dt))


def cond_expectation(tree: TreeModel, X: np.ndarray, n: int) -> np.ndarray:
    """E[X | F_n] for a level-m array X, by repeated pairwise averaging."""
    X = np.asarray(X, dtype=np.float64)
    m = level_of_size(X.shape[0])
    if m > tree.depth:
        raise ArgumentError(f"array of level {m} exceeds tree depth {tree.depth}")
    if n < 0 or n > m:
        raise ArgumentError(f"cannot condition a level-{m} value on F_{n}")
    for _ in range(m - n):
        X = kernels.halve(X)
    return X


def martingale_defect(tree: TreeModel, M: np.ndarray) -> float:
    worst = 0.0
    for n in range(tree.depth):
        avg = kernels.halve(tree.level(M, n + 1))
        worst = max(worst, float(np.max(np.abs(avg - tree.level(M, n)))))
    return worst


def martingale_representation(tree: TreeModel, M: np.ndarray) -> np.ndarray:
    """Integrand Z with M_{n+1} = M_n + Z_n dW_{n+1}; M must be a martingale."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (tree.size,):
        raise ArgumentError(f"expected a flat adapted array of length {tree.size}")
    scale = max(1.0, float(np.max(np.abs(M))))
    defect = martingale_defect(tree, M)
    if defect > 1e-12 * scale:
        raise ContractViolation(f"process is not a martingale (defect {defect:.3e})")
    Z = tree.zeros_predictable()
    two_s = 2.0 * tree.sqrt_dt
    for n in range(tree.depth):
        child = tree.level(M, n + 1)
        tree.level(Z, n)[:] = (child[1::2] - child[0::2]) / two_s
    return Z


def doleans_dade(tree: TreeModel, dX: np.ndarray) -> np.ndarray:
    """E(X)_n = prod_{k<=n} (1 + dX_k); ``dX`` is flat adapted, root entry ignored."""
    dX = np.asarray(dX, dtype=np.float64)
    E = tree.zeros()
    E[0] = 1.0
    for n in range(1, tree.depth + 1):
        tree.level(E, n)[:] = np.repeat(tree.level(E, n - 1), 2) * (1.0 + tree.level(dX, n))
    return E


def increments(tree: TreeModel, X: np.ndarray) -> np.ndarray:
    """Flat array of X_n - X_{n-1} (root entry 0)."""
    out = tree.zeros()
    for n in range(1, tree.depth + 1):
        tree.level(out, n)[:] = tree.level(X, n) - np.repeat(tree.level(X, n - 1), 2)
    return out


def bracket(tree: TreeModel, dX: np.ndarray, dY: np.ndarray) -> np.ndarray:
    """Discrete covariation sum_{k<=n} dX_k dY_k as a flat adapted array."""
    out = tree.zeros()
    for n in range(1, tree.depth + 1):
        tree.level(out, n)[:] = np.repeat(tree.level(out, n - 1), 2) + tree.level(dX, n) * tree.level(dY, n)
    return out


def expectation(tree: TreeModel, x_level: np.ndarray) -> float:
    """E[X] for a single level array."""
    return float(cond_expectation(tree, x_level, 0)[0])
