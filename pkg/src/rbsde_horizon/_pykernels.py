"""Numpy fallback for the compiled kernels; same per-node arithmetic order."""
from __future__ import annotations

import numpy as np


def halve(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return (x[0::2] + x[1::2]) * 0.5


def halve_rows(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return (a[0::2] + a[1::2]) * 0.5


def snell_backward(Y, drift, gain, obstacle, barrier, T, two_sqrt_dt, dK, Z, threads=1):
    # threads is accepted for signature parity; numpy runs each level in one call
    for n in range(T - 1, -1, -1):
        width = 1 << n
        off, coff = width - 1, 2 * width - 1
        e = gain[coff:coff + 2 * width] + Y[coff:coff + 2 * width]
        e0, e1 = e[0::2], e[1::2]
        cont = drift[off:off + width] + (e0 + e1) * 0.5
        if barrier:
            obs = obstacle[off:off + width]
            y = np.where(obs > cont, obs, cont)
        else:
            y = cont
        Y[off:off + width] = y
        dK[off:off + width] = y - cont
        Z[off:off + width] = (e1 - e0) / two_sqrt_dt
