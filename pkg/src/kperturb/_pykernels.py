"""Pure-numpy implementations of the composition hot loops.

Both functions use a fixed summation order (intermediate index ascending) so
results do not depend on scheduling; the compiled core in ``_ckernels``
follows the same order.
"""
from __future__ import annotations

import numpy as np


def lag_convolve(a: np.ndarray, b: np.ndarray, phase_w: np.ndarray, scale: float) -> np.ndarray:
    """Stationary composition in Fourier space.

    ``a``, ``b``: complex arrays (period, n_lags, n_freq), indexed by the
    start-index family ``p`` and the lag.  Returns ``c`` with
    ``c[p, L] = scale * sum_{0<m<L} w[(p+m) % P] a[p, m] b[(p+m) % P, L-m]``.
    """
    P, A, F = a.shape
    out = np.zeros((P, A, F), dtype=np.complex128)
    for p in range(P):
        for L in range(2, A):
            acc = np.zeros(F, dtype=np.complex128)
            for m in range(1, L):
                q = (p + m) % P
                w = phase_w[q]
                if w == 0.0:
                    continue
                acc += w * (a[p, m] * b[q, L - m])
            out[p, L] = scale * acc
    return out


def dense_compose(a: np.ndarray, b: np.ndarray, weights: np.ndarray, scale: float) -> np.ndarray:
    """``c[i,:,j,:] = scale * sum_{i<m<j} w[m] a[i,:,m,:] @ b[m,:,j,:]``."""
    T, N = a.shape[0], a.shape[1]
    out = np.zeros((T, N, T, N))
    for i in range(T):
        for j in range(i + 2, T):
            acc = np.zeros((N, N))
            for m in range(i + 1, j):
                w = weights[m]
                if w == 0.0:
                    continue
                acc += w * (a[i, :, m, :] @ b[m, :, j, :])
            out[i, :, j, :] = scale * acc
    return out
