"""Closed-form reference values used only to check the numerical paths."""
from __future__ import annotations

import itertools

import numpy as np


def cauchy_density(x, t):
    """Density of the 1-d isotropic 1-stable law at time t on the real line."""
    x = np.asarray(x, dtype=float)
    return t / (np.pi * (t * t + x * x))


def wrapped_cauchy_density(x, t, L):
    """Cauchy density of scale t wrapped onto the circle [-L, L)."""
    x = np.asarray(x, dtype=float)
    a = np.pi * t / L
    return np.sinh(a) / (2.0 * L * (np.cosh(a) - np.cos(np.pi * x / L)))


def poisson_tail(x: float, n: int) -> float:
    """sum_{k>n} x^k / k!, summed forward (no cancellation)."""
    term = 1.0
    for k in range(1, n + 1):
        term *= x / k
    total = 0.0
    k = n
    while True:
        k += 1
        term *= x / k
        total += term
        if term < 1e-300 or term < 1e-18 * total:
            return total


def random_forward_kernel(tgrid, sgrid, rng):
    """Dense forward kernel with i.i.d. uniform entries on forward time pairs."""
    from .kernelalg import ForwardKernel

    T, N = tgrid.n_axis, sgrid.size
    data = rng.uniform(0.0, 1.0, (T, N, T, N))
    fwd = np.triu(np.ones((T, T), dtype=bool), k=1)
    data *= fwd[:, None, :, None]
    return ForwardKernel(tgrid, sgrid, data)


def random_jump_matrix(sgrid, rng):
    return rng.uniform(0.0, 1.0, (sgrid.size, sgrid.size))


def brute_series_term(K, jm, weights, cell, n):
    """(KJ)^n K by explicit enumeration of jump times m_1 < ... < m_n and of
    every pre-/post-jump lattice point; K dense (T, N, T, N)."""
    T, N = K.shape[0], K.shape[1]
    out = np.zeros_like(K)
    if n == 0:
        return K.copy()
    for i in range(T):
        for j in range(i + 1, T):
            for ms in itertools.combinations(range(i + 1, j), n):
                wprod = 1.0
                for m in ms:
                    wprod *= weights[m] * cell * cell
                if wprod == 0.0:
                    continue
                times = (i,) + ms + (j,)
                for pts in itertools.product(range(N), repeat=2 * n):
                    coef = wprod
                    for k in range(n):
                        z, w = pts[2 * k], pts[2 * k + 1]
                        coef *= jm[z, w]
                        if k > 0:
                            coef *= K[times[k], pts[2 * k - 1], times[k + 1], z]
                    if coef == 0.0:
                        continue
                    first = K[i, :, ms[0], pts[0]]
                    last = K[ms[-1], pts[-1], j, :]
                    out[i, :, j, :] += coef * np.outer(first, last)
    return out
