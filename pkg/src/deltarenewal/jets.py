"""Truncated Taylor series arithmetic, vectorised over trailing sample axes.

A one-dimensional jet is an array ``c`` of shape ``(K+1, ...)`` holding
``f^(k)(z0) / k!``.  A two-dimensional jet has shape ``(K+1, K+1, ...)`` and
holds ``d^a_u d^b_w f / (a! b!)``; entries with ``a + b > K`` are ignored.
"""

from __future__ import annotations

from math import comb, factorial

import numpy as np


def binom(n: int, k: int) -> int:
    return comb(n, k) if 0 <= k <= n else 0


def series_mul(a: np.ndarray, b: np.ndarray, degree: int) -> np.ndarray:
    """Product of two 1D jets truncated at ``degree``."""
    out = np.zeros((degree + 1,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))
    for i in range(min(degree, a.shape[0] - 1) + 1):
        for j in range(min(degree - i, b.shape[0] - 1) + 1):
            out[i + j] += a[i] * b[j]
    return out


def series_diff(a: np.ndarray) -> np.ndarray:
    """Derivative of a 1D jet (one degree shorter)."""
    if a.shape[0] <= 1:
        return np.zeros((1,) + a.shape[1:])
    k = np.arange(1, a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1))
    return a[1:] * k


def series_exp(e: np.ndarray) -> np.ndarray:
    """Jet of ``exp(f)`` from the jet of ``f``, via ``(exp f)' = f' exp f``."""
    K = e.shape[0] - 1
    f = np.empty_like(e, dtype=float)
    f[0] = np.exp(e[0])
    for k in range(1, K + 1):
        acc = np.zeros_like(f[0])
        for j in range(1, k + 1):
            acc = acc + j * e[j] * f[k - j]
        f[k] = acc / k
    return f


def series_exp_2d(e: np.ndarray) -> np.ndarray:
    """Bivariate jet of ``exp(f)``; total degree is ``e.shape[0] - 1``."""
    K = e.shape[0] - 1
    f = np.zeros_like(e, dtype=float)
    f[0, :] = series_exp(e[0, :])
    for a in range(1, K + 1):
        for b in range(0, K - a + 1):
            acc = np.zeros_like(f[0, 0])
            for a1 in range(1, a + 1):
                for b1 in range(0, b + 1):
                    acc = acc + a1 * e[a1, b1] * f[a - a1, b - b1]
            f[a, b] = acc / a
    return f


def jet_to_derivatives(c: np.ndarray) -> np.ndarray:
    k = np.array([factorial(i) for i in range(c.shape[0])], float)
    return c * k.reshape((-1,) + (1,) * (c.ndim - 1))


def stencil_weights(nodes: np.ndarray, max_order: int) -> np.ndarray:
    """Weights ``W[q, j]`` with ``f^(q)(0) ~ sum_j W[q, j] f(nodes[j])``.

    Uses the full polynomial interpolant through all nodes.  Positions are
    rescaled before the Vandermonde solve to keep it well conditioned.
    """
    nodes = np.asarray(nodes, float)
    P = nodes.size
    if max_order >= P:
        raise ValueError(f"{P} nodes cannot give derivative order {max_order}")
    scale = float(np.max(np.abs(nodes))) or 1.0
    z = nodes / scale
    V = np.vander(z, P, increasing=True).T  # V[m, j] = z_j^m
    rhs = np.zeros((P, max_order + 1))
    for q in range(max_order + 1):
        rhs[q, q] = factorial(q)
    W = np.linalg.solve(V, rhs).T
    return W / scale ** np.arange(max_order + 1)[:, None]
