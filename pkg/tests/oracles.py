"""Reference implementations that share no code with the package.

Propagation uses scipy's scaling-and-squaring ``expm`` instead of an
eigendecomposition; sums are explicit loops; small cases are solved by hand.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm


def expm_amplitude(A, t: float, i: int, j: int) -> complex:
    return complex(expm(-1j * np.asarray(A, dtype=float) * t)[j, i])


def expm_fidelity(A, t: float, i: int, j: int) -> float:
    return abs(expm_amplitude(A, t, i, j)) ** 2


def lambda_matrix(legs1, legsN) -> np.ndarray:
    """Explicit Lambda adjacency, node order source, bulk..., target."""
    m = len(legs1)
    A = np.zeros((m + 2, m + 2))
    for j in range(m):
        A[0, j + 1] = A[j + 1, 0] = legs1[j]
        A[m + 1, j + 1] = A[j + 1, m + 1] = legsN[j]
    return A


def lambda_scalars(legs1, legsN) -> tuple[float, float, float]:
    """``(S2, Delta4, delta2)`` by explicit loops."""
    m = len(legs1)
    S2 = sum(0.5 * (legs1[j] ** 2 + legsN[j] ** 2) for j in range(m))
    D4 = 0.0
    for j in range(m):
        for k in range(j + 1, m):
            D4 += (legs1[j] * legsN[k] - legsN[j] * legs1[k]) ** 2
    d2 = sum(legs1[j] * legsN[j] for j in range(m))
    return S2, D4, d2


def three_chain_peak(g1: float, g2: float) -> float:
    """Maximum transfer probability along a 3-spin chain with couplings g1, g2."""
    return (2.0 * g1 * g2 / (g1**2 + g2**2)) ** 2


def piecewise_fidelity(A, segments, flip_node: int, t_end: float, i: int, j: int) -> float:
    """Fidelity at ``t_end`` of a sign-flip schedule, one ``expm`` per segment."""
    A = np.asarray(A, dtype=float)
    D = np.eye(len(A))
    D[flip_node, flip_node] = -1.0
    U = np.eye(len(A), dtype=complex)
    t = 0.0
    for dt, flipped in segments:
        step = min(dt, t_end - t)
        if step <= 0:
            break
        H = D @ A @ D if flipped else A
        U = expm(-1j * H * step) @ U
        t += step
    return abs(U[j, i]) ** 2


def end_splitting_3node(a: float, E: float, eps: float, beta: float) -> float:
    """Exact effective end-end coupling of source-bulk-target with bulk energy beta*E.

    With equal legs ``eps*a`` the symmetric end combination couples to the
    bulk node and the antisymmetric one stays at zero; the level repulsion
    of the symmetric state is ``2 J``. Returns ``J`` (sign included).
    """
    b = beta * E
    c = eps * a
    lam = 0.5 * (b - math.copysign(math.sqrt(b * b + 8 * c * c), b))
    return lam / 2.0


def mc_uniform_norm(n: int, seeds) -> float:
    vals = []
    for s in seeds:
        rng = np.random.Generator(np.random.PCG64(s))
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                total += 2.0 * rng.random() ** 2
        vals.append(math.sqrt(total))
    return sum(vals) / len(vals)
