"""Exact single-excitation dynamics.

In the one-excitation sector the XY Hamiltonian acts as the coupling
matrix itself, so every propagator here is ``exp(-i A t)`` evaluated
through one symmetric eigendecomposition and reused for all times.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NetworkIOError, ValidationError

# Rows of the time grid evaluated per block; bounds memory at ~n * 2**15 complex.
_CHUNK = 1 << 15


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T

    def propagator(self, t: float) -> np.ndarray:
        V = self.eigenvectors
        return (V * np.exp(-1j * self.eigenvalues * t)) @ V.T

    def amplitudes(self, times, i: int, j: int) -> np.ndarray:
        """``<j| exp(-i A t) |i>`` for every entry of ``times``."""
        V = self.eigenvectors
        weights = V[j, :] * V[i, :]
        return _phase_sum(self.eigenvalues, weights, np.asarray(times, dtype=float))

    def state_amplitudes(self, times, psi0: np.ndarray, j: int) -> np.ndarray:
        """``<j| exp(-i A t) |psi0>`` for an arbitrary initial vector."""
        V = self.eigenvectors
        weights = V[j, :] * (V.T @ psi0)
        return _phase_sum(self.eigenvalues, weights, np.asarray(times, dtype=float))


def _phase_sum(energies, weights, times) -> np.ndarray:
    flat = times.ravel()
    out = np.empty(flat.shape, dtype=complex)
    for start in range(0, len(flat), _CHUNK):
        block = flat[start : start + _CHUNK]
        out[start : start + _CHUNK] = np.exp(-1j * np.outer(block, energies)) @ weights
    return out.reshape(times.shape)


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    return A


def eig_sym(A, tol: float = 1e-10) -> SpectralData:
    """Spectral decomposition of a real symmetric matrix.

    Eigenvalues ascend; each eigenvector is signed so that its
    largest-magnitude component (first one on ties) is positive.
    """
    A = _as_matrix(A)
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > tol * scale:
        raise ValidationError("matrix is not symmetric")
    E, V = np.linalg.eigh((A + A.T) / 2.0)
    if V.size:
        pivot = np.argmax(np.abs(V) - 1e-12 * np.arange(V.shape[0])[:, None], axis=0)
        signs = np.sign(V[pivot, np.arange(V.shape[1])])
        signs[signs == 0] = 1.0
        V = V * signs
    E.setflags(write=False)
    V.setflags(write=False)
    return SpectralData(E, V)


def _spectral(A) -> SpectralData:
    return A if isinstance(A, SpectralData) else eig_sym(A)


def _check_nodes(n: int, *nodes: int) -> None:
    for k in nodes:
        if not 0 <= k < n:
            raise ValidationError(f"node index {k} out of range for n={n}")


def fidelity(A, t, i: int, j: int):
    """Transfer probability ``|<j| exp(-i A t) |i>|**2``; ``t`` may be an array."""
    sd = _spectral(A)
    _check_nodes(sd.n, i, j)
    amp = sd.amplitudes(np.asarray(t, dtype=float), i, j)
    F = np.clip(np.abs(amp) ** 2, 0.0, 1.0)
    return float(F) if F.ndim == 0 else F


@dataclass(frozen=True, eq=False)
class FidelityTrace:
    times: np.ndarray
    values: np.ndarray
    peak: tuple[float, float]

    def first_crossing(self, threshold: float) -> Optional[float]:
        """Earliest time at which the fidelity reaches ``threshold``.

        Linear interpolation between the bracketing samples; ``None`` if the
        threshold is never reached on the grid.
        """
        above = np.flatnonzero(self.values >= threshold)
        if len(above) == 0:
            return None
        k = int(above[0])
        if k == 0:
            return float(self.times[0])
        t0, t1 = self.times[k - 1], self.times[k]
        f0, f1 = self.values[k - 1], self.values[k]
        return float(t0 + (threshold - f0) * (t1 - t0) / (f1 - f0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "fidelity"])
        for t, f in zip(self.times, self.values):
            w.writerow([f"{t:.15g}", f"{f:.15g}"])
        buf.write(f"# peak,{self.peak[0]:.15g},{self.peak[1]:.15g}\n")
        return buf.getvalue()

    def save_csv(self, path) -> None:
        try:
            with open(path, "w") as fh:
                fh.write(self.to_csv())
        except OSError as exc:
            raise NetworkIOError(str(exc)) from exc


def read_trace_csv(path) -> FidelityTrace:
    times, values, peak = [], [], None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# peak"):
                _, t, f = line.strip().split(",")
                peak = (float(t), float(f))
            elif line[0].isdigit() or line[0] in "-.":
                t, f = line.strip().split(",")
                times.append(float(t))
                values.append(float(f))
    times, values = np.array(times), np.array(values)
    if peak is None:
        k = int(np.argmax(values))
        peak = (times[k], values[k])
    return FidelityTrace(times, values, peak)


def locate_peak(times, values, evaluate: Optional[Callable[[float], float]] = None):
    """Grid maximum refined by a parabola through it and its two neighbours.

    With ``evaluate`` the fidelity is recomputed exactly at the refined time
    and kept only if it beats the grid value; without it the parabola vertex
    value is used, capped at 1.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    k = int(np.argmax(values))
    t_best, f_best = float(times[k]), float(values[k])
    if 0 < k < len(values) - 1:
        t0, t1, t2 = times[k - 1 : k + 2]
        f0, f1, f2 = values[k - 1 : k + 2]
        denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
        a = (t2 * (f1 - f0) + t1 * (f0 - f2) + t0 * (f2 - f1)) / denom
        b = (t2**2 * (f0 - f1) + t1**2 * (f2 - f0) + t0**2 * (f1 - f2)) / denom
        if a < 0:
            tv = -b / (2 * a)
            if t0 <= tv <= t2:
                if evaluate is not None:
                    fv = float(evaluate(tv))
                else:
                    c = f1 - a * t1**2 - b * t1
                    fv = float(min(1.0, a * tv**2 + b * tv + c))
                if fv > f_best:
                    t_best, f_best = float(tv), fv
    return t_best, f_best


def default_samples(A, t_max: float, per_period: int = 20) -> int:
    """Grid size giving ``per_period`` samples per shortest oscillation period."""
    sd = _spectral(A)
    spread = float(sd.eigenvalues[-1] - sd.eigenvalues[0]) if sd.n else 0.0
    return max(2, int(math.ceil(per_period * t_max * spread / (2 * math.pi))) + 1)


def fidelity_trace(A, i: int, j: int, t_max: float, samples: Optional[int] = None) -> FidelityTrace:
    """Fidelity on a uniform grid over ``[0, t_max]`` from one eigendecomposition."""
    if not t_max > 0:
        raise ValidationError("t_max must be positive")
    sd = _spectral(A)
    _check_nodes(sd.n, i, j)
    if samples is None:
        samples = default_samples(sd, t_max)
    if samples < 2:
        raise ValidationError("need at least two samples")
    times = np.linspace(0.0, t_max, int(samples))
    values = np.clip(np.abs(sd.amplitudes(times, i, j)) ** 2, 0.0, 1.0)
    peak = locate_peak(times, values, lambda t: abs(sd.amplitudes(np.array(t), i, j)) ** 2)
    return FidelityTrace(times, values, peak)


def fidelity_spectral_terms(A, i: int, j: int, merge_tol: float = 1e-9, cutoff: float = 0.0):
    """Decompose ``F(t) = sum_n w_n cos(f_n t)`` over eigenvalue differences.

    Each pair ``(k, l)`` contributes ``w = <l|j><j|k><k|i><i|l>`` at
    ``f = E_k - E_l``. Terms whose frequencies agree within
    ``merge_tol * (1 + spread)`` are summed, so the result does not depend
    on how degenerate eigenvectors were chosen. Returns ``(weight,
    frequency)`` pairs sorted by frequency, dropping ``|weight| <= cutoff``.
    """
    sd = _spectral(A)
    _check_nodes(sd.n, i, j)
    V, E = sd.eigenvectors, sd.eigenvalues
    a = V[j, :] * V[i, :]
    w = np.outer(a, a).ravel()
    f = (E[:, None] - E[None, :]).ravel()
    order = np.argsort(f, kind="stable")
    f, w = f[order], w[order]
    tol = merge_tol * (1.0 + float(E[-1] - E[0]))
    terms = []
    start = 0
    for k in range(1, len(f) + 1):
        if k == len(f) or f[k] - f[k - 1] > tol:
            group_w = float(np.sum(w[start:k]))
            group_f = float(np.average(f[start:k]))
            terms.append((group_w, group_f))
            start = k
    return [(wt, fr) for wt, fr in terms if abs(wt) > cutoff]


def evaluate_terms(terms, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return sum(w * np.cos(f * t) for w, f in terms)
