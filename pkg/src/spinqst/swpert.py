"""Off-resonance reduction: end spins detuned from every bulk mode.

A Schrieffer-Wolff generator removes the end-bulk coupling to first order in
``epsilon / beta``; what is left between the two ends is a 2x2 problem with
effective coupling ``as1N`` and detuning ``alpha``.

All returned frequencies are physical (the same units as the network
couplings). The end block is ``epsilon * A^e_end_diag - (epsilon**2 / beta)
* sum_k A^e_{zeta k} A^e_{k xi} / E_k``, i.e. ``(epsilon / 2) [S, A^e]`` with
``S`` normalized as ``[A^B, S] = (epsilon / beta) A^e``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import SpectralData, eig_sym
from .errors import DegeneracyError, DegeneracyWarning, NoTransportWarning, ResonanceError
from .netgen import PartitionedNetwork

TOL_RES = 1e-6
TOL_GAP = 1e-8


@dataclass(frozen=True, eq=False)
class EffectiveEndModel:
    as11: float
    asNN: float
    as1N: float
    bulk_block: np.ndarray
    gamma: float

    @property
    def alpha(self) -> float:
        return (self.as11 - self.asNN) / 2.0

    @property
    def tm(self) -> float:
        return math.inf if self.as1N == 0 else math.pi / (2.0 * abs(self.as1N))

    def record(self) -> dict:
        w1, wN = compensating_shifts(self)
        return {
            "as11": self.as11,
            "asNN": self.asNN,
            "as1N": self.as1N,
            "alpha": self.alpha,
            "tm": self.tm,
            "shifts": [w1, wN],
            "gamma": self.gamma,
        }


def _bulk_norm(p: PartitionedNetwork) -> float:
    return float(np.linalg.norm(p.bulk)) or 1.0


def bulk_eigenbasis(p: PartitionedNetwork, tol_gap: float = TOL_GAP, strict: bool = False) -> SpectralData:
    """Eigenbasis of the embedded bulk block with the ends pinned at zero.

    Columns are ordered ``[source, target, bulk modes ascending]``; the two
    end columns are the node unit vectors. Near-degenerate bulk eigenvalues
    trigger a ``DegeneracyWarning`` (or ``DegeneracyError`` when ``strict``).
    """
    sd = eig_sym(p.bulk)
    E = sd.eigenvalues
    if len(E) > 1:
        gaps = np.diff(E)
        if np.any(gaps < tol_gap * _bulk_norm(p)):
            msg = f"bulk spectrum has near-degenerate eigenvalues (min gap {gaps.min():.3g})"
            if strict:
                raise DegeneracyError(msg)
            warnings.warn(msg, DegeneracyWarning, stacklevel=2)
    n = p.n
    s, t = p.ends
    idx = np.asarray(p.bulk_index)
    V = np.zeros((n, n))
    V[s, 0] = 1.0
    V[t, 1] = 1.0
    V[np.ix_(idx, np.arange(2, n))] = sd.eigenvectors
    return SpectralData(np.concatenate([[0.0, 0.0], E]), V)


def _end_bulk_overlaps(p: PartitionedNetwork, basis: SpectralData) -> np.ndarray:
    """Rows ``<source|A^e|v_k>`` and ``<target|A^e|v_k>`` for the bulk modes."""
    s, t = p.ends
    Vb = basis.eigenvectors[:, 2:]
    return np.vstack([p.end_coupling[s] @ Vb, p.end_coupling[t] @ Vb])


def _check_resonance(p: PartitionedNetwork, E: np.ndarray, X: np.ndarray, tol_res: float) -> None:
    scale = _bulk_norm(p)
    coupled = np.any(np.abs(X) > 1e-14, axis=0)
    hit = coupled & (np.abs(E) < tol_res * scale)
    if np.any(hit):
        raise ResonanceError(
            f"end spins resonant with bulk mode(s) {np.flatnonzero(hit).tolist()}: "
            "off-resonance treatment invalid, use the on-resonance (lambda) reduction"
        )


def build_generator_S(p: PartitionedNetwork, tol_res: float = TOL_RES) -> np.ndarray:
    """Antisymmetric generator solving ``[A^B, S] = (epsilon/beta) A^e`` off the end diagonal.

    Returned in the original node basis. The end-diagonal part of ``A^e``
    commutes with nothing in the end subspace and stays first order.
    """
    basis = bulk_eigenbasis(p)
    E = basis.eigenvalues[2:]
    X = _end_bulk_overlaps(p, basis)
    _check_resonance(p, E, X, tol_res)
    n = p.n
    ratio = p.epsilon / p.beta
    S_eig = np.zeros((n, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        block = np.where(X != 0.0, -ratio * X / E, 0.0)
    S_eig[0:2, 2:] = block
    S_eig[2:, 0:2] = -block.T
    V = basis.eigenvectors
    S = V @ S_eig @ V.T
    residual = generator_residual(p, S)
    scale = max(1.0, ratio)
    if residual > 1e-10 * scale:
        raise ResonanceError(f"generator residual {residual:.3g} too large; spectrum ill-conditioned")
    return S


def generator_residual(p: PartitionedNetwork, S: np.ndarray) -> float:
    """Frobenius norm of ``[A^B, S] - (epsilon/beta) A^e`` without the end diagonals."""
    B = p.embedded_bulk()
    target = (p.epsilon / p.beta) * np.array(p.end_coupling)
    for e in p.ends:
        target[e, e] = 0.0
    return float(np.linalg.norm(B @ S - S @ B - target))


def effective_AS(p: PartitionedNetwork, tol_res: float = TOL_RES) -> EffectiveEndModel:
    """Second-order effective model of the two ends (plus the bulk correction).

    The bulk block is returned in the bulk node basis (ordered as
    ``p.bulk_index``).
    """
    basis = bulk_eigenbasis(p)
    E = basis.eigenvalues[2:]
    X = _end_bulk_overlaps(p, basis)
    _check_resonance(p, E, X, tol_res)
    eps, beta = p.epsilon, p.beta
    Xs = np.where(np.abs(X) > 0.0, X, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        Y = np.where(Xs != 0.0, Xs / E, 0.0)
    end_block = -(eps**2 / beta) * (Xs @ Y.T)
    s, t = p.ends
    end_block[0, 0] += eps * p.end_coupling[s, s]
    end_block[1, 1] += eps * p.end_coupling[t, t]

    with np.errstate(divide="ignore"):
        invE = np.where(E != 0.0, 1.0 / np.where(E != 0.0, E, 1.0), 0.0)
    pair = Xs.T @ Xs
    bulk_eig = (eps**2 / (2.0 * beta)) * pair * (invE[:, None] + invE[None, :])
    Vb = eig_sym(p.bulk).eigenvectors
    bulk_block = Vb @ bulk_eig @ Vb.T

    as1N = float(end_block[0, 1])
    if as1N == 0.0:
        warnings.warn("effective end-end coupling vanishes: no transport", NoTransportWarning, stacklevel=2)
    return EffectiveEndModel(
        as11=float(end_block[0, 0]),
        asNN=float(end_block[1, 1]),
        as1N=as1N,
        bulk_block=bulk_block,
        gamma=p.gamma,
    )


def offres_fidelity(model: EffectiveEndModel, t):
    """Two-level transfer probability with coupling ``as1N`` and detuning ``alpha``."""
    J2 = model.as1N**2
    omega2 = J2 + model.alpha**2
    t = np.asarray(t, dtype=float)
    if omega2 == 0.0:
        F = np.zeros_like(t)
    else:
        F = J2 / omega2 * np.sin(t * math.sqrt(omega2)) ** 2
    return float(F) if F.ndim == 0 else F


def compensating_shifts(model: EffectiveEndModel) -> tuple[float, float]:
    """End shifts ``(w1, wN)`` that cancel ``alpha``; the smaller diagonal is raised."""
    diff = model.as11 - model.asNN
    if diff >= 0:
        return (0.0, diff)
    return (-diff, 0.0)


def predicted_offres_time(p: PartitionedNetwork) -> float:
    """Single-mode estimate of the off-resonance transfer time.

    Uses only the bulk mode of smallest ``|E|``:
    ``pi beta E / (2 epsilon**2 <1|A^e|v> <N|A^e|v>)``. The multi-mode value
    ``effective_AS(p).tm`` is the better number; this is an order-of-magnitude
    guide.
    """
    basis = bulk_eigenbasis(p)
    E = basis.eigenvalues[2:]
    X = _end_bulk_overlaps(p, basis)
    ell = int(np.argmin(np.abs(E)))
    prod = X[0, ell] * X[1, ell]
    if prod == 0.0:
        return math.inf
    return abs(math.pi * p.beta * E[ell] / (2.0 * p.epsilon**2 * prod))
