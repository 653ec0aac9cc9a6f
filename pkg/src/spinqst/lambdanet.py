"""On-resonance reduction to a Lambda network and its closed-form transport.

With both ends tuned to a bulk mode ``v_d`` the dynamics is generated by
the projection of the end coupling onto that mode. In the node basis this is
a Lambda network: each bulk node ``j`` is a two-leg path with couplings
``legs1[j]`` (to the source) and ``legsN[j]`` (to the target). Three scalars
fix its transport:

    S2     = sum_j (legs1_j**2 + legsN_j**2) / 2
    Delta4 = sum_{j<k} (legs1_j legsN_k - legsN_j legs1_k)**2
    delta2 = sum_j legs1_j legsN_j

Legs are physical frequencies (``epsilon`` times the normalized overlaps).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .dynamics import eig_sym, fidelity, fidelity_spectral_terms, evaluate_terms
from .errors import (
    DegenerateWeightsError,
    IndeterminateFormError,
    NoResonanceError,
    ValidationError,
)
from .netgen import PartitionedNetwork, SpinNetwork
from .swpert import TOL_GAP, TOL_RES

# Relative size of S^4 - Delta^4 below which the closed form is 0/0.
TOL_INDETERMINATE = 1e-12


@dataclass(frozen=True, eq=False)
class ResonantMode:
    """A bulk mode chosen for resonance.

    ``energy`` and ``gap`` are in normalized bulk units; ``shift`` is the
    physical end on-site energy (``beta * energy``) that puts the ends on
    resonance. ``group`` lists the bulk modes within the degeneracy
    tolerance of the chosen one (itself included).
    """

    index: int
    energy: float
    vector: np.ndarray
    gap: float
    shift: float
    group: tuple[int, ...]

    @property
    def degenerate(self) -> bool:
        return len(self.group) > 1


def select_resonant_mode(
    p: PartitionedNetwork,
    strategy: Union[str, int] = "highest",
    tol_gap: float = TOL_GAP,
    tol_zero: float = TOL_RES,
) -> ResonantMode:
    """Pick the resonant bulk mode: ``"highest"``, ``"zero"`` or an ascending index."""
    sd = eig_sym(p.bulk)
    E = sd.eigenvalues
    m = len(E)
    scale = float(np.linalg.norm(p.bulk)) or 1.0
    if strategy == "highest":
        d = m - 1
    elif strategy == "zero":
        d = int(np.argmin(np.abs(E)))
        if abs(E[d]) >= tol_zero * scale:
            raise NoResonanceError(f"no zero bulk mode (closest eigenvalue {E[d]:.3g})")
    else:
        try:
            d = int(strategy)
        except (TypeError, ValueError):
            raise ValidationError(f"unknown mode strategy {strategy!r}") from None
        if not 0 <= d < m:
            raise NoResonanceError(f"mode index {d} out of range for {m} bulk modes")
    others = np.delete(E, d)
    gap = float(np.min(np.abs(others - E[d]))) if len(others) else math.inf
    group = tuple(int(k) for k in np.flatnonzero(np.abs(E - E[d]) < tol_gap * scale))
    return ResonantMode(
        index=d,
        energy=float(E[d]),
        vector=sd.eigenvectors[:, d].copy(),
        gap=gap,
        shift=float(p.beta * E[d]),
        group=group,
    )


@dataclass(frozen=True, eq=False)
class LambdaModel:
    legs1: np.ndarray
    legsN: np.ndarray
    overlaps: tuple[float, float] = (math.nan, math.nan)
    modes: tuple[int, ...] = ()
    epsilon: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.legs1, dtype=float).ravel()
        b = np.asarray(self.legsN, dtype=float).ravel()
        if a.shape != b.shape or a.size == 0:
            raise ValidationError("legs must be non-empty vectors of equal length")
        object.__setattr__(self, "legs1", a)
        object.__setattr__(self, "legsN", b)

    @property
    def size(self) -> int:
        return len(self.legs1)

    @cached_property
    def S2(self) -> float:
        return 0.5 * float(np.sum(self.legs1**2 + self.legsN**2))

    @cached_property
    def Delta4(self) -> float:
        a, b = self.legs1, self.legsN
        cross = np.outer(a, b) - np.outer(b, a)
        return float(np.sum(np.triu(cross, 1) ** 2))

    @cached_property
    def delta2(self) -> float:
        return float(np.dot(self.legs1, self.legsN))

    @property
    def S(self) -> float:
        return math.sqrt(self.S2)

    def adjacency(self) -> np.ndarray:
        """Explicit matrix, node order ``[source, bulk..., target]``."""
        m = self.size
        A = np.zeros((m + 2, m + 2))
        A[0, 1 : m + 1] = A[1 : m + 1, 0] = self.legs1
        A[m + 1, 1 : m + 1] = A[1 : m + 1, m + 1] = self.legsN
        return A

    def to_network(self) -> SpinNetwork:
        return SpinNetwork(self.adjacency(), (0, self.size + 1), meta={"builder": "lambda"})


def build_lambda(p: PartitionedNetwork, mode: ResonantMode) -> LambdaModel:
    """Lambda network for a single resonant mode.

    Degenerate modes are routed to :func:`build_lambda_degenerate`.
    """
    if mode.degenerate:
        return build_lambda_degenerate(p, mode.group)
    s, t = p.ends
    idx = np.asarray(p.bulk_index)
    v = mode.vector
    O1 = float(p.end_coupling[s, idx] @ v)
    ON = float(p.end_coupling[t, idx] @ v)
    eps = p.epsilon
    return LambdaModel(eps * O1 * v, eps * ON * v, overlaps=(O1, ON), modes=(mode.index,), epsilon=eps)


def build_lambda_degenerate(p: PartitionedNetwork, modes) -> LambdaModel:
    """Lambda network from the projector onto a (degenerate) set of bulk modes.

    Legs are ``<n_end| P_M |j>`` with ``n_end = A^e |end>`` restricted to the
    bulk. ``overlaps`` holds ``|P_M n_1|`` and ``|P_M n_N|`` (signed overlaps
    when a single mode is given).
    """
    modes = tuple(int(k) for k in modes)
    if not modes:
        raise ValidationError("resonant subspace is empty")
    V = eig_sym(p.bulk).eigenvectors[:, list(modes)]
    P = V @ V.T
    s, t = p.ends
    idx = np.asarray(p.bulk_index)
    n1 = p.end_coupling[s, idx]
    nN = p.end_coupling[t, idx]
    eps = p.epsilon
    if len(modes) == 1:
        overlaps = (float(n1 @ V[:, 0]), float(nN @ V[:, 0]))
    else:
        overlaps = (float(np.linalg.norm(P @ n1)), float(np.linalg.norm(P @ nN)))
    return LambdaModel(eps * (P @ n1), eps * (P @ nN), overlaps=overlaps, modes=modes, epsilon=eps)


def resonance_shifts(p: PartitionedNetwork, mode: ResonantMode, dispersive: bool = True) -> tuple[float, float]:
    """End on-site energies ``(w1, wN)`` that put both ends on resonance with ``mode``.

    The bare value is ``beta * E_d`` for both ends. With ``dispersive`` each
    end also absorbs its second-order shift from the remaining bulk modes,
    ``(epsilon**2 / beta) sum_{k not in d} X_k**2 / (E_d - E_k)``, which
    otherwise detunes the two ends from each other.
    """
    w = [mode.shift, mode.shift]
    if not dispersive or p.beta == 0.0:
        return w[0], w[1]
    sd = eig_sym(p.bulk)
    E = sd.eigenvalues
    s, t = p.ends
    idx = np.asarray(p.bulk_index)
    mask = np.ones(len(E), dtype=bool)
    mask[list(mode.group)] = False
    if not np.any(mask):
        return w[0], w[1]
    Vk = sd.eigenvectors[:, mask]
    gaps = mode.energy - E[mask]
    scale = p.epsilon**2 / p.beta
    for i, end in enumerate((s, t)):
        X = p.end_coupling[end, idx] @ Vk
        w[i] -= scale * float(np.sum(X**2 / gaps))
    return w[0], w[1]


def projector(p: PartitionedNetwork, modes) -> np.ndarray:
    V = eig_sym(p.bulk).eigenvectors[:, list(modes)]
    return V @ V.T


def lambda_eigenvalues(m: LambdaModel) -> np.ndarray:
    """Non-zero eigenvalues ``-l3, -l1, l1, l3`` (the rest of the spectrum is 0)."""
    root = math.sqrt(max(m.S2**2 - m.Delta4, 0.0))
    l1 = math.sqrt(max(m.S2 - root, 0.0))
    l3 = math.sqrt(m.S2 + root)
    return np.array([-l3, -l1, l1, l3])


def lambda_frequencies(m: LambdaModel) -> tuple[float, float, float, float]:
    """The four transport frequencies ``(f1, f2, f3, f4)``."""
    S4, D4 = m.S2**2, m.Delta4
    if S4 < D4 * (1 - 1e-12) - 1e-300:
        raise ArithmeticError(f"S^4 < Delta^4 ({S4} < {D4}); violates Cauchy-Schwarz")
    root = math.sqrt(max(S4 - D4, 0.0))
    D2 = math.sqrt(D4)
    f1 = 2.0 * math.sqrt(max(m.S2 - root, 0.0))
    f2 = 2.0 * math.sqrt(m.S2 + root)
    f3 = math.sqrt(max(2.0 * (m.S2 - D2), 0.0))
    f4 = math.sqrt(2.0 * (m.S2 + D2))
    return f1, f2, f3, f4


def _denominator(m: LambdaModel) -> float:
    return m.S2**2 - m.Delta4


def _is_indeterminate(m: LambdaModel) -> bool:
    return _denominator(m) <= TOL_INDETERMINATE * m.S2**2


def lambda_fidelity(m: LambdaModel, t):
    """Closed-form source-to-target fidelity of the Lambda network.

    On the destructive-interference boundary ``S^4 = Delta^4`` the closed
    form is 0/0 and the spectral-term evaluation of the explicit matrix is
    returned instead (with a warning).
    """
    t = np.asarray(t, dtype=float)
    if _is_indeterminate(m):
        warnings.warn(
            "S^4 - Delta^4 vanishes (destructive interference); using exact spectral evaluation",
            RuntimeWarning,
            stacklevel=2,
        )
        F = np.clip(evaluate_terms(fidelity_spectral_terms(m.adjacency(), 0, m.size + 1), t), 0.0, 1.0)
    else:
        D2 = math.sqrt(m.Delta4)
        a = math.sqrt((m.S2 + D2) / 2.0)
        b = math.sqrt(max(m.S2 - D2, 0.0) / 2.0)
        F = m.delta2**2 / _denominator(m) * (np.sin(a * t) * np.sin(b * t)) ** 2
    return float(F) if F.ndim == 0 else F


def lambda_closed_fidelity(m: LambdaModel, t):
    """Closed form only; raises ``IndeterminateFormError`` at the 0/0 boundary."""
    if _is_indeterminate(m):
        raise IndeterminateFormError(
            "S^4 - Delta^4 ~ 0: paths interfere destructively (delta^2 = 0); "
            "evaluate the explicit network with dynamics.fidelity instead"
        )
    return lambda_fidelity(m, t)


def transfer_time(m: LambdaModel) -> float:
    """Time of the first maximum, ``pi / (sqrt(2) S)``, exact when ``Delta = 0``."""
    return math.pi / (math.sqrt(2.0) * m.S)


@dataclass(frozen=True)
class LambdaMoments:
    """Taylor coefficients of ``F(t)`` at ``t**4``, ``t**6``, ``t**8``."""

    C4: float
    C6: float
    C8: float


def _end_moments(m: LambdaModel) -> tuple[float, float, float]:
    """``<N|A^2|1>``, ``<N|A^4|1>``, ``<N|A^6|1>`` by explicit matrix powers."""
    A = m.adjacency()
    last = m.size + 1
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    return float(A2[last, 0]), float(A4[last, 0]), float(A6[last, 0])


def lambda_moments(m: LambdaModel) -> LambdaMoments:
    """Low-order Taylor coefficients of the fidelity from matrix elements.

    The amplitude is real and even in ``t`` for a Lambda network:
    ``a(t) = -t^2/2! m2 + t^4/4! m4 - t^6/6! m6 + ...`` with
    ``m_k = <N|A^k|1>``, hence ``C4 = m2^2/4``, ``C6 = -m2 m4/24`` and
    ``C8 = m4^2/576 + m2 m6/720``.
    """
    m2, m4, m6 = _end_moments(m)
    return LambdaMoments(
        C4=m2**2 / 4.0,
        C6=-m2 * m4 / 24.0,
        C8=m4**2 / 576.0 + m2 * m6 / 720.0,
    )


def closed_moments(m: LambdaModel) -> LambdaMoments:
    """``C4``, ``C6``, ``C8`` in terms of ``S``, ``Delta`` and ``delta``."""
    d4 = m.delta2**2
    return LambdaMoments(
        C4=d4 / 4.0,
        C6=-m.S2 * d4 / 12.0,
        C8=d4 * (9.0 * m.S2**2 - m.Delta4) / 720.0,
    )


def c8_diagnostic(m: LambdaModel) -> dict:
    """Compare the eighth-order coefficient against its printed variants.

    ``series`` is the matrix-element value (taken as correct),
    ``printed_closed`` is ``delta^2 (9 S^4 - Delta^2) / 720`` and
    ``printed_moment`` is ``m4^2/4! + m2 m6/(2*6!)``; ``corrected_closed``
    is ``delta^4 (9 S^4 - Delta^4) / 720``.
    """
    m2, m4, m6 = _end_moments(m)
    series = lambda_moments(m).C8
    printed_closed = m.delta2 * (9.0 * m.S2**2 - math.sqrt(m.Delta4)) / 720.0
    printed_moment = m4**2 / 24.0 + m2 * m6 / 1440.0
    corrected = closed_moments(m).C8

    def rel(x):
        return abs(x - series) / abs(series) if series else abs(x)

    return {
        "series": series,
        "corrected_closed": corrected,
        "printed_closed": printed_closed,
        "printed_moment": printed_moment,
        "rel_err_corrected_closed": rel(corrected),
        "rel_err_printed_closed": rel(printed_closed),
        "rel_err_printed_moment": rel(printed_moment),
    }


@dataclass(frozen=True)
class LambdaWeights:
    """Weights ``(w0..w4)`` of ``F = w0 + sum_i w_i cos(f_i t)``.

    ``general`` is the moment-matching solution; it is ``None`` when two
    frequencies coincide and the moment system is singular.
    """

    closed: tuple[float, ...]
    general: Optional[tuple[float, ...]]


def _frequencies_distinct(f, rel: float = 1e-8) -> bool:
    x = np.array(f) ** 2
    scale = max(float(x.max()), 1e-300)
    if np.any(x < rel * scale):
        return False
    diffs = np.abs(x[:, None] - x[None, :]) + np.eye(4) * scale
    return bool(np.all(diffs > rel * scale))


def moment_weights(f, moments: LambdaMoments) -> tuple[float, ...]:
    """Solve the moment-matching conditions for ``w1..w4`` and ``w0 = -sum``.

    With ``x_i = f_i^2`` the even Taylor coefficients require
    ``sum w_i x_i = 0``, ``sum w_i x_i^2 = 4! C4``, ``sum w_i x_i^3 = -6! C6``,
    ``sum w_i x_i^4 = 8! C8``. Inverting the Vandermonde system in ``x``:

        w_j = (c8 - e1 c6 + e2 c4) / (x_j prod_{k != j}(x_j - x_k))

    with ``e1``, ``e2`` the elementary symmetric sums of the other three
    ``x_k``.
    """
    x = np.array(f, dtype=float) ** 2
    c4 = 24.0 * moments.C4
    c6 = -720.0 * moments.C6
    c8 = 40320.0 * moments.C8
    w = []
    for j in range(4):
        rest = np.delete(x, j)
        e1 = rest.sum()
        e2 = rest[0] * rest[1] + rest[0] * rest[2] + rest[1] * rest[2]
        denom = x[j] * np.prod(x[j] - rest)
        w.append((c8 - e1 * c6 + e2 * c4) / denom)
    return (-float(sum(w)), *(float(v) for v in w))


def lambda_weights(m: LambdaModel, require_general: bool = False) -> LambdaWeights:
    """Closed-form weights, cross-checked by moment matching when possible."""
    denom = _denominator(m)
    if _is_indeterminate(m):
        raise IndeterminateFormError("S^4 - Delta^4 ~ 0; weights undefined")
    w0 = m.delta2**2 / (4.0 * denom)
    closed = (w0, w0 / 2.0, w0 / 2.0, -w0, -w0)
    f = lambda_frequencies(m)
    if not _frequencies_distinct(f):
        if require_general:
            raise DegenerateWeightsError(
                "transport frequencies coincide; use dynamics.fidelity_spectral_terms"
            )
        return LambdaWeights(closed, None)
    return LambdaWeights(closed, moment_weights(f, lambda_moments(m)))


@dataclass(frozen=True)
class PerfectTransferReport:
    Delta: float
    imbalance: float
    second_moment_mismatch: float
    identity_residual: float
    predicted_peak: float

    @property
    def perfect(self) -> bool:
        return abs(self.Delta) < 1e-9 and abs(self.imbalance) < 1e-9


def check_perfect_conditions(m: LambdaModel) -> PerfectTransferReport:
    """Residuals of the perfect-transfer conditions ``Delta = 0`` and ``delta = S``.

    ``identity_residual`` is ``S^4 - Delta^4 - delta^4 - (sum(legs1^2 - legsN^2))^2 / 4``,
    which vanishes for every leg vector.
    """
    mismatch = float(np.sum(m.legs1**2) - np.sum(m.legsN**2))
    d4 = m.delta2**2
    denom = _denominator(m)
    peak = d4 / denom if denom > TOL_INDETERMINATE * m.S2**2 else 0.0
    return PerfectTransferReport(
        Delta=m.Delta4**0.25,
        imbalance=m.S - math.sqrt(abs(m.delta2)),
        second_moment_mismatch=mismatch,
        identity_residual=m.S2**2 - m.Delta4 - d4 - mismatch**2 / 4.0,
        predicted_peak=peak,
    )


def exact_lambda_fidelity(m: LambdaModel, t):
    """Reference: exact propagation of the explicit Lambda matrix."""
    return fidelity(m.adjacency(), t, 0, m.size + 1)


def analysis_record(m: LambdaModel, mode: Optional[ResonantMode] = None) -> dict:
    report = check_perfect_conditions(m)
    rec = {
        "mode": list(m.modes) if len(m.modes) != 1 else m.modes[0],
        "gap": None if mode is None else mode.gap,
        "O1": m.overlaps[0],
        "ON": m.overlaps[1],
        "S2": m.S2,
        "Delta4": m.Delta4,
        "delta2": m.delta2,
        "f": list(lambda_frequencies(m)),
        "w": None,
        "predictedPeak": report.predicted_peak,
        "tm": transfer_time(m),
    }
    if not _is_indeterminate(m):
        rec["w"] = list(lambda_weights(m).closed)
    return rec
