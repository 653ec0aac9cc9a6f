"""Balancing pulse schedules for on-resonance transfer.

Ideal pi-pulses on one end spin flip the sign of its couplings in the
toggling frame. Spending a fraction ``1 - r`` of each cycle flipped makes the
stronger end's average coupling to the resonant mode equal the weaker one.
In the single-excitation picture a flipped segment evolves under ``D A D``
with ``D = diag(1, ..., -1 (flip node), ..., 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import FidelityTrace, SpectralData, eig_sym, locate_peak
from .errors import NoCouplingError, ValidationError
from .netgen import SpinNetwork


def balance_ratio(O1: float, ON: float) -> tuple[float, int]:
    """Return ``(r, flip)``: the unflipped fraction and which end to flip.

    ``flip`` is 0 for the source and 1 for the target, always the end with
    the larger ``|overlap|``; ``r = (1 + |O_small / O_big|) / 2``.
    """
    a, b = abs(O1), abs(ON)
    if a == 0.0 and b == 0.0:
        raise NoCouplingError("neither end couples to the resonant mode")
    if a >= b:
        return 0.5 * (1.0 + b / a), 0
    return 0.5 * (1.0 + a / b), 1


@dataclass(frozen=True)
class PulseSchedule:
    flip_node: int
    segments: tuple[tuple[float, bool], ...]
    cycles: int
    symmetrized: bool
    r: float
    total_time: float

    @property
    def cycle_time(self) -> float:
        return self.total_time / self.cycles

    def cycle_segments(self) -> tuple[tuple[float, bool], ...]:
        per = len(self.segments) // self.cycles
        return self.segments[:per]

    def record(self) -> dict:
        return {
            "flipNode": self.flip_node,
            "r": self.r,
            "L": self.cycles,
            "symmetrized": self.symmetrized,
            "totalTime": self.total_time,
            "segments": [[dt, bool(f)] for dt, f in self.segments],
        }


def _cycle_layout(r: float, Tc: float, symmetrized: bool) -> list[tuple[float, bool]]:
    if symmetrized:
        raw = [(r * Tc / 2.0, False), ((1.0 - r) * Tc, True), (r * Tc / 2.0, False)]
    else:
        raw = [(r * Tc, False), ((1.0 - r) * Tc, True)]
    merged: list[tuple[float, bool]] = []
    for dt, flag in raw:
        if dt <= 0.0:
            continue
        if merged and merged[-1][1] == flag:
            merged[-1] = (merged[-1][0] + dt, flag)
        else:
            merged.append((dt, flag))
    return merged


def build_schedule(r: float, flip_node: int, total_time: float, cycles: int, symmetrized: bool = True) -> PulseSchedule:
    """Repeat ``cycles`` identical cycles of length ``total_time / cycles``.

    Unsymmetrized cycle: ``r Tc`` free, ``(1-r) Tc`` flipped.
    Symmetrized cycle: ``r Tc/2`` free, ``(1-r) Tc`` flipped, ``r Tc/2`` free.
    Zero-length segments are dropped and equal neighbours within a cycle merged.
    """
    if not 0.5 <= r <= 1.0:
        raise ValidationError(f"r must lie in [1/2, 1], got {r}")
    if int(cycles) < 1:
        raise ValidationError("need at least one cycle")
    if not total_time > 0:
        raise ValidationError("total time must be positive")
    cycles = int(cycles)
    layout = _cycle_layout(r, total_time / cycles, symmetrized)
    return PulseSchedule(
        flip_node=int(flip_node),
        segments=tuple(layout * cycles),
        cycles=cycles,
        symmetrized=bool(symmetrized),
        r=float(r),
        total_time=float(total_time),
    )


def _segment_iter(sched: PulseSchedule, t_max: float):
    """Yield ``(start, duration, flipped)``, repeating cycles past the schedule end."""
    layout = sched.cycle_segments()
    offsets = np.concatenate([[0.0], np.cumsum([dt for dt, _ in layout])[:-1]])
    Tc = sched.cycle_time
    k = 0
    while True:
        base = k * Tc
        for off, (dt, flag) in zip(offsets, layout):
            start = base + off
            if start >= t_max:
                return
            yield start, min(dt, t_max - start), flag
        k += 1


def _flip_vector(n: int, node: int) -> np.ndarray:
    D = np.ones(n)
    D[node] = -1.0
    return D


def schedule_propagator(A, sched: PulseSchedule, t_max: Optional[float] = None) -> np.ndarray:
    """Full propagator of the piecewise-constant schedule up to ``t_max``."""
    sd = eig_sym(A)
    D = _flip_vector(sd.n, sched.flip_node)
    t_max = sched.total_time if t_max is None else t_max
    U = np.eye(sd.n, dtype=complex)
    for _, dt, flag in _segment_iter(sched, t_max):
        step = sd.propagator(dt)
        if flag:
            step = D[:, None] * step * D[None, :]
        U = step @ U
    return U


def simulate_schedule(
    net: SpinNetwork,
    sched: PulseSchedule,
    samples: int = 2000,
    t_max: Optional[float] = None,
) -> FidelityTrace:
    """Exact piecewise evolution of the full network under a pulse schedule.

    The trace is sampled on a uniform grid over ``[0, t_max]`` plus every
    segment boundary; beyond ``sched.total_time`` the cycle keeps repeating.
    Only one eigendecomposition is needed since ``D A D`` has eigenvectors
    ``D V``.
    """
    sd = eig_sym(net.couplings)
    V, E = sd.eigenvectors, sd.eigenvalues
    n = sd.n
    src, dst = net.ends
    D = _flip_vector(n, sched.flip_node)
    t_max = sched.total_time if t_max is None else float(t_max)
    grid = np.linspace(0.0, t_max, max(int(samples), 2))

    psi = np.zeros(n, dtype=complex)
    psi[src] = 1.0
    times_out, values_out = [], []
    segments = list(_segment_iter(sched, t_max))
    for start, dt, flag in segments:
        end = start + dt
        inside = grid[(grid >= start) & (grid < end)]
        local = np.concatenate([inside - start, [dt]])
        Vs = D[:, None] * V if flag else V
        coeff = Vs.T @ psi
        phases = np.exp(-1j * np.outer(local, E))
        amps = phases @ (Vs[dst, :] * coeff)
        times_out.append(local + start)
        values_out.append(np.abs(amps) ** 2)
        psi = Vs @ (np.exp(-1j * E * dt) * coeff)
    times = np.concatenate([[0.0]] + times_out)
    values = np.concatenate([[1.0 if src == dst else 0.0]] + values_out)
    order = np.argsort(times, kind="stable")
    times, values = times[order], np.clip(values[order], 0.0, 1.0)
    return FidelityTrace(times, values, locate_peak(times, values))


def average_generator(A, r: float, flip_node: int) -> np.ndarray:
    """Cycle-averaged generator ``r A + (1 - r) D A D``."""
    A = np.asarray(A, dtype=float)
    D = _flip_vector(A.shape[0], flip_node)
    return r * A + (1.0 - r) * (D[:, None] * A * D[None, :])


@dataclass(frozen=True)
class ConvergenceRow:
    L: int
    symmetrized: float
    unsymmetrized: float


def trotter_convergence(
    net: SpinNetwork,
    r: float,
    flip_node: int,
    T: float,
    Lvalues: Sequence[int],
    samples: int = 4000,
    window: float = 1.25,
) -> list[ConvergenceRow]:
    """Peak fidelity over ``[0, window T]`` for each cycle count, both layouts."""
    Lvalues = [int(L) for L in Lvalues]
    if Lvalues != sorted(Lvalues):
        raise ValidationError("cycle counts must be ascending")
    rows = []
    for L in Lvalues:
        peaks = []
        for sym in (True, False):
            sched = build_schedule(r, flip_node, T, L, sym)
            peaks.append(simulate_schedule(net, sched, samples, t_max=window * T).peak[1])
        rows.append(ConvergenceRow(L, peaks[0], peaks[1]))
    return rows


def adaptive_cycles(O1: float, ON: float, minimum: int = 20, per_ratio: float = 4.0) -> int:
    """Cycle count that keeps the strong end's phase per cycle small.

    The flipped end accumulates roughly ``pi |O_big / O_small| / L`` of
    coupling phase per cycle, so ``L`` grows with the overlap ratio.
    """
    a, b = sorted((abs(O1), abs(ON)))
    if a == 0.0:
        raise NoCouplingError("one end does not couple to the resonant mode")
    return max(int(minimum), int(math.ceil(per_ratio * b / a)))


def balanced_time(O_small: float, epsilon: float) -> float:
    """Perfect-transfer time ``pi / (sqrt(2) epsilon |O_small|)`` of the balanced network."""
    return math.pi / (math.sqrt(2.0) * epsilon * abs(O_small))
