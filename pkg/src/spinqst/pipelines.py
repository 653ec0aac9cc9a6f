"""End-to-end runs: off-resonance, on-resonance with balancing, ensembles.

Every simulation here evolves the full network (after the end-end coupling
is dropped by ``partition``); the reduced models only supply the controls.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .balance import (
    ConvergenceRow,
    adaptive_cycles,
    PulseSchedule,
    balance_ratio,
    balanced_time,
    build_schedule,
    simulate_schedule,
    trotter_convergence,
)
from .dynamics import FidelityTrace, default_samples, eig_sym, fidelity_trace
from .errors import PhysicsError, ValidationError
from .lambdanet import (
    LambdaModel,
    ResonantMode,
    analysis_record,
    build_lambda,
    resonance_shifts,
    select_resonant_mode,
)
from .netgen import (
    BuilderSpec,
    PartitionedNetwork,
    SpinNetwork,
    default_p1_box,
    partition,
    set_end_shifts,
)
from .swpert import EffectiveEndModel, compensating_shifts, effective_AS, predicted_offres_time

# Upper bound on trace length; long off-resonance windows would otherwise
# ask for millions of samples to resolve fast, tiny bulk wiggles.
SAMPLE_CAP = 200_000


def prepare(net: SpinNetwork, gamma: Optional[float] = None) -> PartitionedNetwork:
    p = partition(net)
    return p if gamma is None else p.with_gamma(gamma)


def _shifted(p: PartitionedNetwork, w1: float, wN: float) -> SpinNetwork:
    return set_end_shifts(p.to_network(), w1, wN)


def _grid(A, t_max: float, samples: Optional[int]) -> int:
    if samples is None:
        samples = default_samples(A, t_max)
    return int(min(max(samples, 2), SAMPLE_CAP))


# --- off-resonance -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OffresResult:
    gamma: float
    model: EffectiveEndModel
    shifts: tuple[float, float]
    trace: FidelityTrace
    predicted_tm: float

    def record(self) -> dict:
        return {
            "gamma": self.gamma,
            "effective": self.model.record(),
            "appliedShifts": list(self.shifts),
            "predictedTmSingleMode": self.predicted_tm,
            "peakTime": self.trace.peak[0],
            "peakFidelity": self.trace.peak[1],
        }


def run_offres(
    net: SpinNetwork,
    gamma: Optional[float] = None,
    compensate: bool = True,
    t_max: Optional[float] = None,
    samples: Optional[int] = None,
    window: float = 2.0,
) -> OffresResult:
    """Effective two-spin model, compensating shifts, exact trace over ``[0, window t_m]``."""
    p = prepare(net, gamma)
    model = effective_AS(p)
    s, t = p.ends
    base = (p.epsilon * p.end_coupling[s, s], p.epsilon * p.end_coupling[t, t])
    shifts = compensating_shifts(model) if compensate else (0.0, 0.0)
    sim = _shifted(p, base[0] + shifts[0], base[1] + shifts[1])
    if t_max is None:
        if not math.isfinite(model.tm):
            raise PhysicsError("effective end coupling vanishes; give an explicit --tmax")
        t_max = window * model.tm
    sd = eig_sym(sim.couplings)
    trace = fidelity_trace(sd, s, t, t_max, _grid(sd, t_max, samples))
    return OffresResult(p.gamma, model, shifts, trace, predicted_offres_time(p))


@dataclass(frozen=True)
class GammaScanRow:
    gamma: float
    peak_fidelity: float
    peak_time: float
    tm: float


def scan_gamma(net: SpinNetwork, gammas: Sequence[float], samples: Optional[int] = None) -> list[GammaScanRow]:
    rows = []
    for g in gammas:
        res = run_offres(net, gamma=g, samples=samples)
        rows.append(GammaScanRow(float(g), res.trace.peak[1], res.trace.peak[0], res.model.tm))
    return rows


# --- on-resonance ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OnresResult:
    gamma: float
    mode: ResonantMode
    model: LambdaModel
    shifts: tuple[float, float]
    r: float
    flip_node: int
    T: float
    unbalanced: FidelityTrace
    balanced: Optional[FidelityTrace] = None
    schedule: Optional[PulseSchedule] = None
    convergence: list[ConvergenceRow] = field(default_factory=list)

    def record(self) -> dict:
        rec = {
            "gamma": self.gamma,
            "lambda": analysis_record(self.model, self.mode),
            "shift": self.mode.shift,
            "appliedShifts": list(self.shifts),
            "r": self.r,
            "flipNode": self.flip_node,
            "balancedTime": self.T,
            "unbalancedPeak": list(self.unbalanced.peak),
        }
        if self.balanced is not None:
            rec["balancedPeak"] = list(self.balanced.peak)
            rec["schedule"] = {k: v for k, v in self.schedule.record().items() if k != "segments"}
        if self.convergence:
            rec["convergence"] = [
                {"L": row.L, "symmetrized": row.symmetrized, "unsymmetrized": row.unsymmetrized}
                for row in self.convergence
            ]
        return rec


def run_onres(
    net: SpinNetwork,
    gamma: Optional[float] = None,
    strategy: Union[str, int] = "highest",
    cycles: Union[int, str] = 20,
    symmetrized: bool = True,
    balance: bool = True,
    dispersive: bool = True,
    samples: int = 4000,
    window: float = 1.25,
    t_max: Optional[float] = None,
    convergence: Optional[Sequence[int]] = None,
) -> OnresResult:
    """Resonant mode, Lambda model, balancing schedule and exact traces.

    Both the balanced and the unbalanced trace cover ``[0, window T]`` with
    ``T`` the balanced transfer time, unless ``t_max`` is given.
    ``cycles="auto"`` picks the count from the overlap ratio.
    """
    p = prepare(net, gamma)
    mode = select_resonant_mode(p, strategy)
    lam = build_lambda(p, mode)
    shifts = resonance_shifts(p, mode, dispersive)
    sim = _shifted(p, *shifts)
    O1, ON = lam.overlaps
    r, flip = balance_ratio(O1, ON)
    T = balanced_time(min(abs(O1), abs(ON)), p.epsilon)
    horizon = window * T if t_max is None else float(t_max)
    if not math.isfinite(horizon):
        raise PhysicsError("one end does not couple to the resonant mode; transfer time is infinite")
    unbalanced = fidelity_trace(sim.couplings, *sim.ends, horizon, samples=samples)
    balanced = sched = None
    rows: list[ConvergenceRow] = []
    if cycles == "auto":
        cycles = adaptive_cycles(O1, ON)
    if balance:
        sched = build_schedule(r, p.ends[flip], T, cycles, symmetrized)
        balanced = simulate_schedule(sim, sched, samples, t_max=horizon)
    if convergence:
        rows = trotter_convergence(sim, r, p.ends[flip], T, convergence, samples, window)
    return OnresResult(p.gamma, mode, lam, shifts, r, p.ends[flip], T, unbalanced, balanced, sched, rows)


def balanced_time_to_threshold(
    net: SpinNetwork,
    threshold: float = 0.99,
    strategy: Union[str, int] = "highest",
    cycles: Union[int, str] = "auto",
    samples: int = 4000,
    escalation: float = 2.0,
    max_steps: int = 10,
) -> tuple[Optional[float], float, float]:
    """First time the balanced pipeline reaches ``threshold``.

    Starts at the network's own gamma and, while the threshold is missed,
    weakens the end couplings by ``escalation`` (raising gamma) up to
    ``max_steps`` times. Returns ``(time or None, gamma used, best peak)``.
    """
    p0 = partition(net)
    best = 0.0
    g = p0.gamma
    for _ in range(max_steps + 1):
        res = run_onres(net, gamma=g, strategy=strategy, cycles=cycles, samples=samples)
        best = max(best, res.balanced.peak[1])
        hit = res.balanced.first_crossing(threshold)
        if hit is not None:
            return hit, g, best
        g *= escalation
    return None, g / escalation, best


# --- ensembles ---------------------------------------------------------------


@dataclass(frozen=True)
class InstanceResult:
    separation: float
    seed: int
    status: str
    time_to_threshold: Optional[float] = None
    gamma_used: Optional[float] = None
    natural_gamma: Optional[float] = None
    balanced_peak: Optional[float] = None
    unbalanced_peak: Optional[float] = None


def ensemble_box(density_ppm: float, separation: float, reference_separation: float, mean_bulk: float) -> tuple:
    """Box of fixed cross-section whose length follows the NV separation.

    The cross-section holds ``mean_bulk`` P1s on average at the reference
    separation, so the bath grows with the distance at fixed density.
    """
    _, side, _ = default_p1_box(density_ppm, reference_separation, mean_bulk)
    return (1.5 * separation, side, side)


def _ensemble_instance(args) -> InstanceResult:
    density, sep, ref, mean_bulk, seed, threshold, strategy, cycles, samples = args
    spec = BuilderSpec("p1nv", {"density_ppm": density, "nv_separation": sep, "box": ensemble_box(density, sep, ref, mean_bulk)})
    try:
        net = spec.build(seed)
        p = partition(net)
        unb = run_onres(net, strategy=strategy, balance=False, samples=samples)
        t_hit, g, best = balanced_time_to_threshold(net, threshold, strategy, cycles, samples)
    except PhysicsError as exc:
        return InstanceResult(sep, seed, f"skipped:{type(exc).__name__}")
    status = "ok" if t_hit is not None else "unreached"
    return InstanceResult(sep, seed, status, t_hit, g, p.gamma, best, unb.unbalanced.peak[1])


@dataclass(frozen=True)
class EnsembleSummary:
    separation: float
    realizations: int
    reached: int
    unreached: int
    skipped: int
    mean_time: float
    median_time: float
    q1_time: float
    q3_time: float
    mean_unbalanced_peak: float

    HEADER = (
        "separation,realizations,reached,unreached,skipped,meanTime,medianTime,q1Time,q3Time,meanUnbalancedPeak"
    )

    def csv_row(self) -> str:
        vals = [
            self.separation,
            self.realizations,
            self.reached,
            self.unreached,
            self.skipped,
            self.mean_time,
            self.median_time,
            self.q1_time,
            self.q3_time,
            self.mean_unbalanced_peak,
        ]
        return ",".join(f"{v:.15g}" if isinstance(v, float) else str(v) for v in vals)


def summarize(separation: float, rows: Sequence[InstanceResult]) -> EnsembleSummary:
    times = sorted(r.time_to_threshold for r in rows if r.status == "ok")
    peaks = [r.unbalanced_peak for r in rows if r.unbalanced_peak is not None]
    nan = math.nan
    if times:
        mean_t = math.fsum(times) / len(times)
        q = np.quantile(times, [0.25, 0.5, 0.75])
        q1, med, q3 = (float(x) for x in q)
    else:
        mean_t = med = q1 = q3 = nan
    return EnsembleSummary(
        separation=float(separation),
        realizations=len(rows),
        reached=len(times),
        unreached=sum(r.status == "unreached" for r in rows),
        skipped=sum(r.status.startswith("skipped") for r in rows),
        mean_time=mean_t,
        median_time=med,
        q1_time=q1,
        q3_time=q3,
        mean_unbalanced_peak=math.fsum(peaks) / len(peaks) if peaks else nan,
    )


def run_ensemble(
    separations: Sequence[float],
    realizations: int = 100,
    base_seed: int = 0,
    density_ppm: float = 10.0,
    mean_bulk: float = 20.0,
    threshold: float = 0.99,
    strategy: Union[str, int] = "highest",
    cycles: Union[int, str] = "auto",
    samples: int = 4000,
    workers: int = 1,
) -> tuple[list[EnsembleSummary], list[InstanceResult]]:
    """Balanced time-to-threshold and unbalanced peak over seeded P1/NV instances."""
    if realizations < 1:
        raise ValidationError("need at least one realization")
    if not separations:
        raise ValidationError("need at least one NV separation")
    ref = min(separations)
    jobs = [
        (density_ppm, float(sep), ref, mean_bulk, base_seed + i, threshold, strategy, cycles, samples)
        for sep in separations
        for i in range(realizations)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ensemble_instance, jobs, chunksize=4))
    else:
        results = [_ensemble_instance(j) for j in jobs]
    summaries = []
    for sep in separations:
        rows = [r for r in results if r.separation == float(sep)]
        summaries.append(summarize(sep, rows))
    return summaries, results

