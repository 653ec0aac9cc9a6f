"""Closed-form norm estimates for network classes and their Monte Carlo check."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .netgen import BuilderSpec

# Limiting top eigenvalue of the random dipolar class, in units of 1/d^3.
DIPOLAR_EMAX = 1.6


class NetworkClass(str, enum.Enum):
    RANDOM_UNIFORM = "randomUniform"
    RANDOM_DIPOLAR = "randomDipolar"
    HONEYCOMB = "honeycomb"
    HONEYCOMB_VACANCY = "honeycombVacancy"


@dataclass(frozen=True)
class NormEstimate:
    network_class: NetworkClass
    n: int
    d: float
    p: float
    predicted_norm: float
    predicted_emax: Optional[float]


def predict_norm(network_class, n: int, d: float = 1.0, p: float = 0.0) -> NormEstimate:
    """Expected Frobenius norm (and top eigenvalue where known) for a class.

    randomUniform: sqrt(n(n-1)/3), top eigenvalue (n-1)/2;
    randomDipolar: sqrt(2(n-1)/3) / d^3, top eigenvalue 1.6 / d^3;
    honeycomb: 2 sqrt(n) / d^3; honeycombVacancy: 2 sqrt(n(1-p)) / d^3,
    with ``n`` the node count before vacancies.
    """
    try:
        cls = NetworkClass(network_class)
    except ValueError:
        raise ValidationError(f"unknown network class {network_class!r}") from None
    if n < 2:
        raise ValidationError("n must be at least 2")
    if not d > 0:
        raise ValidationError("d must be positive")
    if not 0.0 <= p < 1.0:
        raise ValidationError("p must lie in [0, 1)")
    emax = None
    if cls is NetworkClass.RANDOM_UNIFORM:
        norm = math.sqrt(n * (n - 1) / 3.0)
        emax = (n - 1) / 2.0
    elif cls is NetworkClass.RANDOM_DIPOLAR:
        norm = math.sqrt(2.0 * (n - 1) / 3.0) / d**3
        emax = DIPOLAR_EMAX / d**3
    elif cls is NetworkClass.HONEYCOMB:
        norm = 2.0 * math.sqrt(n) / d**3
    else:
        norm = 2.0 * math.sqrt(n * (1.0 - p)) / d**3
    return NormEstimate(cls, int(n), float(d), float(p), norm, emax)


@dataclass(frozen=True)
class MonteCarloNorm:
    mean_norm: float
    mean_emax: float
    std_norm: float
    std_emax: float
    realizations: int


def _norm_and_emax(args) -> tuple[float, float]:
    spec, seed = args
    A = spec.build(seed).couplings
    return float(np.linalg.norm(A)), float(np.linalg.eigvalsh(A)[-1])


def _mean_std(x: list[float]) -> tuple[float, float]:
    mean = math.fsum(x) / len(x)
    var = math.fsum((v - mean) ** 2 for v in x) / (len(x) - 1)
    return mean, math.sqrt(var)


def monte_carlo_norm(spec: BuilderSpec, realizations: int = 100, base_seed: int = 0, workers: int = 1) -> MonteCarloNorm:
    """Mean and spread of ``||A||_F`` and the top eigenvalue over seeded realizations."""
    if realizations < 2:
        raise ValidationError("need at least two realizations")
    jobs = [(spec, base_seed + i) for i in range(realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_norm_and_emax, jobs, chunksize=8))
    else:
        results = [_norm_and_emax(j) for j in jobs]
    norms = [r[0] for r in results]
    emaxes = [r[1] for r in results]
    mn, sn = _mean_std(norms)
    me, se = _mean_std(emaxes)
    return MonteCarloNorm(mn, me, sn, se, realizations)


def frobenius_norm(A) -> float:
    return float(np.linalg.norm(np.asarray(A, dtype=float)))
