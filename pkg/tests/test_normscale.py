import math

import numpy as np
import pytest

from oracles import mc_uniform_norm
from spinqst.errors import ValidationError
from spinqst.netgen import BuilderSpec, build_random_uniform
from spinqst.normscale import (
    NetworkClass,
    frobenius_norm,
    monte_carlo_norm,
    predict_norm,
)


def test_closed_forms():
    assert predict_norm("randomUniform", 100).predicted_norm == pytest.approx(57.4456, abs=1e-4)
    assert predict_norm("randomUniform", 30).predicted_norm == math.sqrt(30 * 29 / 3)
    assert predict_norm("randomUniform", 30).predicted_emax == 14.5
    est = predict_norm(NetworkClass.RANDOM_DIPOLAR, 50, d=2.0)
    assert est.predicted_norm == pytest.approx(math.sqrt(2 * 49 / 3) / 8)
    assert est.predicted_emax == pytest.approx(1.6 / 8)
    assert predict_norm("honeycomb", 64).predicted_norm == 16.0
    assert predict_norm("honeycombVacancy", 64, p=0.0).predicted_norm == 16.0
    assert predict_norm("honeycombVacancy", 64, p=0.75).predicted_norm == 8.0


def test_closed_form_errors():
    with pytest.raises(ValidationError):
        predict_norm("square", 10)
    with pytest.raises(ValidationError):
        predict_norm("honeycomb", 1)
    with pytest.raises(ValidationError):
        predict_norm("honeycomb", 10, d=0)
    with pytest.raises(ValidationError):
        predict_norm("honeycombVacancy", 10, p=1.0)


def test_zeta_constants():
    assert sum(1 / j**6 for j in range(1, 10000)) == pytest.approx(math.pi**6 / 945, rel=1e-12)
    assert math.pi**6 / 945 == pytest.approx(1.01734, abs=1e-5)
    assert sum(1 / j**5 for j in range(1, 10000)) == pytest.approx(1.0369, abs=1e-4)


def test_frobenius_matches_spectrum():
    A = build_random_uniform(20, 1).couplings
    assert frobenius_norm(A) ** 2 == pytest.approx(np.sum(np.linalg.eigvalsh(A) ** 2), rel=1e-10)


def test_uniform_monte_carlo_within_two_percent():
    for n in (20, 50):
        mc = monte_carlo_norm(BuilderSpec("uniform", {"n": n}), 100)
        assert mc.mean_norm == pytest.approx(predict_norm("randomUniform", n).predicted_norm, rel=0.02)


def test_uniform_closed_form_independent_sampler():
    n = 20
    assert mc_uniform_norm(n, range(200)) == pytest.approx(math.sqrt(n * (n - 1) / 3), rel=0.02)


def test_relative_spread_shrinks():
    rel = []
    for n in (10, 40, 160):
        mc = monte_carlo_norm(BuilderSpec("uniform", {"n": n}), 40)
        rel.append(mc.std_norm / mc.mean_norm)
    assert rel[0] > rel[1] > rel[2]


def test_mean_within_standard_error():
    n, k = 30, 400
    target = predict_norm("randomUniform", n).predicted_norm
    mc = monte_carlo_norm(BuilderSpec("uniform", {"n": n}), k, base_seed=1000)
    # the closed form is sqrt(E[F^2]) >= E[F], a bias far below the Monte Carlo error here
    assert abs(mc.mean_norm - target) < 4 * mc.std_norm / math.sqrt(k) + 1e-3 * target


def test_dipolar_emax_approaches_from_below():
    vals = [monte_carlo_norm(BuilderSpec("dipolar", {"n": n}), 30).mean_emax for n in (20, 50, 100)]
    assert vals[0] < vals[2]
    assert vals[2] == pytest.approx(1.6, rel=0.1)


def test_workers_do_not_change_results():
    spec = BuilderSpec("uniform", {"n": 15})
    a = monte_carlo_norm(spec, 16, workers=1)
    b = monte_carlo_norm(spec, 16, workers=2)
    assert a == b


def test_needs_two_realizations():
    with pytest.raises(ValidationError):
        monte_carlo_norm(BuilderSpec("uniform", {"n": 5}), 1)
