import math

import numpy as np
import pytest

from oracles import piecewise_fidelity
from spinqst.balance import (
    PulseSchedule,
    adaptive_cycles,
    average_generator,
    balance_ratio,
    balanced_time,
    build_schedule,
    schedule_propagator,
    simulate_schedule,
    trotter_convergence,
)
from spinqst.dynamics import fidelity
from spinqst.errors import NoCouplingError, ValidationError
from spinqst.lambdanet import LambdaModel


def reduced_model(O1=1.0, ON=0.1002, seed=1, m=6):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=m)
    v /= np.linalg.norm(v)
    return LambdaModel(O1 * v, ON * v, overlaps=(O1, ON))


def test_ratio_examples():
    r, flip = balance_ratio(1.0, 0.1002)
    assert r == pytest.approx(0.5501)
    assert flip == 0
    r, flip = balance_ratio(-0.2, 0.5)
    assert r == pytest.approx(0.7) and flip == 1
    assert balance_ratio(0.3, -0.3)[0] == 1.0
    assert balance_ratio(0.0, 0.4)[0] == 0.5
    with pytest.raises(NoCouplingError):
        balance_ratio(0.0, 0.0)


def test_schedule_layouts():
    s = build_schedule(0.75, 0, 1.0, 1, symmetrized=True)
    assert s.segments == ((0.375, False), (0.25, True), (0.375, False))
    u = build_schedule(0.75, 0, 1.0, 1, symmetrized=False)
    assert u.segments == ((0.75, False), (0.25, True))
    one = build_schedule(1.0, 0, 2.0, 3, symmetrized=True)
    assert one.cycle_segments() == ((2.0 / 3, False),)


@pytest.mark.parametrize("r", [0.5, 0.55, 0.8, 1.0])
@pytest.mark.parametrize("L", [1, 3, 20])
def test_schedule_total_time(r, L):
    for sym in (True, False):
        s = build_schedule(r, 2, 7.5, L, sym)
        assert sum(dt for dt, _ in s.segments) == pytest.approx(7.5, abs=1e-12)
        assert sum(dt for dt, _ in s.cycle_segments()) == pytest.approx(7.5 / L, abs=1e-12)


def test_schedule_validation():
    with pytest.raises(ValidationError):
        build_schedule(0.4, 0, 1.0, 1)
    with pytest.raises(ValidationError):
        build_schedule(0.7, 0, 1.0, 0)
    with pytest.raises(ValidationError):
        build_schedule(0.7, 0, -1.0, 1)


def test_no_flip_schedule_equals_free_evolution():
    lm = reduced_model()
    net = lm.to_network()
    s = build_schedule(1.0, 0, 10.0, 5)
    tr = simulate_schedule(net, s, samples=500)
    assert np.allclose(tr.values, fidelity(net.couplings, tr.times, *net.ends), atol=1e-12)


def test_fully_flipped_is_a_gauge():
    lm = reduced_model()
    net = lm.to_network()
    s = PulseSchedule(0, ((10.0, True),), 1, False, 0.5, 10.0)
    tr = simulate_schedule(net, s, samples=300)
    assert np.allclose(tr.values, fidelity(net.couplings, tr.times, *net.ends), atol=1e-12)


def test_simulation_matches_expm_oracle():
    lm = reduced_model(O1=0.8, ON=0.3)
    net = lm.to_network()
    r, flip = balance_ratio(*lm.overlaps)
    T = balanced_time(0.3, 1.0)
    s = build_schedule(r, net.ends[flip], T, 4, True)
    tr = simulate_schedule(net, s, samples=50)
    for k in (10, 25, 49):
        t = tr.times[k]
        ref = piecewise_fidelity(net.couplings, s.segments, s.flip_node, t, *net.ends)
        assert tr.values[k] == pytest.approx(ref, abs=1e-10)


def test_propagator_unitary():
    lm = reduced_model()
    net = lm.to_network()
    s = build_schedule(0.6, 0, 50.0, 64, True)
    U = schedule_propagator(net.couplings, s)
    assert np.allclose(U.conj().T @ U, np.eye(net.n), atol=1e-10)


def test_average_generator_balances_legs():
    lm = reduced_model(O1=1.0, ON=0.25)
    r, flip = balance_ratio(*lm.overlaps)
    A = average_generator(lm.adjacency(), r, lm.to_network().ends[flip])
    legs_src = A[0, 1:-1]
    legs_dst = A[-1, 1:-1]
    assert np.allclose(np.abs(legs_src), np.abs(legs_dst), atol=1e-12)
    assert (2 * r - 1) * 1.0 == pytest.approx(0.25, abs=1e-12)


def test_average_generator_is_cycle_integral():
    lm = reduced_model()
    A = lm.adjacency()
    r = 0.6
    s = build_schedule(r, 0, 1.0, 1, True)
    D = np.diag([-1.0] + [1.0] * (len(A) - 1))
    integral = sum(dt * (D @ A @ D if f else A) for dt, f in s.segments)
    assert np.allclose(integral, average_generator(A, r, 0), atol=1e-14)


def test_reduced_model_converges_with_cycles():
    lm = reduced_model()
    net = lm.to_network()
    r, flip = balance_ratio(*lm.overlaps)
    T = balanced_time(min(map(abs, lm.overlaps)), 1.0)
    rows = trotter_convergence(net, r, net.ends[flip], T, [2, 5, 10, 20, 40], samples=4000)
    sym = [row.symmetrized for row in rows]
    assert all(b >= a - 1e-4 for a, b in zip(sym, sym[1:]))
    assert all(row.symmetrized >= row.unsymmetrized - 1e-9 for row in rows)
    assert sym[-1] > 0.9999
    with pytest.raises(ValidationError):
        trotter_convergence(net, r, 0, T, [5, 2])


def test_adaptive_cycles():
    assert adaptive_cycles(1.0, 1.0) == 20
    assert adaptive_cycles(0.01, 1.0) == 400
    with pytest.raises(NoCouplingError):
        adaptive_cycles(0.0, 1.0)


def test_balanced_time():
    assert balanced_time(0.5, 0.1) == pytest.approx(math.pi / (math.sqrt(2) * 0.05))
