"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line through the ``criterion`` fixture;
the lines are printed at the end of the pytest run.
"""

import math
import os
import warnings

import numpy as np
import pytest

from oracles import expm_fidelity, lambda_matrix, lambda_scalars
from spinqst import pipelines
from spinqst.cli import honeycomb_size
from spinqst.dynamics import fidelity, fidelity_spectral_terms, fidelity_trace
from spinqst.errors import PhysicsError
from spinqst.lambdanet import (
    LambdaModel,
    c8_diagnostic,
    closed_moments,
    lambda_fidelity,
    lambda_frequencies,
    lambda_moments,
    transfer_time,
)
from spinqst.balance import balance_ratio, balanced_time, trotter_convergence
from spinqst.netgen import BuilderSpec, build_random_dipolar_chain, honeycomb_positions
from spinqst.normscale import monte_carlo_norm, predict_norm

WORKERS = max(1, min(4, os.cpu_count() or 1))


def random_lambda(rng, m=None):
    while True:
        k = int(rng.integers(2, 11)) if m is None else m
        a = rng.uniform(-1, 1, k)
        b = rng.uniform(-1, 1, k)
        model = LambdaModel(a, b)
        if model.S2**2 - model.Delta4 >= 1e-6:
            return model


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


def test_criterion_1_closed_form_matches_exact_propagation(criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        m = random_lambda(rng)
        A = lambda_matrix(m.legs1, m.legsN)
        f1 = lambda_frequencies(m)[0]
        for t in np.linspace(0.0, 4 * math.pi / f1, 41):
            worst = max(worst, abs(lambda_fidelity(m, t) - expm_fidelity(A, t, 0, m.size + 1)))
    criterion(1, worst <= 1e-8, f"max |closed - expm| = {worst:.2e} over 200 models (tol 1e-8)")


def test_criterion_2_algebraic_identity(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(1, 11))
        a, b = rng.uniform(-1, 1, k), rng.uniform(-1, 1, k)
        S2, D4, d2 = lambda_scalars(a, b)
        rhs = 0.25 * sum(a[j] ** 2 - b[j] ** 2 for j in range(k)) ** 2
        worst = max(worst, abs(S2**2 - D4 - d2**2 - rhs))
    criterion(2, worst <= 1e-12, f"max residual {worst:.2e} on 1000 leg vectors (tol 1e-12)")


def _frequency_check(m, allowed, tol=1e-7):
    extraneous = 0.0
    for w, f in fidelity_spectral_terms(m.adjacency(), 0, m.size + 1, merge_tol=1e-7):
        if min(abs(abs(f) - g) for g in allowed) > tol * max(1.0, max(allowed)):
            extraneous = max(extraneous, abs(w))
    return extraneous


def test_criterion_3_four_frequencies(criterion):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        m = random_lambda(rng)
        worst = max(worst, _frequency_check(m, (0.0, *lambda_frequencies(m))))
    # Delta = 0: legsN parallel to legs1
    worst_zero = 0.0
    collapse_ok = True
    for _ in range(50):
        k = int(rng.integers(2, 11))
        a = rng.uniform(-1, 1, k)
        m = LambdaModel(a, rng.uniform(0.2, 2.0) * a)
        S = m.S
        f = lambda_frequencies(m)
        collapse_ok &= np.allclose(sorted(f), [0.0, math.sqrt(2) * S, math.sqrt(2) * S, 2 * math.sqrt(2) * S],
                                   atol=1e-6 * S)
        worst_zero = max(worst_zero, _frequency_check(m, (0.0, math.sqrt(2) * S, 2 * math.sqrt(2) * S)))
    ok = worst <= 1e-12 and worst_zero <= 1e-12 and collapse_ok
    criterion(3, ok, f"extraneous weight {worst:.1e} (general), {worst_zero:.1e} at Delta=0; "
                     f"Delta=0 set is {{0, sqrt2 S, 2 sqrt2 S}} (ratio 2)")


def test_criterion_4_balanced_models_transfer_perfectly(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 11))
        a = rng.uniform(-1, 1, k)
        m = LambdaModel(a, a.copy())
        t = transfer_time(m)
        tr = fidelity_trace(m.adjacency(), 0, k + 1, 2 * t, samples=2001)
        worst = max(worst, 1.0 - fidelity(m.adjacency(), t, 0, k + 1))
        assert abs(tr.peak[0] - t) <= 2 * t / 2000
    criterion(4, worst <= 1e-6, f"max 1 - F(pi/(sqrt2 S)) = {worst:.1e} over 50 balanced models (tol 1e-6)")


def test_criterion_5_offres_compensated_transfer(criterion):
    gammas = (5.0, 10.0, 25.0, 50.0)
    peaks = {g: [] for g in gammas}
    times = {g: [] for g in gammas}
    for seed in range(20):
        net = build_random_dipolar_chain(10 + seed % 5, seed=seed)
        for g in gammas:
            res = quiet(pipelines.run_offres, net, gamma=g, samples=4000)
            peaks[g].append(res.trace.peak[1])
            times[g].append(res.trace.peak[0])

    def stats(v):
        v = np.asarray(v)
        return v.mean(), v.std(ddof=1) / math.sqrt(len(v))

    ps = [stats(peaks[g]) for g in gammas]
    ts = [stats(times[g]) for g in gammas]
    mono_p = all(b[0] >= a[0] - max(a[1], b[1]) for a, b in zip(ps, ps[1:]))
    mono_t = all(b[0] >= a[0] - max(a[1], b[1]) for a, b in zip(ts, ts[1:]))
    worst25 = min(peaks[25.0])
    ok = worst25 >= 0.99 and mono_p and mono_t
    means = ", ".join(f"{g:g}:{p[0]:.3f}" for g, p in zip(gammas, ps))
    reached = sum(v >= 0.99 for v in peaks[25.0])
    criterion(5, ok, f"min peak at gamma=25 {worst25:.3f} (need 0.99), {reached}/20 reach 0.99, mean peaks {means}, "
                     f"monotone peak {mono_p}, monotone time {mono_t}")


def test_criterion_6_onres_balancing(criterion):
    spec = BuilderSpec("p1nv", {"density_ppm": 0.2, "nv_separation": 55.0, "mean_bulk": 20.0})
    Ls = [2, 5, 10, 20, 40]
    bal, unb, sym, unsym, gam = [], [], [], [], []
    skipped = 0
    for seed in range(20):
        net = spec.build(seed)
        try:
            res = quiet(pipelines.run_onres, net, cycles=20, symmetrized=True, convergence=Ls)
        except PhysicsError:
            skipped += 1
            continue
        gam.append(res.gamma)
        bal.append(res.balanced.peak[1])
        unb.append(res.unbalanced.peak[1])
        sym.append([row.symmetrized for row in res.convergence])
        unsym.append([row.unsymmetrized for row in res.convergence])
    mb, mu = float(np.mean(bal)), float(np.mean(unb))
    ms, mus = np.mean(sym, axis=0), np.mean(unsym, axis=0)
    order = bool(np.all(ms >= mus - 1e-12))
    ok = mb >= 0.95 and mb - mu >= 0.3 and order
    criterion(6, ok, f"mean balanced {mb:.3f} (need 0.95), unbalanced {mu:.3f}, gap {mb - mu:.3f} (need 0.3), "
                     f"sym>=unsym at all L {order} (sym {np.round(ms, 3).tolist()}, unsym {np.round(mus, 3).tolist()}), "
                     f"median gamma {np.median(gam):.2f}, skipped {skipped}")


def test_criterion_7_trotter_scaling(criterion):
    rng = np.random.default_rng(7)
    v = rng.normal(size=6)
    v /= np.linalg.norm(v)
    O1, ON = 1.0, 0.1002
    m = LambdaModel(O1 * v, ON * v, overlaps=(O1, ON))
    net = m.to_network()
    r, flip = balance_ratio(O1, ON)
    T = balanced_time(ON, 1.0)
    Ls = [4, 8, 16, 32, 64]
    rows = trotter_convergence(net, r, net.ends[flip], T, Ls, samples=20000)
    infid = np.array([1.0 - row.symmetrized for row in rows])
    slope = float(np.polyfit(np.log(Ls), np.log(infid), 1)[0])
    criterion(7, slope <= -2.5, f"log-log slope {slope:.2f} (need <= -2.5), infidelity at L=64 {infid[-1]:.1e}")


def test_criterion_8_norm_laws(criterion):
    failures = []
    parts = []
    for n in (20, 50, 100):
        pred = predict_norm("randomUniform", n).predicted_norm
        mc = monte_carlo_norm(BuilderSpec("uniform", {"n": n}), 100, workers=WORKERS)
        err = abs(mc.mean_norm / pred - 1)
        parts.append(f"uniform n={n} {err:.1%}")
        if err > 0.02:
            failures.append(f"uniform n={n}")
        pred = predict_norm("randomDipolar", n).predicted_norm
        mc = monte_carlo_norm(BuilderSpec("dipolar", {"n": n}), 100, workers=WORKERS)
        err = abs(mc.mean_norm / pred - 1)
        parts.append(f"dipolar n={n} {err:.1%}")
        if err > 0.03:
            failures.append(f"dipolar n={n}")
        if n == 100:
            e_err = abs(mc.mean_emax / 1.6 - 1)
            parts.append(f"dipolar Emax {mc.mean_emax:.3f}")
            if e_err > 0.10:
                failures.append("dipolar Emax")
        k, _ = honeycomb_size(n)
        size = len(honeycomb_positions(k, k))
        for cls, vac in (("honeycomb", 0.0), ("honeycombVacancy", 0.1)):
            pred = predict_norm(cls, size, 1.0, vac).predicted_norm
            spec = BuilderSpec("honeycomb", {"rows": k, "cols": k, "d": 1.0}, vacancy=vac)
            mc = monte_carlo_norm(spec, 100, workers=WORKERS)
            err = abs(mc.mean_norm / pred - 1)
            parts.append(f"{cls} n={size} {err:.1%}")
            if err > 0.10:
                failures.append(f"{cls} n={size}")
    ok = not failures
    criterion(8, ok, ("all within tolerance; " if ok else f"out of tolerance: {', '.join(failures)}; ")
              + "; ".join(parts))


@pytest.mark.slow
def test_criterion_9_ensemble_scaling(criterion):
    seps = [15.0, 20.0, 25.0]
    summaries, _ = quiet(pipelines.run_ensemble, seps, realizations=100, density_ppm=10.0, workers=WORKERS)
    means = [s.mean_time for s in summaries]
    peaks = [s.mean_unbalanced_peak for s in summaries]
    increasing = all(b > a for a, b in zip(means, means[1:]))
    gap = all(p < 0.5 for p in peaks)
    reached = [s.reached for s in summaries]
    criterion(9, increasing and gap,
              f"mean time {', '.join(f'{t:.3g}' for t in means)} (increasing {increasing}), "
              f"mean unbalanced peak {', '.join(f'{p:.3f}' for p in peaks)} (< 0.5 {gap}), reached {reached}")


def test_criterion_10_moments(criterion):
    rng = np.random.default_rng(10)
    worst4 = worst6 = worst8 = 0.0
    printed = 0.0
    for _ in range(50):
        m = random_lambda(rng)
        d4 = m.delta2**2
        if d4 < 1e-6:
            continue
        t = 1e-5
        worst4 = max(worst4, abs(lambda_fidelity(m, t) / t**4 / (d4 / 4) - 1))
        series = lambda_moments(m)
        worst6 = max(worst6, abs(series.C6 / (-m.S2 * d4 / 12) - 1))
        diag = c8_diagnostic(m)
        worst8 = max(worst8, diag["rel_err_corrected_closed"])
        printed = max(printed, diag["rel_err_printed_closed"], diag["rel_err_printed_moment"])
        assert closed_moments(m).C6 == pytest.approx(series.C6, rel=1e-10)
    ok = worst4 <= 1e-6 and worst6 <= 1e-10 and worst8 <= 1e-10 and printed > 1e-3
    criterion(10, ok, f"F/t^4 rel err {worst4:.1e}, C6 rel err {worst6:.1e}, corrected C8 rel err {worst8:.1e}, "
                      f"printed C8 forms off by up to {printed:.2g} (diagnostic reports it)")
