"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import filecmp
import time

import numpy as np
import pytest

from polydetect.channel_models import draw_channel, gram, make_identity_profile, make_jakes_profile
from polydetect.cli import main
from polydetect.config import ExperimentConfig
from polydetect.detectors import (
    lmmse_detect,
    monte_carlo_sinr_all,
    optimal_weights,
    poly_detect,
    sinr_exact,
)
from polydetect.experiment import sweep
from polydetect.moment_engine import asymptotic_table, channel_moments, compute_recursion, global_moments, gram_user_moments
from polydetect.stieltjes import fixed_point_residual, solve, stieltjes_m
from polydetect.validation import mp_moments, naive_moments, random_psd_profile

SNR_GRID = [-10, -5, 0, 5, 10, 15, 20, 25]


def _jakes_errors(profile, n_draws=20, n_max=6, n_users=10):
    """Median relative errors of global (n = 1..n_max) and per-user (n = 1..4) moments."""
    table = asymptotic_table(profile, n_max)
    users = np.random.default_rng(1).choice(profile.n_tx, n_users, replace=False)
    mus, ums = [], []
    for t in range(n_draws):
        ch = draw_channel(profile, (0, 1, t))
        g = ch.h.conj().T @ ch.h
        um = gram_user_moments((g + g.conj().T) / 2, n_max)
        mus.append(um[:, 1:].sum(axis=0) / profile.n_rx)
        ums.append(um[users, 1:5])
    glob = np.median(np.abs(np.array(mus) - table.mu[1:]) / table.mu[1:], axis=0)
    bar = table.per_user[users, 1:5]
    user = np.median(np.abs(np.array(ums) - bar) / bar, axis=(0, 1))
    return glob, user


@pytest.fixture(scope="module")
def convergence(jakes_intervals, jakes_256):
    t0 = time.perf_counter()
    small = _jakes_errors(jakes_256)
    big = _jakes_errors(make_jakes_profile(512, 204, jakes_intervals, seed=(0, 0)))
    return small, big, time.perf_counter() - t0


def test_c1_mp_moments(report):
    t0 = time.perf_counter()
    worst = 0.0
    for c in (0.25, 0.5, 1.0, 2.0):
        k = 40
        mu = global_moments(compute_recursion(make_identity_profile(int(c * k), k), 8)).mu
        exact = np.array([mp_moments(c, n) for n in range(9)])
        worst = max(worst, float(np.max(np.abs(mu - exact) / exact)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 1.0
    report(1, ok, f"MP moments max rel err {worst:.2e} (<= 1e-9), {elapsed:.2f} s (< 1 s)")
    assert ok


def test_c2_scaled_matches_naive(report):
    worst = 0.0
    cases = [(n, k, m) for n in (2, 5, 8) for k in (3, 6) for m in (1, 2, 3)]
    for i, (n, k, m) in enumerate(cases):
        prof = random_psd_profile(n, k, m, seed=(2, i))
        fast = global_moments(compute_recursion(prof, 6)).mu
        ref = naive_moments(prof, 6)
        worst = max(worst, float(np.max(np.abs(fast - ref) / np.abs(ref))))
    report(2, worst <= 1e-12, f"scaled vs naive max rel err {worst:.2e} (<= 1e-12) over {len(cases)} profiles")
    assert worst <= 1e-12


def test_c3_moment_convergence(report, convergence):
    (g256, _), (g512, _), elapsed = convergence
    within = bool(np.all(g256 <= 0.05))
    decreasing = bool(np.all(g512 < g256))
    ok = within and decreasing and elapsed < 120
    report(3, ok, "median rel err n=1..6 at (256,102): "
           + " ".join(f"{e:.3f}" for e in g256) + " (<= 0.05); at (512,204): "
           + " ".join(f"{e:.3f}" for e in g512) + f" (strictly smaller: {decreasing}); {elapsed:.0f} s")
    assert decreasing
    assert within


def test_c4_per_user_moments(report, convergence):
    (_, u256), _, _ = convergence
    ok = bool(np.all(u256 <= 0.10))
    report(4, ok, "per-user median rel err n=1..4: " + " ".join(f"{e:.3f}" for e in u256) + " (<= 0.10)")
    assert ok


def test_c5_sinr_formula_monte_carlo(report):
    prof = make_identity_profile(8, 4)
    sigma2 = 0.1
    worst = 0.0
    for c in range(5):
        ch = draw_channel(prof, (5, c))
        mom = channel_moments(ch, 6)
        for L in (1, 2, 3):
            w = optimal_weights(mom, sigma2, L)
            mc = monte_carlo_sinr_all(ch, lambda y, w=w: poly_detect(ch, y, w), sigma2, 1_000_000, (6, c, L))
            exact = np.array([sinr_exact(ch, w, k, sigma2).gamma for k in range(4)])
            worst = max(worst, float(np.max(np.abs(mc - exact) / exact)))
    report(5, worst <= 0.01, f"Monte Carlo vs closed-form SINR max rel err {worst:.2e} (<= 0.01)")
    assert worst <= 0.01


def test_c6_full_rank_equals_lmmse(report):
    sigma2 = 1.0
    rng = np.random.default_rng(6)
    worst = 0.0
    for i, (n, k) in enumerate((n, k) for n in range(1, 7) for k in range(1, 7)):
        ch = draw_channel(make_identity_profile(n, k), (7, i))
        r = min(n, k)
        w = optimal_weights(channel_moments(ch, 2 * r), sigma2, r)
        y = rng.standard_normal((n, 8)) + 1j * rng.standard_normal((n, 8))
        ref = lmmse_detect(ch, y, sigma2)
        worst = max(worst, float(np.linalg.norm(poly_detect(ch, y, w) - ref) / np.linalg.norm(ref)))
    report(6, worst <= 1e-6, f"full-rank poly vs LMMSE max rel err {worst:.2e} (<= 1e-6), sigma2 = 1")
    assert worst <= 1e-6


def test_c7_fixed_point(report, jakes_256):
    section5 = make_jakes_profile(100, 40, seed=(0, 0))
    eigs = [np.linalg.eigvalsh(gram(draw_channel(jakes_256, (7, t)))) for t in range(20)]
    worst_res, worst_m = 0.0, 0.0
    for snr_db in SNR_GRID:
        s2 = 10 ** (-snr_db / 10)
        for prof in (section5, jakes_256):
            worst_res = max(worst_res, fixed_point_residual(prof, solve(prof, -s2)))
        m = stieltjes_m(solve(jakes_256, -s2))
        mc = np.mean([np.mean(1 / (e + s2)) for e in eigs])
        worst_m = max(worst_m, abs(mc - m) / m)
    ok = worst_res <= 1e-10 and worst_m <= 0.02
    report(7, ok, f"fixed-point residual {worst_res:.2e} (<= 1e-10); m(z) vs Monte Carlo {worst_m:.2e} (<= 0.02)")
    assert ok


def test_c8_section5_sweep(report):
    t0 = time.perf_counter()
    rows, errors = sweep(ExperimentConfig(trials=1000))
    elapsed = time.perf_counter() - t0
    by = {(r.snr_db, r.method): r for r in rows}
    order = ["matched", "poly(2)", "poly(3)", "poly(6)"]
    a = all(
        all(by[(s, x)].gamma_mean < by[(s, y)].gamma_mean for x, y in zip(order, order[1:]))
        and by[(s, "poly(6)")].gamma_mean <= by[(s, "lmmse")].gamma_mean
        for s in SNR_GRID
    )
    gap = max(10 * np.log10(by[(s, "lmmse")].gamma_mean / by[(s, "poly(6)")].gamma_mean)
              for s in SNR_GRID if s <= 10)
    b = gap <= 1.0
    c = all(by[(s, x)].gamma_std <= by[(s, y)].gamma_std for s in SNR_GRID for x, y in zip(order, order[1:]))
    d = (by[(25, "poly(2)")].ber >= by[(20, "poly(2)")].ber / 2
         and by[(25, "lmmse")].ber < by[(20, "lmmse")].ber / 2
         and by[(5, "poly(6)")].ber < by[(5, "poly(3)")].ber < by[(5, "poly(2)")].ber)
    low = all(0.2 < r.ber < 0.5 for r in rows if r.snr_db == -10)
    ok = a and b and c and d and low and not errors and elapsed < 600
    report(8, ok, f"ordering {a}; poly(6) gap <= {gap:.2f} dB (<= 1); std nondecreasing {c}; "
           f"BER floor {d}; BER(-10 dB) in (0.2, 0.5) {low}; {elapsed:.0f} s")
    assert ok


def test_c9_cli_determinism(report, tmp_path):
    same = True
    for cmd, files in [("sinr-sweep", ["sinr.csv"]), ("ber-sweep", ["ber.csv"]),
                       ("moments", ["moments.csv", "moment_table.csv"])]:
        for run in ("a", "b"):
            assert main([cmd, "--trials", "20", "--seed", "9", "--snr-db", "0", "10",
                         "--out", str(tmp_path / cmd / run)]) == 0
        for f in files:
            same &= filecmp.cmp(tmp_path / cmd / "a" / f, tmp_path / cmd / "b" / f, shallow=False)
    report(9, same, "repeated CLI runs produce byte-identical CSV")
    assert same
