"""Self-checks run by ``polydetect validate``.

Each check compares an implementation against an independent oracle and
returns a :class:`CheckResult` with the observed and allowed error.
"""

from __future__ import annotations

import logging
import time
import warnings
from contextlib import ExitStack
from dataclasses import dataclass
from math import comb, factorial
from unittest import mock

import numpy as np

from . import moment_engine
from .channel_models import CorrelationProfile, draw_channel, make_identity_profile, make_jakes_profile
from .detectors import (
    lmmse_detect,
    monte_carlo_sinr_all,
    optimal_weights,
    poly_detect,
    sinr_exact,
)
from .moment_engine import channel_moments, compute_recursion, global_moments
from .rng import make_rng
from .stieltjes import fixed_point_residual, solve, stieltjes_m

log = logging.getLogger(__name__)

#: Grid of SNR values (dB) used by the fixed-point check.
SNR_GRID_DB = (-10, -5, 0, 5, 10, 15, 20, 25)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    expected: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: observed {self.observed:.3e}, allowed {self.expected:.3e}"
                f" ({self.seconds:.1f} s){'; ' + self.detail if self.detail else ''}")


def mp_moments(c: float, n: int) -> float:
    """Marchenko-Pastur moment ``sum_r c^r / (r+1) C(n,r) C(n-1,r)``, ``c = N/K``."""
    if n == 0:
        return 1.0
    return sum(c ** r / (r + 1) * comb(n, r) * comb(n - 1, r) for r in range(n))


def mp_stieltjes(c: float, z: float) -> float:
    """Positive root of ``z c m^2 - (1 - c - z) m + 1 = 0`` for ``z < 0``."""
    a, b = z * c, -(1 - c - z)
    if a == 0:
        return -1.0 / b
    disc = np.sqrt(b * b - 4 * a)
    roots = np.array([(-b + disc) / (2 * a), (-b - disc) / (2 * a)])
    return float(roots[roots > 0].min())


def naive_moments(profile: CorrelationProfile, n_max: int) -> np.ndarray:
    """Unscaled recursion with explicit binomials and factorials, one term per column."""
    n, k = profile.n_rx, profile.n_tx
    rr = [profile.column_gram(j) for j in range(k)]
    t = [np.eye(n, dtype=complex)]
    q = [None]
    f = [[-1.0] for _ in range(k)]
    d = [[np.real(np.trace(rr[j])) / k] for j in range(k)]
    for m in range(n_max):
        q.append((m + 1) / k * sum(f[j][m] * rr[j] for j in range(k)))
        t.append(sum(comb(m, i) * comb(i, jj) * t[m - i] @ q[i - jj + 1] @ t[jj]
                     for i in range(m + 1) for jj in range(i + 1)))
        for j in range(k):
            f[j].append(sum(comb(m, i) * comb(i, jj) * (m - i + 1) * f[j][jj] * f[j][i - jj] * d[j][m - i]
                            for i in range(m + 1) for jj in range(i + 1)))
            d[j].append(np.real(np.trace(rr[j] @ t[m + 1])) / k)
    return np.array([(-1) ** i / factorial(i) * np.real(np.trace(t[i])) / n for i in range(n_max + 1)])


def random_psd_profile(n_rx: int, n_tx: int, n_distinct: int, seed) -> CorrelationProfile:
    """Random complex factors (not necessarily Hermitian) assigned round-robin."""
    rng = make_rng(seed)
    mats = (rng.standard_normal((n_distinct, n_rx, n_rx))
            + 1j * rng.standard_normal((n_distinct, n_rx, n_rx))) / np.sqrt(2 * n_rx)
    return CorrelationProfile(mats, np.arange(n_tx) % n_distinct)


def _rel(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)


def _timed(name, fn, tol):
    t0 = time.perf_counter()
    observed, detail = fn()
    return CheckResult(name, bool(observed <= tol), float(observed), tol, detail, time.perf_counter() - t0)


def check_mp_moments(n_max: int = 8, tol: float = 1e-9) -> CheckResult:
    """Identity profiles reproduce the Marchenko-Pastur moments."""
    def run():
        worst, k = 0.0, 40
        for c in (0.25, 0.5, 1.0, 2.0):
            mu = global_moments(compute_recursion(make_identity_profile(int(c * k), k), n_max)).mu
            exact = [mp_moments(c, n) for n in range(n_max + 1)]
            worst = max(worst, float(_rel(mu, exact).max()))
        return worst, "c in {1/4, 1/2, 1, 2}, n <= 8"
    return _timed("mp-moments", run, tol)


def check_naive_recursion(n_max: int = 6, tol: float = 1e-12) -> CheckResult:
    """The scaled recursion agrees with the literal factorial form."""
    def run():
        worst = 0.0
        for i, (n, k, m) in enumerate([(3, 4, 1), (5, 6, 2), (8, 7, 3), (8, 3, 3)]):
            prof = random_psd_profile(n, k, m, seed=(11, i))
            fast = global_moments(compute_recursion(prof, n_max)).mu
            worst = max(worst, float(_rel(fast, naive_moments(prof, n_max)).max()))
        return worst, "N <= 8, M <= 3, n <= 6"
    return _timed("scaled-vs-naive", run, tol)


def check_sinr_monte_carlo(n_samples: int = 1_000_000, tol: float = 0.01, n_channels: int = 5) -> CheckResult:
    """Closed-form output SINR against simulated symbols and noise (N=8, K=4, L=1..3)."""
    def run():
        prof = make_identity_profile(8, 4)
        sigma2 = 0.1
        worst = 0.0
        for c in range(n_channels):
            ch = draw_channel(prof, (21, c))
            mom = channel_moments(ch, 6)
            for L in (1, 2, 3):
                w = optimal_weights(mom, sigma2, L)
                mc = monte_carlo_sinr_all(ch, lambda y, w=w: poly_detect(ch, y, w), sigma2, n_samples,
                                          (22, c, L))
                exact = [sinr_exact(ch, w, k, sigma2).gamma for k in range(ch.n_tx)]
                worst = max(worst, float(_rel(mc, exact).max()))
        return worst, f"{n_channels} channels, {n_samples} samples, SNR 10 dB"
    return _timed("sinr-monte-carlo", run, tol)


def check_fixed_point(tol: float = 1e-10) -> CheckResult:
    """Fixed-point defect on a Jakes profile and m(z) against the MP quadratic."""
    def run():
        prof = make_jakes_profile(100, 40, seed=(0, 0))
        worst = 0.0
        for snr_db in SNR_GRID_DB:
            worst = max(worst, fixed_point_residual(prof, solve(prof, -(10 ** (-snr_db / 10)))))
        for c in (0.5, 1.0, 2.0):
            for z in (-0.1, -1.0, -10.0):
                m = stieltjes_m(solve(make_identity_profile(int(40 * c), 40), z))
                worst = max(worst, float(_rel(m, mp_stieltjes(c, z))))
        return worst, "Jakes N=100, K=40 on the SNR grid; MP c in {1/2, 1, 2}"
    return _timed("fixed-point", run, tol)


def check_lmmse_equivalence(tol: float = 1e-6, sigma2: float = 1.0) -> CheckResult:
    """Full-rank polynomial detector with empirical weights reproduces LMMSE."""
    def run():
        worst, cond = 0.0, 0.0
        rng = make_rng(31)
        for i, (n, k) in enumerate([(n, k) for n in range(2, 7) for k in range(2, 7)]):
            ch = draw_channel(make_identity_profile(n, k), (32, i))
            with warnings.catch_warnings():
                # full-rank moment systems are ill-conditioned by construction
                warnings.simplefilter("ignore", RuntimeWarning)
                w = optimal_weights(channel_moments(ch, 2 * min(n, k)), sigma2, min(n, k))
            cond = max(cond, w.condition_estimate)
            y = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
            ref = lmmse_detect(ch, y, sigma2)
            worst = max(worst, float(np.linalg.norm(poly_detect(ch, y, w) - ref) / np.linalg.norm(ref)))
        return worst, f"i.i.d. channels, N, K in [2, 6], sigma2 = {sigma2}, max condition {cond:.1e}"
    return _timed("lmmse-equivalence", run, tol)


CHECKS = {
    "mp-moments": check_mp_moments,
    "scaled-vs-naive": check_naive_recursion,
    "sinr-monte-carlo": check_sinr_monte_carlo,
    "fixed-point": check_fixed_point,
    "lmmse-equivalence": check_lmmse_equivalence,
}


def _perturbed_f_hat(original):
    def wrapped(f, d, n):
        return original(f, d, n) * (1 + 1e-6)
    return wrapped


def run_validate(inject_fault: bool = False, names=None) -> list[CheckResult]:
    """Run the named checks (all by default).

    ``inject_fault`` perturbs one coefficient of the moment recursion by a
    relative 1e-6 for the duration of the run; the recursion checks must then
    fail.
    """
    names = list(CHECKS) if names is None else list(names)
    unknown = set(names) - set(CHECKS)
    if unknown:
        raise KeyError(f"unknown checks: {sorted(unknown)}")
    results = []
    with ExitStack() as stack:
        if inject_fault:
            stack.enter_context(mock.patch.object(
                moment_engine, "_next_f_hat", _perturbed_f_hat(moment_engine._next_f_hat)))
        for name in names:
            res = CHECKS[name]()
            log.info(res.line())
            results.append(res)
    return results
