import numpy as np
import pytest

from polydetect.channel_models import (
    CorrelationProfile,
    draw_angle_intervals,
    draw_channel,
    make_identity_profile,
    make_jakes_profile,
)
from polydetect.detectors import lmmse_sinr_all
from polydetect.errors import ConvergenceError, DomainError
from polydetect.moment_engine import asymptotic_table
from polydetect.stieltjes import fixed_point_residual, lmmse_asymptotic_sinr, solve, stieltjes_m
from polydetect.validation import mp_stieltjes


@pytest.fixture(scope="module")
def jakes():
    return make_jakes_profile(30, 12, seed=3)


@pytest.mark.parametrize("c", [0.25, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("z", [-0.01, -0.5, -1.0, -20.0])
def test_marchenko_pastur_quadratic(c, z):
    sol = solve(make_identity_profile(int(40 * c), 40), z)
    assert stieltjes_m(sol) == pytest.approx(mp_stieltjes(c, z), rel=1e-10)


def test_golden_ratio():
    assert stieltjes_m(solve(make_identity_profile(5, 5), -1.0)) == pytest.approx((np.sqrt(5) - 1) / 2, rel=1e-12)


def test_zero_profile():
    prof = CorrelationProfile(np.zeros((1, 4, 4)), [0, 0])
    sol = solve(prof, -2.0)
    np.testing.assert_allclose(sol.t_matrix, np.eye(4) / 2)
    np.testing.assert_array_equal(sol.deltas, 0.0)
    assert stieltjes_m(sol) == pytest.approx(0.5, rel=1e-15)


def test_large_z_expansion_matches_moments(jakes):
    # m(z) = -sum_n mu_n / z^(n+1) for |z| beyond the spectrum
    mu = asymptotic_table(jakes, 6, with_users=False).mu
    z = -200.0
    series = -sum(mu[n] / z ** (n + 1) for n in range(7))
    assert stieltjes_m(solve(jakes, z, tol=1e-15)) == pytest.approx(series, rel=1e-12)


def test_derivative_at_origin_is_first_moment(jakes):
    # z^2 (m(z) + 1/z) -> -mu_1 as z -> -inf
    mu1 = asymptotic_table(jakes, 1, with_users=False).mu[1]
    z = -1e5
    assert z * z * (stieltjes_m(solve(jakes, z, tol=1e-15)) + 1 / z) == pytest.approx(-mu1, rel=1e-4)


def test_residual_small_on_grid(jakes):
    for snr_db in range(-10, 30, 5):
        sol = solve(jakes, -(10 ** (-snr_db / 10)))
        assert fixed_point_residual(jakes, sol) <= 1e-10
        assert sol.iterations >= 1


def test_damping_same_solution(jakes):
    a = solve(jakes, -0.1)
    b = solve(jakes, -0.1, damping=0.5)
    np.testing.assert_allclose(a.deltas, b.deltas, rtol=1e-10)
    assert b.iterations > a.iterations


def test_errors(jakes):
    for z in (0.0, 1.0):
        with pytest.raises(DomainError):
            solve(jakes, z)
    with pytest.raises(ConvergenceError) as exc:
        solve(jakes, -0.01, max_iter=2)
    assert exc.value.residual > 1e-12
    with pytest.raises(DomainError):
        solve(jakes, -1.0, damping=1.0)


def test_lmmse_sinr_monotone_in_snr(jakes):
    snrs = 10 ** (np.arange(-10, 30, 5) / 10)
    g = np.array([lmmse_asymptotic_sinr(jakes, None, s) for s in snrs])
    assert np.all(np.diff(g, axis=0) > 0)
    assert lmmse_asymptotic_sinr(jakes, 3, 10.0) == pytest.approx(g[4, 3])
    with pytest.raises(DomainError):
        lmmse_asymptotic_sinr(jakes, 0, 0.0)


def test_lmmse_sinr_simulation_gap_shrinks():
    # the mean simulated SINR exceeds the deterministic value by O(1/N)
    intervals = draw_angle_intervals(6, (0, 0))
    s2 = 0.1
    gaps = []
    for n, k in [(50, 20), (100, 40), (200, 80)]:
        prof = make_jakes_profile(n, k, intervals)
        sims = [lmmse_sinr_all(h.conj().T @ h, s2) for h in (draw_channel(prof, (1, t)).h for t in range(40))]
        gaps.append(abs(np.mean(sims) / lmmse_asymptotic_sinr(prof, None, 1 / s2).mean() - 1))
    assert gaps[2] < gaps[1] < gaps[0]
    assert gaps[2] < 0.01
