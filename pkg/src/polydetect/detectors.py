"""Matched-filter, polynomial-expansion and LMMSE detectors.

The polynomial-expansion detector approximates ``(B + sigma2 I)^-1`` by
``sum_l w_l B^l`` and outputs ``x_hat = H^H sum_l w_l B^l y``.  MSE-optimal
weights solve ``Phi w = phi`` with ``Phi_ij = mu_{i+j} + sigma2 mu_{i+j-1}``
and ``phi_i = mu_i`` (``i, j = 1..L``; ``w_{i-1}`` pairs with index ``i``).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import erfc

from .channel_models import ChannelRealization, gram
from .errors import ConditioningError, DomainError, NumericError
from .moment_engine import MomentTable, empirical_user_moments
from .rng import make_rng

log = logging.getLogger(__name__)

#: Above this condition number the weight solve warns.
COND_WARN = 1e12
#: At or above this the system is treated as singular.
COND_FAIL = 1.0 / np.finfo(float).eps


@dataclass(frozen=True)
class DetectorWeights:
    coefficients: np.ndarray
    noise_power: float
    provenance: str
    condition_estimate: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if c.size < 1 or not np.all(np.isfinite(c)):
            raise DomainError("weights must be a non-empty finite vector")
        object.__setattr__(self, "coefficients", c)

    @property
    def rank(self) -> int:
        return self.coefficients.size


@dataclass(frozen=True)
class SinrReport:
    user: int
    gamma: float
    method: str
    snr: float

    @property
    def ber_bpsk(self) -> float:
        return ber_bpsk(self.gamma)


def _moment_system(mu: np.ndarray, sigma2: float, rank: int):
    idx = np.arange(1, rank + 1)
    s = idx[:, None] + idx[None, :]
    big_phi = mu[..., s] + sigma2 * mu[..., s - 1]
    small_phi = mu[..., idx]
    return big_phi, small_phi


def build_weight_system(moments: MomentTable, sigma2: float, rank: int):
    """Return ``(Phi, phi)`` for filter rank ``L = rank``."""
    if rank < 1:
        raise DomainError("rank must be >= 1")
    if moments.order < 2 * rank:
        raise DomainError(f"rank {rank} needs moments up to {2 * rank}, table has {moments.order}")
    if sigma2 < 0:
        raise DomainError("sigma2 must be non-negative")
    return _moment_system(moments.mu, sigma2, rank)


def solve_weights(big_phi, small_phi, *, noise_power: float = float("nan"),
                  provenance: str = "empirical-moments") -> DetectorWeights:
    """``w = Phi^-1 phi``.

    ``Phi`` is first equilibrated, ``S = D Phi D`` with ``D = diag(Phi)^-1/2``,
    which removes the geometric growth of the moments from the condition
    number.  ``S`` is solved by Cholesky, falling back to pivoted LDL^T.  The
    recorded condition estimate is that of ``S``.

    Raises :class:`ConditioningError` when ``S`` is numerically singular; the
    moment Hankel structure degenerates as ``L`` grows.
    """
    big_phi = np.asarray(big_phi, dtype=float)
    small_phi = np.asarray(small_phi, dtype=float)
    diag = np.diag(big_phi)
    if np.any(diag <= 0) or not np.all(np.isfinite(big_phi)):
        raise ConditioningError("weight system has a non-positive or non-finite diagonal",
                                condition=float("inf"))
    d = 1.0 / np.sqrt(diag)
    scaled = big_phi * d[:, None] * d[None, :]
    cond = float(np.linalg.cond(scaled))
    if not np.isfinite(cond) or cond >= COND_FAIL:
        raise ConditioningError(
            f"weight system is singular to working precision (cond={cond:.3e}); "
            "the moment Hankel matrix has degenerated, use a smaller filter rank",
            condition=cond,
        )
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned weight system (cond={cond:.3e})", RuntimeWarning, stacklevel=2)
    try:
        v = linalg.cho_solve(linalg.cho_factor(scaled), small_phi * d)
    except linalg.LinAlgError:
        v = linalg.solve(scaled, small_phi * d, assume_a="sym")
    return DetectorWeights(d * v, noise_power, provenance, cond)


def optimal_weights(moments: MomentTable, sigma2: float, rank: int) -> DetectorWeights:
    """MSE-optimal weights from a moment table (empirical or asymptotic)."""
    big_phi, small_phi = build_weight_system(moments, sigma2, rank)
    return solve_weights(big_phi, small_phi, noise_power=sigma2,
                         provenance=f"{moments.provenance}-moments")


def poly_detect(ch: ChannelRealization, y, w: DetectorWeights) -> np.ndarray:
    """Multistage ``H^H sum_l w_l B^l y``: alternate ``H^H`` and re-spreading by ``H``.

    ``y`` may be a vector (N,) or a batch (N, S).
    """
    h = ch.h
    y = np.asarray(y)
    if y.shape[0] != h.shape[0]:
        raise DomainError(f"y has {y.shape[0]} rows, channel has {h.shape[0]} antennas")
    hh = h.conj().T
    a = hh @ y
    out = w.coefficients[0] * a
    for wl in w.coefficients[1:]:
        a = hh @ (h @ a)
        out = out + wl * a
    return out


def lmmse_detect(ch: ChannelRealization, y, sigma2: float) -> np.ndarray:
    """``H^H (B + sigma2 I)^-1 y``."""
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    b = gram(ch) + sigma2 * np.eye(ch.n_rx)
    return ch.h.conj().T @ linalg.solve(b, y, assume_a="her")


def sinr_from_user_moments(coefficients, user_moments, sigma2: float) -> np.ndarray:
    """Output SINR from per-user moments ``[B^n]_kk``, vectorized over users.

    ``user_moments`` has shape (..., n_max+1) with ``n_max >= 2L``.
    Returns the raw ratio; denominators are not clamped.
    """
    w = np.asarray(coefficients, dtype=float)
    rank = w.size
    big, small = _moment_system(np.asarray(user_moments, dtype=float), sigma2, rank)
    signal = (small @ w) ** 2
    total = np.einsum("...ij,i,j->...", big, w, w)
    return signal / (total - signal)


def _check_denominator(gamma, method):
    gamma = np.asarray(gamma)
    if np.any(~np.isfinite(gamma)) or np.any(gamma < 0):
        raise NumericError(
            f"{method}: interference-plus-noise power is not positive; the per-user moment "
            "matrix lost positive semidefiniteness numerically",
            residual=float(np.nanmin(gamma)) if gamma.size else None,
        )


def sinr_exact(ch: ChannelRealization, w: DetectorWeights, k: int, sigma2: float | None = None) -> SinrReport:
    """SINR of user ``k`` at the polynomial detector output for a fixed channel."""
    sigma2 = w.noise_power if sigma2 is None else sigma2
    if not np.isfinite(sigma2):
        raise DomainError("noise power unknown: pass sigma2")
    mom = np.real(empirical_user_moments(ch, k, 2 * w.rank))
    gamma = float(sinr_from_user_moments(w.coefficients, mom, sigma2))
    method = "matched" if w.rank == 1 else f"poly({w.rank})"
    _check_denominator(gamma, method)
    return SinrReport(k, gamma, method, 1.0 / sigma2)


def sinr_asymptotic(per_user_moments, w: DetectorWeights, sigma2: float, k: int) -> SinrReport:
    """Deterministic SINR approximation from per-user deterministic moments."""
    mom = np.asarray(per_user_moments)
    if mom.ndim == 2:
        mom = mom[k]
    if mom.size < 2 * w.rank + 1:
        raise DomainError(f"need per-user moments up to {2 * w.rank}")
    gamma = float(sinr_from_user_moments(w.coefficients, mom, sigma2))
    method = f"poly-asymptotic({w.rank})"
    _check_denominator(gamma, method)
    return SinrReport(k, gamma, method, 1.0 / sigma2)


def lmmse_sinr_exact(ch: ChannelRealization, sigma2: float, k: int) -> SinrReport:
    """``h_k^H (B - h_k h_k^H + sigma2 I)^-1 h_k``."""
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    hk = ch.h[:, k]
    b = gram(ch) - np.outer(hk, hk.conj()) + sigma2 * np.eye(ch.n_rx)
    gamma = float(np.real(np.vdot(hk, linalg.solve(b, hk, assume_a="her"))))
    return SinrReport(k, gamma, "lmmse", 1.0 / sigma2)


def lmmse_sinr_all(g: np.ndarray, sigma2: float) -> np.ndarray:
    """LMMSE SINR of every user from ``G = H^H H``: ``1/[(I + G/sigma2)^-1]_kk - 1``."""
    k = g.shape[0]
    m = np.eye(k) + g / sigma2
    inv = linalg.cho_solve(linalg.cho_factor(m), np.eye(k, dtype=m.dtype))
    return 1.0 / np.real(np.diagonal(inv)) - 1.0


def ber_bpsk(gamma):
    """``Q(sqrt(gamma)) = erfc(sqrt(gamma / 2)) / 2``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise DomainError("gamma must be non-negative")
    out = 0.5 * erfc(np.sqrt(gamma / 2))
    return float(out) if out.ndim == 0 else out


def monte_carlo_sinr_all(ch: ChannelRealization, detector, sigma2: float, n_samples: int,
                         seed, batch: int = 100_000) -> np.ndarray:
    """Estimate every user's output SINR by simulating symbols and noise.

    ``detector`` maps received vectors (N, S) to estimates (K, S).  Symbols
    are QPSK with unit power.  The effective gain ``g_kk`` on ``x_k`` is read
    off by probing the detector with ``H``; the rest of the output power is
    interference plus noise.
    """
    rng = make_rng(seed)
    h = ch.h
    n, k = h.shape
    gain = np.diagonal(detector(h)).copy()
    err = np.zeros(k)
    done = 0
    while done < n_samples:
        s = min(batch, n_samples - done)
        bits = rng.integers(0, 2, size=(2, k, s))
        x = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2)
        noise = rng.standard_normal((2, n, s))
        noise = np.sqrt(sigma2 / 2) * (noise[0] + 1j * noise[1])
        out = detector(h @ x + noise)
        err += np.sum(np.abs(out - gain[:, None] * x) ** 2, axis=1)
        done += s
    return np.abs(gain) ** 2 / (err / n_samples)


def monte_carlo_sinr(ch: ChannelRealization, detector, k: int, sigma2: float, n_samples: int,
                     seed, batch: int = 100_000) -> float:
    """Monte Carlo SINR of user ``k``; see :func:`monte_carlo_sinr_all`."""
    return float(monte_carlo_sinr_all(ch, detector, sigma2, n_samples, seed, batch)[k])
