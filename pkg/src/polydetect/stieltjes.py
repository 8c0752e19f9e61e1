"""Deterministic equivalent of the resolvent on the negative real axis.

For ``z < 0`` solve

    T(z) = ( (1/K) sum_j R_j R_j^H / (1 + delta_j) - z I )^-1
    delta_j = (1/K) tr(R_j R_j^H T(z))

by Picard iteration over the distinct ``R_j R_j^H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .channel_models import CorrelationProfile
from .errors import ConvergenceError, DomainError


@dataclass(frozen=True)
class FixedPointSolution:
    z: float
    t_matrix: np.ndarray
    deltas: np.ndarray  # one per column group
    group_index: np.ndarray
    iterations: int
    residual: float

    def column_deltas(self) -> np.ndarray:
        """``delta_j`` for every column ``j``."""
        return self.deltas[self.group_index]


def _t_matrix(grams, weights, deltas, z):
    n = grams.shape[1]
    m = np.tensordot(weights / (1.0 + deltas), grams, axes=1) - z * np.eye(n)
    m = (m + m.conj().T) / 2
    try:
        c = cho_factor(m)
        t = cho_solve(c, np.eye(n, dtype=m.dtype))
    except LinAlgError:
        t = np.linalg.inv(m)
    return (t + t.conj().T) / 2


def _deltas(grams, t, k):
    return np.real(np.einsum("gij,ji->g", grams, t)) / k


def solve(
    profile: CorrelationProfile,
    z: float,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    damping: float = 0.0,
) -> FixedPointSolution:
    """Solve the fixed point at real ``z < 0``.

    Starts from ``delta_m = tr(R_m R_m^H) / K`` and iterates
    ``delta <- (1 - damping) * F(delta) + damping * delta`` until the largest
    relative change is at most ``tol``.
    """
    if not z < 0:
        raise DomainError(f"z must be negative, got {z}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    if not 0 <= damping < 1:
        raise DomainError("damping must be in [0, 1)")
    groups = profile.column_groups()
    grams = groups.grams
    k = profile.n_tx
    weights = groups.counts / k
    deltas = np.real(np.trace(grams, axis1=1, axis2=2)) / k
    residual = np.inf
    for it in range(1, max_iter + 1):
        t = _t_matrix(grams, weights, deltas, z)
        new = _deltas(grams, t, k)
        if damping:
            new = (1 - damping) * new + damping * deltas
        change = np.abs(new - deltas)
        scale = np.maximum(np.abs(deltas), np.finfo(float).tiny)
        residual = float(np.max(np.where(change == 0, 0.0, change / scale)))
        deltas = new
        if residual <= tol:
            t = _t_matrix(grams, weights, deltas, z)
            return FixedPointSolution(float(z), t, deltas, groups.index, it, residual)
    raise ConvergenceError(
        f"fixed point did not converge in {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
    )


def fixed_point_residual(profile: CorrelationProfile, sol: FixedPointSolution) -> float:
    """Largest relative defect of ``delta_m = tr(R_m R_m^H T) / K`` at the returned solution."""
    groups = profile.column_groups()
    t = _t_matrix(groups.grams, groups.counts / profile.n_tx, sol.deltas, sol.z)
    d = _deltas(groups.grams, t, profile.n_tx)
    scale = np.maximum(np.abs(sol.deltas), np.finfo(float).tiny)
    defect = np.abs(d - sol.deltas)
    return float(np.max(np.where(defect == 0, 0.0, defect / scale)))


def stieltjes_m(sol: FixedPointSolution) -> float:
    """``m(z) = tr T(z) / N``."""
    return float(np.real(np.trace(sol.t_matrix))) / sol.t_matrix.shape[0]


def lmmse_asymptotic_sinr(profile: CorrelationProfile, k, snr: float, **solve_kw):
    """Deterministic LMMSE SINR ``tr(R_k R_k^H T(-1/snr)) / K``.

    ``k`` may be an int or ``None`` for all users (returns an array).
    """
    if not snr > 0:
        raise DomainError("snr must be positive")
    sol = solve(profile, -1.0 / snr, **solve_kw)
    gammas = sol.column_deltas()
    return gammas if k is None else float(gammas[k])
