"""Deterministic and empirical moments of ``B = H H^H``.

The deterministic moments come from a recursion on the Taylor coefficients
(at 0) of the resolvent-type matrix function ``T(z)``.  We store every
quantity divided by ``(-1)^n n!``::

    A_n = (-1)^n / n! * T_n      q_n = (-1)^n / n! * Q_n
    f_n = (-1)^n / n! * f_{k,n}  d_n = (-1)^n / n! * delta_{k,n}

which removes the binomials and keeps magnitudes geometric in ``n``::

    A_{n+1} = 1/(n+1) sum_{i<=n} sum_{j<=i} (i-j+1) A_{n-i} q_{i-j+1} A_j
    q_{n+1} = -(1/K) sum_k f_{k,n} R_k R_k^H
    f_{k,n+1} = -1/(n+1) sum_{i<=n} sum_{j<=i} (n-i+1) f_{k,j} f_{k,i-j} d_{k,n-i}
    d_{k,n+1} = (1/K) tr(R_k R_k^H A_{n+1})

with ``A_0 = I``, ``f_{k,0} = -1``, ``d_{k,0} = tr(R_k R_k^H) / K``.  The
deterministic moments are then ``mu_n = tr(A_n) / N``.

Cost is dominated by the matrix double convolution.  Splitting it as
``A_{n+1} = 1/(n+1) sum_i A_{n-i} G_i`` with
``G_i = sum_{j<=i} (i-j+1) q_{i-j+1} A_j`` (independent of ``n``) makes it
``O(n_max^2)`` N x N products overall.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel_models import ChannelRealization, CorrelationProfile, gram
from .errors import DomainError


def _herm(x):
    return (x + x.conj().T) / 2


def _tr_prod(a, b):
    """``tr(a @ b)`` without forming the product."""
    return np.einsum("ij,ji->", a, b)


@dataclass(frozen=True)
class MomentRecursionState:
    """Scaled recursion coefficients up to ``order``.

    ``f_hat`` and ``delta_hat`` are indexed by column group (columns with the
    same ``R_k R_k^H``), see :meth:`CorrelationProfile.column_groups`;
    ``group_index[k]`` maps a column to its row.
    """

    order: int
    n_rx: int
    n_tx: int
    A_hat: tuple
    q_hat: tuple  # q_hat[0] is unused (None); q_hat[n] for n = 1..order
    f_hat: np.ndarray
    delta_hat: np.ndarray
    group_index: np.ndarray
    group_counts: np.ndarray


@dataclass
class MomentTable:
    """Moments ``mu_0 .. mu_n`` (global) and optionally per user."""

    mu: np.ndarray
    provenance: str
    n_rx: int
    n_tx: int
    per_user: Optional[np.ndarray] = None
    rank: Optional[int] = None

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.provenance not in ("empirical", "asymptotic"):
            raise DomainError(f"unknown provenance {self.provenance!r}")
        if self.per_user is not None:
            self.per_user = np.asarray(self.per_user, dtype=float)

    @property
    def order(self) -> int:
        return self.mu.size - 1

    def hankel(self, size: int) -> np.ndarray:
        """``[mu_{i+j}]`` for ``i, j = 1..size``."""
        if 2 * size > self.order:
            raise DomainError(f"need moments up to {2 * size}, have {self.order}")
        idx = np.arange(1, size + 1)
        return self.mu[idx[:, None] + idx[None, :]]

    def to_csv(self, path) -> None:
        """Write columns ``n, mu_global, mu_user_1..mu_user_K, provenance, N, K``."""
        n_users = 0 if self.per_user is None else self.per_user.shape[0]
        header = ["n", "mu_global"] + [f"mu_user_{k + 1}" for k in range(n_users)] + [
            "provenance", "N", "K"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(header)
            for n, m in enumerate(self.mu):
                users = []
                if self.per_user is not None:
                    if n < self.per_user.shape[1]:
                        users = [repr(float(v)) for v in self.per_user[:, n]]
                    else:
                        users = [""] * n_users
                writer.writerow([n, repr(float(m))] + users + [self.provenance, self.n_rx, self.n_tx])

    @classmethod
    def from_csv(cls, path) -> "MomentTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        users = sorted((c for c in rows[0] if c.startswith("mu_user_")),
                       key=lambda c: int(c.rsplit("_", 1)[1]))
        mu = np.array([float(r["mu_global"]) for r in rows])
        per_user = None
        if users:
            per_user = np.array([[float(r[c]) for r in rows if r[c] != ""] for c in users])
        return cls(mu, rows[0]["provenance"], int(rows[0]["N"]), int(rows[0]["K"]), per_user)


def _next_f_hat(f, d, n):
    """Scaled ``f_{.,n+1}`` from columns ``0..n`` of ``f`` and ``d`` (vectorized over groups)."""
    acc = np.zeros(f.shape[0])
    for i in range(n + 1):
        conv = np.zeros(f.shape[0])
        for j in range(i + 1):
            conv += f[:, j] * f[:, i - j]
        acc += (n - i + 1) * conv * d[:, n - i]
    return -acc / (n + 1)


def compute_recursion(profile: CorrelationProfile, n_max: int) -> MomentRecursionState:
    """Run the scaled moment recursion up to order ``n_max``."""
    if n_max < 0:
        raise DomainError("n_max must be >= 0")
    groups = profile.column_groups()
    grams, counts = groups.grams, groups.counts
    n, k = profile.n_rx, profile.n_tx
    weights = counts / k

    a = [np.eye(n, dtype=complex)]
    q = [None]
    g_terms = []
    f = np.zeros((len(counts), n_max + 1))
    d = np.zeros((len(counts), n_max + 1))
    f[:, 0] = -1.0
    d[:, 0] = np.real(np.trace(grams, axis1=1, axis2=2)) / k

    for step in range(n_max):
        # q_{step+1} needs f_{., step}
        q.append(_herm(-np.tensordot(weights * f[:, step], grams, axes=1)))
        g = np.zeros((n, n), dtype=complex)
        for j in range(step + 1):
            g += (step - j + 1) * (q[step - j + 1] @ a[j])
        g_terms.append(g)
        acc = np.zeros((n, n), dtype=complex)
        for i in range(step + 1):
            acc += a[step - i] @ g_terms[i]
        a.append(_herm(acc / (step + 1)))
        d[:, step + 1] = np.real(np.einsum("gij,ji->g", grams, a[-1])) / k
        f[:, step + 1] = _next_f_hat(f, d, step)

    return MomentRecursionState(
        order=n_max, n_rx=n, n_tx=k, A_hat=tuple(a), q_hat=tuple(q),
        f_hat=f, delta_hat=d, group_index=groups.index, group_counts=counts,
    )


def global_moments(state: MomentRecursionState) -> MomentTable:
    """``mu_n = tr(A_n) / N`` for ``n = 0..order``."""
    mu = np.array([np.real(np.trace(a)) / state.n_rx for a in state.A_hat])
    return MomentTable(mu, "asymptotic", state.n_rx, state.n_tx)


def weighted_moments(state: MomentRecursionState, d) -> np.ndarray:
    """``tr(D A_n) / N``, the deterministic counterpart of ``tr(D B^n) / N``."""
    d = np.asarray(d)
    return np.array([np.real(_tr_prod(d, a)) / state.n_rx for a in state.A_hat])


def per_user_moments(state: MomentRecursionState, n_max: int) -> np.ndarray:
    """Deterministic per-user moments, shape ``(K, n_max + 1)``.

    ``mu^k_0 = 1`` and ``mu^k_n = sum_{i<n} mu^k_{n-1-i} * d_{k,i}``; this is
    the approximation of ``h_k^H B^(n-1) h_k``.
    """
    if n_max < 0:
        raise DomainError("n_max must be >= 0")
    if state.order < n_max - 1:
        raise DomainError(f"recursion order {state.order} too small for per-user order {n_max}")
    d = state.delta_hat
    mu = np.zeros((d.shape[0], n_max + 1))
    mu[:, 0] = 1.0
    for n in range(1, n_max + 1):
        mu[:, n] = sum(mu[:, n - 1 - i] * d[:, i] for i in range(n))
    return mu[state.group_index]


def asymptotic_table(profile: CorrelationProfile, n_max: int, with_users: bool = True) -> MomentTable:
    """Convenience: recursion, global and (optionally) per-user moments in one table."""
    state = compute_recursion(profile, n_max)
    table = global_moments(state)
    if with_users:
        table.per_user = per_user_moments(state, n_max)
    return table


def _power_traces(b: np.ndarray, n_max: int) -> np.ndarray:
    out = np.empty(n_max + 1)
    out[0] = b.shape[0]
    p = np.eye(b.shape[0], dtype=b.dtype)
    for n in range(1, n_max + 1):
        p = b @ p
        out[n] = np.real(np.trace(p))
    return out


def empirical_moments(b, n_max: int) -> MomentTable:
    """``mu_n = tr(B^n) / N`` by iterated multiplication."""
    b = np.asarray(b)
    mu = _power_traces(b, n_max) / b.shape[0]
    return MomentTable(mu, "empirical", b.shape[0], 0)


def channel_moments(ch: ChannelRealization, n_max: int, with_users: bool = False) -> MomentTable:
    """Empirical moments of a realization, using the smaller of ``HH^H`` and ``H^H H``.

    ``tr (HH^H)^n = tr (H^H H)^n`` for ``n >= 1``; the per-user values
    ``h_k^H B^(n-1) h_k`` are the diagonal of ``(H^H H)^n``.
    """
    n, k = ch.h.shape
    if with_users or k < n:
        g = ch.h.conj().T @ ch.h
        g = (g + g.conj().T) / 2
        mu = _power_traces(g, n_max) / n
        mu[0] = 1.0
        table = MomentTable(mu, "empirical", n, k)
        if with_users:
            table.per_user = gram_user_moments(g, n_max)
        return table
    table = empirical_moments(gram(ch), n_max)
    table.n_tx = k
    return table


def gram_user_moments(g: np.ndarray, n_max: int) -> np.ndarray:
    """``[G^n]_kk`` for ``n = 0..n_max`` from ``G = H^H H``, shape (K, n_max+1)."""
    out = np.empty((g.shape[0], n_max + 1))
    out[:, 0] = 1.0
    p = g
    for n in range(1, n_max + 1):
        out[:, n] = np.real(np.diagonal(p))
        if n < n_max:
            p = p @ g
    return out


def empirical_user_moments(ch: ChannelRealization, k: int, n_max: int) -> np.ndarray:
    """Krylov quadratic forms ``h_k^H B^(n-1) h_k`` for ``n = 0..n_max``.

    Value 0 is defined as 1.  Returns a complex array; the imaginary parts are
    round-off only.
    """
    h = ch.h
    hk = h[:, k]
    out = np.empty(n_max + 1, dtype=complex)
    out[0] = 1.0
    u = hk
    for n in range(1, n_max + 1):
        out[n] = np.vdot(hk, u)
        u = h @ (h.conj().T @ u)
    return out
