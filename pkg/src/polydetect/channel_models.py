"""Correlation profiles and random channel draws.

A channel matrix ``H`` (N x K) has columns

    h_j = R_j w_j / sqrt(K)

where ``R_j`` is a deterministic N x N matrix and ``w_j`` has i.i.d. zero-mean,
unit-variance entries.  The matrices ``R_j`` are kept as a small set of
distinct base matrices plus a column -> base assignment and an optional
per-column real scale, so ``R_j = scales[j] * distinct_matrices[assignment[j]]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .errors import DomainError, QuadratureError
from .rng import SeedLike, make_rng, seed_key

PROFILE_FORMAT = "polydetect.profile/1"

#: Entry laws accepted by :func:`draw_channel`.  Both are zero mean, unit
#: variance (E|w|^2 = 1) and have all moments finite.
ENTRY_DISTRIBUTIONS = ("gaussian", "uniform")

_GL_ORDER = 32


class ColumnGroups(NamedTuple):
    """Columns sharing the same ``R_j R_j^H``.

    grams : (G, N, N) complex array of the distinct ``R_j R_j^H``
    counts : (G,) int array, number of columns in each group
    index : (K,) int array, group of each column
    """

    grams: np.ndarray
    counts: np.ndarray
    index: np.ndarray


@dataclass
class CorrelationProfile:
    """Per-transmitter correlation structure ``{R_j}``.

    Parameters
    ----------
    distinct_matrices : array_like, shape (M, N, N)
        The distinct factors ``R~_m`` (not the products ``R~_m R~_m^H``).
    assignment : array_like of int, shape (K,)
        ``assignment[j] = m`` such that ``R_j`` is built from ``R~_m``.
    scales : array_like of float, shape (K,), optional
        Non-negative real scale applied to column ``j``; defaults to ones.
    """

    distinct_matrices: np.ndarray
    assignment: np.ndarray
    scales: Optional[np.ndarray] = None
    gram_cache: Optional[np.ndarray] = field(default=None, repr=False)
    spectral_norms: np.ndarray = field(init=False, repr=False)
    _groups: Optional[ColumnGroups] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        mats = np.asarray(self.distinct_matrices, dtype=complex)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] < 1:
            raise DomainError(f"distinct_matrices must have shape (M, N, N), got {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise DomainError("distinct_matrices contain non-finite entries")
        assignment = np.asarray(self.assignment, dtype=np.int64).reshape(-1)
        if assignment.size < 1:
            raise DomainError("profile needs at least one column")
        if assignment.min() < 0 or assignment.max() >= mats.shape[0]:
            raise DomainError("assignment index out of range [0, M)")
        if self.scales is None:
            scales = np.ones(assignment.size)
        else:
            scales = np.asarray(self.scales, dtype=float).reshape(-1)
            if scales.shape != assignment.shape:
                raise DomainError("scales must have one entry per column")
            if np.any(scales < 0) or not np.all(np.isfinite(scales)):
                raise DomainError("scales must be finite and non-negative")
        self.distinct_matrices = mats
        self.assignment = assignment
        self.scales = scales
        if self.gram_cache is None:
            self.gram_cache = mats @ mats.conj().transpose(0, 2, 1)
        # ||R R^H||_2 = ||R||_2^2
        self.spectral_norms = np.array([np.linalg.norm(r, 2) ** 2 for r in mats])

    @property
    def n_rx(self) -> int:
        return self.distinct_matrices.shape[1]

    @property
    def n_tx(self) -> int:
        return self.assignment.size

    @property
    def n_distinct(self) -> int:
        return self.distinct_matrices.shape[0]

    def column_matrix(self, j: int) -> np.ndarray:
        """Return ``R_j``."""
        return self.scales[j] * self.distinct_matrices[self.assignment[j]]

    def column_gram(self, j: int) -> np.ndarray:
        """Return ``R_j R_j^H``."""
        return self.scales[j] ** 2 * self.gram_cache[self.assignment[j]]

    def column_groups(self) -> ColumnGroups:
        """Group columns by identical ``(assignment, scale)`` pairs."""
        if self._groups is None:
            pairs = np.stack([self.assignment.astype(float), self.scales], axis=1)
            uniq, index = np.unique(pairs, axis=0, return_inverse=True)
            index = np.asarray(index).reshape(-1)
            grams = np.stack(
                [s ** 2 * self.gram_cache[int(m)] for m, s in uniq]
            )
            counts = np.bincount(index, minlength=len(uniq))
            self._groups = ColumnGroups(grams, counts, index)
        return self._groups

    def to_dict(self) -> dict:
        def enc(a):
            return [[[float(v.real), float(v.imag)] for v in row] for row in a]

        return {
            "format": PROFILE_FORMAT,
            "n_rx": self.n_rx,
            "n_tx": self.n_tx,
            "assignment": self.assignment.tolist(),
            "scales": self.scales.tolist(),
            "spectral_norms": self.spectral_norms.tolist(),
            "distinct_matrices": [enc(r) for r in self.distinct_matrices],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelationProfile":
        if data.get("format") != PROFILE_FORMAT:
            raise DomainError(f"unsupported profile format {data.get('format')!r}")
        mats = np.array(
            [[[complex(re, im) for re, im in row] for row in m] for m in data["distinct_matrices"]]
        )
        prof = cls(mats, data["assignment"], data.get("scales"))
        if prof.n_rx != data["n_rx"] or prof.n_tx != data["n_tx"]:
            raise DomainError("profile dimensions do not match stored matrices")
        return prof

    def save(self, path) -> None:
        """Write the profile as ``.profile.json``."""
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "CorrelationProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ChannelRealization:
    """One draw of ``H``; ``gram`` is filled lazily by :func:`gram`."""

    h: np.ndarray
    innovations: np.ndarray
    seed: tuple
    entry_distribution: str = "gaussian"
    gram: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_rx(self) -> int:
        return self.h.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h.shape[1]


def _dedup(mats: np.ndarray):
    """Exact-bytes deduplication; returns (unique matrices, assignment)."""
    seen: dict[bytes, int] = {}
    uniq = []
    assignment = []
    for m in mats:
        key = np.ascontiguousarray(m).tobytes()
        if key not in seen:
            seen[key] = len(uniq)
            uniq.append(m)
        assignment.append(seen[key])
    return np.stack(uniq), np.array(assignment)


def make_identity_profile(n_rx: int, n_tx: int) -> CorrelationProfile:
    """All ``R_j = I_N`` (the Marchenko-Pastur case)."""
    return CorrelationProfile(np.eye(n_rx)[None], np.zeros(n_tx, dtype=int))


def make_distributed_antenna_profile(distances, powers, pathloss_exponent: float) -> CorrelationProfile:
    """Diagonal profile ``R_j = diag(sqrt(p_j) / d_ij^(beta/2))``.

    Parameters
    ----------
    distances : array_like, shape (N, K)
        Normalized distance between receive antenna ``i`` and transmitter ``j``.
    powers : array_like, shape (K,)
        Transmit powers.
    pathloss_exponent : float
        ``beta``.
    """
    d = np.atleast_2d(np.asarray(distances, dtype=float))
    p = np.atleast_1d(np.asarray(powers, dtype=float))
    if d.shape[1] != p.size:
        raise DomainError(f"distances has {d.shape[1]} columns but {p.size} powers given")
    if np.any(d <= 0) or np.any(p <= 0) or not pathloss_exponent > 0:
        raise DomainError("distances, powers and path loss exponent must be strictly positive")
    r = np.sqrt(p)[None, :] / d ** (pathloss_exponent / 2)
    mats = np.stack([np.diag(r[:, j]).astype(complex) for j in range(p.size)])
    uniq, assignment = _dedup(mats)
    return CorrelationProfile(uniq, assignment)


def psd_sqrt(theta, clip_tol: float = 1e-10) -> np.ndarray:
    """Hermitian PSD square root via eigendecomposition.

    Eigenvalues in ``[-clip_tol * ||theta||_2, 0)`` are treated as round-off
    and clipped to zero; anything more negative raises :class:`DomainError`.
    """
    theta = np.asarray(theta)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise DomainError("psd_sqrt expects a square matrix")
    theta = (theta + theta.conj().T) / 2
    lam, u = np.linalg.eigh(theta)
    scale = np.max(np.abs(lam)) if lam.size else 0.0
    if lam.size and lam[0] < -clip_tol * scale:
        raise DomainError(f"matrix is not PSD: smallest eigenvalue {lam[0]:.3e} (norm {scale:.3e})")
    root = (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.conj().T
    return (root + root.conj().T) / 2


def _lag_sums(phase, wts, lags, block=32):
    """``sum_x wts * exp(1j * d * phase)`` for every ``d`` in ``lags``.

    exp(i(d0 + r)p) = exp(i d0 p) * exp(i r p): one exp per block start and
    per in-block offset instead of one per (lag, node).
    """
    offsets = np.exp(1j * np.arange(block)[:, None] * phase[None, :]) * wts[None, :]
    out = np.empty(lags.size, dtype=complex)
    for start in range(0, lags.size, block):
        stop = min(start + block, lags.size)
        base = np.exp(1j * lags[start] * phase)
        out[start:stop] = offsets[: stop - start] @ base
    return out


def jakes_lag_correlations(
    n_lags: int,
    phi_min: float,
    phi_max: float,
    spacing_factor: float = 2.0,
    tol: float = 1e-10,
    max_panels: int = 1 << 12,
) -> np.ndarray:
    """Angular-spread correlation at antenna lags ``0 .. n_lags-1``.

    Computes ``(phi_max - phi_min)^-1 * int exp(2j*pi*s*d*cos x) dx`` over
    ``[phi_min, phi_max]`` for ``d = 0 .. n_lags-1``, where ``s`` is the
    antenna spacing in wavelengths.  Composite 32-point Gauss-Legendre; the
    panel count doubles until two successive rules agree to ``tol``
    (absolute, all lags).
    """
    width = phi_max - phi_min
    lags = np.arange(n_lags)
    x0, w0 = np.polynomial.legendre.leggauss(_GL_ORDER)
    panels = 1
    prev = None
    residual = np.inf
    while panels <= max_panels:
        edges = phi_min + width * np.arange(panels) / panels
        x = (edges[:, None] + (x0[None, :] + 1) * width / (2 * panels)).ravel()
        wts = np.tile(w0, panels) / (2 * panels)  # sums to 1
        phase = 2 * np.pi * spacing_factor * np.cos(x)
        cur = _lag_sums(phase, wts, lags)
        if prev is not None:
            residual = np.max(np.abs(cur - prev))
            if residual <= tol:
                cur[0] = 1.0
                return cur
        prev = cur
        panels *= 2
    raise QuadratureError(
        f"Jakes quadrature did not reach tol={tol:g} with {max_panels} panels", residual=residual
    )


def jakes_correlation(n_rx: int, phi_min: float, phi_max: float, spacing_factor: float = 2.0,
                      tol: float = 1e-10) -> np.ndarray:
    """Toeplitz-Hermitian ``Theta`` for one angular interval."""
    if not (phi_min <= 0 <= phi_max) or phi_min == phi_max:
        raise DomainError(f"need phi_min <= 0 <= phi_max and phi_min != phi_max, got ({phi_min}, {phi_max})")
    c = jakes_lag_correlations(n_rx, phi_min, phi_max, spacing_factor, tol)
    return toeplitz(c, c.conj())


def draw_angle_intervals(count: int, seed: SeedLike) -> np.ndarray:
    """Draw ``count`` intervals with ``phi_min ~ U[-pi, 0]`` and ``phi_max ~ U[0, pi]``."""
    rng = make_rng(seed)
    lo = rng.uniform(-np.pi, 0.0, size=count)
    hi = rng.uniform(0.0, np.pi, size=count)
    return np.stack([lo, hi], axis=1)


def make_jakes_profile(
    n_rx: int,
    n_tx: int,
    angle_intervals=None,
    *,
    seed: SeedLike | None = None,
    antenna_spacing_factor: float = 2.0,
    quadrature_tolerance: float = 1e-10,
    n_distinct: int | None = None,
) -> CorrelationProfile:
    """Extended Jakes profile, ``R_j = Theta_j^(1/2)``.

    Either pass ``angle_intervals`` (shape (M, 2), M = K or M distinct
    intervals shared round-robin) or a ``seed`` to draw them.  With
    ``n_distinct=M`` only M intervals are drawn and column ``j`` uses interval
    ``j % M``.
    """
    if angle_intervals is None:
        if seed is None:
            raise DomainError("provide angle_intervals or seed")
        angle_intervals = draw_angle_intervals(n_distinct or n_tx, seed)
    intervals = np.asarray(angle_intervals, dtype=float).reshape(-1, 2)
    m = intervals.shape[0]
    if m > n_tx:
        raise DomainError(f"got {m} intervals for {n_tx} transmitters")
    mats = np.stack([
        psd_sqrt(jakes_correlation(n_rx, lo, hi, antenna_spacing_factor, quadrature_tolerance))
        for lo, hi in intervals
    ])
    assignment = np.arange(n_tx) % m
    uniq, remap = _dedup(mats)
    grams = np.stack([r @ r.conj().T for r in uniq])
    return CorrelationProfile(uniq, remap[assignment], gram_cache=grams)


def make_mimo_mac_profile(rx_correlations: Sequence, tx_correlations: Sequence) -> CorrelationProfile:
    """MIMO multiple-access profile from per-link receive/transmit correlations.

    Transmitter ``m`` has ``K_m`` antennas; its ``i``-th antenna becomes column
    ``j`` with ``R_j = Phi_R,m^(1/2) * sqrt([Phi_T,m]_ii)``.  Only the M receive
    square roots are stored; the transmit factors go into ``scales``.
    """
    if len(rx_correlations) != len(tx_correlations) or not rx_correlations:
        raise DomainError("need one transmit correlation per receive correlation")
    n = None
    bases, assignment, scales = [], [], []
    for m, (phi_r, phi_t) in enumerate(zip(rx_correlations, tx_correlations)):
        phi_r = np.asarray(phi_r, dtype=complex)
        phi_t = np.atleast_2d(np.asarray(phi_t))
        if n is None:
            n = phi_r.shape[0]
        if phi_r.shape != (n, n):
            raise DomainError(f"receive correlation {m} has shape {phi_r.shape}, expected {(n, n)}")
        if phi_t.shape[0] != phi_t.shape[1]:
            raise DomainError(f"transmit correlation {m} is not square")
        if np.any(phi_t - np.diag(np.diag(phi_t))):
            raise DomainError(f"transmit correlation {m} is not diagonal")
        t = np.real_if_close(np.diag(phi_t))
        if np.iscomplexobj(t) or np.any(t < 0):
            raise DomainError(f"transmit correlation {m} must be non-negative real")
        bases.append(psd_sqrt(phi_r))
        assignment.extend([m] * t.size)
        scales.extend(np.sqrt(t.astype(float)))
    return CorrelationProfile(np.stack(bases), assignment, np.array(scales))


def draw_innovations(shape, seed: SeedLike, distribution: str = "gaussian") -> np.ndarray:
    """I.i.d. complex entries with zero mean and ``E|w|^2 = 1``.

    ``gaussian``: standard circular complex Gaussian.  ``uniform``: independent
    real and imaginary parts, each uniform on ``[-sqrt(3/2), sqrt(3/2)]``.
    """
    rng = make_rng(seed)
    if distribution == "gaussian":
        z = rng.standard_normal((2,) + tuple(shape))
        return (z[0] + 1j * z[1]) / np.sqrt(2)
    if distribution == "uniform":
        a = np.sqrt(1.5)
        z = rng.uniform(-a, a, size=(2,) + tuple(shape))
        return z[0] + 1j * z[1]
    raise DomainError(f"unknown entry distribution {distribution!r}; choose from {ENTRY_DISTRIBUTIONS}")


def build_channel(profile: CorrelationProfile, w: np.ndarray) -> np.ndarray:
    """``H`` with columns ``R_j w_j / sqrt(K)`` for a given innovation matrix."""
    h = np.empty((profile.n_rx, profile.n_tx), dtype=complex)
    for m in range(profile.n_distinct):
        cols = np.flatnonzero(profile.assignment == m)
        if cols.size:
            h[:, cols] = (profile.distinct_matrices[m] @ w[:, cols]) * profile.scales[cols]
    return h / np.sqrt(profile.n_tx)


def draw_channel(profile: CorrelationProfile, rng_seed: SeedLike,
                 distribution_tag: str = "gaussian") -> ChannelRealization:
    """Draw one channel realization; deterministic given ``rng_seed``."""
    key = seed_key(rng_seed)
    w = draw_innovations((profile.n_rx, profile.n_tx), key, distribution_tag)
    return ChannelRealization(build_channel(profile, w), w, key, distribution_tag)


def gram(ch: ChannelRealization) -> np.ndarray:
    """``B = H H^H``, cached on the realization."""
    if ch.gram is None:
        b = ch.h @ ch.h.conj().T
        ch.gram = (b + b.conj().T) / 2
    return ch.gram
