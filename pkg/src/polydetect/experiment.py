"""Monte Carlo sweeps over SNR and filter rank, and the moment report.

The correlation profile is drawn once per run from the ``(seed, STREAM_PROFILE)``
stream and kept fixed; trial ``t`` draws its channel from
``(seed, STREAM_CHANNEL, t)``, so results do not depend on how trials are
split between workers.  The same channel draws are reused at every SNR point.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .channel_models import (
    CorrelationProfile,
    draw_channel,
    make_distributed_antenna_profile,
    make_identity_profile,
    make_jakes_profile,
    make_mimo_mac_profile,
)
from .config import ExperimentConfig
from .detectors import (
    DetectorWeights,
    ber_bpsk,
    lmmse_detect,
    lmmse_sinr_all,
    monte_carlo_sinr_all,
    optimal_weights,
    poly_detect,
    sinr_from_user_moments,
)
from .errors import NumericError
from .moment_engine import MomentTable, compute_recursion, global_moments, gram_user_moments, per_user_moments
from .rng import STREAM_CHANNEL, STREAM_PROFILE, STREAM_SYMBOLS, make_rng
from .stieltjes import solve

log = logging.getLogger(__name__)

CSV_HEADER = ["snr_db", "method", "L", "user", "gamma_mean", "gamma_std", "ber", "trials", "seed"]


@dataclass
class ResultRow:
    snr_db: float
    method: str
    L: int
    user: object
    gamma_mean: float
    gamma_std: float
    ber: float
    trials: int
    seed: int
    provenance: str = ""
    error: Optional[str] = None

    def csv_fields(self) -> list:
        return [_fmt(self.snr_db), self.method, self.L, self.user, _fmt(self.gamma_mean),
                _fmt(self.gamma_std), _fmt(self.ber), self.trials, self.seed]


def _fmt(x) -> str:
    return repr(float(x))


def build_profile(cfg: ExperimentConfig) -> CorrelationProfile:
    """Draw the run's fixed correlation profile from the profile stream."""
    p = cfg.scenario_params
    key = (cfg.seed, STREAM_PROFILE)
    n, k = cfg.n_rx, cfg.n_tx
    if cfg.scenario == "identity-mp":
        return make_identity_profile(n, k)
    if cfg.scenario == "jakes":
        return make_jakes_profile(
            n, k, p.get("angle_intervals"), seed=key,
            antenna_spacing_factor=p.get("spacing_factor", 2.0),
            n_distinct=p.get("n_distinct"),
        )
    rng = make_rng(key)
    if cfg.scenario == "distributed-antenna":
        antennas = rng.uniform(size=(n, 2))
        users = rng.uniform(size=(k, 2))
        d = np.linalg.norm(antennas[:, None, :] - users[None, :, :], axis=2)
        d = np.maximum(d, p.get("min_distance", 0.05))
        powers = np.asarray(p.get("powers", np.ones(k)), dtype=float)
        return make_distributed_antenna_profile(d, powers, p.get("pathloss_exponent", 3.0))
    # mimo-mac
    m = int(p.get("n_links", 4))
    if not 1 <= m <= k:
        raise ValueError(f"n_links must be in [1, K], got {m}")
    sizes = [k // m + (1 if i < k % m else 0) for i in range(m)]
    rhos = rng.uniform(0.0, p.get("rho_max", 0.9), size=m)
    idx = np.arange(n)
    rx = [rho ** np.abs(idx[:, None] - idx[None, :]) for rho in rhos]
    tx = [np.diag(rng.uniform(p.get("gain_min", 0.5), p.get("gain_max", 1.5), size=s)) for s in sizes]
    return make_mimo_mac_profile(rx, tx)


@dataclass
class _Plan:
    """Everything fixed across trials: profile, weights and deterministic curves."""

    cfg: ExperimentConfig
    profile: CorrelationProfile
    ranks: list  # filter ranks incl. 1 (matched filter)
    n_max: int
    asym_weights: dict = field(default_factory=dict)  # (snr_idx, L) -> coefficients
    errors: list = field(default_factory=list)


def _sigma2(snr_db):
    return 10.0 ** (-snr_db / 10.0)


def _trial(plan: _Plan, t: int) -> dict:
    """Per-user SINRs of one channel draw at every SNR point, keyed by (snr_idx, method)."""
    cfg = plan.cfg
    ch = draw_channel(plan.profile, (cfg.seed, STREAM_CHANNEL, t), cfg.entry_distribution)
    g = ch.h.conj().T @ ch.h
    g = (g + g.conj().T) / 2
    um = gram_user_moments(g, plan.n_max)
    mu = None
    if cfg.weight_source == "empirical":
        mu = MomentTable(np.concatenate([[1.0], um[:, 1:].sum(axis=0) / cfg.n_rx]),
                         "empirical", cfg.n_rx, cfg.n_tx)
    out = {}
    for si, snr_db in enumerate(cfg.snr_grid_db):
        s2 = _sigma2(snr_db)
        for L in plan.ranks:
            name = _method(L)
            try:
                if mu is not None:
                    w = optimal_weights(mu, s2, L).coefficients
                else:
                    w = plan.asym_weights.get((si, L))
                    if w is None:
                        continue
                if cfg.sinr_eval == "monte-carlo":
                    wts = DetectorWeights(w, s2, cfg.weight_source)
                    det = lambda y, wts=wts: poly_detect(ch, y, wts)  # noqa: E731
                    gam = monte_carlo_sinr_all(ch, det, s2, cfg.mc_symbols,
                                               (cfg.seed, STREAM_SYMBOLS, t, si, L))
                else:
                    gam = sinr_from_user_moments(w, um, s2)
            except NumericError as exc:
                gam = np.full(cfg.n_tx, np.nan)
                out.setdefault("_errors", []).append(f"trial {t} snr {snr_db} {name}: {exc}")
            out[(si, name)] = gam
        if cfg.sinr_eval == "monte-carlo":
            det = lambda y: lmmse_detect(ch, y, s2)  # noqa: E731
            out[(si, "lmmse")] = monte_carlo_sinr_all(ch, det, s2, cfg.mc_symbols,
                                                      (cfg.seed, STREAM_SYMBOLS, t, si, 0))
        else:
            out[(si, "lmmse")] = lmmse_sinr_all(g, s2)
    return out


def _method(L: int) -> str:
    return "matched" if L == 1 else f"poly({L})"


def _run_trials(plan: _Plan) -> list:
    cfg = plan.cfg
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_trial, [plan] * cfg.trials, range(cfg.trials),
                                 chunksize=max(1, cfg.trials // (4 * cfg.workers))))
    return [_trial(plan, t) for t in range(cfg.trials)]


def _aggregate(values: np.ndarray, user) -> tuple[float, float, float]:
    """values: (trials, K).  Returns (mean, std, ber) for one user or pooled over users.

    Pooled std is the root-mean of the per-user variances across trials.
    """
    if user != "all":
        values = values[:, [user]]
    if np.any(~np.isfinite(values)):
        return math.nan, math.nan, math.nan
    mean = float(values.mean())
    std = float(np.sqrt(values.var(axis=0).mean()))
    ber = float(np.mean(ber_bpsk(np.clip(values, 0.0, None))))
    return mean, std, ber


def _deterministic_row(cfg, snr_db, method, L, gammas, provenance) -> ResultRow:
    g = np.asarray(gammas, dtype=float)
    if cfg.user != "all":
        g = g[[cfg.user]]
    return ResultRow(snr_db, method, L, cfg.user, float(g.mean()), 0.0,
                     float(np.mean(ber_bpsk(np.clip(g, 0.0, None)))), 0, cfg.seed, provenance)


def sweep(cfg: ExperimentConfig, profile: CorrelationProfile | None = None):
    """SINR (and BER) versus SNR for matched filter, polynomial detectors and LMMSE.

    Returns ``(rows, errors)``; numeric failures are logged in ``errors`` and
    leave NaN in the affected rows while the run continues.

    Emits simulated rows (``matched``, ``poly(L)``, ``lmmse``) unless
    ``sinr_eval == "asymptotic"``, and deterministic rows
    (``matched-asymptotic``, ``poly-asymptotic(L)``, ``lmmse-asymptotic``)
    unless ``weight_source == "empirical"`` and ``sinr_eval != "asymptotic"``.
    """
    profile = build_profile(cfg) if profile is None else profile
    ranks = sorted(set([1] + list(cfg.L_values)))
    n_max = 2 * max(ranks)
    plan = _Plan(cfg, profile, ranks, n_max)
    r = min(cfg.n_rx, cfg.n_tx)
    rows: list[ResultRow] = []

    need_asym = cfg.weight_source == "asymptotic" or cfg.sinr_eval == "asymptotic"
    asym_rows: dict = {}
    if need_asym:
        state = compute_recursion(profile, n_max)
        table = global_moments(state)
        user_mu = per_user_moments(state, n_max)
        for si, snr_db in enumerate(cfg.snr_grid_db):
            s2 = _sigma2(snr_db)
            for L in ranks:
                name = _method(L).replace("poly(", "poly-asymptotic(") if L > 1 else "matched-asymptotic"
                try:
                    w = optimal_weights(table, s2, L)
                    plan.asym_weights[(si, L)] = w.coefficients
                    gam = sinr_from_user_moments(w.coefficients, user_mu, s2)
                    asym_rows[(si, name)] = _deterministic_row(cfg, snr_db, name, L, gam, "asymptotic")
                except NumericError as exc:
                    plan.errors.append(f"snr {snr_db} {name}: {exc}")
                    asym_rows[(si, name)] = ResultRow(snr_db, name, L, cfg.user, math.nan, math.nan,
                                                      math.nan, 0, cfg.seed, "asymptotic", str(exc))
            sol = solve(profile, -s2)
            asym_rows[(si, "lmmse-asymptotic")] = _deterministic_row(
                cfg, snr_db, "lmmse-asymptotic", r, sol.column_deltas(), "asymptotic")

    sim: dict = {}
    if cfg.sinr_eval != "asymptotic":
        results = _run_trials(plan)
        for res in results:
            plan.errors.extend(res.pop("_errors", []))
        keys = [k for k in results[0]] if results else []
        for key in keys:
            sim[key] = np.stack([res[key] for res in results])

    provenance = f"weights={cfg.weight_source};sinr={cfg.sinr_eval}"
    for si, snr_db in enumerate(cfg.snr_grid_db):
        for L in ranks:
            name = _method(L)
            if (si, name) in sim:
                m, s, b = _aggregate(sim[(si, name)], cfg.user)
                rows.append(ResultRow(snr_db, name, L, cfg.user, m, s, b, cfg.trials, cfg.seed, provenance))
        if (si, "lmmse") in sim:
            m, s, b = _aggregate(sim[(si, "lmmse")], cfg.user)
            rows.append(ResultRow(snr_db, "lmmse", r, cfg.user, m, s, b, cfg.trials, cfg.seed, provenance))
        if cfg.weight_source == "asymptotic" or cfg.sinr_eval == "asymptotic":
            for key in sorted(k for k in asym_rows if k[0] == si):
                rows.append(asym_rows[key])
    for e in plan.errors:
        log.warning(e)
    return rows, list(plan.errors)


def run_sinr_sweep(cfg: ExperimentConfig, profile: CorrelationProfile | None = None) -> list[ResultRow]:
    """Rows of :func:`sweep` (SINR versus SNR, Fig.-1 style)."""
    return sweep(cfg, profile)[0]


def run_ber_sweep(cfg: ExperimentConfig, profile: CorrelationProfile | None = None) -> list[ResultRow]:
    """BER versus SNR: same rows as :func:`run_sinr_sweep`.

    Simulated rows carry the trial/user average of ``Q(sqrt(gamma))``;
    deterministic rows carry ``Q(sqrt(gamma_bar))`` averaged over users.
    """
    return sweep(cfg, profile)[0]


def run_moment_report(cfg: ExperimentConfig, n_max: int | None = None,
                      profile: CorrelationProfile | None = None):
    """Deterministic vs Monte Carlo moments.

    Returns ``(rows, table)`` where ``rows`` is a list of dicts, one per ``n``,
    and ``table`` is the deterministic :class:`MomentTable` with per-user
    moments.
    """
    n_max = cfg.moment_order if n_max is None else n_max
    profile = build_profile(cfg) if profile is None else profile
    state = compute_recursion(profile, n_max)
    table = global_moments(state)
    table.per_user = per_user_moments(state, n_max)
    rng = make_rng((cfg.seed, STREAM_PROFILE, 1))
    users = np.sort(rng.choice(cfg.n_tx, size=min(cfg.moment_users, cfg.n_tx), replace=False))

    mus = np.empty((cfg.trials, n_max + 1))
    umus = np.empty((cfg.trials, users.size, n_max + 1))
    for t in range(cfg.trials):
        ch = draw_channel(profile, (cfg.seed, STREAM_CHANNEL, t), cfg.entry_distribution)
        g = ch.h.conj().T @ ch.h
        um = gram_user_moments((g + g.conj().T) / 2, n_max)
        mus[t] = np.concatenate([[1.0], um[:, 1:].sum(axis=0) / cfg.n_rx])
        umus[t] = um[users]

    rows = []
    for n in range(n_max + 1):
        bar = table.mu[n]
        rel = np.abs(mus[:, n] - bar) / bar if bar > 0 else np.zeros(cfg.trials)
        row = {
            "n": n,
            "mu_bar": bar,
            "mu_mc_mean": mus[:, n].mean(),
            "mu_mc_std": mus[:, n].std(),
            "rel_err_mean": abs(mus[:, n].mean() - bar) / bar if bar > 0 else 0.0,
            "rel_err_median": float(np.median(rel)),
        }
        for i, k in enumerate(users):
            ubar = table.per_user[k, n]
            row[f"user_{k}_bar"] = ubar
            row[f"user_{k}_mc_mean"] = umus[:, i, n].mean()
            row[f"user_{k}_rel_err_median"] = (
                float(np.median(np.abs(umus[:, i, n] - ubar) / ubar)) if ubar > 0 else 0.0)
        rows.append(row)
    return rows, table


def write_rows_csv(rows: list[ResultRow], path) -> None:
    """RFC-4180 CSV with the fixed header ``snr_db,method,L,user,gamma_mean,gamma_std,ber,trials,seed``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row.csv_fields())


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) else _fmt(v) for v in row.values()])


def write_meta(cfg: ExperimentConfig, path, *, kind: str, errors=(), extra=None) -> None:
    """Sidecar JSON recording the seed, resolved config and its hash."""
    meta = {
        "kind": kind,
        "seed": cfg.seed,
        "config_sha256": cfg.sha256(),
        "package_version": __version__,
        "rng": "numpy Philox, keys (seed, stream, ...)",
        "config": cfg.to_dict(),
        "errors": list(errors),
    }
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
