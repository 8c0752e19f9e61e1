import json
import math

import numpy as np
import pytest

from polydetect import experiment
from polydetect.config import ConfigError, ExperimentConfig
from polydetect.errors import ConditioningError
from polydetect.experiment import (
    CSV_HEADER,
    build_profile,
    read_rows_csv,
    run_ber_sweep,
    run_moment_report,
    run_sinr_sweep,
    sweep,
    write_meta,
    write_rows_csv,
)
from polydetect.moment_engine import MomentTable

SMALL = dict(scenario="identity-mp", n_rx=16, n_tx=8, L_values=[2, 3], snr_grid_db=[0, 10], trials=10)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.n_rx, cfg.n_tx, cfg.L_values, cfg.trials) == (100, 40, [2, 3, 6], 1000)

    @pytest.mark.parametrize("bad", [
        {"n_rx": 0}, {"trials": -1}, {"L_values": [9]}, {"L_values": []}, {"snr_grid_db": [float("nan")]},
        {"scenario": "rayleigh"}, {"weight_source": "oracle"}, {"sinr_eval": "guess"}, {"user": 8},
        {"entry_distribution": "cauchy"}, {"seed": -1}, {"n_rx": True},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**SMALL, **bad})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"n_rxx": 3})

    def test_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(SMALL))
        assert ExperimentConfig.from_file(path) == small()
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(path)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "missing.json")

    def test_overrides_and_hash(self):
        cfg = small()
        assert cfg.with_overrides(trials=None, seed=None) == cfg
        assert cfg.with_overrides(seed=3).seed == 3
        assert cfg.with_overrides(outputs="elsewhere", workers=4).sha256() == cfg.sha256()
        assert cfg.with_overrides(seed=3).sha256() != cfg.sha256()


@pytest.mark.parametrize("scenario,params", [
    ("jakes", {"n_distinct": 2}),
    ("distributed-antenna", {}),
    ("mimo-mac", {"n_links": 3}),
    ("identity-mp", {}),
])
def test_every_scenario_runs(scenario, params):
    cfg = small(scenario=scenario, scenario_params=params, n_rx=12, n_tx=6)
    rows, errors = sweep(cfg)
    assert not errors
    methods = {r.method for r in rows}
    assert {"matched", "poly(2)", "poly(3)", "lmmse", "lmmse-asymptotic", "poly-asymptotic(3)"} <= methods
    assert all(r.gamma_std >= 0 and r.gamma_mean > 0 for r in rows)


def test_profile_is_fixed_by_seed():
    cfg = small(scenario="jakes", n_rx=8, n_tx=4)
    a, b = build_profile(cfg), build_profile(cfg)
    np.testing.assert_array_equal(a.distinct_matrices, b.distinct_matrices)
    assert not np.array_equal(a.distinct_matrices, build_profile(cfg.with_overrides(seed=1)).distinct_matrices)


def test_csv_byte_identical(tmp_path):
    cfg = ExperimentConfig(scenario="identity-mp", n_rx=64, n_tx=64, L_values=[2], snr_grid_db=[10], trials=50)
    for name in ("a.csv", "b.csv"):
        write_rows_csv(run_sinr_sweep(cfg), tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_rows_csv(tmp_path / "a.csv")
    assert list(rows[0]) == CSV_HEADER
    assert (tmp_path / "a.csv").read_bytes().startswith(b"snr_db,method,L,user,gamma_mean,gamma_std,ber,trials,seed\r\n")


def test_worker_count_does_not_change_results():
    cfg = small(trials=12)
    one = [r.csv_fields() for r in run_sinr_sweep(cfg)]
    two = [r.csv_fields() for r in run_sinr_sweep(cfg.with_overrides(workers=2))]
    assert one == two


def test_ber_low_snr():
    rows = run_ber_sweep(small(snr_grid_db=[-10]))
    assert all(0.2 < r.ber < 0.5 for r in rows)


def test_single_user():
    rows = run_sinr_sweep(small(user=3))
    assert {r.user for r in rows} == {3}


@pytest.mark.parametrize("weights,evaluation", [("empirical", "exact-formula"), ("asymptotic", "monte-carlo"),
                                                ("empirical", "monte-carlo"), ("asymptotic", "asymptotic")])
def test_weight_and_eval_modes(weights, evaluation):
    cfg = small(weight_source=weights, sinr_eval=evaluation, trials=3, mc_symbols=500)
    rows, errors = sweep(cfg)
    assert not errors
    methods = {r.method for r in rows}
    assert ("poly(2)" in methods) == (evaluation != "asymptotic")
    assert ("poly-asymptotic(2)" in methods) == (weights == "asymptotic" or evaluation == "asymptotic")


def test_empirical_weights_beat_matched_filter():
    rows = run_sinr_sweep(small(weight_source="empirical", trials=30))
    by = {(r.snr_db, r.method): r.gamma_mean for r in rows}
    for s in (0, 10):
        assert by[(s, "matched")] < by[(s, "poly(2)")] < by[(s, "poly(3)")] <= by[(s, "lmmse")] * (1 + 1e-9)


def test_numeric_failure_is_recorded(monkeypatch):
    real = experiment.optimal_weights

    def flaky(table, s2, L):
        if L == 3:
            raise ConditioningError("forced", condition=1e20)
        return real(table, s2, L)

    monkeypatch.setattr(experiment, "optimal_weights", flaky)
    rows, errors = sweep(small(weight_source="empirical", trials=2))
    assert errors and all("poly(3)" in e for e in errors)
    bad = [r for r in rows if r.method == "poly(3)"]
    assert bad and all(math.isnan(r.gamma_mean) for r in bad)
    assert all(not math.isnan(r.gamma_mean) for r in rows if r.method != "poly(3)")


def test_meta_sidecar(tmp_path):
    cfg = small()
    write_meta(cfg, tmp_path / "m.json", kind="sinr-sweep", errors=["x"])
    meta = json.loads((tmp_path / "m.json").read_text())
    assert meta["seed"] == 0 and meta["config_sha256"] == cfg.sha256() and meta["errors"] == ["x"]


class TestMomentReport:
    def test_catalan(self):
        rows, table = run_moment_report(small(n_rx=32, n_tx=32, trials=3), n_max=6)
        np.testing.assert_allclose([r["mu_bar"] for r in rows], [1, 1, 2, 5, 14, 42, 132], rtol=1e-12)
        assert rows[0]["mu_mc_mean"] == 1.0 and rows[0]["rel_err_median"] == 0.0
        assert isinstance(table, MomentTable) and table.per_user.shape == (32, 7)
        assert sum(1 for key in rows[0] if key.endswith("_bar") and key.startswith("user_")) == 10

    def test_error_shrinks_with_dimension(self):
        errs = []
        for n in (128, 256, 512):
            rows, _ = run_moment_report(small(n_rx=n, n_tx=n // 2, trials=10), n_max=3)
            errs.append(rows[2]["rel_err_median"])
        assert errs[0] > errs[1] > errs[2]
