"""Static figures written next to the CSV outputs.

Simulated rows are drawn as markers with +-1 std error bars, deterministic
(``*-asymptotic``) rows as solid lines.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": None}

_STYLE = {
    "matched": ("tab:gray", "o"),
    "lmmse": ("k", "s"),
}
_CYCLE = ["tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple", "tab:brown"]


def _base(method: str) -> tuple[str, bool]:
    """('matched' | 'poly(L)' | 'lmmse', is_asymptotic)."""
    if method.endswith("-asymptotic"):
        return method[: -len("-asymptotic")], True
    if method.startswith("poly-asymptotic("):
        return "poly(" + method[len("poly-asymptotic("):], True
    return method, False


def _series(rows, key):
    out: dict = {}
    for r in rows:
        d = r if isinstance(r, dict) else r.__dict__
        name, asym = _base(d["method"])
        val = float(d[key])
        if math.isnan(val):
            continue
        out.setdefault((name, asym), []).append(
            (float(d["snr_db"]), val, float(d["gamma_std"]) if key == "gamma_mean" else 0.0))
    return out


def _color(name: str, ranks: list) -> tuple[str, str]:
    if name in _STYLE:
        return _STYLE[name]
    return _CYCLE[ranks.index(name) % len(_CYCLE)], "^"


def _figure(rows, key, ylabel, path, log_y=False, db=False):
    series = _series(rows, key)
    ranks = sorted({n for n, _ in series if n.startswith("poly(")}, key=lambda s: int(s[5:-1]))
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for (name, asym), pts in sorted(series.items()):
        pts.sort()
        x = [p[0] for p in pts]
        y = [p[1] for p in pts]
        color, marker = _color(name, ranks)
        label = name.replace("poly(", "poly L=").rstrip(")") if name.startswith("poly(") else name
        if db:
            lo = [10 * math.log10(max(v - s, 1e-12)) for _, v, s in pts]
            hi = [10 * math.log10(v + s) for _, v, s in pts]
            y = [10 * math.log10(v) for v in y]
        if asym:
            ax.plot(x, y, "-", color=color, linewidth=1.2)
        elif key == "gamma_mean":
            yerr = [[a - b for a, b in zip(y, lo)], [b - a for a, b in zip(y, hi)]] if db else \
                [p[2] for p in pts]
            ax.errorbar(x, y, yerr=yerr, fmt=marker, color=color, capsize=2, label=label)
        else:
            ax.plot(x, y, marker, color=color, label=label, linestyle="none")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel(ylabel)
    if log_y:
        ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def plot_sinr(rows, path) -> None:
    """Average SINR versus SNR (markers: simulation, lines: deterministic)."""
    _figure(rows, "gamma_mean", "average SINR [dB]", path, db=True)


def plot_ber(rows, path) -> None:
    """BPSK BER ``E[Q(sqrt(gamma))]`` versus SNR on a log axis."""
    clipped = []
    for r in rows:
        d = dict(r) if isinstance(r, dict) else dict(r.__dict__)
        if float(d["ber"]) <= 1e-12:
            d["ber"] = "nan"
        clipped.append(d)
    _figure(clipped, "ber", "bit error rate", path, log_y=True)


def plot_moments(report_rows, path) -> None:
    """Deterministic moments against Monte Carlo means (log scale)."""
    n = [r["n"] for r in report_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    ax1.semilogy(n, [r["mu_bar"] for r in report_rows], "-", label="deterministic")
    ax1.errorbar(n, [r["mu_mc_mean"] for r in report_rows], yerr=[r["mu_mc_std"] for r in report_rows],
                 fmt="o", label="Monte Carlo")
    ax1.set_xlabel("n")
    ax1.set_ylabel("moment")
    ax1.legend(fontsize=8)
    ax2.semilogy(n[1:], [max(r["rel_err_median"], 1e-16) for r in report_rows[1:]], "o-")
    ax2.set_xlabel("n")
    ax2.set_ylabel("median relative error")
    for ax in (ax1, ax2):
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def write_gnuplot_script(csv_name: str, path, quantity: str = "sinr") -> None:
    """gnuplot script that redraws the figure from the CSV (run from the output directory)."""
    if quantity == "sinr":
        using, ylabel, extra = "1:(10*log10($5))", "average SINR [dB]", ""
    else:
        using, ylabel, extra = "1:7", "bit error rate", "set logscale y\n"
    Path(path).write_text(
        f"""# regenerate with: gnuplot {Path(path).name}
set datafile separator ","
set terminal pngcairo size 800,600
set output "{Path(csv_name).stem}_gnuplot.png"
set xlabel "SNR [dB]"
set ylabel "{ylabel}"
set key left top
set grid
{extra}methods = system("tail -n +2 {csv_name} | cut -d, -f2 | sort -u | tr '\\n' ' '")
plot for [m in methods] "{csv_name}" using {using.replace('1:', '(strcol(2) eq m ? $1 : NaN):')} \\
    with linespoints title m
"""
    )
