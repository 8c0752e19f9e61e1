"""Command-line entry point ``polydetect``.

Subcommands ``sinr-sweep``, ``ber-sweep``, ``moments`` and ``validate``.
Exit codes: 0 success, 2 configuration error, 3 numeric or convergence
failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig
from .errors import DomainError, NumericError

log = logging.getLogger("polydetect")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (defaults apply for missing keys)")
    p.add_argument("--snr-db", type=float, nargs="+", metavar="DB", help="override the SNR grid")
    p.add_argument("--trials", type=int, help="Monte Carlo trials")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes for the trial loop")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polydetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("sinr-sweep", "average SINR versus SNR"),
                       ("ber-sweep", "BPSK bit error rate versus SNR"),
                       ("moments", "deterministic versus Monte Carlo moments")]:
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "moments":
            p.add_argument("--n-max", type=int, help="highest moment order")
    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.add_argument("--inject-fault", action="store_true",
                   help="perturb a recursion coefficient; the recursion checks must fail")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(
        snr_grid_db=args.snr_db,
        trials=args.trials,
        seed=args.seed,
        outputs=str(args.out) if args.out else None,
        workers=args.workers,
        figures=False if args.no_figures else None,
    )


def _sweep_cmd(cfg: ExperimentConfig, quantity: str) -> int:
    from . import experiment, plotting

    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    rows, errors = experiment.sweep(cfg)
    csv_path = out / f"{quantity}.csv"
    experiment.write_rows_csv(rows, csv_path)
    experiment.write_meta(cfg, out / f"{quantity}.meta.json", kind=f"{quantity}-sweep", errors=errors)
    if cfg.figures:
        (plotting.plot_sinr if quantity == "sinr" else plotting.plot_ber)(rows, out / f"{quantity}.png")
    if cfg.gnuplot:
        plotting.write_gnuplot_script(csv_path.name, out / f"{quantity}.gp", quantity)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if errors:
        print(f"{len(errors)} numeric failures recorded in {quantity}.meta.json", file=sys.stderr)
    return EXIT_OK


def _moments_cmd(cfg: ExperimentConfig, n_max) -> int:
    from . import experiment, plotting

    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    rows, table = experiment.run_moment_report(cfg, n_max)
    experiment.write_report_csv(rows, out / "moments.csv")
    table.to_csv(out / "moment_table.csv")
    experiment.write_meta(cfg, out / "moments.meta.json", kind="moments",
                          extra={"n_max": table.order})
    if cfg.figures:
        plotting.plot_moments(rows, out / "moments.png")
    print(f"wrote {out / 'moments.csv'} (n = 0..{table.order})")
    return EXIT_OK


def _validate_cmd(args) -> int:
    from .validation import run_validate

    results = run_validate(args.inject_fault, args.check)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VALIDATION if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return _validate_cmd(args)
        cfg = load_config(args)
        if args.command == "moments":
            return _moments_cmd(cfg, args.n_max)
        return _sweep_cmd(cfg, "sinr" if args.command == "sinr-sweep" else "ber")
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
