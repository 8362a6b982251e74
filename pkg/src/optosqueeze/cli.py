"""Command-line front end: ``optosqueeze <command> --config PATH --out DIR``.

Data files in ``DIR`` depend only on the config, so reruns are
byte-identical; timings go to ``run.log`` alongside them.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import experiments
from .errors import ConfigError, OptoSqueezeError
from .io import TRAJECTORY_COLUMNS, load_config, write_csv, write_json, write_pulses

log = logging.getLogger("optosqueeze")

QSL_COLUMNS = ("T_s", "family", "g_minus_rad_s", "ratio", "t_delay_s", "max_db_full", "max_db_rwa",
               "variance_ratio_full_rwa")
KAPPA_COLUMNS = ("t_s", "kappa_reduction", "var_x1", "db")


def _table_rows(tables):
    for table in tables:
        yield from table.rows()


def cmd_simulate(config, out: Path):
    table, summary = experiments.simulate(config)
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, table.rows())
    write_json(out / "summary.json", summary)
    return f"max squeezing {summary['max_db']:.3f} dB at t={summary['t_of_max']:.4e}s"


def cmd_compare(config, out: Path):
    tables, summary = experiments.compare(config)
    write_csv(out / "compare.csv", TRAJECTORY_COLUMNS, _table_rows(tables))
    write_json(out / "compare.json", summary)
    return "; ".join(f"{r['protocol']}: {r['max_db']:.3f} dB" for r in summary["protocols"])


def cmd_optimize(config, out: Path):
    pulses, tables, summary, wall = experiments.optimize(config)
    write_pulses(out / "pulses.csv", pulses)
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, _table_rows(tables))
    write_json(out / "optimization.json", summary)
    log.info("optimization wall time %.2fs", wall)
    return f"rwa {summary['db_rwa']:.3f} dB, full {summary['db_full']:.3f} dB"


def cmd_qsl_sweep(config, out: Path):
    records, summary = experiments.qsl_sweep(config)
    rows = [
        (r["T_s"], r["family"], r["g_minus"], r["ratio"] if r["ratio"] is not None else float("nan"),
         r["t_delay"] if r["t_delay"] is not None else float("nan"), r["max_db_full"], r["max_db_rwa"],
         r["variance_ratio_full_rwa"])
        for r in records if "error" not in r
    ]
    write_csv(out / "qsl.csv", QSL_COLUMNS, rows)
    write_json(out / "qsl.json", summary)
    t = summary["smallest_T_above_threshold"]
    return "threshold never exceeded" if t is None else f"smallest T above {summary['threshold_db']} dB: {t:.4e}s"


def cmd_kappa_study(config, out: Path):
    tables, summary = experiments.kappa_study(config)
    rows = ((t, red, v, d) for red, tab in tables for t, v, d in zip(tab.times, tab.var_x1, tab.db))
    write_csv(out / "kappa.csv", KAPPA_COLUMNS, rows)
    write_json(out / "kappa.json", summary)
    return "; ".join(f"kappa/{r['kappa_reduction']:g}: first minimum at {r['first_min_time']:.3e}s"
                     for r in summary["runs"])


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "qsl-sweep": cmd_qsl_sweep,
    "kappa-study": cmd_kappa_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optosqueeze", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(args.out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        config = load_config(args.config)
        start = time.perf_counter()
        message = COMMANDS[args.command](config, args.out)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OptoSqueezeError as exc:
        log.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        log.removeHandler(handler)
        handler.close()
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
