"""Command-line front end: ``xorgame {analytic,run,purity-sweep,confidence,calibrate}``.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .calibration import FitError, InsufficientSpan, RegressionError
from .config import ConfigError, RunConfig
from .game import run_experiment
from .pipelines import (
    ANALYTIC_COLUMNS,
    REFERENCE_MAX_PWIN,
    RUN_COLUMNS,
    SWEEP_COLUMNS,
    analytic_table,
    calibrate,
    confidence_ensemble,
    instance_rows,
    purity_grid,
    purity_sweep,
    summarize,
)
from .tables import metadata, write_json, write_scan, write_table

log = logging.getLogger("xorgame")

OUT_ENV = "XORGAME_OUT"
EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if overrides:
        text = cfg.to_text()
        if any(k in ("sigma", "lambda", "purity") for k in overrides):
            # a new decoherence value replaces the old one
            text = "\n".join(l for l in text.splitlines()
                             if l.partition("=")[0].strip() not in ("sigma", "lambda", "purity"))
        kept = [l for l in text.splitlines() if l.partition("=")[0].strip() not in overrides]
        cfg = RunConfig.from_text("\n".join(kept + [f"{k} = {v}" for k, v in overrides.items()]))
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    out = args.out or os.environ.get(OUT_ENV)
    if out:
        cfg = cfg.replace(output_dir=out)
    return cfg


def cmd_analytic(cfg: RunConfig) -> list[Path]:
    rows = analytic_table(cfg)
    meta = metadata("analytic", cfg.snapshot(), reference_max_pwin=REFERENCE_MAX_PWIN,
                    note="the reference maximum 0.7162 at P=1 needs V near 0.95; V=0.94 gives 0.71385")
    path = write_table(Path(cfg.output_dir) / "analytic.csv", ANALYTIC_COLUMNS, rows, meta)
    for label, lam, vis, p, pw, _ in rows[:5]:
        print(f"{label:26s} lambda={lam:.4f} V={vis:.3f} purity={p:.4f}  P_win={pw:.5f}")
    print(f"{'reference maximum':26s} P_win={REFERENCE_MAX_PWIN}")
    return [path]


def cmd_run(cfg: RunConfig) -> list[Path]:
    record = run_experiment(cfg)
    rows = instance_rows(record, cfg)
    summary = summarize(rows)
    out = Path(cfg.output_dir)
    payload = record.to_dict()
    payload["xorgame_version"] = __version__
    json_path = write_json(out / "run_record.json", payload)
    meta = metadata("run", cfg.snapshot(), mean_win_rate=summary.mean, std_win_rate=summary.std,
                    total_cross_lab=summary.total_cross_lab)
    csv_path = write_table(out / "instances.csv", RUN_COLUMNS, rows, meta)
    print(f"instances={summary.n_instances} cross-lab coincidences={summary.total_cross_lab}")
    print(f"mean win rate {summary.mean:.4f} +- {summary.std:.4f} (std over instances)")
    return [json_path, csv_path]


def cmd_purity_sweep(cfg: RunConfig) -> list[Path]:
    rows = purity_sweep(cfg, purity_grid(cfg))
    meta = metadata("purity-sweep", cfg.snapshot(), purity_floor=cfg.purity_floor)
    path = write_table(Path(cfg.output_dir) / "purity_sweep.csv", SWEEP_COLUMNS, rows, meta)
    for p, _, _, mean, _, sem, model, _ in rows:
        print(f"purity={p:.4f}  simulated={mean:.4f} +- {sem:.4f}  model={model:.4f}")
    return [path]


def cmd_confidence(cfg: RunConfig) -> list[Path]:
    ens = confidence_ensemble(cfg)
    st = ens.stats
    level = cfg.confidence_level
    first, sustained = st.first_crossing(level), ens.sustained_crossing(level)
    outliers = {}
    for idx, value in st.outliers:
        outliers.setdefault(idx, []).append(value)
    rows = [
        (i, st.median[i - 1], st.q1[i - 1], st.q3[i - 1], st.whisker_low[i - 1], st.whisker_high[i - 1],
         len(outliers.get(i, ())), ";".join(format(v, ".17g") for v in outliers.get(i, ())))
        for i in st.event_index
    ]
    meta = metadata("confidence", cfg.snapshot(), quantile_method=st.quantile_method,
                    first_crossing=first, sustained_crossing=sustained)
    out = Path(cfg.output_dir)
    p1 = write_table(out / "confidence.csv",
                     ["event_index", "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers", "outliers"],
                     rows, meta)
    res_meta = metadata("confidence", cfg.snapshot(), log_slope=ens.slope, log_intercept=ens.intercept,
                        r_squared=ens.r2)
    p2 = write_table(out / "confidence_residual.csv", ["event_index", "residual"],
                     zip(st.event_index, st.residual), res_meta)
    print(f"median confidence first exceeds {level} at event {first}; stays above from event {sustained}")
    print(f"residual log-slope {ens.slope:.4f} per event, R^2 = {ens.r2:.3f}")
    return [p1, p2]


def cmd_calibrate(cfg: RunConfig) -> list[Path]:
    res = calibrate(cfg)
    out = Path(cfg.output_dir)
    meta = metadata("calibrate", cfg.snapshot())
    hom = res.hom_fit
    err0, errpi = res.phase_errors(cfg.phase_volts_per_radian)
    eta = res.efficiencies.as_tuple()
    truth = [cfg.eta_00, cfg.eta_01, cfg.eta_10, cfg.eta_11]
    top = max(truth)
    rows = [
        ("hom_visibility", hom.derived["visibility"], hom.derived["visibility_err"], cfg.visibility),
        ("hom_width_um", hom.params["width"], hom.errors["width"], cfg.hom_coherence_width),
        ("phase_setpoint_zero_V", res.setpoints.zero, err0, None),
        ("phase_setpoint_pi_V", res.setpoints.pi, errpi, None),
        ("phase_period_V", res.setpoints.period, res.setpoints.fit.errors["scale"] * 6.283185307179586,
         6.283185307179586 * cfg.phase_volts_per_radian),
    ] + [(f"eta_{k}", v, None, t / top) for k, v, t in zip(("00", "01", "10", "11"), eta, truth)]
    paths = [
        write_table(out / "calibration.csv", ["quantity", "estimate", "uncertainty", "truth"], rows, meta),
        write_scan(out / "hom_scan.csv", res.hom_scan, meta),
        write_scan(out / "phase_scan.csv", res.phase_scan, meta),
        write_scan(out / "efficiency_scan.csv", res.efficiency_scan, meta),
    ]
    print(f"HOM visibility {hom.derived['visibility']:.4f} +- {hom.derived['visibility_err']:.4f}")
    print(f"phase setpoints: 0 -> {res.setpoints.zero:.4f} V, pi -> {res.setpoints.pi:.4f} V")
    print("relative efficiencies " + " ".join(f"{v:.4f}" for v in eta))
    return paths


COMMANDS = {
    "analytic": cmd_analytic,
    "run": cmd_run,
    "purity-sweep": cmd_purity_sweep,
    "confidence": cmd_confidence,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--workers", type=int, help="worker processes; outputs do not depend on it")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    parser = argparse.ArgumentParser(prog="xorgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analytic": "closed-form win probabilities",
        "run": "simulate one experimental run",
        "purity-sweep": "win rate versus test-photon purity",
        "confidence": "confidence versus number of retained events",
        "calibrate": "HOM, phase-reference and efficiency calibration",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    sub.add_parser("write-config", parents=[common], help="write the effective configuration to the output directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read config %s: %s", args.config, exc)
        return EXIT_IO

    try:
        if args.command == "write-config":
            path = Path(cfg.output_dir) / "config.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            cfg.write(path)
            paths = [path]
        else:
            paths = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (FitError, RegressionError, InsufficientSpan, ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error on %s: %s", getattr(exc, "filename", None) or cfg.output_dir, exc)
        return EXIT_IO
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
