"""Command line entry point: ``fairsim {generate,calibrate,run,analyze,plot}``.

Exit status: 0 on success, 1 on runtime failure, 2 on configuration or
schema errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .analysis import SchemaError, analyze
from .calibrate import CALIBRATION_KINDS, calibrate, write_calibration
from .config import ConfigError, RunConfig, load_config
from .experiment import Cell, run_plan
from .io import write_bundle
from .plotting import plot
from .simgen import assemble_dataset, gen_base
from . import rng as rngmod

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser, out_required=False) -> None:
    p.add_argument("--config", type=Path, help="INI file with a [fairsim] section")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--preset", choices=("paper", "desk"), help="size preset")
    p.add_argument("--seed", type=int, help="override master_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write one simulated dataset")
    _common(g)

    c = sub.add_parser("calibrate", help="hyperparameter range calibration")
    c.add_argument("kind", choices=CALIBRATION_KINDS)
    _common(c)
    c.add_argument("--datasets", type=int, help="simulated tables per setting")

    r = sub.add_parser("run", help="run the benchmark plan")
    _common(r)
    r.add_argument("--cell", action="append", default=[],
                   help="filter such as 'scenario=threshold_binary,alpha=0.2,bias_index=4'")
    r.add_argument("--threads", type=int, help="worker processes (else FAIRSIM_THREADS)")

    a = sub.add_parser("analyze", help="reduce results to summary tables")
    a.add_argument("results", type=Path)
    a.add_argument("--out", type=Path)
    a.add_argument("--diagnostics", type=Path)

    pl = sub.add_parser("plot", help="emit SVG figures from analysis outputs")
    pl.add_argument("summary", type=Path, help="directory holding the analysis outputs")
    pl.add_argument("--out", type=Path)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(preset=args.preset, seed=args.seed, out=args.out)


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    return Path(cfg.out)


_CELL_FIELDS = {f.name for f in fields(Cell)} | {"replicate"}


def parse_cell_filter(specs) -> tuple[dict, list[int] | None]:
    flt, replicates = {}, None
    for spec in specs:
        for item in filter(None, (s.strip() for s in spec.split(","))):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in _CELL_FIELDS:
                raise ConfigError(f"bad --cell item {item!r}; keys: {sorted(_CELL_FIELDS)}")
            try:
                parsed = ([int(v) for v in value.split("+")] if key == "replicate"
                          else int(value) if key == "bias_index" else value.strip())
            except ValueError as exc:
                raise ConfigError(f"bad --cell item {item!r}: {exc}") from exc
            previous = replicates if key == "replicate" else flt.get(key)
            if previous is not None and previous != parsed:
                raise ConfigError(f"conflicting --cell values for {key!r}")
            if key == "replicate":
                replicates = parsed
            else:
                flt[key] = parsed
    return flt, replicates


def cmd_generate(args) -> int:
    cfg = _config(args)
    plan = cfg.plan
    out = _out_dir(cfg)
    scenario, alpha = plan.scenarios[0], plan.alphas[0]
    level = cfg.bias_level
    if level is None:
        level = float(plan.levels(scenario)[0][0])
    sc = plan.scenario_config(scenario, alpha, level, cfg.replicate)
    bundle = assemble_dataset(sc, gen_base(sc, sc.n_train, rngmod.TRAIN))
    files = write_bundle(bundle, out)
    for name in sorted(files):
        print(files[name])
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    n = args.datasets if args.datasets is not None else cfg.calibration_datasets
    if n < 1:
        raise ConfigError("--datasets must be positive")
    rows = calibrate(args.kind, cfg.plan, n,
                     progress=lambda row: logging.info("calibrated %s", row))
    path, summary = write_calibration(args.kind, rows, out)
    print(json.dumps(summary, indent=2))
    print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    plan = cfg.plan
    flt, replicates = parse_cell_filter(args.cell)
    if replicates is not None:
        if min(replicates) < 0 or max(replicates) >= plan.replicates:
            raise ConfigError(f"replicate outside 0..{plan.replicates - 1}")
    if not any(c.matches(**flt) for c in plan.cells()):
        raise ConfigError(f"--cell filter {flt} matches no cell of the plan")

    def progress(done, total, recs):
        if recs:
            r = recs[0]
            failed = sum(bool(x.error) for x in recs)
            print(f"[{done}/{total}] {r.scenario} alpha={r.alpha} replicate={r.replicate}: "
                  f"{len(recs)} cells, {failed} failed", flush=True)

    records, _ = run_plan(plan, out, threads=args.threads or cfg.threads,
                          cell_filter=flt, progress=progress, replicates=replicates)
    failed = sum(bool(r.error) for r in records)
    print(f"{len(records)} records written to {out / 'results.csv'} ({failed} failed)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if not args.results.exists():
        raise SchemaError(f"{args.results} not found")
    out = args.out or args.results.parent
    paths = analyze(args.results, out, args.diagnostics)
    for p in paths.values():
        print(p)
    return EXIT_OK


def cmd_plot(args) -> int:
    out = args.out or args.summary
    for p in plot(args.summary, out):
        print(p)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "calibrate": cmd_calibrate, "run": cmd_run,
            "analyze": cmd_analyze, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to exit 1
        logging.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
