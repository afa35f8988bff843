"""Command line entry point: ``expbergman run|list|export-lattice|export-kernel``.

Exit codes: 0 when every assertion passes, 1 on an assertion failure, 2 on a
configuration error and 3 on a numerical error.  The output directory of
``run`` can be overridden with the ``EXPBERGMAN_OUTPUT_DIR`` environment
variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import OUTPUT_ENV, RunConfig, list_families, run
from .errors import ConfigError, ExpBergmanError, ParameterDomainError
from .geometry import LatticeParams, build_lattice, write_lattice_csv
from .kernel import compute_moments
from .weights import make_weight

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _add_weight_args(p):
    p.add_argument("--config", help="read weight/lattice/kernel settings from an INI file")
    p.add_argument("--family", default=None)
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("-o", "--output", required=True, help="file to write")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="output format; defaults to the file suffix, else csv")


def _config_from(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_text("")
    for key, val in (("family", args.family), ("A", args.A), ("alpha", args.alpha),
                     ("r_max", args.r_max)):
        if val is not None:
            cfg.weight[key] = val.upper() if key == "family" else val
    return cfg


def _format(args):
    if args.format:
        return args.format
    return "json" if Path(args.output).suffix.lower() == ".json" else "csv"


def _write_json(payload, path):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_run(args):
    cfg = RunConfig.from_file(args.config)
    rep = run(cfg)
    failed = [a for a in rep.assertions if not a.passed]
    out = cfg.resolved_output_dir()
    print(f"{len(rep.assertions) - len(failed)}/{len(rep.assertions)} assertions passed; "
          f"report written to {Path(out) / 'report.json'}")
    for a in failed:
        print(f"FAIL {a.name}: {a.invariant} (value={a.value}, limit={a.limit})")
    return EXIT_OK if not failed else EXIT_ASSERT


def _cmd_list(args):
    print(json.dumps(list_families(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_export_lattice(args):
    cfg = _config_from(args)
    if args.r is not None:
        cfg.lattice["r"] = args.r
    if args.s is not None:
        cfg.lattice["s"] = args.s
    w = make_weight(**cfg.weight)
    c = cfg.lattice
    params = LatticeParams(r=c["r"], s=c["s"], alpha_cap=c["alpha_cap"], budget=c["budget"])
    lat = build_lattice(w, params, seed=cfg.seed if args.seed is None else args.seed)
    if _format(args) == "json":
        _write_json({"weight": cfg.weight, "params": {"r": params.r, "s": params.s},
                     "multiplicity": lat.multiplicity,
                     "points": [{"re_x": x, "im_y": y, "rho": r} for x, y, r in lat.to_rows()]},
                    args.output)
    else:
        write_lattice_csv(lat, args.output)
    print(f"{len(lat)} lattice points (multiplicity {lat.multiplicity}) -> {args.output}")
    return EXIT_OK


def _cmd_export_kernel(args):
    cfg = _config_from(args)
    n = cfg.n_basis if args.n_basis is None else args.n_basis
    table = compute_moments(make_weight(**cfg.weight), n)
    if _format(args) == "json":
        _write_json({"weight": cfg.weight, "n_basis": n,
                     "log_h": [v for _, v in table.to_rows()]}, args.output)
    else:
        with open(args.output, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["n", "log_h"])
            for k, v in table.to_rows():
                wr.writerow([k, repr(v)])
    print(f"{n} moments -> {args.output}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="expbergman", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the tasks of a configuration file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("list", help="list weight families, measures and tasks")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("export-lattice", help="build a lattice and write it as CSV")
    _add_weight_args(p)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_export_lattice)

    p = sub.add_parser("export-kernel", help="write the moment table behind the kernel as CSV")
    _add_weight_args(p)
    p.add_argument("--n-basis", type=int, default=None)
    p.set_defaults(func=_cmd_export_kernel)
    ap.epilog = f"Set {OUTPUT_ENV} to override the output directory of 'run'."
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterDomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExpBergmanError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
