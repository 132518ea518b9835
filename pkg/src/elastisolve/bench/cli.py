"""Command-line entry point: ``bench run``, ``bench sweep`` and ``bench report``.

Exit status is 0 when all requested runs completed, including runs whose
solver failed (those are recorded in the status column), 2 for usage errors
and 1 for other harness errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..nonlinear import DEFAULT_KINDS, canonical_kind
from .cases import CASE_NAMES, CaseSpec
from .config import ConfigError, load_config, nonlinear_config, preconditioner_options, solver_kind_from_options
from .harness import SWEEP_AXES, run_case, sweep
from .records import attach_histories, read_csv, write_csv, write_histories
from .report import emit_report

log = logging.getLogger("elastisolve.bench")


def _solvers(text):
    if text is None:
        return None
    return [canonical_kind(s.strip()) for s in text.split(",") if s.strip()]


def _common(p):
    p.add_argument("-v", "--verbose", action="store_true", help="log one line per run")
    p.add_argument("--case", choices=CASE_NAMES, required=True)
    p.add_argument("--solver", "--solvers", dest="solver", default=None,
                   help="comma-separated solver names (default: the four compared methods)")
    p.add_argument("--refine", type=int, default=1)
    p.add_argument("--order", default="p1", type=str.upper, choices=["P1", "P2"])
    p.add_argument("--param", type=float, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--time-steps", type=int, default=1)
    p.add_argument("--config", default=None, help="key-value options file")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--append", action="store_true", help="append rows instead of overwriting")


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description="Nonlinear solver benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one case for one or more solvers")
    _common(run)
    sw = sub.add_parser("sweep", help="vary refinement, parameter or threads")
    _common(sw)
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sw.add_argument("--values", required=True, help="comma-separated values")
    rep = sub.add_parser("report", help="Markdown tables and SVG plots from a CSV file")
    rep.add_argument("csv")
    rep.add_argument("--out", required=True)
    rep.add_argument("--svg-dir", default=None)
    rep.add_argument("-v", "--verbose", action="store_true")
    return parser


def _prepare(args):
    opts = load_config(args.config) if args.config else {}
    solvers = _solvers(args.solver)
    if solvers is None:
        implied = solver_kind_from_options(opts)
        solvers = [implied] if implied else list(DEFAULT_KINDS)
    spec = CaseSpec(case=args.case, refinement=args.refine, order=args.order, param=args.param,
                    time_steps=args.time_steps, threads=args.threads,
                    options=preconditioner_options(opts))
    return opts, solvers, spec


def _log(rec):
    log.info("%s %s dofs=%d status=%s nit=%s lit=%.1f t=%.2fs", rec.case, rec.solver, rec.dofs,
             rec.status, rec.nit, rec.lit, rec.t_sol)


def _save(args, records):
    write_csv(records, args.out, append=args.append)
    write_histories(records, args.out, append=args.append)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            records = attach_histories(read_csv(args.csv), args.csv)
            emit_report(records, args.out, args.svg_dir)
            return 0
        opts, solvers, spec = _prepare(args)
        if args.command == "run":
            records = []
            for solver in solvers:
                records.append(run_case(spec, solver, nonlinear_config(opts, solver, spec.threads)))
                _log(records[-1])
        else:
            values = [float(v) for v in args.values.split(",") if v.strip()]
            records = sweep(spec, args.axis, values, solvers, opts, callback=_log)
        _save(args, records)
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
