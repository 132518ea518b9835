"""Markdown tables and SVG plots from benchmark records."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from ..nonlinear import SOLVER_KINDS

HEADER = (
    "nit: nonlinear iterations; lit: average linear iterations per nonlinear iteration; "
    "T_sol: wall time in seconds covering problem setup, assembly and solves "
    "(mesh generation excluded). Heartbeat rows average nit and lit over the time steps. "
    "F marks a run that did not converge."
)


def _solver_order(records):
    present = {r.solver for r in records}
    known = [s for s in SOLVER_KINDS if s in present]
    return known + sorted(present - set(known))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(v)
    return f"{v:.1f}" if abs(v - round(v)) > 1e-12 or not float(v).is_integer() else str(int(v))


def _table(records):
    solvers = _solver_order(records)
    keys = sorted({(r.dofs, r.param, r.threads) for r in records})
    head = ["DoFs", "param", "threads"]
    for s in solvers:
        head += [f"{s} nit", f"{s} lit", f"{s} T_sol"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for key in keys:
        cells = [str(key[0]), f"{key[1]:g}", str(key[2])]
        for s in solvers:
            match = [r for r in records if (r.dofs, r.param, r.threads) == key and r.solver == s]
            if not match:
                cells += ["", "", ""]
                continue
            r = match[0]
            if r.converged:
                cells += [_fmt(r.nit), f"{r.lit:.1f}", f"{r.t_sol:.2f}"]
            else:
                cells += ["F", "F", f"{r.t_sol:.2f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _residual_plot(records, path, title):
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for r in records:
        if not r.histories:
            continue
        h = np.asarray(r.histories[0], dtype=float)
        ok = np.isfinite(h) & (h > 0)
        ax.semilogy(np.flatnonzero(ok), h[ok], marker="o", markersize=3, label=r.solver)
    ax.set_xlabel("nonlinear iteration")
    ax.set_ylabel("residual norm")
    ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")


def _threads_plot(records, path, title):
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for s in _solver_order(records):
        pts = sorted((r.threads, r.t_sol) for r in records if r.solver == s)
        if pts:
            t, y = zip(*pts)
            ax.loglog(t, y, marker="o", label=s)
    threads = sorted({r.threads for r in records})
    ax.set_xticks(threads)
    ax.set_xticklabels([str(t) for t in threads])
    ax.minorticks_off()
    ax.set_xlabel("threads")
    ax.set_ylabel("T_sol [s]")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")


def emit_report(records, out, svg_dir=None):
    """Write a Markdown report and its SVG plots.

    Tables are grouped by case; each case gets a semilog residual plot (first
    solve of the largest configuration) and, when several thread counts are
    present, a log-log plot of time against threads. Returns the list of SVG
    paths written.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    out = Path(out)
    svg_dir = out.parent if svg_dir is None else Path(svg_dir)
    svg_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# Benchmark report", "", HEADER, ""]
    svgs = []
    for case in sorted({r.case for r in records}):
        recs = [r for r in records if r.case == case]
        lines += [f"## {case}", ""] + _table(recs) + [""]
        top = max((r.dofs, r.param, r.threads) for r in recs)
        sel = [r for r in recs if (r.dofs, r.param, r.threads) == top]
        p = svg_dir / f"{out.stem}-{case}-residuals.svg"
        _residual_plot(sel, p, f"{case}: {top[0]} DoFs, param {top[1]:g}")
        svgs.append(p)
        lines += [f"![{case} residuals]({_rel(p, out)})", ""]
        if len({r.threads for r in recs}) > 1:
            p = svg_dir / f"{out.stem}-{case}-threads.svg"
            _threads_plot(recs, p, f"{case}: time against threads")
            svgs.append(p)
            lines += [f"![{case} threads]({_rel(p, out)})", ""]
    out.write_text("\n".join(lines))
    return svgs


def _rel(p, out):
    try:
        return str(p.relative_to(out.parent))
    except ValueError:
        return str(p)
