"""Benchmark result rows and their CSV / JSON persistence."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = ("case", "dofs", "solver", "param", "threads", "nit", "lit", "t_sol", "status")


@dataclass
class RunRecord:
    """One table row: nit and lit are averaged over time steps for the heartbeat.

    ``histories`` (residual norms per solve) and ``extra`` are kept in memory
    and in the JSON sidecar, not in the CSV; they do not take part in equality.
    """

    case: str
    dofs: int
    solver: str
    param: float
    threads: int
    nit: float
    lit: float
    t_sol: float
    status: str
    histories: list = field(default_factory=list, compare=False, repr=False)
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def converged(self):
        return self.status == "converged"

    def row(self):
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def write_csv(records, path, append=False):
    path = Path(path)
    new = not (append and path.exists() and path.stat().st_size > 0)
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if new:
            writer.writeheader()
        for rec in records:
            # repr keeps floats exact through a round trip
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.row().items()})


def read_csv(path):
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}; expected {list(CSV_COLUMNS)}")
        out = []
        for row in reader:
            out.append(RunRecord(case=row["case"], dofs=int(row["dofs"]), solver=row["solver"],
                                 param=float(row["param"]), threads=int(row["threads"]),
                                 nit=_number(row["nit"]), lit=float(row["lit"]),
                                 t_sol=float(row["t_sol"]), status=row["status"]))
    return out


def history_path(csv_path):
    """Location of the residual-history sidecar that accompanies a CSV file."""
    p = Path(csv_path)
    return p.with_name(p.stem + ".history.json")


def write_histories(records, csv_path, append=False):
    path = history_path(csv_path)
    entries = []
    if append and path.exists():
        entries = json.loads(path.read_text())
    for rec in records:
        entries.append({**{k: v for k, v in rec.row().items()},
                        "histories": [[float(h) if h == h else None for h in hist] for hist in rec.histories]})
    path.write_text(json.dumps(entries))


def attach_histories(records, csv_path):
    """Fill ``histories`` from the sidecar, matching rows by their CSV fields."""
    path = history_path(csv_path)
    if not path.exists():
        return records
    entries = json.loads(path.read_text())
    pool = {}
    for e in entries:
        key = tuple(str(e[c]) for c in CSV_COLUMNS if c != "t_sol")
        pool.setdefault(key, []).append(e["histories"])
    for rec in records:
        key = tuple(str(v) for c, v in rec.row().items() if c != "t_sol")
        if pool.get(key):
            rec.histories = [[float("nan") if h is None else h for h in hist] for hist in pool[key].pop(0)]
    return records
