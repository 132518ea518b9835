import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastisolve.bench import cli
from elastisolve.bench.cases import CaseSpec, build_preconditioner, build_problem
from elastisolve.bench.config import (ConfigError, nonlinear_config, parse_config, preconditioner_options,
                                      solver_kind_from_options)
from elastisolve.bench.harness import run_case, sweep
from elastisolve.bench.records import CSV_COLUMNS, RunRecord, attach_histories, history_path, read_csv, write_csv
from elastisolve.bench.report import emit_report
from elastisolve.linalg import SchurFieldSplit, SmoothedAggregationAMG

SVG = "{http://www.w3.org/2000/svg}"


def record(**kw):
    base = dict(case="cook", dofs=150, solver="NK", param=1e6, threads=1, nit=4, lit=12.5, t_sol=0.3,
                status="converged", histories=[[1.0, 1e-3, 1e-9]])
    base.update(kw)
    return RunRecord(**base)


# ---------------------------------------------------------------- records

def test_csv_header_exact(tmp_path):
    path = tmp_path / "r.csv"
    write_csv([record()], path)
    assert path.read_text().splitlines()[0] == "case,dofs,solver,param,threads,nit,lit,t_sol,status"
    assert CSV_COLUMNS == ("case", "dofs", "solver", "param", "threads", "nit", "lit", "t_sol", "status")


names = st.sampled_from(["cook", "twist", "heartbeat"])
solvers = st.sampled_from(["NK", "iNK", "B", "iB"])
finite = st.floats(min_value=0, max_value=1e9, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(rows=st.lists(st.builds(RunRecord, case=names, dofs=st.integers(1, 10 ** 6), solver=solvers,
                               param=finite, threads=st.integers(1, 64),
                               nit=st.one_of(st.integers(0, 1000), finite), lit=finite, t_sol=finite,
                               status=st.sampled_from(["converged", "maxIts", "stepFailure", "diverged"])),
                     min_size=1, max_size=5))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    write_csv(rows, path)
    assert read_csv(path) == rows


def test_csv_append_and_bad_header(tmp_path):
    path = tmp_path / "r.csv"
    write_csv([record()], path)
    write_csv([record(solver="iNK")], path, append=True)
    assert [r.solver for r in read_csv(path)] == ["NK", "iNK"]
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(bad)


def test_history_sidecar(tmp_path):
    path = tmp_path / "r.csv"
    rec = record(histories=[[1.0, float("nan")]], status="stepFailure")
    write_csv([rec], path)
    from elastisolve.bench.records import write_histories
    write_histories([rec], path)
    assert history_path(path).exists()
    back = attach_histories(read_csv(path), path)
    assert back[0].histories[0][0] == 1.0 and np.isnan(back[0].histories[0][1])


# ---------------------------------------------------------------- config

def test_parse_config():
    text = """
    # inexact Newton
    snes_type newtonls
    snes_ksp_ew = true
    -snes_qn_m 20
    ksp_rtol 1e-7   # inline comment
    """
    opts = parse_config(text)
    assert opts == {"snes_type": "newtonls", "snes_ksp_ew": True, "snes_qn_m": 20, "ksp_rtol": 1e-7}
    assert solver_kind_from_options(opts) == "iNK"
    config = nonlinear_config(opts, "iNK")
    assert config.lbfgs_memory == 20
    assert config.exact_linear.rtol == 1e-7


@pytest.mark.parametrize("text,kind", [("snes_type newtonls", "NK"),
                                       ("snes_type newtonls\nksp_type preonly", "newton-preonly"),
                                       ("snes_type qn\nksp_type preonly", "B"),
                                       ("snes_type qn\nksp_rtol 1e-2", "iB"),
                                       ("snes_type qn\nksp_rtol 1e-6", "quasiExactBFGS")])
def test_solver_kind_from_options(text, kind):
    assert solver_kind_from_options(parse_config(text)) == kind


def test_inexact_bfgs_options_set_inner_tolerance():
    config = nonlinear_config(parse_config("ksp_rtol 0.05\nksp_max_it 30"), "iB")
    assert config.inexact_linear.rtol == 0.05 and config.inexact_linear.max_iterations == 30


@pytest.mark.parametrize("text", ["unknown_key 1", "snes_rtol abc", "snes_ksp_ew maybe", "lonely"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unsupported_options():
    with pytest.raises(ConfigError):
        nonlinear_config({"snes_linesearch_type": "bt"}, "NK")
    with pytest.raises(ConfigError):
        solver_kind_from_options({"snes_type": "ngmres"})
    assert preconditioner_options({"pc_type": "jacobi", "snes_rtol": 1.0}) == {"pc_type": "jacobi"}


# ---------------------------------------------------------------- cases

def test_case_spec_defaults():
    assert CaseSpec("cook").param == 1e6
    assert CaseSpec("twist", order="p1").order == "P2"
    assert CaseSpec("heartbeat").param == 1e4
    with pytest.raises(ValueError):
        CaseSpec("cook", param=-1.0)
    with pytest.raises(ValueError):
        CaseSpec("beam")


def test_case_preconditioners():
    assert isinstance(build_preconditioner(CaseSpec("cook")), SmoothedAggregationAMG)
    pc = build_preconditioner(CaseSpec("twist"))
    assert isinstance(pc, SchurFieldSplit) and pc.variant == "lower" and pc.schur_approx == "SIMPLE"
    with pytest.raises(ValueError):
        build_preconditioner(CaseSpec("cook", options={"mg_levels_ksp_type": "gmres"}))
    with pytest.raises(ValueError):
        build_preconditioner(CaseSpec("twist", options={"pc_type": "jacobi"}))


def test_twist_problem_is_mixed_p2():
    problem = build_problem(CaseSpec("twist"))
    assert problem.mixed and problem.order == 2
    assert problem.n_p == problem.definition.mesh.n_cells


# ---------------------------------------------------------------- harness

def test_run_case_cook_newton():
    rec = run_case(CaseSpec("cook"), "newton")
    assert rec.status == "converged" and 3 <= rec.nit <= 10
    assert rec.solver == "NK" and rec.dofs == 150 and rec.t_sol > 0
    assert rec.extra["jacobian_assemblies"][0] >= rec.nit


def test_run_case_twist_inexact_bfgs_fails():
    rec = run_case(CaseSpec("twist"), "iB")
    assert rec.status != "converged"
    assert rec.status in ("maxIts", "stepFailure", "diverged")


def test_run_case_is_deterministic():
    a = run_case(CaseSpec("cook"), "iNK")
    b = run_case(CaseSpec("cook"), "iNK")
    assert (a.nit, a.lit) == (b.nit, b.lit)
    assert a.histories == b.histories


def test_size_sweep_rows():
    rows = sweep(CaseSpec("cook"), "size", [1, 2, 3])
    assert len(rows) == 12
    assert len({r.dofs for r in rows}) == 3


def test_thread_sweep_invariant():
    rows = sweep(CaseSpec("cook", refinement=2), "threads", [1, 2, 4], solvers=["iNK", "B"])
    assert len({r.dofs for r in rows}) == 1
    for s in ("iNK", "B"):
        runs = [r for r in rows if r.solver == s]
        assert len({(r.nit, r.lit) for r in runs}) == 1
        assert all(r.histories == runs[0].histories for r in runs)


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep(CaseSpec("cook"), "colour", [1])
    with pytest.raises(ValueError):
        sweep(CaseSpec("cook"), "size", [])


# ---------------------------------------------------------------- report

def parse_svg(path):
    root = ET.parse(path).getroot()
    assert root.tag == SVG + "svg"
    assert root.get("version") == "1.1"
    return root


def test_report_single_record(tmp_path):
    out = tmp_path / "report.md"
    svgs = emit_report([record()], out)
    text = out.read_text()
    table = [line for line in text.splitlines() if line.startswith("| 150")]
    assert len(table) == 1
    assert len(svgs) == 1
    parse_svg(svgs[0])


def test_report_marks_failures(tmp_path):
    out = tmp_path / "report.md"
    recs = [record(), record(solver="B", status="maxIts", nit=1000, lit=0.0)]
    emit_report(recs, out)
    row = next(line for line in out.read_text().splitlines() if line.startswith("| 150"))
    cells = [c.strip() for c in row.strip("|").split("|")]
    # DoFs, param, threads, then NK (nit, lit, T) and B (nit, lit, T)
    assert cells[3:5] == ["4", "12.5"]
    assert cells[6:8] == ["F", "F"]


def test_report_threads_plot(tmp_path):
    recs = [record(threads=t, t_sol=1.0 / t) for t in (1, 2, 4)]
    svgs = emit_report(recs, tmp_path / "report.md", svg_dir=tmp_path / "svg")
    threads_svg = [p for p in svgs if p.name.endswith("threads.svg")]
    assert len(threads_svg) == 1
    root = parse_svg(threads_svg[0])
    labels = [t.text for t in root.iter(SVG + "text") if t.text]
    assert labels or root.find(f".//{SVG}g") is not None


def test_report_needs_records(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "r.md")


# ---------------------------------------------------------------- CLI

def test_cli_run_and_report(tmp_path):
    out = tmp_path / "results.csv"
    code = cli.main(["run", "--case", "cook", "--solver", "inexact-newton", "--refine", "1", "--order", "p1",
                     "--param", "1e6", "--threads", "2", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0].solver == "iNK" and rows[0].threads == 2
    assert cli.main(["report", str(out), "--out", str(tmp_path / "report.md")]) == 0
    assert (tmp_path / "report.md").exists()


def test_cli_recorded_failure_exits_zero(tmp_path):
    out = tmp_path / "twist.csv"
    assert cli.main(["run", "--case", "twist", "--solver", "bfgs", "--out", str(out)]) == 0
    assert read_csv(out)[0].status != "converged"


def test_cli_sweep_with_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("snes_type qn\nksp_type preonly\nsnes_qn_m 30\n")
    out = tmp_path / "sweep.csv"
    code = cli.main(["sweep", "--axis", "param", "--values", "1e6,1.5e6", "--case", "cook",
                     "--config", str(cfg), "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert [r.solver for r in rows] == ["B", "B"]
    assert [r.param for r in rows] == [1e6, 1.5e6]


def test_cli_harness_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not_an_option 3\n")
    assert cli.main(["run", "--case", "cook", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
    assert cli.main(["report", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "r.md")]) == 1
    assert cli.main(["run", "--case", "cook", "--solver", "simplex", "--out", str(tmp_path / "x.csv")]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--case", "beam", "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2
