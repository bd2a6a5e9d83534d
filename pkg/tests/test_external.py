import json
import shlex
import sys

import pytest
from sympy.polys.domains import RR
from sympy.polys.orderings import grlex
from sympy.polys.rings import ring

from pfcert.conic import Feasible, SolverSettings, Unknown, solve_feasibility
from pfcert.external import run_external_solver
from pfcert.moment import dense_relaxation, lift_point
from pfcert.poly import LabeledPolynomial, PolySystem

SCRIPT = """
import json, sys

with open(sys.argv[1]) as f:
    problem = json.load(f)
payload = {payload}
payload["seen_m"] = problem["m"]
with open(sys.argv[2], "w") as f:
    json.dump(payload, f)
sys.exit({code})
"""


def _solver(tmp_path, payload=None, code=0, write=True):
    body = SCRIPT.format(payload=repr(payload or {}), code=code)
    if not write:
        body = f"import sys\nsys.exit({code})\n"
    script = tmp_path / "solver.py"
    script.write_text(body)
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(script))}"


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "problem.json"
    path.write_text(json.dumps({"m": 3}))
    return path


def test_runs_command(tmp_path, problem_file):
    command = _solver(tmp_path, {"status": "unknown", "message": "hello"})
    status = run_external_solver(command, problem_file, tmp_path / "status.json")
    assert status == {"status": "unknown", "message": "hello", "seen_m": 3}


def test_nonzero_exit(tmp_path, problem_file):
    command = _solver(tmp_path, {"status": "feasible"}, code=3)
    status = run_external_solver(command, problem_file, tmp_path / "status.json")
    assert status == {"status": "unknown", "message": "exit status 3"}


def test_missing_status_file(tmp_path, problem_file):
    command = _solver(tmp_path, write=False)
    status = run_external_solver(command, problem_file, tmp_path / "status.json")
    assert status["status"] == "unknown"
    assert "unreadable status" in status["message"]


def test_missing_executable(tmp_path, problem_file):
    with pytest.raises(FileNotFoundError) as exc_info:
        run_external_solver(
            str(tmp_path / "no-such-solver"), problem_file, tmp_path / "status.json"
        )
    assert "could not be located" in str(exc_info.value)


def test_command_from_environment(tmp_path, problem_file, monkeypatch):
    monkeypatch.delenv("PFCERT_EXTERNAL_SOLVER", raising=False)
    with pytest.raises(FileNotFoundError) as exc_info:
        run_external_solver(None, problem_file, tmp_path / "status.json")
    assert "no external solver command configured" in str(exc_info.value)

    monkeypatch.setenv(
        "PFCERT_EXTERNAL_SOLVER", _solver(tmp_path, {"status": "unknown"})
    )
    status = run_external_solver(None, problem_file, tmp_path / "status.json")
    assert status["seen_m"] == 3


def test_external_backend_end_to_end(tmp_path):
    R, x = ring("x", RR, grlex)
    system = PolySystem(
        variables=("x",),
        lead="s",
        nlead=1,
        nbus=0,
        equalities=(),
        inequalities=(LabeledPolynomial("interval", 1 - x**2),),
    )
    prob = dense_relaxation(system)
    good = {
        "schema_version": "pfcert.status/1",
        "status": "feasible",
        "y": lift_point([0.25], prob).tolist(),
    }
    command = _solver(tmp_path, good)
    settings = SolverSettings(backend="external", external_command=command)
    status = solve_feasibility(prob, settings)
    assert isinstance(status, Feasible)
    assert status.backend == "external"

    bad = {**good, "y": lift_point([3.0], prob).tolist()}
    command = _solver(tmp_path, bad)
    settings = SolverSettings(backend="external", external_command=command)
    assert isinstance(solve_feasibility(prob, settings), Unknown)
