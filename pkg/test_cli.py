import json

import pytest

from strataforms.errors import ProjectError
from strataforms.main import main
from strataforms.project import load_project


def project(projects_dir, name):
    return str(projects_dir / f"{name}.json")


def write_project(tmp_path, body):
    path = tmp_path / "project.json"
    path.write_text(json.dumps(body) if not isinstance(body, str) else body)
    return str(path)


def test_validate_square(projects_dir, capsys):
    """Test the unit square project validates"""
    assert main(["validate", "--project", project(projects_dir, "square")]) == 0
    out = capsys.readouterr().out
    assert "✅ frontier square" in out
    assert "✅ continuity xdy" in out
    assert "✅ bound xdy" in out


def test_validate_reports_open_sides(projects_dir, capsys):
    """Test the band's open sides fail validation while its retractions pass"""
    assert main(["validate", "--project", project(projects_dir, "band")]) == 1
    out = capsys.readouterr().out
    assert "❌ frontier band" in out
    assert "✅ retraction cone" in out
    assert "✅ retraction lift" in out


def test_stokes_commands(projects_dir, capsys, tmp_path):
    """Test Stokes checks on the square projects and the written report"""
    report_path = tmp_path / "stokes.json"
    assert main(["stokes", "--project", project(projects_dir, "square"), "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["command"] == "stokes"
    assert report["passed"] is True
    assert report["reports"]["stokes xdy on Q"]["lhs"] == pytest.approx(1.0)
    assert main(["stokes", "--project", project(projects_dir, "split_square"), "--form", "omega"]) == 0
    assert "✅ stokes omega on square" in capsys.readouterr().out


def test_betti_command(projects_dir, capsys):
    """Test the octahedron prints the Betti numbers of a sphere"""
    assert main(["betti", "--project", project(projects_dir, "octahedron"), "--jobs", "2"]) == 0
    assert "b = (1, 0, 1), euler 2" in capsys.readouterr().out


def test_derham_command(projects_dir, capsys):
    """Test the circle period and the chain map on the split square"""
    assert main(["derham", "--project", project(projects_dir, "circle")]) == 0
    out = capsys.readouterr().out
    assert "period angle on loop = 6" in out
    assert main(["derham", "--project", project(projects_dir, "split_square"), "--duality"]) == 0
    out = capsys.readouterr().out
    assert "✅ de Rham K" in out
    assert "✅ chain map edge" in out


def test_poincare_command(projects_dir, capsys):
    """Test primitives on the band with the cone and the lifted retraction"""
    assert main(["poincare", "--project", project(projects_dir, "band")]) == 0
    out = capsys.readouterr().out
    assert "✅ primitive area by cone: symbolic residual 0" in out
    assert "✅ primitive exact by cone" in out
    assert "✅ semi-differentiable lift" in out
    assert "lipschitz cone >=" in out


def test_reports_are_reproducible(projects_dir, tmp_path):
    """Test a rerun with the same seed writes the same report"""
    paths = [tmp_path / "first.json", tmp_path / "second.json"]
    for path in paths:
        assert main(["poincare", "--project", project(projects_dir, "band"), "--seed", "3",
                     "--report", str(path)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert json.loads(paths[0].read_text())["seed"] == 3


def test_smooth_command(projects_dir, capsys):
    """Test mollification of the sampled quadratic form"""
    assert main(["smooth", "--project", project(projects_dir, "smooth")]) == 0
    out = capsys.readouterr().out
    assert "✅ smoothing quadratic-grid" in out
    assert "✅ d commutes with smoothing quadratic-grid" in out
    assert main(["smooth", "--project", project(projects_dir, "smooth"), "--eps", "0.2,0.1"]) == 0


def test_schema_command(capsys):
    """Test the project JSON schema is printed"""
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "forms" in schema["properties"]
    assert schema["additionalProperties"] is False


def test_bad_projects_exit_with_2(tmp_path, capsys):
    """Test unreadable, malformed and inconsistent project files"""
    assert main(["validate", "--project", str(tmp_path / "missing.json")]) == 2
    assert main(["validate", "--project", write_project(tmp_path, "{not json")]) == 2
    assert main(["validate", "--project", write_project(tmp_path, {"unknown": []})]) == 2
    assert main(["validate", "--project", write_project(tmp_path, {"version": "2"})]) == 2
    out = capsys.readouterr().out
    assert "❌ cannot read project file" in out
    assert "❌ invalid project file: unknown" in out


def test_stokes_needs_matching_degrees(projects_dir, capsys):
    """Test a project without a form/chain pair of matching degrees"""
    assert main(["stokes", "--project", project(projects_dir, "circle")]) == 2
    assert "no form/chain pair" in capsys.readouterr().out


def test_missing_project_argument():
    """Test argparse refuses a command without a project"""
    with pytest.raises(SystemExit):
        main(["validate"])


def test_overrides_win_over_run_block(projects_dir):
    """Test command-line settings replace the file's run block"""
    loaded = load_project(project(projects_dir, "square"), seed=5)
    assert loaded.settings.seed == 5
    assert loaded.settings.samples == 32


def test_unknown_references(tmp_path):
    """Test references to undefined ids are reported with the offending id"""
    body = {"forms": [{"id": "f", "ambient_dim": 2, "degree": 1, "stratification": "nowhere",
                       "terms": [{"index": [1], "coeff": 1}]}]}
    with pytest.raises(ProjectError) as info:
        load_project(write_project(tmp_path, body))
    assert info.value.witness == {"stratification": "nowhere"}
    body = {"chains": [{"id": "c", "degree": 1, "terms": {"E": 1}}]}
    with pytest.raises(ProjectError):
        load_project(write_project(tmp_path, body))
    body = {"forms": [{"id": "f", "ambient_dim": 2, "degree": 1, "terms": [{"index": [1], "coeff": "x1 +"}]}]}
    with pytest.raises(ProjectError):
        load_project(write_project(tmp_path, body))


def test_polynomial_retraction_names_time(tmp_path):
    """Test retraction components may use t for the time variable"""
    body = {"retractions": [{"id": "r", "kind": "polynomial", "ambient_dim": 2, "components": ["t*x1", "t**2*x2"]}]}
    r = load_project(write_project(tmp_path, body)).retraction("r")
    assert r.evaluate_exact([2, 3], 1) == (2, 3)
    assert r.evaluate_exact([2, 3], 0) == (0, 0)


def test_stokes_through_registered_split(projects_dir, tmp_path, capsys):
    """Test a chain cell crossing the axis is checked through its registered split"""
    report_path = tmp_path / "split.json"
    assert main(["stokes", "--project", project(projects_dir, "split_plane"), "--report", str(report_path)]) == 0
    assert "✅ stokes omega on X" in capsys.readouterr().out
    report = json.loads(report_path.read_text())["reports"]["stokes omega on X"]
    assert report["lhs"] == pytest.approx(0.5)
    assert set(report["per_cell"]) == {"Xu", "Xd"}
    body = json.loads((projects_dir / "split_plane.json").read_text())
    body["chains"][0]["splits"] = {}
    assert main(["stokes", "--project", write_project(tmp_path, body)]) == 2
    assert "not contained in a single stratum" in capsys.readouterr().out


def test_stokes_jobs_match_serial(projects_dir, tmp_path):
    """Test --jobs 2 gives the same Stokes reports as a serial run"""
    reports = []
    for jobs in ("1", "2"):
        path = tmp_path / f"jobs{jobs}.json"
        assert main(["stokes", "--project", project(projects_dir, "split_square"), "--jobs", jobs,
                     "--report", str(path)]) == 0
        written = json.loads(path.read_text())
        assert written["settings"]["jobs"] == int(jobs)
        reports.append(written["reports"])
    assert reports[0] == reports[1]


def test_poincare_with_lifted_retraction(projects_dir, capsys):
    """Test the lifted retraction of the band gets weakly checked primitives"""
    assert main(["poincare", "--project", project(projects_dir, "band"), "--retraction", "lift"]) == 0
    out = capsys.readouterr().out
    assert "✅ primitive area by lift: weak residual" in out
    assert "✅ primitive exact by lift: weak residual" in out


def test_tol_belongs_to_stokes(projects_dir):
    """Test --tol is a Stokes option only"""
    with pytest.raises(SystemExit):
        main(["validate", "--project", project(projects_dir, "square"), "--tol", "1e-6"])
    assert main(["stokes", "--project", project(projects_dir, "square"), "--tol", "1e-6"]) == 0
