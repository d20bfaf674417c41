import pytest
from typer.testing import CliRunner

from app.errors import (
    ArtifactIOError,
    NumericalBlowUpError,
    ScenarioValidationError,
    SingularStencilError,
    StabilityError,
)
from app.interface.cli import (
    EXIT_FAILURE,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    cli,
    dry_run,
    exit_code_for,
    resolve_scenario,
)
from app.scenarios import list_scenarios

runner = CliRunner()


def _write(tmp_path, text, name="tiny.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _run_dirs(root, name):
    return [p for p in (root / name).iterdir() if p.is_dir()]


def test_exit_codes():
    assert exit_code_for(ScenarioValidationError([])) == EXIT_VALIDATION
    assert exit_code_for(StabilityError(1e-3, 1e-4)) == EXIT_VALIDATION
    assert exit_code_for(NumericalBlowUpError(7)) == EXIT_NUMERICAL
    assert exit_code_for(SingularStencilError("dup", 3)) == EXIT_NUMERICAL
    assert exit_code_for(ArtifactIOError("disk")) == EXIT_IO
    assert exit_code_for(RuntimeError("boom")) == EXIT_FAILURE


@pytest.mark.parametrize("name", [n for n in list_scenarios() if n != "gridded"])
def test_bundled_scenarios_pass_stability_check(name):
    dry_run(resolve_scenario(name))


def test_dry_run_writes_nothing(tmp_path):
    result = runner.invoke(cli, ["run", "homogeneous_desk", "--dry-run", "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_OK, result.output
    assert not (tmp_path / "out").exists()


def test_dry_run_reports_unstable_step(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text(dt=0.001))
    result = runner.invoke(cli, ["run", path, "--dry-run"])
    assert result.exit_code == EXIT_VALIDATION
    forced = runner.invoke(cli, ["run", path, "--dry-run", "--force"])
    assert forced.exit_code == EXIT_OK
    assert forced.output.count("국소 한계") >= 2
    assert "(위반)" in forced.output


def test_non_finite_value_exits_with_validation_code(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text(n_steps="1e400"))
    result = runner.invoke(cli, ["run", path, "--dry-run"])
    assert result.exit_code == EXIT_VALIDATION
    assert "time.n_steps" in result.output


def test_invalid_scenario_exit_code(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text(sx=-5))
    result = runner.invoke(cli, ["run", path, "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_VALIDATION
    assert "source" in result.output


def test_missing_scenario_exit_code(tmp_path):
    result = runner.invoke(cli, ["run", str(tmp_path / "nothing.cfg")])
    assert result.exit_code == EXIT_IO


def test_unknown_backend_override(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text())
    result = runner.invoke(cli, ["run", path, "--backend", "fem", "--dry-run"])
    assert result.exit_code == EXIT_VALIDATION


def test_run_writes_artifacts(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text())
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", path, "--out", str(out), "--threads", "1"])
    assert result.exit_code == EXIT_OK, result.output
    (run_dir,) = _run_dirs(out, "tiny")
    names = {p.name for p in run_dir.iterdir()}
    assert {
        "scenario.cfg", "snapshot_0.002000.csv", "snapshot_0.004000.csv", "seismogram.csv",
        "probes.csv", "diagnostics.log", "summary.json",
    } <= names


def test_run_with_fdm_backend_override(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text())
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", path, "--out", str(out), "--backend", "fdm"])
    assert result.exit_code == EXIT_OK, result.output
    (run_dir,) = _run_dirs(out, "tiny")
    assert "backend = fdm" in (run_dir / "scenario.cfg").read_text(encoding="utf-8")


def test_nodes_command(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text())
    out = tmp_path / "out"
    result = runner.invoke(cli, ["nodes", path, "--out", str(out), "--dump-operator", "--threads", "1"])
    assert result.exit_code == EXIT_OK, result.output
    (run_dir,) = _run_dirs(out, "tiny")
    assert {"nodes.csv", "operator.csv"} <= {p.name for p in run_dir.iterdir()}


def test_converge_command(tmp_path, scenario_text):
    path = _write(tmp_path, scenario_text(backend="fdm"))
    result = runner.invoke(
        cli,
        ["converge", path, "--spacings", "2,1", "--probe-x", "15", "--probe-z", "15", "--t-probe", "0.003"],
    )
    assert result.exit_code == EXIT_OK, result.output
    assert "수렴 연구" in result.output


def test_compare_command(tmp_path, scenario_text):
    path_a = _write(tmp_path, scenario_text(), "a.cfg")
    path_b = _write(tmp_path, scenario_text(name="tiny_fdm", backend="fdm"), "b.cfg")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["compare", path_a, path_b, "--out", str(out), "--circle-radius", "5"])
    assert result.exit_code == EXIT_OK, result.output
    (run_dir,) = _run_dirs(out, "tiny_vs_tiny_fdm")
    assert (run_dir / "summary.json").exists()
