"""Command-line interface: subcommands, artifacts, exit codes."""

import json

import numpy as np
import pytest

from spinchain.cli import EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, main
from spinchain.core import (
    ControlChannel,
    ShapedPulse,
    SpinSystem,
    save_spin_system,
)
from spinchain.sequences import write_pulse


@pytest.fixture()
def system3(tmp_path):
    path = tmp_path / "system.json"
    save_spin_system(SpinSystem.chain([88.05, 88.05]), path)
    return path


@pytest.fixture()
def pulse_file(tmp_path):
    rng = np.random.default_rng(0)
    pulse = ShapedPulse((ControlChannel(2, "y"),), 1e-4, rng.uniform(-50, 50, (40, 1)))
    path = tmp_path / "pulse.json"
    write_pulse(pulse, path)
    return path


def read_json(path):
    return json.loads(path.read_text())


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()


def test_simulate_writes_result_and_manifest(tmp_path, system3, pulse_file):
    out = tmp_path / "run"
    code = main(
        ["simulate", "--system", str(system3), "--pulse", str(pulse_file), "--out", str(out)]
    )
    assert code == EXIT_OK
    result = read_json(out / "result.json")
    assert -1.0 <= result["fidelity"] <= 1.0
    manifest = read_json(out / "manifest.json")
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 0
    assert any(p.endswith("result.json") for p in manifest["outputs"])
    assert "spinchain" in manifest["versions"]


def test_conventional_equal_chain(tmp_path, system3):
    out = tmp_path / "run"
    assert main(["conventional", "--system", str(system3), "--out", str(out)]) == EXIT_OK
    result = read_json(out / "result.json")
    assert result["duration_s"] == pytest.approx(1.0 / 88.05)
    assert result["fidelity"] == pytest.approx(1.0, abs=1e-9)
    assert (out / "sequence.json").exists()


def test_analytic3_emits_pulse_artifacts(tmp_path, system3):
    out = tmp_path / "run"
    code = main(
        ["analytic3", "--system", str(system3), "--out", str(out), "--dt", "4e-5"]
    )
    assert code == EXIT_OK
    for name in ("pulse.json", "pulse.csv", "pulse.svg", "result.json", "manifest.json"):
        assert (out / name).exists(), name
    result = read_json(out / "result.json")
    assert result["fidelity"] > 0.99999
    assert result["duration_s"] == pytest.approx(0.0098356, abs=1e-5)


def test_grape_converges_and_reports(tmp_path, system3):
    out = tmp_path / "run"
    code = main(
        [
            "grape", "--system", str(system3), "--out", str(out),
            "--tp", "0.0098", "--segments", "40", "--restarts", "2",
        ]
    )
    assert code == EXIT_OK
    assert read_json(out / "result.json")["converged"] is True


def test_grape_nonconverged_exit_code(tmp_path, system3):
    out = tmp_path / "run"
    code = main(
        [
            "grape", "--system", str(system3), "--out", str(out),
            "--tp", "0.005", "--segments", "40", "--restarts", "1",
        ]
    )
    assert code == EXIT_NONCONVERGED


def test_top_sweep_outputs_curve(tmp_path, system3):
    out = tmp_path / "run"
    code = main(
        [
            "top", "--system", str(system3), "--out", str(out),
            "--t-grid", "0.0094:0.0098:0.0002", "--segments", "40", "--restarts", "2",
        ]
    )
    assert code == EXIT_OK
    assert (out / "top.csv").read_text().startswith("t_p,fidelity")
    assert read_json(out / "result.json")["crossing_s"] == pytest.approx(0.0098)


def test_dante_and_profile_commands(tmp_path, system3):
    pulse_out = tmp_path / "pulse_run"
    assert (
        main(["analytic3", "--system", str(system3), "--out", str(pulse_out), "--dt", "4e-5"])
        == EXIT_OK
    )
    dante_out = tmp_path / "dante_run"
    code = main(
        [
            "dante", "--pulse", str(pulse_out / "pulse.json"), "--out", str(dante_out),
            "--rf-amp", "4402.5",
        ]
    )
    assert code == EXIT_OK
    result = read_json(dante_out / "result.json")
    assert result["hard_pulses"] == 4
    np.testing.assert_allclose(result["flip_angles_deg"], 45.0, atol=0.01)

    prof_out = tmp_path / "profile_run"
    code = main(
        [
            "profile", "--system", str(system3), "--pulse", str(dante_out / "dante.json"),
            "--out", str(prof_out), "--offset-range", "500", "--steps", "5",
        ]
    )
    assert code == EXIT_OK
    assert (prof_out / "profile.csv").exists()
    assert (prof_out / "profile.svg").exists()


def test_plot_from_saved_pulse(tmp_path, pulse_file):
    out = tmp_path / "plots"
    code = main(["plot", "--result", str(pulse_file), "--kind", "pulse", "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "pulse.svg").exists()


def test_missing_system_file_is_config_error(tmp_path):
    code = main(
        ["conventional", "--system", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]
    )
    assert code == EXIT_CONFIG


def test_bad_grid_is_config_error(tmp_path, system3):
    code = main(
        [
            "top", "--system", str(system3), "--out", str(tmp_path / "o"),
            "--t-grid", "0.01-0.02",
        ]
    )
    assert code == EXIT_CONFIG


def test_wrong_spin_count_is_config_error(tmp_path):
    path = tmp_path / "system4.json"
    save_spin_system(SpinSystem.chain([50.0, 50.0, 50.0]), path)
    code = main(["analytic3", "--system", str(path), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG


def test_malformed_pulse_file_is_config_error(tmp_path, system3):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(
        ["simulate", "--system", str(system3), "--pulse", str(bad), "--out", str(tmp_path / "o")]
    )
    assert code == EXIT_CONFIG


def test_manifest_is_deterministic(tmp_path, system3):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["conventional", "--system", str(system3), "--out", str(out)]) == EXIT_OK
        doc = read_json(out / "manifest.json")
        doc["parameters"].pop("out")
        doc.pop("wall_time_s")
        outs.append(json.dumps({k: v for k, v in doc.items() if k != "outputs"}))
    assert outs[0] == outs[1]
