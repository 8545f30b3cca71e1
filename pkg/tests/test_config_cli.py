import json
import math

import numpy as np
import pytest

from ecoupler.cli import run
from ecoupler.config import ConfigError, config_from_dict, load_config, parse_slip
from ecoupler.geometry import CouplerSpec
from ecoupler.postprocess import CURVE_HEADER, TorqueSpeedCurve
from ecoupler.vtk import read_vtk_cell_data

COARSE_MESH = {"n_theta": 120, "inner_yoke": 4, "airgap": 3, "cs": 2, "outer_yoke": 3}


def ref_dict():
    return json.loads(load_config(None).to_json())


@pytest.fixture
def small_config(tmp_path):
    data = ref_dict()
    data["mesh"].update(COARSE_MESH)
    data["sweep"] = {"unit": "rpm", "list": [0, 500, 1000, 2000, 3000, 4500]}
    path = tmp_path / "small.json"
    path.write_text(json.dumps(data))
    return path


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


# -- configuration ---------------------------------------------------------

def test_bundled_config_is_reference_device(ref_config):
    assert ref_config.coupler == CouplerSpec()
    mats = ref_config.material_map()
    assert mats.pm.H_c == 870e3
    assert mats.conductor.sigma == 5.8e7
    slips = ref_config.sweep.slips()
    assert len(slips) == 25 and slips[0] == 0.0 and slips[-1] == 480.0


def test_round_trip(ref_config):
    again = config_from_dict(json.loads(ref_config.to_json()))
    assert again == ref_config
    assert again.to_json() == ref_config.to_json()


def test_round_trip_with_list_sweep(small_config):
    cfg = load_config(small_config)
    assert config_from_dict(json.loads(cfg.to_json()), cfg.base_dir) == cfg


def test_lengths_given_in_millimetres():
    data = ref_dict()
    data["coupler"]["g"] = 0.8
    assert config_from_dict(data).coupler.g == pytest.approx(0.8e-3)


@pytest.mark.parametrize("text,expected", [
    ("100rpm", 100 * 2 * math.pi / 60), ("20 rad/s", 20.0), ("5", 5.0), ("-3.5rad/s", -3.5),
    ("1e2 rpm", 100 * 2 * math.pi / 60),
])
def test_parse_slip(text, expected):
    assert parse_slip(text) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("text", ["fast", "10 rps", "", "1.2.3rpm"])
def test_parse_slip_rejects(text):
    with pytest.raises(ConfigError) as info:
        parse_slip(text)
    assert info.value.key == "--slip"


def test_sweep_units_converted():
    data = ref_dict()
    data["sweep"] = {"unit": "rpm", "list": [600, 60]}
    assert config_from_dict(data).sweep.slips() == pytest.approx([2 * math.pi, 20 * math.pi])


@pytest.mark.parametrize("sweep", [
    {"unit": "rpm"},
    {"unit": "rpm", "list": [1], "range": {"start": 0, "stop": 1, "num": 2}},
])
def test_sweep_needs_exactly_one_of_range_or_list(sweep):
    data = ref_dict()
    data["sweep"] = sweep
    with pytest.raises(ConfigError, match="exactly one"):
        config_from_dict(data)


@pytest.mark.parametrize("mutate,key", [
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d["coupler"].update(wheels=4), "coupler.wheels"),
    (lambda d: d["coupler"].update(g=0), "coupler.g"),
    (lambda d: d["coupler"].update(N_pm=5), "coupler.N_pm"),
    (lambda d: d["materials"].update(shaft="wood"), "materials.shaft"),
    (lambda d: d["materials"].update(H_c=-1), "materials.H_c"),
    (lambda d: d["mesh"].update(airgap=1.5), "mesh.airgap"),
    (lambda d: d["mesh"].update(airgap=0), "mesh"),
    (lambda d: d["solver"].update(newton_tol="tight"), "solver.newton_tol"),
    (lambda d: d["sweep"].update(unit="mph"), "sweep.unit"),
    (lambda d: d["sweep"]["range"].update(num=1), "sweep.range.num"),
    (lambda d: d["slip"].update(unit="hz"), "slip.unit"),
    (lambda d: d["mec"].update(utilization=1.5), "mec.utilization"),
    (lambda d: d.pop("coupler"), "coupler"),
])
def test_invalid_entries_name_their_key(mutate, key):
    data = ref_dict()
    mutate(data)
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.key == key


def test_custom_bh_curve_relative_to_config(tmp_path):
    (tmp_path / "steel.csv").write_text("B,H\n0,0\n1.0,200\n1.5,1500\n2.0,40000\n")
    data = ref_dict()
    data["materials"]["bh_curve"] = "steel.csv"
    mats = load_config(write_config(tmp_path, data)).material_map()
    assert mats.iron.H_of_B(np.array([1.5]))[0] == pytest.approx(1500.0)


def test_iron_shaft_option():
    data = ref_dict()
    data["materials"]["shaft"] = "iron"
    mats = config_from_dict(data).material_map()
    assert mats.shaft is mats.iron


def test_missing_or_broken_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


# -- command line ----------------------------------------------------------

def test_solve_zero_slip(tmp_path):
    assert run(["solve", "--slip", "0", "--out", str(tmp_path)]) == 0
    report = (tmp_path / "report.txt").read_text()
    torque = float(report.split("torque (Arkkio): ")[1].split()[0])
    assert abs(torque) < 1e-4
    assert "mean |J|: 0 A/mm^2, max |J|: 0 A/mm^2" in report
    cells = read_vtk_cell_data(tmp_path / "fields_0.vtk")
    assert np.all(cells["Jz"] == 0)
    assert set(cells) == {"region", "magnet", "Bx", "By", "B", "Jz", "H_rev"}


def test_sweep_writes_curve(small_config, tmp_path):
    assert run(["sweep", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "curve.csv").read_text()
    assert text.splitlines()[0] == ",".join(CURVE_HEADER)
    curve = TorqueSpeedCurve.from_csv(tmp_path / "curve.csv")
    T = curve.column("torque")
    assert len(T) == 6
    i = int(T.argmax())
    assert 0 < i < len(T) - 1
    assert np.all(np.diff(T[: i + 1]) > 0) and np.all(np.diff(T[i:]) < 0)
    report = (tmp_path / "report.txt").read_text()
    assert "peak torque" in report and "thermal-limit slip" in report and "leading half-poles" in report


def test_demag_positive_margin_at_peak_slip(ref_sweep, tmp_path):
    peak = ref_sweep.peak().omega
    assert run(["demag", "--slip", f"{peak}rad/s", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "demag.csv").read_text().splitlines()
    margin = float(rows[1].split(",")[2])
    assert margin > 0


def test_sweep_csv_byte_identical(small_config, tmp_path):
    outs = []
    for i, jobs in enumerate(("1", "1", "3")):
        out = tmp_path / f"run{i}"
        assert run(["sweep", "--config", str(small_config), "--out", str(out), "--jobs", jobs]) == 0
        outs.append((out / "curve.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_vtk_output_deterministic(small_config, tmp_path):
    blobs = []
    for i in range(2):
        out = tmp_path / f"v{i}"
        assert run(["solve", "--config", str(small_config), "--slip", "100rpm", "--out", str(out)]) == 0
        blobs.append((out / "fields_10.472.vtk").read_bytes())
    assert blobs[0] == blobs[1]


def test_bad_slip_exit_2(tmp_path):
    assert run(["solve", "--slip", "fast", "--out", str(tmp_path)]) == 2
    assert "--slip" in (tmp_path / "report.txt").read_text()


def test_bad_config_exit_2(tmp_path):
    data = ref_dict()
    data["coupler"]["L_cs"] = -1
    path = write_config(tmp_path, data)
    assert run(["mesh-info", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_unknown_command_exit_2(tmp_path):
    assert run(["explode", "--out", str(tmp_path)]) == 2


def test_nonconvergence_exit_3(small_config, tmp_path):
    data = json.loads(small_config.read_text())
    data["solver"]["max_newton_iters"] = 1
    path = write_config(tmp_path, data, "nc.json")
    out = tmp_path / "o"
    assert run(["solve", "--config", str(path), "--slip", "50", "--out", str(out)]) == 3
    assert "residual history" in (out / "report.txt").read_text()
    assert run(["sweep", "--config", str(path), "--out", str(out)]) == 3
    assert "did not converge" in (out / "report.txt").read_text()


def test_strict_threshold_exit_4(small_config, tmp_path):
    data = json.loads(small_config.read_text())
    data["thresholds"]["min_demag_margin_A_m"] = 1e9
    path = write_config(tmp_path, data, "strict.json")
    assert run(["demag", "--config", str(path), "--slip", "10", "--out", str(tmp_path / "a")]) == 0
    assert run(["demag", "--config", str(path), "--slip", "10", "--strict", "--out", str(tmp_path / "b")]) == 4
    assert "threshold violations" in (tmp_path / "b" / "report.txt").read_text()


def test_thermal_threshold_in_solve(small_config, tmp_path):
    data = json.loads(small_config.read_text())
    data["thresholds"]["thermal_J_A_mm2"] = 1.0
    path = write_config(tmp_path, data, "hot.json")
    assert run(["solve", "--config", str(path), "--slip", "100", "--strict", "--out", str(tmp_path)]) == 4


def test_mec_command(small_config, tmp_path):
    assert run(["mec", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    curve = TorqueSpeedCurve.from_csv(tmp_path / "mec_curve.csv")
    assert len(curve.rows) == 6 and curve.rows[0].torque == 0.0
    assert "B_g0" in (tmp_path / "report.txt").read_text()


def test_mesh_info_command(small_config, tmp_path, capsys):
    assert run(["mesh-info", "--config", str(small_config), "--out", str(tmp_path), "--refine", "1"]) == 0
    out = capsys.readouterr().out
    assert "min_quality" in out and "count_CS,1920" in out
    assert (tmp_path / "mesh.vtk").exists()


def test_oracle_command(small_config, tmp_path):
    assert run(["oracle", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    for name in ("oracle_cylinder.csv", "oracle_mms.csv", "oracle_slab.csv"):
        assert (tmp_path / name).read_text().count("\n") >= 2
    cyl = (tmp_path / "oracle_cylinder.csv").read_text().splitlines()[1].split(",")
    assert abs(float(cyl[2])) < 0.01


def test_log_written(small_config, tmp_path):
    run(["solve", "--config", str(small_config), "--slip", "30", "--out", str(tmp_path)])
    log = (tmp_path / "run.log").read_text()
    assert "Newton iterations" in log and "Peclet" in log
