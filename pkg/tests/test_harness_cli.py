import hashlib
import json
import os

import pytest

from nirsbladder import cli
from nirsbladder import harness as H
from nirsbladder.analysis import format_session, read_session
from nirsbladder.errors import ConfigError, SimulationFault
from nirsbladder.sensing import chain


def test_offset_geometry():
    assert H.offset_center_mm(0)[0] < 0 < H.offset_center_mm(1)[0]
    assert H.offset_center_mm(23)[0] > 220
    assert H.over_bladder_offsets() == (10, 11, 12, 13)
    assert H.tissue_offsets() == (3, 4, 5, 18, 19, 20)


def test_scan_axis_must_increase():
    with pytest.raises(ConfigError):
        H.ScanResult("x", "offset_cm", [{"offset_cm": 2}, {"offset_cm": 1}])


def test_volts_per_fraction_matches_chain():
    k = H.volts_per_fraction(800)
    a = chain(0.0, 800, leak_fraction=0.0)
    b = chain(5e-6, 800)
    assert (b.v_on_analog - a.v_on_analog) == pytest.approx(k * 5e-6, rel=1e-12)


def test_noise_floor():
    assert H.noise_floor_v() == pytest.approx(2e5 * 0.1 * 6.6e-11, rel=1e-12)


def test_solve_leak_fraction():
    f = H.solve_leak_fraction(1e-8, 2e-5, 0.0048 / 0.035)
    assert (1e-8 + f) / (2e-5 + f) == pytest.approx(0.0048 / 0.035, rel=1e-12)
    with pytest.raises(ConfigError):
        H.solve_leak_fraction(1e-5, 2e-5, 0.1)


def test_phantom_scan_rows_and_summary():
    from nirsbladder.transport import TransportConfig

    s = H.run_phantom_scan(300, 970, TransportConfig(n_photons=2000), offsets=(0, 4, 11, 23))
    assert s.column("offset_cm") == [0, 4, 11, 23]
    assert s.summary["over_bladder_offsets"] == [11]
    assert s.summary["tissue_offsets"] == [4]
    assert "dip_depth_v" in s.summary
    assert s.provenance["defaults"]["version"]
    assert s.to_csv().splitlines()[0].startswith("offset_cm,x_mm,detected_fraction")


def test_lateral_study_calibrated_and_disabled():
    from nirsbladder.transport import TransportConfig

    t = TransportConfig(n_photons=20_000)
    cal = H.run_lateral_study(t, None, sd_cm=2.0, led_current_ma=100)["summary"]
    assert cal["ratio"] == pytest.approx(0.0048 / 0.035, abs=0.005)
    off = H.run_lateral_study(t, 0.0, sd_cm=2.0, led_current_ma=100)["summary"]
    assert off["ratio"] < 0.01
    assert off["abdomen_v"] > 0 and off["black_v"] >= 0


def _run(argv):
    return cli.main(argv)


def _read_dir(d):
    return {n: open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))}


def test_manifest_hashes_and_no_timestamps(tmp_path, capsys):
    out = tmp_path / "a"
    assert _run(["phantom-scan", "--offsets", "4,11", "--photons", "2000", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    for name, digest in m["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    prov = m["provenance"]["scans"][0]
    assert prov["seed"] == 20240501 and prov["transport_hash"]
    assert m["provenance"]["cli"]["args"]["photons"] == 2000
    out2 = tmp_path / "b"
    _run(["phantom-scan", "--offsets", "4,11", "--photons", "2000", "--out", str(out2)])
    assert _read_dir(out) == _read_dir(out2)


def test_workers_do_not_change_outputs(tmp_path):
    dirs = []
    for w in (1, 4, 8):
        d = tmp_path / f"w{w}"
        assert _run(["sd-sweep", "--photons", "3000", "--batch-size", "500", "--workers", str(w),
                     "--out", str(d)]) == 0
        dirs.append(_read_dir(d))
    assert dirs[0] == dirs[1] == dirs[2]


def test_replay_reproduces_outputs(tmp_path):
    a = tmp_path / "a"
    assert _run(["lateral", "--photons", "3000", "--seed", "9", "--out", str(a)]) == 0
    b = tmp_path / "b"
    assert _run(["replay", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert _read_dir(a) == _read_dir(b)


def test_synth_and_analyze(tmp_path, capsys):
    s = tmp_path / "s"
    assert _run(["synth-session", "--seconds", "20", "--out", str(s)]) == 0
    csv_path = s / "session.csv"
    text = csv_path.read_text()
    assert format_session(read_session(csv_path)) == text
    a = tmp_path / "a"
    assert _run(["analyze", "--session", str(csv_path), "--svg", "--out", str(a)]) == 0
    assert (a / "report.txt").exists() and (a / "optode_1.svg").exists()
    assert "p-values" in capsys.readouterr().out


def test_exit_code_config_errors(tmp_path):
    assert _run(["phantom-scan", "--volume-ml", "600", "--photons", "10",
                 "--out", str(tmp_path)]) == 2
    assert _run(["abdomen-chain", "--led-ma", "900", "--photons", "10",
                 "--out", str(tmp_path)]) == 2
    assert _run(["simulate", "--scene", str(tmp_path / "none.yaml"), "--probe",
                 str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        _run(["phantom-scan", "--bogus"])
    assert exc.value.code == 2


def test_exit_code_input_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_s,optode_id,adc_code_on,adc_code_ambient,v_on,v_ambient,v_cancelled\n"
                   "0,12,1,1,0,0,0\n")
    assert _run(["analyze", "--session", str(bad), "--out", str(tmp_path / "o")]) == 3


def test_exit_code_simulation_fault(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SimulationFault("non-finite photon state", {"photon_index": 0})

    monkeypatch.setattr(H, "simulate", boom)
    assert _run(["abdomen-chain", "--photons", "10", "--out", str(tmp_path)]) == 4


def test_simulate_command(tmp_path):
    scene = tmp_path / "scene.yaml"
    scene.write_text("builder: abdomen\n")
    probe = tmp_path / "probe.yaml"
    probe.write_text("emitters: [{position: [0, 0]}]\ndetectors: [{position: [20, 0]}]\n")
    out = tmp_path / "o"
    assert _run(["simulate", "--scene", str(scene), "--probe", str(probe), "--photons", "2000",
                 "--out", str(out)]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["detectors"][0]["sd_cm"] == pytest.approx(2.0)
    assert res["provenance"]["config_hash"]
