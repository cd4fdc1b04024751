import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nirsbladder import kernels as K
from nirsbladder.errors import ConfigError, RangeError, SimulationFault
from nirsbladder.media import OpticalMedium
from nirsbladder.rng import PhotonRng
from nirsbladder.scene import build_abdomen_scene, build_slab_scene
from nirsbladder.transport import (Detector, Emitter, PhotonState, ProbeLayout, Terminated,
                                   TransportConfig, TransportResult, detect, launch,
                                   penetration_depth_estimate, propagate, simulate)


@pytest.fixture(scope="module")
def abdomen():
    return build_abdomen_scene()


def _clear_slab(mu_a=1.0, thickness=20.0):
    return build_slab_scene(OpticalMedium(mu_a, 0.0, 0.0, 1.0, "clear"), thickness)


def test_probe_validation():
    with pytest.raises(ConfigError):
        Detector((0, 0), active_area_mm2=0)
    with pytest.raises(ConfigError):
        Detector((0, 0), acceptance_deg=0)
    with pytest.raises(ConfigError):
        Emitter((0, 0), half_angle_deg=95)
    with pytest.raises(ConfigError):
        ProbeLayout([], [])


def test_probe_off_surface_rejected(abdomen):
    with pytest.raises(ConfigError):
        simulate(abdomen, ProbeLayout.pair(4.0, center=(500.0, 0.0)),
                 TransportConfig(n_photons=10))


def test_probe_geometry_and_round_trip(tmp_path):
    p = ProbeLayout.line([4.0, 6.0], origin=(-10.0, 0.0))
    assert p.sd_distance == pytest.approx(4.0)
    assert p.pair_spacing == pytest.approx(2.0)
    q = ProbeLayout.from_dict(p.as_dict())
    assert q.hash == p.hash


def test_zero_cone_launch_is_normal():
    rng = PhotonRng(1, 0)
    s = launch(Emitter((0, 0), half_angle_deg=0.0), rng)
    assert tuple(s.direction) == (0.0, 0.0, 1.0)


def test_launch_polar_angles_within_cone():
    em = Emitter((0, 0), half_angle_deg=10.0)
    cmin = math.cos(math.radians(10.0))
    for i in range(100_000):
        s = launch(em, PhotonRng(3, i))
        assert s.direction[2] >= cmin - 1e-15


def test_launch_mean_polar_angle_matches_cone_integral():
    a = math.radians(10.0)
    analytic = (math.sin(a) - a * math.cos(a)) / (1.0 - math.cos(a))
    em = Emitter((0, 0), half_angle_deg=10.0)
    rng = PhotonRng(4, 0)
    n = 1_000_000
    total = 0.0
    for _ in range(n):
        total += math.acos(min(1.0, launch(em, rng).direction[2]))
    assert total / n == pytest.approx(analytic, rel=0.01)


def test_vacuum_is_straight_and_lossless():
    sc = build_slab_scene(OpticalMedium(0.0, 0.0, 0.0, 1.0, "air"), 20.0)
    d = np.array([0.3, 0.1, 1.0])
    d /= np.linalg.norm(d)
    s = PhotonState.make(sc, (0.0, 0.0, 0.0), d)
    out = propagate(s, sc, PhotonRng(1, 0))
    assert isinstance(out, Terminated) and out.reason == "escaped"
    assert out.state.weight == 1.0
    end = out.state.position
    assert end[2] == pytest.approx(20.0)
    assert end[:2] == pytest.approx(d[:2] / d[2] * 20.0)


def test_beer_lambert_limit():
    probe = ProbeLayout([Emitter((0, 0), 0.0)], [Detector((30.0, 0.0))])
    r = simulate(_clear_slab(1.0, 20.0), probe, TransportConfig(n_photons=1_000_000))
    assert r.escaped_fraction == pytest.approx(math.exp(-2.0), rel=0.005)


def test_black_medium_detects_nothing():
    sc = build_slab_scene(OpticalMedium(1e6, 10.0, 0.9, 1.0, "black"), 20.0)
    r = simulate(sc, ProbeLayout.pair(1.0), TransportConfig(n_photons=100_000))
    assert r.detected_fraction[0] < 1e-9


@pytest.mark.parametrize("pos, direction, hit", [
    ((5.0, 0.0, 0.0), (0.0, 0.0, -1.0), True),
    ((5.0, 0.0, 0.0), (math.sin(math.radians(75)), 0.0, -math.cos(math.radians(75))), False),
    ((5.0 + 1.25 + 2.0, 0.0, 0.0), (0.0, 0.0, -1.0), False),
])
def test_detect_geometry(abdomen, pos, direction, hit):
    s = PhotonState.make(abdomen, pos, direction)
    got = detect(s, ProbeLayout.pair(1.0))
    assert (got is not None) == hit


@pytest.mark.parametrize("sd, depth", [(4.0, 2.0), (4.5, 2.25), (0.0, 0.0)])
def test_penetration_heuristic(sd, depth):
    assert penetration_depth_estimate(sd) == depth


def test_penetration_heuristic_rejects_negative():
    with pytest.raises(RangeError):
        penetration_depth_estimate(-1)


@pytest.mark.parametrize("slot", [K.W, K.UZ, K.X, K.UX])
def test_non_finite_state_raises(abdomen, slot):
    s = PhotonState.make(abdomen, (0.0, 0.0, 15.0), (0.0, 0.0, 1.0))
    s.st[slot] = np.nan
    with pytest.raises(SimulationFault) as exc:
        propagate(s, abdomen, PhotonRng(1, 0))
    assert "position" in exc.value.dump


@pytest.fixture(scope="module")
def small_run(abdomen):
    return simulate(abdomen, ProbeLayout.line([2.0, 3.0]), TransportConfig(n_photons=20_000,
                                                                           batch_size=5_000))


def test_energy_bookkeeping(small_run):
    total = (small_run.absorbed_fraction + small_run.escaped_fraction
             + small_run.total_detected_fraction)
    assert total == pytest.approx(1.0, abs=1e-6)


@given(st.sampled_from([0.0, 0.05, 0.5]), st.floats(0.0, 3.0))
@settings(max_examples=6)
def test_energy_bookkeeping_property(g, mu_a):
    sc = build_slab_scene(OpticalMedium(mu_a, 5.0, g, 1.4, "t"), 10.0)
    r = simulate(sc, ProbeLayout.pair(1.0), TransportConfig(n_photons=500))
    total = r.absorbed_fraction + r.escaped_fraction + r.total_detected_fraction
    assert total == pytest.approx(1.0, abs=1e-6)


def test_same_seed_bit_identical(abdomen, small_run):
    again = simulate(abdomen, ProbeLayout.line([2.0, 3.0]),
                     TransportConfig(n_photons=20_000, batch_size=5_000))
    assert again.to_json() == small_run.to_json()


@pytest.mark.parametrize("workers", [1, 3, 8])
def test_workers_do_not_change_results(abdomen, small_run, workers):
    r = simulate(abdomen, ProbeLayout.line([2.0, 3.0]),
                 TransportConfig(n_photons=20_000, batch_size=5_000, workers=workers))
    assert r.to_json() == small_run.to_json()


def test_different_seed_differs(abdomen, small_run):
    r = simulate(abdomen, ProbeLayout.line([2.0, 3.0]),
                 TransportConfig(n_photons=20_000, batch_size=5_000, seed=1))
    assert r.to_json() != small_run.to_json()


def test_numpy_backend_matches_numba(abdomen):
    probe, cfg = ProbeLayout.line([1.0, 2.0]), TransportConfig(n_photons=2_000)
    a = simulate(abdomen, probe, cfg, backend="numba")
    b = simulate(abdomen, probe, cfg, backend="numpy")
    for da, db in zip(a.detectors, b.detectors):
        assert da.hit_count == db.hit_count
        assert da.weight_sum == pytest.approx(db.weight_sum, rel=1e-9)
    assert a.absorbed_fraction == pytest.approx(b.absorbed_fraction, rel=1e-9)


def test_backend_env_flag(monkeypatch, abdomen):
    monkeypatch.setenv("NIRSBLADDER_BACKEND", "numpy")
    r = simulate(abdomen, ProbeLayout.pair(1.0), TransportConfig(n_photons=200))
    assert r.provenance["backend"] == "numpy"


def test_result_round_trip(small_run):
    again = TransportResult.from_dict(small_run.as_dict())
    assert again.to_json() == small_run.to_json()
    assert small_run.provenance["seed"] == TransportConfig().seed
    assert len(small_run.detectors[0].depth_histogram) == 150


def test_reciprocity(abdomen):
    probe = ProbeLayout.pair(2.0)
    cfg = TransportConfig(n_photons=200_000)
    a = simulate(abdomen, probe, cfg).detectors[0]
    b = simulate(abdomen, probe.swapped(), cfg).detectors[0]
    sigma = math.hypot(a.stderr, b.stderr)
    assert abs(a.detected_fraction - b.detected_fraction) < 3 * sigma


def test_depth_heuristic_brackets_half_sd(abdomen):
    r = simulate(abdomen, ProbeLayout.line([3.0, 4.0, 4.5]), TransportConfig(n_photons=400_000))
    for d in r.detectors:
        assert 0.35 * 10 * d.sd_cm <= d.mean_max_depth_mm <= 0.65 * 10 * d.sd_cm, d.sd_cm
