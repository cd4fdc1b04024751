import numpy as np
import pytest
from hypothesis import given, strategies as st

from nirsbladder.errors import ConfigError, RangeError, SceneError
from nirsbladder.media import Defaults, OpticalMedium, water_mu_a
from nirsbladder.scene import (build_abdomen_scene, build_black_scene, build_phantom_scene,
                               fill_height_cm, medium_at, scene_from_config)


@pytest.mark.parametrize("wl, mu", [(890, 0.058), (970, 0.481), (1450, 32.778)])
def test_water_anchors(wl, mu):
    assert water_mu_a(wl) == mu


def test_water_outside_table_names_range():
    with pytest.raises(RangeError, match="890"):
        water_mu_a(700)


@given(st.floats(890, 1450), st.floats(890, 1450))
def test_water_monotone(a, b):
    lo, hi = sorted((a, b))
    assert water_mu_a(lo) <= water_mu_a(hi)


@given(st.floats(0, 1))
def test_water_piecewise_linear(t):
    x = 890 + t * 80
    assert water_mu_a(x) == pytest.approx(0.058 + t * (0.481 - 0.058), rel=1e-12)


def test_medium_validation():
    with pytest.raises(ConfigError):
        OpticalMedium(-1, 1, 0.9, 1.4, "bad")
    with pytest.raises(ConfigError):
        OpticalMedium(0.1, 1, 1.5, 1.4, "bad")
    with pytest.raises(ConfigError):
        OpticalMedium(0.1, 1, 0.9, 0.9, "bad")


def test_defaults_medium_mus_scale(defaults):
    m1 = defaults.medium("muscle", 970, mus_scale=1.0)
    m2 = defaults.medium("muscle", 970, mus_scale=2.0)
    assert m2.mu_s == 2 * m1.mu_s and m2.mu_a == m1.mu_a
    assert m1.mu_a == pytest.approx(0.75 * 0.481 + 0.05)


def test_defaults_env_override(tmp_path, monkeypatch, defaults):
    import yaml

    data = {k: v for k, v in defaults.data.items() if not k.startswith("_")}
    data["version"] = "test-override"
    p = tmp_path / "d.yaml"
    p.write_text(yaml.safe_dump(data))
    monkeypatch.setenv("NIRSBLADDER_DEFAULTS", str(p))
    d = Defaults.load()
    assert d.version == "test-override"
    assert d.provenance()["source"] == str(p)


def test_abdomen_layers_and_voxels():
    s = build_abdomen_scene()
    assert s.layer_boundaries == (10, 12, 22, 150)
    assert s.grid.n_voxels == 150 ** 3


def test_abdomen_layer_sum_checked():
    with pytest.raises(SceneError):
        build_abdomen_scene({"layers": [(10, "air"), (2, "dermis"), (10, "fat"), (100, "muscle")]})


@pytest.mark.parametrize("z, medium", [(5, "air"), (11, "dermis"), (15, "fat"), (100, "muscle")])
def test_abdomen_medium_at(z, medium):
    assert medium_at(build_abdomen_scene(), (0.0, 0.0, z)).label == medium


@pytest.mark.parametrize("v, h", [(300, 4.6875), (500, 7.8125), (64, 1.0)])
def test_fill_height(v, h):
    assert fill_height_cm(v) == h


def test_phantom_range():
    with pytest.raises(RangeError):
        build_phantom_scene(513)
    with pytest.raises(RangeError):
        build_phantom_scene(-1)


def test_phantom_contents():
    empty = build_phantom_scene(0)
    assert medium_at(empty, (110.0, 0.0, 30.0)).label == "air"
    s = build_phantom_scene(300)
    assert medium_at(s, (110.0, 0.0, 20.0 + 46.0)).label == "water"
    assert medium_at(s, (110.0, 0.0, 20.0 + 48.0)).label == "air"
    assert medium_at(s, (110.0, 0.0, 10.0)).label == "slab"
    assert medium_at(s, (40.0, 0.0, 50.0)).label == "slab"
    assert medium_at(s, (-10.0, 0.0, 5.0)).label == "air"


def test_phantom_monotone_fill():
    prev = None
    for v in (0, 50, 100, 300, 500, 512):
        w = build_phantom_scene(v).water_voxels()
        if prev is not None:
            assert not np.any(prev & ~w)
            assert w.sum() >= prev.sum()
        prev = w


def test_partition_random_points():
    s = build_phantom_scene(300)
    rng = np.random.default_rng(1)
    lo = np.array([b[0] for b in s.bounds])
    hi = np.array([b[1] for b in s.bounds])
    pts = lo + rng.random((100_000, 3)) * (hi - lo)
    idx = ((pts - lo) // s.voxel_resolution).astype(int)
    labels = s.grid.labels[idx[:, 0], idx[:, 1], idx[:, 2]]
    assert labels.max() < len(s.media_order)
    for p in pts[:200]:
        assert medium_at(s, tuple(p)).label in s.media_order


def test_voxel_agrees_with_analytic_at_centres():
    s = build_abdomen_scene({"inclusion": {"volume_ml": 300}})
    rng = np.random.default_rng(2)
    for _ in range(500):
        i, j, k = (int(rng.integers(0, n)) for n in s.grid.shape)
        c = tuple(s.bounds[a][0] + (q + 0.5) * s.voxel_resolution for a, q in enumerate((i, j, k)))
        assert s.media_order[s.grid.labels[i, j, k]] == s.analytic_medium(c)


def test_black_scene_and_config_builder():
    b = build_black_scene()
    assert b.media_order == ("black_foam",)
    s = scene_from_config({"builder": "phantom", "volume_ml": 100})
    assert s.inclusion.volume_ml == 100
    with pytest.raises(ConfigError):
        scene_from_config({"builder": "nope"})
    with pytest.raises(ConfigError):
        scene_from_config({"layers": [[1, "air"]]})


def test_scene_hash_stable():
    assert build_phantom_scene(100).hash == build_phantom_scene(100).hash
    assert build_phantom_scene(100).hash != build_phantom_scene(300).hash
