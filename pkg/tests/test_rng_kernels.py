import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from nirsbladder import kernels as K
from nirsbladder.rng import PhotonRng, StreamArray


def _numpy_philox_doubles(seed, index, n):
    bg = np.random.Philox(key=np.array([seed, index], dtype=np.uint64))
    raw = bg.random_raw(n)
    return [float(((int(x) >> 11) + 1) * 2.0 ** -53) for x in raw]


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 40))
def test_stream_matches_numpy_philox(seed, index):
    rng = PhotonRng(seed, index)
    assert [rng.uniform() for _ in range(9)] == _numpy_philox_doubles(seed, index, 9)


def test_stream_array_matches_scalar():
    idx = np.arange(10, 20)
    sa = StreamArray(123, idx)
    scal = [PhotonRng(123, int(i)) for i in idx]
    for _ in range(7):
        sel = np.arange(len(idx))
        assert sa.draw(sel).tolist() == [r.uniform() for r in scal]


def test_uniform_in_half_open_unit_interval():
    rng = PhotonRng(5, 0)
    u = np.array([rng.uniform() for _ in range(20_000)])
    assert u.min() > 0.0 and u.max() <= 1.0
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_fresnel_normal_incidence():
    R, ct = K.fresnel(1.0, 1.4, 1.0)
    assert R == pytest.approx(((1.4 - 1.0) / 2.4) ** 2, rel=1e-12)
    assert ct == pytest.approx(1.0)


def test_fresnel_total_internal_reflection():
    crit = math.asin(1.0 / 1.37)
    R, _ = K.fresnel(1.37, 1.0, math.cos(crit + 0.01))
    assert R == 1.0
    R, _ = K.fresnel(1.37, 1.0, math.cos(crit - 0.01))
    assert R < 1.0


@given(st.floats(1.0, 1.6), st.floats(1.0, 1.6), st.floats(0.01, 1.0))
def test_fresnel_bounded_and_symmetric_at_normal(n1, n2, c):
    R, ct = K.fresnel(n1, n2, c)
    assert 0.0 <= R <= 1.0
    R1, _ = K.fresnel(n1, n2, 1.0)
    R2, _ = K.fresnel(n2, n1, 1.0)
    assert R1 == pytest.approx(R2, abs=1e-15)


@pytest.mark.parametrize("g", [0.0, 0.5, 0.9, -0.3])
def test_hg_mean_cosine_is_g(g):
    rng = PhotonRng(11, 1)
    ct = np.array([K.hg_cos(g, rng.uniform()) for _ in range(100_000)])
    assert np.all(np.abs(ct) <= 1.0)
    assert ct.mean() == pytest.approx(g, abs=0.01)


def test_hg_isotropic_is_uniform():
    rng = PhotonRng(12, 1)
    ct = np.array([K.hg_cos(0.0, rng.uniform()) for _ in range(50_000)])
    assert stats.kstest(ct, stats.uniform(loc=-1, scale=2).cdf).pvalue > 1e-3


@given(st.floats(-1, 1), st.floats(0, 2 * math.pi), st.floats(-0.999, 0.999),
       st.floats(0, 2 * math.pi))
def test_rotate_preserves_unit_norm_and_angle(cz, az, ct, phi):
    s = math.sqrt(1 - cz * cz)
    st_ = np.zeros(K.STATE_LEN)
    st_[K.UX:K.UZ + 1] = s * math.cos(az), s * math.sin(az), cz
    before = st_[K.UX:K.UZ + 1].copy()
    K.rotate(st_, ct, phi)
    after = st_[K.UX:K.UZ + 1]
    assert np.linalg.norm(after) == pytest.approx(1.0, abs=1e-12)
    assert float(before @ after) == pytest.approx(ct, abs=1e-9)
