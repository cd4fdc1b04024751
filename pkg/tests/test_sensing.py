import math

import pytest
from hypothesis import given, strategies as st

from nirsbladder.errors import ConfigError, DomainError, RangeError, SafetyError
from nirsbladder.sensing import (MAX_CODE, AfeConfig, LedModel, PdModel, SampleFrame,
                                 adc_quantize, ambient_cancel, chain, end_to_end, led_power,
                                 noise_free_bits, noise_voltage, pd_current, snr_db,
                                 tia_voltage)

CFG0 = AfeConfig(i_ambient=0.0)
REL = 1e-9


@pytest.mark.parametrize("ma, mw", [(800, 586), (0, 0), (400, 293)])
def test_led_power(ma, mw):
    assert led_power(ma) == pytest.approx(mw, rel=REL)


def test_led_limits():
    with pytest.raises(SafetyError):
        led_power(801)
    with pytest.raises(RangeError):
        led_power(-1)
    with pytest.raises(ConfigError):
        LedModel(anchors=((0, 0), (10, 5), (5, 6)))


@pytest.mark.parametrize("p, i", [(3.18e-6, 1.7808e-6), (0.0, 0.0), (1.0, 0.56)])
def test_pd_current(p, i):
    assert pd_current(p) == pytest.approx(i, rel=REL)


def test_pd_validation():
    with pytest.raises(ConfigError):
        PdModel(responsivity=0)
    with pytest.raises(RangeError):
        pd_current(-1e-9)


@pytest.mark.parametrize("ip, v", [(1e-6, 0.020), (0.0, 0.0), (1.78e-6, 0.0356)])
def test_tia_voltage(ip, v):
    assert tia_voltage(ip, 0.0, CFG0) == pytest.approx(v, rel=REL, abs=0)


currents = st.just(0.0) | st.floats(1e-18, 1e-4)


@given(currents, currents)
def test_tia_linear(a, b):
    assert tia_voltage(a + b, 0.0, CFG0) == pytest.approx(
        tia_voltage(a, 0.0, CFG0) + tia_voltage(b, 0.0, CFG0), rel=1e-12, abs=1e-18)
    assert tia_voltage(2 * a, 0.0, CFG0) == 2 * tia_voltage(a, 0.0, CFG0)
    assert tia_voltage(0.0, a + b, CFG0) == pytest.approx(
        tia_voltage(0.0, a, CFG0) + tia_voltage(0.0, b, CFG0), rel=1e-12, abs=1e-18)


def test_ambient_level():
    assert tia_voltage(0.0, 0.2e-6) == pytest.approx(4.0e-3, rel=REL)


@pytest.mark.parametrize("v, code", [(238.42e-9, 1), (0.0, 0), (1.0, MAX_CODE),
                                     (-0.5, 0), (2.0, MAX_CODE)])
def test_adc_examples(v, code):
    assert adc_quantize(v) == code


def test_full_scale_identity():
    assert abs(2 ** 22 * 238.42e-9 - 1.0) < 1e-4


@given(st.floats(0, 1.0 - 1e-9))
def test_quantization_bound(v):
    lsb = AfeConfig().volts_per_lsb
    assert abs(adc_quantize(v) * lsb - v) < lsb


@given(st.floats(0, 1.0), st.floats(0, 1.0))
def test_adc_monotone(a, b):
    lo, hi = sorted((a, b))
    assert adc_quantize(lo) <= adc_quantize(hi)


@pytest.mark.parametrize("i, n", [(1e-6, math.log2(1e-6 / 6.6e-11)), (6.6e-11, 0.0),
                                  (0.7e-6, math.log2(0.7e-6 / 6.6e-11))])
def test_noise_free_bits(i, n):
    assert noise_free_bits(i, 10e-12) == pytest.approx(n, rel=REL, abs=1e-12)


def test_noise_free_bits_values():
    assert noise_free_bits(1e-6) == pytest.approx(13.887, abs=1e-3)
    assert noise_free_bits(0.7e-6) == pytest.approx(13.373, abs=1e-3)
    with pytest.raises(DomainError):
        noise_free_bits(0.0)


@pytest.mark.parametrize("n, v", [(22, 238.42e-9), (10, 238.42e-9 * 2 ** 12),
                                  (13.89, 238.42e-9 * 2 ** 8.11)])
def test_noise_voltage(n, v):
    assert noise_voltage(n) == pytest.approx(v, rel=REL)


def test_noise_voltage_values():
    assert noise_voltage(10) == pytest.approx(0.977e-3, rel=1e-3)
    assert noise_voltage(13.89) == pytest.approx(65.8e-6, rel=2e-3)
    with pytest.raises(DomainError):
        noise_voltage(23)


@pytest.mark.parametrize("vd, vn, db", [(1.0, 1.0, 0.0), (100.0, 1.0, 40.0),
                                        (0.0161, 0.977e-3, 20 * math.log10(0.0161 / 0.977e-3))])
def test_snr(vd, vn, db):
    assert snr_db(vd, vn) == pytest.approx(db, rel=REL, abs=1e-12)


def test_snr_value():
    assert snr_db(0.0161, 0.977e-3) == pytest.approx(24.3, abs=0.05)


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(1.001, 10))
def test_snr_monotone(vd, vn, k):
    assert snr_db(vd * k, vn) > snr_db(vd, vn)
    assert snr_db(vd, vn * k) < snr_db(vd, vn)


def test_ambient_cancel_examples():
    f = SampleFrame(1, 0.0, 0, 0, 0.0201, 3.96e-3)
    assert ambient_cancel(f) == pytest.approx(0.0161 - 0.0, abs=1e-4)
    assert ambient_cancel(f) == pytest.approx(0.0201 - 3.96e-3, rel=REL)
    assert ambient_cancel(SampleFrame(1, 0.0, 0, 0, 0.5, 0.0)) == 0.5
    assert ambient_cancel(SampleFrame(1, 0.0, 0, 0, 0.1, 0.2)) == 0.0


def test_chain_worked_example():
    rep = chain(5.4e-6, 800)
    assert rep.pd_power_w == pytest.approx(3.1644e-6, rel=1e-4)
    assert rep.i_pleth == pytest.approx(1.772e-6, rel=1e-3)
    assert rep.v_on_analog - rep.v_ambient_analog == pytest.approx(0.0354, rel=2e-3)


def test_chain_zero_current_and_black():
    assert chain(5.4e-6, 0).frame.v_cancelled == 0.0
    rep = chain(0.0, 800)
    assert rep.frame.adc_code_on == rep.frame.adc_code_ambient
    assert rep.no_signal


@given(st.floats(0, 1e-4), st.floats(0, 800))
def test_chain_equals_manual_composition(frac, ma):
    cfg = AfeConfig()
    rep = chain(frac, ma, cfg)
    i = pd_current(led_power(ma) * 1e-3 * frac)
    v_on = tia_voltage(i, cfg.i_ambient, cfg)
    v_amb = tia_voltage(0.0, cfg.i_ambient, cfg)
    f = SampleFrame.from_codes(1, 0.0, adc_quantize(v_on, cfg), adc_quantize(v_amb, cfg), cfg)
    assert rep.frame == f
    assert rep.frame.v_cancelled == ambient_cancel(f)


def test_end_to_end_matches_chain():
    from nirsbladder.scene import build_abdomen_scene
    from nirsbladder.transport import ProbeLayout, TransportConfig, simulate

    scene, probe = build_abdomen_scene(), ProbeLayout.line([1.0, 2.0])
    res = simulate(scene, probe, TransportConfig(n_photons=2000))
    reps = end_to_end(scene, probe, 800, result=res)
    for i, (rep, det) in enumerate(zip(reps, res.detectors)):
        assert rep.frame == chain(det.detected_fraction, 800, optode_id=i + 1).frame


def test_afe_validation():
    with pytest.raises(ConfigError):
        AfeConfig(adc_bits=16)
    with pytest.raises(ConfigError):
        AfeConfig(duty_cycle=0)
    with pytest.raises(RangeError):
        SampleFrame(1, 0.0, MAX_CODE + 1, 0, 0.0, 0.0)
