"""Opto-electronic chain: LED drive, photodiode, two-stage TIA, 22-bit ADC.

Currents are amperes, voltages volts, optical power watts unless a name
says otherwise (``led_power`` works in mA/mW like a datasheet curve).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, RangeError, SafetyError

ADC_BITS = 22
MAX_CODE = 2 ** ADC_BITS - 1
R_SCALE = 100e3  # the first-stage gain is expressed relative to 100 kOhm


@dataclass(frozen=True)
class LedModel:
    """Forward current (mA) to radiant power (mW), piecewise linear through anchors."""

    anchors: tuple = ((0.0, 0.0), (800.0, 586.0))
    wavelength_nm: float = 970.0
    max_current_ma: float = 800.0

    def __post_init__(self):
        a = np.asarray(self.anchors, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2 or len(a) < 2:
            raise ConfigError("LED anchors must be at least two (mA, mW) pairs")
        if a[0, 0] != 0.0 or a[0, 1] != 0.0:
            raise ConfigError("LED curve must start at (0 mA, 0 mW)")
        if np.any(np.diff(a[:, 0]) <= 0) or np.any(np.diff(a[:, 1]) < 0):
            raise ConfigError("LED anchors must increase in current with non-decreasing power")
        if not self.max_current_ma > 0:
            raise ConfigError("max_current_ma must be > 0")


@dataclass(frozen=True)
class PdModel:
    active_area_cm2: float = 0.0625
    responsivity: float = 0.56  # A/W

    def __post_init__(self):
        if not (self.active_area_cm2 > 0 and self.responsivity > 0):
            raise ConfigError("photodiode area and responsivity must be > 0")


@dataclass(frozen=True)
class AfeConfig:
    """Front-end settings.

    ``full_scale_v`` is the ADC input at which codes saturate.  It is kept
    separate from ``volts_per_lsb`` because 238.42 nV is a rounded figure:
    ``2**22 * 238.42 nV`` overshoots 1 V by about 6 uV.
    """

    r_f: float = 10e3
    r_g: float = 100e3
    i_cancel: float = 0.0
    duty_cycle: float = 0.25
    adc_bits: int = ADC_BITS
    volts_per_lsb: float = 238.42e-9
    full_scale_v: float = 1.0
    i_noise: float = 10e-12
    i_ambient: float = 0.2e-6

    def __post_init__(self):
        if not (self.r_f > 0 and self.r_g > 0):
            raise ConfigError("r_f and r_g must be > 0")
        if not 0 < self.duty_cycle <= 1:
            raise ConfigError(f"duty_cycle must lie in (0, 1], got {self.duty_cycle}")
        if self.adc_bits != ADC_BITS:
            raise ConfigError(f"adc_bits is fixed at {ADC_BITS}")
        if not (self.volts_per_lsb > 0 and self.full_scale_v > 0):
            raise ConfigError("volts_per_lsb and full_scale_v must be > 0")
        if not (self.i_noise > 0 and self.i_ambient >= 0 and self.i_cancel >= 0):
            raise ConfigError("i_noise must be > 0; i_ambient and i_cancel >= 0")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SampleFrame:
    """One digitised LED-on / ambient pair for one optode."""

    optode_id: int
    t: float
    adc_code_on: int
    adc_code_ambient: int
    v_led_on: float
    v_ambient: float
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for c in (self.adc_code_on, self.adc_code_ambient):
            if not 0 <= c <= MAX_CODE:
                raise RangeError(f"ADC code {c} outside [0, {MAX_CODE}]")

    @classmethod
    def from_codes(cls, optode_id, t, code_on, code_ambient, cfg=None, **extra):
        lsb = (cfg or AfeConfig()).volts_per_lsb
        return cls(int(optode_id), float(t), int(code_on), int(code_ambient),
                   code_on * lsb, code_ambient * lsb, extra)

    @property
    def v_cancelled(self):
        return ambient_cancel(self)


# -- stage operations ----------------------------------------------------


def led_power(current_ma, model=None):
    """Radiant power (mW) at ``current_ma``; refuses currents above the safety cap."""
    model = model or LedModel()
    if current_ma > model.max_current_ma:
        raise SafetyError(f"LED current {current_ma} mA exceeds the {model.max_current_ma} mA "
                          f"safety cap")
    if current_ma < 0:
        raise RangeError(f"LED current must be >= 0 mA, got {current_ma}")
    a = np.asarray(model.anchors, dtype=float)
    if current_ma <= a[-1, 0]:
        return float(np.interp(current_ma, a[:, 0], a[:, 1]))
    slope = (a[-1, 1] - a[-2, 1]) / (a[-1, 0] - a[-2, 0])
    return float(a[-1, 1] + slope * (current_ma - a[-1, 0]))


def pd_current(optical_power, model=None):
    """Photocurrent (A) for incident optical power (W)."""
    if optical_power < 0:
        raise RangeError(f"optical power must be >= 0, got {optical_power}")
    return (model or PdModel()).responsivity * optical_power


def tia_voltage(i_pleth, i_ambient, cfg=None):
    """Differential output ``2 R_G (I_pleth R_F/100k + I_amb R_F/100k - I_cancel)``."""
    cfg = cfg or AfeConfig()
    if i_pleth < 0 or i_ambient < 0:
        raise RangeError("photocurrents must be >= 0")
    return 2.0 * cfg.r_g * (i_pleth * cfg.r_f / R_SCALE + i_ambient * cfg.r_f / R_SCALE
                            - cfg.i_cancel)


def adc_quantize(v, cfg=None):
    """ADC code of ``v``: ``floor(v / lsb)``, saturating at both rails."""
    cfg = cfg or AfeConfig()
    if not v > 0:
        return 0
    if v >= cfg.full_scale_v:
        return MAX_CODE
    return min(int(math.floor(v / cfg.volts_per_lsb)), MAX_CODE)


def noise_free_bits(i_photodiode, i_noise=None):
    """``log2(I_pd / (6.6 I_noise))``; 6.6 converts RMS noise to peak-to-peak."""
    i_noise = AfeConfig().i_noise if i_noise is None else i_noise
    if not (i_photodiode > 0 and i_noise > 0):
        raise DomainError(f"currents must be > 0, got {i_photodiode}, {i_noise}")
    return math.log2(i_photodiode / (6.6 * i_noise))


def noise_voltage(n_fb, cfg=None):
    """Peak noise voltage ``lsb * 2**(22 - N_FB)``."""
    cfg = cfg or AfeConfig()
    if not 0 <= n_fb <= cfg.adc_bits:
        raise DomainError(f"noise-free bits must lie in [0, {cfg.adc_bits}], got {n_fb}")
    return cfg.volts_per_lsb * 2.0 ** (cfg.adc_bits - n_fb)


def snr_db(v_diff, v_noise):
    if not (v_diff > 0 and v_noise > 0):
        raise DomainError(f"voltages must be > 0, got {v_diff}, {v_noise}")
    return 20.0 * math.log10(v_diff / v_noise)


def ambient_cancel(frame):
    """LED-on minus ambient voltage, floored at zero."""
    if frame.v_led_on < 0 or frame.v_ambient < 0:
        raise RangeError("frame voltages must be >= 0")
    return max(frame.v_led_on - frame.v_ambient, 0.0)


# -- composition ---------------------------------------------------------


@dataclass(frozen=True)
class ChainReport:
    """Intermediate values of one detector's chain, for audit output."""

    led_power_w: float
    detected_fraction: float
    pd_power_w: float
    leak_power_w: float
    i_pleth: float
    v_on_analog: float
    v_ambient_analog: float
    frame: SampleFrame

    @property
    def no_signal(self):
        """LED-on reading not above ambient."""
        return self.frame.v_led_on <= self.frame.v_ambient

    def as_dict(self):
        d = asdict(self)
        d["frame"] = {k: v for k, v in asdict(self.frame).items() if k != "extra"}
        d["v_cancelled"] = self.frame.v_cancelled
        d["no_signal"] = self.no_signal
        return d


def chain(detected_fraction, led_current_ma, cfg=None, led=None, pd=None, optode_id=1, t=0.0,
          leak_fraction=0.0):
    """Drive current and detected fraction through the stage operations.

    ``leak_fraction`` adds emitter power that reaches the detector directly,
    without tissue transport (the lateral air-gap path).
    """
    cfg = cfg or AfeConfig()
    p_led = led_power(led_current_ma, led) * 1e-3
    p_pd = p_led * detected_fraction
    p_leak = p_led * leak_fraction
    i_pleth = pd_current(p_pd + p_leak, pd)
    v_on = tia_voltage(i_pleth, cfg.i_ambient, cfg)
    v_amb = tia_voltage(0.0, cfg.i_ambient, cfg)
    frame = SampleFrame.from_codes(optode_id, t, adc_quantize(v_on, cfg),
                                   adc_quantize(v_amb, cfg), cfg)
    return ChainReport(p_led, detected_fraction, p_pd, p_leak, i_pleth, v_on, v_amb, frame)


def end_to_end(scene, probe, led_current_ma, cfg=None, transport=None, led=None, pd=None,
               leak_fraction=0.0, result=None):
    """One :class:`ChainReport` per detector: LED -> transport -> PD -> TIA -> ADC.

    Pass ``result`` to reuse an existing :class:`TransportResult`.
    """
    from .transport import simulate

    if result is None:
        result = simulate(scene, probe, transport)
    return [chain(d.detected_fraction, led_current_ma, cfg, led, pd, optode_id=i + 1,
                  leak_fraction=leak_fraction)
            for i, d in enumerate(result.detectors)]
