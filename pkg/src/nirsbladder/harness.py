"""Scenario runners behind the CLI: phantom scans, sweeps, lateral study, calibration.

Every runner returns plain data plus a provenance block; :func:`write_outputs`
turns a set of named texts into files under one directory with a manifest of
their hashes.  Nothing here reads the clock, so re-runs are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis.plots import line_plot_svg
from .analysis.stats import linear_fit
from .errors import ConfigError
from .media import Defaults
from .scene import (CONTAINER_SIDE_MM, PHANTOM_LENGTH_MM, build_abdomen_scene,
                    build_black_scene, build_phantom_scene)
from .sensing import R_SCALE, AfeConfig, LedModel, PdModel, chain, led_power
from .transport import ProbeLayout, TransportConfig, simulate

__version__ = "0.1.0"

OFFSETS_CM = tuple(range(24))
WAVELENGTHS_NM = (890.0, 970.0, 1450.0)
SD_SWEEP_CM = (4.0, 4.5, 5.7, 7.2, 8.9, 10.8, 12.6, 14.6)
LED_MA = {"phantom": 200.0, "porcine": 670.0, "abdomen": 800.0}
LATERAL_ANCHOR_V = (0.0048, 0.035)  # black-absorber and empty-abdomen readings
PHANTOM_SD_CM = 4.0
KINDS = ("simulate", "phantom-scan", "wavelength-sweep", "sd-sweep", "lateral", "abdomen-chain",
         "analyze-session", "calibrate")


def offset_center_mm(offset_cm):
    """Pair midpoint in phantom coordinates for a scan offset.

    Offset ``p`` reads the phantom centimetre ``[p - 1, p]``, so 0 and 23
    sit beyond the two ends of the 22 cm phantom.
    """
    return (10.0 * (offset_cm - 0.5), 0.0)


def over_bladder_offsets(sd_cm=PHANTOM_SD_CM, offsets=OFFSETS_CM):
    """Offsets whose emitter and detector both lie under the container."""
    lo = PHANTOM_LENGTH_MM / 2 - CONTAINER_SIDE_MM / 2
    hi = lo + CONTAINER_SIDE_MM
    half = 5.0 * sd_cm
    return tuple(p for p in offsets
                 if offset_center_mm(p)[0] - half >= lo and offset_center_mm(p)[0] + half <= hi)


def tissue_offsets(sd_cm=PHANTOM_SD_CM, offsets=OFFSETS_CM):
    """Offsets with both optodes under the phantom but clear of the container."""
    lo = PHANTOM_LENGTH_MM / 2 - CONTAINER_SIDE_MM / 2
    hi = lo + CONTAINER_SIDE_MM
    half = 5.0 * sd_cm
    out = []
    for p in offsets:
        a, b = offset_center_mm(p)[0] - half, offset_center_mm(p)[0] + half
        if a >= 0.0 and b <= PHANTOM_LENGTH_MM and (b <= lo or a >= hi):
            out.append(p)
    return tuple(out)


def volts_per_fraction(led_current_ma, cfg=None, led=None, pd=None):
    """Slope of the cancelled voltage with respect to detected fraction."""
    cfg = cfg or AfeConfig()
    p_led = led_power(led_current_ma, led) * 1e-3
    return 2.0 * cfg.r_g * cfg.r_f / R_SCALE * p_led * (pd or PdModel()).responsivity


def noise_floor_v(cfg=None):
    """Cancelled voltage at which the photocurrent leaves zero noise-free bits."""
    cfg = cfg or AfeConfig()
    return 2.0 * cfg.r_g * cfg.r_f / R_SCALE * 6.6 * cfg.i_noise


@dataclass
class ScanResult:
    """Rows keyed by one swept axis (offset, SD distance or wavelength)."""

    kind: str
    axis: str
    rows: list
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = [r[self.axis] for r in self.rows]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ConfigError(f"{self.axis} values must be strictly increasing")

    def column(self, name):
        return [r[name] for r in self.rows]

    def as_dict(self):
        return asdict(self)

    def to_csv(self):
        out = io.StringIO()
        cols = list(self.rows[0]) if self.rows else [self.axis]
        w = csv.writer(out, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_csv_cell(r[c]) for c in cols])
        return out.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return v


def _chain_row(det, led_current_ma, cfg, led, pd, leak_fraction=0.0, optode_id=1):
    rep = chain(det.detected_fraction, led_current_ma, cfg, led, pd, optode_id=optode_id,
                leak_fraction=leak_fraction)
    gain = volts_per_fraction(led_current_ma, cfg, led, pd)
    return {"detected_fraction": det.detected_fraction, "stderr": det.stderr,
            "hits": det.hit_count, "mean_max_depth_mm": det.mean_max_depth_mm,
            "adc_code_on": rep.frame.adc_code_on, "adc_code_ambient": rep.frame.adc_code_ambient,
            "v_on": rep.frame.v_led_on, "v_ambient": rep.frame.v_ambient,
            "v_cancelled": rep.frame.v_cancelled, "v_cancelled_sigma": gain * det.stderr,
            "no_signal": rep.no_signal}


def _mean_sigma(rows):
    v = float(np.mean([r["v_cancelled"] for r in rows]))
    s = math.sqrt(sum(r["v_cancelled_sigma"] ** 2 for r in rows)) / len(rows)
    return v, s


def base_provenance(defaults, transport=None, **params):
    prov = {"package_version": __version__, "defaults": defaults.provenance(),
            "parameters": params}
    if transport is not None:
        prov["transport"] = transport.result_fields()
        prov["transport_hash"] = transport.hash
        prov["seed"] = int(transport.seed)
    return prov


# -- scenarios -----------------------------------------------------------


def run_phantom_scan(volume_ml=300.0, wavelength=970.0, transport=None, offsets=OFFSETS_CM,
                     led_current_ma=LED_MA["phantom"], cfg=None, defaults=None, led=None,
                     pd=None, sd_cm=PHANTOM_SD_CM):
    """Slide the optical phantom across a fixed emitter-detector pair.

    One transport run per offset; the summary averages the over-bladder
    offsets and propagates their Monte Carlo errors.
    """
    transport = transport or TransportConfig()
    defaults = defaults or Defaults.load()
    cfg = cfg or AfeConfig()
    offsets = tuple(sorted(int(p) for p in offsets))
    if not offsets:
        raise ConfigError("phantom scan needs at least one offset")
    if any(p not in OFFSETS_CM for p in offsets):
        raise ConfigError(f"offsets must lie in 0..{OFFSETS_CM[-1]} cm")
    scene = build_phantom_scene(volume_ml, wavelength, defaults)
    rows = []
    for p in offsets:
        probe = ProbeLayout.pair(sd_cm, center=offset_center_mm(p), wavelength_nm=wavelength)
        res = simulate(scene, probe, transport)
        row = {"offset_cm": p, "x_mm": offset_center_mm(p)[0]}
        row.update(_chain_row(res.detectors[0], led_current_ma, cfg, led, pd))
        rows.append(row)
    over = [r for r in rows if r["offset_cm"] in over_bladder_offsets(sd_cm, offsets)]
    tissue = [r for r in rows if r["offset_cm"] in tissue_offsets(sd_cm, offsets)]
    summary = {"volume_ml": float(volume_ml), "wavelength_nm": float(wavelength),
               "led_current_ma": float(led_current_ma),
               "over_bladder_offsets": [r["offset_cm"] for r in over],
               "tissue_offsets": [r["offset_cm"] for r in tissue]}
    if over:
        v, s = _mean_sigma(over)
        summary.update(over_bladder_v=v, over_bladder_sigma_v=s,
                       over_bladder_min_v=min(r["v_cancelled"] for r in over),
                       over_bladder_fraction=float(np.mean([r["detected_fraction"]
                                                            for r in over])))
    if tissue:
        summary["tissue_max_v"] = max(r["v_cancelled"] for r in tissue)
    if over and tissue:
        summary["dip_depth_v"] = summary["tissue_max_v"] - summary["over_bladder_min_v"]
    prov = base_provenance(defaults, transport, volume_ml=float(volume_ml),
                           wavelength_nm=float(wavelength), offsets_cm=list(offsets),
                           led_current_ma=float(led_current_ma), sd_cm=float(sd_cm),
                           afe=cfg.as_dict())
    prov["scene_hash"] = scene.hash
    return ScanResult("phantom-scan", "offset_cm", rows, summary, prov)


def run_wavelength_sweep(volume_ml=300.0, wavelengths=WAVELENGTHS_NM, transport=None,
                         offsets=OFFSETS_CM, led_current_ma=LED_MA["phantom"], cfg=None,
                         defaults=None, reference_volume_ml=0.0):
    """Phantom scans at each wavelength plus a per-wavelength summary.

    ``dip_depth_v`` is the highest tissue-only reading minus the lowest
    over-bladder reading.  ``water_contrast_v`` compares the over-bladder
    mean against the same scan with ``reference_volume_ml`` in the
    container, isolating the water's own absorption.
    """
    cfg = cfg or AfeConfig()
    defaults = defaults or Defaults.load()
    transport = transport or TransportConfig()
    floor = noise_floor_v(cfg)
    scans, rows = [], []
    for wl in sorted(float(w) for w in wavelengths):
        scan = run_phantom_scan(volume_ml, wl, transport, offsets, led_current_ma, cfg, defaults)
        ref = run_phantom_scan(reference_volume_ml, wl, transport,
                               over_bladder_offsets(offsets=offsets), led_current_ma, cfg,
                               defaults)
        scans.append(scan)
        s = scan.summary
        over_v = s.get("over_bladder_v")
        rows.append({
            "wavelength_nm": wl, "over_bladder_v": over_v,
            "over_bladder_sigma_v": s.get("over_bladder_sigma_v"),
            "tissue_max_v": s.get("tissue_max_v"), "dip_depth_v": s.get("dip_depth_v"),
            "reference_over_bladder_v": ref.summary.get("over_bladder_v"),
            "water_contrast_v": (None if over_v is None
                                 else ref.summary["over_bladder_v"] - over_v),
            "noise_floor_v": floor,
            "below_noise_floor": None if over_v is None else over_v <= floor})
    summary = {"volume_ml": float(volume_ml), "reference_volume_ml": float(reference_volume_ml)}
    dips = [(r["dip_depth_v"], r["wavelength_nm"]) for r in rows if r["dip_depth_v"] is not None]
    if dips:
        summary["max_dip_wavelength_nm"] = max(dips)[1]
    contrasts = [(r["water_contrast_v"], r["wavelength_nm"]) for r in rows
                 if r["water_contrast_v"] is not None]
    if contrasts:
        summary["max_water_contrast_wavelength_nm"] = max(contrasts)[1]
    prov = base_provenance(defaults, transport, volume_ml=float(volume_ml),
                           wavelengths_nm=[r["wavelength_nm"] for r in rows],
                           offsets_cm=sorted(int(p) for p in offsets),
                           led_current_ma=float(led_current_ma),
                           reference_volume_ml=float(reference_volume_ml), afe=cfg.as_dict())
    return ScanResult("wavelength-sweep", "wavelength_nm", rows, summary, prov), scans


def sd_sweep_probe(sds_cm=SD_SWEEP_CM, wavelength=970.0):
    """One emitter and a detector line, centred on the scene."""
    origin = (-5.0 * max(sds_cm), 0.0)
    return ProbeLayout.line(sds_cm, origin=origin, wavelength_nm=wavelength)


def sd_sweep_scene(sds_cm=SD_SWEEP_CM, defaults=None, mus_scale=None, wavelength=970.0):
    lateral = 10.0 * max(sds_cm) + 150.0
    cfg = {"lateral_mm": lateral, "wavelength_nm": wavelength}
    if mus_scale is not None:
        cfg["mus_scale"] = mus_scale
    return build_abdomen_scene(cfg, defaults)


def run_sd_sweep(transport=None, sds_cm=SD_SWEEP_CM, led_current_ma=LED_MA["abdomen"],
                 cfg=None, defaults=None, result=None, mus_scale=None):
    """One LED, eight PDs at increasing SD distance on the empty abdomen.

    The slope test regresses log10 of the cancelled voltage, floored at
    one LSB so that no-signal PDs stay finite, against SD distance.
    """
    transport = transport or TransportConfig()
    defaults = defaults or Defaults.load()
    cfg = cfg or AfeConfig()
    sds_cm = tuple(float(s) for s in sds_cm)
    scene = sd_sweep_scene(sds_cm, defaults, mus_scale)
    probe = sd_sweep_probe(sds_cm)
    if result is None:
        result = simulate(scene, probe, transport)
    rows = []
    for i, (sd, det) in enumerate(zip(sds_cm, result.detectors)):
        row = {"sd_cm": sd, "pd": i + 1}
        row.update(_chain_row(det, led_current_ma, cfg, None, None, optode_id=i + 1))
        row["depth_ratio"] = (det.mean_max_depth_mm / (10.0 * sd)
                              if det.mean_max_depth_mm is not None else None)
        rows.append(row)
    logv = [math.log10(max(r["v_cancelled"], cfg.volts_per_lsb)) for r in rows]
    fit = linear_fit(sds_cm, logv)
    summary = {"slope_log10v_per_cm": fit.slope, "intercept_log10v": fit.intercept,
               "slope_stderr": fit.slope_stderr, "slope_p_value": fit.p_value,
               "no_signal_pds": [r["pd"] for r in rows if r["no_signal"]],
               "depth_ratio": {format(r["sd_cm"], "g"): r["depth_ratio"] for r in rows},
               "led_current_ma": float(led_current_ma)}
    prov = base_provenance(defaults, transport, sds_cm=list(sds_cm),
                           led_current_ma=float(led_current_ma), afe=cfg.as_dict(),
                           mus_scale=scene.mus_scale)
    prov["scene_hash"] = scene.hash
    prov["probe_hash"] = probe.hash
    return ScanResult("sd-sweep", "sd_cm", rows, summary, prov), result


def solve_leak_fraction(black_fraction, abdomen_fraction, ratio):
    """Direct-coupling fraction that makes ``(black + f) / (abdomen + f) == ratio``."""
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"leak ratio must lie in [0, 1), got {ratio}")
    f = (ratio * abdomen_fraction - black_fraction) / (1.0 - ratio)
    if f < 0:
        raise ConfigError("anchor ratio is below the tissue-only ratio; no leak can match it")
    return f


def run_lateral_study(transport=None, leak_fraction=None, anchor_v=LATERAL_ANCHOR_V,
                      sd_cm=4.0, led_current_ma=LED_MA["abdomen"], cfg=None, defaults=None,
                      abdomen_result=None):
    """Black-absorber reading as a share of the empty-abdomen reading.

    ``leak_fraction=None`` calibrates the direct-coupling path to the
    anchor voltages; ``0`` disables it.
    """
    transport = transport or TransportConfig()
    defaults = defaults or Defaults.load()
    cfg = cfg or AfeConfig()
    probe = ProbeLayout.pair(sd_cm)
    abdomen = build_abdomen_scene(None, defaults)
    black = build_black_scene(defaults=defaults)
    if abdomen_result is None:
        abdomen_result = simulate(abdomen, probe, transport)
    black_result = simulate(black, probe, transport)
    fa = abdomen_result.detectors[0].detected_fraction
    fb = black_result.detectors[0].detected_fraction
    anchor_ratio = anchor_v[0] / anchor_v[1]
    calibrated = leak_fraction is None
    if calibrated:
        leak_fraction = solve_leak_fraction(fb, fa, anchor_ratio)
    if leak_fraction < 0:
        raise ConfigError("leak_fraction must be >= 0")
    ra = chain(fa, led_current_ma, cfg, leak_fraction=leak_fraction)
    rb = chain(fb, led_current_ma, cfg, leak_fraction=leak_fraction)
    va, vb = ra.frame.v_cancelled, rb.frame.v_cancelled
    summary = {"abdomen_v": va, "black_v": vb, "ratio": vb / va if va > 0 else None,
               "leak_fraction": leak_fraction, "leak_calibrated": calibrated,
               "anchor_v": list(anchor_v), "anchor_ratio": anchor_ratio,
               "abdomen_fraction": fa, "black_fraction": fb,
               "abdomen_stderr": abdomen_result.detectors[0].stderr,
               "black_stderr": black_result.detectors[0].stderr}
    prov = base_provenance(defaults, transport, sd_cm=float(sd_cm),
                           led_current_ma=float(led_current_ma), anchor_v=list(anchor_v),
                           leak_fraction=None if calibrated else float(leak_fraction),
                           afe=cfg.as_dict())
    prov["scene_hash"] = {"abdomen": abdomen.hash, "black": black.hash}
    return {"summary": summary, "provenance": prov,
            "chain": {"abdomen": ra.as_dict(), "black": rb.as_dict()}}


def run_abdomen_chain(transport=None, sd_cm=4.0, led_current_ma=LED_MA["abdomen"], cfg=None,
                      defaults=None, result=None, mus_scale=None):
    """Empty-abdomen SD pair through the full chain, with every stage value."""
    transport = transport or TransportConfig()
    defaults = defaults or Defaults.load()
    cfg = cfg or AfeConfig()
    scene = build_abdomen_scene({} if mus_scale is None else {"mus_scale": mus_scale}, defaults)
    probe = ProbeLayout.pair(sd_cm)
    if result is None:
        result = simulate(scene, probe, transport)
    det = result.detectors[0]
    rep = chain(det.detected_fraction, led_current_ma, cfg)
    prov = base_provenance(defaults, transport, sd_cm=float(sd_cm),
                           led_current_ma=float(led_current_ma), afe=cfg.as_dict(),
                           mus_scale=scene.mus_scale)
    prov["scene_hash"] = scene.hash
    return {"chain": rep.as_dict(), "transport": result.as_dict(), "provenance": prov,
            "v_cancelled_sigma": volts_per_fraction(led_current_ma, cfg) * det.stderr}


def calibrate(transport=None, target=None, sd_cm=None, bounds=(0.5, 2.0), rel_tol=0.02,
              max_iter=12, defaults=None):
    """Search the single scattering factor that lands the SD pair on ``target``.

    Every evaluation reuses the same seed, so the fraction is a smooth
    function of the factor; the search bisects on ``log(fraction)``
    and then refines by secant steps in log-log space.
    """
    transport = transport or TransportConfig()
    defaults = defaults or Defaults.load()
    cal = defaults.data.get("calibration") or {}
    target = float(target if target is not None else cal.get("target_fraction", 5.4e-6))
    sd_cm = float(sd_cm if sd_cm is not None else cal.get("sd_cm", 4.0))
    probe = ProbeLayout.pair(sd_cm)
    history = []

    def frac(s):
        scene = build_abdomen_scene({"mus_scale": s}, defaults)
        f = simulate(scene, probe, transport).detectors[0].detected_fraction
        history.append({"mus_scale": s, "detected_fraction": f})
        return f

    lo, hi = float(bounds[0]), float(bounds[1])
    flo, fhi = frac(lo), frac(hi)

    def err(f):
        return math.log(f / target) if f > 0 else -math.inf

    elo, ehi = err(flo), err(fhi)
    if elo * ehi > 0:
        best = min(((abs(elo), lo, flo), (abs(ehi), hi, fhi)))
        return {"mus_scale": best[1], "detected_fraction": best[2], "target": target,
                "sd_cm": sd_cm, "bracketed": False, "history": history}
    s, f = lo, flo
    for _ in range(max_iter):
        # secant in (log s, log f), clamped into the bracket
        t = (0.0 - elo) / (ehi - elo)
        s = math.exp(math.log(lo) + t * (math.log(hi) - math.log(lo)))
        if not lo < s < hi:
            s = math.sqrt(lo * hi)
        f = frac(s)
        e = err(f)
        if abs(f / target - 1.0) <= rel_tol:
            break
        if e * elo > 0:
            lo, elo = s, e
        else:
            hi, ehi = s, e
    return {"mus_scale": s, "detected_fraction": f, "target": target, "sd_cm": sd_cm,
            "bracketed": True, "history": history}


def calibrated_defaults_yaml(defaults, mus_scale):
    """Defaults file text with ``calibration.mus_scale`` replaced."""
    import yaml

    data = {k: v for k, v in defaults.data.items() if not k.startswith("_")}
    data = json.loads(json.dumps(data))
    data.setdefault("calibration", {})["mus_scale"] = float(mus_scale)
    return yaml.safe_dump(data, sort_keys=False)


# -- output --------------------------------------------------------------


def to_json(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def scan_svg(scans, y="v_cancelled", title="", logy=False):
    series = [(s.summary.get("volume_ml", s.kind) if s.kind == "phantom-scan" else s.kind,
               s.column(s.axis), s.column(y)) for s in scans]
    if scans and scans[0].kind == "phantom-scan":
        series = [(f"{s.summary['volume_ml']:g} ml, {s.summary['wavelength_nm']:g} nm",
                   s.column(s.axis), s.column(y)) for s in scans]
    return line_plot_svg(series, title, scans[0].axis if scans else "", f"{y} (V)", logy=logy)


def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()


def write_outputs(out_dir, files, provenance, command):
    """Write ``files`` (name -> text) plus ``manifest.json`` under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    hashes = {}
    for name in sorted(files):
        text = files[name]
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(text)
        hashes[name] = sha256_text(text)
    manifest = {"command": command, "files": hashes, "provenance": provenance}
    with open(os.path.join(out_dir, "manifest.json"), "w", newline="") as fh:
        fh.write(to_json(manifest))
    return manifest
