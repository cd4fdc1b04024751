"""Session analysis: window means, full-vs-empty t-tests, trend fits, SNR."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, DomainError
from ..sensing import R_SCALE, AfeConfig, SampleFrame, adc_quantize, noise_free_bits
from ..sensing import noise_voltage, snr_db, tia_voltage
from .plots import line_plot_svg
from .session import Session, Window
from .stats import SampleSeries, polyfit, t_test_two_tailed, window_mean

FIT_ORDER = 5


def snr_estimate(v_cancelled, cfg=None):
    """SNR (dB) of a mean cancelled voltage, via the implied photocurrent."""
    cfg = cfg or AfeConfig()
    if not v_cancelled > 0:
        return None
    i_pd = v_cancelled / (2.0 * cfg.r_g * cfg.r_f / R_SCALE)
    n_fb = min(max(noise_free_bits(i_pd, cfg.i_noise), 0.0), float(cfg.adc_bits))
    v_noise = noise_voltage(n_fb, cfg)
    return {"i_pd": i_pd, "noise_free_bits": n_fb, "v_noise": v_noise,
            "snr_db": snr_db(v_cancelled, v_noise)}


def effective_rate(ts):
    dt = np.diff(np.asarray(ts, dtype=float))
    if dt.size == 0:
        return None
    return float(1.0 / np.median(dt))


def analyze_session(session, cfg=None, fit_order=FIT_ORDER):
    """Per-optode statistics for a parsed :class:`Session` as a plain dict."""
    cfg = cfg or AfeConfig()
    optodes = session.optodes()
    per = {}
    for oid in optodes:
        t, v = session.series(oid)
        s = SampleSeries(t, v, oid)
        entry = {"n_samples": len(t), "mean_v": float(np.mean(v)),
                 "effective_rate_hz": effective_rate(t), "window_means": {}}
        for w in session.windows:
            key = f"{w.position}/{w.state}"
            try:
                entry["window_means"][key] = window_mean(s, w.t0, w.t1)
            except DegenerateInputError:
                entry["window_means"][key] = None
        try:
            fit = polyfit(t, v, fit_order)
            entry["fit"] = {"order": fit.order, "coefficients": list(fit.coefficients),
                            "rms_residual": fit.rms_residual}
        except (DegenerateInputError, DomainError) as exc:
            entry["fit"] = {"order": fit_order, "error": str(exc)}
        entry["snr"] = snr_estimate(entry["mean_v"], cfg)
        per[str(oid)] = entry

    positions = []
    for w in session.windows:
        if w.position not in positions:
            positions.append(w.position)
    ttests = {}
    for pos in positions:
        full = [w for w in session.windows if w.position == pos and w.state == "full"]
        empty = [w for w in session.windows if w.position == pos and w.state == "empty"]
        if not full or not empty:
            continue
        row = {}
        for oid in optodes:
            t, v = session.series(oid)
            s = SampleSeries(t, v, oid)
            a = np.concatenate([s.window(w.t0, w.t1) for w in full])
            b = np.concatenate([s.window(w.t0, w.t1) for w in empty])
            try:
                r = t_test_two_tailed(a, b)
                row[str(oid)] = {"t": r.t_statistic, "df": r.degrees_of_freedom,
                                 "p": r.p_value}
            except DegenerateInputError as exc:
                row[str(oid)] = {"error": str(exc)}
        ttests[pos] = row

    rates = [e["effective_rate_hz"] for e in per.values() if e["effective_rate_hz"]]
    return {
        "metadata": dict(session.metadata),
        "windows": [w.as_text() for w in session.windows],
        "stated_rate_hz": (float(session.metadata["sample_rate_hz"])
                           if "sample_rate_hz" in session.metadata else None),
        "effective_rate_hz": float(np.median(rates)) if rates else None,
        "optodes": per,
        "t_tests": ttests,
    }


def _fmt(x, spec=".3g"):
    return "-" if x is None else format(x, spec)


def render_text(report):
    """Plain-text tables: p-values (positions x optodes) and per-optode SNR."""
    optodes = sorted(report["optodes"], key=int)
    lines = ["Session analysis", ""]
    rate = report["effective_rate_hz"]
    lines.append(f"effective sampling rate: {_fmt(rate, '.4g')} Hz"
                 + (f" (stated {report['stated_rate_hz']:g} Hz)"
                    if report["stated_rate_hz"] is not None else ""))
    lines.append("")
    if report["t_tests"]:
        lines.append("Two-tailed Student's t-test p-values (full vs empty)")
        lines.append("position   " + "".join(f"{'PD' + o:>11}" for o in optodes))
        for pos, row in report["t_tests"].items():
            cells = "".join(f"{_fmt(row.get(o, {}).get('p'), '.3e'):>11}" for o in optodes)
            lines.append(f"{pos:<11}{cells}")
        lines.append("")
    lines.append("Noise-free measurement")
    lines.append(f"{'optode':<8}{'mean V':>12}{'I_pd (A)':>12}{'N_FB':>8}"
                 f"{'V_noise':>12}{'SNR dB':>9}")
    for o in optodes:
        e = report["optodes"][o]
        s = e["snr"] or {}
        lines.append(f"{o:<8}{_fmt(e['mean_v'], '.4e'):>12}{_fmt(s.get('i_pd'), '.3e'):>12}"
                     f"{_fmt(s.get('noise_free_bits'), '.2f'):>8}"
                     f"{_fmt(s.get('v_noise'), '.3e'):>12}{_fmt(s.get('snr_db'), '.2f'):>9}")
    lines.append("")
    lines.append(f"Trend fits (order {FIT_ORDER}, ascending coefficients)")
    for o in optodes:
        f = report["optodes"][o]["fit"]
        if "error" in f:
            lines.append(f"PD{o}: {f['error']}")
        else:
            coeffs = " ".join(format(c, ".4e") for c in f["coefficients"])
            lines.append(f"PD{o}: rms {f['rms_residual']:.3e}  [{coeffs}]")
    return "\n".join(lines) + "\n"


def session_svgs(session, report):
    """One SVG per optode: samples per condition window plus the trend fit."""
    out = {}
    for o in session.optodes():
        t, v = session.series(o)
        t, v = np.asarray(t), np.asarray(v)
        series = []
        if session.windows:
            for w in session.windows:
                sel = (t >= w.t0) & (t <= w.t1)
                series.append((f"{w.position} {w.state}", t[sel], v[sel]))
        else:
            series.append(("samples", t, v))
        fit = report["optodes"][str(o)]["fit"]
        if "coefficients" in fit:
            tt = np.linspace(t.min(), t.max(), 200)
            yy = np.polynomial.polynomial.polyval(tt, fit["coefficients"])
            series.append((f"order-{fit['order']} fit", tt, yy))
        out[f"optode_{o}.svg"] = line_plot_svg(series, f"PD{o} cancelled voltage", "t (s)",
                                               "V")
    return out


def synthetic_session(gap_sigma=10.0, sigma=1e-4, base_v=0.016, seconds=60, rate_hz=1.0,
                      positions=("standing", "sitting", "reclined"), seed=0, cfg=None,
                      shared_noise=False):
    """A session whose full windows sit ``gap_sigma`` noise SDs below empty ones.

    Each position gets a ``full`` then an ``empty`` window of ``seconds``;
    all eight optodes are sampled every ``1/rate_hz`` s.  With
    ``shared_noise`` the empty window replays the full window's noise in
    reverse time order, so with ``gap_sigma=0`` both windows hold the same
    sample values.
    """
    cfg = cfg or AfeConfig()
    rng = np.random.default_rng(seed)
    v_amb = tia_voltage(0.0, cfg.i_ambient, cfg)
    code_amb = adc_quantize(v_amb, cfg)
    n = int(round(seconds * rate_hz))
    frames, windows = [], []
    t = 0.0
    dt = 1.0 / rate_hz
    levels = base_v * (1.0 - 0.05 * np.arange(8))
    for pos in positions:
        noise_full = rng.normal(0.0, sigma, (n, 8))
        noise_empty = noise_full[::-1] if shared_noise else rng.normal(0.0, sigma, (n, 8))
        for state, shift, noise in (("full", -gap_sigma * sigma, noise_full),
                                    ("empty", 0.0, noise_empty)):
            t0 = t
            for i in range(n):
                for k in range(8):
                    level = levels[k] + shift + noise[i, k]
                    code_on = adc_quantize(v_amb + max(level, 0.0), cfg)
                    frames.append(SampleFrame.from_codes(k + 1, t, code_on, code_amb, cfg))
                t += dt
            windows.append(Window(pos, state, t0, t - dt))
    meta = {"sample_rate_hz": format(rate_hz, "g"), "synthetic_gap_sigma": format(gap_sigma, "g")}
    return Session(frames, meta, windows)


def p_value_range(report):
    """Smallest and largest p-value across all t-tests (``None`` when absent)."""
    ps = [c["p"] for row in report["t_tests"].values() for c in row.values() if "p" in c]
    if not ps:
        return None
    return {"min_p": min(ps), "max_p": max(ps), "n": len(ps)}

