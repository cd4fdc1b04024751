"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 input-data error,
4 simulation fault.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import harness as H
from .analysis.plots import line_plot_svg
from .analysis.report import FIT_ORDER
from .analysis import (analyze_session, format_session, read_session, render_text, session_svgs,
                       synthetic_session)
from .errors import ConfigError, DomainError, InputDataError, SimulationFault
from .media import Defaults
from .scene import load_scene
from .transport import ProbeLayout, TransportConfig, simulate

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_FAULT = 0, 2, 3, 4

# options that never change the content of output files
_NON_SEMANTIC = {"out", "workers", "func", "verbose", "command"}

log = logging.getLogger("nirsbladder")


def _offsets(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return sorted(set(out))


def _common(p):
    g = p.add_argument_group("run options")
    g.add_argument("--out", default="out", help="output directory (default: ./out)")
    g.add_argument("--photons", type=int, default=None,
                   help=f"photon packets per transport run (default {TransportConfig.n_photons})")
    g.add_argument("--seed", type=int, default=None, help="RNG seed")
    g.add_argument("--workers", type=int, default=None,
                   help="transport threads; never changes results")
    g.add_argument("--batch-size", type=int, default=None,
                   help="photons per batch; part of the result identity")
    g.add_argument("--defaults", default=None,
                   help="optical defaults YAML (overrides $NIRSBLADDER_DEFAULTS)")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(prog="nirsbladder",
                                 description="NIRS bladder-sensing simulator and harness.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="photon transport for a scene and probe file")
    p.add_argument("--scene", required=True, help="scene YAML")
    p.add_argument("--probe", required=True, help="probe YAML")
    p.add_argument("--emitter", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("phantom-scan", help="slide the optical phantom across the probe")
    p.add_argument("--volume-ml", type=float, nargs="+", default=[300.0])
    p.add_argument("--wavelength", type=float, default=970.0, help="nm")
    p.add_argument("--offsets", type=_offsets, default=list(H.OFFSETS_CM),
                   help="offsets in cm, e.g. '0-23' or '4,10-13'")
    p.add_argument("--led-ma", type=float, default=H.LED_MA["phantom"])
    _common(p)
    p.set_defaults(func=cmd_phantom_scan)

    p = sub.add_parser("wavelength-sweep", help="phantom scans at 890, 970 and 1450 nm")
    p.add_argument("--volume-ml", type=float, default=300.0)
    p.add_argument("--wavelengths", type=float, nargs="+", default=list(H.WAVELENGTHS_NM))
    p.add_argument("--offsets", type=_offsets, default=list(H.OFFSETS_CM))
    p.add_argument("--led-ma", type=float, default=H.LED_MA["phantom"])
    _common(p)
    p.set_defaults(func=cmd_wavelength_sweep)

    p = sub.add_parser("sd-sweep", help="one LED, eight PDs at increasing distance")
    p.add_argument("--sds", type=float, nargs="+", default=list(H.SD_SWEEP_CM), help="cm")
    p.add_argument("--led-ma", type=float, default=H.LED_MA["abdomen"])
    _common(p)
    p.set_defaults(func=cmd_sd_sweep)

    p = sub.add_parser("lateral", help="black-absorber share of the abdomen signal")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--leak-fraction", type=float, default=None,
                   help="fixed direct-coupling fraction (default: fit to the anchor)")
    g.add_argument("--no-leak", action="store_true", help="disable the direct path")
    p.add_argument("--led-ma", type=float, default=H.LED_MA["abdomen"])
    _common(p)
    p.set_defaults(func=cmd_lateral)

    p = sub.add_parser("abdomen-chain", help="empty-abdomen SD pair through the whole chain")
    p.add_argument("--sd-cm", type=float, default=4.0)
    p.add_argument("--led-ma", type=float, default=H.LED_MA["abdomen"])
    _common(p)
    p.set_defaults(func=cmd_abdomen_chain)

    p = sub.add_parser("analyze", help="statistics and plots for a session CSV")
    p.add_argument("--session", required=True, help="session CSV")
    p.add_argument("--svg", action="store_true", help="also write one SVG per optode")
    p.add_argument("--fit-order", type=int, default=FIT_ORDER)
    _common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth-session", help="write a synthetic full/empty session CSV")
    p.add_argument("--gap-sigma", type=float, default=10.0)
    p.add_argument("--sigma-v", type=float, default=1e-4)
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--rate-hz", type=float, default=1.0)
    p.add_argument("--shared-noise", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_synth_session)

    p = sub.add_parser("calibrate", help="fit the scattering scale to the 4 cm target fraction")
    p.add_argument("--target", type=float, default=None)
    p.add_argument("--sd-cm", type=float, default=None)
    p.add_argument("--bounds", type=float, nargs=2, default=[0.5, 2.0])
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_replay)
    return ap


# -- helpers ---------------------------------------------------------------


def _transport(args):
    kw = {}
    if args.photons is not None:
        kw["n_photons"] = args.photons
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.batch_size is not None:
        kw["batch_size"] = args.batch_size
    if args.workers is not None:
        kw["workers"] = args.workers
    try:
        return TransportConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _defaults(args):
    if getattr(args, "_defaults_data", None) is not None:
        return Defaults(args._defaults_data)
    try:
        return Defaults.load(args.defaults)
    except OSError as exc:
        raise ConfigError(f"cannot read defaults file: {exc}") from None


def _cli_args(args):
    return {k: v for k, v in sorted(vars(args).items())
            if k not in _NON_SEMANTIC and not k.startswith("_")}


def _emit(args, files, provenance):
    provenance = dict(provenance)
    provenance["cli"] = {"command": args.command, "args": _cli_args(args)}
    manifest = H.write_outputs(args.out, files, provenance, args.command)
    for name in sorted(manifest["files"]):
        print(os.path.join(args.out, name))
    return EXIT_OK


# -- commands --------------------------------------------------------------


def cmd_simulate(args):
    defaults = _defaults(args)
    scene = load_scene(args.scene, defaults)
    probe = ProbeLayout.load(args.probe)
    transport = _transport(args)
    res = simulate(scene, probe, transport, emitter=args.emitter)
    series = [(f"D{d.id} ({d.sd_cm:g} cm)", list(range(len(d.depth_histogram))),
               d.depth_histogram) for d in res.detectors]
    files = {"result.json": res.to_json() + "\n",
             "depth.svg": line_plot_svg(series, "max depth of detected photons", "depth (mm)",
                                        "weight")}
    for d in res.detectors:
        print(f"detector {d.id}: sd {d.sd_cm:g} cm  fraction {d.detected_fraction:.4e} "
              f"+- {d.stderr:.2e}  hits {d.hit_count}")
    prov = H.base_provenance(defaults, transport, scene_file=os.path.basename(args.scene),
                             probe_file=os.path.basename(args.probe))
    prov["scene"] = scene.describe()
    prov["probe"] = probe.as_dict()
    return _emit(args, files, prov)


def cmd_phantom_scan(args):
    defaults = _defaults(args)
    transport = _transport(args)
    scans = [H.run_phantom_scan(v, args.wavelength, transport, args.offsets, args.led_ma,
                                defaults=defaults) for v in sorted(args.volume_ml)]
    files = {}
    for s in scans:
        tag = f"{s.summary['volume_ml']:g}ml_{s.summary['wavelength_nm']:g}nm"
        files[f"scan_{tag}.csv"] = s.to_csv()
        files[f"scan_{tag}.json"] = H.to_json(s.as_dict())
        sm = s.summary
        if "over_bladder_v" in sm:
            print(f"{sm['volume_ml']:g} ml: over-bladder {sm['over_bladder_v']:.4e} V "
                  f"+- {sm['over_bladder_sigma_v']:.1e}")
    files["scan.svg"] = H.scan_svg(scans, title="phantom scan")
    return _emit(args, files, {"scans": [s.provenance for s in scans]})


def cmd_wavelength_sweep(args):
    defaults = _defaults(args)
    transport = _transport(args)
    sweep, scans = H.run_wavelength_sweep(args.volume_ml, args.wavelengths, transport,
                                          args.offsets, args.led_ma, defaults=defaults)
    files = {"sweep.csv": sweep.to_csv(), "sweep.json": H.to_json(sweep.as_dict()),
             "sweep.svg": H.scan_svg(scans, title="phantom scan per wavelength")}
    for s in scans:
        files[f"scan_{s.summary['wavelength_nm']:g}nm.csv"] = s.to_csv()
    for r in sweep.rows:
        print(f"{r['wavelength_nm']:g} nm: dip {r['dip_depth_v']} V  "
              f"below noise floor: {r['below_noise_floor']}")
    return _emit(args, files, sweep.provenance)


def cmd_sd_sweep(args):
    defaults = _defaults(args)
    transport = _transport(args)
    scan, res = H.run_sd_sweep(transport, args.sds, args.led_ma, defaults=defaults)
    files = {"sd_sweep.csv": scan.to_csv(), "sd_sweep.json": H.to_json(scan.as_dict()),
             "transport.json": res.to_json() + "\n",
             "sd_sweep.svg": line_plot_svg(
                 [("cancelled", scan.column("sd_cm"), scan.column("v_cancelled"))],
                 "signal vs source-detector distance", "SD (cm)", "V", logy=True)}
    sm = scan.summary
    print(f"slope {sm['slope_log10v_per_cm']:.4f} log10(V)/cm  p = {sm['slope_p_value']:.3e}  "
          f"no-signal PDs {sm['no_signal_pds']}")
    return _emit(args, files, scan.provenance)


def cmd_lateral(args):
    defaults = _defaults(args)
    transport = _transport(args)
    leak = 0.0 if args.no_leak else args.leak_fraction
    out = H.run_lateral_study(transport, leak, led_current_ma=args.led_ma, defaults=defaults)
    sm = out["summary"]
    ratio = "n/a" if sm["ratio"] is None else f"{100 * sm['ratio']:.2f}%"
    print(f"black {sm['black_v']:.4e} V / abdomen {sm['abdomen_v']:.4e} V = {ratio}")
    return _emit(args, {"lateral.json": H.to_json(out)}, out["provenance"])


def cmd_abdomen_chain(args):
    defaults = _defaults(args)
    transport = _transport(args)
    out = H.run_abdomen_chain(transport, args.sd_cm, args.led_ma, defaults=defaults)
    c = out["chain"]
    print(f"fraction {c['detected_fraction']:.4e}  P_pd {c['pd_power_w']:.4e} W  "
          f"V_cancelled {c['v_cancelled']:.4e} V")
    return _emit(args, {"chain.json": H.to_json(out)}, out["provenance"])


def cmd_analyze(args):
    defaults = _defaults(args)
    session = read_session(args.session)
    report = analyze_session(session, fit_order=args.fit_order)
    files = {"report.txt": render_text(report), "report.json": H.to_json(report)}
    if args.svg:
        files.update(session_svgs(session, report))
    sys.stdout.write(files["report.txt"])
    with open(args.session, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    prov = H.base_provenance(defaults, session_sha256=digest,
                             session_file=os.path.basename(args.session))
    return _emit(args, files, prov)


def cmd_synth_session(args):
    defaults = _defaults(args)
    seed = 0 if args.seed is None else args.seed
    s = synthetic_session(args.gap_sigma, args.sigma_v, seconds=args.seconds,
                          rate_hz=args.rate_hz, seed=seed, shared_noise=args.shared_noise)
    prov = H.base_provenance(defaults, seed=seed)
    return _emit(args, {"session.csv": format_session(s)}, prov)


def cmd_calibrate(args):
    defaults = _defaults(args)
    transport = _transport(args)
    out = H.calibrate(transport, args.target, args.sd_cm, tuple(args.bounds), defaults=defaults)
    print(f"mus_scale {out['mus_scale']:.4f} -> fraction {out['detected_fraction']:.4e} "
          f"(target {out['target']:.2e}, bracketed: {out['bracketed']})")
    prov = H.base_provenance(defaults, transport, bounds=list(args.bounds))
    files = {"calibration.json": H.to_json(out),
             "defaults_calibrated.yaml": H.calibrated_defaults_yaml(defaults, out["mus_scale"])}
    return _emit(args, files, prov)


def cmd_replay(args):
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        prov = manifest["provenance"]
        recorded = prov["cli"]
        content = _find_defaults(prov)
    except (OSError, ValueError, KeyError) as exc:
        raise InputDataError(f"cannot replay {args.manifest}: {exc}") from None
    ns = build_parser().parse_args([recorded["command"], *_required_stub(recorded)])
    for k, v in recorded["args"].items():
        setattr(ns, k, v)
    ns.out, ns.workers, ns.verbose = args.out, args.workers, args.verbose
    if content is not None:
        ns._defaults_data = content
    return ns.func(ns)


def _find_defaults(prov):
    """The defaults content echoed anywhere in a provenance block."""
    if isinstance(prov, dict):
        d = prov.get("defaults")
        if isinstance(d, dict) and "content" in d:
            data = dict(d["content"])
            data["_source"] = d.get("source", "builtin")
            return data
        for v in prov.values():
            found = _find_defaults(v)
            if found is not None:
                return found
    elif isinstance(prov, list):
        for v in prov:
            found = _find_defaults(v)
            if found is not None:
                return found
    return None


def _required_stub(recorded):
    """Placeholder values for required options; the recorded ones replace them."""
    a = recorded["args"]
    if recorded["command"] == "simulate":
        return ["--scene", a["scene"], "--probe", a["probe"]]
    if recorded["command"] == "analyze":
        return ["--session", a["session"]]
    return []


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
