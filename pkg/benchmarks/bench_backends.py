"""Compare the numba and pure-numpy transport backends on the same scenes.

Run from the repository root::

    python3 benchmarks/bench_backends.py --photons 20000

Both backends consume identical random streams, so the detected fractions
should agree to floating-point rounding; the table shows throughput and the
largest relative disagreement.
"""
import argparse
import time

from nirsbladder.media import Defaults
from nirsbladder.scene import build_abdomen_scene, build_phantom_scene
from nirsbladder.transport import ProbeLayout, TransportConfig, simulate


def scenes(defaults):
    yield "abdomen SD 4 cm", build_abdomen_scene(None, defaults), ProbeLayout.pair(4.0)
    yield ("phantom 300 ml", build_phantom_scene(300.0, 970.0, defaults),
           ProbeLayout.pair(4.0, center=(110.0, 0.0)))


def timed(scene, probe, cfg, backend, repeats):
    best, res = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = simulate(scene, probe, cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--photons", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    defaults = Defaults.load()
    cfg = TransportConfig(n_photons=args.photons, seed=args.seed, workers=1)
    warm = TransportConfig(n_photons=200, seed=args.seed, workers=1)
    print(f"{'scene':<18}{'backend':<8}{'seconds':>10}{'photons/s':>12}{'speedup':>9}"
          f"{'max rel diff':>14}")
    for name, scene, probe in scenes(defaults):
        simulate(scene, probe, warm, backend="numba")  # exclude JIT compilation
        t_nb, r_nb = timed(scene, probe, cfg, "numba", args.repeats)
        t_np, r_np = timed(scene, probe, cfg, "numpy", 1)
        diff = max(abs(a.detected_fraction - b.detected_fraction)
                   / max(abs(a.detected_fraction), 1e-300)
                   for a, b in zip(r_nb.detectors, r_np.detectors))
        for backend, t in (("numba", t_nb), ("numpy", t_np)):
            speed = t_np / t if backend == "numba" else 1.0
            print(f"{name:<18}{backend:<8}{t:>10.3f}{args.photons / t:>12.0f}{speed:>8.1f}x"
                  f"{diff if backend == 'numba' else 0.0:>14.1e}")


if __name__ == "__main__":
    main()
