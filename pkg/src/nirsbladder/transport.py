"""Monte Carlo photon transport through a :class:`~nirsbladder.scene.TissueScene`.

The public surface mirrors the life of one packet (:func:`launch`,
:func:`propagate`, :func:`detect`) and the batch driver :func:`simulate`.
The batch driver partitions photon indices into fixed batches, runs them on
a thread pool, and merges partial tallies in batch order, so results do not
depend on the number of workers.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import kernels as K
from ._backend import active_backend
from .errors import ConfigError, RangeError, SimulationFault
from .rng import PhotonRng

log = logging.getLogger(__name__)

N_OUTSIDE = 1.0
DEFAULT_SIDE_MM = 2.5


# -- probe ---------------------------------------------------------------


@dataclass(frozen=True)
class Emitter:
    """LED on the top surface; ``side_mm > 0`` gives it a square emitting area."""

    position: tuple
    half_angle_deg: float = 10.0
    wavelength_nm: float = 970.0
    side_mm: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.half_angle_deg <= 90.0:
            raise ConfigError(f"emitter cone half-angle must lie in [0, 90] deg, "
                              f"got {self.half_angle_deg}")
        if self.side_mm < 0:
            raise ConfigError("emitter side must be >= 0")

    def as_array(self, top_z):
        return np.array([self.position[0], self.position[1], top_z,
                         math.cos(math.radians(self.half_angle_deg)), self.side_mm])


@dataclass(frozen=True)
class Detector:
    """Photodiode with a square active area centred on ``position``."""

    position: tuple
    active_area_mm2: float = DEFAULT_SIDE_MM ** 2
    acceptance_deg: float = 60.0

    def __post_init__(self):
        if not self.active_area_mm2 > 0:
            raise ConfigError(f"detector active area must be > 0, got {self.active_area_mm2}")
        if not 0.0 < self.acceptance_deg <= 90.0:
            raise ConfigError(f"acceptance half-angle must lie in (0, 90] deg, "
                              f"got {self.acceptance_deg}")

    @property
    def half_side(self):
        return 0.5 * math.sqrt(self.active_area_mm2)

    def as_row(self):
        return [self.position[0], self.position[1], self.half_side,
                math.cos(math.radians(self.acceptance_deg))]


class ProbeLayout:
    """Emitters and detectors on the scene's top surface (mm coordinates)."""

    def __init__(self, emitters, detectors):
        self.emitters = tuple(emitters)
        self.detectors = tuple(detectors)
        if not self.emitters:
            raise ConfigError("probe needs at least one emitter")

    @classmethod
    def pair(cls, sd_cm=4.0, center=(0.0, 0.0), **kw):
        """One emitter and one detector ``sd_cm`` apart along x, centred on ``center``."""
        h = 5.0 * sd_cm
        return cls.line([sd_cm], origin=(center[0] - h, center[1]), **kw)

    @classmethod
    def line(cls, sds_cm, origin=(0.0, 0.0), half_angle_deg=10.0, wavelength_nm=970.0,
             active_area_mm2=DEFAULT_SIDE_MM ** 2, acceptance_deg=60.0):
        """Emitter at ``origin`` and detectors at the given distances along +x."""
        em = Emitter((float(origin[0]), float(origin[1])), half_angle_deg, wavelength_nm)
        dets = [Detector((origin[0] + 10.0 * sd, float(origin[1])), active_area_mm2,
                         acceptance_deg) for sd in sds_cm]
        return cls([em], dets)

    @property
    def sd_distance(self):
        """Distance (cm) from the first emitter to the first detector."""
        return self.detector_sd_cm()[0] if self.detectors else None

    @property
    def pair_spacing(self):
        """Spacing (cm) between consecutive detectors, when there are several."""
        if len(self.detectors) < 2:
            return None
        a, b = self.detectors[0].position, self.detectors[1].position
        return math.hypot(b[0] - a[0], b[1] - a[1]) / 10.0

    def detector_sd_cm(self, emitter=0):
        ex, ey = self.emitters[emitter].position[:2]
        return [math.hypot(d.position[0] - ex, d.position[1] - ey) / 10.0
                for d in self.detectors]

    def shifted(self, dx_mm, dy_mm=0.0):
        move = lambda p: (p[0] + dx_mm, p[1] + dy_mm)  # noqa: E731
        return ProbeLayout([Emitter(move(e.position), e.half_angle_deg, e.wavelength_nm, e.side_mm)
                            for e in self.emitters],
                           [Detector(move(d.position), d.active_area_mm2, d.acceptance_deg)
                            for d in self.detectors])

    def swapped(self):
        """Single-pair layout with emitter and detector exchanged."""
        if len(self.emitters) != 1 or len(self.detectors) != 1:
            raise ConfigError("swapping needs exactly one emitter and one detector")
        e, d = self.emitters[0], self.detectors[0]
        return ProbeLayout([Emitter(d.position, e.half_angle_deg, e.wavelength_nm, e.side_mm)],
                           [Detector(e.position, d.active_area_mm2, d.acceptance_deg)])

    def validate(self, scene):
        """Check every optode footprint lies on the scene's top surface."""
        if not self.detectors:
            raise ConfigError("probe has no detectors")
        (x0, x1), (y0, y1), _ = scene.bounds
        items = [(e.position, 0.5 * e.side_mm, "emitter") for e in self.emitters]
        items += [(d.position, d.half_side, "detector") for d in self.detectors]
        for pos, h, kind in items:
            if len(pos) == 3 and abs(pos[2] - scene.top_z) > 1e-9:
                raise ConfigError(f"{kind} at {pos} is not on the top surface z={scene.top_z}")
            if not (x0 <= pos[0] - h and pos[0] + h <= x1 and y0 <= pos[1] - h
                    and pos[1] + h <= y1):
                raise ConfigError(f"{kind} at {tuple(pos)} lies off the scene's top surface")

    def as_dict(self):
        return {"emitters": [{**asdict(e), "position": list(e.position)} for e in self.emitters],
                "detectors": [{**asdict(d), "position": list(d.position)} for d in self.detectors]}

    @classmethod
    def from_dict(cls, cfg):
        try:
            ems = [Emitter(tuple(e["position"]), e.get("half_angle_deg", 10.0),
                           e.get("wavelength_nm", 970.0), e.get("side_mm", 0.0))
                   for e in cfg["emitters"]]
            dets = [Detector(tuple(d["position"]), d.get("active_area_mm2", DEFAULT_SIDE_MM ** 2),
                             d.get("acceptance_deg", 60.0)) for d in cfg.get("detectors", [])]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed probe config: {exc}") from exc
        return cls(ems, dets)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    @property
    def hash(self):
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- configuration -------------------------------------------------------


@dataclass(frozen=True)
class TransportConfig:
    """Run parameters.  ``workers`` only affects speed, never results."""

    n_photons: int = 100_000
    seed: int = 20240501
    roulette_threshold: float = 1e-4
    roulette_survival: float = 0.1
    batch_size: int = 50_000
    workers: int = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not int(self.n_photons) > 0:
            raise ConfigError(f"n_photons must be > 0, got {self.n_photons}")
        if not 0.0 < self.roulette_survival < 1.0:
            raise ConfigError(f"roulette_survival must lie in (0, 1), got {self.roulette_survival}")
        if not self.roulette_threshold >= 0:
            raise ConfigError("roulette_threshold must be >= 0")
        if not int(self.batch_size) > 0:
            raise ConfigError("batch_size must be > 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers is not None and int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")

    def result_fields(self):
        d = asdict(self)
        d.pop("workers")
        return d

    @property
    def hash(self):
        blob = json.dumps(self.result_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- single-packet API ---------------------------------------------------


@dataclass
class PhotonState:
    """One packet.  Wraps the flat arrays the kernels operate on."""

    st: np.ndarray
    idx: np.ndarray
    partial: np.ndarray
    media_labels: tuple = ()
    top_z: float = 0.0

    @property
    def position(self):
        return self.st[K.X:K.Z + 1].copy()

    @property
    def direction(self):
        return self.st[K.UX:K.UZ + 1].copy()

    @property
    def weight(self):
        return float(self.st[K.W])

    @property
    def max_depth(self):
        return float(self.st[K.MAXZ] - self.top_z)

    @property
    def path_length(self):
        return float(self.st[K.PATH])

    @property
    def partial_path(self):
        return {m: float(v) for m, v in zip(self.media_labels, self.partial)}

    @classmethod
    def make(cls, scene, position, direction, weight=1.0, tau=None):
        """A packet at ``position`` heading along ``direction`` inside ``scene``."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        st = np.zeros(K.STATE_LEN)
        st[K.X:K.Z + 1] = position
        st[K.UX:K.UZ + 1] = d
        st[K.W] = weight
        st[K.MAXZ] = position[2]
        st[K.TAU] = np.inf if tau is None else tau
        idx = np.zeros(4, dtype=np.int64)
        g = scene.grid
        K.locate(st, idx, g.origin, g.res, g.labels.shape)
        idx[K.MED] = g.labels[idx[0], idx[1], idx[2]]
        return cls(st, idx, np.zeros(len(scene.media_order)), scene.media_order, scene.top_z)


@dataclass(frozen=True)
class Terminated:
    """Outcome of a packet that left transport: absorbed, escaped or detected-candidate."""

    reason: str
    state: PhotonState


@dataclass(frozen=True)
class DetectorHit:
    detector: int
    weight: float
    partial_path: dict
    max_depth: float


_REASONS = {K.ABSORBED: "absorbed", K.ESCAPED: "escaped", K.EXITED_TOP: "detected-candidate",
            K.STUCK: "absorbed"}


def launch(emitter, rng, scene=None):
    """Sample a fresh packet from ``emitter`` using stream ``rng``.

    Without a scene the packet is returned just inside the surface with no
    Fresnel loss; with a scene, specular reflection on entry yields a
    :class:`Terminated` ``escaped`` outcome.
    """
    if scene is None:
        st = np.zeros(K.STATE_LEN)
        x, y = emitter.position[:2]
        if emitter.side_mm > 0:
            x += (rng.uniform() - 0.5) * emitter.side_mm
            y += (rng.uniform() - 0.5) * emitter.side_mm
        cos_half = math.cos(math.radians(emitter.half_angle_deg))
        ct = 1.0 - rng.uniform() * (1.0 - cos_half)
        phi = K.TWO_PI * rng.uniform()
        s = math.sqrt(max(0.0, 1.0 - ct * ct))
        st[:K.W + 1] = x, y, 0.0, s * math.cos(phi), s * math.sin(phi), ct, 1.0
        st[K.TAU] = -math.log(rng.uniform())
        return PhotonState(st, np.zeros(4, dtype=np.int64), np.zeros(0))
    g = scene.grid
    state = PhotonState(np.zeros(K.STATE_LEN), np.zeros(4, dtype=np.int64),
                        np.zeros(len(scene.media_order)), scene.media_order, scene.top_z)
    status = K.launch(state.st, state.idx, emitter.as_array(scene.top_z), g.labels, g.origin,
                      g.res, g.media_table, N_OUTSIDE, rng.state)
    if status != K.ALIVE:
        return Terminated("escaped", state)
    return state


def _fault(state, index=None):
    dump = {"photon_index": index, "position": state.st[K.X:K.Z + 1].tolist(),
            "direction": state.st[K.UX:K.UZ + 1].tolist(), "weight": float(state.st[K.W]),
            "max_z": float(state.st[K.MAXZ]), "path": float(state.st[K.PATH])}
    return SimulationFault(f"non-finite photon state: {dump}", dump)


def propagate(state, scene, rng, config=None):
    """Advance ``state`` to its next scattering event, or terminate it.

    Returns the (mutated) state after a scattering event, or a
    :class:`Terminated`.  Raises :class:`SimulationFault` on a non-finite
    state.
    """
    config = config or TransportConfig()
    g = scene.grid
    status = K.advance(state.st, state.idx, state.partial, g.labels, g.safe, g.origin, g.res,
                       g.media_table, N_OUTSIDE, rng.state, config.roulette_threshold,
                       config.roulette_survival, config.max_steps)
    if status == K.FAULT:
        raise _fault(state)
    if status == K.ALIVE:
        return state
    return Terminated(_REASONS[int(status)], state)


def detect(state, probe):
    """The :class:`DetectorHit` for a packet that exited the top face, or ``None``."""
    if isinstance(state, Terminated):
        state = state.state
    rows = np.array([d.as_row() for d in probe.detectors], dtype=float).reshape(-1, 4)
    d = K.detect(state.st, rows)
    if d < 0:
        return None
    return DetectorHit(int(d), state.weight, state.partial_path, state.max_depth)


def penetration_depth_estimate(sd_distance):
    """Reflection-mode sensing depth heuristic: half the source-detector distance (cm)."""
    if sd_distance < 0:
        raise RangeError(f"sd_distance must be >= 0, got {sd_distance}")
    return sd_distance / 2.0


# -- batch driver --------------------------------------------------------


@dataclass
class DetectorTally:
    id: int
    sd_cm: float
    weight_sum: float
    weight_sq_sum: float
    hit_count: int
    detected_fraction: float
    stderr: float
    mean_max_depth_mm: float
    max_depth_percentiles_mm: dict
    mean_path_mm: float
    mean_partial_path_mm: dict
    depth_histogram: list


@dataclass
class TransportResult:
    """Aggregated tallies of one :func:`simulate` call."""

    n_photons: int
    detectors: list
    absorbed_fraction: float
    escaped_fraction: float
    stuck_photons: int
    provenance: dict = field(default_factory=dict)

    @property
    def detected_fraction(self):
        return np.array([d.detected_fraction for d in self.detectors])

    @property
    def stderr(self):
        return np.array([d.stderr for d in self.detectors])

    @property
    def total_detected_fraction(self):
        return float(sum(d.weight_sum for d in self.detectors) / self.n_photons)

    def as_dict(self):
        return {"n_photons": self.n_photons, "absorbed_fraction": self.absorbed_fraction,
                "escaped_fraction": self.escaped_fraction, "stuck_photons": self.stuck_photons,
                "detectors": [asdict(d) for d in self.detectors],
                "provenance": self.provenance}

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_photons"], [DetectorTally(**t) for t in d["detectors"]],
                   d["absorbed_fraction"], d["escaped_fraction"], d["stuck_photons"],
                   d.get("provenance", {}))


def _percentiles(hist, qs=(10, 50, 90)):
    total = hist.sum()
    if total <= 0:
        return {f"p{q}": None for q in qs}
    cdf = np.cumsum(hist) / total
    out = {}
    for q in qs:
        b = int(np.searchsorted(cdf, q / 100.0))
        lo = cdf[b - 1] if b > 0 else 0.0
        frac = (q / 100.0 - lo) / (cdf[b] - lo) if cdf[b] > lo else 0.0
        out[f"p{q}"] = float(b + frac)
    return out


def _kernel(backend):
    if backend == "numpy":
        from .kernels_numpy import run_batch
        return run_batch
    return K.run_batch


def simulate(scene, probe, config=None, emitter=0, backend=None):
    """Transport ``config.n_photons`` packets from one emitter and tally detectors.

    Photons are split into fixed batches of ``config.batch_size``; batch
    tallies are merged in batch order, so the result is identical for any
    ``config.workers``.  The backend is numba unless
    ``NIRSBLADDER_BACKEND=numpy`` (or ``backend``) says otherwise.
    """
    config = config or TransportConfig()
    probe.validate(scene)
    backend = active_backend(backend)
    run_batch = _kernel(backend)
    g = scene.grid
    em = probe.emitters[emitter].as_array(scene.top_z)
    dets = np.array([d.as_row() for d in probe.detectors], dtype=float)
    nd, nm = len(dets), g.media_table.shape[0]
    nbins = int(math.ceil((scene.bounds[2][1] - scene.bounds[2][0]) / 1.0))
    n = int(config.n_photons)
    bs = int(config.batch_size)
    starts = list(range(0, n, bs))

    def work(start):
        count = min(bs, n - start)
        out = (np.zeros((nd, K.N_TALLY)), np.zeros((nd, nm)), np.zeros((nd, nbins)),
               np.zeros(4), np.full(1 + K.STATE_LEN, -1.0))
        run_batch(g.labels, g.safe, g.origin, g.res, g.media_table, N_OUTSIDE, em, dets,
                  np.uint64(config.seed), start, count, config.roulette_threshold,
                  config.roulette_survival, config.max_steps, *out)
        return out

    workers = config.workers or os.cpu_count() or 1
    if workers == 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))

    tally = np.zeros((nd, K.N_TALLY))
    partial = np.zeros((nd, nm))
    hist = np.zeros((nd, nbins))
    totals = np.zeros(4)
    for t, p, h, tot, fault in parts:
        if fault[0] >= 0:
            st = fault[1:]
            dump = {"photon_index": int(fault[0]), "position": st[K.X:K.Z + 1].tolist(),
                    "direction": st[K.UX:K.UZ + 1].tolist(), "weight": float(st[K.W]),
                    "path": float(st[K.PATH])}
            raise SimulationFault(f"non-finite photon state in photon {int(fault[0])}", dump)
        tally += t
        partial += p
        hist += h
        totals += tot

    sds = probe.detector_sd_cm(emitter)
    rows = []
    for d in range(nd):
        w, w2, hits = tally[d, K.T_W], tally[d, K.T_W2], int(tally[d, K.T_HITS])
        mean = w / n
        var = max(w2 / n - mean * mean, 0.0) / max(n - 1, 1)
        rows.append(DetectorTally(
            id=d, sd_cm=sds[d], weight_sum=float(w), weight_sq_sum=float(w2), hit_count=hits,
            detected_fraction=float(mean), stderr=float(math.sqrt(var)),
            mean_max_depth_mm=float(tally[d, K.T_DEPTH] / w) if w > 0 else None,
            max_depth_percentiles_mm=_percentiles(hist[d]),
            mean_path_mm=float(tally[d, K.T_PATH] / w) if w > 0 else None,
            mean_partial_path_mm={m: (float(partial[d, i] / w) if w > 0 else None)
                                  for i, m in enumerate(scene.media_order)},
            depth_histogram=hist[d].tolist()))
    if totals[K.G_STUCK]:
        log.warning("%d photons hit the step limit and were counted absorbed",
                    int(totals[K.G_STUCK]))
    prov = {"seed": int(config.seed), "config": config.result_fields(),
            "config_hash": config.hash, "scene_hash": scene.hash, "probe_hash": probe.hash,
            "scene": scene.name, "wavelength_nm": scene.wavelength,
            "mus_scale": scene.mus_scale, "backend": backend, "emitter": emitter}
    return TransportResult(n, rows, float(totals[K.G_ABSORBED] / n),
                           float(totals[K.G_ESCAPED] / n), int(totals[K.G_STUCK]), prov)
