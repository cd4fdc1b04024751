"""Voxelised tissue scenes: the abdomen model, the water phantom and variants.

Coordinates are millimetres.  ``z`` is depth and grows into the tissue; the
probe sits on the top face ``z = bounds[2][0]``.  A scene is a stack of
slabs along ``z``, optionally overridden by fixed structural regions (the
phantom container, air outside the phantom) and by one bladder inclusion,
which takes precedence over everything else.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy import ndimage

from .errors import ConfigError, RangeError, SceneError
from .media import Defaults, OpticalMedium

CONTAINER_SIDE_MM = 80.0
PHANTOM_LENGTH_MM = 220.0
SLAB_MM = 20.0


class OutOfBounds(LookupError):
    """A query point lies outside the scene box."""


@dataclass(frozen=True)
class Region:
    """Axis-aligned box (``lo``/``hi`` corners) or ellipsoid (``center``/``semi_axes``)."""

    shape: str
    medium: str
    lo: tuple = None
    hi: tuple = None
    center: tuple = None
    semi_axes: tuple = None

    def __post_init__(self):
        if self.shape == "box":
            if self.lo is None or self.hi is None or any(a > b for a, b in zip(self.lo, self.hi)):
                raise SceneError(f"box region needs lo <= hi, got {self.lo}, {self.hi}")
        elif self.shape == "ellipsoid":
            if self.center is None or self.semi_axes is None or min(self.semi_axes) <= 0:
                raise SceneError("ellipsoid region needs a center and positive semi_axes")
        else:
            raise SceneError(f"unknown region shape {self.shape!r}")

    def extent(self):
        if self.shape == "box":
            return tuple(self.lo), tuple(self.hi)
        c, r = self.center, self.semi_axes
        return (tuple(ci - ri for ci, ri in zip(c, r)), tuple(ci + ri for ci, ri in zip(c, r)))

    def contains(self, p):
        if self.shape == "box":
            return all(lo <= x < hi for x, lo, hi in zip(p, self.lo, self.hi))
        return sum(((x - c) / r) ** 2 for x, c, r in zip(p, self.center, self.semi_axes)) <= 1.0

    def volume_mm3(self):
        if self.shape == "box":
            return float(np.prod(np.subtract(self.hi, self.lo)))
        return 4.0 / 3.0 * math.pi * float(np.prod(self.semi_axes))

    def as_dict(self):
        d = {"shape": self.shape, "medium": self.medium}
        for k in ("lo", "hi", "center", "semi_axes"):
            v = getattr(self, k)
            if v is not None:
                d[k] = [float(x) for x in v]
        return d


@dataclass(frozen=True)
class Inclusion:
    region: Region
    volume_ml: float

    def as_dict(self):
        return {"volume_ml": float(self.volume_ml), **self.region.as_dict()}


@dataclass(frozen=True)
class SceneOffset:
    """Lateral probe displacement (cm) along ``x`` relative to the scene origin."""

    dx_cm: float = 0.0
    dy_cm: float = 0.0

    def apply(self, point_mm):
        x, y, z = point_mm
        return (x + 10.0 * self.dx_cm, y + 10.0 * self.dy_cm, z)


@dataclass(frozen=True)
class VoxelGrid:
    labels: np.ndarray      # uint8 (nx, ny, nz) index into ``media``
    safe: np.ndarray        # uint8 Chebyshev distance to the nearest medium change
    origin: np.ndarray      # float64 (3,) low corner, mm
    res: float
    media_table: np.ndarray  # float64 (m, 4): mu_a, mu_s (mm^-1), g, n

    @property
    def shape(self):
        return self.labels.shape

    @property
    def n_voxels(self):
        return int(self.labels.size)


class TissueScene:
    """Immutable scene description plus its lazily built voxel grid."""

    def __init__(self, bounds, layers, media, regions=(), inclusion=None,
                 voxel_resolution=1.0, wavelength=970.0, name="custom", mus_scale=1.0):
        self.bounds = tuple((float(a), float(b)) for a, b in bounds)
        if len(self.bounds) != 3 or any(b <= a for a, b in self.bounds):
            raise SceneError(f"bounds must be three increasing intervals, got {bounds}")
        self.layers = tuple((float(t), str(m)) for t, m in layers)
        depth = self.bounds[2][1] - self.bounds[2][0]
        total = sum(t for t, _ in self.layers)
        if not self.layers or any(t <= 0 for t, _ in self.layers):
            raise SceneError("layers must be a non-empty list of positive thicknesses")
        if abs(total - depth) > 1e-9 * max(1.0, depth):
            raise SceneError(f"layer thicknesses sum to {total:g} mm but the scene is "
                             f"{depth:g} mm deep")
        self.regions = tuple(regions)
        self.inclusion = inclusion
        self.voxel_resolution = float(voxel_resolution)
        self.wavelength = float(wavelength)
        self.name = name
        self.mus_scale = float(mus_scale)
        if self.voxel_resolution <= 0:
            raise SceneError("voxel_resolution must be positive")
        for lo, hi in self.bounds:
            cells = (hi - lo) / self.voxel_resolution
            if abs(cells - round(cells)) > 1e-6:
                raise SceneError(f"extent {hi - lo:g} mm is not a multiple of the "
                                 f"{self.voxel_resolution:g} mm voxel")
        if inclusion is not None:
            lo, hi = inclusion.region.extent()
            for (a, b), l, h in zip(self.bounds, lo, hi):
                if l < a - 1e-9 or h > b + 1e-9:
                    raise SceneError("inclusion must lie fully inside the scene bounds")
        used = [m for _, m in self.layers] + [r.medium for r in self.regions]
        if inclusion is not None:
            used.append(inclusion.region.medium)
        missing = sorted({m for m in used if m not in media})
        if missing:
            raise SceneError(f"no optical properties for media {missing}")
        # label order: first appearance, stable across runs
        self.media_order = tuple(dict.fromkeys(used))
        self.media = {k: media[k] for k in self.media_order}
        self._grid = None

    # -- geometry --------------------------------------------------------

    @property
    def top_z(self):
        return self.bounds[2][0]

    @property
    def layer_boundaries(self):
        """Depths (mm) of the bottom of each layer."""
        return tuple(np.cumsum([t for t, _ in self.layers]) + self.top_z)

    def analytic_medium(self, point):
        """Medium label from the continuous geometry (no voxelisation)."""
        self._check_inside(point)
        if self.inclusion is not None and self.inclusion.region.contains(point):
            return self.inclusion.region.medium
        for region in reversed(self.regions):
            if region.contains(point):
                return region.medium
        z = point[2]
        for bottom, (_, label) in zip(self.layer_boundaries, self.layers):
            if z < bottom:
                return label
        return self.layers[-1][1]

    def _check_inside(self, point):
        for x, (lo, hi) in zip(point, self.bounds):
            if not lo <= x <= hi:
                raise OutOfBounds(f"point {tuple(point)} outside scene bounds {self.bounds}")

    # -- voxelisation ----------------------------------------------------

    @property
    def grid(self):
        if self._grid is None:
            self._grid = self._voxelise()
        return self._grid

    def _index_range(self, axis, lo, hi):
        """Voxel indices whose centres fall in [lo, hi)."""
        a0 = self.bounds[axis][0]
        n = self._shape()[axis]
        i0 = math.ceil((lo - a0) / self.voxel_resolution - 0.5)
        i1 = math.ceil((hi - a0) / self.voxel_resolution - 0.5)
        return max(i0, 0), min(i1, n)

    def _shape(self):
        return tuple(int(round((hi - lo) / self.voxel_resolution)) for lo, hi in self.bounds)

    def _centres(self, axis, i0, i1):
        return self.bounds[axis][0] + (np.arange(i0, i1) + 0.5) * self.voxel_resolution

    def _paint(self, labels, region, value):
        lo, hi = region.extent()
        if region.shape == "box":
            sl = tuple(slice(*self._index_range(a, lo[a], hi[a])) for a in range(3))
            labels[sl] = value
            return
        ranges = [self._index_range(a, lo[a], hi[a] + 1e-12) for a in range(3)]
        xs, ys, zs = (self._centres(a, *ranges[a]) for a in range(3))
        c, r = region.center, region.semi_axes
        inside = (((xs[:, None, None] - c[0]) / r[0]) ** 2
                  + ((ys[None, :, None] - c[1]) / r[1]) ** 2
                  + ((zs[None, None, :] - c[2]) / r[2]) ** 2) <= 1.0
        sub = labels[tuple(slice(*rg) for rg in ranges)]
        sub[inside] = value

    def _voxelise(self):
        shape = self._shape()
        index = {m: i for i, m in enumerate(self.media_order)}
        labels = np.empty(shape, dtype=np.uint8)
        zc = self._centres(2, 0, shape[2])
        layer_of = np.searchsorted(np.asarray(self.layer_boundaries), zc, side="right")
        layer_of = np.minimum(layer_of, len(self.layers) - 1)
        labels[:] = np.array([index[self.layers[k][1]] for k in layer_of], dtype=np.uint8)
        for region in self.regions:
            self._paint(labels, region, index[region.medium])
        if self.inclusion is not None:
            self._paint(labels, self.inclusion.region, index[self.inclusion.region.medium])

        # a voxel is a boundary voxel if any 26-neighbour (or the outside) differs
        hi = ndimage.maximum_filter(labels, size=3, mode="constant", cval=255)
        lo = ndimage.minimum_filter(labels, size=3, mode="constant", cval=255)
        boundary = (hi != labels) | (lo != labels)
        if boundary.all():
            safe = np.zeros(shape, dtype=np.uint8)
        else:
            dist = ndimage.distance_transform_cdt(~boundary, metric="chessboard")
            safe = np.minimum(dist, 255).astype(np.uint8)

        table = np.array([[m.mu_a / 10.0, m.mu_s / 10.0, m.g, m.n]
                          for m in (self.media[k] for k in self.media_order)], dtype=np.float64)
        for arr in (labels, safe, table):
            arr.setflags(write=False)
        origin = np.array([lo for lo, _ in self.bounds], dtype=np.float64)
        origin.setflags(write=False)
        return VoxelGrid(labels=labels, safe=safe, origin=origin,
                         res=self.voxel_resolution, media_table=table)

    def voxel_index(self, point):
        self._check_inside(point)
        shape = self._shape()
        return tuple(min(int((x - lo) // self.voxel_resolution), n - 1)
                     for x, (lo, _), n in zip(point, self.bounds, shape))

    def water_voxels(self, label="water"):
        """Boolean mask of voxels holding ``label``."""
        if label not in self.media_order:
            return np.zeros(self._shape(), dtype=bool)
        return self.grid.labels == self.media_order.index(label)

    # -- provenance ------------------------------------------------------

    def describe(self):
        return {
            "name": self.name,
            "bounds_mm": [list(b) for b in self.bounds],
            "layers": [[t, m] for t, m in self.layers],
            "regions": [r.as_dict() for r in self.regions],
            "inclusion": None if self.inclusion is None else self.inclusion.as_dict(),
            "media": {k: self.media[k].as_dict() for k in self.media_order},
            "voxel_resolution_mm": self.voxel_resolution,
            "wavelength_nm": self.wavelength,
            "mus_scale": self.mus_scale,
        }

    @property
    def hash(self):
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __repr__(self):
        return f"TissueScene({self.name!r}, {self._shape()} voxels @ {self.voxel_resolution} mm)"


def medium_at(scene, point):
    """Medium occupying ``point`` (mm), looked up on the voxel grid.

    Raises :class:`OutOfBounds` outside the scene box.
    """
    i, j, k = scene.voxel_index(point)
    return scene.media[scene.media_order[scene.grid.labels[i, j, k]]]


# --- builders ------------------------------------------------------------


def _resolve_media(labels, defaults, wavelength, mus_scale, overrides):
    overrides = overrides or {}
    out = {}
    for label in labels:
        out[label] = defaults.medium(label, wavelength, mus_scale=mus_scale,
                                     overrides=overrides.get(label))
    for label, ov in overrides.items():
        if label not in out:
            out[label] = defaults.medium(label, wavelength, mus_scale=mus_scale, overrides=ov)
    return out


def _ellipsoid_for_volume(volume_ml, center_xy, top_z, lateral_semi_mm=40.0):
    """Ellipsoid of ``volume_ml`` whose top touches ``top_z``; flattened if small."""
    v = volume_ml * 1000.0
    a = lateral_semi_mm
    c = v / (4.0 / 3.0 * math.pi * a * a)
    if c > a:
        a = c = (v / (4.0 / 3.0 * math.pi)) ** (1.0 / 3.0)
    return Region("ellipsoid", "water", center=(center_xy[0], center_xy[1], top_z + c),
                  semi_axes=(a, a, c))


def build_abdomen_scene(config=None, defaults=None):
    """Layered abdomen cube: air 10, dermis 2, fat 10, muscle 128 mm.

    ``config`` keys (all optional): ``layers``, ``size_mm`` (cube edge),
    ``lateral_mm`` (x extent, for long source-detector sweeps),
    ``wavelength_nm``, ``voxel_resolution_mm``, ``mus_scale``, ``media``
    (per-label overrides) and ``inclusion`` (``volume_ml`` plus optional
    ``center_mm``, ``top_depth_mm``, ``lateral_semi_mm``).
    """
    cfg = dict(config or {})
    defaults = defaults or Defaults.load()
    size = float(cfg.get("size_mm", 150.0))
    lateral = float(cfg.get("lateral_mm", size))
    layers = cfg.get("layers", [(10, "air"), (2, "dermis"), (10, "fat"), (128, "muscle")])
    layers = [(float(t), str(m)) for t, m in layers]
    total = sum(t for t, _ in layers)
    if abs(total - size) > 1e-9:
        raise SceneError(f"layer thicknesses {tuple(t for t, _ in layers)} sum to "
                         f"{total:g} mm, not the {size:g} mm cube depth")
    wl = float(cfg.get("wavelength_nm", 970.0))
    scale = cfg.get("mus_scale", defaults.mus_scale)
    bounds = ((-lateral / 2, lateral / 2), (-size / 2, size / 2), (0.0, size))
    inclusion = None
    labels = [m for _, m in layers]
    inc = cfg.get("inclusion")
    if inc:
        vol = float(inc["volume_ml"])
        if vol <= 0:
            raise RangeError("inclusion volume must be positive")
        skin = next((sum(t for t, _ in layers[:i]) for i, (_, m) in enumerate(layers)
                     if m != "air"), 0.0)
        top = skin + float(inc.get("top_depth_mm", 30.0))
        cx, cy = inc.get("center_mm", (0.0, 0.0))[:2]
        region = _ellipsoid_for_volume(vol, (cx, cy), top, inc.get("lateral_semi_mm", 40.0))
        inclusion = Inclusion(region, vol)
        labels.append("water")
    media = _resolve_media(labels, defaults, wl, scale, cfg.get("media"))
    return TissueScene(bounds, layers, media, inclusion=inclusion,
                       voxel_resolution=cfg.get("voxel_resolution_mm", 1.0), wavelength=wl,
                       name="abdomen", mus_scale=scale if scale is not None else 1.0)


def fill_height_cm(volume_ml, container_side_cm=CONTAINER_SIDE_MM / 10.0):
    """Water column height for a flat, gravity-settled fill."""
    return volume_ml / (container_side_cm * container_side_cm)


def _phantom_frame(margin_mm, width_mm, depth_mm):
    bounds = ((-margin_mm, PHANTOM_LENGTH_MM + margin_mm),
              (-width_mm / 2, width_mm / 2), (0.0, depth_mm))
    outside = [
        Region("box", "air", lo=(-margin_mm, -width_mm / 2, 0.0),
               hi=(0.0, width_mm / 2, depth_mm)),
        Region("box", "air", lo=(PHANTOM_LENGTH_MM, -width_mm / 2, 0.0),
               hi=(PHANTOM_LENGTH_MM + margin_mm, width_mm / 2, depth_mm)),
    ]
    return bounds, outside


def build_phantom_scene(volume_ml, wavelength=970.0, defaults=None, container_height_mm=80.0,
                        margin_mm=50.0, width_mm=120.0, voxel_resolution=1.0,
                        mus_scale=None, media=None):
    """Optical phantom: 22 cm of slab tissue over an 8x8 cm water container.

    The probe looks up through a 2 cm slab into the container, whose water
    settles against the slab to a height of ``volume_ml / 64`` cm; the rest
    of the container is air.  Tissue surrounds the container, and air fills
    the margins beyond both ends of the phantom.
    """
    cap = CONTAINER_SIDE_MM * CONTAINER_SIDE_MM * container_height_mm / 1000.0
    if not 0.0 <= volume_ml <= cap:
        raise RangeError(f"phantom container holds 0..{cap:g} ml, got {volume_ml:g} ml")
    defaults = defaults or Defaults.load()
    depth = SLAB_MM + container_height_mm
    bounds, regions = _phantom_frame(margin_mm, width_mm, depth)
    x0 = PHANTOM_LENGTH_MM / 2 - CONTAINER_SIDE_MM / 2
    lo = (x0, -CONTAINER_SIDE_MM / 2, SLAB_MM)
    hi = (x0 + CONTAINER_SIDE_MM, CONTAINER_SIDE_MM / 2, depth)
    regions.append(Region("box", "air", lo=lo, hi=hi))
    inclusion = None
    labels = ["slab", "air"]
    if volume_ml > 0:
        h = 10.0 * fill_height_cm(volume_ml)
        inclusion = Inclusion(Region("box", "water", lo=lo, hi=(hi[0], hi[1], SLAB_MM + h)),
                              float(volume_ml))
        labels.append("water")
    scale = defaults.mus_scale if mus_scale is None else mus_scale
    return TissueScene(bounds, [(depth, "slab")], _resolve_media(labels, defaults, wavelength,
                                                                   scale, media),
                       regions=regions, inclusion=inclusion, voxel_resolution=voxel_resolution,
                       wavelength=wavelength, name=f"phantom-{volume_ml:g}ml", mus_scale=scale)


def build_porcine_scene(volume_ml=200.0, wavelength=970.0, defaults=None, depth_mm=100.0,
                        margin_mm=50.0, width_mm=120.0, voxel_resolution=1.0,
                        mus_scale=None, media=None):
    """Ex vivo variant: water-filled ellipsoidal bladder in intestine under the slab."""
    if volume_ml <= 0:
        raise RangeError("porcine bladder volume must be positive")
    defaults = defaults or Defaults.load()
    bounds, regions = _phantom_frame(margin_mm, width_mm, depth_mm)
    region = _ellipsoid_for_volume(volume_ml, (PHANTOM_LENGTH_MM / 2, 0.0), SLAB_MM)
    scale = defaults.mus_scale if mus_scale is None else mus_scale
    labels = ["slab", "intestine", "air", "water"]
    return TissueScene(bounds, [(SLAB_MM, "slab"), (depth_mm - SLAB_MM, "intestine")],
                       _resolve_media(labels, defaults, wavelength, scale, media),
                       regions=regions, inclusion=Inclusion(region, float(volume_ml)),
                       voxel_resolution=voxel_resolution, wavelength=wavelength,
                       name=f"porcine-{volume_ml:g}ml", mus_scale=scale)


def build_black_scene(wavelength=970.0, defaults=None, size_mm=150.0, air_gap_mm=0.0,
                      voxel_resolution=1.0, mus_scale=None, media=None):
    """Probe resting on a block of black absorbing foam."""
    defaults = defaults or Defaults.load()
    layers = [(size_mm - air_gap_mm, "black_foam")]
    if air_gap_mm > 0:
        layers.insert(0, (air_gap_mm, "air"))
    scale = defaults.mus_scale if mus_scale is None else mus_scale
    bounds = ((-size_mm / 2, size_mm / 2), (-size_mm / 2, size_mm / 2), (0.0, size_mm))
    return TissueScene(bounds, layers, _resolve_media([m for _, m in layers], defaults,
                                                      wavelength, scale, media),
                       voxel_resolution=voxel_resolution, wavelength=wavelength,
                       name="black-absorber", mus_scale=scale)


def build_slab_scene(medium, thickness_mm, lateral_mm=100.0, voxel_resolution=1.0,
                     wavelength=970.0):
    """Single homogeneous slab with explicit optics (test and benchmark helper)."""
    half = lateral_mm / 2
    return TissueScene(((-half, half), (-half, half), (0.0, thickness_mm)),
                       [(thickness_mm, medium.label)], {medium.label: medium},
                       voxel_resolution=voxel_resolution, wavelength=wavelength,
                       name=f"slab-{medium.label}")


# --- config files --------------------------------------------------------

_BUILDERS = {
    "abdomen": lambda cfg, d: build_abdomen_scene(cfg, d),
    "phantom": lambda cfg, d: build_phantom_scene(
        cfg.get("volume_ml", 300.0), cfg.get("wavelength_nm", 970.0), d,
        container_height_mm=cfg.get("container_height_mm", 80.0),
        voxel_resolution=cfg.get("voxel_resolution_mm", 1.0),
        mus_scale=cfg.get("mus_scale"), media=cfg.get("media")),
    "porcine": lambda cfg, d: build_porcine_scene(
        cfg.get("volume_ml", 200.0), cfg.get("wavelength_nm", 970.0), d,
        voxel_resolution=cfg.get("voxel_resolution_mm", 1.0),
        mus_scale=cfg.get("mus_scale"), media=cfg.get("media")),
    "black": lambda cfg, d: build_black_scene(
        cfg.get("wavelength_nm", 970.0), d, air_gap_mm=cfg.get("air_gap_mm", 0.0),
        voxel_resolution=cfg.get("voxel_resolution_mm", 1.0),
        mus_scale=cfg.get("mus_scale"), media=cfg.get("media")),
}


def scene_from_config(cfg, defaults=None):
    """Build a scene from a parsed config mapping.

    Either ``builder: abdomen|phantom|porcine|black`` with that builder's
    options, or an explicit ``bounds_mm`` / ``layers`` / ``media`` /
    ``inclusion`` description.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("scene config must be a mapping")
    defaults = defaults or Defaults.load()
    builder = cfg.get("builder")
    if builder is not None:
        if builder not in _BUILDERS:
            raise ConfigError(f"unknown scene builder {builder!r}; choose from {sorted(_BUILDERS)}")
        return _BUILDERS[builder](cfg, defaults)
    try:
        bounds = cfg["bounds_mm"]
        layers = [(float(t), str(m)) for t, m in cfg["layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"scene config needs bounds_mm and layers: {exc}") from None
    wl = float(cfg.get("wavelength_nm", 970.0))
    scale = cfg.get("mus_scale", defaults.mus_scale)
    media_cfg = cfg.get("media") or {}
    labels = [m for _, m in layers]
    inclusion = None
    inc = cfg.get("inclusion")
    if inc:
        shape = inc.get("shape", "ellipsoid")
        medium = inc.get("medium", "water")
        vol = float(inc.get("volume_ml", 0.0))
        if shape == "ellipsoid" and "semi_axes_mm" not in inc:
            c = inc.get("center_mm", (0.0, 0.0, 0.0))
            region = _ellipsoid_for_volume(vol, c[:2], float(inc.get("top_mm", 30.0)))
            region = Region("ellipsoid", medium, center=region.center,
                            semi_axes=region.semi_axes)
        elif shape == "ellipsoid":
            region = Region("ellipsoid", medium, center=tuple(inc["center_mm"]),
                            semi_axes=tuple(inc["semi_axes_mm"]))
            vol = vol or region.volume_mm3() / 1000.0
        elif shape == "box":
            region = Region("box", medium, lo=tuple(inc["lo_mm"]), hi=tuple(inc["hi_mm"]))
            vol = vol or region.volume_mm3() / 1000.0
        else:
            raise ConfigError(f"unknown inclusion shape {shape!r}")
        inclusion = Inclusion(region, vol)
        labels.append(medium)
    media = {}
    for label in dict.fromkeys(labels + list(media_cfg)):
        ov = media_cfg.get(label)
        if ov is not None and {"mu_a", "mu_s", "g", "n"} <= set(ov):
            media[label] = OpticalMedium(float(ov["mu_a"]), float(ov["mu_s"]) * float(scale),
                                         float(ov["g"]), float(ov["n"]), label)
        else:
            media[label] = defaults.medium(label, wl, mus_scale=scale, overrides=ov)
    return TissueScene(bounds, layers, media, inclusion=inclusion,
                       voxel_resolution=cfg.get("voxel_resolution_mm", 1.0), wavelength=wl,
                       name=cfg.get("name", "custom"), mus_scale=scale)


def load_scene(path, defaults=None):
    with open(path) as fh:
        try:
            cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return scene_from_config(cfg, defaults)
