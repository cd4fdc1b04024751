"""Optical media and the chromophore absorption table."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .errors import ConfigError, RangeError

DEFAULTS_ENV = "NIRSBLADDER_DEFAULTS"


@dataclass(frozen=True)
class OpticalMedium:
    """Bulk optical properties of one tissue type at one wavelength.

    Coefficients are in cm^-1; the transport kernel converts to mm^-1.
    """

    mu_a: float
    mu_s: float
    g: float
    n: float
    label: str

    def __post_init__(self):
        for name in ("mu_a", "mu_s", "g", "n"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{self.label}: {name} must be finite")
        if not self.mu_a >= 0:
            raise ConfigError(f"{self.label}: mu_a must be >= 0, got {self.mu_a}")
        if not self.mu_s >= 0:
            raise ConfigError(f"{self.label}: mu_s must be >= 0, got {self.mu_s}")
        if not -1.0 <= self.g <= 1.0:
            raise ConfigError(f"{self.label}: g must lie in [-1, 1], got {self.g}")
        if not self.n >= 1.0:
            raise ConfigError(f"{self.label}: n must be >= 1, got {self.n}")
        if self.label != "air" and self.mu_a + self.mu_s <= 0:
            raise ConfigError(f"{self.label}: mu_a + mu_s must be > 0")

    def as_dict(self):
        return {"label": self.label, "mu_a": self.mu_a, "mu_s": self.mu_s,
                "g": self.g, "n": self.n}


class ChromophoreTable:
    """Piecewise-linear absorption spectra, one per chromophore."""

    def __init__(self, entries):
        if "water" not in entries:
            raise ConfigError("chromophore table must contain 'water'")
        self._wl = {}
        self._mu = {}
        for name, rows in entries.items():
            rows = np.asarray(rows, dtype=float)
            if rows.ndim != 2 or rows.shape[1] != 2 or len(rows) < 1:
                raise ConfigError(f"chromophore {name!r}: expected (wavelength, mu_a) rows")
            wl, mu = rows[:, 0], rows[:, 1]
            if np.any(np.diff(wl) <= 0):
                raise ConfigError(f"chromophore {name!r}: wavelengths must strictly increase")
            if np.any(mu < 0):
                raise ConfigError(f"chromophore {name!r}: mu_a must be >= 0")
            self._wl[name] = wl
            self._mu[name] = mu

    @property
    def names(self):
        return list(self._wl)

    def wavelength_range(self, name="water"):
        wl = self._wl[name]
        return float(wl[0]), float(wl[-1])

    def mu_a(self, name, wavelength):
        """Absorption coefficient (cm^-1), exact at anchors, linear between."""
        wl, mu = self._wl[name], self._mu[name]
        lo, hi = wl[0], wl[-1]
        if not lo <= wavelength <= hi:
            raise RangeError(f"{name} absorption is tabulated on [{lo:g}, {hi:g}] nm; "
                             f"got {wavelength:g} nm")
        return float(np.interp(wavelength, wl, mu))


def _read_defaults(path=None):
    path = path or os.environ.get(DEFAULTS_ENV)
    if path:
        with open(path) as fh:
            text = fh.read()
        source = str(path)
    else:
        text = resources.files("nirsbladder").joinpath("data/defaults.yaml").read_text()
        source = "builtin"
    data = yaml.safe_load(text)
    if not isinstance(data, dict) or "media" not in data or "water_mu_a_per_cm" not in data:
        raise ConfigError(f"defaults file {source} lacks 'media' or 'water_mu_a_per_cm'")
    data["_source"] = source
    return data


class Defaults:
    """Parsed defaults file: media recipes, water table, calibration."""

    def __init__(self, data):
        self.data = data
        self.version = str(data.get("version", "unversioned"))
        self.table = ChromophoreTable({"water": data["water_mu_a_per_cm"]})
        self.baseline_mu_a = float(data.get("baseline_mu_a_per_cm", 0.05))
        self.recipes = data["media"]
        cal = data.get("calibration") or {}
        self.mus_scale = float(cal.get("mus_scale", 1.0))
        self.target_fraction = float(cal.get("target_fraction", 5.4e-6))

    @classmethod
    def load(cls, path=None):
        return cls(_read_defaults(path))

    def provenance(self):
        """The defaults as echoed into result files, with a content hash."""
        body = {k: v for k, v in self.data.items() if not k.startswith("_")}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return {"version": self.version, "source": self.data.get("_source", "builtin"),
                "sha256": hashlib.sha256(blob.encode()).hexdigest(), "content": body}

    def medium(self, label, wavelength, mus_scale=None, overrides=None):
        """Resolve a named medium at ``wavelength`` nm.

        ``mus_scale`` multiplies mu_s (the scattering calibration factor);
        ``overrides`` replaces individual fields of the recipe.
        """
        recipe = dict(self.recipes.get(label, {}))
        if overrides:
            recipe.update(overrides)
        if not recipe:
            raise ConfigError(f"unknown medium {label!r}; known: {sorted(self.recipes)}")
        if "mu_a" in recipe:
            mu_a = float(recipe["mu_a"])
        elif "water_fraction" in recipe:
            mu_a = (float(recipe["water_fraction"]) * self.table.mu_a("water", wavelength)
                    + float(recipe.get("baseline_mu_a", self.baseline_mu_a)))
        else:
            raise ConfigError(f"medium {label!r} needs mu_a or water_fraction")
        scale = self.mus_scale if mus_scale is None else float(mus_scale)
        return OpticalMedium(mu_a=mu_a, mu_s=float(recipe.get("mu_s", 0.0)) * scale,
                             g=float(recipe.get("g", 0.0)), n=float(recipe.get("n", 1.0)),
                             label=label)

    def copy(self):
        return Defaults(copy.deepcopy(self.data))


_DEFAULT_TABLE = None


def water_mu_a(wavelength):
    """Water absorption coefficient (cm^-1) at ``wavelength`` nm.

    Linear interpolation between the 890, 970 and 1450 nm anchors; outside
    that interval a :class:`RangeError` names the valid range.
    """
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = Defaults.load().table
    return _DEFAULT_TABLE.mu_a("water", wavelength)
