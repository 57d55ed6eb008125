"""Shared helpers: direct construction of small extended maps and raw
surveys without running the builder pipeline."""

from __future__ import annotations

import numpy as np
import pytest

from rfmloc.builder import BuilderConfig
from rfmloc.model import ExtendedRfm, Fingerprint, Location, RawRfm, Rect


def make_rfm(locations, features, values, sigmas=None,
             config: BuilderConfig | None = None) -> ExtendedRfm:
    """Assemble an extended map directly from dense per-point layers.

    ``values`` is (n_points, n_features) with NaN for absent entries;
    ``sigmas`` defaults to a constant 0.5 wherever a value is present.
    """
    values = np.asarray(values, dtype=float)
    if sigmas is None:
        sigmas = np.where(np.isfinite(values), 0.5, np.nan)
    else:
        sigmas = np.asarray(sigmas, dtype=float)
    return ExtendedRfm(np.asarray(locations, dtype=float), list(features),
                       values, sigmas, config or BuilderConfig())


def random_rfm(rng: np.random.Generator, n_points: int, n_features: int,
               extent: float = 30.0, density: float = 1.0,
               sigma_range: tuple[float, float] = (0.5, 0.5),
               config: BuilderConfig | None = None) -> ExtendedRfm:
    """A random map: uniform locations, random presence mask (every point
    keeps at least one feature), values in a plausible dBm range."""
    locations = rng.uniform(0.0, extent, size=(n_points, 2))
    values = rng.uniform(-100.0, -40.0, size=(n_points, n_features))
    if density < 1.0:
        absent = rng.random((n_points, n_features)) >= density
        for j in range(n_points):  # keep every point observable
            if absent[j].all():
                absent[j, rng.integers(n_features)] = False
        values[absent] = np.nan
    lo, hi = sigma_range
    sigmas = np.where(np.isfinite(values), rng.uniform(lo, hi, values.shape), np.nan)
    features = [f"02:00:00:00:00:{i:02x}" for i in range(n_features)]
    return make_rfm(locations, features, values, sigmas, config)


def make_fp(features: dict, fp_id: int = 0, location: Location | None = None) -> Fingerprint:
    return Fingerprint(fp_id, location, features)


def grid_raw(values_by_location: dict[tuple[float, float], dict[str, float]],
             start_id: int = 0) -> RawRfm:
    """Raw survey from an explicit {(x, y): {feature: value}} mapping."""
    records = []
    for i, ((x, y), feats) in enumerate(values_by_location.items()):
        records.append(Fingerprint(start_id + i, Location(x, y), dict(feats)))
    return RawRfm.from_records(records)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260819)
