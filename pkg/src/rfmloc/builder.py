"""Construction of the extended reference map from survey records.

The pipeline has three stages. A spatial median filter replaces each
record's features with the per-feature median over its neighborhood (the
nearest records within a radius, capped in number), knocking out isolated
outliers. Gaussian kernel smoothing of the filtered layer then yields the
expected value at every record location. Finally the spread layer is
estimated robustly per location: the median of absolute residuals between
the raw values in the neighborhood and the smoothed layer at each
record's own position, scaled to be consistent with a normal standard
deviation and clamped below.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from rfmloc.model import (ExtendedRfm, FeatureId, Fingerprint, Location, RawRfm,
                          gaussian_nw)


class EmptyNeighborhood(ValueError):
    """No record lies within the filter radius of the requested center."""


@dataclass(frozen=True)
class BuilderConfig:
    """Parameters of the map construction pipeline.

    ``max_neighbors`` and ``radius`` bound the spatial filter support;
    ``ks_neighbors`` and ``bandwidth`` control the kernel smoothing, whose
    support is additionally restricted to three bandwidths. ``mad_scale``
    converts a median absolute residual into a normal-consistent standard
    deviation and ``sigma_floor`` is the smallest spread the map will
    report. ``grid_resolution`` is the cell size used when exporting the
    continuous layers onto a grid.
    """

    max_neighbors: int = 20
    radius: float = 2.0
    ks_neighbors: int = 20
    bandwidth: float = 1.0
    mad_scale: float = 1.4826
    sigma_floor: float = 0.5
    grid_resolution: float = 0.5

    def __post_init__(self):
        if self.max_neighbors < 1:
            raise ValueError("max_neighbors must be at least 1")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.ks_neighbors < 1:
            raise ValueError("ks_neighbors must be at least 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.mad_scale <= 0:
            raise ValueError("mad_scale must be positive")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        if self.grid_resolution <= 0:
            raise ValueError("grid_resolution must be positive")

    def to_dict(self) -> dict:
        return {
            "max_neighbors": self.max_neighbors,
            "radius": self.radius,
            "ks_neighbors": self.ks_neighbors,
            "bandwidth": self.bandwidth,
            "mad_scale": self.mad_scale,
            "sigma_floor": self.sigma_floor,
            "grid_resolution": self.grid_resolution,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "BuilderConfig":
        return cls(
            max_neighbors=int(obj["max_neighbors"]),
            radius=float(obj["radius"]),
            ks_neighbors=int(obj["ks_neighbors"]),
            bandwidth=float(obj["bandwidth"]),
            mad_scale=float(obj["mad_scale"]),
            sigma_floor=float(obj["sigma_floor"]),
            grid_resolution=float(obj["grid_resolution"]),
        )


@dataclass(frozen=True)
class Neighborhood:
    """The spatial filter support set around a center location."""

    center: Location
    members: tuple[tuple[Location, Fingerprint], ...]


def _record_layers(raw: RawRfm):
    """Dense views over the records: ids, coordinates, sorted feature
    universe, and the (n, features) raw value matrix with NaN for absent."""
    ids = np.array([rec.id for rec in raw.records], dtype=np.int64)
    locs = np.array([[rec.location.x, rec.location.y] for rec in raw.records], dtype=float)
    feature_ids = sorted({a for rec in raw.records for a in rec.features})
    index = {fid: f for f, fid in enumerate(feature_ids)}
    matrix = np.full((len(raw.records), len(feature_ids)), np.nan)
    for j, rec in enumerate(raw.records):
        for a, v in rec.features.items():
            matrix[j, index[a]] = v
    return ids, locs, feature_ids, matrix


def _neighbor_indices(ids: np.ndarray, locs: np.ndarray, cx: float, cy: float,
                      radius: float, cap: int) -> np.ndarray:
    """Indices of the up-to-``cap`` nearest records within ``radius``,
    ordered by distance with ties broken by ascending record id."""
    d = np.hypot(locs[:, 0] - cx, locs[:, 1] - cy)
    within = np.nonzero(d <= radius)[0]
    order = np.lexsort((ids[within], d[within]))
    return within[order][:cap]


def neighborhood(raw: RawRfm, center: Location, cfg: BuilderConfig) -> Neighborhood:
    """The filter support set at ``center``: nearest records within the
    radius, at most ``max_neighbors`` of them, deterministic under ties."""
    ids, locs, _, _ = _record_layers(raw)
    sel = _neighbor_indices(ids, locs, center.x, center.y, cfg.radius, cfg.max_neighbors)
    if sel.size == 0:
        raise EmptyNeighborhood(f"no record within {cfg.radius} m of ({center.x}, {center.y})")
    members = tuple((raw.records[i].location, raw.records[i]) for i in sel)
    return Neighborhood(center, members)


def _median_filter_matrix(ids, locs, matrix, cfg) -> tuple[np.ndarray, list[np.ndarray]]:
    n = matrix.shape[0]
    filtered = np.full_like(matrix, np.nan)
    supports: list[np.ndarray] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN feature columns
        for j in range(n):
            sel = _neighbor_indices(ids, locs, locs[j, 0], locs[j, 1],
                                    cfg.radius, cfg.max_neighbors)
            supports.append(sel)
            block = matrix[sel]
            observed = np.isfinite(block).any(axis=0)
            med = np.nanmedian(block, axis=0)
            filtered[j, observed] = med[observed]
    return filtered, supports


def spatial_median_filter(raw: RawRfm, cfg: BuilderConfig) -> RawRfm:
    """Replace every record's features by neighborhood medians.

    A feature appears in the output at a location iff at least one
    neighborhood member observed it, so coverage can only grow.
    """
    ids, locs, feature_ids, matrix = _record_layers(raw)
    filtered, _ = _median_filter_matrix(ids, locs, matrix, cfg)
    records = []
    for j, rec in enumerate(raw.records):
        present = np.nonzero(np.isfinite(filtered[j]))[0]
        feats = {feature_ids[f]: float(filtered[j, f]) for f in present}
        records.append(Fingerprint(rec.id, rec.location, feats))
    return RawRfm(tuple(records), raw.roi)


def kernel_smooth(filtered: RawRfm, loc: Location,
                  cfg: BuilderConfig) -> list[tuple[FeatureId, float]]:
    """Gaussian kernel estimate of every feature at one location.

    Support per feature: the nearest carriers within three bandwidths,
    capped at ``ks_neighbors``. Features without any carrier in range are
    omitted from the result.
    """
    _, locs, feature_ids, matrix = _record_layers(filtered)
    d = np.hypot(locs[:, 0] - loc.x, locs[:, 1] - loc.y)
    order = np.argsort(d, kind="stable")
    cutoff = 3.0 * cfg.bandwidth
    out: list[tuple[FeatureId, float]] = []
    for f, fid in enumerate(feature_ids):
        carriers = order[np.isfinite(matrix[order, f])]
        carriers = carriers[d[carriers] <= cutoff][: cfg.ks_neighbors]
        if carriers.size == 0:
            continue
        out.append((fid, gaussian_nw(matrix[carriers, f], d[carriers], cfg.bandwidth)))
    return out


def _smooth_matrix(locs, filtered, cfg) -> np.ndarray:
    """Kernel-smoothed value at every record location, per feature, over the
    filtered layer. Only positions where the filtered layer carries the
    feature are filled; those are exactly the positions a map entry needs."""
    n, nf = filtered.shape
    smoothed = np.full_like(filtered, np.nan)
    cutoff = 3.0 * cfg.bandwidth
    for f in range(nf):
        carriers = np.nonzero(np.isfinite(filtered[:, f]))[0]
        if carriers.size == 0:
            continue
        vals = filtered[carriers, f]
        cx = locs[carriers, 0]
        cy = locs[carriers, 1]
        for qi, j in enumerate(carriers):
            drow = np.hypot(cx - locs[j, 0], cy - locs[j, 1])
            order = np.argsort(drow, kind="stable")
            sel = order[drow[order] <= cutoff][: cfg.ks_neighbors]
            smoothed[j, f] = gaussian_nw(vals[sel], drow[sel], cfg.bandwidth)
    return smoothed


def estimate_std(raw: RawRfm, smoothed_at: Callable[[Location], object],
                 center: Location, cfg: BuilderConfig) -> list[tuple[FeatureId, float]]:
    """Robust spread per feature at ``center``.

    Residuals are the raw values observed within the filter support set
    minus the smoothed value at each record's own location (queried
    through ``smoothed_at``, which may return a mapping or a list of
    (feature, value) pairs). The spread is ``mad_scale`` times the median
    absolute residual, clamped at ``sigma_floor``; features with fewer
    than two residuals get the floor.
    """
    nb = neighborhood(raw, center, cfg)
    residuals: dict[FeatureId, list[float]] = {}
    for loc, rec in nb.members:
        smoothed = smoothed_at(loc)
        if not isinstance(smoothed, Mapping):
            smoothed = dict(smoothed)
        for a, v in rec.features.items():
            if a in smoothed:
                residuals.setdefault(a, []).append(v - float(smoothed[a]))
            else:
                residuals.setdefault(a, [])
    out: list[tuple[FeatureId, float]] = []
    for a in sorted(residuals):
        res = residuals[a]
        if len(res) >= 2:
            sigma = max(cfg.mad_scale * float(np.median(np.abs(res))), cfg.sigma_floor)
        else:
            sigma = cfg.sigma_floor
        out.append((a, sigma))
    return out


def build(raw: RawRfm, cfg: BuilderConfig | None = None, *,
          std_estimator: str = "mad") -> ExtendedRfm:
    """Run the full pipeline and assemble the extended map.

    Reference points are the raw record locations. Each carries an entry
    per feature observed anywhere in its filter neighborhood, holding the
    smoothed expected value and the spread estimate. ``std_estimator``
    selects the spread statistic: "mad" (default) or "std", a plain sample
    standard deviation useful for comparing robustness.
    """
    if std_estimator not in ("mad", "std"):
        raise ValueError(f"unknown std_estimator {std_estimator!r}")
    if cfg is None:
        cfg = BuilderConfig()
    ids, locs, feature_ids, matrix = _record_layers(raw)
    filtered, supports = _median_filter_matrix(ids, locs, matrix, cfg)
    smoothed = _smooth_matrix(locs, filtered, cfg)

    # residual of every raw observation against the smoothed layer at its
    # own location; raw presence implies filtered presence there, so the
    # smoothed value always exists
    residual = np.where(np.isfinite(matrix), matrix - smoothed, np.nan)

    n, nf = matrix.shape
    sigmas = np.full_like(matrix, np.nan)
    for j in range(n):
        block = residual[supports[j]]
        present = np.nonzero(np.isfinite(filtered[j]))[0]
        for f in present:
            res = block[:, f]
            res = res[np.isfinite(res)]
            if res.size >= 2:
                if std_estimator == "mad":
                    spread = cfg.mad_scale * float(np.median(np.abs(res)))
                else:
                    spread = float(np.std(res, ddof=1))
                sigmas[j, f] = max(spread, cfg.sigma_floor)
            else:
                sigmas[j, f] = cfg.sigma_floor

    values = np.where(np.isfinite(filtered), smoothed, np.nan)
    return ExtendedRfm(locs, feature_ids, values, sigmas, cfg)


def residual_field(raw: RawRfm, rfm: ExtendedRfm) -> list[tuple[Location, FeatureId, float]]:
    """Raw-minus-map residuals for every (record, feature) pair present in both.

    Record locations matching a reference point exactly use its stored
    entries; anywhere else the continuous query provides the map value.
    """
    by_location = {(float(x), float(y)): j for j, (x, y) in enumerate(rfm.locations)}
    out: list[tuple[Location, FeatureId, float]] = []
    for rec in raw.records:
        loc = rec.location
        j = by_location.get((loc.x, loc.y))
        entries = rfm.entries_at(j) if j is not None else rfm.query(loc)
        values = {e.feature: e.value for e in entries}
        for a, v in rec.features.items():
            if a in values:
                out.append((loc, a, v - values[a]))
    return out
