"""Core domain types and the on-disk formats shared by every pipeline stage.

Fingerprint records travel as JSON lines, one object per line::

    {"id": 3, "x": 1.5, "y": 0.25, "features": {"9c:50:ee:09:5f:30": -61.0}}

``x`` and ``y`` are null for records without a ground-truth location. An
extended reference map is a single JSON document holding the builder
configuration snapshot and one entry list per reference point; see
:meth:`ExtendedRfm.to_json`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from rfmloc.builder import BuilderConfig

FeatureId = str


class DataError(ValueError):
    """Malformed input data. Carries the offending source path and line."""

    def __init__(self, message: str, *, source=None, line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(prefix + message)


class Termination(IntEnum):
    """Why the iterative positioner stopped."""

    CONVERGING = 0
    LOOPING = 1
    MAX = 2


@dataclass(frozen=True, slots=True)
class Location:
    """Planar metric coordinates, meters, shared frame with the reference map."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("location coordinates must be finite")

    def distance_to(self, other: "Location") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class Rect:
    """Axis-aligned region of interest."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.xmin, self.ymin, self.xmax, self.ymax))):
            raise ValueError("rect bounds must be finite")
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise ValueError("rect must have non-negative extent")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, loc: Location, eps: float = 0.0) -> bool:
        return (self.xmin - eps <= loc.x <= self.xmax + eps
                and self.ymin - eps <= loc.y <= self.ymax + eps)

    def to_dict(self) -> dict:
        return {"xmin": self.xmin, "ymin": self.ymin, "xmax": self.xmax, "ymax": self.ymax}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Rect":
        return cls(float(obj["xmin"]), float(obj["ymin"]), float(obj["xmax"]), float(obj["ymax"]))


@dataclass(frozen=True)
class Fingerprint:
    """One observation vector: measured feature values in dBm, keyed by the
    feature's opaque identifier (typically a MAC address).

    ``location`` is the ground-truth position where the record was taken,
    or None for queries. Instances are treated as immutable; the features
    mapping must not be mutated after construction.
    """

    id: int
    location: Location | None
    features: Mapping[FeatureId, float]

    def __post_init__(self):
        for key, value in self.features.items():
            if not isinstance(key, str) or not key:
                raise ValueError("feature ids must be non-empty strings")
            if not math.isfinite(value):
                raise ValueError(f"feature {key!r} has a non-finite value")


def attributes(fp: Fingerprint) -> frozenset[FeatureId]:
    """The set of features the fingerprint actually measured."""
    return frozenset(fp.features)


@dataclass(frozen=True)
class RawRfm:
    """Georeferenced survey records prior to any filtering or smoothing."""

    records: tuple[Fingerprint, ...]
    roi: Rect

    def __post_init__(self):
        if not self.records:
            raise ValueError("a raw reference map needs at least one record")
        for rec in self.records:
            if rec.location is None:
                raise ValueError(f"record {rec.id} has no location")
            if not self.roi.contains(rec.location, eps=1e-9):
                raise ValueError(f"record {rec.id} lies outside the region of interest")

    @classmethod
    def from_records(cls, records: Sequence[Fingerprint], roi: Rect | None = None) -> "RawRfm":
        records = tuple(records)
        if roi is None:
            located = [r.location for r in records if r.location is not None]
            if not located:
                raise ValueError("cannot infer a region of interest without located records")
            roi = Rect(min(p.x for p in located), min(p.y for p in located),
                       max(p.x for p in located), max(p.y for p in located))
        return cls(records, roi)


@dataclass(frozen=True, slots=True)
class RfmEntry:
    """Per-feature layer sample at one map position: expected value and spread."""

    feature: FeatureId
    value: float
    sigma: float


@dataclass(frozen=True)
class PositioningConfig:
    """Hyperparameters of the dissimilarity and iterative positioning scheme.

    ``alpha1`` and ``alpha2`` scale the contribution of features only one
    side measured (observation-only and reference-only respectively);
    ``missing_value`` is the stand-in value those features are compared
    against. ``weight_form`` picks how the spread layer maps to softmax
    weights: ``precision_softmax`` (default) concentrates weight on the
    most stable features, ``paper_verbatim`` applies the opposite sign as
    published. Random initialization derives a per-query stream from
    ``init_seed`` and the query id, so batch order and threading never
    change results.
    """

    alpha1: float = 3.0
    alpha2: float = 3.0
    missing_value: float = -110.0
    beta: float = 2.0
    k: int = 1
    converge_tol: float = 1e-3
    max_iterations: int = 100
    loop_min_points: int = 4
    loop_max_diameter: float = 0.01
    minkowski_p: float = 2.0
    weight_form: str = "precision_softmax"
    init_mode: str = "knn"
    init_seed: int = 0

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.converge_tol <= 0:
            raise ValueError("converge_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.loop_min_points < 2:
            raise ValueError("loop_min_points must be at least 2")
        if self.loop_max_diameter < 0:
            raise ValueError("loop_max_diameter must be non-negative")
        if self.minkowski_p < 1:
            raise ValueError("minkowski_p must be at least 1")
        if self.weight_form not in ("precision_softmax", "paper_verbatim"):
            raise ValueError(f"unknown weight_form {self.weight_form!r}")
        if self.init_mode not in ("knn", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")


@dataclass(frozen=True)
class PositionEstimate:
    """Outcome of positioning one observation.

    ``path`` lists every searched location in order, starting with the
    initialization. ``loop_points`` holds the detected cycle when the
    iteration terminated by revisiting an earlier estimate, whichever way
    the cycle was then resolved.
    """

    location: Location
    tf: Termination
    iterations: int
    path: tuple[Location, ...]
    loop_points: tuple[Location, ...] | None = None
    query_id: int | None = None


def gaussian_nw(values, distances, bandwidth: float) -> float:
    """Nadaraya-Watson estimate with a Gaussian kernel K(u) = exp(-u^2 / 2).

    Kernel weights are computed relative to the largest one, which leaves
    the estimate unchanged and avoids underflow for distant supports.
    """
    v = np.asarray(values, dtype=float)
    u = np.asarray(distances, dtype=float) / bandwidth
    logw = -0.5 * u * u
    w = np.exp(logw - logw.max())
    return float((w * v).sum() / w.sum())


class ExtendedRfm:
    """Reference map extended with a per-feature spread layer.

    Each reference point stores, per feature, the smoothed expected value
    and a robust spread estimate. Between reference points the layers are
    represented continuously by Gaussian kernel smoothing, so any location
    in the region can be queried. Instances are immutable; the backing
    arrays are marked read-only so they can be shared across threads.
    """

    def __init__(self, locations, feature_ids: Sequence[FeatureId], values, sigmas,
                 builder_config: "BuilderConfig"):
        locations = np.ascontiguousarray(locations, dtype=float)
        values = np.ascontiguousarray(values, dtype=float)
        sigmas = np.ascontiguousarray(sigmas, dtype=float)
        if locations.ndim != 2 or locations.shape[1] != 2:
            raise ValueError("locations must be an (n, 2) array")
        n = locations.shape[0]
        f = len(feature_ids)
        if values.shape != (n, f) or sigmas.shape != (n, f):
            raise ValueError("layer shapes must match (n_points, n_features)")
        if not np.isfinite(locations).all():
            raise ValueError("reference locations must be finite")
        if np.isfinite(values).sum() != np.isfinite(sigmas).sum() or (
                (np.isfinite(values) != np.isfinite(sigmas)).any()):
            raise ValueError("value and sigma layers must cover the same entries")
        for arr in (locations, values, sigmas):
            arr.setflags(write=False)
        self._locations = locations
        self._feature_ids = tuple(feature_ids)
        self._index = {fid: i for i, fid in enumerate(self._feature_ids)}
        if len(self._index) != f:
            raise ValueError("duplicate feature ids")
        self._values = values
        self._sigmas = sigmas
        self._present = np.isfinite(values)
        self._present.setflags(write=False)
        self._entry_counts = self._present.sum(axis=1)
        self._entry_counts.setflags(write=False)
        self._config = builder_config

    @property
    def n_points(self) -> int:
        return self._locations.shape[0]

    @property
    def feature_ids(self) -> tuple[FeatureId, ...]:
        return self._feature_ids

    @property
    def feature_index(self) -> Mapping[FeatureId, int]:
        return self._index

    @property
    def locations(self) -> np.ndarray:
        """Reference point coordinates, shape (n, 2), read-only."""
        return self._locations

    @property
    def values(self) -> np.ndarray:
        """Expected value layer, shape (n, features), NaN where absent."""
        return self._values

    @property
    def sigmas(self) -> np.ndarray:
        """Spread layer, same shape and presence pattern as ``values``."""
        return self._sigmas

    @property
    def entry_counts(self) -> np.ndarray:
        return self._entry_counts

    @property
    def builder_config(self) -> "BuilderConfig":
        return self._config

    @property
    def bbox(self) -> Rect:
        if self.n_points == 0:
            raise ValueError("empty map has no bounding box")
        xs = self._locations[:, 0]
        ys = self._locations[:, 1]
        return Rect(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))

    def location_at(self, index: int) -> Location:
        x, y = self._locations[index]
        return Location(float(x), float(y))

    def entries_at(self, index: int) -> list[RfmEntry]:
        """The stored entry list of one reference point, ordered by feature id."""
        out = []
        for f, fid in enumerate(self._feature_ids):
            if self._present[index, f]:
                out.append(RfmEntry(fid, float(self._values[index, f]),
                                    float(self._sigmas[index, f])))
        return out

    @property
    def reference_points(self) -> list[tuple[Location, list[RfmEntry]]]:
        return [(self.location_at(j), self.entries_at(j)) for j in range(self.n_points)]

    def query(self, loc: Location) -> list[RfmEntry]:
        """Continuous lookup of both layers at an arbitrary location.

        Per feature, the estimate is a Gaussian kernel average over the
        nearest reference points carrying that feature, capped at
        ``ks_neighbors`` and restricted to three bandwidths; features with
        no carrier in range are omitted. If the restriction would leave no
        entries at all, it is dropped so the query stays answerable
        anywhere in the region.
        """
        if self.n_points == 0:
            return []
        d = np.hypot(self._locations[:, 0] - loc.x, self._locations[:, 1] - loc.y)
        order = np.argsort(d, kind="stable")
        entries = self._query_along(d, order, 3.0 * self._config.bandwidth)
        if not entries:
            entries = self._query_along(d, order, None)
        return entries

    def _query_along(self, d, order, cutoff: float | None) -> list[RfmEntry]:
        ks = self._config.ks_neighbors
        h = self._config.bandwidth
        out = []
        for f, fid in enumerate(self._feature_ids):
            carriers = order[self._present[order, f]]
            if cutoff is not None:
                carriers = carriers[d[carriers] <= cutoff]
            sel = carriers[:ks]
            if sel.size == 0:
                continue
            value = gaussian_nw(self._values[sel, f], d[sel], h)
            sigma = gaussian_nw(self._sigmas[sel, f], d[sel], h)
            out.append(RfmEntry(fid, value, sigma))
        return out

    def to_json(self) -> str:
        points = []
        for j in range(self.n_points):
            x, y = self._locations[j]
            entries = [{"id": e.feature, "v": e.value, "sigma": e.sigma}
                       for e in self.entries_at(j)]
            points.append({"x": float(x), "y": float(y), "entries": entries})
        return json.dumps({"config": self._config.to_dict(), "points": points})

    @classmethod
    def from_json(cls, text: str) -> "ExtendedRfm":
        from rfmloc.builder import BuilderConfig  # deferred, the config lives with the builder

        obj = json.loads(text)
        config = BuilderConfig.from_dict(obj["config"])
        points = obj["points"]
        universe = sorted({e["id"] for pt in points for e in pt["entries"]})
        index = {fid: i for i, fid in enumerate(universe)}
        n = len(points)
        locations = np.empty((n, 2))
        values = np.full((n, len(universe)), np.nan)
        sigmas = np.full((n, len(universe)), np.nan)
        for j, pt in enumerate(points):
            locations[j] = (float(pt["x"]), float(pt["y"]))
            for e in pt["entries"]:
                f = index[e["id"]]
                values[j, f] = float(e["v"])
                sigmas[j, f] = float(e["sigma"])
        return cls(locations, universe, values, sigmas, config)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ExtendedRfm":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid reference map: {exc}", source=path) from exc


def fingerprint_to_obj(fp: Fingerprint) -> dict:
    x = fp.location.x if fp.location is not None else None
    y = fp.location.y if fp.location is not None else None
    return {"id": fp.id, "x": x, "y": y,
            "features": {k: fp.features[k] for k in sorted(fp.features)}}


def fingerprint_from_obj(obj: Mapping, *, missing_value: float | None = -110.0) -> Fingerprint:
    if not isinstance(obj, Mapping):
        raise ValueError("each record must be a JSON object")
    try:
        rec_id = obj["id"]
        features = obj["features"]
    except KeyError as exc:
        raise ValueError(f"record is missing the {exc.args[0]!r} field") from None
    if isinstance(rec_id, bool) or not isinstance(rec_id, int):
        raise ValueError("record id must be an integer")
    x, y = obj.get("x"), obj.get("y")
    if (x is None) != (y is None):
        raise ValueError("x and y must be both present or both null")
    location = None
    if x is not None:
        if not isinstance(x, (int, float)) or not isinstance(y, (int, float)):
            raise ValueError("x and y must be numbers")
        location = Location(float(x), float(y))
    if not isinstance(features, Mapping):
        raise ValueError("features must be an object of feature id to value")
    parsed: dict[FeatureId, float] = {}
    for key, value in features.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"feature {key!r} must map to a number")
        value = float(value)
        if missing_value is not None and value < missing_value:
            raise ValueError(
                f"feature {key!r} is below the missing-value indicator ({missing_value})")
        parsed[key] = value
    return Fingerprint(rec_id, location, parsed)


def read_fingerprints(path, *, require_location: bool = False,
                      missing_value: float | None = -110.0) -> list[Fingerprint]:
    """Load fingerprint records from a JSON-lines file.

    Raises :class:`DataError` naming the file and line on any malformed
    record, including feature values below the missing-value indicator.
    """
    records: list[Fingerprint] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", source=path, line=lineno) from None
            try:
                fp = fingerprint_from_obj(obj, missing_value=missing_value)
            except ValueError as exc:
                raise DataError(str(exc), source=path, line=lineno) from None
            if require_location and fp.location is None:
                raise DataError("record has no ground-truth location", source=path, line=lineno)
            records.append(fp)
    if not records:
        raise DataError("no records found", source=path)
    return records


def write_fingerprints(path, fingerprints: Iterable[Fingerprint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fp in fingerprints:
            fh.write(json.dumps(fingerprint_to_obj(fp)))
            fh.write("\n")


def estimate_to_obj(est: PositionEstimate) -> dict:
    return {
        "id": est.query_id,
        "x": est.location.x,
        "y": est.location.y,
        "tf": int(est.tf),
        "iterations": est.iterations,
        "path": [[p.x, p.y] for p in est.path],
        "loop_points": None if est.loop_points is None
        else [[p.x, p.y] for p in est.loop_points],
    }


def estimate_from_obj(obj: Mapping) -> PositionEstimate:
    try:
        location = Location(float(obj["x"]), float(obj["y"]))
        tf = Termination(int(obj["tf"]))
        iterations = int(obj["iterations"])
        path = tuple(Location(float(x), float(y)) for x, y in obj["path"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed estimate: {exc}") from None
    loops = obj.get("loop_points")
    loop_points = None if loops is None else tuple(
        Location(float(x), float(y)) for x, y in loops)
    query_id = obj.get("id")
    return PositionEstimate(location, tf, iterations, path, loop_points, query_id)


def read_estimates(path) -> list[PositionEstimate]:
    out: list[PositionEstimate] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(estimate_from_obj(obj))
            except (json.JSONDecodeError, ValueError) as exc:
                raise DataError(str(exc), source=path, line=lineno) from None
    if not out:
        raise DataError("no estimates found", source=path)
    return out


def write_estimates(path, estimates: Iterable[PositionEstimate]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for est in estimates:
            fh.write(json.dumps(estimate_to_obj(est)))
            fh.write("\n")
