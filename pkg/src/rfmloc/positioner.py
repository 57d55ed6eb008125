"""Positioning against an extended reference map.

``knn_locate`` ranks every reference point by the weighted compound
dissimilarity and averages the best k locations. ``iterate_locate`` wraps
it in a fixed point search: the spread layer at the previous estimate
yields fresh softmax weights for the next lookup, until the estimate
converges, revisits an earlier one (a loop), or the iteration budget runs
out. Tight loops resolve to a robust center of the cycle; everything else
falls back to the searched location whose expected feature set best
matches the observation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from itertools import combinations
from typing import Sequence

import numpy as np

from rfmloc import _kernels
from rfmloc.dissim import (EmptyComparison, WeightVector, feature_distance, mji,
                           softmax_weights)
from rfmloc.model import (ExtendedRfm, Fingerprint, Location, PositionEstimate,
                          PositioningConfig, Termination, attributes)


class InsufficientPoints(ValueError):
    """Too few points for a covariance-based center estimate."""


def _universe_projection(obs: Fingerprint, rfm: ExtendedRfm,
                         wv: WeightVector | None, cfg: PositioningConfig):
    """Align the observation and weights with the map's feature universe.

    Returns the observation vector (NaN for unmeasured universe features),
    the per-universe weight vector, and the constant contribution of
    observed features the map has never seen (identical for every
    reference point, kept so the batch values match the per-pair
    definition exactly).
    """
    fids = rfm.feature_ids
    if wv is None:
        weights = np.ones(len(fids))
    else:
        weights = np.fromiter((wv.get(f) for f in fids), dtype=float, count=len(fids))
    obs_vec = np.full(len(fids), np.nan)
    base = 0.0
    index = rfm.feature_index
    for a, v in obs.features.items():
        f = index.get(a)
        if f is None:
            w = 1.0 if wv is None else wv.get(a)
            base += cfg.alpha1 * w * feature_distance(v, cfg.missing_value, cfg.minkowski_p)
        else:
            obs_vec[f] = v
    return obs_vec, weights, base


def dissimilarities(obs: Fingerprint, rfm: ExtendedRfm, cfg: PositioningConfig,
                    wv: WeightVector | None = None) -> np.ndarray:
    """Weighted compound dissimilarity of ``obs`` against every reference point."""
    if rfm.n_points == 0:
        raise ValueError("the reference map is empty")
    if not obs.features and (rfm.entry_counts == 0).any():
        raise EmptyComparison("observation and some reference points are featureless")
    obs_vec, weights, base = _universe_projection(obs, rfm, wv, cfg)
    return _kernels.cdm_batch(rfm.values, obs_vec, weights, cfg.alpha1, cfg.alpha2,
                              cfg.missing_value, cfg.minkowski_p, base)


def knn_locate(obs: Fingerprint, rfm: ExtendedRfm, cfg: PositioningConfig,
               wv: WeightVector | None = None, *, average: str = "mean") -> Location:
    """Average of the k reference locations with the smallest dissimilarity.

    Without a weight vector every feature weighs 1. Ties rank by lower
    reference index. ``average="inverse"`` weighs the k candidates by the
    reciprocal of their dissimilarity instead of uniformly; exact matches
    (zero dissimilarity) then split the estimate among themselves.
    """
    if average not in ("mean", "inverse"):
        raise ValueError(f"unknown average {average!r}")
    d = dissimilarities(obs, rfm, cfg, wv)
    k = min(cfg.k, rfm.n_points)
    best = np.argsort(d, kind="stable")[:k]
    points = rfm.locations[best]
    if average == "mean":
        x, y = points.mean(axis=0)
    else:
        dk = d[best]
        exact = dk <= 0.0
        if exact.any():
            x, y = points[exact].mean(axis=0)
        else:
            w = 1.0 / dk
            x, y = (points * w[:, None]).sum(axis=0) / w.sum()
    return Location(float(x), float(y))


def initial_location(obs: Fingerprint, rfm: ExtendedRfm,
                     cfg: PositioningConfig) -> Location:
    """Starting point of the iteration.

    ``knn`` starts from the unweighted lookup. ``random`` draws a
    reference location uniformly from a stream seeded by (init_seed,
    query id), so results do not depend on batch order or thread count.
    """
    if cfg.init_mode == "knn":
        return knn_locate(obs, rfm, cfg, None)
    rng = np.random.default_rng([cfg.init_seed & 0x7FFFFFFF, abs(obs.id)])
    return rfm.location_at(int(rng.integers(rfm.n_points)))


def detect_termination(estimates: Sequence[Location],
                       cfg: PositioningConfig) -> Termination | None:
    """Classify the state after the latest iteration estimate.

    ``estimates`` holds the per-iteration estimates in order, excluding
    the initialization. Converging: the latest pair lies within the
    tolerance. Looping: the latest estimate returns within tolerance of
    any earlier one other than its immediate predecessor. Max: the
    iteration budget is spent. None means continue. Converging is checked
    before looping.
    """
    t = len(estimates)
    current = estimates[-1]
    if t >= 2 and current.distance_to(estimates[-2]) < cfg.converge_tol:
        return Termination.CONVERGING
    if t >= 3 and any(current.distance_to(e) < cfg.converge_tol
                      for e in estimates[:-2]):
        return Termination.LOOPING
    if t >= cfg.max_iterations:
        return Termination.MAX
    return None


def _extract_loop(estimates: Sequence[Location], cfg: PositioningConfig) -> tuple[Location, ...]:
    """The cycle the iteration fell into: from the matched earlier estimate
    up to, and excluding, the revisit that closed it."""
    current = estimates[-1]
    gaps = [current.distance_to(e) for e in estimates[:-2]]
    matched = int(np.argmin(gaps))
    return tuple(estimates[matched:-1])


def _loop_diameter(points: Sequence[Location]) -> float:
    return max((a.distance_to(b) for a, b in combinations(points, 2)), default=0.0)


def mcd_center(points: Sequence[Location], support_fraction: float | None = None,
               seed: int = 0) -> Location:
    """Mean of the minimum covariance determinant subset.

    The subset size defaults to ceil((n + 3) / 2). Up to n = 12 every
    subset is scored; beyond that, concentration steps refine 50 seeded
    random starts, keeping the determinant non-increasing. Degenerate
    inputs (all points collinear or coincident) fall back to the
    coordinate-wise median.
    """
    pts = np.array([[p.x, p.y] for p in points], dtype=float)
    n = len(pts)
    if n < 2:
        raise InsufficientPoints("a covariance-based center needs at least 2 points")
    if support_fraction is None:
        h = (n + 4) // 2  # ceil((n + 3) / 2)
    else:
        if not 0 < support_fraction <= 1:
            raise ValueError("support_fraction must be in (0, 1]")
        h = int(math.ceil(support_fraction * n - 1e-9))
    h = min(max(h, 2), n)

    if _rank_deficient(pts):
        return Location(float(np.median(pts[:, 0])), float(np.median(pts[:, 1])))

    if n <= 12:
        best_det = math.inf
        best_mean = None
        for subset in combinations(range(n), h):
            sub = pts[list(subset)]
            det = _cov_det(sub)
            if det < best_det:
                best_det = det
                best_mean = sub.mean(axis=0)
        return Location(float(best_mean[0]), float(best_mean[1]))

    rng = np.random.default_rng(seed)
    best_det = math.inf
    best_subset = None
    for _ in range(50):
        subset = np.sort(rng.choice(n, size=h, replace=False))
        for _ in range(30):
            refined = _concentration_step(pts, subset, h)
            if np.array_equal(refined, subset):
                break
            subset = refined
        det = _cov_det(pts[subset])
        if det < best_det:
            best_det = det
            best_subset = subset
    center = pts[best_subset].mean(axis=0)
    return Location(float(center[0]), float(center[1]))


def _cov_det(sub: np.ndarray) -> float:
    centered = sub - sub.mean(axis=0)
    cov = centered.T @ centered / (len(sub) - 1)
    return float(cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0])


def _rank_deficient(pts: np.ndarray) -> bool:
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / max(len(pts) - 1, 1)
    eigvals = np.linalg.eigvalsh(cov)
    return bool(eigvals[0] <= 1e-12 * max(eigvals[1], 1e-300))

def _concentration_step(pts: np.ndarray, subset: np.ndarray, h: int) -> np.ndarray:
    sub = pts[subset]
    mean = sub.mean(axis=0)
    centered = sub - mean
    cov = centered.T @ centered / (len(sub) - 1)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    diff = pts - mean
    if det <= 1e-300:
        dist = (diff * diff).sum(axis=1)  # singular scatter, rank by plain distance
    else:
        inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
        dist = ((diff @ inv) * diff).sum(axis=1)
    return np.sort(np.argsort(dist, kind="stable")[:h])


def resolve_state(state: Termination, path: Sequence[Location],
                  loop_points: Sequence[Location] | None, obs: Fingerprint,
                  rfm: ExtendedRfm, cfg: PositioningConfig) -> PositionEstimate:
    """Turn a terminated search into the final estimate.

    Converging keeps the last estimate. A loop that is both long enough
    and tight enough resolves to the robust center of its points; any
    other loop, and the exhausted-budget state, fall back to the searched
    location whose map feature set best matches the observation (ties go
    to the earliest), reported with the max-budget flag.
    """
    path = tuple(path)
    iterations = len(path) - 1
    if state is Termination.CONVERGING:
        return PositionEstimate(path[-1], Termination.CONVERGING, iterations, path,
                                None, obs.id)
    kept_loop = tuple(loop_points) if loop_points else None
    if (state is Termination.LOOPING and kept_loop is not None
            and len(kept_loop) >= cfg.loop_min_points
            and _loop_diameter(kept_loop) <= cfg.loop_max_diameter):
        center = mcd_center(kept_loop)
        return PositionEstimate(center, Termination.LOOPING, iterations, path,
                                kept_loop, obs.id)
    obs_attrs = attributes(obs)
    best_score = -1.0
    best_index = 0
    for i, p in enumerate(path):
        # a featureless observation gives every point the same (undefined)
        # overlap; keep the earliest rather than raising
        if obs_attrs:
            score = mji(obs_attrs, frozenset(e.feature for e in rfm.query(p)))
        else:
            score = 0.0
        if score > best_score:
            best_score = score
            best_index = i
    return PositionEstimate(path[best_index], Termination.MAX, iterations, path,
                            kept_loop, obs.id)


def iterate_locate(obs: Fingerprint, rfm: ExtendedRfm,
                   cfg: PositioningConfig) -> PositionEstimate:
    """Iterative weighted positioning with guaranteed termination.

    Each round queries the spread layer at the previous estimate, turns it
    into softmax weights, and repeats the lookup. Termination is total:
    converging, looping, or the iteration budget, whichever comes first.
    """
    start = initial_location(obs, rfm, cfg)
    path: list[Location] = [start]
    estimates: list[Location] = []
    state: Termination | None = None
    for _ in range(cfg.max_iterations):
        entries = rfm.query(path[-1])
        wv = softmax_weights(entries, cfg.beta, cfg.weight_form)
        nxt = knn_locate(obs, rfm, cfg, wv)
        estimates.append(nxt)
        path.append(nxt)
        state = detect_termination(estimates, cfg)
        if state is not None:
            break
    loop_points = _extract_loop(estimates, cfg) if state is Termination.LOOPING else None
    return resolve_state(state, path, loop_points, obs, rfm, cfg)


def locate_batch(observations: Sequence[Fingerprint], rfm: ExtendedRfm,
                 cfg: PositioningConfig, method: str = "iterative",
                 threads: int = 1) -> list[PositionEstimate]:
    """Position a batch of observations with one of the three methods.

    ``knn`` is the plain baseline: unweighted, with both unshared-feature
    scales forced to 1 (missing values simply imputed). ``cdm`` keeps the
    configured scales but stays unweighted and single-shot. ``iterative``
    runs the full scheme. Single-shot estimates report zero iterations and
    the converging flag. Results are independent of ``threads``.
    """
    if method == "knn":
        run_cfg = replace(cfg, alpha1=1.0, alpha2=1.0)
    elif method in ("cdm", "iterative"):
        run_cfg = cfg
    else:
        raise ValueError(f"unknown method {method!r}")

    if method == "iterative":
        def solve(obs: Fingerprint) -> PositionEstimate:
            return iterate_locate(obs, rfm, run_cfg)
    else:
        def solve(obs: Fingerprint) -> PositionEstimate:
            loc = knn_locate(obs, rfm, run_cfg)
            return PositionEstimate(loc, Termination.CONVERGING, 0, (loc,), None, obs.id)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(solve, observations))
    return [solve(obs) for obs in observations]
