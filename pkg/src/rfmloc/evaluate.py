"""Evaluation statistics for positioning runs: radial errors, empirical
CDFs, circular error percentiles, termination shares, loop diameters, and
the side-by-side method report."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

from rfmloc.model import Location, PositionEstimate, Termination


class LengthMismatch(ValueError):
    """Estimates and ground truth differ in length."""


class EmptyInput(ValueError):
    """A statistic was requested over no data."""


def radial_errors(estimates: Sequence[PositionEstimate],
                  truth: Sequence[Location]) -> list[float]:
    """Euclidean distance between each estimate and its ground truth,
    aligned by index."""
    if len(estimates) != len(truth):
        raise LengthMismatch(f"{len(estimates)} estimates vs {len(truth)} truth locations")
    if not estimates:
        raise EmptyInput("no estimates to score")
    return [est.location.distance_to(loc) for est, loc in zip(estimates, truth)]


def ecdf(errors: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF step points: at the i-th sorted value the fraction is
    i / n; repeated values collapse into a single step."""
    if not errors:
        raise EmptyInput("no errors for an empirical CDF")
    ordered = sorted(errors)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, value in enumerate(ordered, start=1):
        if i == n or ordered[i] != value:
            points.append((value, i / n))
    return points


def circular_error(errors: Sequence[float], pct: float) -> float:
    """The ceil(pct * n / 100)-th smallest error, an order statistic with no
    interpolation; pct = 100 is the maximum."""
    if not errors:
        raise EmptyInput("no errors for a circular error")
    if not 0 < pct <= 100:
        raise ValueError("pct must be in (0, 100]")
    n = len(errors)
    rank = max(1, math.ceil(pct * n / 100 - 1e-9))
    return sorted(errors)[rank - 1]


def tf_stats(estimates: Sequence[PositionEstimate]) -> dict[str, float]:
    """Share of each termination state over a run."""
    if not estimates:
        raise EmptyInput("no estimates for termination statistics")
    n = len(estimates)
    counts = {state: 0 for state in Termination}
    for est in estimates:
        counts[est.tf] += 1
    return {"converging": counts[Termination.CONVERGING] / n,
            "looping": counts[Termination.LOOPING] / n,
            "max": counts[Termination.MAX] / n}


def loop_diameters(estimates: Sequence[PositionEstimate]) -> list[float]:
    """Greatest pairwise distance within each recorded loop, in run order.

    Covers every estimate that detected a loop, whichever way the loop was
    then resolved; runs without loops yield an empty list.
    """
    out: list[float] = []
    for est in estimates:
        if est.loop_points:
            out.append(max((a.distance_to(b)
                            for a, b in combinations(est.loop_points, 2)), default=0.0))
    return out


def error_map(estimates: Sequence[PositionEstimate],
              truth: Sequence[Location]) -> list[tuple[Location, float]]:
    """(ground-truth location, radial error) pairs for external plotting."""
    errors = radial_errors(estimates, truth)
    return list(zip(truth, errors))


def opt_errors(estimates: Sequence[PositionEstimate],
               truth: Sequence[Location]) -> list[float]:
    """Per query, the error of the searched location closest to ground truth;
    a lower bound on what any selection rule over the path could achieve."""
    if len(estimates) != len(truth):
        raise LengthMismatch(f"{len(estimates)} estimates vs {len(truth)} truth locations")
    if not estimates:
        raise EmptyInput("no estimates to score")
    return [min(p.distance_to(loc) for p in est.path)
            for est, loc in zip(estimates, truth)]


@dataclass(frozen=True)
class ReportTable:
    """Side-by-side circular errors per method, plus the per-method raw
    errors for CDF export. Row order follows the input, with the path
    lower bound appended as method "opt" when available."""

    rows: tuple[tuple[str, float, float, float, float], ...]
    errors: Mapping[str, Sequence[float]]

    def to_csv(self) -> str:
        lines = ["method,ce50,ce75,ce90,max_error"]
        for name, ce50, ce75, ce90, worst in self.rows:
            lines.append(f"{name},{ce50!r},{ce75!r},{ce90!r},{worst!r}")
        return "\n".join(lines) + "\n"


def ecdf_csv(errors: Sequence[float]) -> str:
    lines = ["error,fraction"]
    for value, fraction in ecdf(errors):
        lines.append(f"{value!r},{fraction!r}")
    return "\n".join(lines) + "\n"


def compare_report(runs: Mapping[str, Sequence[PositionEstimate]],
                   truth: Sequence[Location]) -> ReportTable:
    """Circular error summary for several methods over one query set.

    When a run named ``iterative`` is present, an extra "opt" row reports
    its per-query best searched location, the selection lower bound.
    """
    if not runs:
        raise EmptyInput("no runs to compare")
    rows = []
    errors: dict[str, list[float]] = {}
    for name, estimates in runs.items():
        errs = radial_errors(estimates, truth)
        errors[name] = errs
        rows.append((name, circular_error(errs, 50), circular_error(errs, 75),
                     circular_error(errs, 90), circular_error(errs, 100)))
    if "iterative" in runs:
        errs = opt_errors(runs["iterative"], truth)
        errors["opt"] = errs
        rows.append(("opt", circular_error(errs, 50), circular_error(errs, 75),
                     circular_error(errs, 90), circular_error(errs, 100)))
    return ReportTable(tuple(rows), errors)
