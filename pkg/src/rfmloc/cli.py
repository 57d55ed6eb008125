"""Command line interface: synth, build, locate, eval, report.

Exit codes: 0 on success, 1 on data errors (with a file and line
diagnostic on stderr), 2 on usage errors. Values given as flags override
the config file, which overrides the built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import fields
from pathlib import Path

from rfmloc import evaluate
from rfmloc.builder import BuilderConfig, build
from rfmloc.model import (DataError, ExtendedRfm, PositioningConfig,
                          read_estimates, read_fingerprints, write_estimates,
                          write_fingerprints)
from rfmloc.positioner import locate_batch
from rfmloc.synth import SurveyPlan, generate_dataset, make_environment

_WEIGHT_FORMS = {"paper": "paper_verbatim", "precision": "precision_softmax"}


def _read_kv_config(path) -> dict[str, str]:
    """Parse a plain-text config file of ``key = value`` lines."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DataError(f"expected 'key = value', got {stripped!r}",
                                source=path, line=lineno)
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def _layer_config(cls, config_path, overrides: dict):
    """Build a config dataclass from defaults, then file values, then flags."""
    coercers = {"int": int, "float": float, "str": str}
    spec = {f.name: coercers[f.type] for f in fields(cls)}
    values: dict = {}
    if config_path is not None:
        for key, raw in _read_kv_config(config_path).items():
            if key not in spec:
                raise DataError(f"unknown config key {key!r}", source=config_path)
            try:
                values[key] = spec[key](raw)
            except ValueError:
                raise DataError(f"bad value for {key!r}: {raw!r}",
                                source=config_path) from None
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    try:
        return cls(**values)
    except ValueError as exc:
        raise DataError(str(exc), source=config_path) from None


def _cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env = make_environment(args.seed, width=args.roi_width, height=args.roi_height,
                           n_aps=args.n_aps, contamination=args.contamination)
    plan = SurveyPlan(seed=args.seed, n_passes=args.passes, speed=args.speed,
                      sample_spacing=args.spacing)
    raw, test = generate_dataset(env, plan)
    env.save(out_dir / "env.json")
    write_fingerprints(out_dir / "raw.jsonl", raw.records)
    write_fingerprints(out_dir / "test.jsonl", test)
    print(f"wrote {len(raw.records)} survey records and {len(test)} test queries "
          f"to {out_dir}")
    return 0


def _cmd_build(args) -> int:
    overrides = {
        "max_neighbors": args.max_neighbors, "radius": args.radius,
        "ks_neighbors": args.ks_neighbors, "bandwidth": args.bandwidth,
        "mad_scale": args.mad_scale, "sigma_floor": args.sigma_floor,
        "grid_resolution": args.grid_resolution,
    }
    cfg = _layer_config(BuilderConfig, args.config, overrides)
    records = read_fingerprints(args.raw, require_location=True)
    from rfmloc.model import RawRfm

    rfm = build(RawRfm.from_records(records), cfg)
    rfm.save(args.out)
    print(f"built a map with {rfm.n_points} reference points and "
          f"{len(rfm.feature_ids)} features at {args.out}")
    return 0


def _positioning_overrides(args) -> dict:
    overrides = {
        "alpha1": args.alpha1, "alpha2": args.alpha2,
        "missing_value": args.missing_value, "beta": args.beta, "k": args.k,
        "converge_tol": args.converge_tol, "max_iterations": args.max_iterations,
        "loop_min_points": args.loop_min_points,
        "loop_max_diameter": args.loop_max_diameter,
        "minkowski_p": args.minkowski_p, "init_mode": args.init_mode,
        "init_seed": args.seed,
    }
    if args.weight_form is not None:
        overrides["weight_form"] = _WEIGHT_FORMS[args.weight_form]
    return overrides


def _cmd_locate(args) -> int:
    cfg = _layer_config(PositioningConfig, args.config, _positioning_overrides(args))
    rfm = ExtendedRfm.load(args.rfm)
    observations = read_fingerprints(args.obs, missing_value=cfg.missing_value)
    estimates = locate_batch(observations, rfm, cfg, method=args.method,
                             threads=args.threads)
    write_estimates(args.out, estimates)
    print(f"located {len(estimates)} queries ({args.method}) into {args.out}")
    return 0


def _cmd_eval(args) -> int:
    estimates = read_estimates(args.estimates)
    truth_records = read_fingerprints(args.truth, require_location=True)
    if len(estimates) != len(truth_records):
        raise DataError(f"{len(estimates)} estimates but {len(truth_records)} "
                        f"truth records", source=args.estimates)
    for i, (est, rec) in enumerate(zip(estimates, truth_records), start=1):
        if est.query_id is not None and est.query_id != rec.id:
            raise DataError(f"estimate id {est.query_id} does not match truth id "
                            f"{rec.id}", source=args.estimates, line=i)
    truth = [rec.location for rec in truth_records]
    errors = evaluate.radial_errors(estimates, truth)
    shares = evaluate.tf_stats(estimates)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "ce50", "ce75", "ce90", "max_error",
                     "frac_converging", "frac_looping", "frac_max"])
    writer.writerow([len(errors),
                     repr(evaluate.circular_error(errors, 50)),
                     repr(evaluate.circular_error(errors, 75)),
                     repr(evaluate.circular_error(errors, 90)),
                     repr(evaluate.circular_error(errors, 100)),
                     repr(shares["converging"]), repr(shares["looping"]),
                     repr(shares["max"])])
    Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    if args.ecdf_out:
        Path(args.ecdf_out).write_text(evaluate.ecdf_csv(errors), encoding="utf-8")
    if args.errors_out:
        lines = ["x,y,error"]
        for loc, err in evaluate.error_map(estimates, truth):
            lines.append(f"{loc.x!r},{loc.y!r},{err!r}")
        Path(args.errors_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"scored {len(errors)} estimates into {args.out}")
    return 0


def _cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    truth_path = Path(args.truth) if args.truth else runs_dir / "truth.jsonl"
    out_dir = Path(args.out_dir) if args.out_dir else runs_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    truth_records = read_fingerprints(truth_path, require_location=True)
    truth = [rec.location for rec in truth_records]
    runs = {}
    for path in sorted(runs_dir.glob("*.jsonl")):
        if path.resolve() == truth_path.resolve():
            continue
        estimates = read_estimates(path)
        if len(estimates) != len(truth):
            raise DataError(f"{len(estimates)} estimates but {len(truth)} truth "
                            f"records", source=path)
        runs[path.stem] = estimates
    if not runs:
        raise DataError("no estimate files found", source=runs_dir)
    table = evaluate.compare_report(runs, truth)
    (out_dir / "report.csv").write_text(table.to_csv(), encoding="utf-8")
    for name, errors in table.errors.items():
        (out_dir / f"{name}_ecdf.csv").write_text(evaluate.ecdf_csv(errors),
                                                  encoding="utf-8")
    print(f"wrote report.csv and {len(table.errors)} ECDF files to {out_dir}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfmloc",
        description="Variability-aware fingerprint maps and iterative positioning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic survey dataset")
    p.add_argument("--seed", type=int, required=True, help="master random seed")
    p.add_argument("--out-dir", required=True, help="directory for env.json, raw.jsonl, test.jsonl")
    p.add_argument("--n-aps", type=int, default=12)
    p.add_argument("--roi-width", type=float, default=50.0)
    p.add_argument("--roi-height", type=float, default=30.0)
    p.add_argument("--passes", type=int, default=3)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--contamination", type=float, default=0.0)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("build", help="build the extended map from survey records")
    p.add_argument("--raw", required=True, help="survey records (JSON lines)")
    p.add_argument("--out", required=True, help="output map path (JSON)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--max-neighbors", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--ks-neighbors", type=int)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--mad-scale", type=float)
    p.add_argument("--sigma-floor", type=float)
    p.add_argument("--grid-resolution", type=float)
    p.set_defaults(handler=_cmd_build)

    p = sub.add_parser("locate", help="position observations against a map")
    p.add_argument("--rfm", required=True, help="extended map (JSON)")
    p.add_argument("--obs", required=True, help="observations (JSON lines)")
    p.add_argument("--out", required=True, help="output estimates (JSON lines)")
    p.add_argument("--method", choices=["knn", "cdm", "iterative"], default="iterative")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--weight-form", choices=sorted(_WEIGHT_FORMS))
    p.add_argument("--seed", type=int, help="seed for random initialization")
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--missing-value", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--converge-tol", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--loop-min-points", type=int)
    p.add_argument("--loop-max-diameter", type=float)
    p.add_argument("--minkowski-p", type=float)
    p.add_argument("--init-mode", choices=["knn", "random"])
    p.set_defaults(handler=_cmd_locate)

    p = sub.add_parser("eval", help="score estimates against ground truth")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="output statistics CSV")
    p.add_argument("--ecdf-out", help="optional ECDF CSV")
    p.add_argument("--errors-out", help="optional per-query (x, y, error) CSV")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("report", help="side-by-side method comparison")
    p.add_argument("--runs", required=True,
                   help="directory of <method>.jsonl estimate files plus truth.jsonl")
    p.add_argument("--truth", help="truth records (default: <runs>/truth.jsonl)")
    p.add_argument("--out-dir", help="output directory (default: the runs directory)")
    p.set_defaults(handler=_cmd_report)
    return parser


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
