"""Command-line front end.

Subcommands: ``estimate`` (fit the robust estimator), ``detect`` (flag
outliers with a robust or classical fit), ``simulate`` (run a scenario
grid), ``validate`` (lint a dataset).  Every command writes a run manifest
recording the seed, a hash of the effective configuration, input digests,
and output paths, so a rerun with an identical manifest reproduces outputs
byte for byte.

Exit codes: 0 success, 2 input error, 3 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (IntervalDataset, WeightVector, barycenter, load_interval_csv,
                   symbolic_cov)
from .errors import (DegenerateDataError, DegenerateSpreadError,
                     SingularCovarianceError, UnreliableFitError,
                     ValidationError)
from .estimator import ImcdConfig, imcd_fit
from .latent import LatentSpec, build_moments, specs_from_config
from .outlier import MallowsAdjBox, detect_outliers, distance_distance_table
from .simulate import (cells_from_config, paper_grid, run_grid,
                       write_results_csv)
from .univariate import AdjBox, Farness

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SCHEMA_VERSION = 1

_NUMERIC_ERRORS = (SingularCovarianceError, DegenerateDataError,
                   DegenerateSpreadError, UnreliableFitError)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int,
                    inputs: list, outputs: list) -> Path:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "config": config,
        "config_hash": _config_hash(config),
        "seed": seed,
        "input_digests": [{"path": str(p), "sha256": _sha256_file(p)}
                          for p in inputs],
        "output_paths": [str(p) for p in outputs],
    }
    path = out_dir / "manifest.json"
    _write_json(path, manifest)
    return path


def _load_specs(latent_path, p: int):
    if latent_path is None:
        return tuple(LatentSpec.uniform() for _ in range(p)), None
    path = Path(latent_path)
    config = json.loads(path.read_text())
    specs = specs_from_config(config, base_dir=path.parent)
    if len(specs) != p:
        raise ValidationError(
            f"latent config declares {len(specs)} variables but data has {p}")
    return specs, path


def _load_dataset(data_path, latent_path):
    probe = load_interval_csv(data_path)
    specs, spec_file = _load_specs(latent_path, probe.p)
    ds = IntervalDataset(probe.centers, probe.ranges, specs, probe.labels)
    inputs = [Path(data_path)] + ([spec_file] if spec_file else [])
    return ds, inputs


def _parse_m(value: str, n: int) -> int:
    x = float(value)
    if 0.0 < x < 1.0:
        return int(x * n)
    if x != int(x):
        raise ValidationError("--m must be an integer or a fraction in (0, 1)")
    return int(x)


def _reweight_rule(args) -> AdjBox | Farness:
    if args.reweight == "adjbox":
        return AdjBox(args.k)
    return Farness(args.farness_reweight)


def cmd_estimate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, inputs = _load_dataset(args.data, args.latent)
    mom = build_moments(ds.specs)
    m = _parse_m(args.m, ds.n) if args.m is not None else None
    cfg = ImcdConfig(m=m, n_starts=args.n_starts, seed=args.seed,
                     reweight=_reweight_rule(args))
    fit = imcd_fit(ds, mom, cfg, threads=args.threads)

    fit_path = out_dir / "fit.json"
    payload = fit.to_dict()
    payload["latent_moments"] = {
        "mean": [float(v) for v in mom.mean],
        "second_moment": [float(v) for v in mom.second_moment],
        "cross": [float(v) for v in mom.cross.ravel()],
    }
    _write_json(fit_path, payload)
    config = {"command": "estimate", "m": fit.config.resolve_m(ds.n),
              "n_starts": cfg.n_starts, "seed": args.seed,
              "reweight": cfg.reweight.describe(), "threads": args.threads}
    _write_manifest(out_dir, "estimate", config, args.seed, inputs, [fit_path])

    eigvals = np.linalg.eigvalsh(fit.cov.matrix)
    cond = float(eigvals[-1] / eigvals[0]) if eigvals[0] > 0 else float("inf")
    print(f"subset size m = {fit.config.resolve_m(ds.n)} of n = {ds.n}")
    print("barycenter centers:", " ".join(f"{v:.6g}" for v in fit.center.center))
    print("barycenter ranges: ", " ".join(f"{v:.6g}" for v in fit.center.ranges))
    print(f"covariance condition number = {cond:.6g}")
    print(f"reweighting kept {fit.n_kept} of {ds.n} observations "
          f"(cutoff {fit.cutoff:.6g})")
    print(f"wrote {fit_path}")
    return EXIT_OK


def _moments_from_fit(payload: dict, p: int):
    import numpy as _np

    from .latent import LatentMoments
    lm = payload["latent_moments"]
    mean = _np.asarray(lm["mean"], dtype=float)
    second = _np.asarray(lm["second_moment"], dtype=float)
    cross = _np.asarray(lm["cross"], dtype=float).reshape(p, p)
    qcov = cross - _np.outer(mean, mean)
    return LatentMoments(mean=mean, second_moment=second, cross=cross, qcov=qcov)


def cmd_detect(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.fit is None and not args.classical:
        raise ValidationError("either --fit or --classical is required")

    ds, inputs = _load_dataset(args.data, args.latent)
    if args.method == "adjbox":
        rule = AdjBox(args.k)
    elif args.method == "mallows-adjbox":
        rule = MallowsAdjBox(args.k)
    else:
        rule = Farness(args.farness)

    w_all = WeightVector(np.ones(ds.n))
    mom = build_moments(ds.specs)
    classic_center = barycenter(ds, w_all)
    classic_cov = symbolic_cov(ds, w_all, mom)

    outputs = []
    if args.classical:
        report = detect_outliers(ds, classic_center, classic_cov, mom, rule,
                                 estimator="classical", mild=args.mild)
    else:
        fit_path = Path(args.fit)
        payload = json.loads(fit_path.read_text())
        p = int(payload["p"])
        if p != ds.p:
            raise ValidationError(
                f"fit was computed for p={p} variables but data has p={ds.p}")
        from .core import Barycenter, SymbolicCov
        robust_center = Barycenter(np.asarray(payload["center"], dtype=float),
                                   np.asarray(payload["ranges"], dtype=float))
        robust_cov = SymbolicCov(
            np.asarray(payload["cov"], dtype=float).reshape(p, p))
        mom = _moments_from_fit(payload, p)
        inputs.append(fit_path)
        report = detect_outliers(ds, robust_center, robust_cov, mom, rule,
                                 estimator="imcd", mild=args.mild)
        table = distance_distance_table(
            ds, (classic_center, classic_cov), (robust_center, robust_cov), mom,
            classical_method=AdjBox(args.k), robust_method=rule
            if not isinstance(rule, MallowsAdjBox) else AdjBox(args.k))
        dd_path = out_dir / "distance_distance.csv"
        table.write_csv(dd_path)
        outputs.append(dd_path)

    report_path = out_dir / "report.json"
    _write_json(report_path, report.to_dict())
    outputs.insert(0, report_path)
    config = {"command": "detect", "method": report.method,
              "classical": bool(args.classical), "mild": args.mild,
              "seed": args.seed}
    _write_manifest(out_dir, "detect", config, args.seed, inputs, outputs)

    ids = report.flagged_ids()
    print(f"method {report.method} on {report.estimator} estimates: "
          f"{len(ids)} of {ds.n} observations flagged (cutoff {report.cutoff:.6g})")
    if ids:
        print("flagged ids:", " ".join(str(i) for i in ids))
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = []
    if args.paper_grid:
        cells = paper_grid()
        grid_config = {"cells": "paper-grid"}
    else:
        if args.grid is None:
            raise ValidationError("a grid config path or --paper-grid is required")
        grid_path = Path(args.grid)
        grid_config = json.loads(grid_path.read_text())
        cells = cells_from_config(grid_config)
        inputs.append(grid_path)

    table = run_grid(cells, reps=args.reps, seed=args.seed, threads=args.threads)
    results_path = out_dir / "results.csv"
    write_results_csv(results_path, table)
    config = {"command": "simulate", "cells": len(cells), "reps": args.reps,
              "seed": args.seed, "paper_grid": bool(args.paper_grid)}
    _write_manifest(out_dir, "simulate", config, args.seed, inputs, [results_path])
    print(f"{len(cells)} cells x {args.reps} reps -> {len(table)} metric rows")
    print(f"wrote {results_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    ds, _ = _load_dataset(args.data, args.latent)
    print(f"{args.data}: {ds.n} observations, {ds.p} variables")
    if ds.labels is not None:
        print(f"label column present ({int(ds.labels.sum())} marked outliers)")
    zero_ranges = 0
    for j, spec in enumerate(ds.specs):
        if spec.kind != "degenerate":
            zero_ranges += int(np.sum(ds.ranges[:, j] == 0.0))
    if zero_ranges:
        print(f"warning: {zero_ranges} zero-range cells under non-degenerate "
              f"latents (treated as point intervals)")
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivmcd",
        description="Robust estimation and outlier detection for interval data")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master random seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker thread cap (results do not depend on it)")
        p.add_argument("--out", default="out", help="output directory")

    p_est = sub.add_parser("estimate", help="fit the robust estimator")
    p_est.add_argument("data", help="interval CSV (var_lo/var_hi or var_c/var_r)")
    p_est.add_argument("--latent", help="latent JSON config (default: all uniform)")
    p_est.add_argument("--m", help="subset size; integer or fraction of n")
    p_est.add_argument("--n-starts", type=int, default=500, dest="n_starts")
    p_est.add_argument("--reweight", choices=["farness", "adjbox"],
                       default="farness")
    p_est.add_argument("--farness-reweight", type=float, default=0.975,
                       dest="farness_reweight",
                       help="farness threshold for the reweighting cutoff")
    p_est.add_argument("--k", type=float, default=1.5,
                       help="adjusted-boxplot whisker coefficient")
    common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_det = sub.add_parser("detect", help="flag outliers")
    p_det.add_argument("data")
    p_det.add_argument("--fit", help="fit.json from estimate")
    p_det.add_argument("--classical", action="store_true",
                       help="use classical (all-observation) estimates")
    p_det.add_argument("--latent", help="latent JSON config (default: all uniform)")
    p_det.add_argument("--method", choices=["farness", "adjbox", "mallows-adjbox"],
                       default="farness")
    p_det.add_argument("--farness", type=float, default=0.95,
                       help="farness score threshold for flagging")
    p_det.add_argument("--mild", type=float, default=None,
                       help="second, laxer farness threshold for a mild tier")
    p_det.add_argument("--k", type=float, default=1.5)
    common(p_det)
    p_det.set_defaults(func=cmd_detect)

    p_sim = sub.add_parser("simulate", help="run a scenario grid")
    p_sim.add_argument("grid", nargs="?", help="grid JSON config")
    p_sim.add_argument("--paper-grid", action="store_true", dest="paper_grid",
                       help="expand the full 96-cell factorial")
    p_sim.add_argument("--reps", type=int, default=20)
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_val = sub.add_parser("validate", help="lint a dataset")
    p_val.add_argument("data")
    p_val.add_argument("--latent")
    p_val.set_defaults(func=cmd_validate)
    p_val.set_defaults(seed=0, threads=1, out="out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, SingularCovarianceError):
            print("hint: reduce the number of variables or increase the subset "
                  "size m", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
