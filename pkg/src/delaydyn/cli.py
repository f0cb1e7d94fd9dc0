"""Command-line pipeline: generate -> cluster -> fit -> predict -> evaluate -> report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical/sampler
failure. Outputs land only under --out; every stochastic run writes a
run_manifest.json with its seed and config next to its outputs. Plotting is
out of scope: report emits tidy CSVs any plotting tool can consume.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bayes.hmc import HmcConfig
from .bayes.predictive import posterior_predictive, prior_predictive
from .clustering import (
    ClusterModel,
    DEFAULT_K_RANGE,
    dataset_profiles,
    fit_cluster_model,
)
from .dataset import Dataset, N_MILESTONES, _write_csv, clean_dataset, load_dataset_dir
from .errors import DataError, DelayDynError, InvalidInputError, NumericError
from .evaluation import run_benchmark
from .modes import FittedModel, Mode, build_rows, fit as fit_mode, predict_at
from .synthgen import GeneratorConfig, generate_to_dir

THREADS_ENV = "DELAYDYN_THREADS"


def _threads(args) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        return max(1, int(env))
    return max(1, args.threads)


def _write_manifest(out_dir: Path, subcommand: str, seed, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "delaydyn",
        "version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _load_clean(data_dir) -> Dataset:
    return clean_dataset(load_dataset_dir(data_dir))


def _cmd_generate(args) -> int:
    config = GeneratorConfig.from_json(args.config) if args.config else GeneratorConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    out = Path(args.out)
    generate_to_dir(config, out)
    _write_manifest(out, "generate", config.seed, config.to_json_dict())
    return 0


def _cmd_cluster(args) -> int:
    dataset = _load_clean(args.data)
    profiles = dataset_profiles(dataset)
    k = None if args.k == "auto" else int(args.k)
    model = fit_cluster_model(profiles, k=k, k_range=args.k_range)
    model.save(args.out)
    return 0


def _cmd_fit(args) -> int:
    dataset = _load_clean(args.data)
    mode = Mode.parse(args.mode)
    cluster_model = None
    if mode is Mode.DYNAMIC:
        if not args.clusters:
            raise InvalidInputError("dynamic mode requires --clusters")
        cluster_model = ClusterModel.load(args.clusters)
    config = HmcConfig(
        chains=args.chains,
        warmup=args.warmup,
        draws=args.draws,
        target_accept=args.target_accept,
        threads=_threads(args),
    )
    model = fit_mode(mode, dataset, cluster_model, config, args.seed, family=args.family)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out, extra={"seed": args.seed})
    _write_manifest(out.parent, "fit", args.seed, {
        "mode": mode.value,
        "family": args.family,
        "hmc": config.to_json_dict(),
    })
    return 0


def _cmd_predict(args) -> int:
    model = FittedModel.load(args.model)
    dataset = _load_clean(args.data)
    milestones = [args.milestone] if args.milestone else list(range(1, N_MILESTONES + 1))
    rows = []
    for epic_id in dataset.epic_ids:
        for milestone in milestones:
            pred = predict_at(model, dataset, epic_id, milestone)
            rows.append(
                (
                    epic_id,
                    milestone,
                    model.mode.value,
                    repr(pred.median),
                    repr(pred.q05),
                    repr(pred.q95),
                    repr(pred.zero_probability),
                )
            )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out,
        ("epic_id", "milestone", "mode", "median", "q05", "q95", "zero_probability"),
        rows,
    )
    return 0


def _cmd_evaluate(args) -> int:
    dataset = _load_clean(args.data)
    modes = [Mode.parse(m) for m in args.modes]
    config = HmcConfig(
        chains=args.chains,
        warmup=args.warmup,
        draws=args.draws,
        target_accept=args.target_accept,
        threads=_threads(args),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_benchmark(dataset, modes, config, args.seed, folds=args.folds)
    result.write_results_csv(out / "results.csv")
    result.write_comparisons_csv(out / "comparisons.csv")

    # Reporting artifacts: full-data cluster model, centroid bands, and
    # predictive-check draws from a full-data dynamic fit.
    profiles = dataset_profiles(dataset)
    cluster_model = fit_cluster_model(profiles, k_range=DEFAULT_K_RANGE)
    cluster_model.save(out / "clusters.json")
    _write_cluster_bands(out / "cluster_bands.csv", cluster_model, profiles)

    dyn = fit_mode(Mode.DYNAMIC, dataset, cluster_model, config, args.seed)
    design, _ = build_rows(dataset, Mode.DYNAMIC, cluster_model, dyn.pattern_ordinals)
    x_std = dyn.posterior.standardizer.transform(design.x)
    _write_draws_csv(
        out / "prior_checks.csv",
        prior_predictive(x_std[: args.check_rows], n_draws=args.check_draws, seed=args.seed),
    )
    _write_draws_csv(
        out / "posterior_checks.csv",
        posterior_predictive(
            dyn.posterior, x_std[: args.check_rows], seed=args.seed, max_draws=args.check_draws
        ),
    )
    _write_milestone_draws(out / "milestone_draws.csv", dyn, dataset)
    _write_manifest(out, "evaluate", args.seed, {
        "modes": [m.value for m in modes],
        "folds": args.folds,
        "hmc": config.to_json_dict(),
    })
    return 0


def _write_cluster_bands(path, model: ClusterModel, profiles) -> None:
    by_label = {}
    for p in profiles:
        by_label.setdefault(model.assignments[p.epic_id], []).append(p.values)
    rows = []
    for label in range(1, model.k + 1):
        values = np.asarray(by_label.get(label, [model.centroids[label - 1]]))
        p25 = np.percentile(values, 25, axis=0)
        p75 = np.percentile(values, 75, axis=0)
        centroid = model.centroids[label - 1]
        for m in range(N_MILESTONES):
            rows.append((label, m + 1, repr(float(p25[m])), repr(float(centroid[m])), repr(float(p75[m]))))
    _write_csv(path, ("cluster", "milestone", "p25", "centroid", "p75"), rows)


def _write_draws_csv(path, draws: np.ndarray) -> None:
    rows = [
        (set_id, repr(float(value)))
        for set_id, row in enumerate(np.atleast_2d(draws))
        for value in row
    ]
    _write_csv(path, ("draw_set_id", "bre_value"), rows)


def _write_milestone_draws(path, model: FittedModel, dataset: Dataset, per_epic: int = 20) -> None:
    rows = []
    epic_ids = dataset.epic_ids[:50]
    for milestone in range(1, N_MILESTONES + 1):
        for epic_id in epic_ids:
            pred = predict_at(model, dataset, epic_id, milestone)
            idx = np.linspace(0, pred.samples.size - 1, per_epic).astype(int)
            for value in pred.samples[idx]:
                rows.append((milestone, repr(float(value))))
    _write_csv(path, ("milestone", "bre_value"), rows)


def _cmd_report(args) -> int:
    results = Path(args.results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clusters_path = results / "clusters.json"
    if not clusters_path.exists():
        raise DataError(f"missing {clusters_path}")
    model = ClusterModel.load(clusters_path)
    _write_csv(
        out / "wss_curve.csv",
        ("k", "wss"),
        ((k, repr(v)) for k, v in sorted(model.wss_curve.items())),
    )
    for name in ("cluster_bands.csv", "comparisons.csv", "prior_checks.csv", "posterior_checks.csv", "milestone_draws.csv"):
        src = results / name
        if src.exists():
            (out / ("centroid_bands.csv" if name == "cluster_bands.csv" else name)).write_bytes(
                src.read_bytes()
            )

    results_csv = results / "results.csv"
    if not results_csv.exists():
        raise DataError(f"missing {results_csv}")
    with open(results_csv, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        pooled = [row for row in reader if row["split"] == "pooled"]
    _write_csv(
        out / "accuracy_by_milestone.csv",
        ("mode", "milestone", "MAE", "SA", "mean_rwidth90"),
        (
            (row["mode"], row["milestone"], row["MAE"], row["SA"], row["mean_rwidth90"])
            for row in pooled
        ),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaydyn",
        description="Dynamic delay prediction for agile epics",
    )
    parser.add_argument("--version", action="version", version=f"delaydyn {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", help="generate a synthetic backlog dataset")
    p.add_argument("--config", help="JSON file mirroring the generator config fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("cluster", help="fit the delay-pattern cluster model")
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="auto", help="'auto' (elbow) or an integer")
    p.add_argument("--k-range", type=int, nargs="+", default=list(DEFAULT_K_RANGE))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("fit", help="fit one prediction mode")
    p.add_argument("--data", required=True)
    p.add_argument("--clusters", help="clusters.json (required for dynamic mode)")
    p.add_argument("--mode", required=True,
                   choices=[m.value for m in Mode])
    p.add_argument("--family", default="zib", choices=["zib", "beta"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict final BRE for every epic")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--milestone", type=int, choices=range(1, N_MILESTONES + 1))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="run the cross-validated benchmark")
    p.add_argument("--data", required=True)
    p.add_argument("--modes", nargs="+", default=[m.value for m in Mode])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--check-rows", type=int, default=200)
    p.add_argument("--check-draws", type=int, default=50)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="reshape results into plot-ready CSVs")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DelayDynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
