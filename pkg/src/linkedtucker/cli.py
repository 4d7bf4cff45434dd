"""Command-line interface: fit, summarize, simulate, check-grad."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .inference import AggregationMap, LocationInfo
from .io import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    EXIT_SAMPLER,
    ConfigError,
    DataError,
    RunConfig,
    run_fit,
    run_summarize,
    save_dataset,
)
from .posterior import PosteriorTarget, Ranks, gradient_check
from .sampler import SamplerError
from .simulate import CovariateSpec, SimConfig, generate, true_linear_predictors
from .tensors import ShapeError

__all__ = ["main"]


def _add_fit(sub):
    p = sub.add_parser("fit", help="fit the model and write draws + summaries")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--preset", choices=["paper", "test"],
                   help="iteration/chain preset overriding the config")
    p.add_argument("--output-dir", help="override the config output directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def _add_summarize(sub):
    p = sub.add_parser("summarize", help="regenerate summaries from stored draws")
    p.add_argument("--draws", required=True, help="draws file from a fit run")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--output-dir", help="override the config output directory")


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-subjects", type=int, default=60)
    p.add_argument("--n-caries-locations", type=int, default=8)
    p.add_argument("--n-fluorosis-locations", type=int, default=6)
    p.add_argument("--n-times", type=int, default=1)
    p.add_argument("--n-predictors", type=int, default=3,
                   help="columns per design matrix, intercept included")
    p.add_argument("--categories", type=int, default=3,
                   help="ordinal categories per outcome")
    p.add_argument("--rank", type=int, default=2, help="rank used for every mode")
    p.add_argument("--core-sparsity", type=float, default=0.5)
    p.add_argument("--missing-fraction", type=float, default=0.2)


def _add_check_grad(sub):
    p = sub.add_parser("check-grad",
                       help="finite-difference gate for the posterior gradient")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-5)


def _simulate_aggmap(data):
    """Round-robin anatomy so summaries exercise every aggregation level."""
    classes = ("incisor", "canine", "premolar", "molar")

    def side(labels, sites):
        out = {}
        for i, lab in enumerate(labels):
            tooth = f"T{i // 2}"
            out[lab] = LocationInfo(
                tooth=tooth,
                site=sites[i % len(sites)],
                tooth_class=classes[(i // 2) % len(classes)],
            )
        return out

    return AggregationMap(
        caries=side(data.caries_location_labels, ("b", "d", "l", "m", "o")),
        fluorosis=side(data.fluorosis_location_labels, ("C", "I", "M", "O")),
    )


def _cmd_simulate(args) -> int:
    rank = (args.rank,) * (3 if args.n_times == 1 else 4)
    cfg = SimConfig(
        n_subjects=args.n_subjects,
        n_caries_locations=args.n_caries_locations,
        n_fluorosis_locations=args.n_fluorosis_locations,
        n_times=args.n_times,
        p_occ=args.n_predictors,
        p_sev=args.n_predictors,
        n_caries_categories=args.categories,
        n_fluorosis_categories=args.categories,
        ranks=Ranks(rank, rank),
        core_sparsity=args.core_sparsity,
        missing_fraction=args.missing_fraction,
        seed=args.seed,
    )
    data, truth = generate(cfg)
    out = Path(args.out)
    paths = save_dataset(data, out)

    aggmap = _simulate_aggmap(data)
    agg_obj = {
        outcome: {
            loc: {"tooth": info.tooth, "site": info.site, "class": info.tooth_class}
            for loc, info in aggmap.for_outcome(outcome).items()
        }
        for outcome in ("caries", "fluorosis")
    }
    with open(out / "aggregation.json", "w") as f:
        json.dump(agg_obj, f, sort_keys=True, indent=1)
        f.write("\n")

    etas = true_linear_predictors(truth, data)
    with open(out / "truth_linear_predictors.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["outcome", "component", "subject_id", "location_id", "age", "eta"])
        for name, eta in etas.items():
            outcome, component = name.split("_")
            locs = (
                data.caries_location_labels if outcome == "caries"
                else data.fluorosis_location_labels
            )
            ages = data.age_labels if data.longitudinal else ("",)
            for si, s in enumerate(data.subject_labels):
                for qi, q in enumerate(locs):
                    for ti, a in enumerate(ages):
                        v = eta[si, qi, ti] if data.longitudinal else eta[si, qi]
                        w.writerow([outcome, component, s, q, a, repr(float(v))])

    def listify(x):
        return np.asarray(x).tolist()

    lc = truth.coefficients
    blocks = {}
    for name, _, block in lc.blocks():
        blocks[name] = {
            "spatial": listify(block.spatial),
            "predictor": listify(block.predictor),
            "time": listify(block.time) if block.time is not None else None,
            "core": listify(block.core.array),
        }
    with open(out / "truth_params.json", "w") as f:
        json.dump(
            {
                "subject_occurrence": listify(lc.subject_occurrence),
                "subject_severity": listify(lc.subject_severity),
                "blocks": blocks,
                "cutpoint_raw_caries": listify(truth.raw_caries.values),
                "cutpoint_raw_fluorosis": listify(truth.raw_fluorosis.values),
            },
            f, sort_keys=True, indent=1,
        )
        f.write("\n")

    run_config = {
        "data": {
            "caries": "caries.csv",
            "fluorosis": "fluorosis.csv",
            "covariates_occurrence": "covariates_occurrence.csv",
            "covariates_severity": "covariates_severity.csv",
            "manifest": "dataset.json",
        },
        "ranks": {"occurrence": list(rank), "severity": list(rank)},
        "hyper": {"sigma_a": 1.0, "sigma_b": 1.0, "cutpoint_sd": 2.0,
                  "tau_mode": "per-tensor"},
        "nuts": {"seed": args.seed, "target_accept": 0.8, "max_tree_depth": 10},
        "summary": {"level": 0.95, "aggregation": "aggregation.json"},
        "output_dir": "out",
        "soft_fail_rhat": 1.05,
    }
    with open(out / "config.json", "w") as f:
        json.dump(run_config, f, sort_keys=True, indent=1)
        f.write("\n")
    print(f"wrote dataset, truth, and config under {out}")
    return EXIT_OK


def _cmd_check_grad(args) -> int:
    cfg = RunConfig.from_file(args.config)
    from .io import _load_configured_dataset

    data = _load_configured_dataset(cfg)
    try:
        target = PosteriorTarget(data, cfg.ranks, cfg.hyper)
    except ShapeError as exc:
        raise ConfigError(f"ranks incompatible with data: {exc}") from exc
    err = gradient_check(target, n_points=args.points, seed=args.seed)
    print(f"max relative gradient error over {args.points} points: {err:.3e}")
    if err < args.tolerance:
        print(f"PASS (tolerance {args.tolerance:g})")
        return EXIT_OK
    print(f"FAIL (tolerance {args.tolerance:g})")
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="linkedtucker",
        description="Joint hurdle-ordinal regression with linked Tucker "
                    "coefficient factorizations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_fit(sub)
    _add_summarize(sub)
    _add_simulate(sub)
    _add_check_grad(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            cfg = RunConfig.from_file(
                args.config, preset=args.preset, output_dir=args.output_dir,
                progress=not args.quiet,
            )
            return run_fit(cfg)
        if args.command == "summarize":
            cfg = RunConfig.from_file(args.config, output_dir=args.output_dir)
            return run_summarize(args.draws, cfg)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "check-grad":
            return _cmd_check_grad(args)
        raise AssertionError(args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())
