"""Data ingestion, run configuration, orchestration, and serialization.

Datasets travel as long-format CSV (one row per observed cell; absent
rows are missing) plus per-component covariate CSVs and a JSON manifest
pinning category counts and label order. Posterior draws are stored in a
self-describing binary file: magic bytes, a version, a JSON header with
the parameter layout, then little-endian 64-bit floats. Summary tables
serialize to long-format CSV and a fixed-width text rendering.

Every output is reproducible byte for byte for a fixed (config, seed,
build): floats are written with shortest round-trip repr, JSON keys are
sorted, and nothing records wall-clock time.

Exit codes: 0 ok, 2 config error, 3 data error, 4 sampler hard failure,
5 diagnostics soft failure.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inference import (
    AggregationMap,
    LocationInfo,
    SummaryTable,
    stratified_summary,
    summarize,
)
from .model import MISSING, PairedDataset
from .posterior import (
    HyperParams,
    LayoutEntry,
    ParamLayout,
    PosteriorTarget,
    Ranks,
    gradient_check,
    layout_for,
    ranks_from_layout,
)
from .sampler import NutsConfig, PosteriorDraws, SamplerError, diagnostics, run_chains
from .tensors import ShapeError

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetSpec",
    "RunConfig",
    "load_dataset",
    "save_dataset",
    "load_dataset_with_manifest",
    "save_draws",
    "load_draws",
    "load_aggregation_map",
    "run_fit",
    "run_summarize",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_DATA",
    "EXIT_SAMPLER",
    "EXIT_DIAGNOSTICS",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SAMPLER = 4
EXIT_DIAGNOSTICS = 5

_MAGIC = b"LNKTCKR1"
_VERSION = 1

PRESETS = {
    "paper": {"n_warmup": 5000, "n_samples": 5000, "n_chains": 4},
    "test": {"n_warmup": 500, "n_samples": 500, "n_chains": 2},
}


class ConfigError(Exception):
    """Invalid run configuration (pre-flight; nothing was computed)."""


class DataError(Exception):
    """Malformed input data; messages carry file and line."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(path):
    """CSV rows as (line_number, list-of-fields); validates non-empty."""
    try:
        with open(path, newline="") as f:
            rows = [(i + 1, row) for i, row in enumerate(csv.reader(f)) if row]
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows


@dataclass(frozen=True)
class DatasetSpec:
    """Category counts plus optional explicit label orders.

    Explicit orders make loading independent of row order (and make
    save/load round trips lossless even for fully missing units); when
    omitted, labels are taken in order of first appearance.
    """

    n_caries_categories: int
    n_fluorosis_categories: int
    subjects: tuple[str, ...] | None = None
    caries_locations: tuple[str, ...] | None = None
    fluorosis_locations: tuple[str, ...] | None = None
    ages: tuple[str, ...] | None = None


def _load_covariates(path, expect_subjects=None, expect_ages=None):
    """Parse one covariate CSV: subject_id[,age],x1..xp."""
    rows = _read_rows(path)
    line0, header = rows[0]
    if not header or header[0] != "subject_id":
        raise DataError(f"{path}:{line0}: first column must be subject_id")
    longitudinal = len(header) > 1 and header[1] == "age"
    names = tuple(header[2:] if longitudinal else header[1:])
    if not names:
        raise DataError(f"{path}:{line0}: no covariate columns")
    values = {}
    subjects, ages = [], []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataError(
                f"{path}:{line}: expected {len(header)} fields, got {len(row)}"
            )
        subject = row[0]
        age = row[1] if longitudinal else None
        key = (subject, age)
        if key in values:
            raise DataError(f"{path}:{line}: duplicate covariate row for {key}")
        try:
            values[key] = [float(x) for x in (row[2:] if longitudinal else row[1:])]
        except ValueError as exc:
            raise DataError(f"{path}:{line}: non-numeric covariate ({exc})") from exc
        if subject not in subjects:
            subjects.append(subject)
        if longitudinal and age not in ages:
            ages.append(age)
    if expect_subjects is not None and set(subjects) != set(expect_subjects):
        raise DataError(f"{path}: subject ids differ from the other covariate file")
    if expect_ages is not None and set(ages) != set(expect_ages):
        raise DataError(f"{path}: age labels differ from the other covariate file")
    for s in subjects:
        for a in ages if longitudinal else [None]:
            if (s, a) not in values:
                raise DataError(
                    f"{path}: ragged covariates; subject {s!r} missing age {a!r}"
                )
    return names, subjects, ages if longitudinal else None, values


def _sorted_ages(ages):
    try:
        return tuple(sorted(ages, key=float))
    except ValueError:
        return tuple(sorted(ages))


def _load_responses(path, subjects, ages, n_categories):
    """Parse one response CSV: subject_id,location_id[,age],value."""
    rows = _read_rows(path)
    line0, header = rows[0]
    longitudinal = ages is not None
    want = ["subject_id", "location_id"] + (["age"] if longitudinal else []) + ["value"]
    if header != want:
        raise DataError(f"{path}:{line0}: expected header {','.join(want)}")
    subject_index = {s: i for i, s in enumerate(subjects)}
    age_index = {a: i for i, a in enumerate(ages)} if longitudinal else None
    cells = {}
    locations = []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields")
        subject, location = row[0], row[1]
        age = row[2] if longitudinal else None
        raw_value = row[-1]
        if subject not in subject_index:
            raise DataError(f"{path}:{line}: unknown subject id {subject!r}")
        if longitudinal and age not in age_index:
            raise DataError(f"{path}:{line}: unknown age {age!r}")
        try:
            value = int(raw_value)
        except ValueError as exc:
            raise DataError(f"{path}:{line}: non-integer value {raw_value!r}") from exc
        if not 0 <= value < n_categories:
            raise DataError(
                f"{path}:{line}: value {value} outside 0..{n_categories - 1}"
            )
        key = (subject, location, age)
        if key in cells:
            raise DataError(f"{path}:{line}: duplicate cell {key}")
        cells[key] = value
        if location not in locations:
            locations.append(location)
    return locations, cells


def load_dataset(response_paths: dict, covariate_paths: dict,
                 spec: DatasetSpec) -> PairedDataset:
    """Assemble a PairedDataset from long-format CSV files.

    ``response_paths`` has keys "caries" and "fluorosis";
    ``covariate_paths`` has keys "occurrence" and "severity". Absent
    response rows become MISSING; every id is cross-checked.
    """
    occ_names, subjects, ages, occ_vals = _load_covariates(
        covariate_paths["occurrence"]
    )
    sev_names, _, _, sev_vals = _load_covariates(
        covariate_paths["severity"], expect_subjects=subjects, expect_ages=ages,
    )
    if spec.subjects is not None:
        if set(spec.subjects) != set(subjects):
            raise DataError("manifest subject ids differ from covariate files")
        subjects = list(spec.subjects)
    ages = list(spec.ages) if spec.ages is not None else (
        list(_sorted_ages(ages)) if ages is not None else None
    )
    longitudinal = ages is not None

    loc_c, cells_c = _load_responses(
        response_paths["caries"], subjects, ages, spec.n_caries_categories
    )
    loc_f, cells_f = _load_responses(
        response_paths["fluorosis"], subjects, ages, spec.n_fluorosis_categories
    )
    if spec.caries_locations is not None:
        extra = set(loc_c) - set(spec.caries_locations)
        if extra:
            raise DataError(f"caries locations not in manifest: {sorted(extra)}")
        loc_c = list(spec.caries_locations)
    if spec.fluorosis_locations is not None:
        extra = set(loc_f) - set(spec.fluorosis_locations)
        if extra:
            raise DataError(f"fluorosis locations not in manifest: {sorted(extra)}")
        loc_f = list(spec.fluorosis_locations)

    n, t = len(subjects), len(ages) if longitudinal else 1

    def response_array(locations, cells, k):
        shape = (n, len(locations)) + ((t,) if longitudinal else ())
        arr = np.full(shape, MISSING, dtype=np.int64)
        loc_index = {l: i for i, l in enumerate(locations)}
        subject_index = {s: i for i, s in enumerate(subjects)}
        age_index = {a: i for i, a in enumerate(ages)} if longitudinal else None
        for (subject, location, age), value in cells.items():
            qi = loc_index[location]
            si = subject_index[subject]
            if longitudinal:
                arr[si, qi, age_index[age]] = value
            else:
                arr[si, qi] = value
        return arr

    def design_array(names, vals):
        p = len(names)
        if longitudinal:
            x = np.empty((n, t, p))
            for si, s in enumerate(subjects):
                for ai, a in enumerate(ages):
                    x[si, ai] = vals[(s, a)]
        else:
            x = np.empty((n, p))
            for si, s in enumerate(subjects):
                x[si] = vals[(s, None)]
        return x

    return PairedDataset(
        caries=response_array(loc_c, cells_c, spec.n_caries_categories),
        fluorosis=response_array(loc_f, cells_f, spec.n_fluorosis_categories),
        x_occ=design_array(occ_names, occ_vals),
        x_sev=design_array(sev_names, sev_vals),
        n_caries_categories=spec.n_caries_categories,
        n_fluorosis_categories=spec.n_fluorosis_categories,
        subject_labels=tuple(subjects),
        caries_location_labels=tuple(loc_c),
        fluorosis_location_labels=tuple(loc_f),
        age_labels=tuple(ages) if longitudinal else (),
        occ_predictor_labels=occ_names,
        sev_predictor_labels=sev_names,
    )


def save_dataset(data: PairedDataset, out_dir) -> dict:
    """Write the CSV files plus a manifest; returns the path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    longitudinal = data.longitudinal
    paths = {
        "caries": out / "caries.csv",
        "fluorosis": out / "fluorosis.csv",
        "covariates_occurrence": out / "covariates_occurrence.csv",
        "covariates_severity": out / "covariates_severity.csv",
        "manifest": out / "dataset.json",
    }

    def write_responses(path, arr, locations):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            header = ["subject_id", "location_id"] + (["age"] if longitudinal else []) + ["value"]
            w.writerow(header)
            for si, s in enumerate(data.subject_labels):
                for qi, q in enumerate(locations):
                    for ti in range(data.n_times):
                        v = arr[si, qi, ti] if longitudinal else arr[si, qi]
                        if v == MISSING:
                            continue
                        row = [s, q] + ([data.age_labels[ti]] if longitudinal else [])
                        w.writerow(row + [int(v)])

    def write_covariates(path, x, names):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            header = ["subject_id"] + (["age"] if longitudinal else []) + list(names)
            w.writerow(header)
            for si, s in enumerate(data.subject_labels):
                if longitudinal:
                    for ti, a in enumerate(data.age_labels):
                        w.writerow([s, a] + [_fmt(v) for v in x[si, ti]])
                else:
                    w.writerow([s] + [_fmt(v) for v in x[si]])

    write_responses(paths["caries"], data.caries, data.caries_location_labels)
    write_responses(paths["fluorosis"], data.fluorosis, data.fluorosis_location_labels)
    write_covariates(paths["covariates_occurrence"], data.x_occ, data.occ_predictor_labels)
    write_covariates(paths["covariates_severity"], data.x_sev, data.sev_predictor_labels)
    manifest = {
        "n_caries_categories": data.n_caries_categories,
        "n_fluorosis_categories": data.n_fluorosis_categories,
        "subjects": list(data.subject_labels),
        "caries_locations": list(data.caries_location_labels),
        "fluorosis_locations": list(data.fluorosis_location_labels),
        "ages": list(data.age_labels) if longitudinal else None,
    }
    with open(paths["manifest"], "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return {k: str(v) for k, v in paths.items()}


def load_dataset_with_manifest(manifest_path, response_paths, covariate_paths) -> PairedDataset:
    """Load with explicit label order taken from a dataset manifest."""
    try:
        with open(manifest_path) as f:
            m = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{manifest_path}: cannot parse manifest ({exc})") from exc
    spec = DatasetSpec(
        n_caries_categories=int(m["n_caries_categories"]),
        n_fluorosis_categories=int(m["n_fluorosis_categories"]),
        subjects=tuple(m["subjects"]),
        caries_locations=tuple(m["caries_locations"]),
        fluorosis_locations=tuple(m["fluorosis_locations"]),
        ages=tuple(m["ages"]) if m.get("ages") else None,
    )
    return load_dataset(response_paths, covariate_paths, spec)


_STAT_DTYPES = (
    ("accept_prob", "<f8"),
    ("tree_depth", "<i4"),
    ("n_leapfrog", "<i8"),
    ("divergent", "u1"),
    ("energy", "<f8"),
    ("step_size", "<f8"),
)


def save_draws(path, draws: PosteriorDraws, layout: ParamLayout,
               hyper: HyperParams, extra: dict | None = None):
    """Binary columnar draw store with a self-describing JSON header."""
    header = {
        "dim": draws.dim,
        "n_chains": draws.n_chains,
        "n_samples": draws.n_samples,
        "n_warmup": draws.n_warmup,
        "seed": draws.seed,
        "layout": [[e.name, e.start, list(e.shape)] for e in layout.entries],
        "hyper": {
            "sigma_a": hyper.sigma_a,
            "sigma_b": hyper.sigma_b,
            "cutpoint_sd": hyper.cutpoint_sd,
            "tau_mode": hyper.tau_mode,
        },
        "stats": [name for name, _ in _STAT_DTYPES],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(draws.positions, dtype="<f8").tobytes())
        for name, dtype in _STAT_DTYPES:
            f.write(np.ascontiguousarray(getattr(draws, name), dtype=dtype).tobytes())


def load_draws(path):
    """Inverse of :func:`save_draws`; returns (draws, layout, header)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    if raw[:8] != _MAGIC:
        raise DataError(f"{path}: not a draws file (bad magic)")
    version = struct.unpack("<I", raw[8:12])[0]
    if version != _VERSION:
        raise DataError(f"{path}: unsupported draws version {version}")
    n = struct.unpack("<Q", raw[12:20])[0]
    header = json.loads(raw[20:20 + n].decode("utf-8"))
    offset = 20 + n
    k, s, d = header["n_chains"], header["n_samples"], header["dim"]

    def take(count, dtype):
        nonlocal offset
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        return arr

    positions = take(k * s * d, "<f8").reshape(k, s, d).astype(np.float64)
    stats = {}
    casts = {"accept_prob": float, "tree_depth": np.int32, "n_leapfrog": np.int64,
             "divergent": bool, "energy": float, "step_size": float}
    for name, dtype in _STAT_DTYPES:
        stats[name] = take(k * s, dtype).reshape(k, s).astype(casts[name])
    layout = ParamLayout(entries=tuple(
        LayoutEntry(name=e[0], start=int(e[1]), shape=tuple(int(x) for x in e[2]))
        for e in header["layout"]
    ))
    draws = PosteriorDraws(
        positions=positions, n_warmup=int(header["n_warmup"]),
        seed=int(header["seed"]), **stats,
    )
    return draws, layout, header


def load_aggregation_map(source) -> AggregationMap:
    """AggregationMap from a JSON file path or an equivalent dict."""
    if isinstance(source, (str, Path)):
        try:
            with open(source) as f:
                obj = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{source}: cannot parse aggregation map ({exc})") from exc
    else:
        obj = source

    def side(key):
        try:
            return {
                loc: LocationInfo(
                    tooth=str(info["tooth"]), site=str(info["site"]),
                    tooth_class=str(info["class"]),
                )
                for loc, info in obj[key].items()
            }
        except (KeyError, TypeError) as exc:
            raise ConfigError(
                f"aggregation map needs {{'tooth','site','class'}} per {key} location"
            ) from exc

    return AggregationMap(caries=side("caries"), fluorosis=side("fluorosis"))


@dataclass
class RunConfig:
    """Validated run configuration resolved against the config file's
    directory."""

    data_paths: dict
    dataset_spec: DatasetSpec | None  # None when a manifest pins the labels
    manifest_path: str | None
    ranks: Ranks
    hyper: HyperParams
    nuts: NutsConfig
    output_dir: Path
    summary_level: float = 0.95
    aggmap: AggregationMap | None = None
    stratify_path: str | None = None
    stratify_column: str | None = None
    soft_fail_rhat: float | None = 1.05

    @classmethod
    def from_file(cls, path, preset: str | None = None,
                  output_dir=None, progress: bool = False) -> "RunConfig":
        path = Path(path)
        try:
            with open(path) as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot parse config ({exc})") from exc
        base = path.parent

        def resolve(p):
            p = Path(p)
            return str(p if p.is_absolute() else base / p)

        try:
            dsec = raw["data"]
            data_paths = {
                "caries": resolve(dsec["caries"]),
                "fluorosis": resolve(dsec["fluorosis"]),
                "covariates_occurrence": resolve(dsec["covariates_occurrence"]),
                "covariates_severity": resolve(dsec["covariates_severity"]),
            }
        except KeyError as exc:
            raise ConfigError(f"{path}: missing data path {exc}") from exc
        manifest = resolve(dsec["manifest"]) if dsec.get("manifest") else None
        spec = None
        if manifest is None:
            try:
                spec = DatasetSpec(
                    n_caries_categories=int(dsec["n_caries_categories"]),
                    n_fluorosis_categories=int(dsec["n_fluorosis_categories"]),
                )
            except KeyError as exc:
                raise ConfigError(
                    f"{path}: data section needs category counts or a manifest ({exc})"
                ) from exc
        for key, p in data_paths.items():
            if not Path(p).exists():
                raise ConfigError(f"{path}: data file for {key!r} not found: {p}")
        if manifest and not Path(manifest).exists():
            raise ConfigError(f"{path}: manifest not found: {manifest}")

        try:
            rsec = raw["ranks"]
            ranks = Ranks(
                occurrence=tuple(rsec["occurrence"]),
                severity=tuple(rsec["severity"]),
                fluorosis_spatial_occurrence=rsec.get("fluorosis_spatial_occurrence"),
                fluorosis_spatial_severity=rsec.get("fluorosis_spatial_severity"),
            )
        except (KeyError, TypeError, ShapeError, ValueError) as exc:
            raise ConfigError(f"{path}: invalid ranks section ({exc})") from exc

        try:
            hyper = HyperParams(**raw.get("hyper", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: invalid hyper section ({exc})") from exc

        nuts_args = dict(raw.get("nuts", {}))
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}")
            nuts_args.update(PRESETS[preset])
        nuts_args["progress"] = progress
        try:
            nuts = NutsConfig(**nuts_args)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: invalid nuts section ({exc})") from exc

        summary = raw.get("summary", {})
        level = float(summary.get("level", 0.95))
        if not 0.0 < level < 1.0:
            raise ConfigError(f"{path}: summary level must be in (0, 1)")
        aggmap = None
        if summary.get("aggregation"):
            src = summary["aggregation"]
            aggmap = load_aggregation_map(resolve(src) if isinstance(src, str) else src)
        stratify = summary.get("stratify") or {}
        stratify_path = resolve(stratify["path"]) if stratify.get("path") else None
        if stratify_path and not Path(stratify_path).exists():
            raise ConfigError(f"{path}: stratification file not found: {stratify_path}")
        if stratify and not stratify.get("column"):
            raise ConfigError(f"{path}: stratify section needs a 'column'")

        out = Path(output_dir) if output_dir else Path(resolve(raw.get("output_dir", "out")))
        soft = raw.get("soft_fail_rhat", 1.05)
        return cls(
            data_paths=data_paths, dataset_spec=spec, manifest_path=manifest,
            ranks=ranks, hyper=hyper, nuts=nuts, output_dir=out,
            summary_level=level, aggmap=aggmap,
            stratify_path=stratify_path,
            stratify_column=stratify.get("column"),
            soft_fail_rhat=None if soft is None else float(soft),
        )


def _load_configured_dataset(cfg: RunConfig) -> PairedDataset:
    responses = {"caries": cfg.data_paths["caries"], "fluorosis": cfg.data_paths["fluorosis"]}
    covariates = {
        "occurrence": cfg.data_paths["covariates_occurrence"],
        "severity": cfg.data_paths["covariates_severity"],
    }
    try:
        if cfg.manifest_path:
            return load_dataset_with_manifest(cfg.manifest_path, responses, covariates)
        return load_dataset(responses, covariates, cfg.dataset_spec)
    except (ShapeError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def _load_indicator(path, column, subjects):
    rows = _read_rows(path)
    line0, header = rows[0]
    if "subject_id" not in header:
        raise DataError(f"{path}:{line0}: missing subject_id column")
    if column not in header:
        raise DataError(f"{path}:{line0}: missing indicator column {column!r}")
    sid = header.index("subject_id")
    cid = header.index(column)
    values = {}
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields")
        try:
            values[row[sid]] = int(row[cid])
        except ValueError as exc:
            raise DataError(f"{path}:{line}: non-integer indicator") from exc
        if values[row[sid]] not in (0, 1):
            raise DataError(f"{path}:{line}: indicator must be 0 or 1")
    missing = [s for s in subjects if s not in values]
    if missing:
        raise DataError(f"{path}: no indicator for subjects {missing[:5]}")
    return np.array([values[s] for s in subjects], dtype=int)


def _write_diagnostics_csv(path, diag, layout):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["coordinate", "block", "split_rhat", "ess_bulk", "zero_variance"])
        for i in range(layout.dim):
            w.writerow([
                i, layout.block_of(i), _fmt(diag.split_rhat[i]),
                _fmt(diag.ess_bulk[i]), int(diag.zero_variance[i]),
            ])


def _write_summary_files(out_dir: Path, table: SummaryTable, prefix: str = "summary"):
    paths = []
    for unit_level in ("tooth", "class", "site"):
        sub = table.filter(unit_level=unit_level)
        p = out_dir / f"{prefix}_{unit_level}.csv"
        with open(p, "w", newline="") as f:
            sub.to_csv(f)
        paths.append(p)
    text_path = out_dir / f"{prefix}.txt"
    text_path.write_text(table.to_text())
    paths.append(text_path)
    return paths


def _summaries(cfg: RunConfig, draws, layout, data):
    aggmap = cfg.aggmap or AggregationMap.trivial_for(data)
    table = summarize(
        draws, data, layout=layout, aggmap=aggmap, level=cfg.summary_level
    )
    strata = None
    if cfg.stratify_path:
        indicator = _load_indicator(
            cfg.stratify_path, cfg.stratify_column, data.subject_labels
        )
        strata = stratified_summary(
            draws, data, indicator, layout=layout, aggmap=aggmap,
            level=cfg.summary_level,
        )
    return table, strata


def _write_all_summaries(cfg: RunConfig, table, strata):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_summary_files(cfg.output_dir, table)
    if strata is not None:
        for k, sub in enumerate(strata):
            _write_summary_files(cfg.output_dir, sub, prefix=f"summary_stratum{k}")


def run_fit(cfg: RunConfig) -> int:
    """Fit, write draws / diagnostics / summaries, return the exit code."""
    data = _load_configured_dataset(cfg)
    try:
        target = PosteriorTarget(data, cfg.ranks, cfg.hyper)
    except ShapeError as exc:
        raise ConfigError(f"ranks incompatible with data: {exc}") from exc
    n_threads = int(os.environ.get("LINKEDTUCKER_THREADS", "1"))
    draws = run_chains(cfg.nuts, target, n_threads=n_threads)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_draws(cfg.output_dir / "draws.bin", draws, target.layout, cfg.hyper)
    diag = diagnostics(draws)
    _write_diagnostics_csv(cfg.output_dir / "diagnostics.csv", diag, target.layout)
    table, strata = _summaries(cfg, draws, target.layout, data)
    _write_all_summaries(cfg, table, strata)
    active = ~diag.zero_variance
    max_rhat = float(diag.split_rhat[active].max()) if active.any() else 0.0
    report = {
        "n_divergent": diag.n_divergent,
        "max_split_rhat": max_rhat,
        "min_ess_bulk": float(diag.ess_bulk[active].min()) if active.any() else 0.0,
        "soft_fail_rhat": cfg.soft_fail_rhat,
    }
    status = EXIT_OK
    if cfg.soft_fail_rhat is not None and max_rhat > cfg.soft_fail_rhat:
        status = EXIT_DIAGNOSTICS
    report["exit_status"] = status
    with open(cfg.output_dir / "run.json", "w") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    return status


def run_summarize(draws_path, cfg: RunConfig) -> int:
    """Regenerate summary tables from stored draws without re-sampling."""
    draws, layout, _header = load_draws(draws_path)
    data = _load_configured_dataset(cfg)
    try:
        expected = layout_for(data, ranks_from_layout(layout),
                              "shared" if "log_global" in layout.names else "per-tensor")
    except ShapeError as exc:
        raise DataError(f"draws layout incompatible with dataset: {exc}") from exc
    if expected.names != layout.names or expected.dim != layout.dim:
        raise DataError("draws layout incompatible with dataset (layout mismatch)")
    table, strata = _summaries(cfg, draws, layout, data)
    _write_all_summaries(cfg, table, strata)
    return EXIT_OK
