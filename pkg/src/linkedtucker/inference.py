"""Post-hoc summarization of posterior draws.

Per-subject linear predictors at each location are projected onto the
span of the intercept-augmented design matrix, giving a population-level
coefficient vector per (location, draw). Projected draws are then
averaged across the locations of each tooth, and aggregated across teeth
within an anatomical class (and across teeth sharing a surface/zone
label) with one-dimensional Wasserstein barycenters computed exactly by
quantile averaging. Summaries are equal-tail credible intervals from
empirical quantiles.

Summaries are made only on these identified functionals, never on raw
factor matrices, which are not identified under Tucker rotations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr as _qr
from scipy.linalg import solve_triangular

from .model import PairedDataset
from .posterior import ParamLayout

__all__ = [
    "RankDeficiencyError",
    "LocationInfo",
    "AggregationMap",
    "ProjectedDraws",
    "SummaryRow",
    "SummaryTable",
    "projection_matrix",
    "project_draws",
    "average_within_tooth",
    "wasserstein_barycenter_1d",
    "credible_interval",
    "linear_predictor_draws",
    "summarize",
    "stratified_summary",
]

_BLOCKS = ("caries_occurrence", "fluorosis_occurrence", "caries_severity", "fluorosis_severity")


class RankDeficiencyError(ValueError):
    """Raised when the augmented design matrix is rank deficient."""

    def __init__(self, message, columns):
        super().__init__(message)
        self.columns = tuple(columns)


def projection_matrix(x, column_names=None) -> np.ndarray:
    """Least-squares projector onto the intercept-augmented design.

    For a design ``x`` of shape (n, p), forms ``X1 = [1 | x]`` and returns
    the (p+1, n) matrix ``(X1' X1)^-1 X1'``, computed through a pivoted QR
    factorization rather than the normal equations. ``P @ X1`` is the
    identity for any full-column-rank design.

    Raises
    ------
    RankDeficiencyError
        Naming the dependent columns; there is no silent pseudo-inverse.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"design must be 2-D, got shape {x.shape}")
    n, p = x.shape
    x1 = np.column_stack([np.ones(n), x])
    m = p + 1
    if n < m:
        raise RankDeficiencyError(
            f"design has {n} rows but {m} augmented columns", range(m)
        )
    q, r, piv = _qr(x1, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, m) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < m:
        if column_names is None:
            column_names = ["intercept"] + [f"x{j}" for j in range(p)]
        dependent = [column_names[j] for j in sorted(piv[rank:])]
        raise RankDeficiencyError(
            "augmented design is rank deficient; dependent columns: "
            + ", ".join(map(str, dependent)),
            dependent,
        )
    pmat = np.empty((m, n))
    pmat[piv] = solve_triangular(r, q.T)
    return pmat


def project_draws(linpred_draws, p_matrix) -> np.ndarray:
    """Apply the projector to per-draw linear predictor vectors.

    ``linpred_draws`` has shape (n_draws, n_subjects); the result has
    shape (n_draws, p+1) and is linear in the draws.
    """
    linpred_draws = np.asarray(linpred_draws, dtype=np.float64)
    p_matrix = np.asarray(p_matrix, dtype=np.float64)
    if linpred_draws.ndim != 2 or linpred_draws.shape[1] != p_matrix.shape[1]:
        raise ValueError(
            f"draws of shape {linpred_draws.shape} do not match projector "
            f"{p_matrix.shape}"
        )
    return linpred_draws @ p_matrix.T


@dataclass(frozen=True)
class ProjectedDraws:
    """Projected coefficient draws keyed by spatial unit."""

    coef_names: tuple[str, ...]
    values: dict[str, np.ndarray]  # unit -> (n_draws, p+1)


def average_within_tooth(projected: ProjectedDraws, grouping: dict) -> ProjectedDraws:
    """Per-draw arithmetic mean of projected draws over each group.

    ``grouping`` maps every location key of ``projected`` to its tooth.
    """
    members: dict[str, list] = {}
    for loc in projected.values:
        if loc not in grouping:
            raise KeyError(f"location {loc!r} missing from the tooth grouping")
        members.setdefault(grouping[loc], []).append(loc)
    out = {}
    for tooth in members:
        stack = np.stack([projected.values[loc] for loc in members[tooth]])
        out[tooth] = stack.mean(axis=0)
    return ProjectedDraws(coef_names=projected.coef_names, values=out)


def _mid_quantiles(sorted_samples: np.ndarray, m_out: int) -> np.ndarray:
    """Empirical quantile function at the mid-quantiles (k - 1/2) / m_out."""
    m = sorted_samples.shape[-1]
    probs = (np.arange(1, m_out + 1) - 0.5) / m_out
    idx = np.minimum(np.ceil(probs * m).astype(int) - 1, m - 1)
    idx = np.maximum(idx, 0)
    return sorted_samples[..., idx]


def wasserstein_barycenter_1d(samples, m_out=None) -> np.ndarray:
    """W2 barycenter of equal-weight 1-D empirical distributions.

    Computed exactly by quantile averaging: each input's empirical
    quantile function is evaluated at the mid-quantiles (k - 1/2)/m_out
    and the evaluations are averaged pointwise. The output is sorted.
    With identical inputs of size m_out the inputs are reproduced, and
    shifting every input by a constant shifts the output by the same
    constant.
    """
    samples = [np.sort(np.asarray(s, dtype=np.float64).ravel()) for s in samples]
    if not samples:
        raise ValueError("need at least one sample set")
    if any(s.size == 0 for s in samples):
        raise ValueError("sample sets must be non-empty")
    if m_out is None:
        m_out = max(s.size for s in samples)
    evals = np.stack([_mid_quantiles(s, m_out) for s in samples])
    return evals.mean(axis=0)


def credible_interval(samples, level: float = 0.95):
    """Equal-tail interval from empirical quantiles.

    Quantiles use linear interpolation between order statistics with
    plotting position (k-1)/(m-1), so results are reproducible exactly.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        raise ValueError("need at least 2 samples for an interval")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


@dataclass(frozen=True)
class LocationInfo:
    """Anatomy of one measurement location."""

    tooth: str
    site: str  # surface (caries) or zone (fluorosis) label
    tooth_class: str  # anatomical class, e.g. incisor/canine/premolar/molar


@dataclass(frozen=True)
class AggregationMap:
    """Location anatomy per outcome, keyed by location label."""

    caries: dict[str, LocationInfo]
    fluorosis: dict[str, LocationInfo]

    @classmethod
    def trivial_for(cls, data: PairedDataset) -> "AggregationMap":
        """Fallback map: each location is its own tooth in one class."""

        def one(labels):
            return {
                lab: LocationInfo(tooth=f"tooth_{lab}", site=lab, tooth_class="all")
                for lab in labels
            }

        return cls(
            caries=one(data.caries_location_labels),
            fluorosis=one(data.fluorosis_location_labels),
        )

    def for_outcome(self, outcome: str) -> dict:
        return self.caries if outcome == "caries" else self.fluorosis


@dataclass(frozen=True)
class SummaryRow:
    """Interval summary for one (outcome, component, unit, age) cell."""

    outcome: str
    component: str
    unit_level: str  # "tooth", "class", or "site"
    unit: str
    age: str
    coef_names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != upper.shape or lower.shape != (len(self.coef_names),):
            raise ValueError("interval arrays must match the coefficient names")
        if np.any(lower > upper):
            raise ValueError("interval lower bounds exceed upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def excludes_zero(self) -> np.ndarray:
        return (self.lower > 0.0) | (self.upper < 0.0)


@dataclass(frozen=True)
class SummaryTable:
    """All summary rows of one run, serializable to CSV and text."""

    rows: tuple[SummaryRow, ...]
    level: float = 0.95

    def filter(self, unit_level=None) -> "SummaryTable":
        rows = tuple(r for r in self.rows if unit_level is None or r.unit_level == unit_level)
        return SummaryTable(rows=rows, level=self.level)

    def to_csv(self, fileobj):
        """Long-format CSV: one line per (row, predictor)."""
        writer = csv.writer(fileobj, lineterminator="\n")
        writer.writerow(
            ["outcome", "component", "unit_level", "unit", "age",
             "predictor", "lower", "upper", "excludes_zero"]
        )
        for r in self.rows:
            flags = r.excludes_zero
            for j, name in enumerate(r.coef_names):
                writer.writerow(
                    [r.outcome, r.component, r.unit_level, r.unit, r.age,
                     name, repr(float(r.lower[j])), repr(float(r.upper[j])),
                     int(flags[j])]
                )

    def to_text(self) -> str:
        """Fixed-width table: one interval per predictor, '*' marks
        intervals that exclude zero."""
        groups: dict[tuple, list] = {}
        for r in self.rows:
            groups.setdefault((r.outcome, r.component, r.coef_names), []).append(r)
        lines = []
        for (outcome, component, names), rows in groups.items():
            lines.append(f"== {outcome} / {component} ==")
            cells = [["level", "unit", "age"] + list(names)]
            for r in rows:
                row = [r.unit_level, r.unit, r.age]
                for j in range(len(names)):
                    star = "*" if r.excludes_zero[j] else " "
                    row.append(f"({r.lower[j]:.3f}, {r.upper[j]:.3f}){star}")
                cells.append(row)
            widths = [max(len(c[k]) for c in cells) for k in range(len(cells[0]))]
            for c in cells:
                lines.append("  ".join(s.ljust(w) for s, w in zip(c, widths)))
            lines.append("")
        return "\n".join(lines)


def _chunked_block_eta(positions, layout, data, name, chunk=2048):
    """Linear-predictor draws for one block: (n_draws, n, Q[, A])."""
    subj_name = "subject_occurrence" if name.endswith("occurrence") else "subject_severity"
    design = data.x_occ if name.endswith("occurrence") else data.x_sev
    longitudinal = data.longitudinal
    n_draws = positions.shape[0]

    def views(vs, entry):
        e = layout.entry(entry)
        return vs[:, e.start:e.stop].reshape((vs.shape[0],) + e.shape)

    chunks = []
    for start in range(0, n_draws, chunk):
        vs = positions[start:start + chunk]
        subject = views(vs, subj_name)
        spatial = views(vs, f"{name}.spatial")
        predictor = views(vs, f"{name}.predictor")
        core = views(vs, f"{name}.core")
        if longitudinal:
            time = views(vs, f"{name}.time")
            eta = np.einsum(
                "sabcd,sia,sqb,sjc,std,itj->siqt",
                core, subject, spatial, predictor, time, design,
                optimize=True,
            )
        else:
            eta = np.einsum(
                "sabc,sia,sqb,sjc,ij->siq",
                core, subject, spatial, predictor, design,
                optimize=True,
            )
        chunks.append(eta)
    return np.concatenate(chunks, axis=0)


def linear_predictor_draws(draws, layout: ParamLayout, data: PairedDataset) -> dict:
    """Per-draw, per-cell linear predictors for all four blocks.

    ``draws`` is a PosteriorDraws or an (n_draws, dim) array. Values are
    arrays of shape (n_draws, n_subjects, n_locations[, n_ages]).
    """
    positions = draws if isinstance(draws, np.ndarray) else draws.flat()
    if positions.ndim != 2 or positions.shape[1] != layout.dim:
        raise ValueError(
            f"draw matrix of shape {positions.shape} does not match layout "
            f"dimension {layout.dim}"
        )
    return {name: _chunked_block_eta(positions, layout, data, name) for name in _BLOCKS}


def _design_for_age(design, age_index, longitudinal):
    return design[:, age_index, :] if longitudinal else design


def _nonconstant_columns(x):
    """Indices of columns that vary; constant columns duplicate the
    explicit intercept added by the projection."""
    return [j for j in range(x.shape[1]) if np.ptp(x[:, j]) > 0.0]


def _project_locations(x_age, names, subjects):
    """Projector and coefficient names for one (component, age, stratum).

    Constant design columns are dropped before augmenting: the explicit
    intercept column added by the projection covers them.
    """
    keep = _nonconstant_columns(x_age[subjects])
    coef_names = ("intercept",) + tuple(names[j] for j in keep)
    pmat = projection_matrix(
        x_age[np.ix_(subjects, keep)], column_names=list(coef_names)
    )
    return pmat, coef_names


def _interval_rows(outcome, component, unit_level, units, age, coef_names, level):
    rows = []
    for unit, draws in units.items():
        lo = np.empty(len(coef_names))
        hi = np.empty(len(coef_names))
        for j in range(len(coef_names)):
            lo[j], hi[j] = credible_interval(draws[:, j], level)
        rows.append(
            SummaryRow(
                outcome=outcome, component=component, unit_level=unit_level,
                unit=unit, age=age, coef_names=coef_names, lower=lo, upper=hi,
            )
        )
    return rows


def _group_barycenters(projected: ProjectedDraws, group_of: dict, m_out: int) -> dict:
    """Coordinate-wise barycenters of projected draws across a grouping."""
    members: dict[str, list] = {}
    for unit in projected.values:
        members.setdefault(group_of[unit], []).append(unit)
    out = {}
    for group, units in members.items():
        stacks = [projected.values[u] for u in units]
        n_coef = stacks[0].shape[1]
        bary = np.empty((m_out, n_coef))
        for j in range(n_coef):
            bary[:, j] = wasserstein_barycenter_1d([s[:, j] for s in stacks], m_out)
        out[group] = bary
    return out


def summarize(draws, data: PairedDataset, *, layout: ParamLayout,
              aggmap: AggregationMap | None = None, level: float = 0.95,
              bary_size: int | None = None, subjects=None) -> SummaryTable:
    """Full projection / averaging / barycenter / interval pipeline.

    Emits rows at three aggregation levels per (outcome, component, age):
    per tooth (mean over its locations), per anatomical class (barycenter
    over the class's teeth), and per surface/zone label (barycenter over
    teeth sharing that label). ``subjects`` restricts the projection to a
    subset of subject indices (used by stratified summaries).
    """
    if aggmap is None:
        aggmap = AggregationMap.trivial_for(data)
    positions = draws if isinstance(draws, np.ndarray) else draws.flat()
    n_draws = positions.shape[0]
    if bary_size is None:
        bary_size = n_draws
    if subjects is None:
        subjects = np.arange(data.n_subjects)
    subjects = np.asarray(subjects, dtype=int)
    if subjects.size == 0:
        raise ValueError("subject subset is empty")
    etas = linear_predictor_draws(positions, layout, data)
    ages = data.age_labels
    rows = []
    for name in _BLOCKS:
        outcome, component = name.split("_")
        loc_labels = (
            data.caries_location_labels if outcome == "caries"
            else data.fluorosis_location_labels
        )
        locmap = aggmap.for_outcome(outcome)
        missing = [lab for lab in loc_labels if lab not in locmap]
        if missing:
            raise KeyError(
                f"aggregation map lacks {outcome} locations: {', '.join(missing)}"
            )
        design = data.x_occ if component == "occurrence" else data.x_sev
        names = (
            data.occ_predictor_labels if component == "occurrence"
            else data.sev_predictor_labels
        )
        eta = etas[name]
        for a, age in enumerate(ages):
            x_age = _design_for_age(design, a, data.longitudinal)
            pmat, coef_names = _project_locations(x_age, names, subjects)
            per_loc = {}
            for qi, lab in enumerate(loc_labels):
                c = eta[:, subjects, qi, a] if data.longitudinal else eta[:, subjects, qi]
                per_loc[lab] = project_draws(c, pmat)
            projected = ProjectedDraws(coef_names=coef_names, values=per_loc)
            by_tooth = average_within_tooth(
                projected, {lab: locmap[lab].tooth for lab in loc_labels}
            )
            rows += _interval_rows(
                outcome, component, "tooth", by_tooth.values, age, coef_names, level
            )
            tooth_class = {
                locmap[lab].tooth: locmap[lab].tooth_class for lab in loc_labels
            }
            by_class = _group_barycenters(by_tooth, tooth_class, bary_size)
            rows += _interval_rows(
                outcome, component, "class", by_class, age, coef_names, level
            )
            site_of = {lab: locmap[lab].site for lab in loc_labels}
            by_site = _group_barycenters(projected, site_of, bary_size)
            rows += _interval_rows(
                outcome, component, "site", by_site, age, coef_names, level
            )
    return SummaryTable(rows=tuple(rows), level=level)


def stratified_summary(draws, data: PairedDataset, indicator, *,
                       layout: ParamLayout, aggmap: AggregationMap | None = None,
                       level: float = 0.95, bary_size: int | None = None):
    """The full pipeline run separately on two subject strata.

    ``indicator`` assigns every subject to stratum 0 or 1 (array of
    length n_subjects). Returns (stratum0_table, stratum1_table).
    """
    indicator = np.asarray(indicator, dtype=int).ravel()
    if indicator.size != data.n_subjects:
        raise ValueError(
            f"indicator has {indicator.size} entries for {data.n_subjects} subjects"
        )
    if not np.all(np.isin(indicator, (0, 1))):
        raise ValueError("indicator entries must be 0 or 1")
    strata = [np.flatnonzero(indicator == k) for k in (0, 1)]
    if any(s.size == 0 for s in strata):
        raise ValueError("both strata must be non-empty")
    return tuple(
        summarize(
            draws, data, layout=layout, aggmap=aggmap, level=level,
            bary_size=bary_size, subjects=s,
        )
        for s in strata
    )
