"""Paired hurdle-ordinal observation model.

Each outcome (caries over tooth surfaces, fluorosis over tooth zones) is a
two-part model: a logistic hurdle for disease occurrence and a
proportional-odds model for the ordered severity level among positive
responses. Zeros arise only through the hurdle part.

Linear predictors come from four coefficient tensors that share a
subject-mode factor within each component (occurrence / severity) — the
linking mechanism that makes this a joint model for the two outcomes.

Responses may be missing; the log-likelihood sums only over observed
cells (missing-at-random with parameter distinctness). Missing entries
are stored as the reserved sentinel ``MISSING`` inside dense integer
arrays, so the observation mask is derivable for free.

All per-cell probabilities used by the likelihood are computed in the
log domain (stable log-sigmoid / log-difference-of-sigmoids forms) so
extreme linear predictors cannot produce catastrophic cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .tensors import DenseTensor, ShapeError, TuckerFactor, _tucker_reconstruct_array

__all__ = [
    "MISSING",
    "CutpointRaw",
    "CellProbabilities",
    "CoefficientBlock",
    "LinkedCoefficients",
    "CoefficientTensors",
    "PairedDataset",
    "cutpoints",
    "occurrence_prob",
    "log_occurrence_prob",
    "severity_pmf",
    "cell_pmf",
    "assemble_coefficients",
    "linear_predictors",
    "log_likelihood",
    "log_sigmoid",
    "log1mexp",
]

# Reserved sentinel for unobserved response cells.
MISSING = -1


def log_sigmoid(x):
    """log(1 / (1 + exp(-x))), stable for any finite x."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def log1mexp(x):
    """log(1 - exp(x)) for x < 0, stable near both 0 and -inf."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(
            x > -np.log(2.0),
            np.log(-np.expm1(np.minimum(x, -1e-300))),
            np.log1p(-np.exp(x)),
        )


@dataclass(frozen=True)
class CutpointRaw:
    """Unconstrained cutpoint parameters for a K-category outcome.

    ``values`` holds K-1 free reals; the first entry is a location offset
    and the remaining K-2 are log-increments (see :func:`cutpoints`).
    With K = 2 there is a single offset and zero cutpoints.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).ravel()
        if vals.size < 1:
            raise ShapeError("cutpoint raw vector needs at least one entry (K >= 2)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("cutpoint raw values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_categories(self) -> int:
        return self.values.size + 1


def cutpoints(raw: CutpointRaw) -> np.ndarray:
    """Ordered severity cutpoints from unconstrained raws.

    For K categories the output has length K-2 with
    ``alpha_u = sum(exp(raw[1:u+1])) - raw[0]``; the cumulative sum of
    exponentials makes the output strictly increasing for any finite
    input. Returns an empty vector when K = 2.
    """
    d = raw.values
    if d.size == 1:
        return np.empty(0)
    return np.cumsum(np.exp(d[1:])) - d[0]


def occurrence_prob(eta):
    """P(response > 0) = logistic(eta), in the stable branch form."""
    return expit(eta)


def log_occurrence_prob(eta):
    """log P(response > 0); never underflows to -inf for finite eta."""
    return log_sigmoid(eta)


def severity_pmf(eta: float, alphas: np.ndarray) -> np.ndarray:
    """Mass over positive categories 1..K-1 given the hurdle is crossed.

    ``alphas`` are the K-2 strictly increasing cutpoints; the
    proportional-odds model sets P(Y <= u | Y > 0) = logistic(alpha_u - eta).
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.size and np.any(np.diff(alphas) <= 0):
        raise ValueError(f"cutpoints must be strictly increasing, got {alphas}")
    cum = expit(alphas - eta)
    return np.diff(np.concatenate(([0.0], cum, [1.0])))


@dataclass(frozen=True)
class CellProbabilities:
    """Per-category mass for one response cell; entries sum to one."""

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=np.float64).ravel()
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @property
    def n_categories(self) -> int:
        return self.pmf.size

    @property
    def cdf(self) -> np.ndarray:
        """Cumulative masses P(Y <= u) = pi + (1 - pi) P(Y <= u | Y > 0)."""
        return np.cumsum(self.pmf)


def cell_pmf(eta_occ: float, eta_sev: float, alphas: np.ndarray) -> CellProbabilities:
    """Full hurdle-ordinal pmf over categories 0..K-1 for one cell.

    ``pmf[0] = 1 - logistic(eta_occ)`` and positive categories get
    ``logistic(eta_occ)`` times the conditional severity mass.
    """
    sev = severity_pmf(eta_sev, alphas)
    p_pos = expit(eta_occ)
    return CellProbabilities(pmf=np.concatenate(([expit(-eta_occ)], p_pos * sev)))


@dataclass(frozen=True)
class CoefficientBlock:
    """Tucker pieces for one outcome/component coefficient tensor.

    The subject-mode factor is not stored here: it lives on
    :class:`LinkedCoefficients` and is shared between the two outcomes of
    the same component.
    """

    spatial: np.ndarray  # (n_locations, R2)
    predictor: np.ndarray  # (n_predictors, R3)
    core: DenseTensor  # (R1, R2, R3) or (R1, R2, R3, R4)
    time: np.ndarray | None = None  # (n_times, R4) in longitudinal mode

    def __post_init__(self):
        spatial = np.asarray(self.spatial, dtype=np.float64)
        predictor = np.asarray(self.predictor, dtype=np.float64)
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "predictor", predictor)
        if self.time is not None:
            object.__setattr__(self, "time", np.asarray(self.time, dtype=np.float64))
        order = 4 if self.time is not None else 3
        if self.core.ndim != order:
            raise ShapeError(
                f"core must have order {order} "
                f"({'longitudinal' if order == 4 else 'cross-sectional'} mode), "
                f"got {self.core.ndim}"
            )
        expected = (self.core.dims[1], self.core.dims[2])
        if spatial.shape[1] != expected[0]:
            raise ShapeError(
                f"spatial factor has {spatial.shape[1]} columns, core expects {expected[0]}"
            )
        if predictor.shape[1] != expected[1]:
            raise ShapeError(
                f"predictor factor has {predictor.shape[1]} columns, core expects {expected[1]}"
            )
        if self.time is not None and self.time.shape[1] != self.core.dims[3]:
            raise ShapeError(
                f"time factor has {self.time.shape[1]} columns, core expects {self.core.dims[3]}"
            )

    @property
    def subject_rank(self) -> int:
        return self.core.dims[0]


_BLOCK_NAMES = ("caries_occurrence", "fluorosis_occurrence", "caries_severity", "fluorosis_severity")


@dataclass(frozen=True)
class LinkedCoefficients:
    """The four linked Tucker factorizations behind the coefficient tensors.

    Occurrence blocks of both outcomes share ``subject_occurrence``;
    severity blocks share ``subject_severity``. The spatial factors of the
    two outcomes are distinct objects with independent ranks because tooth
    surfaces and tooth zones are different measurement grids.
    """

    subject_occurrence: np.ndarray  # (n, R1_occ)
    subject_severity: np.ndarray  # (n, R1_sev)
    caries_occurrence: CoefficientBlock
    fluorosis_occurrence: CoefficientBlock
    caries_severity: CoefficientBlock
    fluorosis_severity: CoefficientBlock

    def __post_init__(self):
        s_occ = np.asarray(self.subject_occurrence, dtype=np.float64)
        s_sev = np.asarray(self.subject_severity, dtype=np.float64)
        object.__setattr__(self, "subject_occurrence", s_occ)
        object.__setattr__(self, "subject_severity", s_sev)
        if s_occ.ndim != 2 or s_sev.ndim != 2:
            raise ShapeError("subject factors must be 2-D")
        if s_occ.shape[0] != s_sev.shape[0]:
            raise ShapeError("subject factors must have the same number of rows")
        for name, subj in (
            ("caries_occurrence", s_occ),
            ("fluorosis_occurrence", s_occ),
            ("caries_severity", s_sev),
            ("fluorosis_severity", s_sev),
        ):
            block = getattr(self, name)
            if block.subject_rank != subj.shape[1]:
                raise ShapeError(
                    f"{name} core expects subject rank {block.subject_rank}, "
                    f"shared subject factor has {subj.shape[1]} columns"
                )
        times = {getattr(self, n).time is None for n in _BLOCK_NAMES}
        if len(times) != 1:
            raise ShapeError("all blocks must agree on cross-sectional vs longitudinal mode")

    @property
    def n_subjects(self) -> int:
        return self.subject_occurrence.shape[0]

    @property
    def longitudinal(self) -> bool:
        return self.caries_occurrence.time is not None

    def blocks(self):
        """(name, subject factor, block) triples in canonical order."""
        subj = {
            "caries_occurrence": self.subject_occurrence,
            "fluorosis_occurrence": self.subject_occurrence,
            "caries_severity": self.subject_severity,
            "fluorosis_severity": self.subject_severity,
        }
        return [(name, subj[name], getattr(self, name)) for name in _BLOCK_NAMES]


@dataclass(frozen=True)
class CoefficientTensors:
    """The four reconstructed coefficient arrays.

    Occurrence arrays have shape (n, n_locations, p_occ[, n_times]);
    severity arrays analogously with p_sev.
    """

    caries_occurrence: np.ndarray
    fluorosis_occurrence: np.ndarray
    caries_severity: np.ndarray
    fluorosis_severity: np.ndarray


def assemble_coefficients(lc: LinkedCoefficients) -> CoefficientTensors:
    """Reconstruct the four coefficient tensors from their Tucker pieces.

    Each tensor is the Tucker expansion of its block with the shared
    subject factor inserted as mode 0.
    """
    out = {}
    for name, subject, block in lc.blocks():
        factors = [subject, block.spatial, block.predictor]
        if block.time is not None:
            factors.append(block.time)
        tf = TuckerFactor(core=block.core, factors=tuple(factors))
        out[name] = _tucker_reconstruct_array(tf.core.array, tf.factors)
    return CoefficientTensors(**out)


@dataclass(frozen=True)
class PairedDataset:
    """Observed caries/fluorosis responses plus design matrices.

    Response arrays are integer-coded with values in ``{0..K-1}`` or the
    ``MISSING`` sentinel; shape (n, n_locations) cross-sectionally or
    (n, n_locations, n_times) longitudinally. Design matrices are
    (n, p) or (n, n_times, p). Location/age/covariate labels are optional
    metadata used by summaries and serialization.
    """

    caries: np.ndarray
    fluorosis: np.ndarray
    x_occ: np.ndarray
    x_sev: np.ndarray
    n_caries_categories: int
    n_fluorosis_categories: int
    subject_labels: tuple[str, ...] = ()
    caries_location_labels: tuple[str, ...] = ()
    fluorosis_location_labels: tuple[str, ...] = ()
    age_labels: tuple[str, ...] = ()
    occ_predictor_labels: tuple[str, ...] = ()
    sev_predictor_labels: tuple[str, ...] = ()

    def __post_init__(self):
        caries = np.asarray(self.caries)
        fluorosis = np.asarray(self.fluorosis)
        if not np.issubdtype(caries.dtype, np.integer):
            caries = caries.astype(np.int64)
        if not np.issubdtype(fluorosis.dtype, np.integer):
            fluorosis = fluorosis.astype(np.int64)
        x_occ = np.asarray(self.x_occ, dtype=np.float64)
        x_sev = np.asarray(self.x_sev, dtype=np.float64)
        if self.n_caries_categories < 2 or self.n_fluorosis_categories < 2:
            raise ValueError("category counts must be >= 2")
        if caries.ndim not in (2, 3) or fluorosis.ndim != caries.ndim:
            raise ShapeError("response arrays must both be 2-D or both 3-D")
        longitudinal = caries.ndim == 3
        want_x = 3 if longitudinal else 2
        if x_occ.ndim != want_x or x_sev.ndim != want_x:
            raise ShapeError(f"design matrices must be {want_x}-D to match responses")
        n = caries.shape[0]
        if fluorosis.shape[0] != n or x_occ.shape[0] != n or x_sev.shape[0] != n:
            raise ShapeError("subject dimension differs across arrays")
        if longitudinal:
            t = caries.shape[2]
            if fluorosis.shape[2] != t or x_occ.shape[1] != t or x_sev.shape[1] != t:
                raise ShapeError("time dimension differs across arrays")
        if not (np.all(np.isfinite(x_occ)) and np.all(np.isfinite(x_sev))):
            raise ValueError("design matrices contain non-finite values")
        for arr, k, name in (
            (caries, self.n_caries_categories, "caries"),
            (fluorosis, self.n_fluorosis_categories, "fluorosis"),
        ):
            bad = (arr != MISSING) & ((arr < 0) | (arr >= k))
            if np.any(bad):
                raise ValueError(
                    f"{name} responses outside 0..{k - 1} (or MISSING): "
                    f"found value {arr[bad].flat[0]}"
                )
        for arr in (caries, fluorosis, x_occ, x_sev):
            arr.setflags(write=False)
        object.__setattr__(self, "caries", caries)
        object.__setattr__(self, "fluorosis", fluorosis)
        object.__setattr__(self, "x_occ", x_occ)
        object.__setattr__(self, "x_sev", x_sev)
        labels = {
            "subject_labels": (self.subject_labels, n),
            "caries_location_labels": (self.caries_location_labels, caries.shape[1]),
            "fluorosis_location_labels": (self.fluorosis_location_labels, fluorosis.shape[1]),
            "age_labels": (self.age_labels, caries.shape[2] if longitudinal else 1),
            "occ_predictor_labels": (self.occ_predictor_labels, x_occ.shape[-1]),
            "sev_predictor_labels": (self.sev_predictor_labels, x_sev.shape[-1]),
        }
        defaults = {
            "subject_labels": "s",
            "caries_location_labels": "c",
            "fluorosis_location_labels": "f",
            "age_labels": "t",
            "occ_predictor_labels": "xo",
            "sev_predictor_labels": "xs",
        }
        for key, (given, size) in labels.items():
            given = tuple(str(g) for g in given)
            if given and len(given) != size:
                raise ShapeError(f"{key} has {len(given)} entries, expected {size}")
            if not given:
                given = tuple(f"{defaults[key]}{i}" for i in range(size))
            object.__setattr__(self, key, given)

    @property
    def n_subjects(self) -> int:
        return self.caries.shape[0]

    @property
    def longitudinal(self) -> bool:
        return self.caries.ndim == 3

    @property
    def n_times(self) -> int:
        return self.caries.shape[2] if self.longitudinal else 1

    @property
    def caries_mask(self) -> np.ndarray:
        """Boolean array, True where the caries response is observed."""
        return self.caries != MISSING

    @property
    def fluorosis_mask(self) -> np.ndarray:
        return self.fluorosis != MISSING


def linear_predictors(data: PairedDataset, lc: LinkedCoefficients):
    """Per-cell linear predictors for all four outcome/component pairs.

    Returns a dict with keys ``caries_occurrence``, ``fluorosis_occurrence``,
    ``caries_severity``, ``fluorosis_severity``; values have shape
    (n, n_locations[, n_times]).
    """
    coefs = assemble_coefficients(lc)
    designs = {
        "caries_occurrence": data.x_occ,
        "fluorosis_occurrence": data.x_occ,
        "caries_severity": data.x_sev,
        "fluorosis_severity": data.x_sev,
    }
    spec = "iqjt,itj->iqt" if data.longitudinal else "iqj,ij->iq"
    return {
        name: np.einsum(spec, getattr(coefs, name), designs[name])
        for name in designs
    }


def _check_model_shapes(data: PairedDataset, lc: LinkedCoefficients,
                        raw_c: CutpointRaw, raw_f: CutpointRaw):
    if lc.n_subjects != data.n_subjects:
        raise ShapeError(
            f"coefficients built for {lc.n_subjects} subjects, data has {data.n_subjects}"
        )
    if lc.longitudinal != data.longitudinal:
        raise ShapeError("coefficients and data disagree on longitudinal mode")
    checks = [
        (lc.caries_occurrence.spatial.shape[0], data.caries.shape[1], "caries locations"),
        (lc.fluorosis_occurrence.spatial.shape[0], data.fluorosis.shape[1], "fluorosis locations"),
        (lc.caries_occurrence.predictor.shape[0], data.x_occ.shape[-1], "occurrence predictors"),
        (lc.caries_severity.predictor.shape[0], data.x_sev.shape[-1], "severity predictors"),
        (lc.fluorosis_severity.predictor.shape[0], data.x_sev.shape[-1], "severity predictors"),
        (raw_c.n_categories, data.n_caries_categories, "caries categories"),
        (raw_f.n_categories, data.n_fluorosis_categories, "fluorosis categories"),
    ]
    if data.longitudinal:
        checks.append(
            (lc.caries_occurrence.time.shape[0], data.n_times, "time points")
        )
    for got, want, what in checks:
        if got != want:
            raise ShapeError(f"{what}: model has {got}, data has {want}")


def _cell_loglik_flat(y, eta_occ, eta_sev, alphas, k, want_grad):
    """Log-probabilities and derivatives for 1-D arrays of observed cells.

    Every positive-category mass is written in the single stable form
    ``sigmoid(a_hi) - sigmoid(a_lo)`` with ``a_hi = +inf`` above the top
    cutpoint and ``a_lo = -inf`` below the bottom one, so the boundary
    categories need no special casing:
    ``log p = logsig(a_hi) + logsig(-a_lo) + log(1 - exp(a_lo - a_hi))``.

    Returns (logp, d_eo, d_es, d_alpha); d_alpha (length k-2) is summed
    over cells. Gradient outputs are None when ``want_grad`` is false.
    """
    m = y.size
    pos = y > 0
    zero = ~pos
    logp = np.empty(m)
    logp[zero] = log_sigmoid(-eta_occ[zero])
    u = y[pos]
    es_p = eta_sev[pos]
    if k == 2:
        a_hi = np.full(u.size, np.inf)
        a_lo = np.full(u.size, -np.inf)
    else:
        a_hi = np.where(u <= k - 2, alphas[np.minimum(u - 1, k - 3)], np.inf) - es_p
        a_lo = np.where(u >= 2, alphas[np.maximum(u - 2, 0)], -np.inf) - es_p
    logp[pos] = (
        log_sigmoid(eta_occ[pos])
        + log_sigmoid(a_hi)
        + log_sigmoid(-a_lo)
        + log1mexp(a_lo - a_hi)
    )
    if not want_grad:
        return logp, None, None, None
    d_eo = np.empty(m)
    d_eo[zero] = -expit(eta_occ[zero])
    d_eo[pos] = expit(-eta_occ[pos])
    with np.errstate(over="ignore"):
        gap = np.expm1(a_hi - a_lo)  # >= 0, may overflow to inf
    inv_gap = np.where(np.isinf(gap), 0.0, 1.0 / gap)
    d_hi = expit(-a_hi) + inv_gap  # vanishes where a_hi = +inf
    d_lo = -expit(a_lo) - inv_gap  # vanishes where a_lo = -inf
    d_es = np.zeros(m)
    d_es[pos] = -(d_hi + d_lo)
    d_alpha = np.zeros(max(k - 2, 0))
    if k > 2:
        has_hi = u <= k - 2
        has_lo = u >= 2
        np.add.at(d_alpha, (u - 1)[has_hi], d_hi[has_hi])
        np.add.at(d_alpha, (u - 2)[has_lo], d_lo[has_lo])
    return logp, d_eo, d_es, d_alpha


class _CellWorkspace:
    """Precomputed index structure for repeated cell-likelihood evaluation.

    Categories and masks are fixed per dataset, so the splits into zero
    and positive cells and the cutpoint gather indices are computed once;
    per evaluation only floating-point work remains. The stable logistic
    terms of all cells are evaluated through one fused buffer to keep
    ufunc dispatch overhead off the sampler's hot path.
    """

    def __init__(self, y, k):
        y = np.asarray(y)
        self.k = int(k)
        self.m = y.size
        self.pos = np.flatnonzero(y > 0)
        self.zero = np.flatnonzero(y == 0)
        u = y[self.pos]
        self.n_pos = u.size
        if self.k > 2:
            self.has_hi = u <= self.k - 2
            self.has_lo = u >= 2
            self.hi_gather = np.minimum(u - 1, self.k - 3)
            self.lo_gather = np.maximum(u - 2, 0)
            self.hi_alpha_idx = (u - 1)[self.has_hi]
            self.lo_alpha_idx = (u - 2)[self.has_lo]

    def _thresholds(self, es_p, alphas):
        if self.k == 2:
            a_hi = np.full(self.n_pos, np.inf)
            a_lo = np.full(self.n_pos, -np.inf)
        else:
            a_hi = np.where(self.has_hi, alphas[self.hi_gather], np.inf) - es_p
            a_lo = np.where(self.has_lo, alphas[self.lo_gather], -np.inf) - es_p
        return a_hi, a_lo

    def compute(self, eo, es, alphas, want_grad):
        """(sum logp, d_eo, d_es, d_alpha) over the cells; gradient parts
        are None unless requested."""
        eo_z = eo[self.zero]
        eo_p = eo[self.pos]
        es_p = es[self.pos]
        a_hi, a_lo = self._thresholds(es_p, alphas)
        # one fused log-sigmoid evaluation for every logistic term
        buf = np.concatenate((-eo_z, eo_p, a_hi, -a_lo))
        ls = -np.logaddexp(0.0, -buf)
        n_z, n_p = eo_z.size, eo_p.size
        ls_pos = ls[n_z:n_z + n_p] + ls[n_z + n_p:n_z + 2 * n_p] + ls[n_z + 2 * n_p:]
        total = float(np.sum(ls[:n_z])) + float(np.sum(ls_pos + log1mexp(a_lo - a_hi)))
        if not want_grad:
            return total, None, None, None
        sig = expit(np.concatenate((eo_z, -eo_p, -a_hi, a_lo)))
        d_eo = np.zeros(self.m)
        d_eo[self.zero] = -sig[:n_z]
        d_eo[self.pos] = sig[n_z:n_z + n_p]
        with np.errstate(over="ignore"):
            gap = np.expm1(a_hi - a_lo)
        inv_gap = np.where(np.isinf(gap), 0.0, 1.0 / gap)
        d_hi = sig[n_z + n_p:n_z + 2 * n_p] + inv_gap
        d_lo = -sig[n_z + 2 * n_p:] - inv_gap
        d_es = np.zeros(self.m)
        d_es[self.pos] = -(d_hi + d_lo)
        d_alpha = np.zeros(max(self.k - 2, 0))
        if self.k > 2:
            np.add.at(d_alpha, self.hi_alpha_idx, d_hi[self.has_hi])
            np.add.at(d_alpha, self.lo_alpha_idx, d_lo[self.has_lo])
        return total, d_eo, d_es, d_alpha


def _outcome_cell_logprob(y, mask, eta_occ, eta_sev, alphas, k, want_grad):
    """Array-shaped wrapper over :func:`_cell_loglik_flat`.

    Masked cells contribute exactly zero to every output.
    """
    idx = np.flatnonzero(mask.ravel())
    logp_f, d_eo_f, d_es_f, d_alpha = _cell_loglik_flat(
        y.ravel()[idx], eta_occ.ravel()[idx], eta_sev.ravel()[idx],
        alphas, k, want_grad,
    )
    cell_logp = np.zeros(y.shape)
    cell_logp.ravel()[idx] = logp_f
    if not want_grad:
        return cell_logp, None, None, None
    d_eo = np.zeros(y.shape)
    d_eo.ravel()[idx] = d_eo_f
    d_es = np.zeros(y.shape)
    d_es.ravel()[idx] = d_es_f
    return cell_logp, d_eo, d_es, d_alpha


def cell_log_probabilities(data: PairedDataset, lc: LinkedCoefficients,
                           raw_c: CutpointRaw, raw_f: CutpointRaw):
    """Observed-cell log-probabilities for both outcomes.

    Returns (caries_logp, fluorosis_logp) arrays shaped like the response
    arrays, with exact zeros at missing cells.
    """
    _check_model_shapes(data, lc, raw_c, raw_f)
    eta = linear_predictors(data, lc)
    c_logp, _, _, _ = _outcome_cell_logprob(
        data.caries, data.caries_mask,
        eta["caries_occurrence"], eta["caries_severity"],
        cutpoints(raw_c), data.n_caries_categories, want_grad=False,
    )
    f_logp, _, _, _ = _outcome_cell_logprob(
        data.fluorosis, data.fluorosis_mask,
        eta["fluorosis_occurrence"], eta["fluorosis_severity"],
        cutpoints(raw_f), data.n_fluorosis_categories, want_grad=False,
    )
    return c_logp, f_logp


def log_likelihood(data: PairedDataset, lc: LinkedCoefficients,
                   raw_c: CutpointRaw, raw_f: CutpointRaw) -> float:
    """Observed-data log-likelihood; missing cells contribute exactly 0."""
    c_logp, f_logp = cell_log_probabilities(data, lc, raw_c, raw_f)
    return float(np.sum(c_logp) + np.sum(f_logp))
