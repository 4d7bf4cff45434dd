"""Unconstrained parameterization, prior log-densities, and the log-posterior.

The full model state is one flat vector. A :class:`ParamLayout` maps named
blocks (shared subject factors, per-block spatial/predictor/time factors,
core tensors, cutpoint raws, and log-scale shrinkage latents) to disjoint
contiguous slices covering the whole vector, so pack/unpack round-trips
are the identity bit for bit.

Priors
------
Core tensor elements get a horseshoe prior: Gaussian with an element-wise
half-Cauchy local scale and a half-Cauchy global scale per core tensor
(optionally one shared global scale). Scales are kept on the log scale
with explicit Jacobian terms so the whole state stays dense and
differentiable for the sampler. Factor-matrix entries get centered
Gaussians (scale ``sigma_a`` for caries-side and shared-subject factors,
``sigma_b`` for fluorosis-side factors); cutpoint raws get centered
Gaussians with standard deviation ``cutpoint_sd``.

The gradient is hand-derived reverse-mode accumulation through the
logistic terms, the linear predictors, and the Tucker contractions; the
finite-difference oracle in :func:`gradient_check` is the acceptance gate
for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .model import (
    MISSING,
    CoefficientBlock,
    CutpointRaw,
    LinkedCoefficients,
    PairedDataset,
    _CellWorkspace,
    cutpoints,
    log_likelihood,
)
from .tensors import DenseTensor, ShapeError

__all__ = [
    "Ranks",
    "HyperParams",
    "LayoutEntry",
    "ParamLayout",
    "ModelParams",
    "LogDensityResult",
    "layout_for",
    "ranks_from_layout",
    "unpack",
    "pack",
    "log_prior",
    "log_posterior",
    "grad_log_posterior",
    "PosteriorTarget",
    "finite_difference_gradient",
    "gradient_check",
]

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)

_BLOCKS = ("caries_occurrence", "fluorosis_occurrence", "caries_severity", "fluorosis_severity")


@dataclass(frozen=True)
class Ranks:
    """Multilinear ranks for the four coefficient blocks.

    ``occurrence`` and ``severity`` are (R1, R2, R3) cross-sectionally or
    (R1, R2, R3, R4) longitudinally, applying to the caries block of that
    component; the fluorosis block shares every rank except the spatial
    one, which defaults to the same value but may be set independently
    (tooth surfaces and tooth zones are different grids).
    """

    occurrence: tuple[int, ...]
    severity: tuple[int, ...]
    fluorosis_spatial_occurrence: int | None = None
    fluorosis_spatial_severity: int | None = None

    def __post_init__(self):
        occ = tuple(int(r) for r in self.occurrence)
        sev = tuple(int(r) for r in self.severity)
        if len(occ) not in (3, 4) or len(sev) != len(occ):
            raise ShapeError("rank tuples must both have 3 (cross-sectional) or 4 (longitudinal) entries")
        if any(r < 1 for r in occ + sev):
            raise ShapeError("all ranks must be >= 1")
        object.__setattr__(self, "occurrence", occ)
        object.__setattr__(self, "severity", sev)

    @property
    def longitudinal(self) -> bool:
        return len(self.occurrence) == 4

    def for_block(self, name: str) -> tuple[int, ...]:
        base = self.occurrence if name.endswith("occurrence") else self.severity
        if name.startswith("fluorosis"):
            spatial = (
                self.fluorosis_spatial_occurrence
                if name.endswith("occurrence")
                else self.fluorosis_spatial_severity
            )
            if spatial is not None:
                return (base[0], int(spatial)) + base[2:]
        return base


@dataclass(frozen=True)
class HyperParams:
    """Prior hyperparameters; defaults follow the model's sampling setup."""

    sigma_a: float = 1.0
    sigma_b: float = 1.0
    cutpoint_sd: float = 2.0
    tau_mode: str = "per-tensor"  # "per-tensor" or "shared"

    def __post_init__(self):
        if self.sigma_a <= 0 or self.sigma_b <= 0 or self.cutpoint_sd <= 0:
            raise ValueError("prior scales must be positive")
        if self.tau_mode not in ("per-tensor", "shared"):
            raise ValueError(f"unknown tau_mode {self.tau_mode!r}")


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape) if self.shape else 1

    @property
    def stop(self) -> int:
        return self.start + self.size


@dataclass(frozen=True)
class ParamLayout:
    """Named, disjoint slices covering one flat parameter vector."""

    entries: tuple[LayoutEntry, ...]

    def __post_init__(self):
        pos = 0
        by_name = {}
        for e in self.entries:
            if e.start != pos:
                raise ShapeError(f"layout entry {e.name} starts at {e.start}, expected {pos}")
            if e.name in by_name:
                raise ShapeError(f"duplicate layout entry {e.name}")
            by_name[e.name] = e
            pos = e.stop
        object.__setattr__(self, "_by_name", by_name)

    @property
    def dim(self) -> int:
        return self.entries[-1].stop if self.entries else 0

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def entry(self, name: str) -> LayoutEntry:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(name) from None

    def slice_of(self, name: str) -> slice:
        e = self.entry(name)
        return slice(e.start, e.stop)

    def view(self, v: np.ndarray, name: str) -> np.ndarray:
        e = self.entry(name)
        return v[e.start:e.stop].reshape(e.shape)

    def block_of(self, index: int) -> str:
        """Name of the entry containing flat coordinate ``index``."""
        for e in self.entries:
            if e.start <= index < e.stop:
                return e.name
        raise IndexError(index)


def layout_for(data: PairedDataset, ranks: Ranks, tau_mode: str = "per-tensor") -> ParamLayout:
    """Build the canonical parameter layout for a dataset and rank choice."""
    if ranks.longitudinal != data.longitudinal:
        raise ShapeError("ranks and dataset disagree on longitudinal mode")
    n = data.n_subjects
    dims = {
        "caries_occurrence": (data.caries.shape[1], data.x_occ.shape[-1]),
        "fluorosis_occurrence": (data.fluorosis.shape[1], data.x_occ.shape[-1]),
        "caries_severity": (data.caries.shape[1], data.x_sev.shape[-1]),
        "fluorosis_severity": (data.fluorosis.shape[1], data.x_sev.shape[-1]),
    }
    entries = []
    pos = 0

    def add(name, shape):
        nonlocal pos
        entries.append(LayoutEntry(name=name, start=pos, shape=tuple(shape)))
        pos += math.prod(shape) if shape else 1

    add("subject_occurrence", (n, ranks.occurrence[0]))
    add("subject_severity", (n, ranks.severity[0]))
    for name in _BLOCKS:
        r = ranks.for_block(name)
        n_loc, n_pred = dims[name]
        if r[1] > n_loc:
            raise ShapeError(f"{name} spatial rank {r[1]} exceeds {n_loc} locations")
        if r[2] > n_pred:
            raise ShapeError(f"{name} predictor rank {r[2]} exceeds {n_pred} predictors")
        if r[0] > n:
            raise ShapeError(f"{name} subject rank {r[0]} exceeds {n} subjects")
        add(f"{name}.spatial", (n_loc, r[1]))
        add(f"{name}.predictor", (n_pred, r[2]))
        if data.longitudinal:
            if r[3] > data.n_times:
                raise ShapeError(f"{name} time rank {r[3]} exceeds {data.n_times} time points")
            add(f"{name}.time", (data.n_times, r[3]))
        add(f"{name}.core", r)
        add(f"{name}.log_local", r)
        if tau_mode == "per-tensor":
            add(f"{name}.log_global", ())
    if tau_mode == "shared":
        add("log_global", ())
    add("cutpoints_caries", (data.n_caries_categories - 1,))
    add("cutpoints_fluorosis", (data.n_fluorosis_categories - 1,))
    return ParamLayout(entries=tuple(entries))


def ranks_from_layout(layout: ParamLayout) -> Ranks:
    """Recover the rank configuration recorded in a layout."""
    cores = {name: layout.entry(f"{name}.core").shape for name in _BLOCKS}
    return Ranks(
        occurrence=cores["caries_occurrence"],
        severity=cores["caries_severity"],
        fluorosis_spatial_occurrence=cores["fluorosis_occurrence"][1],
        fluorosis_spatial_severity=cores["fluorosis_severity"][1],
    )


def _tau_mode_of(layout: ParamLayout) -> str:
    return "shared" if "log_global" in layout.names else "per-tensor"


@dataclass(frozen=True)
class ModelParams:
    """Structured view of one unconstrained parameter vector."""

    coefficients: LinkedCoefficients
    raw_caries: CutpointRaw
    raw_fluorosis: CutpointRaw
    log_local: dict[str, np.ndarray]
    log_global: dict[str, float]


def unpack(v: np.ndarray, layout: ParamLayout) -> ModelParams:
    """Split a flat vector into the structured model parameters."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (layout.dim,):
        raise ShapeError(f"expected vector of length {layout.dim}, got shape {v.shape}")
    names = set(layout.names)
    longitudinal = "caries_occurrence.time" in names

    def block(name):
        return CoefficientBlock(
            spatial=layout.view(v, f"{name}.spatial"),
            predictor=layout.view(v, f"{name}.predictor"),
            time=layout.view(v, f"{name}.time") if longitudinal else None,
            core=DenseTensor.from_array(layout.view(v, f"{name}.core")),
        )

    lc = LinkedCoefficients(
        subject_occurrence=layout.view(v, "subject_occurrence"),
        subject_severity=layout.view(v, "subject_severity"),
        **{name: block(name) for name in _BLOCKS},
    )
    log_local = {name: layout.view(v, f"{name}.log_local").copy() for name in _BLOCKS}
    if _tau_mode_of(layout) == "shared":
        log_global = {"shared": float(layout.view(v, "log_global"))}
    else:
        log_global = {name: float(layout.view(v, f"{name}.log_global")) for name in _BLOCKS}
    return ModelParams(
        coefficients=lc,
        raw_caries=CutpointRaw(layout.view(v, "cutpoints_caries")),
        raw_fluorosis=CutpointRaw(layout.view(v, "cutpoints_fluorosis")),
        log_local=log_local,
        log_global=log_global,
    )


def pack(params: ModelParams, layout: ParamLayout) -> np.ndarray:
    """Inverse of :func:`unpack`; bit-for-bit round trip."""
    v = np.empty(layout.dim)
    lc = params.coefficients

    def put(name, value):
        sl = layout.slice_of(name)
        v[sl] = np.asarray(value, dtype=np.float64).ravel()

    put("subject_occurrence", lc.subject_occurrence)
    put("subject_severity", lc.subject_severity)
    for name in _BLOCKS:
        b = getattr(lc, name)
        put(f"{name}.spatial", b.spatial)
        put(f"{name}.predictor", b.predictor)
        if b.time is not None:
            put(f"{name}.time", b.time)
        put(f"{name}.core", b.core.data)
        put(f"{name}.log_local", params.log_local[name])
        if _tau_mode_of(layout) == "per-tensor":
            put(f"{name}.log_global", params.log_global[name])
    if _tau_mode_of(layout) == "shared":
        put("log_global", params.log_global["shared"])
    put("cutpoints_caries", params.raw_caries.values)
    put("cutpoints_fluorosis", params.raw_fluorosis.values)
    return v


@dataclass(frozen=True)
class LogDensityResult:
    value: float
    gradient: np.ndarray


def _prior_meta(layout: ParamLayout, hyper: HyperParams):
    """Precomputed index arrays for a fully vectorized prior evaluation.

    Gaussian coordinates (factors and cutpoint raws) carry a per-coordinate
    inverse variance; horseshoe coordinates are gathered across all four
    core tensors with a per-element pointer to their global-scale
    coordinate.
    """
    gauss_idx, gauss_inv_var, gauss_const = [], [], 0.0
    for name in layout.names:
        if name.startswith("cutpoints"):
            sd = hyper.cutpoint_sd
        elif name in ("subject_occurrence", "subject_severity"):
            sd = hyper.sigma_a
        elif name.endswith((".spatial", ".predictor", ".time")):
            sd = hyper.sigma_b if name.startswith("fluorosis") else hyper.sigma_a
        else:
            continue
        e = layout.entry(name)
        gauss_idx.append(np.arange(e.start, e.stop))
        gauss_inv_var.append(np.full(e.size, 1.0 / sd**2))
        gauss_const += -0.5 * e.size * (_LOG_2PI + 2.0 * math.log(sd))
    gauss_idx = np.concatenate(gauss_idx)
    gauss_inv_var = np.concatenate(gauss_inv_var)

    shared = _tau_mode_of(layout) == "shared"
    core_idx, local_idx, tau_of_elem = [], [], []
    tau_coords = []
    for name in _BLOCKS:
        ce = layout.entry(f"{name}.core")
        le = layout.entry(f"{name}.log_local")
        t_entry = layout.entry("log_global" if shared else f"{name}.log_global")
        core_idx.append(np.arange(ce.start, ce.stop))
        local_idx.append(np.arange(le.start, le.stop))
        tau_of_elem.append(np.full(ce.size, t_entry.start))
        if t_entry.start not in tau_coords:
            tau_coords.append(t_entry.start)
    meta = {
        "gauss_idx": gauss_idx,
        "gauss_inv_var": gauss_inv_var,
        "gauss_const": gauss_const,
        "core_idx": np.concatenate(core_idx),
        "local_idx": np.concatenate(local_idx),
        "tau_of_elem": np.concatenate(tau_of_elem),
        "tau_coords": np.array(tau_coords, dtype=int),
        "hs_const": -0.5 * sum(layout.entry(f"{n}.core").size for n in _BLOCKS) * _LOG_2PI,
    }
    return meta


def _half_cauchy_log_terms(log_scale):
    """log half-Cauchy density at exp(log_scale) plus the log-Jacobian."""
    log_scale = np.asarray(log_scale, dtype=np.float64)
    return _LOG_2_OVER_PI - np.logaddexp(0.0, 2.0 * log_scale) + log_scale


def _prior_value_grad(v, meta, grad=None) -> float:
    """Prior log-density; accumulates the gradient into ``grad`` if given."""
    x = v[meta["gauss_idx"]]
    xw = x * meta["gauss_inv_var"]
    total = meta["gauss_const"] - 0.5 * float(x @ xw)
    if grad is not None:
        grad[meta["gauss_idx"]] -= xw

    g = v[meta["core_idx"]]
    ll = v[meta["local_idx"]]
    lt = v[meta["tau_of_elem"]]
    inv_s2 = np.exp(-2.0 * (ll + lt))
    quad = g * g * inv_s2
    total += meta["hs_const"] - float(np.sum(lt)) - float(np.sum(ll))
    total += -0.5 * float(np.sum(quad))
    total += float(np.sum(_half_cauchy_log_terms(ll)))
    taus = v[meta["tau_coords"]]
    total += float(np.sum(_half_cauchy_log_terms(taus)))
    if grad is not None:
        grad[meta["core_idx"]] -= g * inv_s2
        grad[meta["local_idx"]] += quad - 2.0 * expit(2.0 * ll)
        np.add.at(grad, meta["tau_of_elem"], quad - 1.0)
        grad[meta["tau_coords"]] += 1.0 - 2.0 * expit(2.0 * taus)
    return total


def log_prior(v: np.ndarray, layout: ParamLayout, hyper: HyperParams = HyperParams()) -> float:
    """Joint log-prior of the flat parameter vector (with scale Jacobians)."""
    v = np.asarray(v, dtype=np.float64)
    return _prior_value_grad(v, _prior_meta(layout, hyper))


def log_posterior(v: np.ndarray, layout: ParamLayout, data: PairedDataset,
                  hyper: HyperParams = HyperParams()) -> float:
    """log prior plus observed-data log-likelihood."""
    params = unpack(v, layout)
    return log_prior(v, layout, hyper) + log_likelihood(
        data, params.coefficients, params.raw_caries, params.raw_fluorosis
    )


class _BlockGraph:
    """Forward/backward Tucker contraction graph for one coefficient block.

    All contractions are tiny, so the unoptimized einsum kernel (no path
    search) is the fastest option.
    """

    def __init__(self, longitudinal: bool):
        self.longitudinal = longitudinal

    @staticmethod
    def _e(spec, *ops):
        return np.einsum(spec, *ops, optimize=False)

    def forward(self, subject, spatial, predictor, time, core, design):
        if time is None:
            w = self._e("abc,qb,jc->aqj", core, spatial, predictor)
            eta = self._e("ia,aqj,ij->iq", subject, w, design)
        else:
            w = self._e("abcd,qb,jc,td->aqjt", core, spatial, predictor, time)
            eta = self._e("ia,aqjt,itj->iqt", subject, w, design)
        return w, eta

    def backward(self, g_eta, design, subject, spatial, predictor, time, core, w):
        if time is None:
            grads = {"subject": self._e("iq,ij,aqj->ia", g_eta, design, w)}
            up = self._e("iq,ij,ia->aqj", g_eta, design, subject)
            grads["core"] = self._e("aqj,qb,jc->abc", up, spatial, predictor)
            grads["spatial"] = self._e("aqj,abc,jc->qb", up, core, predictor)
            grads["predictor"] = self._e("aqj,abc,qb->jc", up, core, spatial)
        else:
            grads = {"subject": self._e("iqt,itj,aqjt->ia", g_eta, design, w)}
            up = self._e("iqt,itj,ia->aqjt", g_eta, design, subject)
            grads["core"] = self._e("aqjt,qb,jc,td->abcd", up, spatial, predictor, time)
            grads["spatial"] = self._e("aqjt,abcd,jc,td->qb", up, core, predictor, time)
            grads["predictor"] = self._e("aqjt,abcd,qb,td->jc", up, core, spatial, time)
            grads["time"] = self._e("aqjt,abcd,qb,jc->td", up, core, spatial, predictor)
        return grads


def _cutpoint_raw_grad(d_alpha: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Chain rule from cutpoint gradients back to the unconstrained raws."""
    out = np.zeros_like(raw)
    if d_alpha.size:
        out[0] = -float(np.sum(d_alpha))
        tail = np.cumsum(d_alpha[::-1])[::-1]
        out[1:] = np.exp(raw[1:]) * tail
    return out


class PosteriorTarget:
    """Callable log-posterior with gradient for a fixed dataset.

    Instances are safe to share across chains: every call works on
    per-call temporaries and the dataset arrays are read-only.

    Calling the target returns ``(value, gradient)``; :meth:`value` skips
    the gradient work.
    """

    def __init__(self, data: PairedDataset, ranks: Ranks,
                 hyper: HyperParams = HyperParams()):
        self.data = data
        self.ranks = ranks
        self.hyper = hyper
        self.layout = layout_for(data, ranks, hyper.tau_mode)
        self.dim = self.layout.dim
        self._graph = _BlockGraph(data.longitudinal)
        self._prior = _prior_meta(self.layout, hyper)
        self._designs = {
            "caries_occurrence": data.x_occ,
            "fluorosis_occurrence": data.x_occ,
            "caries_severity": data.x_sev,
            "fluorosis_severity": data.x_sev,
        }
        # observed-cell bookkeeping, gathered once
        self._cells = {}
        for outcome, resp, k in (
            ("caries", data.caries, data.n_caries_categories),
            ("fluorosis", data.fluorosis, data.n_fluorosis_categories),
        ):
            idx = np.flatnonzero(resp.ravel() != MISSING)
            self._cells[outcome] = (idx, _CellWorkspace(resp.ravel()[idx], k), resp.shape)
        self._views = {}
        for name in _BLOCKS:
            time_name = f"{name}.time"
            self._views[name] = (
                "subject_occurrence" if name.endswith("occurrence") else "subject_severity",
                f"{name}.spatial",
                f"{name}.predictor",
                time_name if time_name in self.layout.names else None,
                f"{name}.core",
            )

    @classmethod
    def from_layout(cls, data: PairedDataset, layout: ParamLayout,
                    hyper: HyperParams = HyperParams()) -> "PosteriorTarget":
        hyper = replace(hyper, tau_mode=_tau_mode_of(layout))
        target = cls(data, ranks_from_layout(layout), hyper)
        if target.layout.names != layout.names:
            raise ShapeError("layout does not match the dataset/ranks it was built for")
        return target

    def block_of(self, index: int) -> str:
        return self.layout.block_of(index)

    def _block_views(self, v, name):
        lo = self.layout
        subj_name, sp, pr, tm, co = self._views[name]
        return (
            lo.view(v, subj_name),
            lo.view(v, sp),
            lo.view(v, pr),
            lo.view(v, tm) if tm is not None else None,
            lo.view(v, co),
        )

    def _forward(self, v):
        etas, caches = {}, {}
        for name in _BLOCKS:
            subject, spatial, predictor, time, core = self._block_views(v, name)
            w, eta = self._graph.forward(
                subject, spatial, predictor, time, core, self._designs[name]
            )
            etas[name] = eta
            caches[name] = (subject, spatial, predictor, time, core, w)
        return etas, caches

    def _cell_terms(self, v, etas, want_grad):
        lo = self.layout
        out = {}
        for outcome in ("caries", "fluorosis"):
            idx, workspace, shape = self._cells[outcome]
            alphas = cutpoints(CutpointRaw(lo.view(v, f"cutpoints_{outcome}")))
            eo = etas[f"{outcome}_occurrence"].ravel()[idx]
            es = etas[f"{outcome}_severity"].ravel()[idx]
            total, d_eo, d_es, d_alpha = workspace.compute(eo, es, alphas, want_grad)
            if want_grad:
                g_occ = np.zeros(shape)
                g_occ.ravel()[idx] = d_eo
                g_sev = np.zeros(shape)
                g_sev.ravel()[idx] = d_es
            else:
                g_occ = g_sev = None
            out[outcome] = (total, g_occ, g_sev, d_alpha)
        return out

    def value(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        etas, _ = self._forward(v)
        cells = self._cell_terms(v, etas, want_grad=False)
        loglik = sum(terms[0] for terms in cells.values())
        return _prior_value_grad(v, self._prior) + loglik

    def value_and_grad(self, v):
        v = np.asarray(v, dtype=np.float64)
        lo = self.layout
        grad = np.zeros(self.dim)
        value = _prior_value_grad(v, self._prior, grad)
        etas, caches = self._forward(v)
        cells = self._cell_terms(v, etas, want_grad=True)
        g_eta = {
            "caries_occurrence": cells["caries"][1],
            "caries_severity": cells["caries"][2],
            "fluorosis_occurrence": cells["fluorosis"][1],
            "fluorosis_severity": cells["fluorosis"][2],
        }
        value += sum(terms[0] for terms in cells.values())
        for name in _BLOCKS:
            subject, spatial, predictor, time, core, w = caches[name]
            grads = self._graph.backward(
                g_eta[name], self._designs[name],
                subject, spatial, predictor, time, core, w,
            )
            subj_name = self._views[name][0]
            grad[lo.slice_of(subj_name)] += grads["subject"].ravel()
            grad[lo.slice_of(f"{name}.spatial")] += grads["spatial"].ravel()
            grad[lo.slice_of(f"{name}.predictor")] += grads["predictor"].ravel()
            grad[lo.slice_of(f"{name}.core")] += grads["core"].ravel()
            if time is not None:
                grad[lo.slice_of(f"{name}.time")] += grads["time"].ravel()
        for outcome in ("caries", "fluorosis"):
            raw = lo.view(v, f"cutpoints_{outcome}")
            grad[lo.slice_of(f"cutpoints_{outcome}")] += _cutpoint_raw_grad(
                cells[outcome][3], raw
            )
        return value, grad

    def __call__(self, v):
        return self.value_and_grad(v)


def grad_log_posterior(v: np.ndarray, layout: ParamLayout, data: PairedDataset,
                       hyper: HyperParams = HyperParams()) -> LogDensityResult:
    """Exact gradient of :func:`log_posterior` (value included)."""
    target = PosteriorTarget.from_layout(data, layout, hyper)
    value, grad = target.value_and_grad(v)
    return LogDensityResult(value=value, gradient=grad)


def finite_difference_gradient(f, v: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central finite differences with coordinate-scaled steps."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty(v.size)
    for i in range(v.size):
        h = rel_step * (1.0 + abs(v[i]))
        vp, vm = v.copy(), v.copy()
        vp[i] += h
        vm[i] -= h
        out[i] = (f(vp) - f(vm)) / (2.0 * h)
    return out


def gradient_check(target, n_points: int = 20, seed: int = 0, scale: float = 0.3) -> float:
    """Max relative error of the analytic gradient vs central differences.

    Relative error per coordinate is ``|g - fd| / max(1, |fd|)``; points
    are drawn from N(0, scale^2).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        v = scale * rng.standard_normal(target.dim)
        _, grad = target.value_and_grad(v)
        fd = finite_difference_gradient(target.value, v)
        err = np.abs(grad - fd) / np.maximum(1.0, np.abs(fd))
        worst = max(worst, float(err.max()))
    return worst
