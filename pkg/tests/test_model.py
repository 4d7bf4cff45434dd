import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from linkedtucker.model import (
    MISSING,
    CoefficientBlock,
    CutpointRaw,
    LinkedCoefficients,
    PairedDataset,
    assemble_coefficients,
    cell_pmf,
    cutpoints,
    linear_predictors,
    log_likelihood,
    log_occurrence_prob,
    occurrence_prob,
    severity_pmf,
)
from linkedtucker.tensors import DenseTensor, ShapeError


def make_linked(rng, n=3, qc=2, qf=2, po=2, ps=2, ranks=(1, 1, 1), n_times=None):
    """Random LinkedCoefficients with all blocks at the same ranks."""
    r1, r2, r3 = ranks

    def block(n_loc, p):
        core_shape = (r1, r2, r3) if n_times is None else (r1, r2, r3, 1)
        return CoefficientBlock(
            spatial=rng.standard_normal((n_loc, r2)),
            predictor=rng.standard_normal((p, r3)),
            time=None if n_times is None else rng.standard_normal((n_times, 1)),
            core=DenseTensor.from_array(rng.standard_normal(core_shape)),
        )

    return LinkedCoefficients(
        subject_occurrence=rng.standard_normal((n, r1)),
        subject_severity=rng.standard_normal((n, r1)),
        caries_occurrence=block(qc, po),
        fluorosis_occurrence=block(qf, po),
        caries_severity=block(qc, ps),
        fluorosis_severity=block(qf, ps),
    )


def reference_log_likelihood(data, lc, raw_c, raw_f):
    """Straight-line observed-data log-likelihood, independent of the
    production code path: coefficients by explicit nested-loop Tucker
    sums, probabilities in the plain (non-log) domain."""

    def coef_entry(subject, block, i, q, j, t=None):
        core = block.core.array
        total = 0.0
        ranks = core.shape
        import itertools

        for z in itertools.product(*map(range, ranks)):
            term = core[z] * subject[i, z[0]] * block.spatial[q, z[1]] * block.predictor[j, z[2]]
            if t is not None:
                term *= block.time[t, z[3]]
            total += term
        return total

    def alphas_of(raw):
        d = raw.values
        return [sum(math.exp(d[j]) for j in range(1, u + 1)) - d[0] for u in range(1, d.size)]

    def cell_prob(eo, es, alphas, k, y):
        p_pos = 1.0 / (1.0 + math.exp(-eo))
        if y == 0:
            return 1.0 - p_pos
        cum = [1.0 / (1.0 + math.exp(-(a - es))) for a in alphas]
        cum = [0.0] + cum + [1.0]
        return p_pos * (cum[y] - cum[y - 1])

    total = 0.0
    pairs = [
        ("caries", data.caries, data.n_caries_categories, raw_c,
         lc.caries_occurrence, lc.caries_severity),
        ("fluorosis", data.fluorosis, data.n_fluorosis_categories, raw_f,
         lc.fluorosis_occurrence, lc.fluorosis_severity),
    ]
    for _, resp, k, raw, occ_block, sev_block in pairs:
        alphas = alphas_of(raw)
        for i in range(resp.shape[0]):
            for q in range(resp.shape[1]):
                times = range(resp.shape[2]) if resp.ndim == 3 else [None]
                for t in times:
                    y = resp[i, q] if t is None else resp[i, q, t]
                    if y == MISSING:
                        continue
                    xo = data.x_occ[i] if t is None else data.x_occ[i, t]
                    xs = data.x_sev[i] if t is None else data.x_sev[i, t]
                    eo = sum(
                        coef_entry(lc.subject_occurrence, occ_block, i, q, j, t) * xo[j]
                        for j in range(xo.size)
                    )
                    es = sum(
                        coef_entry(lc.subject_severity, sev_block, i, q, j, t) * xs[j]
                        for j in range(xs.size)
                    )
                    total += math.log(cell_prob(eo, es, alphas, k, y))
    return total


class TestCutpoints:
    def test_k3_zero_raws(self):
        np.testing.assert_allclose(cutpoints(CutpointRaw([0.0, 0.0])), [1.0])

    def test_k4_example(self):
        got = cutpoints(CutpointRaw([1.0, 0.0, 1.0]))
        np.testing.assert_allclose(got, [0.0, math.e], atol=1e-12)

    def test_k2_empty(self):
        assert cutpoints(CutpointRaw([0.7])).size == 0

    def test_strictly_increasing_many_seeds(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            raw = CutpointRaw(rng.normal(scale=3.0, size=6))
            alphas = cutpoints(raw)
            assert np.all(np.diff(alphas) > 0)

    # range matches plausible draws under the N(0, 4) prior; spreads much
    # wider than exp(16) between increments fall below float64 resolution
    @given(st.lists(st.floats(-8, 8), min_size=2, max_size=8))
    def test_strictly_increasing_property(self, vals):
        alphas = cutpoints(CutpointRaw(np.array(vals)))
        assert np.all(np.diff(alphas) > 0)


class TestOccurrenceProb:
    def test_zero(self):
        assert occurrence_prob(0.0) == 0.5

    def test_saturation_no_overflow(self):
        assert occurrence_prob(40.0) == pytest.approx(1.0, abs=1e-15)

    def test_log_domain_against_mpmath(self):
        import mpmath

        mpmath.mp.dps = 50
        for eta in (-40.0, -5.3, 0.0, 2.2, 40.0):
            want = float(mpmath.log(1 / (1 + mpmath.exp(-mpmath.mpf(eta)))))
            assert log_occurrence_prob(eta) == pytest.approx(want, rel=1e-14)
        # no underflow to exactly zero
        assert occurrence_prob(-40.0) == pytest.approx(4.248354255291589e-18, rel=1e-12)
        assert occurrence_prob(-40.0) > 0.0


class TestSeverityPmf:
    def test_symmetric_single_cutpoint(self):
        np.testing.assert_allclose(severity_pmf(0.0, [0.0]), [0.5, 0.5])

    def test_two_cutpoints(self):
        got = severity_pmf(0.0, [-1.0, 1.0])
        want = [expit(-1), expit(1) - expit(-1), 1 - expit(1)]
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_large_eta_top_category(self):
        got = severity_pmf(50.0, [-1.0, 0.0, 1.0])
        assert got[-1] == pytest.approx(1.0, abs=1e-15)
        assert np.all(got[:-1] < 1e-15)

    def test_non_increasing_alphas_rejected(self):
        with pytest.raises(ValueError):
            severity_pmf(0.0, [1.0, 1.0])

    def test_k2_trivial(self):
        np.testing.assert_allclose(severity_pmf(1.3, []), [1.0])


class TestCellPmf:
    def test_symmetric_example(self):
        got = cell_pmf(0.0, 0.0, [0.0]).pmf
        np.testing.assert_allclose(got, [0.5, 0.25, 0.25])

    def test_hurdle_closed(self):
        got = cell_pmf(-50.0, 0.0, [0.0]).pmf
        assert got[0] == pytest.approx(1.0, abs=1e-15)
        assert np.all(got[1:] < 1e-15)

    def test_sums_to_one_random(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            alphas = np.sort(rng.normal(scale=2, size=3))
            while np.any(np.diff(alphas) == 0):
                alphas = np.sort(rng.normal(scale=2, size=3))
            p = cell_pmf(rng.normal(scale=4), rng.normal(scale=4), alphas)
            assert abs(p.pmf.sum() - 1.0) < 1e-12
            assert np.all(p.pmf >= 0)

    def test_cdf_matches_hurdle_identity(self):
        p = cell_pmf(0.3, -0.2, [-0.5, 0.8])
        pi = p.pmf[0]
        cond_cdf = np.cumsum(severity_pmf(-0.2, [-0.5, 0.8]))
        want = np.concatenate(([pi], pi + (1 - pi) * cond_cdf))
        np.testing.assert_allclose(p.cdf, want, rtol=1e-12)

    @given(
        st.floats(-30, 30),
        st.floats(-30, 30),
        st.lists(st.floats(-5, 5), min_size=2, max_size=2).map(sorted),
    )
    @settings(max_examples=200)
    def test_sum_property(self, eo, es, alphas):
        if alphas[1] - alphas[0] <= 1e-9:
            alphas[1] = alphas[0] + 1.0
        p = cell_pmf(eo, es, np.array(alphas))
        assert abs(p.pmf.sum() - 1.0) < 1e-12


def small_dataset(rng, missing=True, n_times=None):
    n, qc, qf = 3, 2, 2
    shape_c = (n, qc) if n_times is None else (n, qc, n_times)
    shape_f = (n, qf) if n_times is None else (n, qf, n_times)
    caries = rng.integers(0, 3, size=shape_c)
    fluorosis = rng.integers(0, 3, size=shape_f)
    if missing:
        caries = caries.copy()
        caries.flat[0] = MISSING
    x_shape_o = (n, 2) if n_times is None else (n, n_times, 2)
    x_shape_s = (n, 2) if n_times is None else (n, n_times, 2)
    return PairedDataset(
        caries=caries,
        fluorosis=fluorosis,
        x_occ=rng.standard_normal(x_shape_o),
        x_sev=rng.standard_normal(x_shape_s),
        n_caries_categories=3,
        n_fluorosis_categories=3,
    )


class TestAssembleCoefficients:
    def test_zero_cores(self):
        rng = np.random.default_rng(0)
        lc = make_linked(rng)
        zeroed = LinkedCoefficients(
            subject_occurrence=lc.subject_occurrence,
            subject_severity=lc.subject_severity,
            **{
                name: CoefficientBlock(
                    spatial=blk.spatial,
                    predictor=blk.predictor,
                    time=blk.time,
                    core=DenseTensor.from_array(np.zeros(blk.core.dims)),
                )
                for name, _, blk in lc.blocks()
            },
        )
        coefs = assemble_coefficients(zeroed)
        for name in ("caries_occurrence", "fluorosis_occurrence",
                     "caries_severity", "fluorosis_severity"):
            assert np.all(getattr(coefs, name) == 0.0)

    def test_rank1_constant(self):
        ones2 = np.ones((2, 1))
        block = CoefficientBlock(
            spatial=ones2, predictor=ones2,
            core=DenseTensor.from_array(np.full((1, 1, 1), 3.5)),
        )
        unit_block = CoefficientBlock(
            spatial=ones2, predictor=ones2,
            core=DenseTensor.from_array(np.ones((1, 1, 1))),
        )
        lc = LinkedCoefficients(
            subject_occurrence=np.ones((2, 1)),
            subject_severity=np.ones((2, 1)),
            caries_occurrence=block,
            fluorosis_occurrence=unit_block,
            caries_severity=unit_block,
            fluorosis_severity=unit_block,
        )
        coefs = assemble_coefficients(lc)
        np.testing.assert_allclose(coefs.caries_occurrence, np.full((2, 2, 2), 3.5))

    def test_matches_nested_loop(self):
        from test_tensors import naive_tucker

        rng = np.random.default_rng(4)
        lc = make_linked(rng, ranks=(2, 2, 2), qc=3, qf=2, po=2, ps=2, n=4)
        coefs = assemble_coefficients(lc)
        want = naive_tucker(
            lc.caries_occurrence.core.array,
            (lc.subject_occurrence, lc.caries_occurrence.spatial,
             lc.caries_occurrence.predictor),
        )
        np.testing.assert_allclose(coefs.caries_occurrence, want, rtol=1e-10)

    def test_shared_subject_factor_is_same_object(self):
        rng = np.random.default_rng(1)
        lc = make_linked(rng)
        blocks = dict((name, subj) for name, subj, _ in lc.blocks())
        assert blocks["caries_occurrence"] is blocks["fluorosis_occurrence"]
        assert blocks["caries_severity"] is blocks["fluorosis_severity"]


class TestLogLikelihood:
    def test_all_missing_is_zero(self):
        rng = np.random.default_rng(0)
        data = small_dataset(rng, missing=False)
        all_missing = PairedDataset(
            caries=np.full_like(data.caries, MISSING),
            fluorosis=np.full_like(data.fluorosis, MISSING),
            x_occ=data.x_occ, x_sev=data.x_sev,
            n_caries_categories=3, n_fluorosis_categories=3,
        )
        lc = make_linked(rng)
        raw = CutpointRaw([0.0, 0.0])
        assert log_likelihood(all_missing, lc, raw, raw) == 0.0

    def test_single_cell_category_zero(self):
        # one observed caries cell with category 0 and eta_occ = 0
        rng = np.random.default_rng(0)
        caries = np.full((1, 1), MISSING)
        caries[0, 0] = 0
        data = PairedDataset(
            caries=caries,
            fluorosis=np.full((1, 1), MISSING),
            x_occ=np.ones((1, 1)),
            x_sev=np.ones((1, 1)),
            n_caries_categories=3,
            n_fluorosis_categories=3,
        )
        lc = make_linked(rng, n=1, qc=1, qf=1, po=1, ps=1)
        zero_cores = LinkedCoefficients(
            subject_occurrence=lc.subject_occurrence,
            subject_severity=lc.subject_severity,
            **{
                name: CoefficientBlock(
                    spatial=blk.spatial, predictor=blk.predictor, time=blk.time,
                    core=DenseTensor.from_array(np.zeros(blk.core.dims)),
                )
                for name, _, blk in lc.blocks()
            },
        )
        raw = CutpointRaw([0.0, 0.0])
        assert log_likelihood(data, zero_cores, raw, raw) == pytest.approx(
            math.log(0.5), rel=1e-14
        )

    def test_matches_independent_reference(self):
        rng = np.random.default_rng(8)
        data = small_dataset(rng)
        lc = make_linked(rng, ranks=(2, 2, 2))
        raw_c = CutpointRaw(rng.standard_normal(2))
        raw_f = CutpointRaw(rng.standard_normal(2))
        got = log_likelihood(data, lc, raw_c, raw_f)
        want = reference_log_likelihood(data, lc, raw_c, raw_f)
        assert got == pytest.approx(want, rel=1e-10)

    def test_matches_reference_longitudinal(self):
        rng = np.random.default_rng(9)
        data = small_dataset(rng, n_times=2)
        lc = make_linked(rng, ranks=(2, 2, 2), n_times=2)
        raw_c = CutpointRaw(rng.standard_normal(2))
        raw_f = CutpointRaw(rng.standard_normal(2))
        got = log_likelihood(data, lc, raw_c, raw_f)
        want = reference_log_likelihood(data, lc, raw_c, raw_f)
        assert got == pytest.approx(want, rel=1e-10)

    def test_masking_single_cells(self):
        # masking one observed cell shifts the total by exactly that
        # cell's log-probability
        rng = np.random.default_rng(10)
        data = small_dataset(rng, missing=False)
        lc = make_linked(rng, ranks=(2, 2, 2))
        raw_c = CutpointRaw(rng.standard_normal(2))
        raw_f = CutpointRaw(rng.standard_normal(2))
        from linkedtucker.model import cell_log_probabilities

        c_logp, f_logp = cell_log_probabilities(data, lc, raw_c, raw_f)
        full = log_likelihood(data, lc, raw_c, raw_f)
        for (i, q) in [(0, 0), (1, 1), (2, 0)]:
            caries = np.array(data.caries)
            caries[i, q] = MISSING
            masked = PairedDataset(
                caries=caries, fluorosis=data.fluorosis,
                x_occ=data.x_occ, x_sev=data.x_sev,
                n_caries_categories=3, n_fluorosis_categories=3,
            )
            delta = full - log_likelihood(masked, lc, raw_c, raw_f)
            assert delta == pytest.approx(c_logp[i, q], abs=1e-12)

    def test_permutation_invariance(self):
        # reordering subjects (cells) leaves the total unchanged
        rng = np.random.default_rng(11)
        data = small_dataset(rng)
        lc = make_linked(rng, ranks=(2, 2, 2))
        raw = CutpointRaw([0.1, -0.3])
        base = log_likelihood(data, lc, raw, raw)
        perm = rng.permutation(data.n_subjects)
        data_p = PairedDataset(
            caries=data.caries[perm], fluorosis=data.fluorosis[perm],
            x_occ=data.x_occ[perm], x_sev=data.x_sev[perm],
            n_caries_categories=3, n_fluorosis_categories=3,
        )
        lc_p = LinkedCoefficients(
            subject_occurrence=lc.subject_occurrence[perm],
            subject_severity=lc.subject_severity[perm],
            caries_occurrence=lc.caries_occurrence,
            fluorosis_occurrence=lc.fluorosis_occurrence,
            caries_severity=lc.caries_severity,
            fluorosis_severity=lc.fluorosis_severity,
        )
        assert log_likelihood(data_p, lc_p, raw, raw) == pytest.approx(base, abs=1e-9)

    def test_finite_for_extreme_predictors(self):
        rng = np.random.default_rng(12)
        data = small_dataset(rng)
        lc = make_linked(rng)
        scaled = LinkedCoefficients(
            subject_occurrence=30.0 * lc.subject_occurrence,
            subject_severity=30.0 * lc.subject_severity,
            caries_occurrence=lc.caries_occurrence,
            fluorosis_occurrence=lc.fluorosis_occurrence,
            caries_severity=lc.caries_severity,
            fluorosis_severity=lc.fluorosis_severity,
        )
        raw = CutpointRaw([0.0, 0.0])
        assert np.isfinite(log_likelihood(data, scaled, raw, raw))

    def test_category_out_of_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            PairedDataset(
                caries=np.array([[3]]), fluorosis=np.array([[0]]),
                x_occ=np.ones((1, 1)), x_sev=np.ones((1, 1)),
                n_caries_categories=3, n_fluorosis_categories=3,
            )

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        data = small_dataset(rng)
        lc = make_linked(rng, qc=5)  # wrong number of caries locations
        raw = CutpointRaw([0.0, 0.0])
        with pytest.raises(ShapeError):
            log_likelihood(data, lc, raw, raw)


class TestSignContracts:
    def test_occurrence_monotone(self):
        # raising eta_occ raises P(Y > 0)
        etas = np.linspace(-4, 4, 17)
        probs = [1 - cell_pmf(e, 0.0, [0.0]).pmf[0] for e in etas]
        assert np.all(np.diff(probs) > 0)

    def test_severity_shifts_mass_upward(self):
        # raising eta_sev lowers every conditional cdf value
        alphas = np.array([-1.0, 0.5, 2.0])
        low = np.cumsum(severity_pmf(-1.0, alphas))
        high = np.cumsum(severity_pmf(1.0, alphas))
        assert np.all(high[:-1] < low[:-1])
