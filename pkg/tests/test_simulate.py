import numpy as np
import pytest

from linkedtucker.model import MISSING, assemble_coefficients, cell_pmf, cutpoints
from linkedtucker.posterior import Ranks, layout_for, pack, unpack, ModelParams
from linkedtucker.simulate import (
    CovariateSpec,
    GroundTruth,
    SimConfig,
    generate,
    recovery_error,
    true_linear_predictors,
)


class TestGenerate:
    def test_deterministic(self):
        cfg = SimConfig(seed=123)
        d1, t1 = generate(cfg)
        d2, t2 = generate(cfg)
        assert np.array_equal(d1.caries, d2.caries)
        assert np.array_equal(d1.fluorosis, d2.fluorosis)
        assert np.array_equal(d1.x_occ, d2.x_occ)
        assert np.array_equal(
            t1.coefficients.subject_occurrence, t2.coefficients.subject_occurrence
        )

    def test_category_ranges_and_sentinel(self):
        data, _ = generate(SimConfig(seed=1, missing_fraction=0.3))
        for arr, k in ((data.caries, 3), (data.fluorosis, 3)):
            assert np.all((arr == MISSING) | ((0 <= arr) & (arr < k)))

    def test_all_missing(self):
        data, truth = generate(SimConfig(seed=2, missing_fraction=1.0))
        assert np.all(data.caries == MISSING)
        assert np.all(data.fluorosis == MISSING)
        from linkedtucker.model import log_likelihood

        assert log_likelihood(
            data, truth.coefficients, truth.raw_caries, truth.raw_fluorosis
        ) == 0.0

    def test_missing_fraction_exact_count(self):
        cfg = SimConfig(seed=3, missing_fraction=0.25)
        data, _ = generate(cfg)
        n_cells = data.caries.size
        assert (data.caries == MISSING).sum() == round(0.25 * n_cells)

    def test_zero_core_category_frequencies(self):
        # all cores zero and zero raws: every cell has the same pmf, which
        # the oracle recomputes exactly from the cutpoint construction
        cfg = SimConfig(
            n_subjects=400, n_caries_locations=10, n_fluorosis_locations=10,
            core_sparsity=1.0, missing_fraction=0.0, seed=4,
        )
        data, truth = generate(cfg)
        alphas = cutpoints(truth.raw_caries)
        np.testing.assert_array_equal(alphas, [1.0])
        want = cell_pmf(0.0, 0.0, alphas).pmf
        for arr in (data.caries, data.fluorosis):
            counts = np.bincount(arr.ravel(), minlength=3)
            n = arr.size
            freq = counts / n
            se = np.sqrt(want * (1 - want) / n)
            assert np.all(np.abs(freq - want) <= 3 * se + 1e-12)

    def test_zero_rate_matches_hurdle(self):
        # empirical zero rate per cell block ~ 1 - logistic(eta_occ)
        cfg = SimConfig(
            n_subjects=2000, n_caries_locations=1, n_fluorosis_locations=1,
            ranks=Ranks((1, 1, 1), (1, 1, 1)),
            core_sparsity=1.0, missing_fraction=0.0, seed=5,
        )
        data, truth = generate(cfg)
        zero_rate = (data.caries == 0).mean()
        assert abs(zero_rate - 0.5) <= 3 * np.sqrt(0.25 / data.caries.size)

    def test_longitudinal_shapes(self):
        cfg = SimConfig(
            n_times=3, ranks=Ranks((2, 2, 2, 2), (2, 2, 2, 2)), seed=6
        )
        data, truth = generate(cfg)
        assert data.caries.shape == (60, 8, 3)
        assert data.x_occ.shape == (60, 3, 3)
        assert truth.coefficients.caries_occurrence.time.shape == (3, 2)

    def test_realized_tensors_match_assembly(self):
        _, truth = generate(SimConfig(seed=7))
        fresh = assemble_coefficients(truth.coefficients)
        for name in ("caries_occurrence", "fluorosis_occurrence",
                     "caries_severity", "fluorosis_severity"):
            np.testing.assert_allclose(
                getattr(truth.tensors, name), getattr(fresh, name), rtol=1e-12
            )

    def test_core_sparsity_applied(self):
        _, truth = generate(SimConfig(seed=8, core_sparsity=0.5))
        core = truth.coefficients.caries_occurrence.core.data
        assert (core == 0.0).sum() == round(0.5 * core.size)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(missing_fraction=1.5)
        with pytest.raises(ValueError):
            SimConfig(n_subjects=0)
        with pytest.raises(ValueError):
            SimConfig(n_times=3)  # needs 4-entry ranks
        with pytest.raises(ValueError):
            SimConfig(ranks=Ranks((2, 9, 2), (2, 2, 2)))

    def test_intercept_column(self):
        data, _ = generate(SimConfig(seed=9))
        assert np.all(data.x_occ[:, 0] == 1.0)
        assert data.occ_predictor_labels[0] == "intercept"


class TestRecoveryError:
    def make_truth_draws(self, seed=0, n_draws=64):
        cfg = SimConfig(
            n_subjects=10, n_caries_locations=3, n_fluorosis_locations=3,
            seed=seed,
        )
        data, truth = generate(cfg)
        layout = layout_for(data, truth.ranks)
        v_true = pack(
            ModelParams(
                coefficients=truth.coefficients,
                raw_caries=truth.raw_caries,
                raw_fluorosis=truth.raw_fluorosis,
                log_local={
                    n: np.zeros(layout.entry(f"{n}.log_local").shape)
                    for n in ("caries_occurrence", "fluorosis_occurrence",
                              "caries_severity", "fluorosis_severity")
                },
                log_global={
                    n: 0.0
                    for n in ("caries_occurrence", "fluorosis_occurrence",
                              "caries_severity", "fluorosis_severity")
                },
            ),
            layout,
        )
        return data, truth, layout, v_true, n_draws

    def test_exact_draws_zero_rmse_flagged_degenerate(self):
        data, truth, layout, v_true, n = self.make_truth_draws()
        draws = np.tile(v_true, (n, 1))
        rep = recovery_error(truth, draws, data)
        assert rep.linpred_rmse == pytest.approx(0.0, abs=1e-12)
        assert rep.degenerate_intervals == rep.n_cells

    def test_noisy_draws_cover(self):
        data, truth, layout, v_true, n = self.make_truth_draws(seed=1, n_draws=400)
        rng = np.random.default_rng(0)
        draws = v_true[None, :] + 0.05 * rng.standard_normal((n, v_true.size))
        rep = recovery_error(truth, draws, data)
        assert rep.coverage > 0.85
        assert rep.degenerate_intervals == 0

    def test_unrelated_draws_large_rmse(self):
        data, truth, layout, v_true, n = self.make_truth_draws(seed=2)
        rng = np.random.default_rng(1)
        draws = rng.standard_normal((n, v_true.size))
        rep = recovery_error(truth, draws, data)
        assert rep.linpred_rmse > 0.5

    def test_zero_predictor_rmse_is_truth_rms(self):
        data, truth, layout, v_true, n = self.make_truth_draws(seed=3)
        draws = np.tile(v_true, (n, 1))
        rep = recovery_error(truth, draws, data)
        etas = true_linear_predictors(truth, data)
        flat = np.concatenate([e.ravel() for e in etas.values()])
        assert rep.zero_predictor_rmse == pytest.approx(
            float(np.sqrt(np.mean(flat**2))), rel=1e-12
        )
