import math

import numpy as np
import pytest

from linkedtucker.sampler import (
    ChainInitError,
    ChainState,
    DualAveraging,
    NutsConfig,
    PosteriorDraws,
    SamplerError,
    adapt_step_size,
    diagnostics,
    leapfrog,
    mass_adaptation_windows,
    nuts_transition,
    run_chains,
)


class StdGaussian:
    def __init__(self, dim):
        self.dim = dim

    def __call__(self, q):
        return -0.5 * float(q @ q), -q


class ScaledGaussian:
    """Independent Gaussian with per-coordinate scales."""

    def __init__(self, sds):
        self.sds = np.asarray(sds, dtype=float)
        self.dim = self.sds.size

    def __call__(self, q):
        g = -q / self.sds**2
        return 0.5 * float(q @ g), g


def grad_fn(q):
    return -0.5 * float(q @ q), -q


class TestLeapfrog:
    def test_hand_integrated_step(self):
        # standard Gaussian, q=1, p=0, step 0.1:
        # half-kick -0.05, drift to 0.995, half-kick to -0.09975
        q, p = leapfrog(np.array([1.0]), np.array([0.0]), 0.1, grad_fn)
        assert q[0] == pytest.approx(0.995, abs=1e-15)
        assert p[0] == pytest.approx(-0.09975, abs=1e-15)

    def test_reversibility(self):
        rng = np.random.default_rng(0)
        q0 = rng.standard_normal(5)
        p0 = rng.standard_normal(5)
        q, p = q0, p0
        for _ in range(25):
            q, p = leapfrog(q, p, 0.05, grad_fn)
        q, p = q, -p
        for _ in range(25):
            q, p = leapfrog(q, p, 0.05, grad_fn)
        np.testing.assert_allclose(q, q0, atol=1e-12)
        np.testing.assert_allclose(-p, p0, atol=1e-12)

    def test_energy_drift_small(self):
        rng = np.random.default_rng(1)
        q = rng.standard_normal(3)
        p = rng.standard_normal(3)
        h0 = 0.5 * float(q @ q) + 0.5 * float(p @ p)
        for _ in range(100):
            q, p = leapfrog(q, p, 0.01, grad_fn)
        h1 = 0.5 * float(q @ q) + 0.5 * float(p @ p)
        assert abs(h1 - h0) < 1e-4

    def test_volume_preserving_on_linear_target(self):
        # Jacobian of one leapfrog step on a quadratic target is linear in
        # (q, p); build it column by column and check unit determinant.
        dim = 3
        rng = np.random.default_rng(2)
        inv_mass = rng.uniform(0.5, 2.0, dim)

        def step(q, p):
            ph = p + 0.5 * 0.3 * (-q)
            qn = q + 0.3 * inv_mass * ph
            pn = ph + 0.5 * 0.3 * (-qn)
            return np.concatenate([qn, pn])

        jac = np.column_stack(
            [step(*np.split(e, 2)) for e in np.eye(2 * dim)]
        )
        assert np.linalg.det(jac) == pytest.approx(1.0, rel=1e-12)

    def test_nonfinite_gradient_is_signal_not_crash(self):
        def bad_target(q):
            return -np.inf, np.full_like(q, np.nan)

        q, p = leapfrog(np.ones(2), np.zeros(2), 0.1, bad_target)
        assert not np.all(np.isfinite(p))


class TestDualAveraging:
    def test_fixed_point_at_target(self):
        da = DualAveraging.started_at(0.5, target_accept=0.8)
        log0 = da.log_step
        for _ in range(50):
            da = adapt_step_size(da, 0.8)
        assert da.log_step == pytest.approx(da.mu)
        assert abs(da.log_step - log0) < math.log(10.0) + 1e-9

    def test_zero_accept_shrinks_monotonically(self):
        da = DualAveraging.started_at(0.5, target_accept=0.8)
        steps = []
        for _ in range(20):
            da = adapt_step_size(da, 0.0)
            steps.append(da.log_step)
        assert np.all(np.diff(steps) < 0)

    def test_full_accept_grows_monotonically(self):
        da = DualAveraging.started_at(0.5, target_accept=0.8)
        steps = []
        for _ in range(20):
            da = adapt_step_size(da, 1.0)
            steps.append(da.log_step)
        assert np.all(np.diff(steps) > 0)


class TestWindows:
    def test_standard_500(self):
        assert mass_adaptation_windows(500) == [100, 150, 250, 450]

    def test_too_short_gives_none(self):
        assert mass_adaptation_windows(100) == []

    def test_exact_minimum(self):
        assert mass_adaptation_windows(150) == [100]

    def test_windows_fit_in_warmup(self):
        for w in (150, 200, 500, 1000, 5000):
            ends = mass_adaptation_windows(w)
            assert all(e <= w - 50 for e in ends)
            assert ends == sorted(ends)


class TestTransition:
    def test_gaussian_moments(self):
        cfg = NutsConfig(n_warmup=500, n_samples=2500, n_chains=4, seed=7)
        draws = run_chains(cfg, StdGaussian(1))
        x = draws.flat()[:, 0]
        assert abs(x.mean()) < 0.05
        assert abs(x.var() - 1.0) < 0.1

    def test_no_divergences_on_quadratic(self):
        cfg = NutsConfig(n_warmup=500, n_samples=2500, n_chains=4, seed=3)
        draws = run_chains(cfg, ScaledGaussian([0.5, 1.0, 2.0]))
        assert int(draws.divergent.sum()) == 0

    def test_tree_depth_capped(self):
        cfg = NutsConfig(n_warmup=50, n_samples=100, n_chains=2, seed=5,
                         max_tree_depth=3)
        draws = run_chains(cfg, StdGaussian(4))
        assert draws.tree_depth.max() <= 3

    def test_nonfinite_initial_point_raises(self):
        class Bad:
            dim = 2

            def __call__(self, q):
                return np.nan, np.full(2, np.nan)

            def block_of(self, i):
                return "blockA" if i == 0 else "blockB"

        state = ChainState(
            position=np.zeros(2), rng=np.random.default_rng(0),
            step_size=0.5, inv_mass=np.ones(2),
            dual=DualAveraging.started_at(0.5, 0.8),
        )
        with pytest.raises(SamplerError, match="block"):
            nuts_transition(state, Bad())


class TestRunChains:
    def test_determinism_bitwise(self):
        cfg = NutsConfig(n_warmup=100, n_samples=200, n_chains=2, seed=42)
        a = run_chains(cfg, StdGaussian(3))
        b = run_chains(cfg, StdGaussian(3))
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.energy, b.energy)

    def test_thread_count_does_not_change_output(self):
        cfg = NutsConfig(n_warmup=100, n_samples=100, n_chains=2, seed=13)
        a = run_chains(cfg, StdGaussian(2), n_threads=1)
        b = run_chains(cfg, StdGaussian(2), n_threads=2)
        assert np.array_equal(a.positions, b.positions)

    def test_chains_differ(self):
        cfg = NutsConfig(n_warmup=100, n_samples=100, n_chains=2, seed=1)
        draws = run_chains(cfg, StdGaussian(2))
        assert not np.array_equal(draws.positions[0], draws.positions[1])

    def test_warmup_excluded_from_store(self):
        cfg = NutsConfig(n_warmup=137, n_samples=61, n_chains=2, seed=2)
        draws = run_chains(cfg, StdGaussian(2))
        assert draws.positions.shape == (2, 61, 2)
        assert draws.n_warmup == 137

    def test_step_size_frozen_after_warmup(self):
        cfg = NutsConfig(n_warmup=200, n_samples=50, n_chains=2, seed=4)
        draws = run_chains(cfg, StdGaussian(2))
        for c in range(2):
            assert np.all(draws.step_size[c] == draws.step_size[c, 0])

    def test_ess_efficiency_on_gaussian(self):
        cfg = NutsConfig(n_warmup=500, n_samples=1000, n_chains=4, seed=9)
        draws = run_chains(cfg, StdGaussian(3))
        d = diagnostics(draws)
        assert np.all(d.ess_bulk > 0.5 * cfg.n_samples)

    def test_init_failure_aborts_with_diagnostics(self):
        class NeverFinite:
            dim = 2

            def __call__(self, q):
                return np.nan, np.full(2, np.nan)

        cfg = NutsConfig(n_warmup=10, n_samples=10, n_chains=1, seed=0)
        with pytest.raises(ChainInitError, match="100 jittered draws"):
            run_chains(cfg, NeverFinite())


class TestDiagnostics:
    @staticmethod
    def fake_draws(positions):
        positions = np.asarray(positions, dtype=float)
        k, s, _ = positions.shape
        zeros = np.zeros((k, s))
        return PosteriorDraws(
            positions=positions, accept_prob=zeros, tree_depth=zeros.astype(int),
            n_leapfrog=zeros.astype(int), divergent=zeros.astype(bool),
            energy=zeros, step_size=zeros, n_warmup=0, seed=0,
        )

    def test_iid_draws_rhat_near_one(self):
        rng = np.random.default_rng(0)
        draws = self.fake_draws(rng.standard_normal((4, 1000, 2)))
        d = diagnostics(draws)
        assert np.all((0.99 <= d.split_rhat) & (d.split_rhat <= 1.01))

    def test_offset_chain_flags_rhat(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 500, 1))
        x[0] += 10.0
        d = diagnostics(self.fake_draws(x))
        assert d.split_rhat[0] > 1.1

    def test_constant_draws_sentinel(self):
        d = diagnostics(self.fake_draws(np.ones((3, 100, 2))))
        assert np.all(d.split_rhat == 0.0)
        assert np.all(d.ess_bulk == 0.0)
        assert np.all(d.zero_variance)

    def test_divergence_count(self):
        draws = self.fake_draws(np.random.default_rng(2).standard_normal((2, 50, 1)))
        flagged = PosteriorDraws(
            positions=draws.positions, accept_prob=draws.accept_prob,
            tree_depth=draws.tree_depth, n_leapfrog=draws.n_leapfrog,
            divergent=np.arange(100).reshape(2, 50) % 10 == 0,
            energy=draws.energy, step_size=draws.step_size, n_warmup=0, seed=0,
        )
        assert diagnostics(flagged).n_divergent == 10

    def test_insufficient_draws_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            diagnostics(self.fake_draws(rng.standard_normal((1, 100, 1))))
        with pytest.raises(ValueError):
            diagnostics(self.fake_draws(rng.standard_normal((2, 3, 1))))


class TestConfig:
    def test_defaults_follow_sampling_setup(self):
        cfg = NutsConfig()
        assert cfg.n_warmup == 5000 and cfg.n_samples == 5000
        assert cfg.n_chains == 4

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            NutsConfig(target_accept=1.5)
        with pytest.raises(ValueError):
            NutsConfig(max_tree_depth=0)
        with pytest.raises(ValueError):
            NutsConfig(n_samples=0)
        with pytest.raises(ValueError):
            NutsConfig(mass_matrix="dense")
