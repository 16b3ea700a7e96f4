import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difftts.diffusion import (
    MixturePrior,
    conditional_logpdf,
    conditional_score,
    mixture_score,
    sample_conditional,
    simulate_forward_em,
)
from difftts.errors import DomainError, ShapeError
from difftts.schedule import DiffusionSpec, NoiseSchedule, lambda_scalar, marginal_params

SCHED = NoiseSchedule()
ANISO = DiffusionSpec(SCHED, np.array([0.25, 0.5, 1.0, 4.0]), 4)


def fd_grad(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestSampleConditional:
    def test_moments_at_half(self):
        spec = DiffusionSpec.identity(1)
        rng = np.random.default_rng(0)
        x0, mu = np.array([0.0]), np.array([1.0])
        draws = sample_conditional(spec, np.broadcast_to(x0, (100_000, 1)), mu, 0.5, rng)[:, 0]
        marg = marginal_params(spec, x0, mu, 0.5)
        se = np.sqrt(marg.var_diag[0] / draws.size)
        assert abs(draws.mean() - marg.mean_rho[0]) < 3 * se
        assert draws.var() == pytest.approx(0.9194, rel=0.02)

    def test_fixed_point_endpoint(self):
        rng = np.random.default_rng(1)
        mu = np.array([0.5, -1.0, 2.0, 0.0])
        draws = sample_conditional(ANISO, np.broadcast_to(mu, (50_000, 4)), mu, 1.0, rng)
        np.testing.assert_allclose(draws.mean(0), mu, atol=4 * np.sqrt(4.0 / 50_000))
        np.testing.assert_allclose(draws.var(0), marginal_params(ANISO, mu, mu, 1.0).var_diag, rtol=0.03)
        ident = sample_conditional(DiffusionSpec.identity(4), np.broadcast_to(mu, (50_000, 4)), mu, 1.0, rng)
        np.testing.assert_allclose(ident.var(0), 1.0, rtol=0.03)

    def test_deterministic(self):
        a = sample_conditional(ANISO, np.ones(4), np.zeros(4), 0.3, np.random.default_rng(5))
        b = sample_conditional(ANISO, np.ones(4), np.zeros(4), 0.3, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("t", [0.0, -0.5])
    def test_degenerate_time(self, t):
        with pytest.raises(DomainError):
            sample_conditional(ANISO, np.ones(4), np.zeros(4), t, np.random.default_rng())

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sample_conditional(ANISO, np.ones(3), np.zeros(4), 0.5, np.random.default_rng())


class TestSimulateForward:
    def test_single_step_structure(self):
        path = simulate_forward_em(ANISO, np.ones(4), np.zeros(4), 1, np.random.default_rng(0))
        assert path.states.shape == (2, 4)
        np.testing.assert_array_equal(path.times, [0.0, 1.0])
        np.testing.assert_array_equal(path.states[0], np.ones(4))

    def test_single_step_formula(self):
        spec = DiffusionSpec(NoiseSchedule(2.0, 2.0), np.array([0.5, 2.0]), 2)
        x0, mu = np.array([1.0, -1.0]), np.array([0.0, 3.0])
        path = simulate_forward_em(spec, x0, mu, 1, np.random.default_rng(4))
        z = np.random.default_rng(4).standard_normal((1, 1, 2))[0, 0]
        expected = x0 + 0.5 * (mu - x0) / spec.sigma_diag * 2.0 + np.sqrt(2.0) * z
        np.testing.assert_allclose(path.states[1], expected, rtol=1e-14)

    def test_fixed_point_mean(self):
        mu = np.array([1.0, -2.0, 0.5, 3.0])
        path = simulate_forward_em(ANISO, np.broadcast_to(mu, (4000, 4)), mu, 50, np.random.default_rng(2))
        sd = np.sqrt(ANISO.sigma_diag)
        for k in (10, 25, 50):
            np.testing.assert_array_less(np.abs(path.states[k].mean(0) - mu), 4 * sd / np.sqrt(4000))

    def test_marginal_at_half_matches_closed_form(self):
        spec = DiffusionSpec.identity(2)
        x0, mu = np.array([1.0, -0.5]), np.array([0.0, 2.0])
        path = simulate_forward_em(spec, np.broadcast_to(x0, (20_000, 2)), mu, 200, np.random.default_rng(3))
        states = path.states[100]
        assert path.times[100] == pytest.approx(0.5)
        marg = marginal_params(spec, x0, mu, 0.5)
        se = np.sqrt(marg.var_diag / 20_000)
        np.testing.assert_array_less(np.abs(states.mean(0) - marg.mean_rho), 3 * se)
        np.testing.assert_allclose(states.var(0), marg.var_diag, rtol=0.05)

    def test_agrees_with_exact_sampler(self):
        x0, mu = np.array([2.0, 0.0, -1.0, 1.0]), np.zeros(4)
        em = simulate_forward_em(ANISO, np.broadcast_to(x0, (20_000, 4)), mu, 200, np.random.default_rng(6))
        exact = sample_conditional(ANISO, np.broadcast_to(x0, (20_000, 4)), mu, 0.5, np.random.default_rng(7))
        a = em.states[100]
        se = np.sqrt(a.var(0) / a.shape[0] + exact.var(0) / exact.shape[0])
        np.testing.assert_array_less(np.abs(a.mean(0) - exact.mean(0)), 3 * se)
        np.testing.assert_allclose(a.var(0), exact.var(0), rtol=0.05)

    def test_seed_determinism(self):
        args = (ANISO, np.ones((3, 4)), np.zeros(4), 30)
        a = simulate_forward_em(*args, np.random.default_rng(11)).states
        b = simulate_forward_em(*args, np.random.default_rng(11)).states
        np.testing.assert_array_equal(a, b)

    def test_record_every(self):
        full = simulate_forward_em(ANISO, np.ones(4), np.zeros(4), 20, np.random.default_rng(1))
        thin = simulate_forward_em(ANISO, np.ones(4), np.zeros(4), 20, np.random.default_rng(1), record_every=5)
        np.testing.assert_array_equal(thin.states, full.states[::5])
        np.testing.assert_allclose(thin.times, full.times[::5])

    def test_invalid_steps(self):
        with pytest.raises(DomainError):
            simulate_forward_em(ANISO, np.ones(4), np.zeros(4), 0, np.random.default_rng())

    def test_csv(self, tmp_path):
        path = simulate_forward_em(ANISO, np.ones((2, 4)), np.zeros(4), 4, np.random.default_rng(0))
        path.to_csv(tmp_path / "p.csv", index=1)
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "t,x_1,x_2,x_3,x_4"
        assert len(lines) == 6
        assert [float(v) for v in lines[-1].split(",")[1:]] == path.states[-1, 1].tolist()


class TestConditionalScore:
    def test_zero_at_mean(self):
        rho = marginal_params(ANISO, np.ones(4), np.zeros(4), 0.4).mean_rho
        np.testing.assert_allclose(conditional_score(ANISO, rho, np.ones(4), np.zeros(4), 0.4), 0.0, atol=1e-15)

    def test_scaled_noise_identity(self):
        spec = DiffusionSpec.identity(1)
        marg = marginal_params(spec, [0.0], [1.0], 0.5)
        x_t = marg.mean_rho + np.sqrt(marg.var_diag) * 1.0
        s = conditional_score(spec, x_t, [0.0], [1.0], 0.5)
        assert s[0] == pytest.approx(-1 / np.sqrt(0.9194), abs=2e-4)
        assert s[0] == pytest.approx(-1 / np.sqrt(lambda_scalar(SCHED, 0.5)), rel=1e-12)

    def test_linear_in_residual(self, rng):
        x0, mu = rng.normal(size=4), rng.normal(size=4)
        rho = marginal_params(ANISO, x0, mu, 0.6).mean_rho
        r = rng.normal(size=4)
        s1 = conditional_score(ANISO, rho + r, x0, mu, 0.6)
        s2 = conditional_score(ANISO, rho + 2.5 * r, x0, mu, 0.6)
        np.testing.assert_allclose(s2, 2.5 * s1, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), t=st.floats(0.05, 1.0))
    def test_matches_finite_differences(self, seed, t):
        r = np.random.default_rng(seed)
        x0, mu, x = r.normal(size=4), r.normal(size=4), r.normal(size=4)
        fd = fd_grad(lambda z: conditional_logpdf(ANISO, z, x0, mu, t), x)
        np.testing.assert_allclose(conditional_score(ANISO, x, x0, mu, t), fd, rtol=1e-4, atol=1e-6)


class TestMixture:
    def test_validation(self):
        with pytest.raises(DomainError):
            MixturePrior([0.5, 0.6], [[0.0], [1.0]], [[1.0], [1.0]])
        with pytest.raises(DomainError):
            MixturePrior([1.0], [[0.0]], [[-1.0]])
        with pytest.raises(ShapeError):
            MixturePrior([0.5, 0.5], [[0.0], [1.0]], [[1.0]])

    def test_point_mass_reduces_to_conditional(self, rng):
        x0, mu = rng.normal(size=4), rng.normal(size=4)
        prior = MixturePrior([1.0], [x0], [np.zeros(4)])
        for t in (0.01, 0.3, 1.0):
            x = rng.normal(size=4)
            np.testing.assert_allclose(
                mixture_score(prior, ANISO, mu, x, t), conditional_score(ANISO, x, x0, mu, t), rtol=1e-12
            )

    def test_symmetric_midpoint(self):
        spec = DiffusionSpec.identity(2)
        prior = MixturePrior([0.5, 0.5], [[-1.0, 0.3], [1.0, 0.3]], [[0.2, 0.1], [0.2, 0.1]])
        for t in (0.05, 0.5, 1.0):
            s = mixture_score(prior, spec, np.zeros(2), np.array([0.0, 1.7]), t)
            assert s[0] == pytest.approx(0.0, abs=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), t=st.floats(0.01, 1.0))
    def test_matches_finite_differences(self, seed, t):
        r = np.random.default_rng(seed)
        prior = MixturePrior(r.dirichlet(np.ones(3)), r.normal(scale=2, size=(3, 4)), r.uniform(0, 1, (3, 4)))
        mu, x = r.normal(size=4), r.normal(scale=2, size=4)
        fd = fd_grad(lambda z: prior.logpdf(ANISO, mu, z, t), x)
        np.testing.assert_allclose(mixture_score(prior, ANISO, mu, x, t), fd, rtol=1e-4, atol=1e-6)

    def test_batched_matches_loop(self, rng):
        prior = MixturePrior([0.3, 0.7], [[-1.5], [1.5]], [[0.1], [0.1]])
        spec = DiffusionSpec.identity(1)
        x = rng.normal(size=(7, 1))
        batch = mixture_score(prior, spec, np.zeros(1), x, 0.2)
        loop = np.array([mixture_score(prior, spec, np.zeros(1), xi, 0.2) for xi in x])
        np.testing.assert_allclose(batch, loop, rtol=1e-14)

    def test_sample_moments(self):
        prior = MixturePrior([0.3, 0.7], [[-1.5], [1.5]], [[0.1], [0.1]])
        s = prior.sample(100_000, np.random.default_rng(0))[:, 0]
        assert s.mean() == pytest.approx(0.6, abs=0.02)
        assert np.mean(s < 0) == pytest.approx(0.3, abs=0.01)


@pytest.mark.parametrize("t", [0.05, 0.2, 0.5, 1.0])
def test_expected_squared_score(t):
    """Monte Carlo E||score||^2 against n / lambda_t for Sigma = I."""
    n = 8
    spec = DiffusionSpec.identity(n)
    rng = np.random.default_rng(int(t * 1000))
    x0, mu = rng.normal(size=(20_000, n)), rng.normal(size=n)
    x_t = sample_conditional(spec, x0, mu, t, rng)
    s = conditional_score(spec, x_t, x0, mu, t)
    est = np.mean(np.sum(s * s, axis=-1))
    assert est == pytest.approx(n / lambda_scalar(SCHED, t), rel=0.05)
