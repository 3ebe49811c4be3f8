"""Sequential conditioning: literal rank-one updates against dense and banded plans."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podes import engine
from podes.engine import Grid
from podes.kernels import KernelSpec, qq, rr
from podes.ode import draw_generator


def oscillator(t, u):
    return np.array([u[1], -4.0 * u[0]])


def literal_run(kernel, grid, u0, derivative, seed):
    """Reference sampler written directly against the rank-one updates."""
    rng = draw_generator(seed)
    st_ = engine.init_prior(u0, kernel, grid)
    u = np.asarray(u0, float)
    ahead = []
    for n in range(1, grid.n + 1):
        f = derivative(grid.s[n - 1], u)
        if n == 1:
            engine.assimilate_first(st_, f)
        else:
            engine.assimilate(st_, n, f)
        if n < grid.n:
            mean, var = engine.predict(st_, grid.s[n])
            u = mean + np.sqrt(var) * rng.standard_normal(u.size)
            ahead.append(u)
    return st_, np.array(ahead)


class TestGrid:
    def test_uniform_grid(self):
        g = Grid.uniform(0.0, 1.0, 11)
        assert g.n == 11 and g.a == 0.0 and g.b == 1.0
        assert g.h_max == pytest.approx(0.1)

    @pytest.mark.parametrize("points", [[0.0], [0.0, 0.0, 1.0], [1.0, 0.5]])
    def test_rejects_bad_points(self, points):
        with pytest.raises(ValueError):
            Grid(np.array(points))

    def test_index_of_rejects_off_grid_times(self):
        g = Grid.uniform(0.0, 1.0, 11)
        assert list(g.index_of([0.0, 0.3, 1.0])) == [0, 3, 10]
        with pytest.raises(ValueError):
            g.index_of(0.35)

    def test_points_are_read_only(self):
        g = Grid.uniform(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            g.s[0] = 1.0


class TestLiteralUpdates:
    def test_first_update_is_exact(self):
        g = Grid.uniform(0.0, 1.0, 6)
        k = KernelSpec("squared_exponential", 0.3, 1.0, 0.0)
        st_ = engine.init_prior([1.0], k, g)
        engine.assimilate_first(st_, [2.5])
        assert st_.m_t[0, 0] == pytest.approx(2.5, rel=1e-14)
        assert st_.C_t[0, 0] == pytest.approx(0.0, abs=1e-14)
        assert st_.divisors[0] == pytest.approx(float(rr(k, 0.0, 0.0)))

    def test_later_divisors_double_the_derivative_variance(self):
        g = Grid.uniform(0.0, 1.0, 6)
        k = KernelSpec("uniform", 0.3, 2.0, 0.0)
        st_ = engine.init_prior([0.0], k, g)
        engine.assimilate_first(st_, [1.0])
        before = st_.C_t[1, 1]
        engine.assimilate(st_, 2, [1.0])
        assert st_.divisors[1] == pytest.approx(2.0 * before, rel=1e-14)

    def test_update_order_is_enforced(self):
        g = Grid.uniform(0.0, 1.0, 6)
        k = KernelSpec("uniform", 0.3, 1.0, 0.0)
        st_ = engine.init_prior([0.0], k, g)
        with pytest.raises(ValueError):
            engine.assimilate(st_, 3, [1.0])

    def test_prior_state_variance_at_origin_is_zero(self):
        g = Grid.uniform(0.0, 1.0, 6)
        k = KernelSpec("squared_exponential", 0.3, 1.0, 0.0)
        st_ = engine.init_prior([0.0], k, g)
        assert st_.C[0, 0] == 0.0
        assert st_.C[3, 3] == pytest.approx(float(qq(k, 0.6, 0.6)))

    def test_non_finite_interrogation_raises(self):
        g = Grid.uniform(0.0, 1.0, 6)
        st_ = engine.init_prior([0.0], KernelSpec("uniform", 0.3), g)
        with pytest.raises(FloatingPointError):
            engine.assimilate_first(st_, [np.nan])

    def test_kernel_origin_must_match_grid(self):
        with pytest.raises(ValueError):
            engine.init_prior([0.0], KernelSpec("uniform", 0.3, 1.0, 0.5), Grid.uniform(0, 1, 5))


@settings(max_examples=15, deadline=None)
@given(family=st.sampled_from(["squared_exponential", "uniform"]),
       n=st.integers(4, 25), ratio=st.floats(1.0, 5.0), precision=st.floats(0.1, 10.0),
       seed=st.integers(0, 2**31))
def test_variances_never_increase(family, n, ratio, precision, seed):
    g = Grid.uniform(0.0, 2.0, n)
    k = KernelSpec(family, ratio * g.h_max, precision, 0.0)
    rng = np.random.default_rng(seed)
    st_ = engine.init_prior([0.0], k, g)
    prev_c, prev_ct = np.diag(st_.C).copy(), np.diag(st_.C_t).copy()
    for i in range(1, n + 1):
        f = rng.normal(size=1)
        engine.assimilate_first(st_, f) if i == 1 else engine.assimilate(st_, i, f)
        c, ct = np.diag(st_.C), np.diag(st_.C_t)
        assert np.all(c <= prev_c + 1e-12)
        assert np.all(ct <= prev_ct + 1e-12)
        prev_c, prev_ct = c.copy(), ct.copy()


class TestDensePlan:
    @pytest.mark.parametrize("family", ["squared_exponential", "uniform"])
    def test_matches_literal_updates(self, family):
        g = Grid.uniform(0.0, 3.0, 40)
        k = engine.policy_kernel(family, g, 3.0, 1.0)
        u0 = np.array([1.0, 0.0])
        st_, ahead = literal_run(k, g, u0, oscillator, (4, 2))
        plan = engine.build_plan(k, g, cache=False)
        run = engine.run_plan(plan, k.precision, u0, oscillator, draw_generator((4, 2)))
        assert np.allclose(run.ahead_sample, ahead, atol=1e-10)
        assert np.allclose(run.final_mean, st_.m, atol=1e-10)
        assert np.allclose(plan.divisors / k.precision, st_.divisors, rtol=1e-10)
        assert np.allclose(plan.final_cov / k.precision, st_.C, atol=1e-12)

    def test_means_do_not_depend_on_precision(self):
        g = Grid.uniform(0.0, 1.0, 20)
        k = KernelSpec("squared_exponential", 0.1, 1.0, 0.0)
        plan = engine.build_plan(k, g, cache=False)
        f = lambda t, u: np.array([np.cos(t)])
        runs = [engine.run_plan(plan, a, [0.0], f, draw_generator(1)) for a in (1.0, 50.0)]
        assert np.allclose(runs[0].final_mean, runs[1].final_mean, atol=1e-14)

    def test_plan_cache_returns_same_object(self):
        g = Grid.uniform(0.0, 1.0, 15)
        k = KernelSpec("uniform", 0.2, 1.0, 0.0)
        assert engine.build_plan(k, g) is engine.build_plan(k.with_precision(7.0), g)

    def test_divergence_bound(self):
        g = Grid.uniform(0.0, 1.0, 30)
        k = KernelSpec("uniform", 0.1, 1.0, 0.0)
        plan = engine.build_plan(k, g)
        with pytest.raises(FloatingPointError):
            engine.run_plan(plan, 1.0, [1.0], lambda t, u: 100.0 * u, draw_generator(0),
                            divergence_bound=1e3)

    def test_lagged_plan_matches_literal_updates(self):
        g = Grid.uniform(0.0, 4.0, 41)
        k = engine.policy_kernel("uniform", g, 4.0)
        lag = 1.0
        phi = lambda t, rng: np.array([1.0])
        f = lambda t, u, ul: -ul
        rng = draw_generator(9)
        st_ = engine.init_prior([1.0], k, g, lag=lag)
        u, ul = np.array([1.0]), phi(-lag, rng)
        for n in range(1, g.n + 1):
            engine.assimilate_lagged(st_, n, f(g.s[n - 1], u, ul), lag)
            if n < g.n:
                mean, var = engine.predict(st_, g.s[n])
                u = mean + np.sqrt(var) * rng.standard_normal(1)
                z = rng.standard_normal(1)
                if g.s[n] - lag < 0:
                    ul = phi(g.s[n] - lag, rng)
                else:
                    row = g.n + n
                    ul = st_.m[row] + np.sqrt(max(st_.C[row, row], 0.0)) * z
        plan = engine.build_plan(k, g, lag=lag, cache=False)
        run = engine.run_plan(plan, k.precision, [1.0], f, draw_generator(9), initial_function=phi)
        assert np.allclose(run.final_mean, st_.m[:g.n], atol=1e-10)


@pytest.fixture(scope="module")
def pair():
    g = Grid.uniform(0.0, 10.0, 200)
    k = engine.policy_kernel("uniform", g, 4.0, 1.0)
    return k, g, engine.build_plan(k, g, cache=False), engine.build_banded_plan(k, g)


class TestBandedPlan:
    def test_plan_quantities_agree(self, pair):
        _, _, dense, band = pair
        assert np.allclose(band.divisors, dense.divisors, rtol=1e-10, atol=1e-14)
        assert np.allclose(band.schur, dense.schur, rtol=1e-10, atol=1e-14)
        assert np.allclose(band.next_var, dense.next_var, rtol=1e-10, atol=1e-14)
        N, M = band.band.shape
        for n in range(1, N):
            j = np.arange(min(M, n))
            assert np.allclose(band.band[n, j], dense.gains[n, n - 1 - j], atol=1e-10)

    def test_runs_agree(self, pair):
        k, g, dense, band = pair
        u0 = np.array([-1.0, 0.0])
        a = engine.run_plan(dense, k.precision, u0, oscillator, draw_generator(3))
        b = engine.run_banded_plan(band, k.precision, u0, oscillator, draw_generator(3))
        assert np.allclose(a.ahead_sample, b.ahead_sample, atol=1e-10)
        assert np.allclose(a.innovations, b.innovations, atol=1e-10)
        assert np.allclose(a.final_mean, b.final_mean, atol=1e-10)

    def test_final_draw_covariance_matches_dense(self, pair):
        _, g, dense, band = pair
        N = g.n
        sizes = (2 * N + 2, 2 * N + 2, N)
        cols = []
        for part, size in enumerate(sizes):
            for i in range(size):
                noise = [np.zeros((s, 1)) for s in sizes]
                noise[part][i] = 1.0
                cols.append(engine._matheron_residual(band, *noise)[:, 0])
        A = np.array(cols).T
        assert np.allclose(A @ A.T, dense.final_cov, atol=1e-10)

    def test_requires_uniform_kernel(self):
        g = Grid.uniform(0.0, 1.0, 10)
        with pytest.raises(ValueError):
            engine.build_banded_plan(KernelSpec("squared_exponential", 0.1, 1.0, 0.0), g)


class TestPsdFactor:
    def test_reconstructs_positive_definite_matrix(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(6, 6))
        cov = A @ A.T + 0.1 * np.eye(6)
        F = engine.psd_factor(cov)
        assert np.allclose(F @ F.T, cov, atol=1e-10)

    def test_zero_variance_rows_are_pinned(self):
        cov = np.diag([0.0, 1.0, 2.0])
        F = engine.psd_factor(cov)
        assert np.all(F[0] == 0.0)
        assert np.allclose(F @ F.T, cov)

    def test_singular_matrix(self):
        v = np.array([[1.0], [2.0], [3.0]])
        F = engine.psd_factor(v @ v.T)
        assert np.allclose(F @ F.T, v @ v.T, atol=1e-6)


def test_policy_kernel_scales_with_step():
    g = Grid.uniform(0.0, 1.0, 11)
    k = engine.policy_kernel("uniform", g, 4.0, 2.0)
    assert k.length_scale == pytest.approx(0.4)
    assert k.precision == pytest.approx(1.0 / 0.2)
    assert engine.policy_kernel("uniform", g).length_scale == pytest.approx(
        engine.DEFAULT_LENGTH_RATIO[k.family] * 0.1)
