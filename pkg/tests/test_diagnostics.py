"""Rate fits, ensemble summaries, Geweke scores and mode counts."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podes.diagnostics import count_modes, credible_interval, fit_rate, geweke, summarize


class TestFitRate:
    @settings(max_examples=30, deadline=None)
    @given(slope=st.floats(-3.0, 3.0), intercept=st.floats(-5.0, 5.0),
           rows=st.integers(3, 8))
    def test_recovers_exact_power_law(self, slope, intercept, rows):
        h = 0.5 ** np.arange(rows)
        fit = fit_rate(h, np.exp(intercept) * h**slope)
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.intercept == pytest.approx(intercept, abs=1e-8)
        assert fit.stderr < 1e-6

    @pytest.mark.parametrize("h,err", [
        ([0.1, 0.05], [1.0, 0.5]),
        ([0.1, 0.05, 0.025], [1.0, 0.0, 0.2]),
        ([0.1, 0.1, 0.1], [1.0, 0.5, 0.2]),
        ([0.1, 0.05, 0.025], [1.0, np.nan, 0.2]),
    ])
    def test_rejects_degenerate_tables(self, h, err):
        with pytest.raises(ValueError):
            fit_rate(h, err)


class TestSummarize:
    def test_statistics(self):
        values = np.arange(12.0).reshape(4, 3)
        s = summarize(np.arange(3.0), values)
        assert s.mean.shape == (3, 1) and s.n_draws == 4
        assert np.allclose(s.mean[:, 0], [4.5, 5.5, 6.5])
        assert np.allclose(s.sd[:, 0], np.std([0, 3, 6, 9], ddof=1))
        assert np.all(s.lower <= s.mean) and np.all(s.mean <= s.upper)

    def test_single_draw_has_zero_spread(self):
        s = summarize([0.0, 1.0], np.ones((1, 2, 2)))
        assert np.all(s.sd == 0.0)


class TestGeweke:
    def test_independent_draws_score_small(self):
        rng = np.random.default_rng(0)
        z = [geweke(rng.normal(size=2000)) for _ in range(200)]
        assert np.mean(np.abs(z) < 1.96) > 0.88

    def test_unconverged_start_scores_large(self):
        x = np.random.default_rng(1).normal(size=2000)
        x[:200] += 3.0
        assert abs(geweke(x)) > 10

    def test_autocorrelated_chain_is_calibrated(self):
        rng = np.random.default_rng(2)
        scores = []
        for _ in range(100):
            e = rng.normal(size=5000)
            x = np.empty_like(e)
            x[0] = e[0]
            for i in range(1, e.size):
                x[i] = 0.9 * x[i - 1] + e[i]
            scores.append(geweke(x))
        assert np.mean(np.abs(scores) < 1.96) > 0.85

    def test_constant_chain(self):
        assert geweke(np.ones(500)) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            geweke(np.ones(50))
        with pytest.raises(ValueError):
            geweke(np.ones(500), first=0.6, last=0.5)


class TestCountModes:
    def test_unimodal(self):
        x = np.random.default_rng(0).normal(size=4000)
        assert count_modes(x).count == 1

    def test_bimodal(self):
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(-3, 0.5, 2000), rng.normal(3, 0.5, 1500)])
        m = count_modes(x)
        assert m.count == 2
        assert np.allclose(np.sort(m.locations), [-3, 3], atol=0.3)

    def test_minor_bump_is_ignored(self):
        rng = np.random.default_rng(2)
        x = np.concatenate([rng.normal(0, 1, 5000), rng.normal(8, 0.3, 50)])
        assert count_modes(x).count == 1

    def test_constant_samples(self):
        assert count_modes(np.full(300, 2.0)).count == 1

    def test_needs_enough_samples(self):
        with pytest.raises(ValueError):
            count_modes(np.zeros(10))


def test_credible_interval_of_uniform_grid():
    lo, hi = credible_interval(np.linspace(0, 1, 100001))
    assert lo == pytest.approx(0.025) and hi == pytest.approx(0.975)
