"""Forward sampling for delay initial function problems."""
import numpy as np
import pytest

from podes import engine, zoo
from podes.dde import DifpProblem, sample_trajectory_dde
from podes.engine import Grid
from podes.kernels import KernelSpec
from podes.ode import IvpProblem, sample_trajectory

LINEAR = zoo.get("linear_dde")


def constant_history(t, rng, theta):
    return np.array([1.0])


class TestProblem:
    def test_rejects_negative_lag(self):
        with pytest.raises(ValueError):
            DifpProblem(lambda t, u, ul, th: -ul, 0.0, 1.0, -0.5, constant_history)

    def test_history_must_be_finite(self):
        p = DifpProblem(lambda t, u, ul, th: -ul, 0.0, 1.0, 0.5,
                        lambda t, rng, th: np.array([np.nan]))
        with pytest.raises(FloatingPointError):
            p.history(-0.1, None)

    def test_initial_state_defaults_to_history(self):
        g = Grid.uniform(0.0, 4.0, 41)
        d = sample_trajectory_dde(LINEAR.problem, engine.policy_kernel("uniform", g, 4.0), g, 0)
        assert d.u[0, 0] == 1.0


class TestSampler:
    @pytest.mark.parametrize("inflation", [True, False])
    def test_literal_matches_dense(self, inflation):
        g = Grid.uniform(0.0, 4.0, 61)
        k = engine.policy_kernel("uniform", g, 4.0)
        a = sample_trajectory_dde(LINEAR.problem, k, g, (3, 1), lag_inflation=inflation)
        b = sample_trajectory_dde(LINEAR.problem, k, g, (3, 1), method="literal",
                                  lag_inflation=inflation)
        assert np.allclose(a.f_seq, b.f_seq, atol=1e-10)
        assert np.allclose(a.mean, b.mean, atol=1e-10)

    def test_lag_beyond_domain_reduces_to_ode(self):
        # Only the history is ever read, so u' = 1 and the mean is the ODE mean.
        g = Grid.uniform(0.0, 1.0, 30)
        k = engine.policy_kernel("squared_exponential", g, 2.0)
        dde = DifpProblem(lambda t, u, ul, th: ul, 0.0, 1.0, 5.0, constant_history,
                          u_init=[0.0])
        ode = IvpProblem(lambda t, u, th: np.array([1.0]), 0.0, 1.0, [0.0])
        a = sample_trajectory_dde(dde, k, g, 0, lag_inflation=False)
        b = sample_trajectory(ode, k, g, 0, method="dense")
        assert np.allclose(a.mean, b.mean, atol=1e-12)

    def test_ensemble_tracks_method_of_steps_solution(self):
        g = Grid.uniform(0.0, 4.0, 201)
        k = engine.policy_kernel("uniform", g, 4.0)
        draws = np.stack([sample_trajectory_dde(LINEAR.problem, k, g, (0, i)).u[:, 0]
                          for i in range(10)])
        exact = LINEAR.exact(g.s)[:, 0]
        assert np.max(np.abs(draws.mean(0) - exact)) < 0.3

    def test_reproducible(self):
        g = Grid.uniform(0.0, 4.0, 41)
        k = engine.policy_kernel("uniform", g, 4.0)
        a = sample_trajectory_dde(LINEAR.problem, k, g, 8)
        b = sample_trajectory_dde(LINEAR.problem, k, g, 8)
        assert np.array_equal(a.u, b.u)

    def test_rejects_unknown_method(self):
        g = Grid.uniform(0.0, 4.0, 41)
        with pytest.raises(ValueError):
            sample_trajectory_dde(LINEAR.problem, engine.policy_kernel("uniform", g), g, 0,
                                  method="banded")

    def test_jakstat_draw_is_finite_at_generating_values(self):
        truth = zoo.JAKSTAT_TRUTH
        k = KernelSpec("uniform", truth["length_scale"], truth["precision"], 0.0)
        g = Grid.uniform(0.0, 60.0, 300)
        d = sample_trajectory_dde(zoo.jakstat_problem(truth["theta"]), k, g, 0)
        assert np.all(np.isfinite(d.u)) and np.max(np.abs(d.u)) < 10
