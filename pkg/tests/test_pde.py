"""Probabilistic heat-equation sampler."""
import numpy as np
import pytest

from podes.engine import Grid
from podes.kernels import SpatialKernelSpec
from podes.pde import HeatProblem, heat_kernels, sample_surface, spatial_factors


@pytest.fixture(scope="module")
def small():
    problem = HeatProblem(1.0)
    z = np.linspace(0.0, 1.0, 7)
    grid = Grid.uniform(0.0, 0.25, 9)
    kt, ks = heat_kernels(problem, grid, z)
    return problem, z, grid, kt, ks


class TestHeatProblem:
    def test_exact_solution(self):
        p = HeatProblem(1.0)
        assert p.exact(0.5, 0.25) == pytest.approx(np.exp(-np.pi**2 / 4), rel=1e-14)
        assert np.allclose(p.exact(np.linspace(0, 1, 5), 0.0), np.sin(np.pi * np.linspace(0, 1, 5)))

    def test_negative_conductivity(self):
        with pytest.raises(ValueError):
            HeatProblem(-1.0)


class TestSampler:
    def test_literal_matches_kronecker(self, small):
        problem, z, grid, kt, ks = small
        a = sample_surface(problem, kt, ks, z, grid, (2, 5))
        b = sample_surface(problem, kt, ks, z, grid, (2, 5), method="literal")
        scale = np.abs(a.u).max()
        assert np.allclose(a.mean, b.mean, rtol=0, atol=1e-6 * scale)
        # The final covariance is nearly singular, so the two factorisations pick
        # up different diagonal jitter; the draws agree only to that level.
        assert np.allclose(a.u, b.u, rtol=0, atol=1e-3 * scale)

    def test_boundary_and_initial_values_are_exact(self, small):
        problem, z, grid, kt, ks = small
        d = sample_surface(problem, kt, ks, z, grid, 0)
        assert np.all(d.u[:, 0] == 0.0) and np.all(d.u[:, -1] == 0.0)
        assert np.array_equal(d.u[0], problem.initial(z) * (z > 0) * (z < 1))

    def test_subset_of_points(self, small):
        problem, z, grid, kt, ks = small
        full = sample_surface(problem, kt, ks, z, grid, 3)
        part = sample_surface(problem, kt, ks, z, grid, 3, x_eval=z[2:4],
                              t_eval=grid.s[[0, 4, 8]])
        assert part.u.shape == (3, 2)
        assert np.allclose(part.mean, full.mean[np.ix_([0, 4, 8], [2, 3])], atol=1e-12)

    def test_reproducible(self, small):
        problem, z, grid, kt, ks = small
        a = sample_surface(problem, kt, ks, z, grid, 11)
        b = sample_surface(problem, kt, ks, z, grid, 11)
        assert np.array_equal(a.u, b.u)

    def test_spatial_grid_must_include_boundaries(self, small):
        problem, z, grid, kt, ks = small
        with pytest.raises(ValueError):
            sample_surface(problem, kt, ks, z[1:], grid, 0)

    def test_mean_is_close_to_exact(self):
        problem = HeatProblem(1.0)
        z = np.linspace(0.0, 1.0, 15)
        grid = Grid.uniform(0.0, 0.25, 50)
        kt, ks = heat_kernels(problem, grid, z)
        d = sample_surface(problem, kt, ks, z, grid, 0)
        exact = problem.exact(z[None, :], grid.s[:, None])
        assert np.max(np.abs(d.mean - exact)) < 0.02

    def test_zero_conductivity_keeps_initial_profile_in_mean(self, small):
        _, z, grid, kt, ks = small
        problem = HeatProblem(0.0)
        d = sample_surface(problem, kt, ks, z, grid, 0)
        assert np.allclose(d.mean[:, 1:-1], problem.initial(z[1:-1]), atol=1e-12)


def test_spatial_state_factor_is_positive_definite():
    ks = SpatialKernelSpec(0.4, 1.0, 0.0)
    fac = spatial_factors(ks, np.linspace(0.1, 0.9, 9), 1.0)
    assert np.linalg.eigvalsh(fac.state).min() > 0
    assert fac.transfer.shape == (9, 9)
