"""Closed-form kernel convolutions against quadrature and hand-derived values."""
from math import exp, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podes.kernels import (
    KernelSpec,
    SpatialKernelSpec,
    qq,
    qr,
    quadrature_oracle,
    rq,
    rr,
    spatial_convolutions,
)

SE = KernelSpec("squared_exponential", 0.5, 2.0, 0.0)
BOX = KernelSpec("uniform", 1.0, 1.0, 0.0)
FUNCS = {"RR": rr, "QR": qr, "QQ": qq}


class TestFrozenValues:
    """Values computed once by adaptive quadrature and frozen."""

    @pytest.mark.parametrize("which,t_j,t_k,expected", [
        ("RR", 0.3, 0.7, 0.37759638506959464),
        ("QR", 0.9, 0.4, 0.3726291084750619),
        ("QQ", 1.2, 0.8, 0.35378473791964565),
        ("QQ", 1.0, 1.0, 0.38175452539322335),
        ("QR", 2.0, 1.0, 0.6618556550762793),
    ])
    def test_squared_exponential(self, which, t_j, t_k, expected):
        assert FUNCS[which](SE, t_j, t_k) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("which,t_j,t_k,expected", [
        ("RR", 0.3, 0.7, 1.6),
        ("QR", 0.9, 0.4, 1.595),
        ("QQ", 1.2, 0.8, 1.5573333333333335),
        ("QQ", 1.0, 1.0, 5.0 / 3.0),
        ("QR", 2.0, 1.0, 3.0),
    ])
    def test_uniform(self, which, t_j, t_k, expected):
        assert FUNCS[which](BOX, t_j, t_k) == pytest.approx(expected, rel=1e-12)

    def test_spatial_factors(self):
        sk = SpatialKernelSpec(0.4, 1.0, 0.0)
        conv = spatial_convolutions(sk, np.array([0.3]), np.array([0.6]))
        assert conv.ss[0] == pytest.approx(0.005453169979049474, rel=1e-10)
        assert conv.rs[0] == pytest.approx(0.12187878853169754, rel=1e-10)


class TestHandDerived:
    def test_squared_exponential_derivative_covariance(self):
        # Product of two Gaussians integrates to sqrt(pi) * scale * exp(-d^2 / (4 scale^2)).
        d = 0.4
        expected = sqrt(pi) * 0.5 * exp(-d**2 / (4 * 0.25)) / 2.0
        assert rr(SE, 0.3, 0.3 + d) == pytest.approx(expected, rel=1e-14)

    def test_uniform_derivative_covariance_is_overlap_length(self):
        for d in (0.0, 0.5, 1.9, 2.0, 2.5):
            assert rr(BOX, 1.0, 1.0 + d) == pytest.approx(max(2.0 - d, 0.0), abs=1e-14)

    def test_uniform_state_variance_at_one(self):
        # double integral of (2 - |x - y|) over the unit square
        assert qq(BOX, 1.0, 1.0) == pytest.approx(2.0 - 1.0 / 3.0, rel=1e-14)


class TestStructure:
    @pytest.mark.parametrize("k", [SE, BOX])
    def test_state_pinned_at_origin(self, k):
        t = np.linspace(0, 3, 7)
        assert np.all(qq(k, 0.0, t) == 0.0)
        assert np.allclose(qr(k, 0.0, t), 0.0, atol=1e-15)

    @pytest.mark.parametrize("k", [SE, BOX])
    def test_symmetry_and_adjoint(self, k):
        a, b = 0.7, 1.9
        assert rr(k, a, b) == pytest.approx(rr(k, b, a), rel=1e-14)
        assert qq(k, a, b) == pytest.approx(qq(k, b, a), rel=1e-14)
        assert rq(k, a, b) == qr(k, b, a)

    @pytest.mark.parametrize("k", [SE, BOX])
    def test_precision_scales_every_covariance(self, k):
        k3 = k.with_precision(3.0 * k.precision)
        for f in (rr, qr, qq):
            assert f(k3, 0.4, 1.1) == pytest.approx(f(k, 0.4, 1.1) / 3.0, rel=1e-14)

    @pytest.mark.parametrize("k", [SE, BOX])
    def test_state_gram_matrix_is_positive_semidefinite(self, k):
        t = np.linspace(0.05, 3.0, 40)
        gram = qq(k, t[:, None], t[None, :])
        assert np.linalg.eigvalsh(gram).min() > -1e-10 * np.abs(gram).max()

    def test_uniform_support_is_twice_the_length_scale(self):
        assert BOX.support == 2.0
        assert SE.support == float("inf")

    @pytest.mark.parametrize("bad", [
        dict(length_scale=0.0), dict(length_scale=-1.0), dict(precision=0.0),
        dict(length_scale=float("nan")),
    ])
    def test_invalid_hyperparameters(self, bad):
        args = dict(family="uniform", length_scale=1.0, precision=1.0) | bad
        with pytest.raises(ValueError):
            KernelSpec(**args)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            KernelSpec("matern", 1.0)

    def test_spatial_kernel_rejects_other_families(self):
        with pytest.raises(ValueError):
            SpatialKernelSpec(0.4, family="uniform")

    def test_oracle_rejects_unknown_convolution(self):
        with pytest.raises(ValueError):
            quadrature_oracle(SE, "RX", 0.1, 0.2)


@settings(max_examples=40, deadline=None)
@given(
    family=st.sampled_from(["squared_exponential", "uniform"]),
    which=st.sampled_from(["RR", "QR", "QQ"]),
    t_j=st.floats(0.0, 3.0), t_k=st.floats(0.0, 3.0),
    scale=st.floats(0.05, 1.0), precision=st.floats(0.1, 10.0),
)
def test_closed_forms_match_quadrature(family, which, t_j, t_k, scale, precision):
    k = KernelSpec(family, scale, precision, 0.0)
    expected = quadrature_oracle(k, which, t_j, t_k)
    got = float(FUNCS[which](k, t_j, t_k))
    assert abs(got - expected) <= 1e-6 * abs(expected) + 1e-12


@settings(max_examples=25, deadline=None)
@given(which=st.sampled_from(["RR", "RQ", "RS", "QQ", "QS", "SS"]),
       x_1=st.floats(0.0, 1.0), x_2=st.floats(0.0, 1.0), scale=st.floats(0.1, 0.8))
def test_spatial_factors_match_quadrature(which, x_1, x_2, scale):
    sk = SpatialKernelSpec(scale, 1.0, 0.0)
    order = {"R": 0, "Q": 1, "S": 2}
    got = float(sk.convolution(order[which[0]], order[which[1]], x_1, x_2))
    expected = quadrature_oracle(sk, which, x_1, x_2)
    assert abs(got - expected) <= 1e-6 * abs(expected) + 1e-12
