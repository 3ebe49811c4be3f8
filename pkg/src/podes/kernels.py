"""Closed-form convolution kernels for integrated Gaussian-process priors.

The derivative of the unknown solution is modelled as a process convolution
``u_t(t) = alpha**-1/2 * int R(t, z) dW(z)``.  Every covariance the solver needs
is then an integral of a product of ``R`` (or its running integrals ``Q`` and
``S`` from the left boundary) against itself.

All of them can be written through one stationary base convolution
``k0(x) = int R(x, z) R(0, z) dz`` and its antiderivatives ``K_j`` normalised by
``K_j(0) = 0``.  If ``A_p`` denotes ``p``-fold integration from the origin ``a``,

    A_p[x1] A_q[x2] k0(x1 - x2)
        = (-1)**q K_{p+q}(x1 - x2)
          - sum_{j<q} (-1)**(q-j) (x2-a)**j / j! K_{p+q-j}(x1 - a)
          - sum_{i<p} (-1)**(p-i) (x1-a)**i / i! K_{p+q-i}(x2 - a)

which gives ``QR``, ``QQ`` and all spatial ``S``-type terms from a handful of
elementary functions.  :func:`quadrature_oracle` evaluates the same quantities
by direct numerical integration and is used to validate every closed form.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import factorial, sqrt, pi

import numpy as np
from scipy import integrate
from scipy.special import erf, erfc

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "SpatialKernelSpec",
    "SpatialConvolutions",
    "QuadratureError",
    "rr",
    "qr",
    "rq",
    "qq",
    "integrated_convolution",
    "spatial_convolutions",
    "quadrature_oracle",
]

SQRT_PI = sqrt(pi)


class KernelFamily(str, Enum):
    """Supported generating kernels ``R``."""

    SQUARED_EXPONENTIAL = "squared_exponential"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, value: "KernelFamily | str") -> "KernelFamily":
        if isinstance(value, cls):
            return value
        aliases = {"se": cls.SQUARED_EXPONENTIAL, "sqexp": cls.SQUARED_EXPONENTIAL}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


class QuadratureError(RuntimeError):
    """Raised when the oracle cannot reach its accuracy target."""

    def __init__(self, value: float, error_estimate: float):
        super().__init__(
            f"quadrature did not converge: value={value!r}, "
            f"estimated abs error={error_estimate:.3e}"
        )
        self.value = value
        self.error_estimate = error_estimate


def _se_primitive(order: int, x, length_scale: float):
    """Antiderivative of order ``order`` of ``sqrt(pi)*l*exp(-x**2/(2l)**2)``.

    For ``order >= 1`` every antiderivative equals ``pi*l**2`` times a
    polynomial-erf combination in ``x`` with width ``w = 2l``.
    """
    x = np.asarray(x, dtype=float)
    w = 2.0 * length_scale
    gauss = np.exp(-((x / w) ** 2))
    if order == 0:
        return SQRT_PI * length_scale * gauss
    e = erf(x / w)
    if order == 1:
        body = e
    elif order == 2:
        body = x * e + (w / SQRT_PI) * (gauss - 1.0)
    elif order == 3:
        body = (x**2 / 2 + w**2 / 4) * e + (w * x / (2 * SQRT_PI)) * gauss - w * x / SQRT_PI
    elif order == 4:
        body = (
            (x**3 / 6 + w**2 * x / 4) * e
            + (w * (x**2 + w**2) / (6 * SQRT_PI)) * gauss
            - w * x**2 / (2 * SQRT_PI)
            - w**3 / (6 * SQRT_PI)
        )
    else:
        raise ValueError(f"squared-exponential antiderivative of order {order} not available")
    return pi * length_scale**2 * body


def _uniform_primitive(order: int, x, length_scale: float):
    """Antiderivatives of the triangle ``max(0, 2l - |x|)``."""
    x = np.asarray(x, dtype=float)
    support = 2.0 * length_scale
    ax = np.abs(x)
    c = np.minimum(ax, support)
    if order == 0:
        return support - c
    if order == 1:
        return np.sign(x) * (support * c - c**2 / 2)
    if order == 2:
        return support * c**2 / 2 - c**3 / 6 + (ax - c) * support**2 / 2
    raise ValueError(f"uniform antiderivative of order {order} not available")


_PRIMITIVES = {
    KernelFamily.SQUARED_EXPONENTIAL: _se_primitive,
    KernelFamily.UNIFORM: _uniform_primitive,
}


@dataclass(frozen=True)
class KernelSpec:
    """Temporal covariance kernel with its hyperparameters.

    Parameters
    ----------
    family : KernelFamily or str
        ``"squared_exponential"`` or ``"uniform"``.
    length_scale : float
        Kernel length-scale ``lambda`` in time units.  The uniform kernel is the
        indicator of ``|t - z| < lambda``, so its convolution has support
        ``2 * lambda``.
    precision : float
        Prior precision ``alpha``; the prior derivative variance scales as
        ``1 / alpha``.
    origin : float
        Left boundary ``a`` of the domain, where the state is pinned.
    """

    family: KernelFamily
    length_scale: float
    precision: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        if not (np.isfinite(self.length_scale) and self.length_scale > 0):
            raise ValueError(f"length_scale must be positive, got {self.length_scale!r}")
        if not (np.isfinite(self.precision) and self.precision > 0):
            raise ValueError(f"precision must be positive, got {self.precision!r}")
        if not np.isfinite(self.origin):
            raise ValueError("origin must be finite")

    @property
    def support(self) -> float:
        """Half-open support length of ``rr`` (infinite for squared-exponential)."""
        if self.family is KernelFamily.UNIFORM:
            return 2.0 * self.length_scale
        return float("inf")

    def primitive(self, order: int, x):
        """Unscaled antiderivative ``K_order`` of the base convolution at ``x``."""
        return _PRIMITIVES[self.family](order, x, self.length_scale)

    def with_precision(self, precision: float) -> "KernelSpec":
        return KernelSpec(self.family, self.length_scale, precision, self.origin)


def rr(k: KernelSpec, t_j, t_k):
    """Prior covariance of the derivative, ``C_t^0(t_j, t_k)``.

    Broadcasts over array inputs.
    """
    t_j, t_k = np.asarray(t_j, float), np.asarray(t_k, float)
    return k.primitive(0, t_j - t_k) / k.precision


def qr(k: KernelSpec, t_j, t_k):
    """Cross-covariance between the state at ``t_j`` and the derivative at ``t_k``.

    Equals ``int_a^{t_j} C_t^0(z, t_k) dz``.
    """
    t_j, t_k = np.asarray(t_j, float), np.asarray(t_k, float)
    a = k.origin
    if k.family is KernelFamily.SQUARED_EXPONENTIAL:
        w = 2.0 * k.length_scale
        return pi * k.length_scale**2 * _erf_sum((t_j - t_k) / w, (t_k - a) / w) / k.precision
    return (k.primitive(1, t_j - t_k) + k.primitive(1, t_k - a)) / k.precision


def _erf_sum(u, v):
    """``erf(u) + erf(v)`` without cancellation when the signs differ.

    Uses ``erf(u) + erf(v) = erfc(-u) - erfc(v)``, which keeps full relative
    accuracy in the far tails where both error functions saturate.
    """
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    out = erf(u) + erf(v)
    left = (u <= 0) & (v >= 0)
    right = (v <= 0) & (u >= 0)
    out = np.where(left, erfc(-u) - erfc(v), out)
    out = np.where(right, erfc(-v) - erfc(u), out)
    return out[()] if out.ndim == 0 else out


def rq(k: KernelSpec, t_j, t_k):
    """Adjoint of :func:`qr`: derivative at ``t_j`` against state at ``t_k``."""
    return qr(k, t_k, t_j)


def qq(k: KernelSpec, t_j, t_k):
    """Prior covariance of the state, ``C^0(t_j, t_k)``; zero at the origin."""
    t_j, t_k = np.asarray(t_j, float), np.asarray(t_k, float)
    a = k.origin
    return (
        k.primitive(2, t_j - a) + k.primitive(2, t_k - a) - k.primitive(2, t_j - t_k)
    ) / k.precision


def integrated_convolution(primitive, order_1: int, order_2: int, x_1, x_2, origin: float):
    """Convolution of ``order_1``- and ``order_2``-fold integrated kernels.

    Parameters
    ----------
    primitive : callable
        ``primitive(j, x)`` returning the antiderivative ``K_j`` of the base
        convolution, with ``K_j(0) = 0`` for ``j >= 1``.
    order_1, order_2 : int
        Number of integrations from ``origin`` applied in the first and second
        argument (0 for ``R``, 1 for ``Q``, 2 for ``S``).
    x_1, x_2 : array_like
        Evaluation points; broadcast against each other.
    origin : float
        Lower limit of every integration.

    Returns
    -------
    ndarray
        The unscaled convolution (no precision factor).
    """
    x_1 = np.asarray(x_1, float)
    x_2 = np.asarray(x_2, float)
    total = order_1 + order_2
    d1, d2 = x_1 - origin, x_2 - origin
    out = (-1.0) ** order_2 * primitive(total, x_1 - x_2)
    for j in range(order_2):
        out = out - (-1.0) ** (order_2 - j) * d2**j / factorial(j) * primitive(total - j, d1)
    for i in range(order_1):
        out = out - (-1.0) ** (order_1 - i) * d1**i / factorial(i) * primitive(total - i, d2)
    return out


@dataclass(frozen=True)
class SpatialKernelSpec:
    """Spatial squared-exponential kernel used by the heat-equation prior.

    Parameters
    ----------
    length_scale : float
        Spatial length-scale ``nu``.
    precision : float
        Spatial prior precision ``beta``.
    origin : float
        Left spatial boundary, where the twice-integrated state is pinned.
    family : KernelFamily
        Only the squared-exponential family is supported.
    """

    length_scale: float
    precision: float = 1.0
    origin: float = 0.0
    family: KernelFamily = KernelFamily.SQUARED_EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        if self.family is not KernelFamily.SQUARED_EXPONENTIAL:
            raise ValueError("spatial kernels support the squared-exponential family only")
        if not (np.isfinite(self.length_scale) and self.length_scale > 0):
            raise ValueError(f"length_scale must be positive, got {self.length_scale!r}")
        if not (np.isfinite(self.precision) and self.precision > 0):
            raise ValueError(f"precision must be positive, got {self.precision!r}")

    def primitive(self, order: int, x):
        return _se_primitive(order, x, self.length_scale)

    def convolution(self, order_1: int, order_2: int, x_1, x_2):
        """Scaled convolution with ``order_1``/``order_2`` integrations."""
        return (
            integrated_convolution(self.primitive, order_1, order_2, x_1, x_2, self.origin)
            / self.precision
        )


@dataclass(frozen=True)
class SpatialConvolutions:
    """All pairwise spatial factors between ``R``, ``Q`` and ``S`` kernels.

    The first letter names the kernel in the first argument, the second the
    kernel in the second argument, so ``rs[i, j] = int R(x1_i, z) S(x2_j, z) dz``.
    """

    rr: np.ndarray
    rq: np.ndarray
    rs: np.ndarray
    qr: np.ndarray
    qq: np.ndarray
    qs: np.ndarray
    sr: np.ndarray
    sq: np.ndarray
    ss: np.ndarray


def spatial_convolutions(sk: SpatialKernelSpec, x_1, x_2) -> SpatialConvolutions:
    """Evaluate every spatial factor of the separable heat-equation prior."""
    if not isinstance(sk, SpatialKernelSpec):
        raise TypeError("spatial_convolutions expects a SpatialKernelSpec")
    names = "rqs"
    values = {
        f"{names[p]}{names[q]}": sk.convolution(p, q, x_1, x_2)
        for p in range(3)
        for q in range(3)
    }
    return SpatialConvolutions(**values)


# --- quadrature oracle -----------------------------------------------------

_ORDER_OF = {"R": 0, "Q": 1, "S": 2}


def _se_latent(order: int, t: float, z, scale: float, origin: float):
    """``R``, ``Q`` or ``S`` for the Gaussian kernel, as functions of ``z``."""
    r_t = np.exp(-((t - z) ** 2) / (2 * scale**2))
    if order == 0:
        return r_t
    root = sqrt(2.0) * scale
    q_t = scale * sqrt(pi / 2) * (erf((t - z) / root) - erf((origin - z) / root))
    if order == 1:
        return q_t
    r_a = np.exp(-((origin - z) ** 2) / (2 * scale**2))
    return (t - z) * q_t + scale**2 * (r_t - r_a)


def _uniform_latent(order: int, t: float, z, scale: float, origin: float):
    """``R``, ``Q`` or ``S`` for the box kernel ``1{|t - z| < scale}``."""
    z = np.asarray(z, float)
    if order == 0:
        return (np.abs(t - z) < scale).astype(float)
    lo_t, hi_t, sign = (origin, t, 1.0) if t >= origin else (t, origin, -1.0)
    lo = np.maximum(lo_t, z - scale)
    hi = np.minimum(hi_t, z + scale)
    width = np.maximum(hi - lo, 0.0)
    if order == 1:
        return sign * width
    hi = np.where(width > 0, hi, lo)
    # int (t - y) dy over [lo, hi]
    return sign * (t * (hi - lo) - (hi**2 - lo**2) / 2)


def quadrature_oracle(k, which: str, t_j: float, t_k: float, rtol: float = 1e-8) -> float:
    """Numerically integrate a defining convolution.

    Parameters
    ----------
    k : KernelSpec or SpatialKernelSpec
        Kernel whose convolution is evaluated.
    which : str
        Two letters from ``R``, ``Q``, ``S`` naming the kernel applied to the
        first and second argument, e.g. ``"QR"`` or ``"SS"``.
    t_j, t_k : float
        Evaluation points.
    rtol : float
        Relative accuracy target; a :class:`QuadratureError` is raised if the
        error estimate exceeds it.

    Returns
    -------
    float
        ``precision**-1 * int K1(t_j, z) K2(t_k, z) dz``.
    """
    which = which.upper()
    if len(which) != 2 or any(c not in _ORDER_OF for c in which):
        raise ValueError(f"unknown convolution {which!r}")
    p, q = _ORDER_OF[which[0]], _ORDER_OF[which[1]]
    family = KernelFamily.parse(k.family)
    scale, origin = float(k.length_scale), float(k.origin)
    t_j, t_k = float(t_j), float(t_k)
    latent = _se_latent if family is KernelFamily.SQUARED_EXPONENTIAL else _uniform_latent

    def integrand(z):
        return latent(p, t_j, z, scale, origin) * latent(q, t_k, z, scale, origin)

    anchors = [t_j, t_k] + ([origin] if p or q else [])
    if family is KernelFamily.SQUARED_EXPONENTIAL:
        margin = 12.0 * scale
        breaks = sorted(set(anchors))
    else:
        margin = scale
        breaks = sorted({b + s for b in anchors for s in (-scale, scale)})
    lo, hi = min(anchors) - margin, max(anchors) + margin
    edges = sorted(set([lo, hi] + [b for b in breaks if lo < b < hi]))

    total, err = 0.0, 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        if right - left <= 0:
            continue
        val, est = integrate.quad(integrand, left, right, epsabs=1e-15, epsrel=1e-12, limit=400)
        total += val
        err += est
    if err > rtol * abs(total) + 1e-15:
        raise QuadratureError(total / k.precision, err / k.precision)
    return total / k.precision
