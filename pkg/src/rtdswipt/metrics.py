"""Output densities, differential entropies, mutual information and achievable rates.

All information quantities are in nats per channel use.  The receiver
observes ``y = x + n`` with ``n ~ N(0, sigma^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import (DiscreteDistribution, ExpQuadraticX, PowerLawX, UniformX)
from .specfun import QuadratureSpec, integrate

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# Gaussian kernel truncation in units of sigma; exp(-81/2) ~ 3e-18.
_KERNEL_REACH = 9.0
# Entropy integration window beyond the signal support, in units of sigma.
ENTROPY_TAIL = 6.0


class ClosedFormDomainError(ValueError):
    """Closed-form expression used outside its parameter range."""


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def entropy(self) -> float:
        """``0.5 ln(2 pi e sigma^2)``."""
        return 0.5 * math.log(2.0 * math.pi * math.e * self.sigma2)

    @classmethod
    def from_dbm(cls, dbm: float) -> "NoiseModel":
        return cls(10.0 ** (dbm / 10.0) * 1e-3)


@dataclass(frozen=True)
class RateResult:
    mutual_information: float
    achievable_rate: float
    entropy_x: float


def _log_q_diff(a, b):
    """``log(Q(a) - Q(b))`` for ``a < b`` without cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    right = (a + b) > 0
    # right of centre: both tails are upper tails; otherwise use lower tails
    big = np.where(right, special.log_ndtr(-a), special.log_ndtr(b))
    small = np.where(right, special.log_ndtr(-b), special.log_ndtr(a))
    with np.errstate(divide="ignore"):
        return big + np.log1p(-np.exp(small - big))


def _mixture_density(y, nodes, weights, sigma):
    """``sum_i w_i phi_sigma(y - x_i)`` using only nodes within reach of each y."""
    y = np.asarray(y, dtype=float)
    flat = y.ravel()
    order = np.argsort(nodes, kind="stable")
    xs = np.asarray(nodes, dtype=float)[order]
    ws = np.asarray(weights, dtype=float)[order]
    out = np.zeros_like(flat)
    y_order = np.argsort(flat, kind="stable")
    ys = flat[y_order]
    reach = _KERNEL_REACH * sigma
    block = 256
    res = np.empty_like(ys)
    for start in range(0, len(ys), block):
        yb = ys[start:start + block]
        i0 = np.searchsorted(xs, yb[0] - reach, side="left")
        i1 = np.searchsorted(xs, yb[-1] + reach, side="right")
        if i1 <= i0:
            res[start:start + block] = 0.0
            continue
        z = (yb[:, None] - xs[None, i0:i1]) / sigma
        res[start:start + block] = np.exp(-0.5 * z * z) @ ws[i0:i1]
    out[y_order] = res * (_INV_SQRT_2PI / sigma)
    return out.reshape(y.shape)


def output_pdf_uniform(p_max: float, noise: NoiseModel, y):
    """``(1/sqrt(P)) [Q((y - sqrt(P))/sigma) - Q(y/sigma)]`` for a uniform ``x``."""
    if not p_max > 0:
        raise ValueError("p_max must be positive")
    top = math.sqrt(p_max)
    s = noise.sigma
    y = np.asarray(y, dtype=float)
    out = np.exp(_log_q_diff((y - top) / s, y / s)) / top
    return float(out) if out.ndim == 0 else out


def output_pdf_expquad(fx: ExpQuadraticX, noise: NoiseModel, y):
    """Closed-form output density for exp-quadratic ``x``.

    Raises
    ------
    ClosedFormDomainError
        If ``2 mu1^2 sigma^2 >= P_max``; use :func:`output_pdf` instead.
    """
    p, mu1, mu0 = fx.p_max, fx.mu1, fx.mu0
    mu4_sq = 1.0 - 2.0 * mu1 * mu1 * noise.sigma2 / p
    if mu4_sq <= 0:
        raise ClosedFormDomainError(f"mu4^2 = {mu4_sq} <= 0")
    mu4 = math.sqrt(mu4_sq)
    s = noise.sigma
    y = np.asarray(y, dtype=float)
    log_f = (y * y * mu1 * mu1 / (p * mu4_sq) - mu0 - math.log(mu4)
             + _log_q_diff((y - mu4_sq * math.sqrt(p)) / (mu4 * s), y / (mu4 * s)))
    out = np.exp(log_f)
    return float(out) if out.ndim == 0 else out


def _resolution(noise: NoiseModel) -> float:
    return noise.sigma / 2.0


def output_pdf(fx, noise: NoiseModel, y, rel_tol: float = 1e-12):
    """Density of ``y = x + n``.

    Discrete inputs give the Gaussian mixture directly; densities are
    convolved with the noise kernel by adaptive quadrature over
    ``[y - 9 sigma, y + 9 sigma]`` intersected with the support.
    """
    s = noise.sigma
    if isinstance(fx, DiscreteDistribution) or not hasattr(fx, "pdf") or not hasattr(fx, "cdf"):
        nodes, weights = fx.mixture_nodes(_resolution(noise))
        return _mixture_density(y, nodes, weights, s) if np.ndim(y) else float(
            _mixture_density(np.array([y]), nodes, weights, s)[0])
    lo, hi = fx.support
    scale = fx._feature_scale() if hasattr(fx, "_feature_scale") else hi - lo
    step = min(s, scale) / 4

    def one(yv: float) -> float:
        a = max(lo, yv - _KERNEL_REACH * s)
        b = min(hi, yv + _KERNEL_REACH * s)
        if b <= a:
            return 0.0
        f = lambda x: fx.pdf(x) * np.exp(-0.5 * ((yv - x) / s) ** 2) * (_INV_SQRT_2PI / s)
        return integrate(f, QuadratureSpec(a, b, max_step=step, rel_tol=rel_tol, abs_tol=1e-300))

    ys = np.asarray(y, dtype=float)
    out = np.array([one(v) for v in ys.ravel()]).reshape(ys.shape)
    return float(out) if out.ndim == 0 else out


def _density_function(fx, noise: NoiseModel):
    if isinstance(fx, UniformX):
        return lambda y: output_pdf_uniform(fx.p_max, noise, y)
    if isinstance(fx, PowerLawX) and fx.alpha_cf == 1.0:
        return lambda y: output_pdf_uniform(fx.p_max, noise, y)
    if isinstance(fx, ExpQuadraticX) and 2.0 * fx.mu1**2 * noise.sigma2 < 0.5 * fx.p_max:
        return lambda y: output_pdf_expquad(fx, noise, y)
    nodes, weights = fx.mixture_nodes(_resolution(noise))
    return lambda y: _mixture_density(y, nodes, weights, noise.sigma)


def output_entropy(fx, noise: NoiseModel, rel_tol: float = 1e-10) -> float:
    """Differential entropy of ``y`` in nats."""
    s = noise.sigma
    lo, hi = fx.support
    f = _density_function(fx, noise)

    def integrand(y):
        v = np.asarray(f(y), dtype=float)
        return -special.xlogy(v, v)

    spec = QuadratureSpec(lo - ENTROPY_TAIL * s, hi + ENTROPY_TAIL * s, max_step=s / 10, rel_tol=rel_tol,
                          abs_tol=1e-12)
    return integrate(integrand, spec)


def mutual_information(fx, noise: NoiseModel) -> float:
    """``h(y) - h(n)`` in nats, clamped below at zero."""
    return max(0.0, output_entropy(fx, noise) - noise.entropy)


def achievable_rate(entropy_x: float, noise: NoiseModel) -> float:
    """Entropy-power lower bound ``0.5 ln(1 + exp(2 h_x) / (2 pi e sigma^2))``."""
    if math.isnan(entropy_x) or math.isinf(entropy_x) and entropy_x > 0:
        raise ValueError("entropy_x must be finite or -inf")
    if entropy_x == -math.inf:
        return 0.0
    z = 2.0 * entropy_x - math.log(2.0 * math.pi * math.e * noise.sigma2)
    return 0.5 * float(np.logaddexp(0.0, z))


def entropy(fx) -> float:
    """Differential entropy of ``x``; ``-inf`` for discrete distributions."""
    if isinstance(fx, DiscreteDistribution):
        return -math.inf
    if hasattr(fx, "entropy"):
        return fx.entropy()
    return fx.entropy_quadrature()


def rate_powerlaw(p_max: float, alpha_cf: float, noise: NoiseModel) -> float:
    """Achievable rate of the power-law family in closed form."""
    if not alpha_cf >= 1:
        raise ValueError("alpha_cf must be >= 1")
    a = alpha_cf
    z = math.log(p_max) + 2.0 * (a - 1.0) / a - math.log(2.0 * math.pi * math.e * noise.sigma2 * a * a)
    return 0.5 * float(np.logaddexp(0.0, z))


def rate_result(fx, noise: NoiseModel) -> RateResult:
    h = entropy(fx)
    return RateResult(mutual_information(fx, noise), achievable_rate(h, noise), h)
