"""Distributions of the transmit amplitude ``s`` and the post-EH signal ``x``.

``x = sqrt(psi(|h s|^2))`` is the noiseless information signal at the
receiver output.  The x-families (uniform, exp-quadratic, power-law) and
discrete mass-point distributions live on ``[0, sqrt(P_max)]``; the
truncated Gaussian baseline and pulled-back distributions live in the
transmit domain.

Every distribution exposes ``support``, ``pdf``, ``cdf``, ``ppf``,
``mean_square`` and ``sample``.  x-domain distributions additionally
provide ``mixture_nodes`` - a quadrature representation
``sum_i w_i delta(x - x_i)`` used to convolve with the receiver noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .eh_model import DomainError, MonotoneEHModel, PiecewiseEHModel, invert
from .specfun import SQRT_PI, QuadratureSpec, erfi_scaled, integrate

# Gauss-Legendre rule used for mixture_nodes panels.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _panels(lo: float, hi: float, width: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def _bisect_ppf(cdf, u, lo: float, hi: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    a = np.full(u.shape, lo)
    b = np.full(u.shape, hi)
    for _ in range(200):
        mid = 0.5 * (a + b)
        active = (mid > a) & (mid < b)
        if not np.any(active):
            break
        below = cdf(mid) < u
        a = np.where(active & below, mid, a)
        b = np.where(active & ~below, mid, b)
    return 0.5 * (a + b)


class _Continuous:
    """Shared helpers for distributions with a density."""

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def pdf(self, v):
        raise NotImplementedError

    def cdf(self, v):
        raise NotImplementedError

    def ppf(self, u):
        lo, hi = self.support
        out = _bisect_ppf(lambda v: np.asarray(self.cdf(v)), u, lo, hi)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    def _feature_scale(self) -> float:
        lo, hi = self.support
        return hi - lo

    def _quad_range(self) -> tuple[float, float]:
        """Interval carrying all but a negligible part of the mass."""
        return self.support

    def mixture_nodes(self, resolution: float) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes over the support with panels no wider than ``resolution``."""
        lo, hi = self._quad_range()
        nodes, w = _panels(lo, hi, min(resolution, self._feature_scale() / 4))
        return nodes, w * self.pdf(nodes)

    def entropy_quadrature(self, rel_tol: float = 1e-12) -> float:
        lo, hi = self._quad_range()

        def integrand(v):
            f = np.asarray(self.pdf(v), dtype=float)
            return -special.xlogy(f, f)

        return integrate(integrand, QuadratureSpec(lo, hi, max_step=self._feature_scale() / 16, rel_tol=rel_tol,
                                                   abs_tol=1e-15))

    def mean_square_quadrature(self, rel_tol: float = 1e-12) -> float:
        lo, hi = self._quad_range()
        return integrate(lambda v: v * v * self.pdf(v),
                         QuadratureSpec(lo, hi, max_step=self._feature_scale() / 16, rel_tol=rel_tol))


def _on_support(v, hi: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return (v >= 0.0) & (v <= hi)


@dataclass(frozen=True)
class UniformX(_Continuous):
    p_max: float

    def __post_init__(self):
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")

    @property
    def top(self) -> float:
        return math.sqrt(self.p_max)

    @property
    def support(self):
        return 0.0, self.top

    def pdf(self, v):
        out = np.where(_on_support(v, self.top), 1.0 / self.top, 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        out = np.clip(np.asarray(v, dtype=float) / self.top, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        out = np.asarray(u, dtype=float) * self.top
        return float(out) if out.ndim == 0 else out

    def mean_square(self) -> float:
        return self.p_max / 3.0

    def entropy(self) -> float:
        return math.log(self.top)


def _log_int_exp_sq(t):
    """``log(int_0^1 exp(t^2 u^2) du)`` for ``t >= 0``, vectorised."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    small = t <= 1.0
    if np.any(small):
        t2 = t[small] ** 2
        term = np.ones_like(t2)
        total = np.ones_like(t2)
        for k in range(1, 40):
            term = term * t2 / k
            total = total + term / (2 * k + 1)
        out[small] = np.log(total)
    big = ~small
    if np.any(big):
        # sqrt(pi)/2 * exp(-t^2) erfi(t) is Dawson's integral
        tb = t[big]
        out[big] = tb**2 + np.log(special.dawsn(tb) / tb)
    return out


def expquad_power_ratio(mu1):
    """``E{x^2} / P_max`` of the exp-quadratic family as a function of ``mu1``.

    Equals ``exp(mu1^2) / (sqrt(pi) mu1 erfi(mu1)) - 1 / (2 mu1^2)``, an
    increasing map of ``(0, inf)`` onto ``(1/3, 1)``.  Evaluated through
    the exp-scaled erfi for large arguments and through the ratio of the
    moment power series for small ones, so neither end cancels badly.
    """
    mu = float(mu1)
    if mu < 0:
        raise ValueError("mu1 must be non-negative")
    if mu < 0.5:
        m2 = mu * mu
        num = 0.0
        den = 0.0
        term = 1.0
        for k in range(0, 30):
            if k:
                term *= m2 / k
            num += term / (2 * k + 3)
            den += term / (2 * k + 1)
        return num / den
    # exp(mu^2) / (sqrt(pi) mu erfi(mu)) == 1 / (sqrt(pi) mu erfi_scaled(mu))
    return 1.0 / (SQRT_PI * mu * erfi_scaled(mu)) - 0.5 / (mu * mu)


@dataclass(frozen=True)
class ExpQuadraticX(_Continuous):
    """Density ``exp(-mu0 + mu1^2 x^2 / P_max)`` on ``[0, sqrt(P_max)]``.

    ``mu0`` is fixed by normalisation; a supplied value is checked against
    it to 1e-9.
    """

    p_max: float
    mu1: float
    mu0: float = field(default=math.nan)

    def __post_init__(self):
        if not self.p_max > 0 or self.mu1 < 0:
            raise ValueError("need p_max > 0 and mu1 >= 0")
        expected = 0.5 * math.log(self.p_max) + float(_log_int_exp_sq(self.mu1))
        if math.isnan(self.mu0):
            object.__setattr__(self, "mu0", expected)
        elif abs(self.mu0 - expected) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError(f"mu0={self.mu0} violates normalisation (expected {expected})")

    @classmethod
    def from_power_ratio(cls, p_max: float, mu1: float, ratio: float) -> "ExpQuadraticX":
        """Build with ``mu0 = mu1^2 + ln(sqrt(P_max) / (1 + 2 mu1^2 ratio))``."""
        mu0 = mu1 * mu1 + math.log(math.sqrt(p_max) / (1.0 + 2.0 * mu1 * mu1 * ratio))
        return cls(p_max, mu1, mu0)

    @property
    def top(self) -> float:
        return math.sqrt(self.p_max)

    @property
    def support(self):
        return 0.0, self.top

    def _feature_scale(self) -> float:
        return self.top / max(1.0, 2.0 * self.mu1**2)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        out = np.where(_on_support(v, self.top), np.exp(-self.mu0 + self.mu1**2 * v * v / self.p_max), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        z = np.clip(np.asarray(v, dtype=float) / self.top, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            log_f = math.log(self.top) - self.mu0 + np.log(z) + _log_int_exp_sq(self.mu1 * z)
        out = np.where(z > 0, np.minimum(np.exp(log_f), 1.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def power_ratio(self) -> float:
        return expquad_power_ratio(self.mu1)

    def mean_square(self) -> float:
        return self.p_max * self.power_ratio()

    def entropy(self) -> float:
        return self.mu0 - self.mu1**2 * self.power_ratio()


@dataclass(frozen=True)
class PowerLawX(_Continuous):
    """Scaled Beta(alpha, 1) density ``alpha P_max^(-alpha/2) x^(alpha-1)``."""

    p_max: float
    alpha_cf: float

    def __post_init__(self):
        if not self.p_max > 0 or not self.alpha_cf >= 1:
            raise ValueError("need p_max > 0 and alpha_cf >= 1")

    @property
    def top(self) -> float:
        return math.sqrt(self.p_max)

    @property
    def support(self):
        return 0.0, self.top

    def _feature_scale(self) -> float:
        return self.top / self.alpha_cf

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        a = self.alpha_cf
        inside = _on_support(v, self.top)
        z = np.where(inside, v / self.top, 0.0)
        out = np.where(inside, a / self.top * z ** (a - 1.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        z = np.clip(np.asarray(v, dtype=float) / self.top, 0.0, 1.0)
        out = z**self.alpha_cf
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        out = self.top * np.asarray(u, dtype=float) ** (1.0 / self.alpha_cf)
        return float(out) if out.ndim == 0 else out

    def mean_square(self) -> float:
        a = self.alpha_cf
        return self.p_max * a / (a + 2.0)

    def entropy(self) -> float:
        a = self.alpha_cf
        return (a - 1.0) / a - math.log(a / self.top)

    # x = top u^m removes the x^(alpha-1) endpoint singularity before Simpson
    _GRADING = 6.0

    def _graded(self, g, rel_tol: float, abs_tol: float = 0.0) -> float:
        m, top = self._GRADING, self.top

        def integrand(u):
            x = top * u**m
            return g(x) * (m * top) * u ** (m - 1.0)

        return integrate(integrand, QuadratureSpec(0.0, 1.0, max_step=1.0 / (16.0 * self.alpha_cf), rel_tol=rel_tol,
                                                   abs_tol=abs_tol))

    def entropy_quadrature(self, rel_tol: float = 1e-12) -> float:
        def g(x):
            f = np.asarray(self.pdf(x), dtype=float)
            return -special.xlogy(f, f)

        return self._graded(g, rel_tol, abs_tol=1e-15)

    def mean_square_quadrature(self, rel_tol: float = 1e-12) -> float:
        return self._graded(lambda x: x * x * self.pdf(x), rel_tol)


@dataclass(frozen=True)
class TruncatedGaussianS(_Continuous):
    """Gaussian centred at ``a_bar / 2`` with scale ``sigma_s``, truncated to ``[0, a_bar]``."""

    a_bar: float
    sigma_s: float

    def __post_init__(self):
        if not (self.a_bar > 0 and self.sigma_s > 0):
            raise ValueError("need a_bar > 0 and sigma_s > 0")

    @property
    def support(self):
        return 0.0, self.a_bar

    @property
    def _half_width(self) -> float:
        return self.a_bar / (2.0 * self.sigma_s)

    def _feature_scale(self) -> float:
        return min(self.a_bar, self.sigma_s)

    def _quad_range(self) -> tuple[float, float]:
        # beyond 12 sigma_s the density is below exp(-72) of its peak
        half = 0.5 * self.a_bar
        return max(0.0, half - 12.0 * self.sigma_s), min(self.a_bar, half + 12.0 * self.sigma_s)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        z = (2.0 * v - self.a_bar) / (2.0 * self.sigma_s)
        norm = self.sigma_s * special.erf(self.a_bar / (2.0 * math.sqrt(2.0) * self.sigma_s))
        dens = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) / norm
        out = np.where(_on_support(v, self.a_bar), dens, 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        v = np.clip(np.asarray(v, dtype=float), 0.0, self.a_bar)
        c = self._half_width
        z = (v - 0.5 * self.a_bar) / self.sigma_s
        lo = special.ndtr(-c)
        out = (special.ndtr(z) - lo) / (special.ndtr(c) - lo)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        c = self._half_width
        lo, hi = special.ndtr(-c), special.ndtr(c)
        if hi - lo > 1e-6:
            z = special.ndtri(lo + np.asarray(u, dtype=float) * (hi - lo))
            out = np.clip(0.5 * self.a_bar + self.sigma_s * z, 0.0, self.a_bar)
            return float(out) if np.ndim(out) == 0 else out
        return super().ppf(u)

    def mean_square(self) -> float:
        return self.mean_square_quadrature()

    def entropy(self) -> float:
        return self.entropy_quadrature()


@dataclass(frozen=True)
class DiscreteDistribution:
    """Mass points ``points`` with probabilities ``masses``; one point is a Dirac."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        ms = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if pts.shape != ms.shape or pts.ndim != 1 or len(pts) == 0:
            raise ValueError("points and masses must be equal-length 1-D arrays")
        if np.any(pts < 0) or np.any(np.diff(pts) <= 0):
            raise ValueError("points must be non-negative and strictly increasing")
        if np.any(ms < 0) or abs(ms.sum() - 1.0) > 1e-9:
            raise ValueError(f"masses must be non-negative and sum to 1 (sum={ms.sum()!r})")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    @classmethod
    def dirac(cls, location: float) -> "DiscreteDistribution":
        return cls(np.array([location]), np.array([1.0]))

    @classmethod
    def from_pairs(cls, points, masses) -> "DiscreteDistribution":
        """Sort, merge duplicate points and drop zero masses."""
        pts = np.asarray(points, dtype=float)
        ms = np.asarray(masses, dtype=float)
        order = np.argsort(pts, kind="stable")
        pts, ms = pts[order], ms[order]
        uniq, inv = np.unique(pts, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, ms)
        keep = merged > 0
        if not np.any(keep):
            raise ValueError("all masses are zero")
        return cls(uniq[keep], merged[keep] / merged[keep].sum())

    @property
    def support(self):
        return float(self.points[0]), float(self.points[-1])

    def pdf(self, v):
        """Point masses have no density; returns zero everywhere."""
        out = np.zeros(np.shape(v))
        return float(out) if out.ndim == 0 else out

    def pmf(self, v):
        v = np.asarray(v, dtype=float)
        idx = np.searchsorted(self.points, v)
        idx_c = np.minimum(idx, len(self.points) - 1)
        out = np.where(self.points[idx_c] == v, self.masses[idx_c], 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        cum = np.concatenate([[0.0], np.minimum(np.cumsum(self.masses), 1.0)])
        cum[-1] = 1.0
        out = cum[np.searchsorted(self.points, np.asarray(v, dtype=float), side="right")]
        return float(out) if np.ndim(out) == 0 else out

    def ppf(self, u):
        cum = np.cumsum(self.masses)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, np.asarray(u, dtype=float), side="left")
        out = self.points[np.minimum(idx, len(self.points) - 1)]
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    def mean_square(self) -> float:
        return float(np.dot(self.masses, self.points**2))

    def entropy(self) -> float:
        return -math.inf

    def mixture_nodes(self, resolution: float = math.inf):
        return self.points, self.masses


@dataclass(frozen=True)
class PulledBackS(_Continuous):
    """Transmit-amplitude distribution that produces a given x-distribution.

    ``F_s(s) = F_x(sqrt(psi_hat(|h s|^2)))`` on the monotone domain and
    constant across excluded received-power intervals.
    """

    fx: object
    monotone: MonotoneEHModel = field(repr=False)
    h_gain: float

    @property
    def support(self):
        top = self.fx.support[1]
        return 0.0, math.sqrt(invert(self.monotone, top * top)) / self.h_gain

    def _levels(self, s) -> np.ndarray:
        """Monotone envelope of ``psi`` at ``rho = |h s|^2``."""
        rho = (self.h_gain * np.asarray(s, dtype=float)) ** 2
        out = np.full(rho.shape, self.monotone.max_value)
        done = np.zeros(rho.shape, dtype=bool)
        for piece in self.monotone.pieces:
            below = ~done & (rho < piece.lo)
            # inside a gap before this piece: flat at the previous level
            out[below] = piece.p_lo
            done |= below
            inside = ~done & (rho <= piece.hi)
            out[inside] = piece.segment(rho[inside])
            done |= inside
        return out

    def x_of_s(self, s):
        return np.sqrt(np.maximum(self._levels(s), 0.0))

    def cdf(self, v):
        out = np.asarray(self.fx.cdf(self.x_of_s(v)))
        out = np.where(np.asarray(v) < 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def pdf(self, v):
        """Chain-rule density; zero on excluded intervals."""
        s = np.maximum(np.asarray(v, dtype=float), 1e-300)
        rho = (self.h_gain * s) ** 2
        dpsi = np.zeros(rho.shape)
        for piece in self.monotone.pieces:
            inside = (rho >= piece.lo) & (rho <= piece.hi)
            dpsi[inside] = piece.segment.derivative(rho[inside])
        x = self.x_of_s(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            dxds = np.where(x > 0, dpsi * self.h_gain**2 * s / x, 0.0)
        top = self.support[1]
        out = np.where((s <= top) & (np.asarray(v) >= 0), np.asarray(self.fx.pdf(x)) * dxds, 0.0)
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        x = np.asarray(self.fx.ppf(u), dtype=float)
        out = np.sqrt(invert(self.monotone, x * x)) / self.h_gain
        return float(out) if np.ndim(out) == 0 else out

    def harvested_power(self) -> float:
        """``E{psi(|h s|^2)}``, equal to ``E{x^2}`` of the source distribution."""
        return self.fx.mean_square()

    def mean_square(self) -> float:
        """``E{s^2}`` via ``int 2 s (1 - F_s(s)) ds``."""
        top = self.support[1]
        return integrate(lambda s: 2.0 * s * (1.0 - np.asarray(self.cdf(s))),
                         QuadratureSpec(0.0, top, max_step=top / 256, rel_tol=1e-10))


def pull_back(fx, monotone: MonotoneEHModel, h_gain: float):
    """Transmit distribution whose image through the monotone EH model is ``fx``.

    Discrete inputs map point by point; analytic inputs give a
    :class:`PulledBackS` defined through its cdf.
    """
    if not h_gain > 0:
        raise ValueError("h_gain must be positive")
    top = fx.support[1]
    if top * top > monotone.max_value * (1 + 1e-12):
        raise DomainError(f"x up to {top} needs harvested power {top * top} > model maximum {monotone.max_value}")
    if isinstance(fx, DiscreteDistribution):
        s = np.sqrt(np.asarray(invert(monotone, fx.points**2))) / h_gain
        s = np.atleast_1d(s)
        return DiscreteDistribution.from_pairs(s, fx.masses)
    return PulledBackS(fx, monotone, h_gain)


@dataclass(frozen=True)
class PushForwardX:
    """x-distribution induced by a transmit distribution through the full EH model.

    Used for baselines that do not avoid the non-monotone part of ``psi``.
    """

    fs: object
    model: PiecewiseEHModel = field(repr=False)
    h_gain: float

    def x_of_s(self, s):
        rho = np.minimum((self.h_gain * np.asarray(s, dtype=float)) ** 2, self.model.rho_max)
        return np.sqrt(np.maximum(self.model.evaluate(rho), 0.0))

    @property
    def support(self):
        lo, hi = self._s_range()
        s = np.linspace(lo, hi, 4097)
        x = self.x_of_s(s)
        return float(x.min()), float(x.max())

    def _s_range(self) -> tuple[float, float]:
        return self.fs._quad_range() if hasattr(self.fs, "_quad_range") else self.fs.support

    def mean_square(self) -> float:
        """Average harvested power ``E{psi(|h s|^2)}`` by quadrature over ``s``."""
        lo, hi = self._s_range()
        step = self.fs._feature_scale() / 16 if hasattr(self.fs, "_feature_scale") else (hi - lo) / 256
        return integrate(lambda s: self.x_of_s(s) ** 2 * self.fs.pdf(s),
                         QuadratureSpec(lo, hi, max_step=step, rel_tol=1e-10))

    def mixture_nodes(self, resolution: float):
        lo, hi = self._s_range()
        fine = np.linspace(lo, hi, 8193)
        variation = float(np.abs(np.diff(self.x_of_s(fine))).sum())
        width = min((hi - lo) * resolution / max(variation, 1e-300), self.fs._feature_scale() / 4)
        s, w = _panels(lo, hi, width)
        return self.x_of_s(s), w * self.fs.pdf(s)


def dump_distribution(d, path, grid=None, n: int = 201) -> None:
    """Write ``v, pdf, cdf`` rows (or ``point, mass`` for discrete) to CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(d, DiscreteDistribution):
            w.writerow(["point", "mass"])
            for p, m in zip(d.points.tolist(), d.masses.tolist()):
                w.writerow([repr(p), repr(m)])
            return
        if grid is None:
            lo, hi = d.support
            grid = np.linspace(lo, hi, n)
        grid = np.asarray(grid, dtype=float)
        pdf = np.atleast_1d(d.pdf(grid))
        cdf = np.atleast_1d(d.cdf(grid))
        w.writerow(["v", "pdf", "cdf"])
        for row in zip(grid.tolist(), pdf.tolist(), cdf.tolist()):
            w.writerow([repr(float(x)) for x in row])


def sample(d, rng: np.random.Generator, size=None):
    return d.sample(rng, size)


def mean_square(d) -> float:
    return d.mean_square()


def cdf(d, v):
    return d.cdf(v)


def pdf(d, v):
    return d.pdf(v)
