"""Input-distribution design under a peak-amplitude and average harvested-power constraint.

Four constructions are provided:

* :func:`optimal_input` - masses on a uniform K-point grid maximising the
  mutual information (Blahut-Arimoto on the Lagrangian, bisection on the
  multiplier);
* :func:`achievable_input` - the uniform / exp-quadratic family maximising
  the entropy-power lower bound;
* :func:`closed_form_input` - the scaled Beta (power-law) family;
* :func:`baseline_gaussian` - a truncated Gaussian transmit amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .channel import peak_amplitude
from .distributions import (DiscreteDistribution, ExpQuadraticX, PowerLawX, PushForwardX, TruncatedGaussianS, UniformX,
                            expquad_power_ratio, pull_back)
from .eh_model import MonotoneEHModel, PiecewiseEHModel, max_harvested_power, to_monotone
from .metrics import NoiseModel, RateResult, achievable_rate, entropy, mutual_information, rate_powerlaw
from .specfun import BracketError, bisect

DEFAULT_MU_TABLE = (0.0, 0.1, 1.0, 10.0, 1e2, 1e3, 1e4)


class InfeasibleError(ValueError):
    """Required power exceeds the maximum average harvested power."""


class DiracFallback(Exception):
    """The power ratio is beyond the lookup table; the optimum is a point mass at the peak."""


def g_function(mu1: float) -> float:
    """Normalised second moment of the exp-quadratic family, in ``[1/3, 1)``."""
    if mu1 < 0:
        raise ValueError("mu1 must be non-negative")
    return expquad_power_ratio(mu1)


@dataclass(frozen=True)
class LookupTable:
    mus: tuple
    gs: tuple

    def __post_init__(self):
        if len(self.mus) != len(self.gs) or len(self.mus) < 2:
            raise ValueError("mus and gs must have equal length >= 2")
        if self.mus[0] != 0.0 or np.any(np.diff(self.mus) <= 0) or np.any(np.diff(self.gs) <= 0):
            raise ValueError("mus must start at 0 and both arrays must be strictly increasing")

    @classmethod
    def build(cls, mus=DEFAULT_MU_TABLE) -> "LookupTable":
        mus = tuple(float(m) for m in mus)
        return cls(mus, tuple(g_function(m) for m in mus))


_DEFAULT_TABLE = LookupTable.build()


def solve_mu1(ratio: float, table: LookupTable = _DEFAULT_TABLE, eps: float = 1e-6) -> float:
    """Invert ``g`` by bisection inside the bracketing table cell.

    Raises
    ------
    DiracFallback
        If ``ratio`` exceeds the largest tabulated ``g`` value.
    """
    if not 1.0 / 3.0 - 1e-15 <= ratio < 1.0:
        raise ValueError(f"ratio must lie in [1/3, 1), got {ratio}")
    gs = np.asarray(table.gs)
    if ratio > gs[-1]:
        raise DiracFallback(f"ratio {ratio} beyond table maximum {gs[-1]}")
    n_up = int(np.searchsorted(gs, ratio, side="left"))
    if n_up == 0:
        return 0.0
    lo, hi = table.mus[n_up - 1], table.mus[n_up]
    return bisect(g_function, lo, hi, tol=eps, target=ratio)


@dataclass
class ProblemSpec:
    model: PiecewiseEHModel
    h_gain: float
    peak_amplitude_A: float
    p_req: float
    noise: NoiseModel
    constellation_K: int = 64
    tol_eps: float = 1e-6
    monotone: MonotoneEHModel | None = None
    table: LookupTable = field(default_factory=lambda: _DEFAULT_TABLE)

    def __post_init__(self):
        if self.p_req < 0:
            raise ValueError("p_req must be non-negative")
        if self.constellation_K < 2:
            raise ValueError("constellation_K must be at least 2")
        if not self.tol_eps > 0:
            raise ValueError("tol_eps must be positive")
        if not self.h_gain > 0 or not self.peak_amplitude_A > 0:
            raise ValueError("h_gain and peak_amplitude_A must be positive")
        if self.monotone is None:
            self.monotone = to_monotone(self.model)


@dataclass(frozen=True)
class FeasibilityReport:
    a_bar: float
    p_max: float
    feasible: bool
    trivial: bool


def check_feasibility(spec: ProblemSpec) -> FeasibilityReport:
    a_bar = peak_amplitude(spec.peak_amplitude_A, spec.h_gain, spec.model.rho_max)
    rho_ub = min((spec.h_gain * a_bar) ** 2, spec.model.rho_max)
    p_max = max_harvested_power(spec.model, rho_ub)
    slack = 1e-12 * p_max
    feasible = spec.p_req <= p_max + slack
    trivial = feasible and spec.p_req >= p_max - slack
    return FeasibilityReport(a_bar, p_max, feasible, trivial)


@dataclass
class DesignResult:
    """A designed input: x-distribution, transmit distribution and its rates."""

    method: str
    fx: object
    fs: object
    rate: RateResult
    feasibility: FeasibilityReport
    realized_power: float
    params: dict = field(default_factory=dict)


def _require_feasible(spec: ProblemSpec) -> FeasibilityReport:
    rep = check_feasibility(spec)
    if not rep.feasible:
        raise InfeasibleError(f"p_req={spec.p_req} W exceeds P_max={rep.p_max} W")
    return rep


def _dirac_result(method: str, spec: ProblemSpec, rep: FeasibilityReport) -> DesignResult:
    fx = DiscreteDistribution.dirac(math.sqrt(rep.p_max))
    fs = pull_back(fx, spec.monotone, spec.h_gain)
    return DesignResult(method, fx, fs, RateResult(0.0, 0.0, -math.inf), rep, rep.p_max, {"dirac": True})


def _finish(method: str, spec: ProblemSpec, rep: FeasibilityReport, fx, j: float, params: dict) -> DesignResult:
    fs = pull_back(fx, spec.monotone, spec.h_gain)
    rate = RateResult(mutual_information(fx, spec.noise), j, entropy(fx))
    return DesignResult(method, fx, fs, rate, rep, fx.mean_square(), params)


def _uniform_rate(p_max: float, noise: NoiseModel) -> float:
    return 0.5 * math.log1p(p_max / (2.0 * math.pi * math.e * noise.sigma2))


def achievable_input(spec: ProblemSpec) -> DesignResult:
    """Maximiser of the entropy-power bound: uniform or exp-quadratic ``x``."""
    rep = _require_feasible(spec)
    if rep.trivial:
        return _dirac_result("achievable", spec, rep)
    p = rep.p_max
    ratio = spec.p_req / p
    if ratio <= 1.0 / 3.0:
        fx = UniformX(p)
        return _finish("achievable", spec, rep, fx, _uniform_rate(p, spec.noise), {"mu1": 0.0})
    try:
        mu1 = solve_mu1(ratio, spec.table, spec.tol_eps)
    except DiracFallback:
        return _dirac_result("achievable", spec, rep)
    if mu1 == 0.0:
        fx = UniformX(p)
    else:
        fx = ExpQuadraticX(p, mu1)
    return _finish("achievable", spec, rep, fx, achievable_rate(entropy(fx), spec.noise), {"mu1": mu1})


def closed_form_alpha(ratio: float) -> float:
    """``max(2 r / (1 - r), 1)``."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError("ratio must lie in [0, 1)")
    return max(2.0 * ratio / (1.0 - ratio), 1.0)


def closed_form_input(spec: ProblemSpec) -> DesignResult:
    """Power-law family with exponent fixed by the power ratio."""
    rep = _require_feasible(spec)
    if rep.trivial:
        return _dirac_result("closed_form", spec, rep)
    p = rep.p_max
    alpha = closed_form_alpha(spec.p_req / p)
    fx = PowerLawX(p, alpha)
    j = _uniform_rate(p, spec.noise) if alpha == 1.0 else rate_powerlaw(p, alpha, spec.noise)
    return _finish("closed_form", spec, rep, fx, j, {"alpha_cf": alpha})


# --------------------------------------------------------------------------
# Discrete optimum


class _MixtureChannel:
    """Gaussian kernel of a fixed constellation sampled on a Simpson y-grid."""

    def __init__(self, x: np.ndarray, noise: NoiseModel, tail: float = 8.0, step_frac: float = 0.1):
        s = noise.sigma
        lo, hi = x[0] - tail * s, x[-1] + tail * s
        n = int(math.ceil((hi - lo) / (step_frac * s)))
        n += n % 2
        y = np.linspace(lo, hi, n + 1)
        h = (hi - lo) / n
        w = np.full(n + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        self.weights = w * h / 3.0
        # banded kernel: entries beyond ~9 sigma are below 1e-17 of the peak
        rows, cols, vals = [], [], []
        reach = 9.0 * s
        for k, xk in enumerate(x):
            j0 = np.searchsorted(y, xk - reach)
            j1 = np.searchsorted(y, xk + reach, side="right")
            z = (y[j0:j1] - xk) / s
            rows.append(np.arange(j0, j1))
            cols.append(np.full(j1 - j0, k))
            vals.append(np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * s))
        self.kernel = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                        shape=(len(y), len(x)))
        self.kernel_t = self.kernel.T.tocsr()
        self.h_noise = noise.entropy

    def divergences(self, p: np.ndarray) -> tuple[np.ndarray, float]:
        """``D(W_k || f_y)`` for each mass point and the mutual information at ``p``."""
        fy = self.kernel @ p
        log_fy = np.log(np.maximum(fy, 1e-300))
        d = -self.h_noise - self.kernel_t @ (self.weights * log_fy)
        return d, float(p @ d)


@dataclass
class BAResult:
    p: np.ndarray
    mi: float
    iterations: int
    gap: float


def _blahut_arimoto(chan: _MixtureChannel, cost: np.ndarray, lam: float, p0: np.ndarray, max_iter: int = 10_000,
                    tol: float = 1e-9) -> BAResult:
    """Maximise ``I(p) + lam * sum p_k cost_k`` over the simplex."""
    p = p0.copy()
    prev = -math.inf
    gap = math.inf
    mi = 0.0
    for it in range(1, max_iter + 1):
        d, mi = chan.divergences(p)
        score = d + lam * cost
        obj = mi + lam * float(p @ cost)
        gap = float(score.max()) - obj
        if gap < tol or abs(obj - prev) < tol * 1e-3:
            return BAResult(p, mi, it, gap)
        prev = obj
        z = np.log(np.maximum(p, 1e-300)) + score
        z -= z.max()
        p = np.exp(z)
        p[p < 1e-250] = 0.0
        p /= p.sum()
    return BAResult(p, mi, max_iter, gap)


@dataclass
class OptimalDiagnostics:
    lam: float
    iterations: int
    gap: float
    constraint_residual: float


def maximize_masses(x: np.ndarray, p_req: float, noise: NoiseModel, max_iter: int = 10_000,
                    tol: float = 1e-9) -> tuple[np.ndarray, float, OptimalDiagnostics]:
    """Masses on ``x`` maximising mutual information subject to ``E{x^2} >= p_req``."""
    x = np.asarray(x, dtype=float)
    chan = _MixtureChannel(x, noise)
    scale = float(x[-1] ** 2)
    cost = x * x / scale
    r = p_req / scale
    p0 = np.full(len(x), 1.0 / len(x))
    total_it = 0

    def solve(lam, start):
        nonlocal total_it
        res = _blahut_arimoto(chan, cost, lam, start, max_iter, tol)
        total_it += res.iterations
        return res

    best = solve(0.0, p0)
    if float(best.p @ cost) >= r:
        diag = OptimalDiagnostics(0.0, total_it, best.gap, float(best.p @ cost) - r)
        return best.p, best.mi, diag
    lo_res, lam_lo = best, 0.0
    lam_hi = 1.0
    hi_res = solve(lam_hi, best.p)
    while float(hi_res.p @ cost) < r:
        lo_res, lam_lo = hi_res, lam_hi
        lam_hi *= 2.0
        if lam_hi > 1e8:
            break
        hi_res = solve(lam_hi, hi_res.p)
    for _ in range(60):
        e_lo, e_hi = float(lo_res.p @ cost), float(hi_res.p @ cost)
        if e_hi - r <= 1e-6 or lam_hi - lam_lo <= 1e-10 * lam_hi:
            break
        lam = 0.5 * (lam_lo + lam_hi)
        res = solve(lam, hi_res.p)
        if float(res.p @ cost) >= r:
            hi_res, lam_hi = res, lam
        else:
            lo_res, lam_lo = res, lam
    # mix the bracketing solutions so the constraint holds with equality
    e_lo, e_hi = float(lo_res.p @ cost), float(hi_res.p @ cost)
    if e_hi > r and e_hi > e_lo:
        t = (e_hi - r) / (e_hi - e_lo)
        p = t * lo_res.p + (1.0 - t) * hi_res.p
    else:
        p = hi_res.p
    p = p / p.sum()
    _, mi = chan.divergences(p)
    diag = OptimalDiagnostics(lam_hi / scale, total_it, hi_res.gap, (float(p @ cost) - r) * scale)
    return p, mi, diag


def optimal_input(spec: ProblemSpec, diagnostics: bool = False):
    """Mass-point distribution on ``x_k = k/(K-1) sqrt(P_max)`` maximising mutual information."""
    rep = _require_feasible(spec)
    if rep.trivial:
        res = _dirac_result("optimal", spec, rep)
        return (res, OptimalDiagnostics(0.0, 0, 0.0, 0.0)) if diagnostics else res
    k = spec.constellation_K
    x = np.arange(k) / (k - 1) * math.sqrt(rep.p_max)
    p, _, diag = maximize_masses(x, spec.p_req, spec.noise)
    fx = DiscreteDistribution.from_pairs(x, p)
    fs = pull_back(fx, spec.monotone, spec.h_gain)
    rate = RateResult(mutual_information(fx, spec.noise), 0.0, -math.inf)
    res = DesignResult("optimal", fx, fs, rate, rep, fx.mean_square(), {"lambda": diag.lam, "K": len(x)})
    return (res, diag) if diagnostics else res


# --------------------------------------------------------------------------
# Truncated-Gaussian baseline


@dataclass
class BaselineResult:
    fs: TruncatedGaussianS
    fx: PushForwardX
    realized_power: float
    mutual_information: float
    sigma_s: float


def baseline_gaussian(spec: ProblemSpec, sigma_s: float) -> BaselineResult:
    """Truncated Gaussian transmit amplitude on ``[0, A_bar]`` passed through the full EH model."""
    if not sigma_s > 0:
        raise ValueError("sigma_s must be positive")
    a_bar = peak_amplitude(spec.peak_amplitude_A, spec.h_gain, spec.model.rho_max)
    fs = TruncatedGaussianS(a_bar, sigma_s)
    fx = PushForwardX(fs, spec.model, spec.h_gain)
    power = fx.mean_square()
    return BaselineResult(fs, fx, power, mutual_information(fx, spec.noise), sigma_s)


def baseline_sweep(spec: ProblemSpec, sigmas=None, n: int = 9) -> list[BaselineResult]:
    """Baseline over a log grid of ``sigma_s`` from ``A_bar/100`` to ``10 A_bar``."""
    if sigmas is None:
        a_bar = peak_amplitude(spec.peak_amplitude_A, spec.h_gain, spec.model.rho_max)
        sigmas = np.geomspace(a_bar / 100.0, 10.0 * a_bar, n)
    return [baseline_gaussian(spec, float(s)) for s in sigmas]


def power_sweep(spec: ProblemSpec, p_reqs, method: str) -> list[DesignResult | None]:
    """Designs for each required power; infeasible entries are ``None``."""
    fn = {"optimal": optimal_input, "achievable": achievable_input, "closed_form": closed_form_input}[method]
    out = []
    for p in p_reqs:
        s = ProblemSpec(spec.model, spec.h_gain, spec.peak_amplitude_A, float(p), spec.noise, spec.constellation_K,
                        spec.tol_eps, spec.monotone, spec.table)
        try:
            out.append(fn(s))
        except InfeasibleError:
            out.append(None)
    return out


__all__ = [
    "BAResult", "BaselineResult", "BracketError", "DesignResult", "DiracFallback", "FeasibilityReport",
    "InfeasibleError", "LookupTable", "OptimalDiagnostics", "DEFAULT_MU_TABLE", "ProblemSpec", "achievable_input",
    "baseline_gaussian", "baseline_sweep", "check_feasibility", "closed_form_alpha", "closed_form_input",
    "g_function", "maximize_masses", "optimal_input", "power_sweep", "solve_mu1",
]
