"""Special functions and small numeric primitives.

Gaussian tail, imaginary error function (plain and exp-scaled), an
adaptive composite Simpson rule and a bracketing bisection.  Everything
here is pure and works on plain floats; ``gaussian_q`` and the quadrature
also accept numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

SQRT_PI = math.sqrt(math.pi)

# Maclaurin series below, asymptotic expansion above.  All series terms are
# positive, so the series is accurate wherever exp(t^2) is representable; the
# asymptotic remainder at t = 6 is ~exp(-36).
ERFI_SWITCH = 6.0
# exp(t^2) overflows a double just above this.
ERFI_MAX_ARG = 26.64


class IntegrationError(RuntimeError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class BracketError(ValueError):
    """The bisection target is not bracketed by the initial interval."""


@dataclass(frozen=True)
class QuadratureSpec:
    lower: float
    upper: float
    max_step: float = math.inf
    rel_tol: float = 1e-9
    abs_tol: float = 0.0
    max_doublings: int = 16

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


def gaussian_q(t):
    """Standard normal tail probability Pr(Z > t)."""
    out = special.ndtr(-np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


def _erfi_series_scaled(t: float) -> float:
    # exp(-t^2) * (2/sqrt(pi)) * sum t^(2k+1) / (k! (2k+1)), summed as
    # term_k = t^(2k+1)/k! to avoid separate factorials.
    t2 = t * t
    term = t
    total = t
    k = 0
    while True:
        k += 1
        term *= t2 / k
        add = term / (2 * k + 1)
        total += add
        if add <= 1e-17 * total:
            break
    return 2.0 / SQRT_PI * total * math.exp(-t2)


def _erfi_asymptotic_scaled(t: float) -> float:
    # exp(-t^2) erfi(t) ~ 1/(sqrt(pi) t) * sum_k (2k-1)!! / (2 t^2)^k,
    # truncated at the smallest term.
    x = 1.0 / (2.0 * t * t)
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = term * (2 * k - 1) * x
        if nxt >= term or nxt < 1e-17 * total:
            break
        term = nxt
        total += term
    return total / (SQRT_PI * t)


def erfi_scaled(t: float) -> float:
    """``exp(-t**2) * erfi(t)`` for ``t >= 0``, finite for every finite t."""
    t = float(t)
    if t < 0:
        return -erfi_scaled(-t)
    if t == 0.0:
        return 0.0
    if t <= ERFI_SWITCH:
        return _erfi_series_scaled(t)
    return _erfi_asymptotic_scaled(t)


def erfi(t: float) -> float:
    """Imaginary error function ``(2/sqrt(pi)) * int_0^t exp(u^2) du``.

    Raises
    ------
    OverflowError
        If ``exp(t**2)`` is not representable.
    """
    t = float(t)
    if t < 0:
        return -erfi(-t)
    if t > ERFI_MAX_ARG:
        raise OverflowError(f"erfi({t}) overflows a double")
    if t <= ERFI_SWITCH:
        # Unscaled series directly, to keep full relative accuracy at small t.
        t2 = t * t
        term = t
        total = t
        k = 0
        while term > 0:
            k += 1
            term *= t2 / k
            add = term / (2 * k + 1)
            total += add
            if add <= 1e-17 * total:
                break
        return 2.0 / SQRT_PI * total
    value = _erfi_asymptotic_scaled(t) * math.exp(t * t)
    if math.isinf(value):
        raise OverflowError(f"erfi({t}) overflows a double")
    return value


def _simpson(values: np.ndarray, h: float) -> float:
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum())


def integrate(f: Callable, spec: QuadratureSpec) -> float:
    """Composite Simpson rule with panel doubling.

    ``f`` must accept a numpy array of abscissae and return an array of the
    same shape.  The panel count starts at the smallest even number whose
    step does not exceed ``spec.max_step`` and is doubled until two
    successive estimates agree to ``rel_tol`` (relative) or ``abs_tol``.
    Each doubling re-uses the previous function values.
    """
    a, b = spec.lower, spec.upper
    width = b - a
    n = 8
    if math.isfinite(spec.max_step):
        n = max(n, int(math.ceil(width / spec.max_step)))
    n += n % 2
    x = np.linspace(a, b, n + 1)
    values = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(values)):
        raise IntegrationError("integrand not finite on the initial grid", math.nan, math.inf)
    raw = _simpson(values, width / n)
    estimate = raw
    error = math.inf
    for _ in range(spec.max_doublings):
        mids = a + (np.arange(n) + 0.5) * (width / n)
        fm = np.asarray(f(mids), dtype=float)
        merged = np.empty(2 * n + 1)
        merged[0::2] = values
        merged[1::2] = fm
        values = merged
        n *= 2
        refined = _simpson(values, width / n)
        # Richardson on the raw Simpson sums: error scales as h^4.
        error = abs(refined - raw) / 15.0
        estimate = refined + (refined - raw) / 15.0
        raw = refined
        if not math.isfinite(estimate):
            raise IntegrationError("integrand not finite", estimate, error)
        if error <= max(spec.rel_tol * abs(estimate), spec.abs_tol):
            return float(estimate)
    raise IntegrationError("Simpson rule did not converge", float(estimate), float(error))


def bisect(g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-3, target: float = 0.0,
           max_iter: int = 400) -> float:
    """Find ``x`` in ``[lo, hi]`` with ``g(x) == target`` for monotone ``g``.

    The bracket is halved until its width is at most ``tol``; the midpoint
    of the final bracket is returned.
    """
    if not lo <= hi:
        raise BracketError(f"empty interval [{lo}, {hi}]")
    glo = g(lo) - target
    ghi = g(hi) - target
    if glo * ghi > 0:
        raise BracketError(f"target {target} not bracketed: g({lo})={glo + target}, g({hi})={ghi + target}")
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    increasing = ghi > glo
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = g(mid) - target
        if (gm > 0) == increasing:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
