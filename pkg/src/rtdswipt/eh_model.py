"""Piecewise logistic energy-harvesting model.

The harvested power is a continuous piecewise function of the received
power ``rho``; segment ``n`` (1-based) is a 5-parameter logistic curve

    phi_n(rho) = B_n + (Phi_{n-1} - B_n) * (1 + theta_n (rho - rho_{n-1})**alpha_n) ** -beta_n

which starts at the value ``Phi_{n-1}`` reached by the previous segment.
Odd segments increase and even segments decrease.  All powers are in
watts; ``theta`` carries units of W**-alpha.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

POWER_UNITS = {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "µW": 1e-6}


class DomainError(ValueError):
    """Received power outside the model's non-breakdown range."""


class FitError(RuntimeError):
    """Curve fitting failed or produced an unacceptable residual."""

    def __init__(self, message: str, rms: float = math.nan, residuals: np.ndarray | None = None):
        super().__init__(message)
        self.rms = rms
        self.residuals = residuals


@dataclass(frozen=True)
class LogisticSegment:
    B: float
    phi_start: float
    theta: float
    alpha: float
    beta: float
    rho_start: float
    rho_end: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.theta > 0):
            raise ValueError(f"alpha, beta, theta must be positive: {self}")
        if not self.rho_start < self.rho_end:
            raise ValueError(f"empty segment [{self.rho_start}, {self.rho_end}]")

    @property
    def increasing(self) -> bool:
        return self.B > self.phi_start

    @property
    def phi_end(self) -> float:
        return float(self(self.rho_end))

    def __call__(self, rho):
        u = np.maximum(np.asarray(rho, dtype=float) - self.rho_start, 0.0)
        return self.B + (self.phi_start - self.B) * (1.0 + self.theta * u**self.alpha) ** (-self.beta)

    def derivative(self, rho):
        u = np.maximum(np.asarray(rho, dtype=float) - self.rho_start, 0.0)
        t = self.theta * u**self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(u > 0, self.alpha * t / np.where(u > 0, u, 1.0), 0.0)
        return (self.B - self.phi_start) * self.beta * (1.0 + t) ** (-self.beta - 1.0) * dt


class PiecewiseEHModel:
    """Continuous piecewise model ``psi(rho)`` on ``[0, rho_max]``.

    Build one from raw parameters with :meth:`from_parameters`; the
    segment start values are then chained by continuity.
    """

    def __init__(self, segments: Sequence[LogisticSegment], name: str = ""):
        segments = tuple(segments)
        if not segments:
            raise ValueError("need at least one segment")
        if segments[0].rho_start != 0.0 or segments[0].phi_start != 0.0:
            raise ValueError("first segment must start at rho=0 with value 0")
        for n, (a, b) in enumerate(zip(segments, segments[1:]), start=1):
            if a.rho_end != b.rho_start:
                raise ValueError(f"segments {n} and {n + 1} are not contiguous")
            end = a.phi_end
            if abs(end - b.phi_start) > 1e-12 * max(abs(end), abs(b.phi_start), 1e-300):
                raise ValueError(f"discontinuity at rho_{n}: {end} vs {b.phi_start}")
        for n, seg in enumerate(segments, start=1):
            if seg.increasing != (n % 2 == 1):
                kind = "increasing" if n % 2 else "decreasing"
                raise ValueError(f"segment {n} must be {kind}")
        self.segments = segments
        self.name = name
        phis = [0.0] + [s.phi_end for s in segments]
        for n in range(len(phis) - 2):
            if phis[n] > phis[n + 2]:
                warnings.warn(
                    f"{name or 'EH model'}: Phi_{n} = {phis[n]:.6g} W exceeds Phi_{n + 2} = {phis[n + 2]:.6g} W",
                    stacklevel=2,
                )

    @classmethod
    def from_parameters(cls, breakpoints, B, alpha, beta, theta, name: str = "") -> "PiecewiseEHModel":
        """Chain segments from ``rho_1 .. rho_N`` (``rho_N = rho_max``) and per-segment parameters."""
        breakpoints = [float(r) for r in breakpoints]
        n = len(breakpoints)
        if not (len(B) == len(alpha) == len(beta) == len(theta) == n):
            raise ValueError("one breakpoint and one parameter set per segment required")
        segments = []
        start, phi = 0.0, 0.0
        for k in range(n):
            seg = LogisticSegment(float(B[k]), phi, float(theta[k]), float(alpha[k]), float(beta[k]),
                                  start, breakpoints[k])
            segments.append(seg)
            start, phi = seg.rho_end, seg.phi_end
        return cls(segments, name=name)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def rho_max(self) -> float:
        return self.segments[-1].rho_end

    @property
    def breakpoints(self) -> list[float]:
        return [s.rho_end for s in self.segments]

    @property
    def phis(self) -> list[float]:
        """Junction values ``Phi_0 .. Phi_N``."""
        return [0.0] + [s.phi_end for s in self.segments]

    def evaluate(self, rho):
        rho_arr = np.asarray(rho, dtype=float)
        tol = 1e-12 * self.rho_max
        if np.any(rho_arr < -tol) or np.any(rho_arr > self.rho_max + tol) or np.any(np.isnan(rho_arr)):
            raise DomainError(f"received power outside [0, {self.rho_max}] W")
        rho_arr = np.clip(rho_arr, 0.0, self.rho_max)
        idx = np.searchsorted(self.breakpoints[:-1], rho_arr, side="right")
        out = np.empty_like(rho_arr)
        for n, seg in enumerate(self.segments):
            mask = idx == n
            if np.any(mask):
                out[mask] = seg(rho_arr[mask])
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def __repr__(self):
        return f"PiecewiseEHModel(name={self.name!r}, N={self.n_segments}, rho_max={self.rho_max:.6g})"


def evaluate(model: PiecewiseEHModel, rho):
    return model.evaluate(rho)


def max_harvested_power(model: PiecewiseEHModel, rho_ub: float) -> float:
    """Largest harvested power reachable with received power in ``[0, rho_ub]``."""
    if not 0 <= rho_ub <= model.rho_max * (1 + 1e-12):
        raise DomainError(f"rho_ub={rho_ub} outside [0, {model.rho_max}]")
    rho_ub = min(rho_ub, model.rho_max)
    best = float(model.evaluate(rho_ub))
    for seg in model.segments:
        if seg.increasing and seg.rho_start <= rho_ub:
            best = max(best, float(seg(min(seg.rho_end, rho_ub))))
    return best


@dataclass(frozen=True)
class MonotonePiece:
    lo: float
    hi: float
    segment: LogisticSegment
    index: int  # 1-based segment index

    @property
    def p_lo(self) -> float:
        return float(self.segment(self.lo))

    @property
    def p_hi(self) -> float:
        return float(self.segment(self.hi))


@dataclass(frozen=True)
class MonotoneEHModel:
    """Increasing restriction of a piecewise model, invertible on its domain.

    The domain is ``[0, rho_1) U [rho_hat_2, rho_3) U ...``; parts of the
    received-power axis where the harvested power has not yet recovered
    above an earlier peak are excluded.
    """

    pieces: tuple[MonotonePiece, ...]
    model: PiecewiseEHModel = field(repr=False)

    @property
    def n_hat(self) -> int:
        return self.pieces[-1].index

    @property
    def domain(self) -> list[tuple[float, float]]:
        return [(p.lo, p.hi) for p in self.pieces]

    @property
    def excluded(self) -> list[tuple[float, float]]:
        """Gaps ``(hi_k, lo_{k+1}]`` of the domain, including a dropped tail."""
        gaps = [(a.hi, b.lo) for a, b in zip(self.pieces, self.pieces[1:])]
        if self.pieces[-1].hi < self.model.rho_max:
            gaps.append((self.pieces[-1].hi, self.model.rho_max))
        return gaps

    @property
    def max_value(self) -> float:
        return self.pieces[-1].p_hi

    def in_domain(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        ok = np.zeros(rho.shape, dtype=bool)
        for p in self.pieces:
            ok |= (rho >= p.lo) & (rho <= p.hi)
        return ok

    def evaluate(self, rho):
        rho = np.asarray(rho, dtype=float)
        if not np.all(self.in_domain(rho)):
            raise DomainError("received power outside the monotone model's domain")
        return self.model.evaluate(rho)

    __call__ = evaluate

    def invert(self, p):
        return invert(self, p)


def _bisect_segment(seg: LogisticSegment, level, lo, hi):
    """Vectorised bisection of an increasing segment down to float resolution."""
    level = np.asarray(level, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), level.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), level.shape).copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        above = seg(mid) >= level
        hi = np.where(active & above, mid, hi)
        lo = np.where(active & ~above, mid, lo)
    return hi


def to_monotone(model: PiecewiseEHModel, tol: float = 1e-15) -> MonotoneEHModel:
    """Restrict ``model`` to the domain on which it is strictly increasing.

    Each later increasing segment is kept from the point where it climbs
    back to the running peak level; segments that never get there are
    dropped.
    """
    pieces = []
    level = 0.0
    for n, seg in enumerate(model.segments, start=1):
        if not seg.increasing:
            continue
        if not pieces:
            pieces.append(MonotonePiece(seg.rho_start, seg.rho_end, seg, n))
            level = seg.phi_end
            continue
        if seg.phi_end <= level:
            continue
        if seg.phi_start >= level:
            lo = seg.rho_start
        else:
            a, b = seg.rho_start, seg.rho_end
            while b - a > tol:
                mid = 0.5 * (a + b)
                if mid <= a or mid >= b:
                    break
                if seg(mid) >= level:
                    b = mid
                else:
                    a = mid
            lo = b
        pieces.append(MonotonePiece(lo, seg.rho_end, seg, n))
        level = seg.phi_end
    return MonotoneEHModel(tuple(pieces), model)


def invert(monotone: MonotoneEHModel, p):
    """Received power on the monotone domain that yields harvested power ``p``.

    Where a level is reachable at a piece boundary from both sides, the
    smaller received power is returned.
    """
    p_arr = np.asarray(p, dtype=float)
    top = monotone.max_value
    if np.any(p_arr < 0) or np.any(p_arr > top * (1 + 1e-12)):
        raise DomainError(f"harvested power outside [0, {top}] W")
    p_arr = np.minimum(p_arr, top)
    out = np.full(p_arr.shape, np.nan)
    for piece in monotone.pieces:
        mask = np.isnan(out) & (p_arr <= piece.p_hi)
        if np.any(mask):
            out[mask] = _bisect_segment(piece.segment, p_arr[mask], piece.lo, piece.hi)
    out = np.where(p_arr <= 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Curve fitting


@dataclass
class EHSampleSet:
    rho: np.ndarray
    harvested: np.ndarray
    breakpoints: list[float] | None = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.harvested = np.asarray(self.harvested, dtype=float)
        if self.rho.shape != self.harvested.shape or self.rho.ndim != 1:
            raise ValueError("rho and harvested must be 1-D arrays of equal length")
        if len(self.rho) == 0:
            raise ValueError("empty sample set")
        if np.any(self.rho < 0) or np.any(np.diff(self.rho) <= 0):
            raise ValueError("rho must be non-negative and strictly increasing")


@dataclass
class FitResult:
    model: PiecewiseEHModel
    rms: float
    rel_rms: float
    residuals: np.ndarray


def detect_breakpoints(samples: EHSampleSet, window: int = 5, persistence: int = 3) -> list[float]:
    """Interior breakpoints at persistent sign changes of the smoothed slope."""
    rho, y = samples.rho, samples.harvested
    if len(rho) < window + persistence + 1:
        return []
    slope = np.diff(y) / np.diff(rho)
    smooth = np.convolve(slope, np.ones(window) / window, mode="same")
    sign = np.sign(smooth)
    found = []
    current = None
    run_sign, run_len, run_start = 0, 0, 0
    for i, s in enumerate(sign):
        if s == 0:
            continue
        if s == run_sign:
            run_len += 1
        else:
            run_sign, run_len, run_start = s, 1, i
        if run_len == persistence and run_sign != current:
            if current is not None:
                # extremum of the raw samples around the switch
                lo = max(run_start - window, 0)
                hi = min(run_start + window + 1, len(y))
                seg = y[lo:hi]
                j = lo + (int(np.argmax(seg)) if current > 0 else int(np.argmin(seg)))
                found.append((j, current > 0))
            current = run_sign
    # snap each switch to the raw extremum between its neighbours; smoothing
    # can shift switches when a segment is narrower than the window
    tol = 1e-6 * float(np.ptp(y))
    out = []
    prev = 0
    for k, (j, is_max) in enumerate(found):
        nxt = found[k + 1][0] if k + 1 < len(found) else len(y)
        seg = y[prev:nxt] if is_max else -y[prev:nxt]
        # the next segment starts where a plateau at the extremum ends
        j = prev + int(np.flatnonzero(seg >= seg.max() - tol)[-1])
        out.append(float(rho[j]))
        prev = j + 1
    return out


# multi-start grid; theta values refer to received power in mW
_THETA_STARTS = (1e2, 1e3, 1e4)
_ALPHA_STARTS = (1.0, 1.5, 2.5)
_BETA_STARTS = (0.3, 0.7, 1.0, 10.0, 1e4)
_GAP_STARTS = (0.05, 0.5)


def _fit_segment(rho, y, rho_start, rho_end, phi_start, increasing, scale):
    from scipy.optimize import least_squares

    width = rho_end - rho_start
    u = (rho - rho_start) / width
    yn = y / scale
    phin = phi_start / scale
    if increasing:
        anchor = max(float(yn.max()), phin)
        sign = 1.0
    else:
        anchor = min(float(yn.min()), phin)
        sign = -1.0
    span = max(abs(float(yn.max() - yn.min())), abs(anchor - phin), 1e-6)

    def unpack(p):
        c, lt, la, lb = np.exp(np.clip(p, -60.0, 60.0))
        return anchor + sign * span * c, lt, la, lb

    def resid(p):
        Bn, tn, a, b = unpack(p)
        with np.errstate(over="ignore", invalid="ignore"):
            model = Bn + (phin - Bn) * (1.0 + tn * u**a) ** (-b)
        r = model - yn
        return np.where(np.isfinite(r), r, 1e3)

    best = None
    for theta0 in _THETA_STARTS:
        for a0 in _ALPHA_STARTS:
            # theta * (rho/1mW)^alpha == theta_n * u^alpha
            tn0 = theta0 * (width / 1e-3) ** a0
            for b0 in _BETA_STARTS:
                for g0 in _GAP_STARTS:
                    p0 = np.array([math.log(g0), math.log(tn0), math.log(a0), math.log(b0)])
                    try:
                        sol = least_squares(resid, p0, method="lm", max_nfev=400)
                    except (ValueError, FloatingPointError):
                        continue
                    cost = float(np.sum(sol.fun**2))
                    if best is None or cost < best[0]:
                        best = (cost, sol.x)
    if best is None:
        raise FitError("no start converged")
    Bn, tn, a, b = unpack(best[1])
    theta = tn / width**a
    return LogisticSegment(Bn * scale, phi_start, theta, a, b, rho_start, rho_end)


def fit(samples: EHSampleSet, n_segments: int | None = None, breakpoints: Sequence[float] | None = None,
        rms_ceiling: float = 0.05, name: str = "") -> FitResult:
    """Fit a piecewise model to sampled (received, harvested) power pairs.

    Breakpoints are taken from ``breakpoints``, then from
    ``samples.breakpoints``, and otherwise detected from the data.  Each
    segment is fitted by Levenberg-Marquardt with its start value pinned to
    the end of the previous segment, so the result is continuous.

    Raises
    ------
    FitError
        For degenerate data or when the RMS error relative to the peak
        sample exceeds ``rms_ceiling``.
    """
    rho, y = samples.rho, samples.harvested
    scale = float(np.max(np.abs(y)))
    if scale <= 0 or len(rho) < 4:
        raise FitError("degenerate samples: nothing to fit")
    rho_max = float(rho[-1])
    bps = breakpoints if breakpoints is not None else samples.breakpoints
    if bps is None:
        bps = detect_breakpoints(samples)
    bps = [float(b) for b in bps]
    if bps and abs(bps[-1] - rho_max) <= 1e-12 * rho_max:
        bps = bps[:-1]
    if any(not 0 < b < rho_max for b in bps) or any(np.diff(bps) <= 0):
        raise FitError(f"breakpoints {bps} not strictly inside (0, {rho_max})")
    if n_segments is not None and n_segments != len(bps) + 1:
        raise FitError(f"{n_segments} segments requested but {len(bps) + 1} implied by breakpoints {bps}")
    edges = [0.0] + bps + [rho_max]
    segments = []
    phi = 0.0
    for n in range(len(edges) - 1):
        lo, hi = edges[n], edges[n + 1]
        mask = (rho >= lo) & (rho <= hi)
        if mask.sum() < 4:
            raise FitError(f"segment {n + 1} has fewer than 4 samples")
        seg = _fit_segment(rho[mask], y[mask], lo, hi, phi, increasing=(n % 2 == 0), scale=scale)
        segments.append(seg)
        phi = seg.phi_end
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = PiecewiseEHModel(segments, name=name)
    residuals = model.evaluate(rho) - y
    rms = float(np.sqrt(np.mean(residuals**2)))
    rel = rms / scale
    if not rel <= rms_ceiling:
        raise FitError(f"fit RMS {rel:.3%} of peak exceeds ceiling {rms_ceiling:.3%}", rms, residuals)
    return FitResult(model, rms, rel, residuals)


# --------------------------------------------------------------------------
# File formats


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.replace(",", " ").split()]


def parse_model(text: str) -> PiecewiseEHModel:
    kv = _parse_kv(text)
    unit = kv.get("power_unit", "W")
    if unit not in POWER_UNITS:
        raise ValueError(f"unknown power_unit {unit!r}")
    s = POWER_UNITS[unit]
    n = int(kv["n_segments"])
    rhos = [r * s for r in _floats(kv["rho_breakpoints"])]
    B = [b * s for b in _floats(kv["B"])]
    alpha = _floats(kv["alpha"])
    beta = _floats(kv["beta"])
    # theta * (rho / s)^alpha == (theta * s^-alpha) * rho^alpha
    theta = [t * s ** (-a) for t, a in zip(_floats(kv["theta"]), alpha)]
    if not (len(rhos) == len(B) == len(alpha) == len(beta) == len(theta) == n):
        raise ValueError(f"expected {n} values for every per-segment field")
    return PiecewiseEHModel.from_parameters(rhos, B, alpha, beta, theta, name=kv.get("name", ""))


def load_model(path) -> PiecewiseEHModel:
    return parse_model(Path(path).read_text())


def format_model(model: PiecewiseEHModel) -> str:
    segs = model.segments

    def row(vals):
        return ", ".join(repr(float(v)) for v in vals)

    lines = [
        f"name = {model.name}" if model.name else "# unnamed model",
        "power_unit = W",
        f"n_segments = {model.n_segments}",
        f"rho_breakpoints = {row(model.breakpoints)}",
        f"B = {row(s.B for s in segs)}",
        f"alpha = {row(s.alpha for s in segs)}",
        f"beta = {row(s.beta for s in segs)}",
        f"theta = {row(s.theta for s in segs)}",
    ]
    return "\n".join(lines) + "\n"


def save_model(model: PiecewiseEHModel, path) -> None:
    Path(path).write_text(format_model(model))


BUNDLED_MODELS = ("reference", "improved_irev", "improved_ubr")


def bundled_model(name: str) -> PiecewiseEHModel:
    """One of the three shipped RTD designs: ``reference``, ``improved_irev``, ``improved_ubr``."""
    if name not in BUNDLED_MODELS:
        raise KeyError(f"unknown bundled model {name!r}; choose from {BUNDLED_MODELS}")
    text = resources.files("rtdswipt.data").joinpath(f"{name}.eh").read_text()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return parse_model(text)


def load_samples(path) -> EHSampleSet:
    """Read a two-column ``rho_W, harvested_W`` CSV; ``#`` starts a comment."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            if rows:
                raise ValueError(f"{path}:{lineno}: non-numeric row") from None
            continue  # header
    if not rows:
        raise ValueError(f"{path}: no samples")
    arr = np.array(rows)
    return EHSampleSet(arr[:, 0], arr[:, 1])


def save_samples(samples: EHSampleSet, path) -> None:
    lines = ["rho_W,harvested_W"]
    lines += [f"{r!r},{h!r}" for r, h in zip(samples.rho.tolist(), samples.harvested.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
