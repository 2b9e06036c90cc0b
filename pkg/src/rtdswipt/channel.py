"""Line-of-sight path gain, Rician small-scale fading and per-draw peak amplitude."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 2.998e8


@dataclass(frozen=True)
class ChannelConfig:
    """Link parameters.  Defaults describe a 300 GHz link over 10 cm with 20 dBi antennas."""

    g_tx: float = 100.0
    g_rx: float = 100.0
    f_c: float = 300e9
    d: float = 0.1
    rician_k: float = 1.0
    c_l: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("g_tx", "g_rx", "f_c", "d", "c_l"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.rician_k >= 0:
            raise ValueError("rician_k must be non-negative")


def large_scale_gain(cfg: ChannelConfig) -> float:
    """Free-space amplitude gain ``c / (4 pi d f_c) * sqrt(G_T G_R)``."""
    return cfg.c_l / (4.0 * math.pi * cfg.d * cfg.f_c) * math.sqrt(cfg.g_tx * cfg.g_rx)


def sample_small_scale(cfg: ChannelConfig, rng: np.random.Generator, size=None):
    """Rician magnitude with unit mean-square power.

    ``rician_k = inf`` gives the deterministic line-of-sight value 1 and
    ``rician_k = 0`` a Rayleigh magnitude.
    """
    k = cfg.rician_k
    if math.isinf(k):
        out = np.ones(() if size is None else size)
        return float(out) if out.ndim == 0 else out
    los = math.sqrt(k / (k + 1.0))
    scatter = math.sqrt(1.0 / (2.0 * (k + 1.0)))
    re = los + scatter * rng.standard_normal(size)
    im = scatter * rng.standard_normal(size)
    out = np.hypot(re, im)
    return float(out) if np.ndim(out) == 0 else out


def peak_amplitude(a: float, h_gain: float, rho_max: float) -> float:
    """``min(A, sqrt(rho_max) / |h|)``, so that ``|h A_bar|^2 <= rho_max``."""
    if not (a > 0 and h_gain > 0 and rho_max > 0):
        raise ValueError("A, |h| and rho_max must be positive")
    return min(a, math.sqrt(rho_max) / h_gain)
