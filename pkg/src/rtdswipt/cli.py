"""Command-line experiment driver.

Subcommands
-----------
fit            fit a piecewise EH model to a two-column sample CSV
rates          mutual information / achievable rate per channel draw, amplitude and required power
region         rate-power region boundaries, including the truncated-Gaussian baseline
distributions  pdf/cdf dumps of the designed x and s distributions

All outputs are CSV with unit-suffixed headers.  Rates are written in bits
per channel use.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelConfig, large_scale_gain, peak_amplitude, sample_small_scale
from .distributions import dump_distribution
from .eh_model import BUNDLED_MODELS, FitError, bundled_model, fit, load_model, load_samples, \
    max_harvested_power, save_model
from .metrics import NoiseModel
from .optimizer import (ProblemSpec, achievable_input, baseline_gaussian, check_feasibility, closed_form_input,
                        optimal_input)

log = logging.getLogger("rtdswipt")

METHODS = ("optimal", "achievable", "closed_form", "baseline")
DESIGNS = {"optimal": optimal_input, "achievable": achievable_input, "closed_form": closed_form_input}
LN2 = math.log(2.0)

FULL_SCALE = {"constellation_K": 1000, "n_channel_draws": 1000}


@dataclass(frozen=True)
class ExperimentConfig:
    eh_model_path: str = "reference"
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    peak_amplitudes: tuple = (0.25, 0.45, 0.75, 1.0, 2.0)
    p_req_fractions: tuple | None = tuple(np.linspace(0.0, 1.0, 9).round(12))
    p_req_watts: tuple | None = None
    noise_sigma2: float = 1e-8
    constellation_K: int = 64
    n_channel_draws: int = 20
    methods: tuple = ("optimal", "achievable", "closed_form")
    baseline_points: int = 9
    grid_points: int = 201
    seed: int = 2024

    def __post_init__(self):
        if self.n_channel_draws < 1:
            raise ValueError("n_channel_draws must be at least 1")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if (self.p_req_fractions is None) == (self.p_req_watts is None):
            raise ValueError("give exactly one of p_req_fractions and p_req_watts")
        if not self.peak_amplitudes or min(self.peak_amplitudes) <= 0:
            raise ValueError("peak amplitudes must be positive")

    def load_eh_model(self):
        if self.eh_model_path in BUNDLED_MODELS:
            return bundled_model(self.eh_model_path)
        return load_model(self.eh_model_path)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def parse_noise(text: str) -> float:
    """Noise variance in W; accepts a bare number (W) or a value suffixed ``dBm``."""
    t = text.strip()
    if t.lower().endswith("dbm"):
        return NoiseModel.from_dbm(float(t[:-3])).sigma2
    if t.lower().endswith("w"):
        t = t[:-1]
    return float(t)


def load_config(path) -> ExperimentConfig:
    """Read an INI file with optional ``[model]``, ``[channel]`` and ``[experiment]`` sections."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    kw = {}
    if cp.has_option("model", "path"):
        raw = cp.get("model", "path")
        kw["eh_model_path"] = raw if raw in BUNDLED_MODELS else str((Path(path).parent / raw).resolve())
    if cp.has_section("channel"):
        ch = {k: float(v) for k, v in cp.items("channel")}
        kw["channel"] = ChannelConfig(**ch)
    if cp.has_section("experiment"):
        ex = dict(cp.items("experiment"))
        if "peak_amplitudes" in ex:
            kw["peak_amplitudes"] = _floats(ex.pop("peak_amplitudes"))
        if "p_req_fractions" in ex:
            kw["p_req_fractions"] = _floats(ex.pop("p_req_fractions"))
        if "p_req_watts" in ex:
            kw["p_req_watts"] = _floats(ex.pop("p_req_watts"))
            kw.setdefault("p_req_fractions", None)
        if "noise_sigma2" in ex:
            kw["noise_sigma2"] = parse_noise(ex.pop("noise_sigma2"))
        for key, name in (("constellation_k", "constellation_K"), ("n_channel_draws", "n_channel_draws"),
                          ("baseline_points", "baseline_points"), ("grid_points", "grid_points"),
                          ("seed", "seed")):
            if key in ex:
                kw[name] = int(ex.pop(key))
        if "methods" in ex:
            kw["methods"] = tuple(m.strip() for m in ex.pop("methods").replace(",", " ").split())
        if ex:
            raise ValueError(f"unknown experiment keys: {sorted(ex)}")
    if "p_req_watts" in kw and kw.get("p_req_fractions") is None:
        kw["p_req_fractions"] = None
    return ExperimentConfig(**kw)


def channel_draws(cfg: ExperimentConfig) -> np.ndarray:
    """Per-draw ``|h|``; each draw has its own child stream of the seed."""
    h_tilde = large_scale_gain(cfg.channel)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_channel_draws)
    return np.array([h_tilde * sample_small_scale(cfg.channel, np.random.default_rng(c)) for c in children])


# --------------------------------------------------------------------------
# Cells


@dataclass(frozen=True)
class Cell:
    draw: int
    h_gain: float
    amplitude: float
    p_index: int
    method: str
    sigma_s: float = math.nan


FIELDS = ["kind", "draw", "h_gain", "A_sqrtW", "a_bar_sqrtW", "p_req_fraction", "p_req_W", "p_max_W", "method",
          "sigma_s_sqrtW", "feasible", "clipped", "mutual_information_bits", "achievable_rate_bits",
          "realized_power_W", "n_feasible", "status"]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


_WORKER_STATE: dict = {}


def _init_worker(cfg: ExperimentConfig):
    model = cfg.load_eh_model()
    _WORKER_STATE.update(cfg=cfg, model=model, p_hat=max_harvested_power(model, model.rho_max))


def _run_cell(cell: Cell) -> dict:
    cfg = _WORKER_STATE["cfg"]
    model = _WORKER_STATE["model"]
    p_hat = _WORKER_STATE["p_hat"]
    noise = NoiseModel(cfg.noise_sigma2)
    probe = ProblemSpec(model, cell.h_gain, cell.amplitude, 0.0, noise, cfg.constellation_K)
    rep = check_feasibility(probe)
    row = dict(kind="cell", draw=cell.draw, h_gain=cell.h_gain, A_sqrtW=cell.amplitude, a_bar_sqrtW=rep.a_bar,
               p_req_fraction=math.nan, p_req_W=math.nan, p_max_W=rep.p_max, method=cell.method,
               sigma_s_sqrtW=cell.sigma_s, feasible=True, clipped=False, mutual_information_bits=math.nan,
               achievable_rate_bits=math.nan, realized_power_W=math.nan, n_feasible=1, status="ok")
    try:
        if cell.method == "baseline":
            res = baseline_gaussian(probe, cell.sigma_s)
            row.update(mutual_information_bits=res.mutual_information / LN2, realized_power_W=res.realized_power,
                       p_req_W=res.realized_power)
            return row
        if cfg.p_req_fractions is not None:
            frac = cfg.p_req_fractions[cell.p_index]
            p_req = frac * p_hat
            row["p_req_fraction"] = frac
            if p_req > rep.p_max:
                # fraction mode clips to what this draw can deliver
                p_req = rep.p_max
                row["clipped"] = True
        else:
            p_req = cfg.p_req_watts[cell.p_index]
        row["p_req_W"] = p_req
        if p_req > rep.p_max * (1 + 1e-12):
            row.update(feasible=False, n_feasible=0, status="infeasible")
            return row
        spec = replace(probe, p_req=p_req, monotone=probe.monotone)
        res = DESIGNS[cell.method](spec)
        rate = res.rate.achievable_rate / LN2 if cell.method != "optimal" else math.nan
        row.update(mutual_information_bits=res.rate.mutual_information / LN2, achievable_rate_bits=rate,
                   realized_power_W=res.realized_power)
    except Exception as exc:  # keep the sweep going; the row records the failure
        log.warning("cell %s failed: %s", cell, exc)
        row.update(status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "), n_feasible=0)
    return row


def build_cells(cfg: ExperimentConfig, h: np.ndarray, methods) -> list[Cell]:
    n_p = len(cfg.p_req_fractions if cfg.p_req_fractions is not None else cfg.p_req_watts)
    model = cfg.load_eh_model()
    cells = []
    for d, hg in enumerate(h):
        for a in cfg.peak_amplitudes:
            for m in methods:
                if m == "baseline":
                    a_bar = peak_amplitude(a, float(hg), model.rho_max)
                    for s in np.geomspace(a_bar / 100.0, 10.0 * a_bar, cfg.baseline_points):
                        cells.append(Cell(d, float(hg), float(a), -1, m, float(s)))
                else:
                    cells.extend(Cell(d, float(hg), float(a), i, m) for i in range(n_p))
    return cells


def run_cells(cfg: ExperimentConfig, cells: list[Cell], workers: int = 1) -> list[dict]:
    """Evaluate cells; results come back in cell order whatever the worker count."""
    if workers <= 1:
        _init_worker(cfg)
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(cfg,)) as pool:
        return list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (8 * workers))))


def summarize(rows: list[dict]) -> list[dict]:
    """Channel-averaged rows per (amplitude, required power or sigma_s, method) over feasible draws."""
    groups: dict = {}
    for r in rows:
        key = (r["A_sqrtW"], r["method"], r["p_req_fraction"] if r["method"] != "baseline" else r["sigma_s_sqrtW"],
               r["p_req_W"] if (r["method"] != "baseline" and math.isnan(r["p_req_fraction"])) else None)
        groups.setdefault(key, []).append(r)
    out = []
    for rs in groups.values():
        ok = [r for r in rs if r["status"] == "ok" and r["feasible"]]

        def mean(k):
            vals = [r[k] for r in ok]
            return float(np.mean(vals)) if vals else math.nan

        first = rs[0]
        out.append(dict(kind="summary", draw="mean", h_gain=mean("h_gain"), A_sqrtW=first["A_sqrtW"],
                        a_bar_sqrtW=mean("a_bar_sqrtW"), p_req_fraction=first["p_req_fraction"],
                        p_req_W=mean("p_req_W"), p_max_W=mean("p_max_W"), method=first["method"],
                        sigma_s_sqrtW=first["sigma_s_sqrtW"] if first["method"] == "baseline" else math.nan,
                        feasible=bool(ok), clipped=any(r["clipped"] for r in rs),
                        mutual_information_bits=mean("mutual_information_bits"),
                        achievable_rate_bits=mean("achievable_rate_bits"), realized_power_W=mean("realized_power_W"),
                        n_feasible=len(ok), status="ok" if ok else "no feasible draws"))
    return out


def write_rows(path: Path, rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in FIELDS])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def cmd_rates(cfg: ExperimentConfig, out: Path, workers: int = 1, methods=None) -> Path:
    h = channel_draws(cfg)
    rows = run_cells(cfg, build_cells(cfg, h, methods or cfg.methods), workers)
    path = out / "rates.csv"
    write_rows(path, rows + summarize(rows))
    return path


def cmd_region(cfg: ExperimentConfig, out: Path, workers: int = 1) -> Path:
    if cfg.p_req_fractions is not None and list(cfg.p_req_fractions) != sorted(cfg.p_req_fractions):
        raise ValueError("the required-power sweep must be ascending")
    if cfg.p_req_watts is not None and list(cfg.p_req_watts) != sorted(cfg.p_req_watts):
        raise ValueError("the required-power sweep must be ascending")
    methods = tuple(cfg.methods) + (() if "baseline" in cfg.methods else ("baseline",))
    h = channel_draws(cfg)
    rows = run_cells(cfg, build_cells(cfg, h, methods), workers)
    path = out / "region.csv"
    write_rows(path, rows + summarize(rows))
    return path


def cmd_distributions(cfg: ExperimentConfig, out: Path, p_req_fraction: float, method: str,
                      amplitude: float | None = None) -> list[Path]:
    """Dump x and s distributions of one design on the line-of-sight channel ``|h| = h_tilde``."""
    model = cfg.load_eh_model()
    h = large_scale_gain(cfg.channel)
    a = cfg.peak_amplitudes[0] if amplitude is None else amplitude
    noise = NoiseModel(cfg.noise_sigma2)
    p_hat = max_harvested_power(model, model.rho_max)
    spec = ProblemSpec(model, h, a, p_req_fraction * p_hat, noise, cfg.constellation_K)
    rep = check_feasibility(spec)
    if not rep.feasible:
        raise ValueError(f"p_req = {spec.p_req} W exceeds P_max = {rep.p_max} W at A = {a}")
    res = DESIGNS[method](spec)
    out.mkdir(parents=True, exist_ok=True)
    px = out / f"fx_{method}.csv"
    ps = out / f"fs_{method}.csv"
    dump_distribution(res.fx, px, n=cfg.grid_points)
    grid = np.linspace(0.0, rep.a_bar, cfg.grid_points)
    dump_distribution(res.fs, ps, grid=None if hasattr(res.fs, "masses") else grid)
    return [px, ps]


def cmd_fit(samples_csv, out_model, n_segments=None, breakpoints=None, rms_ceiling=0.05):
    samples = load_samples(samples_csv)
    res = fit(samples, n_segments=n_segments, breakpoints=breakpoints, rms_ceiling=rms_ceiling)
    save_model(res.model, out_model)
    return res


# --------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtdswipt", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit an EH model to sample data")
    f.add_argument("samples", help="two-column CSV: rho_W, harvested_W")
    f.add_argument("--n-segments", type=int)
    f.add_argument("--breakpoints", help="comma-separated interior breakpoints in W")
    f.add_argument("--rms-ceiling", type=float, default=0.05, help="maximum RMS error relative to the peak sample")
    f.add_argument("--out", required=True, help="output model file")

    for name in ("rates", "region", "distributions"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI experiment file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--paper-scale", action="store_true", help="K = 1000 and 1000 channel draws (slow)")
        if name == "distributions":
            s.add_argument("--p-req-fraction", type=float, default=0.4)
            s.add_argument("--method", choices=sorted(DESIGNS), default="achievable")
            s.add_argument("--amplitude", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "fit":
            bps = _floats(args.breakpoints) if args.breakpoints else None
            res = cmd_fit(args.samples, args.out, args.n_segments, bps, args.rms_ceiling)
            print(f"segments={res.model.n_segments} rms_W={res.rms:.6e} rel_rms={res.rel_rms:.6e} -> {args.out}")
            return 0
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.paper_scale:
            warnings.warn("full-scale settings (K=1000, 1000 draws) can take many hours", RuntimeWarning)
            cfg = replace(cfg, **FULL_SCALE)
        out = Path(args.out)
        if args.command == "rates":
            print(cmd_rates(cfg, out, args.workers))
        elif args.command == "region":
            print(cmd_region(cfg, out, args.workers))
        else:
            for path in cmd_distributions(cfg, out, args.p_req_fraction, args.method, args.amplitude):
                print(path)
        return 0
    except (ValueError, FitError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
