"""Ensemble execution, deterministic reduction and time-series assembly.

Trajectory ``i`` of a run always draws from the counter-based stream
``Philox(key=[master_seed, i])`` and always lands in the same leaf chunk
``i // chunk_size`` and batch ``i * batches // trajectories``.  Leaves are
merged through a fixed binary tree, so results do not depend on how many
worker processes evaluated the leaves.
"""
from __future__ import annotations

import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import observables as obs
from .config import DETERMINISTIC_METHODS, ValidatedConfig
from .grid import ANNIHILATION, Lattice, modes
from .hfb import HFBStepper, hfb_init, hfb_numbers
from .positive_p import PositivePStepper, pp_init
from .twa import TWAStepper, classical_number, twa_sample_initial

THREADS_ENV = "PHASESPACE_THREADS"

log = logging.getLogger(__name__)


class TotalDivergence(RuntimeError):
    """Every trajectory of a positive-P run diverged."""

    def __init__(self, message: str, series: "TimeSeries | None" = None):
        super().__init__(message)
        self.series = series


def trajectory_generator(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[master_seed, index]))


def leaf_ranges(n_traj: int, chunk: int) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, n_traj)) for a in range(0, n_traj, chunk)]


def tree_reduce(items: list, merge):
    """Pairwise merge in a fixed shape determined only by ``len(items)``."""
    if not items:
        raise ValueError("nothing to reduce")
    level = list(items)
    while len(level) > 1:
        nxt = [merge(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


@dataclass
class TimeSeries:
    method: str
    times: np.ndarray
    nm_frac: np.ndarray
    nm_frac_se: np.ndarray
    na_frac: np.ndarray
    na_frac_se: np.ndarray
    g2_bb: np.ndarray
    g2_bb_se: np.ndarray
    g2_cl: np.ndarray
    g2_cl_se: np.ndarray
    n_kplus: np.ndarray
    n_kminus: np.ndarray
    diverged_frac: np.ndarray
    conservation_residual: np.ndarray
    na_center: np.ndarray
    # name -> (saves, points); keys nk_a, nk_m, nx_a, nx_m and *_se
    spectra: dict = field(default_factory=dict)
    g2_notes: list = field(default_factory=list)
    trajectories: int = 1
    manifest_hash: str = ""
    wall_clock: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def index_at(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t={t} is not a saved time")
        return j


# --- stochastic leaves ------------------------------------------------------

def _batch_of(idx: np.ndarray, cfg: ValidatedConfig) -> np.ndarray:
    n = cfg.run.trajectories
    nb = min(cfg.run.batches, n)
    return (idx * nb) // n


def _n_batches(cfg: ValidatedConfig) -> int:
    return min(cfg.run.batches, cfg.run.trajectories)


def _pp_values(s, lat, jp, jm, offsets, dx):
    na, nm = obs.numbers_pp(s.psi_a, s.phi_a, s.psi_m, s.phi_m, dx)
    c = lat.num_points // 2
    out = {
        "na": na.real, "nm": nm.real, "na_imag": na.imag, "nm_imag": nm.imag,
        "ntot": 2 * nm.real + na.real,
        "na_center": np.real(s.phi_a[:, c] * s.psi_a[:, c]),
        "nk_a": obs.momentum_density_pp(s.psi_a, s.phi_a, lat),
        "nk_m": obs.momentum_density_pp(s.psi_m, s.phi_m, lat),
        "nx_a": np.real(s.phi_a * s.psi_a),
        "nx_m": np.real(s.phi_m * s.psi_m),
    }
    out.update(obs.pair_samples_pp(s.psi_a, s.phi_a, lat, jp, jm, offsets))
    return out


def _twa_values(s, lat, jp, jm, offsets, dx, n_class0):
    na, nm = obs.numbers_twa(s.psi_a, s.psi_m, dx)
    c = lat.num_points // 2
    half = 0.5 / dx
    out = {
        "na": na, "nm": nm, "ntot": 2 * nm + na,
        "na_center": np.abs(s.psi_a[:, c]) ** 2 - half,
        "nk_a": obs.momentum_density_twa(s.psi_a, lat),
        "nk_m": obs.momentum_density_twa(s.psi_m, lat),
        "nx_a": np.abs(s.psi_a) ** 2 - half,
        "nx_m": np.abs(s.psi_m) ** 2 - half,
        "resid": np.abs(classical_number(s, dx) - n_class0) / n_class0,
    }
    out.update(obs.pair_samples_twa(s.psi_a, lat, jp, jm, offsets))
    return out


def run_leaf(cfg: ValidatedConfig, start: int, stop: int) -> obs.MomentSet:
    """Evolve trajectories [start, stop) and accumulate their moments."""
    lat = Lattice.from_config(cfg)
    dx = lat.dx
    method = cfg.run.method
    idx = np.arange(start, stop)
    batch = _batch_of(idx, cfg)
    offsets = obs.bin_offsets(cfg.run.g2_bins)
    jp, jm = obs.select_modes(cfg.derived)
    gens = [trajectory_generator(cfg.run.master_seed, int(i)) for i in idx]
    n_saves = len(cfg.save_times)
    ms = obs.MomentSet(method, n_saves, _n_batches(cfg), len(offsets), lat.num_points)
    ms.trajectories = stop - start
    stride = cfg.grid.save_stride
    if method == "positive_p":
        state = pp_init(cfg, stop - start)
        stepper = PositivePStepper(cfg)
        values = lambda: _pp_values(state, lat, jp, jm, offsets, dx)  # noqa: E731
    else:
        state = twa_sample_initial(cfg, gens)
        stepper = TWAStepper(cfg)
        n0 = classical_number(state, dx)
        values = lambda: _twa_values(state, lat, jp, jm, offsets, dx, n0)  # noqa: E731
    for k in range(n_saves):
        if k:
            stepper.advance(state, stride, gens)
        alive = ~state.diverged if method == "positive_p" else np.ones(idx.size, bool)
        ms.add(k, batch, alive, values())
    return ms


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _progress(msg: str, enabled: bool) -> None:
    if enabled:
        print(msg, file=sys.stderr, flush=True)


def run_moments(cfg: ValidatedConfig, progress: bool = True) -> obs.MomentSet:
    leaves = leaf_ranges(cfg.run.trajectories, cfg.run.chunk_size)
    t0 = time.perf_counter()
    tag = cfg.run.method
    n_workers = min(_workers(), len(leaves))
    results = []
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            futs = [pool.submit(run_leaf, cfg, a, b) for a, b in leaves]
            for i, f in enumerate(futs):
                results.append(f.result())
                _progress(f"[{tag}] leaf {i + 1}/{len(leaves)} {time.perf_counter() - t0:.1f}s", progress)
    else:
        for i, (a, b) in enumerate(leaves):
            results.append(run_leaf(cfg, a, b))
            _progress(f"[{tag}] leaf {i + 1}/{len(leaves)} {time.perf_counter() - t0:.1f}s", progress)
    return tree_reduce(results, lambda x, y: x.merge(y))


def band_occupancy(cfg: ValidatedConfig, nk: np.ndarray) -> np.ndarray:
    """Mean occupation per mode over 0.5 k0 <= |k| <= 1.5 k0 (last axis)."""
    k = np.abs(cfg.derived.k_grid)
    k0 = cfg.derived.k0
    band = (k >= 0.5 * k0) & (k <= 1.5 * k0)
    return nk[..., band].mean(axis=-1)


def _twa_validity(cfg: ValidatedConfig, series: "TimeSeries") -> None:
    occ = band_occupancy(cfg, series.spectra["nk_a"])
    series.diagnostics["band_occupancy"] = occ
    low = np.flatnonzero(occ < 1.0)
    if low.size:
        log.warning(
            "truncated Wigner: fewer than one atom per mode in the resonant band at "
            "%d of %d saved times (last at t=%.4g s); results there rest on vacuum noise",
            low.size, occ.size, series.times[low[-1]],
        )


def series_from_moments(cfg: ValidatedConfig, ms: obs.MomentSet) -> TimeSeries:
    times = cfg.save_times
    S = len(times)
    nm0 = cfg.derived.N_m0
    n_tot = cfg.derived.total_number
    cols = {k: np.full(S, math.nan) for k in (
        "nm", "nm_se", "na", "na_se", "bb", "bb_se", "cl", "cl_se",
        "np", "nmi", "div", "res", "ctr", "imag_a", "imag_a_se")}
    notes = []
    spectra = {}
    for name in obs.MomentSet.SPECTRA:
        spectra[name] = np.zeros((S, ms.m))
        spectra[name + "_se"] = np.zeros((S, ms.m))
    for k in range(S):
        counts = ms.scalars["count"][k]
        n_alive = counts.sum()
        cols["div"][k] = 1.0 - n_alive / cfg.run.trajectories
        if n_alive == 0:
            notes.append("all trajectories diverged")
            continue
        cols["nm"][k], cols["nm_se"][k] = obs.mean_se(ms.scalars["nm"][k], counts)
        cols["na"][k], cols["na_se"][k] = obs.mean_se(ms.scalars["na"][k], counts)
        cols["ctr"][k], _ = obs.mean_se(ms.scalars["na_center"][k], counts)
        cols["imag_a"][k], cols["imag_a_se"][k] = obs.mean_se(ms.scalars["na_imag"][k], counts)
        tot, tot_se = obs.mean_se(ms.scalars["ntot"][k], counts)
        if ms.method == "twa":
            cols["res"][k] = ms.resid_max[k]
        else:
            cols["res"][k] = abs(tot - n_tot) / n_tot
        bb, cl, npl, nmi = obs.g2_from_batches(
            ms.method, counts, ms.pairs["n_plus"][k], ms.pairs["n_minus"][k],
            ms.pairs["bb"][k], ms.pairs["cl"][k], cfg.run.g2_floor,
        )
        cols["bb"][k], cols["bb_se"][k] = bb.value, bb.se
        cols["cl"][k], cols["cl_se"][k] = cl.value, cl.se
        cols["np"][k], cols["nmi"][k] = npl.value, nmi.value
        notes.append(bb.note or cl.note)
        for name in obs.MomentSet.SPECTRA:
            mean = ms.spectra[name][k] / n_alive
            var = np.maximum(ms.spectra[name + "_sq"][k] / n_alive - mean**2, 0.0)
            spectra[name][k] = mean
            spectra[name + "_se"][k] = np.sqrt(var / max(n_alive - 1, 1))
    return TimeSeries(
        method=ms.method, times=times,
        nm_frac=cols["nm"] / nm0, nm_frac_se=cols["nm_se"] / nm0,
        na_frac=cols["na"] / n_tot, na_frac_se=cols["na_se"] / n_tot,
        g2_bb=cols["bb"], g2_bb_se=cols["bb_se"], g2_cl=cols["cl"], g2_cl_se=cols["cl_se"],
        n_kplus=cols["np"], n_kminus=cols["nmi"],
        diverged_frac=cols["div"], conservation_residual=cols["res"], na_center=cols["ctr"],
        spectra=spectra, g2_notes=notes, trajectories=cfg.run.trajectories,
        manifest_hash=cfg.manifest_hash(),
        diagnostics=(
            {"na_imag": cols["imag_a"], "na_imag_se": cols["imag_a_se"]} if ms.method == "positive_p" else {}
        ),
    )


# --- deterministic runs -------------------------------------------------------

def run_deterministic(cfg: ValidatedConfig, progress: bool = True) -> TimeSeries:
    frozen = cfg.run.method == "undepleted"
    if frozen:
        cfg = cfg.replace(u_aa=0.0, u_am=0.0, u_mm=0.0)
    lat = Lattice.from_config(cfg)
    dx = lat.dx
    times = cfg.save_times
    S, M = len(times), lat.num_points
    stepper = HFBStepper(cfg, frozen_molecules=frozen)
    s = hfb_init(cfg)
    jp, jm = obs.select_modes(cfg.derived)
    offsets = obs.bin_offsets(cfg.run.g2_bins)
    nm0, n_tot = cfg.derived.N_m0, cfg.derived.total_number
    out = {k: np.zeros(S) for k in ("nm", "na", "bb", "cl", "np", "nmi", "res", "ctr")}
    spectra = {name: np.zeros((S, M)) for name in obs.MomentSet.SPECTRA}
    notes = []
    t0 = time.perf_counter()
    for k in range(S):
        if k:
            stepper.advance(s, cfg.grid.save_stride)
        n_m, n_a = hfb_numbers(s, dx)
        out["nm"][k], out["na"][k] = n_m, n_a
        out["res"][k] = math.nan if frozen else abs(2 * n_m + n_a - n_tot) / n_tot
        ga_k, gn_k = obs.hfb_mode_matrices(s.g_a, s.g_n, lat)
        bb, cl, npl, nmi = obs.g2_wick(ga_k, gn_k, jp, jm, offsets)
        out["bb"][k], out["cl"][k] = bb.value, cl.value
        out["np"][k], out["nmi"][k] = npl.value, nmi.value
        notes.append(bb.note or cl.note)
        dens_a = np.real(np.diag(s.g_n)) + np.abs(s.phi_a) ** 2
        out["ctr"][k] = dens_a[M // 2]
        spectra["nk_a"][k] = np.real(np.diag(gn_k)) + np.abs(modes(s.phi_a, lat, ANNIHILATION)) ** 2
        spectra["nk_m"][k] = np.abs(modes(s.phi_m, lat, ANNIHILATION)) ** 2
        spectra["nx_a"][k] = dens_a
        spectra["nx_m"][k] = np.abs(s.phi_m) ** 2
        if k % 5 == 0 or k == S - 1:
            _progress(f"[{cfg.run.method}] t={s.t:.4f}s {time.perf_counter() - t0:.1f}s", progress)
    for name in obs.MomentSet.SPECTRA:
        spectra[name + "_se"] = np.zeros((S, M))
    zeros = np.zeros(S)
    return TimeSeries(
        method=cfg.run.method, times=times,
        nm_frac=out["nm"] / nm0, nm_frac_se=zeros.copy(),
        na_frac=out["na"] / n_tot, na_frac_se=zeros.copy(),
        g2_bb=out["bb"], g2_bb_se=zeros.copy(), g2_cl=out["cl"], g2_cl_se=zeros.copy(),
        n_kplus=out["np"], n_kminus=out["nmi"],
        diverged_frac=zeros.copy(), conservation_residual=out["res"], na_center=out["ctr"],
        spectra=spectra, g2_notes=notes, trajectories=1, manifest_hash=cfg.manifest_hash(),
        diagnostics={"enforcement": s.enforcement},
    )


def run(cfg: ValidatedConfig, progress: bool = True) -> TimeSeries:
    """Run the configured method and return its time series.

    Raises TotalDivergence only when every positive-P trajectory diverged.
    """
    t0 = time.perf_counter()
    if cfg.run.method in DETERMINISTIC_METHODS:
        series = run_deterministic(cfg, progress)
    else:
        series = series_from_moments(cfg, run_moments(cfg, progress))
        if cfg.run.method == "twa":
            _twa_validity(cfg, series)
        if series.diverged_frac[-1] >= 1.0:
            series.wall_clock = time.perf_counter() - t0
            raise TotalDivergence(f"all {cfg.run.trajectories} trajectories diverged", series)
    series.wall_clock = time.perf_counter() - t0
    return series


def undepleted_reference(cfg: ValidatedConfig, progress: bool = True) -> TimeSeries:
    """Frozen molecular field, interactions off."""
    return run(cfg.replace(method="undepleted", trajectories=1, u_aa=0.0, u_am=0.0, u_mm=0.0), progress)


def detect_tmax(series: TimeSeries, div_limit: float = 1e-3, rel_se_limit: float = 0.1):
    """Earliest saved time where the positive-P ensemble is no longer trustworthy.

    Triggered by a diverged fraction above ``div_limit`` or by a standard
    error of N_a above ``rel_se_limit`` times its mean.  None if never.
    """
    for t, div, na, se in zip(series.times, series.diverged_frac, series.na_frac, series.na_frac_se):
        if div > div_limit or not np.isfinite(na) or (na > 0 and se > rel_se_limit * na):
            return float(t)
    return None


def convergence_check(cfg: ValidatedConfig, t: float, rel_tol: float = 5e-3, progress: bool = False):
    """Compare N_a(t) at dt and dt/2; returns (relative difference, passed).

    Meaningful for the deterministic methods and for TWA, where the same seed
    gives the same initial samples at both step sizes.
    """
    fine = cfg.replace(dt=0.5 * cfg.grid.dt, save_stride=2 * cfg.grid.save_stride)
    a = run(cfg, progress)
    b = run(fine, progress)
    na, nb = a.na_frac[a.index_at(t)], b.na_frac[b.index_at(t)]
    rel = abs(na - nb) / abs(nb)
    return float(rel), bool(rel < rel_tol)


# --- comparisons -------------------------------------------------------------

@dataclass
class ComparisonReport:
    times: np.ndarray
    series: dict
    # (method_a, method_b) -> dict of per-time arrays
    pairs: dict
    first_exceed: dict

    def columns(self) -> tuple[list[str], np.ndarray]:
        names = ["t"]
        cols = [self.times]
        for m, s in self.series.items():
            names += [f"{m}_Nm_frac", f"{m}_Nm_frac_se", f"{m}_Na_frac", f"{m}_Na_frac_se"]
            cols += [s.nm_frac, s.nm_frac_se, s.na_frac, s.na_frac_se]
        for (a, b), d in self.pairs.items():
            names += [f"{a}_vs_{b}_dNm_sigma", f"{a}_vs_{b}_dNa_sigma", f"{a}_vs_{b}_dNm_rel"]
            cols += [d["nm_sigma"], d["na_sigma"], d["nm_rel"]]
        return names, np.column_stack(cols)


def discrepancy(a: np.ndarray, a_se: np.ndarray, b: np.ndarray, b_se: np.ndarray) -> np.ndarray:
    """|a - b| in units of the combined SE (inf for differing exact values).

    Differences within a few units of float resolution count as agreement.
    """
    diff = np.abs(a - b)
    res = 8 * np.finfo(float).eps * np.maximum(np.abs(a), np.abs(b))
    comb = np.hypot(a_se, b_se)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(diff <= res, 0.0, np.where(comb > 0, diff / comb, np.inf))
    return out


def compare_series(series: dict, threshold: float = 3.0) -> ComparisonReport:
    names = list(series)
    times = series[names[0]].times
    for n in names[1:]:
        t = series[n].times
        if t.shape != times.shape or not np.allclose(t, times, rtol=0, atol=1e-12):
            raise ValueError(f"time grids of {names[0]} and {n} are not aligned")
    pairs, first = {}, {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sa, sb = series[a], series[b]
            d = {
                "nm_sigma": discrepancy(sa.nm_frac, sa.nm_frac_se, sb.nm_frac, sb.nm_frac_se),
                "na_sigma": discrepancy(sa.na_frac, sa.na_frac_se, sb.na_frac, sb.na_frac_se),
                "nm_rel": np.abs(sa.nm_frac - sb.nm_frac) / np.maximum(np.abs(sb.nm_frac), 1e-300),
            }
            pairs[(a, b)] = d
            over = np.flatnonzero(d["nm_sigma"] > threshold)
            first[(a, b)] = float(times[over[0]]) if over.size else None
    return ComparisonReport(times, series, pairs, first)


def compare(cfgs: list, progress: bool = True) -> ComparisonReport:
    """Run configs that differ only in method (and trajectory count) and compare them."""
    ref = cfgs[0]
    for c in cfgs[1:]:
        if c.params != ref.params or c.grid != ref.grid:
            raise ValueError("compared configs must share physical and grid parameters")
    series = {}
    for i, c in enumerate(cfgs):
        key = c.run.method if c.run.method not in series else f"{c.run.method}{i}"
        series[key] = run(c, progress)
    return compare_series(series)
