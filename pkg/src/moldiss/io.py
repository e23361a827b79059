"""Output files: manifest, fractions CSV, JSON summary, spectra and figure data."""
from __future__ import annotations

import hashlib
import json
import math
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .config import ValidatedConfig, dump_config
from .ensemble import ComparisonReport, TimeSeries, detect_tmax
from .observables import diffusion_time

FRACTIONS_HEADER = (
    "t,Nm_frac,Nm_frac_se,Na_frac,Na_frac_se,g2_bb,g2_bb_se,g2_cl,g2_cl_se,"
    "diverged_frac,conservation_residual"
)
FMT = "%.12e"
SCHEMA = 1


@lru_cache(maxsize=1)
def source_hash() -> str:
    """Digest of the package sources; changes whenever the code does."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def code_version() -> str:
    return f"moldiss {__version__} src:{source_hash()}"


def _stamp(manifest_hash: str) -> str:
    return f"# manifest_hash={manifest_hash}"


def write_manifest(cfg: ValidatedConfig, out: Path) -> Path:
    path = out / "manifest.json"
    doc = {
        "schema": SCHEMA,
        "manifest_hash": cfg.manifest_hash(),
        "code_version": code_version(),
        "master_seed": cfg.run.master_seed,
        "config": cfg.as_dict(),
        "derived": {
            "dx": cfg.derived.dx, "k0": cfg.derived.k0, "dk": cfg.derived.dk,
            "N_m0": cfg.derived.N_m0, "total_number": cfg.derived.total_number,
        },
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (out / "config.conf").write_text(_stamp(cfg.manifest_hash()) + "\n" + dump_config(cfg))
    return path


def fractions_table(s: TimeSeries) -> np.ndarray:
    return np.column_stack([
        s.times, s.nm_frac, s.nm_frac_se, s.na_frac, s.na_frac_se,
        s.g2_bb, s.g2_bb_se, s.g2_cl, s.g2_cl_se, s.diverged_frac, s.conservation_residual,
    ])


def format_fractions(s: TimeSeries) -> str:
    """Header row, one ``%.12e`` row per save, then a ``# manifest_hash=`` trailer."""
    lines = [FRACTIONS_HEADER]
    for row in fractions_table(s):
        lines.append(",".join(FMT % v for v in row))
    lines.append(_stamp(s.manifest_hash))
    return "\n".join(lines) + "\n"


def write_fractions(s: TimeSeries, path: Path) -> Path:
    path.write_text(format_fractions(s))
    return path


def read_fractions(path: Path) -> tuple[str, np.ndarray]:
    """(manifest hash, table) of a fractions file written by :func:`write_fractions`."""
    lines = Path(path).read_text().splitlines()
    if lines[0] != FRACTIONS_HEADER or not lines[-1].startswith("# manifest_hash="):
        raise ValueError(f"{path} is not a fractions file")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:-1]])
    return lines[-1].split("=", 1)[1], data


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def summary(cfg: ValidatedConfig, s: TimeSeries) -> dict:
    t_max = detect_tmax(s) if s.method == "positive_p" else None
    t_d, note = diffusion_time(s, cfg.params.u_aa)
    res = s.conservation_residual[np.isfinite(s.conservation_residual)]
    doc = {
        "schema": SCHEMA,
        "manifest_hash": s.manifest_hash,
        "code_version": code_version(),
        "method": s.method,
        "trajectories": s.trajectories,
        "t_final": float(s.times[-1]),
        "t_max": t_max,
        "t_d": _clean(float(t_d)),
        "t_d_note": note,
        "conservation_residual_max": float(res.max()) if res.size else None,
        "diverged_frac_final": float(s.diverged_frac[-1]),
        "Nm_frac_final": _clean(float(s.nm_frac[-1])),
        "Na_frac_final": _clean(float(s.na_frac[-1])),
        "wall_clock_s": s.wall_clock,
    }
    if "enforcement" in s.diagnostics:
        doc["hfb_max_enforcement"] = float(s.diagnostics["enforcement"])
    if "na_imag" in s.diagnostics:
        im, se = s.diagnostics["na_imag"], s.diagnostics["na_imag_se"]
        ok = np.isfinite(im) & (se > 0)
        doc["na_imag_max_sigma"] = float(np.max(np.abs(im[ok]) / se[ok])) if ok.any() else None
    return doc


def write_summary(cfg: ValidatedConfig, s: TimeSeries, path: Path) -> Path:
    path.write_text(json.dumps(summary(cfg, s), indent=2) + "\n")
    return path


def write_spectra(cfg: ValidatedConfig, s: TimeSeries, t: float, out: Path) -> list[Path]:
    """Position densities and momentum spectra at the save time nearest ``t``."""
    j = int(np.argmin(np.abs(s.times - t)))
    ts = s.times[j]
    tag = f"{ts:.4f}"
    stamp = _stamp(s.manifest_hash)
    sp = s.spectra
    x = cfg.derived.x_grid
    k = cfg.derived.k_grid
    order = np.argsort(k)
    px = out / f"density_x_t{tag}.csv"
    rows = np.column_stack([x, sp["nx_a"][j], sp["nx_a_se"][j], sp["nx_m"][j], sp["nx_m_se"][j]])
    _write_csv(px, f"{stamp} t={ts:.12e}", "x,n_a,n_a_se,n_m,n_m_se", rows)
    pk = out / f"spectrum_k_t{tag}.csv"
    rows = np.column_stack([k, sp["nk_a"][j], sp["nk_a_se"][j], sp["nk_m"][j], sp["nk_m_se"][j]])[order]
    _write_csv(pk, f"{stamp} t={ts:.12e}", "k,n_a,n_a_se,n_m,n_m_se", rows)
    return [px, pk]


def _write_csv(path: Path, comment: str, header: str, rows: np.ndarray) -> None:
    lines = [header] + [",".join(FMT % v for v in r) for r in rows] + [comment]
    path.write_text("\n".join(lines) + "\n")


def _write_dat(path: Path, comments: list[str], names: list[str], rows: np.ndarray) -> Path:
    lines = [f"# {c}" for c in comments] + ["# " + " ".join(names)]
    lines += [" ".join(FMT % v for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_comparison(report: ComparisonReport, cfg: ValidatedConfig, out: Path) -> list[Path]:
    """comparison.csv plus gnuplot-ready figure data.

    fig1/fig3 hold particle fractions and g2 for runs without atom-atom
    scattering, fig2/fig4 the same for runs with it; the other pair is
    written with a header noting it was not produced by this invocation.
    fig5 is the molecular density n_m(x, t) of the HFB run (or of the first
    method when HFB was not requested), in gnuplot blocks per time.
    """
    h = cfg.manifest_hash()
    names, table = report.columns()
    paths = [out / "comparison.csv"]
    _write_csv(paths[0], _stamp(h), ",".join(names), table)
    interacting = cfg.params.u_aa != 0.0
    num_name, g2_name = ("fig2.dat", "fig4.dat") if interacting else ("fig1.dat", "fig3.dat")
    skip_num, skip_g2 = ("fig1.dat", "fig3.dat") if interacting else ("fig2.dat", "fig4.dat")
    common = [f"manifest_hash={h}", f"u_aa={cfg.params.u_aa:.6e}"]
    n_cols, n_names = [report.times], ["t"]
    g_cols, g_names = [report.times], ["t"]
    for m, s in report.series.items():
        n_cols += [s.nm_frac, s.nm_frac_se, s.na_frac, s.na_frac_se]
        n_names += [f"{m}_Nm_frac", f"{m}_Nm_frac_se", f"{m}_Na_frac", f"{m}_Na_frac_se"]
        g_cols += [s.g2_bb, s.g2_bb_se, s.g2_cl, s.g2_cl_se]
        g_names += [f"{m}_g2_bb", f"{m}_g2_bb_se", f"{m}_g2_cl", f"{m}_g2_cl_se"]
    paths.append(_write_dat(out / num_name, common + ["fractional particle numbers"], n_names, np.column_stack(n_cols)))
    paths.append(_write_dat(out / g2_name, common + ["pair correlations at +-k0"], g_names, np.column_stack(g_cols)))
    for name in (skip_num, skip_g2):
        p = out / name
        if not p.exists():
            _write_dat(p, common + [f"not produced: rerun compare with u_aa {'= 0' if interacting else '!= 0'}"], ["t"], np.empty((0, 1)))
            paths.append(p)
    src = report.series.get("hfb") or next(iter(report.series.values()))
    x = cfg.derived.x_grid
    lines = [f"# {c}" for c in common + [f"molecular density n_m(x,t) from {src.method}"]]
    lines.append("# t x n_m")
    for j, t in enumerate(src.times):
        for xi, v in zip(x, src.spectra["nx_m"][j]):
            lines.append(" ".join(FMT % q for q in (t, xi, v)))
        lines.append("")
    (out / "fig5.dat").write_text("\n".join(lines) + "\n")
    paths.append(out / "fig5.dat")
    first = {f"{a}_vs_{b}": t for (a, b), t in report.first_exceed.items()}
    (out / "comparison_summary.json").write_text(json.dumps(
        {"schema": SCHEMA, "manifest_hash": h, "first_exceed_3se": first}, indent=2) + "\n")
    paths.append(out / "comparison_summary.json")
    return paths
