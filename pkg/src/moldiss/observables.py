"""Normally-ordered observables from method-specific raw moments.

Positive-P averages are already normally ordered.  Truncated-Wigner averages
are symmetrically ordered and are corrected here (half a particle per mode).
HFB moments follow from G_A and G_N through Wick factorisation.

Stochastic error bars use batch means: trajectories are split into
contiguous batches, and ratio estimators such as g2 are linearised around
the grand means so that each batch yields one pseudo-value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DerivedQuantities
from .grid import ANNIHILATION, CREATION, Lattice, modes, modes_2d

# scalar moments stored per (save, batch, [bin offset])
SCALARS = ("count", "na", "nm", "ntot", "na_imag", "nm_imag", "na_center")
PAIR_MOMENTS = ("n_plus", "n_minus", "bb", "cl")


def select_modes(derived: DerivedQuantities) -> tuple[int, int]:
    """Grid indices nearest +k0 and -k0 (mirror images of each other)."""
    m = len(derived.k_grid)
    j = int(round(derived.k0 / derived.dk))
    return j % m, (-j) % m


def bin_offsets(n_bins: int) -> np.ndarray:
    return np.arange(-n_bins, n_bins + 1)


# --- per-trajectory number integrands ---------------------------------

def numbers_pp(psi_a, phi_a, psi_m, phi_m, dx: float):
    """Complex dx*sum(Phi Psi) for atoms and molecules, per trajectory.

    The physical numbers are the real parts; the imaginary parts only vanish
    in the ensemble mean and are kept as a diagnostic.
    """
    na = dx * np.sum(phi_a * psi_a, axis=-1)
    nm = dx * np.sum(phi_m * psi_m, axis=-1)
    return na, nm


def numbers_twa(psi_a, psi_m, dx: float):
    """dx*sum|Psi|^2 - M/2 for atoms and molecules, per trajectory."""
    half = 0.5 * psi_a.shape[-1]
    na = dx * np.sum(np.abs(psi_a) ** 2, axis=-1) - half
    nm = dx * np.sum(np.abs(psi_m) ** 2, axis=-1) - half
    return na, nm


# --- momentum densities -------------------------------------------------

def momentum_density_pp(psi, phi, lat: Lattice) -> np.ndarray:
    """Per-trajectory Re(b_k a_k); average over trajectories for n(k)."""
    a = modes(psi, lat, ANNIHILATION)
    b = modes(phi, lat, CREATION)
    return np.real(b * a)


def momentum_density_twa(psi, lat: Lattice) -> np.ndarray:
    """Per-trajectory |alpha_k|^2 - 1/2."""
    return np.abs(modes(psi, lat, ANNIHILATION)) ** 2 - 0.5


def momentum_density(obj, lat: Lattice) -> np.ndarray:
    """Per-trajectory n(k) for PPState/TWAState, or n(k) of an HFBState."""
    if hasattr(obj, "g_n"):
        return momentum_density_hfb(obj.g_n, lat) + np.abs(modes(obj.phi_a, lat, ANNIHILATION)) ** 2
    if hasattr(obj, "phi_a"):
        return momentum_density_pp(obj.psi_a, obj.phi_a, lat)
    return momentum_density_twa(obj.psi_a, lat)


def hfb_mode_matrices(g_a: np.ndarray, g_n: np.ndarray, lat: Lattice):
    """Momentum-space <a_k' a_k> and <a^dag_k' a_k> as (k, k') matrices."""
    ga_k = modes_2d(g_a, lat, (ANNIHILATION, ANNIHILATION))
    gn_k = modes_2d(g_n, lat, (ANNIHILATION, CREATION))
    return ga_k, gn_k


def momentum_density_hfb(g_n: np.ndarray, lat: Lattice) -> np.ndarray:
    gn_k = modes_2d(g_n, lat, (ANNIHILATION, CREATION))
    return np.real(np.diag(gn_k))


# --- moment accumulation ------------------------------------------------

@dataclass
class MomentSet:
    """Mergeable accumulator of raw moments at every save time.

    ``scalars[name]`` are sums over the trajectories of each batch, shaped
    (saves, batches); ``pairs[name]`` additionally carry the bin-offset axis.
    Spectra and densities keep sums and sums of squares over all
    trajectories, shaped (saves, points).  ``resid_max`` is the largest
    per-trajectory classical conservation error (TWA only).
    """

    method: str
    n_saves: int
    n_batches: int
    n_offsets: int
    m: int
    scalars: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)
    spectra: dict = field(default_factory=dict)
    resid_max: np.ndarray = None
    trajectories: int = 0

    SPECTRA = ("nk_a", "nk_m", "nx_a", "nx_m")

    def __post_init__(self):
        s, b, d, m = self.n_saves, self.n_batches, self.n_offsets, self.m
        for name in SCALARS:
            self.scalars.setdefault(name, np.zeros((s, b)))
        for name in PAIR_MOMENTS:
            self.pairs.setdefault(name, np.zeros((s, b, d)))
        for name in self.SPECTRA:
            self.spectra.setdefault(name, np.zeros((s, m)))
            self.spectra.setdefault(name + "_sq", np.zeros((s, m)))
        if self.resid_max is None:
            self.resid_max = np.zeros(s)

    @classmethod
    def empty_like(cls, other: "MomentSet") -> "MomentSet":
        return cls(other.method, other.n_saves, other.n_batches, other.n_offsets, other.m)

    def merge(self, other: "MomentSet") -> "MomentSet":
        out = MomentSet.empty_like(self)
        for name in SCALARS:
            out.scalars[name] = self.scalars[name] + other.scalars[name]
        for name in PAIR_MOMENTS:
            out.pairs[name] = self.pairs[name] + other.pairs[name]
        for name in self.spectra:
            out.spectra[name] = self.spectra[name] + other.spectra[name]
        out.resid_max = np.maximum(self.resid_max, other.resid_max)
        out.trajectories = self.trajectories + other.trajectories
        return out

    def add(self, save: int, batch: np.ndarray, alive: np.ndarray, values: dict) -> None:
        """Add per-trajectory samples (1-D over trajectories, or 2-D with modes)."""
        idx = np.flatnonzero(alive)
        b = batch[idx]
        self.scalars["count"][save] += np.bincount(b, minlength=self.n_batches)
        for name in SCALARS[1:]:
            if name in values:
                self.scalars[name][save] += np.bincount(b, weights=values[name][idx], minlength=self.n_batches)
        for name in PAIR_MOMENTS:
            if name in values:
                v = values[name][idx]
                for d in range(self.n_offsets):
                    self.pairs[name][save, :, d] += np.bincount(b, weights=v[:, d], minlength=self.n_batches)
        for name in self.SPECTRA:
            if name in values:
                v = values[name][idx]
                self.spectra[name][save] += v.sum(axis=0)
                self.spectra[name + "_sq"][save] += (v * v).sum(axis=0)
        if "resid" in values and idx.size:
            self.resid_max[save] = max(self.resid_max[save], float(np.max(values["resid"][idx])))


def pair_samples_pp(psi_a, phi_a, lat: Lattice, j_plus: int, j_minus: int, offsets) -> dict:
    a = modes(psi_a, lat, ANNIHILATION)
    b = modes(phi_a, lat, CREATION)
    m = lat.num_points
    jp = (j_plus + offsets) % m
    jm = (j_minus - offsets) % m
    ap, am, bp, bm = a[:, jp], a[:, jm], b[:, jp], b[:, jm]
    return {
        "n_plus": np.real(bp * ap),
        "n_minus": np.real(bm * am),
        "bb": np.real(bp * bm * am * ap),
        "cl": np.real(bp * bp * ap * ap),
    }


def pair_samples_twa(psi_a, lat: Lattice, j_plus: int, j_minus: int, offsets) -> dict:
    """Raw symmetric moments |alpha+|^2, |alpha-|^2, |alpha+|^2|alpha-|^2, |alpha+|^4."""
    a = modes(psi_a, lat, ANNIHILATION)
    m = lat.num_points
    p = np.abs(a[:, (j_plus + offsets) % m]) ** 2
    q = np.abs(a[:, (j_minus - offsets) % m]) ** 2
    return {"n_plus": p, "n_minus": q, "bb": p * q, "cl": p * p}


# --- estimators -------------------------------------------------------------

@dataclass
class Estimate:
    value: float
    se: float
    defined: bool = True
    note: str = ""


@dataclass
class CorrelationResult:
    t: float
    g2_bb: Estimate
    g2_cl: Estimate
    n_kplus: Estimate
    n_kminus: Estimate


def _batch_means(sums: np.ndarray, counts: np.ndarray):
    """Grand mean and per-batch means over batches with nonzero count."""
    ok = counts > 0
    total = counts[ok].sum()
    if total == 0:
        return math.nan, np.full(0, math.nan), ok
    grand = sums[ok].sum(axis=0) / total
    per = sums[ok] / counts[ok].reshape((-1,) + (1,) * (sums.ndim - 1))
    return grand, per, ok


def mean_se(sums: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    grand, per, ok = _batch_means(sums, counts)
    nb = int(ok.sum())
    se = float(np.std(per, ddof=1) / math.sqrt(nb)) if nb > 1 else math.nan
    return float(grand), se


def _ratio(num_b, den1_b, den2_b):
    """Linearised batch pseudo-values of num/(den1*den2); returns (g, se)."""
    n, d1, d2 = num_b.mean(axis=0), den1_b.mean(axis=0), den2_b.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = n / (d1 * d2)
        pseudo = g * (1 + (num_b - n) / n - (den1_b - d1) / d1 - (den2_b - d2) / d2)
    return g, pseudo


def _normal_ordered_twa(kind: str, p, q, pq, pp):
    """Symmetric (Wigner) moments -> normally ordered ones.

    distinct modes: <a+^ a-^ a- a+> = <|a+|^2|a-|^2> - (<|a+|^2> + <|a-|^2>)/2 + 1/4
    same mode:      <a^ a^ a a>     = <|a|^4> - 2<|a|^2> + 1/2
    """
    if kind == "bb":
        return pq - 0.5 * p - 0.5 * q + 0.25, p - 0.5, q - 0.5
    return pp - 2.0 * p + 0.5, p - 0.5, p - 0.5


def g2_from_batches(
    method: str, counts: np.ndarray, n_plus, n_minus, bb, cl, floor: float = 0.5
) -> tuple[Estimate, Estimate, Estimate, Estimate]:
    """g2_bb, g2_cl, n(k+), n(k-) from per-batch sums at one save time.

    ``n_plus`` etc. are (batches, offsets) sums of the raw per-trajectory
    moments.  Offsets (bins around +-k0) are averaged after forming g2.
    """
    ok = counts > 0
    nb = int(ok.sum())
    if nb < 2:
        nan = Estimate(math.nan, math.nan, False, "too few batches")
        return nan, nan, nan, nan
    c = counts[ok][:, None]
    P, Q, PQ, PP = (x[ok] / c for x in (n_plus, n_minus, bb, cl))
    out = []
    for kind in ("bb", "cl"):
        if method == "twa":
            num, d1, d2 = _normal_ordered_twa(kind, P, Q, PQ, PP)
        else:
            num = PQ if kind == "bb" else PP
            d1, d2 = (P, Q) if kind == "bb" else (P, P)
        g, pseudo = _ratio(num, d1, d2)
        g_avg = float(np.mean(g))
        se = float(np.std(pseudo.mean(axis=1), ddof=1) / math.sqrt(nb))
        defined, note = True, ""
        for den in (d1, d2):
            dm = den.mean(axis=0)
            dse = den.std(axis=0, ddof=1) / math.sqrt(nb)
            if np.any(dm < 3 * dse):
                defined, note = False, "denominator below 3 SE"
            if method == "twa" and np.any(dm < floor):
                defined, note = False, "suppressed: occupation below floor"
        out.append(Estimate(g_avg if defined else math.nan, se if defined else math.nan, defined, note))
    n_est = []
    for raw in (P, Q):
        v = raw - 0.5 if method == "twa" else raw
        per = v.mean(axis=1)
        n_est.append(Estimate(float(per.mean()), float(per.std(ddof=1) / math.sqrt(nb))))
    return out[0], out[1], n_est[0], n_est[1]


def g2_pp(moments: MomentSet, save: int) -> CorrelationResult:
    bb, cl, npl, nmi = g2_from_batches(
        "positive_p", moments.scalars["count"][save], moments.pairs["n_plus"][save],
        moments.pairs["n_minus"][save], moments.pairs["bb"][save], moments.pairs["cl"][save],
    )
    return CorrelationResult(math.nan, bb, cl, npl, nmi)


def g2_twa(moments: MomentSet, save: int, floor: float = 0.5) -> CorrelationResult:
    bb, cl, npl, nmi = g2_from_batches(
        "twa", moments.scalars["count"][save], moments.pairs["n_plus"][save],
        moments.pairs["n_minus"][save], moments.pairs["bb"][save], moments.pairs["cl"][save],
        floor,
    )
    return CorrelationResult(math.nan, bb, cl, npl, nmi)


def g2_wick(ga_k: np.ndarray, gn_k: np.ndarray, j_plus: int, j_minus: int, offsets=(0,)):
    """Gaussian-state g2 from momentum-space pair and normal correlators.

    distinct: <n_k n_k'> = n_k n_k' + |<a_k' a_k>|^2 + |<a^dag_k' a_k>|^2
    same:     <a^dag a^dag a a> = 2 n_k^2 + |<a_k a_k>|^2
    """
    m = ga_k.shape[0]
    bb, cl, npl, nmi = [], [], [], []
    for d in offsets:
        jp, jm = (j_plus + d) % m, (j_minus - d) % m
        n_p = float(np.real(gn_k[jp, jp]))
        n_m = float(np.real(gn_k[jm, jm]))
        npl.append(n_p)
        nmi.append(n_m)
        if min(n_p, n_m) < 1e-12:
            return (Estimate(math.nan, 0.0, False, "occupation below 1e-12"),) * 2 + (
                Estimate(n_p, 0.0), Estimate(n_m, 0.0))
        bb.append(1 + (abs(ga_k[jp, jm]) ** 2 + abs(gn_k[jp, jm]) ** 2) / (n_p * n_m))
        cl.append(2 + abs(ga_k[jp, jp]) ** 2 / n_p**2)
    return (
        Estimate(float(np.mean(bb)), 0.0), Estimate(float(np.mean(cl)), 0.0),
        Estimate(float(np.mean(npl)), 0.0), Estimate(float(np.mean(nmi)), 0.0),
    )


def g2_hfb(s, lat: Lattice, derived: DerivedQuantities, n_bins: int = 0) -> CorrelationResult:
    ga_k, gn_k = hfb_mode_matrices(s.g_a, s.g_n, lat)
    jp, jm = select_modes(derived)
    bb, cl, npl, nmi = g2_wick(ga_k, gn_k, jp, jm, bin_offsets(n_bins))
    return CorrelationResult(s.t, bb, cl, npl, nmi)


def diffusion_time(series, u_aa: float, center_density=None) -> tuple[float, str]:
    """Earliest saved t with t >= pi / (2 u_aa n_a(0, t)); inf if never reached.

    ``series`` is a TimeSeries (its ``times`` and ``na_center`` are used) or a
    plain array of times, in which case ``center_density`` must be given.
    """
    if center_density is None:
        times, center_density = series.times, series.na_center
    else:
        times = series
    if u_aa <= 0:
        return math.inf, "u_aa <= 0: no phase diffusion"
    for t, n in zip(times, center_density):
        if n > 0 and t >= math.pi / (2 * u_aa * n):
            return float(t), ""
    return math.inf, "threshold not crossed within the saved window"


def local_peak(spectrum, se, j_center: int, half_width: int = 3, background_gap: int = 4,
               background_width: int = 6, floor: float = 0.0):
    """Largest local maximum within +-half_width bins of ``j_center``.

    Returns (index or None, excess over background, combined SE).  The
    background is the mean over two side windows beyond ``background_gap``
    bins from the centre; a maximum only counts if it beats both neighbours.
    Indices are in FFT order and wrap around.
    """
    m = len(spectrum)
    best = None
    for d in range(-half_width, half_width + 1):
        j = (j_center + d) % m
        v = spectrum[j]
        if v > spectrum[(j - 1) % m] and v > spectrum[(j + 1) % m]:
            if best is None or v > spectrum[best]:
                best = j
    side = [
        (j_center + s * d) % m
        for s in (-1, 1)
        for d in range(background_gap, background_gap + background_width)
    ]
    bg = float(np.mean(spectrum[side]))
    bg_se = float(np.sqrt(np.sum(np.asarray(se)[side] ** 2)) / len(side))
    if best is None:
        return None, 0.0, bg_se
    excess = float(spectrum[best] - bg)
    comb = float(math.hypot(se[best], bg_se))
    if excess <= floor:
        return None, excess, comb
    return best, excess, comb
