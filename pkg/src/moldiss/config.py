"""Physical and numerical parameters, validation and derived quantities.

Everything downstream reads its numbers from a :class:`ValidatedConfig`.
Configuration files are flat ``key = value`` text; keys are the field names
of :class:`PhysicalParams`, :class:`GridSpec` and :class:`RunConfig`.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from scipy import constants

# 87Rb in a 30 Hz transverse trap: U_1D = 2 * omega_perp * a_s
OMEGA_PERP = 2 * math.pi * 30.0
A_S = 5.4e-9
G0 = 2 * OMEGA_PERP * A_S

METHODS = ("positive_p", "twa", "hfb", "undepleted")
DETERMINISTIC_METHODS = ("hfb", "undepleted")


class ValidationError(ValueError):
    """Raised with every violated constraint, not only the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class PhysicalParams:
    m_a: float = 1.44e-25  # kg
    m_m: float = 2.88e-25  # kg
    chi_1d: float = 6.7e-3  # m^(1/2) s^-1
    delta: float = -258.0  # s^-1
    u_aa: float = 0.0  # m s^-1
    u_am: float = 0.0
    u_mm: float = 0.0
    n0: float = 1.83e7  # m^-1
    sigma: float = 5.0e-5  # m
    hbar: float = constants.hbar


@dataclass(frozen=True)
class GridSpec:
    box_length: float = 6.5e-4  # m
    num_points: int = 512
    dt: float = 1.0e-5  # s
    t_final: float = 0.2  # s
    save_stride: int = 100


@dataclass(frozen=True)
class RunConfig:
    method: str = "twa"
    trajectories: int = 10_000
    master_seed: int = 0
    output_dir: str = "out"
    divergence_threshold: float = 1.0e6
    # error estimation and estimator options
    batches: int = 100
    g2_bins: int = 0
    g2_floor: float = 0.5
    # times (s) at which full n(k) / n(x) snapshots are kept
    snapshot_times: tuple[float, ...] = ()
    # trajectories per leaf of the reduction tree
    chunk_size: int = 250


_SECTIONS = (PhysicalParams, GridSpec, RunConfig)
_KEY_OWNER = {f.name: cls for cls in _SECTIONS for f in dataclasses.fields(cls)}


@dataclass(frozen=True, eq=False)
class DerivedQuantities:
    dx: float
    k0: float
    N_m0: float
    x_grid: np.ndarray
    k_grid: np.ndarray
    total_number: float
    dk: float

    def k_of_index(self, j: int) -> float:
        return float(self.k_grid[j])

    def index_of_k(self, k: float) -> int:
        """Grid index whose momentum is nearest to ``k``."""
        m = len(self.k_grid)
        j = int(round(k / self.dk)) % m
        return j


@dataclass(frozen=True, eq=False)
class ValidatedConfig:
    params: PhysicalParams
    grid: GridSpec
    run: RunConfig
    derived: DerivedQuantities

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for part in (self.params, self.grid, self.run):
            out.update(dataclasses.asdict(part))
        out["snapshot_times"] = list(out["snapshot_times"])
        return out

    def manifest_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes: Any) -> "ValidatedConfig":
        """Copy with some keys changed, re-validated."""
        parts = {cls: {} for cls in _SECTIONS}
        for key, value in changes.items():
            if key not in _KEY_OWNER:
                raise ValidationError([f"unknown key '{key}'"])
            parts[_KEY_OWNER[key]][key] = value
        params = dataclasses.replace(self.params, **parts[PhysicalParams])
        grid = dataclasses.replace(self.grid, **parts[GridSpec])
        run = dataclasses.replace(self.run, **parts[RunConfig])
        if run.method in DETERMINISTIC_METHODS and "trajectories" not in changes:
            run = dataclasses.replace(run, trajectories=1)
        return validate(params, grid, run)

    @property
    def n_steps(self) -> int:
        return int(round(self.grid.t_final / self.grid.dt))

    @property
    def save_times(self) -> np.ndarray:
        n_save = self.n_steps // self.grid.save_stride
        return np.arange(n_save + 1) * self.grid.save_stride * self.grid.dt


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def derive(params: PhysicalParams, grid: GridSpec) -> DerivedQuantities:
    m = grid.num_points
    dx = grid.box_length / m
    x = -grid.box_length / 2 + dx * np.arange(m)
    k = 2 * np.pi * np.fft.fftfreq(m, d=dx)
    k0 = math.sqrt(2 * params.m_a * abs(params.delta) / params.hbar)
    n_m0 = dx * float(np.sum(params.n0 * np.exp(-(x**2) / params.sigma**2)))
    return DerivedQuantities(
        dx=dx,
        k0=k0,
        N_m0=n_m0,
        x_grid=x,
        k_grid=k,
        total_number=2 * n_m0,
        dk=2 * np.pi / grid.box_length,
    )


def _problems(params: PhysicalParams, grid: GridSpec, run: RunConfig) -> list[str]:
    bad = []
    if not params.m_a > 0:
        bad.append("m_a must be positive")
    if not math.isclose(params.m_m, 2 * params.m_a, rel_tol=1e-12):
        bad.append("m_m must equal 2*m_a")
    if not params.delta < 0:
        bad.append("delta must be negative")
    if not params.n0 > 0:
        bad.append("n0 must be positive")
    if not params.sigma > 0:
        bad.append("sigma must be positive")
    if not params.chi_1d >= 0:
        bad.append("chi_1d must be non-negative")
    if not params.hbar > 0:
        bad.append("hbar must be positive")
    if not _is_power_of_two(int(grid.num_points)):
        bad.append("num_points must be a power of two")
    if not grid.box_length > 0:
        bad.append("box_length must be positive")
    if not grid.dt > 0:
        bad.append("dt must be positive")
    if not grid.t_final >= grid.dt:
        bad.append("t_final must be at least dt")
    if not grid.save_stride >= 1:
        bad.append("save_stride must be >= 1")
    if grid.box_length > 0 and grid.num_points >= 1 and params.m_a > 0 and params.hbar > 0:
        dx = grid.box_length / grid.num_points
        k0 = math.sqrt(2 * params.m_a * abs(params.delta) / params.hbar)
        if k0 > 0.7 * math.pi / dx:
            bad.append("k0 must not exceed 0.7*pi/dx (resonant momentum too close to grid edge)")
    if run.method not in METHODS:
        bad.append(f"method must be one of {', '.join(METHODS)}")
    if not run.trajectories >= 1:
        bad.append("trajectories must be >= 1")
    if run.method in DETERMINISTIC_METHODS and run.trajectories != 1:
        bad.append(f"trajectories must be 1 for method {run.method}")
    if not 0 <= run.master_seed < 2**64:
        bad.append("master_seed must be a 64-bit unsigned integer")
    if not run.divergence_threshold > 0:
        bad.append("divergence_threshold must be positive")
    if not run.batches >= 1:
        bad.append("batches must be >= 1")
    if not run.g2_bins >= 0:
        bad.append("g2_bins must be >= 0")
    if not run.chunk_size >= 1:
        bad.append("chunk_size must be >= 1")
    if any(t < 0 or t > grid.t_final + 0.5 * grid.dt for t in run.snapshot_times):
        bad.append("snapshot_times must lie in [0, t_final]")
    return bad


def validate(
    params: PhysicalParams, grid: GridSpec, run: RunConfig
) -> ValidatedConfig:
    problems = _problems(params, grid, run)
    if problems:
        raise ValidationError(problems)
    return ValidatedConfig(params, grid, run, derive(params, grid))


def paper_defaults(**changes: Any) -> ValidatedConfig:
    """Parameters of the 87Rb2 1D system, optionally modified."""
    cfg = validate(PhysicalParams(), GridSpec(), RunConfig())
    return cfg.replace(**changes) if changes else cfg


# --- text configuration -------------------------------------------------

def _coerce(key: str, raw: str) -> Any:
    cls = _KEY_OWNER[key]
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[key]
    raw = raw.strip()
    if ftype == "float":
        return float(raw)
    if ftype == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if ftype == "str":
        return raw.strip("\"'")
    if ftype.startswith("tuple"):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    raise TypeError(ftype)


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict[str, Any]:
    """Parse ``key = value`` lines; unknown keys and bad values are errors."""
    values: dict[str, Any] = {}
    problems = []
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            problems.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in _KEY_OWNER:
            problems.append(f"{source}:{lineno}: unknown key '{key}'")
            continue
        try:
            values[key] = _coerce(key, raw)
        except (ValueError, TypeError) as exc:
            problems.append(f"{source}:{lineno}: bad value for '{key}': {exc}")
    if problems:
        raise ValidationError(problems)
    return values


def build(values: dict[str, Any]) -> ValidatedConfig:
    parts = {cls: {} for cls in _SECTIONS}
    for key, value in values.items():
        if key not in _KEY_OWNER:
            raise ValidationError([f"unknown key '{key}'"])
        parts[_KEY_OWNER[key]][key] = value
    run_kw = parts[RunConfig]
    if run_kw.get("method") in DETERMINISTIC_METHODS:
        run_kw.setdefault("trajectories", 1)
    return validate(
        PhysicalParams(**parts[PhysicalParams]),
        GridSpec(**parts[GridSpec]),
        RunConfig(**run_kw),
    )


def load_config(path: str | Path | None, overrides: Iterable[str] = ()) -> ValidatedConfig:
    """Read a config file and apply ``key=value`` overrides on top."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError([f"cannot read config {path}: {exc}"]) from exc
        values.update(parse_assignments(text.splitlines(), str(path)))
    values.update(parse_assignments(overrides, "--set"))
    return build(values)


def dump_config(cfg: ValidatedConfig) -> str:
    lines = []
    for key, value in cfg.as_dict().items():
        if isinstance(value, list):
            value = ",".join(repr(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
