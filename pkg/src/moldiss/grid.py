"""Uniform periodic lattice, unitary mode transforms and kinetic propagators.

Mode amplitudes use the convention

    alpha_j = sqrt(dx / M) * sum_m f(x_m) * exp(-i * s * k_j * x_m)

with ``s = +1`` for annihilation-like fields (Psi) and ``s = -1`` for
creation-like fields (Phi, the positive-P partner of Psi*).  With this
scaling ``sum_j |alpha_j|**2`` is a particle number directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy import constants

ANNIHILATION = 1
CREATION = -1

_SIGNS = {"annihilation": ANNIHILATION, "creation": CREATION, 1: 1, -1: -1}


def _sign(sign) -> int:
    try:
        return _SIGNS[sign]
    except KeyError:
        raise ValueError(f"sign must be 'annihilation' or 'creation', got {sign!r}") from None


@dataclass(frozen=True, eq=False)
class Lattice:
    box_length: float
    num_points: int

    @cached_property
    def dx(self) -> float:
        return self.box_length / self.num_points

    @cached_property
    def x(self) -> np.ndarray:
        return -self.box_length / 2 + self.dx * np.arange(self.num_points)

    @cached_property
    def k(self) -> np.ndarray:
        """Momenta in FFT order: j < M/2 -> j*dk, j >= M/2 -> (j-M)*dk."""
        return 2 * np.pi * np.fft.fftfreq(self.num_points, d=self.dx)

    @cached_property
    def dk(self) -> float:
        return 2 * np.pi / self.box_length

    @cached_property
    def _origin_phase(self) -> np.ndarray:
        # exp(-i k_j x_0): the FFT sums from m = 0, the grid starts at x_0
        return np.exp(-1j * self.k * self.x[0])

    @classmethod
    def from_config(cls, cfg) -> "Lattice":
        return cls(cfg.grid.box_length, cfg.grid.num_points)


def modes(values: np.ndarray, lat: Lattice, sign=ANNIHILATION, axis: int = -1) -> np.ndarray:
    """Lattice mode amplitudes of a position-space array along ``axis``."""
    s = _sign(sign)
    shape = [1] * values.ndim
    shape[axis] = lat.num_points
    scale = np.sqrt(lat.dx)
    if s == ANNIHILATION:
        out = sfft.fft(values, axis=axis, norm="ortho")
        return out * (scale * lat._origin_phase).reshape(shape)
    out = sfft.ifft(values, axis=axis, norm="ortho")
    return out * (scale * np.conj(lat._origin_phase)).reshape(shape)


def from_modes(alpha: np.ndarray, lat: Lattice, sign=ANNIHILATION, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`modes`."""
    s = _sign(sign)
    shape = [1] * alpha.ndim
    shape[axis] = lat.num_points
    scale = 1 / np.sqrt(lat.dx)
    if s == ANNIHILATION:
        tmp = alpha * (scale * np.conj(lat._origin_phase)).reshape(shape)
        return sfft.ifft(tmp, axis=axis, norm="ortho")
    tmp = alpha * (scale * lat._origin_phase).reshape(shape)
    return sfft.fft(tmp, axis=axis, norm="ortho")


def modes_2d(values: np.ndarray, lat: Lattice, signs=(ANNIHILATION, ANNIHILATION)) -> np.ndarray:
    """Row-then-column transform of an (x, x') matrix; one sign per index."""
    out = modes(values, lat, signs[1], axis=-1)
    return modes(out, lat, signs[0], axis=-2)


@dataclass(frozen=True, eq=False)
class Field1D:
    values: np.ndarray
    lattice: Lattice
    space: str = "position"

    def __post_init__(self):
        if self.space not in ("position", "momentum"):
            raise ValueError(f"unknown space {self.space!r}")

    def number(self) -> float:
        """dx * sum |f|^2 in position space, sum |alpha|^2 in momentum space."""
        w = self.lattice.dx if self.space == "position" else 1.0
        return float(w * np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True, eq=False)
class Field2D:
    values: np.ndarray
    lattice: Lattice

    def hermiticity_error(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - v.conj().T))) if v.size else 0.0

    def symmetry_error(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - v.T))) if v.size else 0.0


def to_momentum(f: Field1D, sign="annihilation") -> Field1D:
    if f.space != "position":
        raise ValueError("to_momentum expects a position-space field")
    return Field1D(modes(f.values, f.lattice, sign), f.lattice, "momentum")


def to_position(f: Field1D, sign="annihilation") -> Field1D:
    if f.space != "momentum":
        raise ValueError("to_position expects a momentum-space field")
    return Field1D(from_modes(f.values, f.lattice, sign), f.lattice, "position")


def kinetic_phase(lat: Lattice, dt: float, mass: float, hbar: float = constants.hbar) -> np.ndarray:
    """exp(-i hbar k^2 dt / 2m) in FFT order; negative dt gives the Phi-field propagator."""
    return np.exp(-1j * hbar * lat.k**2 * dt / (2 * mass))


def kinetic_phase_1d(
    f: Field1D, dt: float, mass: float, hbar: float = constants.hbar
) -> Field1D:
    if f.space != "position":
        raise ValueError("kinetic_phase_1d expects a position-space field")
    if dt == 0:
        return Field1D(f.values.copy(), f.lattice, "position")
    phase = kinetic_phase(f.lattice, dt, mass, hbar)
    out = sfft.ifft(sfft.fft(f.values, axis=-1) * phase, axis=-1)
    return Field1D(out, f.lattice, "position")


def kinetic_phase_2d_array(
    values: np.ndarray, lat: Lattice, dt: float, mass: float, signs=(1, 1),
    hbar: float = constants.hbar,
) -> np.ndarray:
    if dt == 0:
        return values.copy()
    s1, s2 = signs
    p = kinetic_phase(lat, dt, mass, hbar)
    p1 = p if s1 > 0 else np.conj(p)
    p2 = p if s2 > 0 else np.conj(p)
    tmp = sfft.fft(sfft.fft(values, axis=-1), axis=-2)
    tmp *= p1[:, None] * p2[None, :]
    return sfft.ifft(sfft.ifft(tmp, axis=-2), axis=-1)


def kinetic_phase_2d(
    g: Field2D, dt: float, mass: float, signs=(1, 1), hbar: float = constants.hbar
) -> Field2D:
    """exp(-i hbar (s1 k^2 + s2 k'^2) dt / 2m): (+,+) for G_A, (+,-) for G_N."""
    return Field2D(kinetic_phase_2d_array(g.values, g.lattice, dt, mass, signs, hbar), g.lattice)


def linear_phase(
    lat: Lattice, tau: float, mass: float, shift: float = 0.0, hbar: float = constants.hbar
) -> np.ndarray:
    """exp(-i (hbar k^2 / 2m + shift) tau): kinetic energy plus a constant frequency."""
    return np.exp(-1j * (hbar * lat.k**2 / (2 * mass) + shift) * tau)


def apply_phase(values: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Multiply the plain FFT of the last axis by ``phase`` and transform back."""
    tmp = sfft.fft(values, axis=-1)
    tmp *= phase
    return sfft.ifft(tmp, axis=-1, overwrite_x=True)
