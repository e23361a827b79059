"""Positive-P stochastic field equations for atom-molecule dissociation.

Four fields per trajectory: Psi_a, Phi_a, Psi_m, Phi_m, where Phi_i stands
for the conjugate of Psi_i only in the ensemble mean.  Arrays are shaped
(trajectories, points) so a batch of independent trajectories advances
together; every trajectory owns its own random stream.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .config import ValidatedConfig
from .grid import Lattice, apply_phase, linear_phase

N_NOISES = 10
# noise index -> the coupling whose amplitude multiplies it
_NOISE_COUPLING = ("chi_1d", "u_am", "u_am", "u_aa", "chi_1d", "u_am", "u_am", "u_aa", "u_mm", "u_mm")


@dataclass
class PPState:
    psi_a: np.ndarray
    phi_a: np.ndarray
    psi_m: np.ndarray
    phi_m: np.ndarray
    t: float = 0.0
    diverged: np.ndarray = None
    t_diverged: np.ndarray = None

    def __post_init__(self):
        n = self.psi_a.shape[0]
        if self.diverged is None:
            self.diverged = np.zeros(n, dtype=bool)
        if self.t_diverged is None:
            self.t_diverged = np.full(n, np.inf)

    def copy(self) -> "PPState":
        return dataclasses.replace(
            self,
            psi_a=self.psi_a.copy(), phi_a=self.phi_a.copy(),
            psi_m=self.psi_m.copy(), phi_m=self.phi_m.copy(),
            diverged=self.diverged.copy(), t_diverged=self.t_diverged.copy(),
        )


def pp_init(cfg: ValidatedConfig, n_traj: int = 1) -> PPState:
    """Coherent molecular condensate, atomic vacuum: no initial noise."""
    x = cfg.derived.x_grid
    p = cfg.params
    amp = np.sqrt(p.n0 * np.exp(-(x**2) / p.sigma**2)).astype(complex)
    mol = np.broadcast_to(amp, (n_traj, x.size)).copy()
    zeros = np.zeros_like(mol)
    return PPState(zeros, zeros.copy(), mol, mol.copy())


def pp_drift(s: PPState, cfg: ValidatedConfig):
    """Deterministic non-kinetic terms of the Ito equations, including detuning."""
    p = cfg.params
    na = s.phi_a * s.psi_a
    nm = s.phi_m * s.psi_m
    rot_a = p.delta + p.u_aa * na + p.u_am * nm
    rot_m = p.u_am * na + p.u_mm * nm
    chi = p.chi_1d
    d_psi_a = -1j * rot_a * s.psi_a - 1j * chi * s.psi_m * s.phi_a
    d_phi_a = 1j * rot_a * s.phi_a + 1j * chi * s.phi_m * s.psi_a
    d_psi_m = -1j * rot_m * s.psi_m - 0.5j * chi * s.psi_a**2
    d_phi_m = 1j * rot_m * s.phi_m + 0.5j * chi * s.phi_a**2
    return d_psi_a, d_phi_a, d_psi_m, d_phi_m


def draw_noises(rng: np.random.Generator, dt: float, dx: float, m: int) -> np.ndarray:
    """Ten real lattice white noises zeta_j(x_i) with variance 1/(dx dt)."""
    return rng.standard_normal((N_NOISES, m)) / np.sqrt(dx * dt)


def pp_noise_increment(s: PPState, dt: float, rng, cfg: ValidatedConfig):
    """Noise increments B(s) zeta dt for all four fields (single trajectory or batch).

    ``rng`` is one generator, or a sequence with one generator per trajectory.
    """
    p = cfg.params
    dx = cfg.derived.dx
    n_traj, m = s.psi_a.shape
    gens = [rng] * n_traj if isinstance(rng, np.random.Generator) else list(rng)
    z = np.stack([draw_noises(g, dt, dx, m) for g in gens], axis=1) * dt
    A, B, C, D = s.psi_a, s.phi_a, s.psi_m, s.phi_m
    qa = np.sqrt(-0.5j * p.u_am * A * C)
    qb = np.sqrt(0.5j * p.u_am * B * D)
    inc_a = np.sqrt(-1j * p.chi_1d * C) * z[0] + qa * (z[1] + 1j * z[2]) + np.sqrt(-1j * p.u_aa * A * A) * z[3]
    inc_b = np.sqrt(1j * p.chi_1d * D) * z[4] + qb * (z[5] + 1j * z[6]) + np.sqrt(1j * p.u_aa * B * B) * z[7]
    inc_c = qa * (z[1] - 1j * z[2]) + np.sqrt(-1j * p.u_mm * C * C) * z[8]
    inc_d = qb * (z[5] - 1j * z[6]) + np.sqrt(1j * p.u_mm * D * D) * z[9]
    return inc_a, inc_b, inc_c, inc_d


class PositivePStepper:
    """Strang splitting: exact linear half-steps around a semi-implicit midpoint.

    The linear part (kinetic energy and the atomic detuning) is applied
    exactly in momentum space.  The local part uses ``iters`` fixed-point
    iterations of the implicit midpoint rule with noise evaluated at the
    midpoint, so the scheme converges to the Stratonovich reading of the
    drift passed to the kernel; the kernel adds the Ito-to-Stratonovich shift.
    """

    def __init__(self, cfg: ValidatedConfig, iters: int = 3, noise: bool = True):
        self.cfg = cfg
        self.iters = iters
        p = cfg.params
        lat = Lattice.from_config(cfg)
        dt = cfg.grid.dt
        self.dt = dt
        self.dx = lat.dx
        self.m = lat.num_points
        self._phases = {}
        for frac in (0.5, 1.0):
            pa = linear_phase(lat, frac * dt, p.m_a, p.delta, p.hbar)
            pm = linear_phase(lat, frac * dt, p.m_m, 0.0, p.hbar)
            # Phi fields obey the conjugate linear equations
            self._phases[frac] = (pa, np.conj(pa), pm, np.conj(pm))
        # only noises with a nonzero coupling are drawn; noise=False drops them all
        used = [j for j, name in enumerate(_NOISE_COUPLING) if noise and getattr(p, name) != 0.0]
        self.used_noises = used
        self.nmap = np.full(N_NOISES, -1, dtype=np.int64)
        for slot, j in enumerate(used):
            self.nmap[j] = slot
        self.max_sq = p.n0 * cfg.run.divergence_threshold
        self.corr = 1.0 if noise else 0.0

    def _linear(self, s: PPState, frac: float) -> None:
        pa, pb, pc, pd = self._phases[frac]
        s.psi_a = apply_phase(s.psi_a, pa)
        s.phi_a = apply_phase(s.phi_a, pb)
        s.psi_m = apply_phase(s.psi_m, pc)
        s.phi_m = apply_phase(s.phi_m, pd)

    def _draw(self, gens: Sequence[np.random.Generator], buf: np.ndarray) -> None:
        for t, g in enumerate(gens):
            g.standard_normal(out=buf[t])
        buf *= np.sqrt(self.dt / self.dx)

    def _local(self, s: PPState, gens, buf, alive) -> None:
        p = self.cfg.params
        if buf.shape[1]:
            self._draw(gens, buf)
        maxsq = np.zeros(s.psi_a.shape[0])
        _kernels.pp_local(
            s.psi_a, s.phi_a, s.psi_m, s.phi_m, buf, self.nmap, alive,
            self.dt, self.dx, p.u_aa, p.u_am, p.u_mm, p.chi_1d, self.iters, self.corr, maxsq,
        )
        bad = alive & ~(maxsq <= self.max_sq)
        if bad.any():
            s.diverged |= bad
            s.t_diverged[bad] = s.t + 0.5 * self.dt
            for f in (s.psi_a, s.phi_a, s.psi_m, s.phi_m):
                f[bad] = 0.0
            alive &= ~bad

    def advance(self, s: PPState, n_steps: int, gens: Sequence[np.random.Generator]) -> None:
        """Advance ``n_steps`` in place, fusing adjacent linear half-steps."""
        if n_steps <= 0:
            return
        n_traj = s.psi_a.shape[0]
        buf = np.empty((n_traj, len(self.used_noises), self.m))
        alive = ~s.diverged
        self._linear(s, 0.5)
        for i in range(n_steps):
            self._local(s, gens, buf, alive)
            s.t += self.dt
            self._linear(s, 1.0 if i < n_steps - 1 else 0.5)
        for f in (s.psi_a, s.phi_a, s.psi_m, s.phi_m):
            f[s.diverged] = 0.0


def pp_step(s: PPState, dt: float, gens, cfg: ValidatedConfig) -> PPState:
    """One Strang step of length ``dt``; returns a new state.

    Trajectories that turn non-finite or exceed the divergence threshold are
    flagged in ``diverged`` instead of raising.
    """
    if dt != cfg.grid.dt:
        cfg = cfg.replace(dt=dt, t_final=max(cfg.grid.t_final, dt))
    if isinstance(gens, np.random.Generator):
        gens = [gens]
    out = s.copy()
    PositivePStepper(cfg).advance(out, 1, gens)
    return out
