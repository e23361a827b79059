
import numpy as np
import pytest

import oracles
from conftest import small_cfg
from moldiss.config import G0, GridSpec, PhysicalParams, RunConfig, ValidatedConfig, derive
from moldiss.ensemble import run, trajectory_generator
from moldiss.grid import Lattice, modes
from moldiss.positive_p import (
    PositivePStepper, PPState, pp_drift, pp_init, pp_noise_increment, pp_step,
)
from moldiss.twa import TWAState, TWAStepper


def raw_cfg(params=None, grid=None, run_cfg=None):
    """Unvalidated bundle, for limits the validator forbids (delta = 0, M = 1)."""
    params = params or PhysicalParams()
    grid = grid or GridSpec()
    return ValidatedConfig(params, grid, run_cfg or RunConfig(method="positive_p"), derive(params, grid))


def gens(n, seed=0):
    return [trajectory_generator(seed, i) for i in range(n)]


def test_init_numbers(defaults):
    s = pp_init(defaults, 3)
    dx = defaults.derived.dx
    n_m = dx * np.sum(s.phi_m * s.psi_m, axis=-1)
    analytic = defaults.params.n0 * defaults.params.sigma * np.sqrt(np.pi)
    assert np.allclose(n_m.real, analytic, rtol=1e-3)
    assert float(np.round(n_m.real[0], -1)) == 1.62e3
    assert np.all(s.psi_a == 0) and np.all(s.phi_a == 0)
    assert np.array_equal(s.psi_m, s.phi_m)


def test_init_empty():
    s = pp_init(raw_cfg(PhysicalParams(n0=0.0)))
    assert not np.any(s.psi_m) and not np.any(s.phi_m)


def _state(a, b, c, d):
    arr = lambda v: np.atleast_2d(np.asarray(v, dtype=complex))  # noqa: E731
    return PPState(arr(a), arr(b), arr(c), arr(d))


def test_drift_zero_without_couplings():
    cfg = raw_cfg(PhysicalParams(chi_1d=0.0, delta=0.0))
    rng = np.random.default_rng(1)
    v = [rng.standard_normal(8) + 1j * rng.standard_normal(8) for _ in range(4)]
    for d in pp_drift(_state(*v), cfg):
        assert not np.any(d)


def test_drift_vacuum_atoms(defaults):
    c = np.full(8, 3.0 + 0j)
    d = pp_drift(_state(np.zeros(8), np.zeros(8), c, c), defaults)
    for x in d:
        assert not np.any(x)


def test_drift_against_handwritten_oracle():
    p = PhysicalParams(u_aa=G0, u_am=0.3 * G0, u_mm=0.7 * G0)
    cfg = raw_cfg(p)
    rng = np.random.default_rng(4)
    A, B, C, D = (rng.standard_normal(4) + 1j * rng.standard_normal(4) for _ in range(4))
    dA, dB, dC, dD = pp_drift(_state(A, B, C, D), cfg)
    for i in range(4):
        a, b, c, d = A[i], B[i], C[i], D[i]
        ra = p.delta + p.u_aa * b * a + p.u_am * d * c
        rm = p.u_am * b * a + p.u_mm * d * c
        assert dA[0, i] == pytest.approx(-1j * ra * a - 1j * p.chi_1d * c * b)
        assert dB[0, i] == pytest.approx(1j * ra * b + 1j * p.chi_1d * d * a)
        assert dC[0, i] == pytest.approx(-1j * rm * c - 0.5j * p.chi_1d * a * a)
        assert dD[0, i] == pytest.approx(1j * rm * d + 0.5j * p.chi_1d * b * b)


def test_mean_field_term_phase():
    cfg = raw_cfg(PhysicalParams(u_aa=G0, chi_1d=0.0, delta=0.0))
    a = np.array([2.0, 1.0, 0.5, 3.0]) + 0j
    dA = pp_drift(_state(a, a, a, a), cfg)[0][0]
    assert np.allclose(np.angle(dA / a), -np.pi / 2)


def test_noise_increment_zero_without_couplings():
    cfg = raw_cfg(PhysicalParams(chi_1d=0.0))
    s = pp_init(cfg, 2)
    for inc in pp_noise_increment(s, 1e-4, np.random.default_rng(0), cfg):
        assert not np.any(inc)


def test_noise_increment_statistics(defaults):
    dt, dx = 1e-4, defaults.derived.dx
    n_traj, m = 200, defaults.grid.num_points
    c = 2.0e3 + 0j
    s = PPState(*(np.zeros((n_traj, m), complex) for _ in range(2)),
                np.full((n_traj, m), c), np.full((n_traj, m), c))
    inc_a = pp_noise_increment(s, dt, np.random.default_rng(11), defaults)[0].ravel()
    n = inc_a.size
    assert n >= 1e5
    expect = abs(defaults.params.chi_1d * c) * dt / dx
    assert np.mean(np.abs(inc_a) ** 2) == pytest.approx(expect, rel=0.05)
    for part in (inc_a.real, inc_a.imag):
        assert abs(part.mean()) < 3 * part.std() / np.sqrt(n)


def test_free_evolution_conserves_modes():
    p = PhysicalParams(chi_1d=0.0, delta=0.0)
    cfg = raw_cfg(p, GridSpec(dt=1e-4))
    lat = Lattice.from_config(cfg)
    rng = np.random.default_rng(2)
    f = [np.atleast_2d(rng.standard_normal(512) + 1j * rng.standard_normal(512)) for _ in range(4)]
    s = PPState(*[x.copy() for x in f])
    PositivePStepper(cfg).advance(s, 50, gens(1))
    for before, after in zip(f, (s.psi_a, s.phi_a, s.psi_m, s.phi_m)):
        n0 = np.abs(modes(before, lat)) ** 2
        n1 = np.abs(modes(after, lat)) ** 2
        assert np.allclose(n1, n0, rtol=1e-10, atol=1e-10 * n0.max())


def test_noise_free_matches_classical_field():
    cfg = small_cfg(method="positive_p", trajectories=1)
    x = cfg.derived.x_grid
    seed = (1e2 * np.exp(-(x**2) / (2e-5) ** 2) * np.exp(3j * x / 1e-5)).astype(complex)
    s = pp_init(cfg, 1)
    s.psi_a[:] = seed
    s.phi_a[:] = np.conj(seed)
    w = TWAState(s.psi_a.copy(), s.psi_m.copy())
    PositivePStepper(cfg, noise=False).advance(s, 300, gens(1))
    TWAStepper(cfg).advance(w, 300)
    scale = np.abs(w.psi_m).max()
    assert np.abs(s.psi_a - w.psi_a).max() < 1e-8 * scale
    assert np.abs(s.psi_m - w.psi_m).max() < 1e-8 * scale
    assert np.abs(s.phi_a - np.conj(w.psi_a)).max() < 1e-8 * scale


def test_divergence_flagged_not_raised(defaults):
    cfg = defaults.replace(method="positive_p", trajectories=3, dt=1e-4)
    s = pp_init(cfg, 3)
    s.psi_a[1, 10] = 1e9
    s.phi_a[1, 10] = 1e9
    s.psi_a[2, 5] = np.nan
    out = pp_step(s, cfg.grid.dt, gens(3), cfg)
    assert list(out.diverged) == [False, True, True]
    assert np.all(np.isfinite(out.t_diverged[1:])) and out.t_diverged[0] == np.inf
    assert not np.any(out.psi_a[1:]) and np.all(np.isfinite(out.psi_m))
    assert not s.diverged.any()


def test_step_reproducible_and_pure(defaults):
    cfg = defaults.replace(method="positive_p", trajectories=2, dt=1e-4)
    s = pp_init(cfg, 2)
    a = pp_step(s, cfg.grid.dt, gens(2, 5), cfg)
    b = pp_step(s, cfg.grid.dt, gens(2, 5), cfg)
    assert np.array_equal(a.psi_a, b.psi_a) and np.array_equal(a.phi_m, b.phi_m)
    assert not np.any(s.psi_a)
    assert a.t == pytest.approx(1e-4)


def test_conservation_in_ensemble_mean():
    cfg = small_cfg(method="positive_p", trajectories=400, t_final=0.05, save_stride=100, chunk_size=200)
    s = run(cfg, progress=False)
    # relative residual of 2 N_m + N_a in units of its own standard error
    assert np.all(s.conservation_residual[1:] < 1e-2)
    assert np.all(s.diverged_frac == 0)


@pytest.mark.parametrize("u_aa", [0.0, 0.1])
def test_single_mode_against_euler_oracle(u_aa):
    """M = 1, no kinetic energy: compare with Ito Euler-Maruyama at dt/10."""
    dx, n_mol, chi = 1.0, 50.0, 8.0 / np.sqrt(50.0)
    p = PhysicalParams(chi_1d=chi, delta=-1.0, u_aa=u_aa, n0=n_mol, sigma=1e-9)
    dt, t_final, n_traj = 1e-3, 0.3, 10_000
    cfg = raw_cfg(p, GridSpec(box_length=dx, num_points=1, dt=dt, t_final=t_final))
    c0 = np.sqrt(n_mol / dx)
    zeros = np.zeros((n_traj, 1), complex)
    s = PPState(zeros.copy(), zeros.copy(), np.full((n_traj, 1), c0 + 0j), np.full((n_traj, 1), c0 + 0j))
    PositivePStepper(cfg).advance(s, int(round(t_final / dt)), gens(n_traj, 99))
    nm = (np.real(s.phi_m * s.psi_m) * dx).ravel()
    _, ref = oracles.single_mode_pp_euler(
        zeros[:, 0], zeros[:, 0], np.full(n_traj, c0), np.full(n_traj, c0), t_final, dt / 10, dx,
        chi, u_aa, 0.0, 0.0, -1.0, np.random.default_rng(12345),
    )
    ref_nm = ref[-1]
    se = np.hypot(nm.std(ddof=1), ref_nm.std(ddof=1)) / np.sqrt(n_traj)
    assert n_mol - nm.mean() > 5.0  # real depletion happened
    assert abs(nm.mean() - ref_nm.mean()) < 2 * se


def test_one_step_mean_matches_ito_expansion():
    # From the atomic vacuum the exact mean after one step is
    # c (1 - chi^2 dt^2 / (4 dx)); a bare midpoint recovers only half the shift.
    from moldiss import _kernels

    n, c, chi, dt, dx = 400_000, 1.0 + 0.0j, 0.0067, 1e-3, 1e-6
    rng = np.random.default_rng(7)
    fields = [np.zeros((n, 1), complex), np.zeros((n, 1), complex),
              np.full((n, 1), c), np.full((n, 1), np.conj(c))]
    noise = rng.standard_normal((n, 2, 1)) * np.sqrt(dt / dx)
    nmap = np.full(10, -1, dtype=np.int64)
    nmap[0], nmap[4] = 0, 1
    _kernels.pp_local(*fields, noise, nmap, np.ones(n, bool), dt, dx,
                      0.0, 0.0, 0.0, chi, 3, 1.0, np.zeros(n))
    shift = fields[2][:, 0] - c
    expected = -(chi**2) * dt**2 / (4 * dx)
    se = shift.real.std() / np.sqrt(n)
    assert abs(shift.real.mean() - expected) < 5 * se
    assert abs(shift.real.mean() - expected / 2) > 10 * se
