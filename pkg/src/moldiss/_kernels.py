"""Pointwise local-term integrators (numba).

Each kernel advances the non-kinetic part of one method by ``dt`` with the
implicit midpoint rule, in place, over arrays shaped (trajectories, points).
"""
import cmath

import numpy as np
from numba import njit


@njit(cache=True)
def twa_local(psi_a, psi_m, dt, u_aa, u_am, u_mm, chi, tol, max_iter):
    """Converged implicit midpoint for the TWA local terms (detuning excluded).

    Returns the largest iteration count used.
    """
    n_traj, m = psi_a.shape
    h = 0.5 * dt
    worst = 0
    for t in range(n_traj):
        for i in range(m):
            a0 = psi_a[t, i]
            m0 = psi_m[t, i]
            a = a0
            b = m0
            scale = abs(a0) + abs(m0) + 1e-300
            it = 0
            while it < max_iter:
                na = a.real * a.real + a.imag * a.imag
                nm = b.real * b.real + b.imag * b.imag
                fa = -1j * (u_aa * na + u_am * nm) * a - 1j * chi * b * a.conjugate()
                fm = -1j * (u_am * na + u_mm * nm) * b - 0.5j * chi * a * a
                a_new = a0 + h * fa
                b_new = m0 + h * fm
                change = abs(a_new - a) + abs(b_new - b)
                a = a_new
                b = b_new
                it += 1
                if change <= tol * scale:
                    break
            if it > worst:
                worst = it
            psi_a[t, i] = 2.0 * a - a0
            psi_m[t, i] = 2.0 * b - m0
    return worst


@njit(cache=True)
def pp_local(pa, fa, pm, fm, noise, nmap, alive, dt, dx, u_aa, u_am, u_mm, chi, iters, corr, maxsq):
    """Semi-implicit midpoint for the positive-P local drift and noise.

    ``noise[t, nmap[j], i]`` holds the Wiener increment of noise j (0..9) at
    point i, already scaled to variance dt/dx; ``nmap[j] < 0`` means noise j
    has a vanishing amplitude and is not drawn.  The drift is the Stratonovich
    form: the Ito drift minus half the noise-gradient term, which for these
    noise amplitudes is a pure phase shift of (u_aa/2 + u_am/4)/dx on the
    atomic fields and (u_mm/2 + u_am/4)/dx on the molecular ones.
    ``corr`` scales that shift (0 when the noise is switched off).
    Detuning is handled by the linear propagator, not here.

    The midpoint samples the noise at half its increment, so the mean of a
    drift curved along a noisy direction picks up only half of the exact
    (dt^2/4) Q:grad^2(a) term, Q being the noise covariance per unit time.
    The missing half is added as the drift (dt/8) Q:grad^2(a), also scaled by
    ``corr``.  Without it the depletion of the molecules carries an O(dt) bias.
    """
    n_traj, m = pa.shape
    h = 0.5
    sa = corr * (0.5 * u_aa + 0.25 * u_am) / dx
    sm = corr * (0.5 * u_mm + 0.25 * u_am) / dx
    wk = corr * dt / (8.0 * dx)
    use_chi = chi != 0.0
    use_am = u_am != 0.0
    use_aa = u_aa != 0.0
    use_mm = u_mm != 0.0
    w = np.zeros(10)
    for t in range(n_traj):
        if not alive[t]:
            continue
        mx = 0.0
        for i in range(m):
            for j in range(10):
                k = nmap[j]
                w[j] = noise[t, k, i] if k >= 0 else 0.0
            A0 = pa[t, i]
            B0 = fa[t, i]
            C0 = pm[t, i]
            D0 = fm[t, i]
            A = A0
            B = B0
            C = C0
            D = D0
            for _ in range(iters):
                na = B * A
                nm = D * C
                rot_a = u_aa * na + u_am * nm - sa
                rot_m = u_am * na + u_mm * nm - sm
                dA = (-1j * rot_a * A - 1j * chi * C * B) * dt
                dB = (1j * rot_a * B + 1j * chi * D * A) * dt
                dC = (-1j * rot_m * C - 0.5j * chi * A * A) * dt
                dD = (1j * rot_m * D + 0.5j * chi * B * B) * dt
                if wk != 0.0:
                    # noise covariances: AA, BB, 2AC, 2BD, CC, DD
                    q_aa = -1j * (chi * C + u_aa * A * A)
                    q_bb = 1j * (chi * D + u_aa * B * B)
                    q_ac = -2j * u_am * A * C
                    q_bd = 2j * u_am * B * D
                    q_cc = -1j * u_mm * C * C
                    q_dd = 1j * u_mm * D * D
                    dA += wk * dt * (-2j * u_aa * B * q_aa - 1j * u_am * D * q_ac)
                    dB += wk * dt * (2j * u_aa * A * q_bb + 1j * u_am * C * q_bd)
                    dC += wk * dt * (-1j * chi * q_aa - 1j * u_am * B * q_ac - 2j * u_mm * D * q_cc)
                    dD += wk * dt * (1j * chi * q_bb + 1j * u_am * A * q_bd + 2j * u_mm * C * q_dd)
                if use_chi:
                    dA += cmath.sqrt(-1j * chi * C) * w[0]
                    dB += cmath.sqrt(1j * chi * D) * w[4]
                if use_am:
                    qa = cmath.sqrt(-0.5j * u_am * A * C)
                    qb = cmath.sqrt(0.5j * u_am * B * D)
                    dA += qa * (w[1] + 1j * w[2])
                    dC += qa * (w[1] - 1j * w[2])
                    dB += qb * (w[5] + 1j * w[6])
                    dD += qb * (w[5] - 1j * w[6])
                if use_aa:
                    dA += cmath.sqrt(-1j * u_aa * A * A) * w[3]
                    dB += cmath.sqrt(1j * u_aa * B * B) * w[7]
                if use_mm:
                    dC += cmath.sqrt(-1j * u_mm * C * C) * w[8]
                    dD += cmath.sqrt(1j * u_mm * D * D) * w[9]
                A = A0 + h * dA
                B = B0 + h * dB
                C = C0 + h * dC
                D = D0 + h * dD
            A = 2.0 * A - A0
            B = 2.0 * B - B0
            C = 2.0 * C - C0
            D = 2.0 * D - D0
            pa[t, i] = A
            fa[t, i] = B
            pm[t, i] = C
            fm[t, i] = D
            for v in (A, B, C, D):
                s = v.real * v.real + v.imag * v.imag
                if s > mx:
                    mx = s
                elif s != s:
                    mx = np.inf
        maxsq[t] = mx


@njit(cache=True)
def hfb_rhs(phi_a, phi_m, ga, gn, dx, u_aa, u_mm, chi, d_phi_a, d_phi_m, d_ga, d_gn):
    """Local (non-Laplacian, detuning-free) right-hand sides of the HFB system.

    G_A(x, x') = <chi(x') chi(x)>, G_N(x, x') = <chi^dag(x') chi(x)>; the
    lattice delta function is 1/dx on the diagonal.
    """
    m = phi_m.shape[0]
    inv_dx = 1.0 / dx
    gnd = np.empty(m)
    gad = np.empty(m, dtype=np.complex128)
    a2 = np.empty(m)
    for i in range(m):
        gnd[i] = gn[i, i].real
        gad[i] = ga[i, i]
        a2[i] = phi_a[i].real ** 2 + phi_a[i].imag ** 2
    for i in range(m):
        a = phi_a[i]
        d_phi_a[i] = (
            -1j * u_aa * (a2[i] + 2.0 * gnd[i]) * a
            - 1j * u_aa * gad[i] * a.conjugate()
            - 1j * chi * phi_m[i] * a.conjugate()
        )
        pm = phi_m[i]
        d_phi_m[i] = (
            -1j * u_mm * (pm.real ** 2 + pm.imag ** 2) * pm
            - 0.5j * chi * (a * a + gad[i])
        )
    for i in range(m):
        ai = phi_a[i]
        mi = phi_m[i]
        for j in range(m):
            aj = phi_a[j]
            mj = phi_m[j]
            gaij = ga[i, j]
            gnij = gn[i, j]
            gn_c = gnij.conjugate()
            ga_c = gaij.conjugate()
            va = (
                -2j * u_aa * (a2[i] + a2[j] + gnd[i] + gnd[j]) * gaij
                - 1j * u_aa * (ai * ai * gn_c + aj * aj * gnij + gad[i] * gn_c + gad[j] * gnij)
                - 1j * chi * (mi * gn_c + mj * gnij)
            )
            vn = (
                -2j * u_aa * (a2[i] - a2[j] + gnd[i] - gnd[j]) * gnij
                - 1j * u_aa * (ai * ai * ga_c - (aj * aj).conjugate() * gaij
                               + gad[i] * ga_c - gad[j].conjugate() * gaij)
                - 1j * chi * (mi * ga_c - mj.conjugate() * gaij)
            )
            if i == j:
                va += -1j * u_aa * (ai * ai + gad[i]) * inv_dx - 1j * chi * mi * inv_dx
            d_ga[i, j] = va
            d_gn[i, j] = vn
