"""Reference calculations written independently of the package internals.

Nothing here imports the integrators or estimators under test; each oracle
works from closed-form results or from a deliberately naive algorithm.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

HBAR = 1.054571817e-34


# --- Fourier / free propagation ----------------------------------------------

def gaussian_modes(k, n0, sigma, box_length):
    """Continuum transform of sqrt(n0) exp(-x^2 / 2 sigma^2) in the mode scaling.

    alpha(k) ~ (1/sqrt(L)) * integral f(x) exp(-i k x) dx.
    """
    return np.sqrt(n0) * sigma * np.sqrt(2 * np.pi) * np.exp(-(k**2) * sigma**2 / 2) / np.sqrt(box_length)


def free_gaussian_width_sq(s0, t, mass, hbar=HBAR):
    """<x^2> of |psi|^2 for psi(0) ~ exp(-x^2 / 2 s0^2), free particle."""
    s_t = s0 * math.sqrt(1 + (hbar * t / (mass * s0**2)) ** 2)
    return s_t**2 / 2


# --- single-mode positive-P, Ito Euler-Maruyama ------------------------------

def single_mode_pp_euler(A, B, C, D, t_final, dt, dx, chi, u_aa, u_am, u_mm, delta, rng):
    """Brute-force Ito Euler-Maruyama for the one-point positive-P equations.

    Arrays A, B, C, D are per-trajectory values of psi_a, phi_a, psi_m, phi_m.
    Returns the time grid and the ensemble of Re(D*C)*dx at every step.
    """
    A, B, C, D = (np.array(v, dtype=complex) for v in (A, B, C, D))
    n = int(round(t_final / dt))
    out = np.empty((n + 1, A.size))
    out[0] = np.real(D * C) * dx
    s = math.sqrt(dt / dx)
    for i in range(n):
        w = rng.standard_normal((10, A.size)) * s
        na, nm = B * A, D * C
        ra = delta + u_aa * na + u_am * nm
        rm = u_am * na + u_mm * nm
        qa = np.sqrt(-0.5j * u_am * A * C)
        qb = np.sqrt(0.5j * u_am * B * D)
        dA = (-1j * ra * A - 1j * chi * C * B) * dt + np.sqrt(-1j * chi * C) * w[0] \
            + qa * (w[1] + 1j * w[2]) + np.sqrt(-1j * u_aa * A * A) * w[3]
        dB = (1j * ra * B + 1j * chi * D * A) * dt + np.sqrt(1j * chi * D) * w[4] \
            + qb * (w[5] + 1j * w[6]) + np.sqrt(1j * u_aa * B * B) * w[7]
        dC = (-1j * rm * C - 0.5j * chi * A * A) * dt + qa * (w[1] - 1j * w[2]) \
            + np.sqrt(-1j * u_mm * C * C) * w[8]
        dD = (1j * rm * D + 0.5j * chi * B * B) * dt + qb * (w[5] - 1j * w[6]) \
            + np.sqrt(1j * u_mm * D * D) * w[9]
        A, B, C, D = A + dA, B + dB, C + dC, D + dD
        out[i + 1] = np.real(D * C) * dx
    return np.arange(n + 1) * dt, out


# --- Gaussian-state moments by explicit Wick enumeration ----------------------

def perfect_matchings(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for m in perfect_matchings(rest[:i] + rest[i + 1:]):
            yield [(first, other)] + m


def wick_expectation(ops, two_point):
    """<O_1 ... O_n> of a zero-mean Gaussian state as a sum over all pairings.

    ``ops`` is a list of (kind, mode) with kind 'c' (creation) or 'a'; each
    pairing contributes the product of ordered two-point functions.
    """
    total = 0.0 + 0.0j
    for match in perfect_matchings(list(range(len(ops)))):
        term = 1.0 + 0.0j
        for i, j in match:
            term *= two_point(ops[i], ops[j])
        total += term
    return total


def gaussian_two_point(N, A):
    """Two-point function of modes with <a_j^dag a_i> = N[i, j], <a_j a_i> = A[i, j]."""

    def f(o1, o2):
        (k1, i), (k2, j) = o1, o2
        if k1 == "c" and k2 == "a":
            return N[j, i]  # <a_i^dag a_j>
        if k1 == "a" and k2 == "a":
            return A[j, i]  # <a_i a_j>
        if k1 == "c" and k2 == "c":
            return np.conj(A[i, j])  # <a_i^dag a_j^dag>
        # <a_i a_j^dag> = <a_j^dag a_i> + delta_ij
        return N[i, j] + (1.0 if i == j else 0.0)

    return f


def g2_brute(N, A, i, j):
    f = gaussian_two_point(N, A)
    num = wick_expectation([("c", i), ("c", j), ("a", j), ("a", i)], f)
    return float(np.real(num / (N[i, i] * N[j, j])))


def two_mode_squeezed_g2(r, n_max=80):
    """Exact Fock-space g2 between the two arms of a two-mode squeezed vacuum."""
    n = np.arange(n_max)
    p = (np.tanh(r) ** (2 * n)) / np.cosh(r) ** 2
    mean_n = float(np.sum(p * n))
    return float(np.sum(p * n * n)) / mean_n**2, mean_n


# --- uniform-pump pair production -------------------------------------------

def pairing_occupation(eps, g, t):
    """n_k(t) for b' = -i eps b - i g b^dag_{-k}, starting from vacuum.

    n = g^2 sinh^2(lam t) / lam^2 with lam^2 = g^2 - eps^2 (complex if needed).
    """
    lam = np.sqrt(np.asarray(g**2 - eps**2, dtype=complex))
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(np.abs(lam) > 0, g**2 * np.abs(np.sinh(lam * t) / lam) ** 2, (g * t) ** 2)
    return np.real(val)


def pairing_anomalous(eps, g, t):
    """|m_k|^2 = n_k (n_k + 1) for a pure two-mode squeezed pair."""
    n = pairing_occupation(eps, g, t)
    return n * (n + 1)


# --- Wigner moment conversions --------------------------------------------------

def coherent_wigner_moments(beta_sq):
    """(<|a|^2>_W, <|a|^4>_W) and normally ordered (n, <a^dag a^dag a a>) of a coherent state."""
    return (beta_sq + 0.5, beta_sq**2 + 2 * beta_sq + 0.5), (beta_sq, beta_sq**2)


def thermal_wigner_moments(nbar):
    w1 = nbar + 0.5
    return (w1, 2 * w1**2), (nbar, 2 * nbar**2)


def all_pairs(n):
    return list(itertools.combinations(range(n), 2))
