"""Closed-form BCS primitives in dimensionless energy x = E / gap.

Integrals over quasiparticle energies carry the 1/sqrt(x - 1) singularity of
the density of states.  They are done in u with x = cosh(u), where
rho(x) dx = cosh(u) du is regular.
"""
from __future__ import annotations

import numpy as np

from .materials import CODATA, MaterialParams

# Smallest phonon energy (eV) accepted by bose_einstein.
OMEGA_MIN = 1e-12


class DomainError(ValueError):
    pass


def _kT(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise DomainError("temperature must be positive")
    return CODATA.k_B_eV * T


def thermal_energy(T: float) -> float:
    """k_B T in eV."""
    return float(_kT(T))


def dos(x):
    """Normalised BCS density of states x / sqrt(x^2 - 1), defined for x > 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1):
        raise DomainError("density of states is singular at x <= 1; integrate with gap_edge_quad")
    out = x / np.sqrt((x - 1.0) * (x + 1.0))
    return out if out.ndim else float(out)


def xi(x):
    """s(x) = sqrt(x^2 - 1), the normal-state energy in units of the gap."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.maximum((x - 1.0) * (x + 1.0), 0.0))


def log_fermi_dirac(E, T):
    """log of 1 / (exp(E / k_B T) + 1), safe for E / k_B T in the thousands."""
    z = np.asarray(E, dtype=float) / _kT(T)
    return -np.logaddexp(0.0, z)


def fermi_dirac(E, T):
    """Fermi-Dirac occupation at energy E (eV) and temperature T (K)."""
    out = np.exp(log_fermi_dirac(E, T))
    return out if np.ndim(out) else float(out)


def log_bose_einstein(omega, T):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("phonon energy must be positive")
    if np.any(omega < OMEGA_MIN):
        raise DomainError(f"phonon energy below OMEGA_MIN={OMEGA_MIN} eV")
    z = omega / _kT(T)
    # log(1/(e^z - 1)) = -z - log(1 - e^-z)
    return -z - np.log(-np.expm1(-z))


def bose_einstein(omega, T):
    """Bose-Einstein occupation of a phonon of energy omega (eV) at T (K)."""
    out = np.exp(log_bose_einstein(omega, T))
    return out if np.ndim(out) else float(out)


def coherence_factors(x, y):
    """Return (L^2, M^2) for two quasiparticles on the same side of the Fermi surface."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = (1.0 - xi(x) * xi(y)) / (x * y)
    L2 = 0.5 * (1.0 - c)
    M2 = 0.5 * (1.0 + c)
    if L2.ndim == 0:
        return float(L2), float(M2)
    return L2, M2


def thermal_xqp(mat: MaterialParams, T: float) -> float:
    """Low-temperature closed form sqrt(2 pi k_B T / gap) exp(-gap / k_B T)."""
    kT = float(_kT(T))
    if kT >= mat.gap0 / 5:
        raise DomainError(f"T={T} K outside the k_B T < gap/5 validity window")
    t = kT / mat.gap0
    return float(np.sqrt(2 * np.pi * t) * np.exp(-1.0 / t))


def gap_correction(mat: MaterialParams, x_qp: float) -> float:
    """Gap (eV) reduced linearly by the quasiparticle density."""
    if x_qp < 0:
        raise DomainError("x_qp must be non-negative")
    if x_qp >= 0.1:
        raise DomainError("linearised gap correction needs x_qp < 0.1")
    return mat.gap0 * (1.0 - x_qp)


def gauss_legendre_u(x_hi: float, n: int = 200, x_lo: float = 1.0):
    """Nodes x and weights for integrals of g(x) rho(x) dx on [x_lo, x_hi].

    Returns (x, w) such that sum(w * g(x)) approximates the integral; the
    density of states is folded into the weights.
    """
    if x_lo < 1 or x_hi <= x_lo:
        raise DomainError("need 1 <= x_lo < x_hi")
    t, wt = np.polynomial.legendre.leggauss(n)
    a, b = np.arccosh(x_lo), np.arccosh(x_hi)
    u = 0.5 * (b - a) * t + 0.5 * (b + a)
    w = 0.5 * (b - a) * wt * np.cosh(u)
    return np.cosh(u), w


def gap_edge_quad(g, x_hi: float, n: int = 200, x_lo: float = 1.0) -> float:
    """Integral of g(x) * rho(x) over [x_lo, x_hi] with the cosh substitution."""
    x, w = gauss_legendre_u(x_hi, n, x_lo)
    return float(np.sum(w * g(x)))
