"""Electron-phonon kernels, gap-edge rates, and the CSL/phonon crossover finder.

Phonons are held in equilibrium at the bath temperature.  Energies are in
units of the gap; rates carry the characteristic factor gamma_0 = 1/tau_0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect
from scipy.special import logsumexp

from . import bcs
from .csl_rates import csl_generation_rate
from .grid import OccupationFunction
from .materials import CODATA, CslParams, MaterialParams

KINDS = ("recombination", "eph_generation", "csl_generation", "difference")

# Default crossover search window (K) and root tolerance.
T_RANGE = (0.010, 0.200)
T_XTOL = 1e-5

Occupation = OccupationFunction | Callable | None


class BracketingError(RuntimeError):
    """No sign change of a rate difference inside the temperature range."""

    def __init__(self, message: str, curves: dict[str, "RateCurve"]):
        super().__init__(message)
        self.curves = curves


@dataclass(frozen=True, eq=False)
class RateCurve:
    abscissa: np.ndarray  # K or x
    values: np.ndarray  # 1/s
    kind: str
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        a = np.asarray(self.abscissa, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if a.shape != v.shape:
            raise ValueError("abscissa and values differ in length")
        if np.any(np.diff(a) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("rate curve has non-finite values")
        object.__setattr__(self, "abscissa", a)
        object.__setattr__(self, "values", v)

    def rows(self):
        return [("abscissa", "value", "kind")] + [
            (float(a), float(v), self.kind) for a, v in zip(self.abscissa, self.values)
        ]


def kernel_S(x, y):
    """Scattering kernel (x - y)^2 rho(y) L^2(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    L2, _ = bcs.coherence_factors(x, y)
    return (x - y) ** 2 * bcs.dos(y) * L2


def kernel_G(x, y):
    """Recombination / pair-generation kernel (x + y)^2 rho(y) M^2(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _, M2 = bcs.coherence_factors(x, y)
    return (x + y) ** 2 * bcs.dos(y) * M2


def reduced_temperature(mat: MaterialParams, T: float) -> float:
    """k_B T / gap."""
    return bcs.thermal_energy(T) / mat.gap0


def _partner_quadrature(f: Occupation, mat: MaterialParams, T: float, y_max: float, n_quad: int):
    """Nodes y, rho-weighted quadrature weights and log f(y).

    An OccupationFunction is integrated on its own grid.  A callable is taken
    as y -> log f(y); None means Fermi-Dirac at T.  Both use Gauss-Legendre in u.
    """
    if isinstance(f, OccupationFunction):
        g = f.grid
        keep = g.nodes <= y_max * (1 + 1e-12)
        return g.nodes[keep], g.rho_weights[keep], f.log_f[keep]
    y, w = bcs.gauss_legendre_u(y_max, n_quad)
    if f is None:
        return y, w, -np.logaddexp(0.0, y / reduced_temperature(mat, T))
    return y, w, np.asarray(f(y), dtype=float)


def _log_n_plus_one(z):
    # log(N + 1) for N = 1/(e^z - 1), z > 0
    return -np.log(-np.expm1(-z))


def _pair_weight(x, y):
    # (x + y)^2 (1 + 1/(x y)), the phonon matrix element for pair processes
    return (x + y) ** 2 * (1.0 + 1.0 / (x * y))


def _check_x(x) -> np.ndarray:
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < 1):
        raise bcs.DomainError("rates need x >= 1")
    return x_arr


def _log_integral(log_integrand: np.ndarray, w: np.ndarray, gamma0: float) -> np.ndarray:
    return np.log(gamma0) + logsumexp(log_integrand, b=w[None, :], axis=1)


def log_recombination_rate(x, T, f: Occupation, mat: MaterialParams, y_max=4.0, n_quad=200):
    x_arr = _check_x(x)
    t = reduced_temperature(mat, T)
    y, w, log_f = _partner_quadrature(f, mat, T, y_max, n_quad)
    xx, yy = x_arr[:, None], y[None, :]
    log_term = np.log(_pair_weight(xx, yy)) + _log_n_plus_one((xx + yy) / t) + log_f[None, :]
    return _log_integral(log_term, w, mat.gamma0)


def log_eph_generation_rate(x, T, f: Occupation, mat: MaterialParams, y_max=4.0, n_quad=200):
    x_arr = _check_x(x)
    t = reduced_temperature(mat, T)
    y, w, log_f = _partner_quadrature(f, mat, T, y_max, n_quad)
    xx, yy = x_arr[:, None], y[None, :]
    # log N = -z + log(N + 1)
    log_n = -(xx + yy) / t + _log_n_plus_one((xx + yy) / t)
    log_fbar = np.log(-np.expm1(log_f))[None, :]
    return _log_integral(np.log(_pair_weight(xx, yy)) + log_n + log_fbar, w, mat.gamma0)


def recombination_rate(
    x, T: float, f: Occupation, mat: MaterialParams, y_max: float = 4.0, n_quad: int = 200
):
    """Rate (1/s) for a quasiparticle at x to recombine with a partner."""
    out = np.exp(log_recombination_rate(x, T, f, mat, y_max, n_quad))
    return out if np.ndim(x) else float(out[0])


def eph_generation_rate(
    x, T: float, f: Occupation, mat: MaterialParams, y_max: float = 4.0, n_quad: int = 200
):
    """Rate (1/s) at which phonon pair breaking creates a quasiparticle at x."""
    out = np.exp(log_eph_generation_rate(x, T, f, mat, y_max, n_quad))
    return out if np.ndim(x) else float(out[0])


def rate_tail_bound(kind: str, x: float, T: float, mat: MaterialParams, y_max: float = 4.0) -> float:
    """Upper bound (1/s) on the integral over y > y_max that the rates drop.

    Assumes the partner occupation is at most thermal at T above y_max.
    """
    t = reduced_temperature(mat, T)
    enh = 1.0 / -np.expm1(-(x + y_max) / t)  # bounds N + 1 and N e^z
    shape = bcs.dos(y_max) * (1.0 + 1.0 / (x * y_max)) * enh
    X = x + y_max
    poly = t * (X**2 + 2 * t * X + 2 * t * t)
    if kind == "recombination":
        return float(mat.gamma0 * shape * poly * np.exp(-y_max / t))
    if kind == "eph_generation":
        return float(mat.gamma0 * shape * poly * np.exp(-X / t))
    raise ValueError(f"no tail bound for {kind!r}")


@dataclass(frozen=True)
class CrossoverResult:
    t1: float  # K, CSL generation equals phonon pair breaking
    t2: float  # K, CSL generation equals recombination
    gamma_csl: float  # 1/s at the gap edge
    t_range: tuple[float, float]


def difference_curves(
    temperatures,
    mat: MaterialParams,
    csl: CslParams,
    occupation: Callable[[float], Occupation] | None = None,
) -> dict[str, RateCurve]:
    """Gap-edge rates versus temperature and their differences D1, D2."""
    T = np.asarray(temperatures, dtype=float)
    g_csl = csl_generation_rate(1.0, mat, csl)
    occ = occupation or (lambda _T: None)
    rec = np.array([recombination_rate(1.0, Ti, occ(Ti), mat) for Ti in T])
    gen = np.array([eph_generation_rate(1.0, Ti, occ(Ti), mat) for Ti in T])
    return {
        "csl_generation": RateCurve(T, np.full_like(T, g_csl), "csl_generation"),
        "eph_generation": RateCurve(T, gen, "eph_generation"),
        "recombination": RateCurve(T, rec, "recombination"),
        "D1": RateCurve(T, g_csl - gen, "difference", "D1"),
        "D2": RateCurve(T, g_csl - rec, "difference", "D2"),
    }


def crossover_temperatures(
    mat: MaterialParams,
    csl: CslParams,
    T_range: tuple[float, float] = T_RANGE,
    occupation: Callable[[float], Occupation] | None = None,
    xtol: float = T_XTOL,
) -> CrossoverResult:
    """Temperatures where the CSL gap-edge generation rate meets the phonon rates.

    D1 = gamma_CSL - gamma_gen^eph and D2 = gamma_CSL - gamma_rec^eph at x = 1;
    both are positive below their root.  Roots are found by bisection on the
    log-ratio, which has the same sign and is far better conditioned.
    """
    lo, hi = T_range
    if not 0 < lo < hi:
        raise ValueError("T_range must satisfy 0 < lo < hi")
    g_csl = csl_generation_rate(1.0, mat, csl)
    if g_csl <= 0:
        raise BracketingError("CSL generation rate vanishes", difference_curves(np.linspace(lo, hi, 100), mat, csl, occupation))
    occ = occupation or (lambda _T: None)
    log_g = np.log(g_csl)

    def d1(T):
        return log_g - log_eph_generation_rate(1.0, T, occ(T), mat)[0]

    def d2(T):
        return log_g - log_recombination_rate(1.0, T, occ(T), mat)[0]

    roots = []
    for name, fn in (("D1", d1), ("D2", d2)):
        a, b = fn(lo), fn(hi)
        if not (a > 0 > b):
            curves = difference_curves(np.linspace(lo, hi, 100), mat, csl, occupation)
            raise BracketingError(
                f"{name} does not change sign on [{lo * 1e3:.1f}, {hi * 1e3:.1f}] mK", curves
            )
        roots.append(bisect(fn, lo, hi, xtol=xtol))
    return CrossoverResult(roots[0], roots[1], g_csl, (lo, hi))
