"""Rates driven by the CSL noise field.

The energy-resolved generation rate carries two huge exponentials,
exp(-2 T_F / T_CSL) and exp(+2 gap/k_B T_CSL * sqrt((s_x + beta)(s_y + beta))),
each of size ~exp(6e6) for aluminium.  They are never formed separately:
their sum is rewritten as

    -g * (s_x - s_y)^2 / (sqrt(s_x + beta) + sqrt(s_y + beta))^2

with g = gauss_width, which is O(1) or smaller on the integration window.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bcs
from .grid import EnergyGrid, OccupationFunction
from .materials import CODATA, CslParams, MaterialParams, derived_scales

# Largest |fused exponent| accepted before we declare the regime unsupported.
EXPONENT_LIMIT = 1e4
UM3_PER_M3 = 1e-18


class CslOverflowError(FloatingPointError):
    """Fused exponent or rate left the representable range."""


def reduction_rate(csl: CslParams, n: int, n_groups: int) -> float:
    """State-reduction rate lambda n^2 N (m/m0)^2 for N groups of n particles."""
    if n < 1 or n_groups < 1:
        raise ValueError("n and n_groups must be >= 1")
    return csl.lam * (n * n * n_groups * csl.mass_ratio**2)


def fused_exponent(s_x, s_y, beta: float, g: float):
    """Combined CSL exponent, evaluated without cancellation."""
    s_x = np.asarray(s_x, dtype=float)
    s_y = np.asarray(s_y, dtype=float)
    den = np.sqrt(s_x + beta) + np.sqrt(s_y + beta)
    return -g * ((s_x - s_y) / den) ** 2


def naive_exponent_terms(s_x, s_y, beta: float, g: float):
    """The separate exponents whose sum is ``fused_exponent``.

    Returned as (-g (s_x + s_y), -2 g beta, 2 g sqrt((s_x+beta)(s_y+beta))).
    Only for diagnostics; summing them loses all significant digits.
    """
    s_x = np.asarray(s_x, dtype=float)
    s_y = np.asarray(s_y, dtype=float)
    return -g * (s_x + s_y), -2.0 * g * beta, 2.0 * g * np.sqrt((s_x + beta) * (s_y + beta))


def image_term_log_bound(s_x, s_y, beta: float, g: float):
    """log of |dropped image Gaussian| / |kept Gaussian|."""
    return -4.0 * g * np.sqrt((np.asarray(s_x) + beta) * (np.asarray(s_y) + beta))


def _prefactor(mat: MaterialParams, csl: CslParams) -> float:
    """lambda-free part of m^2 lambda r_c / (2 sqrt(pi) m0^2) * sqrt(2 m gap) / hbar."""
    m = csl.particle_mass
    return csl.mass_ratio**2 * csl.r_c / (2.0 * np.sqrt(np.pi)) * np.sqrt(2.0 * m * mat.gap_joule) / CODATA.hbar


def _fbar_values(f_bar, y: np.ndarray) -> np.ndarray:
    if f_bar is None:
        return np.ones_like(y)
    if isinstance(f_bar, OccupationFunction):
        return -np.expm1(f_bar.log_at(y))
    vals = np.asarray(f_bar(y), dtype=float)
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("f_bar must take values in [0, 1]")
    return vals


def csl_generation_rate(
    x,
    mat: MaterialParams,
    csl: CslParams,
    f_bar: OccupationFunction | Callable | None = None,
    y_max: float = 4.0,
    n_quad: int = 256,
):
    """CSL quasiparticle generation rate (1/s) at dimensionless energy x.

    ``f_bar`` is the Pauli blocking factor 1 - f(y).  An OccupationFunction
    is converted automatically; None means an empty band.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < 1):
        raise bcs.DomainError("generation rate needs x >= 1")
    sc = derived_scales(mat, csl)
    t, wt = np.polynomial.legendre.leggauss(n_quad)
    b = np.arccosh(y_max)
    v = 0.5 * b * (t + 1.0)
    y = np.cosh(v)
    wy = 0.5 * b * wt * np.cosh(v) * _fbar_values(f_bar, y)  # rho(y) dy folded in
    s_x = bcs.xi(x_arr)[:, None]
    s_y = np.sinh(v)[None, :]
    expo = fused_exponent(s_x, s_y, sc.beta, sc.gauss_width)
    if np.max(np.abs(expo)) > EXPONENT_LIMIT:
        raise CslOverflowError(
            f"fused CSL exponent reaches {np.min(expo):.3g}; r_c={csl.r_c} is outside the supported regime"
        )
    c = (1.0 - s_x * s_y) / (x_arr[:, None] * y[None, :])
    M2 = 0.5 * (1.0 + c)
    core = _prefactor(mat, csl) / np.sqrt(s_x[:, 0] + sc.beta) * ((M2 * np.exp(expo)) @ wy)
    rate = csl.lam * core
    if not np.all(np.isfinite(rate)):
        raise CslOverflowError("non-finite CSL generation rate")
    return rate if np.ndim(x) else float(rate[0])


def generation_matrix(grid: EnergyGrid, mat: MaterialParams, csl: CslParams) -> np.ndarray:
    """K with gamma_i = sum_j K[i, j] (1 - f_j), using the grid's own y quadrature."""
    sc = derived_scales(mat, csl)
    x = grid.nodes
    s = bcs.xi(x)
    expo = fused_exponent(s[:, None], s[None, :], sc.beta, sc.gauss_width)
    _, M2 = bcs.coherence_factors(x[:, None], x[None, :])
    pre = csl.lam * _prefactor(mat, csl) / np.sqrt(s + sc.beta)
    return pre[:, None] * M2 * np.exp(expo) * grid.rho_weights[None, :]


def _hash_payload(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def occupation_digest(f: OccupationFunction | None) -> str:
    if f is None:
        return "empty-band"
    return hashlib.sha256(np.ascontiguousarray(f.log_f).tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CslGenerationCurve:
    grid: EnergyGrid
    gamma: np.ndarray  # 1/s per node
    params_hash: str
    blocking: str = "empty-band"

    def __post_init__(self) -> None:
        if self.gamma.shape != self.grid.nodes.shape:
            raise ValueError("rate curve does not match grid")
        if not np.all(np.isfinite(self.gamma)) or np.any(self.gamma < 0):
            raise ValueError("generation rates must be finite and non-negative")

    def scaled(self, factor: float) -> "CslGenerationCurve":
        return CslGenerationCurve(self.grid, self.gamma * factor, f"{self.params_hash}*{factor!r}", self.blocking)

    def rows(self):
        return [("x", "gamma")] + [(float(a), float(b)) for a, b in zip(self.grid.nodes, self.gamma)]


def generation_curve(
    grid: EnergyGrid,
    mat: MaterialParams,
    csl: CslParams,
    f_bar: OccupationFunction | None = None,
    y_max: float | None = None,
) -> CslGenerationCurve:
    """Generation rate at every grid node; y window defaults to the grid top."""
    y_max = grid.x_max if y_max is None else y_max
    gamma = csl_generation_rate(grid.nodes, mat, csl, f_bar=f_bar, y_max=y_max)
    h = _hash_payload({
        "material": mat.as_dict(),
        "csl": csl.as_dict(),
        "grid": grid.as_dict(),
        "y_max": y_max,
        "f_bar": occupation_digest(f_bar),
    })
    return CslGenerationCurve(grid, gamma, h, occupation_digest(f_bar))


def zero_curve(grid: EnergyGrid) -> CslGenerationCurve:
    return CslGenerationCurve(grid, np.zeros(grid.n_nodes), "zero")


def total_generation_rate(mat: MaterialParams, csl: CslParams) -> float:
    """Volume generation rate 1/(s um^3) in the delta-function limit of the Gaussians."""
    m = csl.particle_mass
    eF = mat.fermi_energy * CODATA.electron_charge
    per_m3 = (
        csl.lam * csl.mass_ratio**2 / (8.0 * np.pi)
        * (np.sqrt(2.0 * m) / CODATA.hbar) ** 3 * np.sqrt(eF) * mat.gap_joule
    )
    return per_m3 * UM3_PER_M3


def power_density(mat: MaterialParams, csl: CslParams) -> float:
    """Power absorbed per unit volume, W/um^3."""
    return total_generation_rate(mat, csl) * mat.gap_joule


def momentum_space_rate(
    x: float,
    mat: MaterialParams,
    csl: CslParams,
    y_max: float = 4.0,
    n_radial: int = 400,
    n_angle: int = 48,
) -> float:
    """Generation rate from the three-dimensional momentum integral.

    Reference implementation: integrates the Gaussian noise correlator
    exp(-r_c^2 |p - q|^2) over the momentum p of the partner state directly,
    radius and polar angle both numerically, with no expansion of the square
    roots and with the image Gaussian kept.  Only states above k_F with
    energy below y_max * gap contribute, and the band is empty.
    """
    hbar, m = CODATA.hbar, csl.particle_mass
    gap = mat.gap_joule
    eF = mat.fermi_energy * CODATA.electron_charge
    kF = np.sqrt(2 * m * eF) / hbar
    k_gap = 2 * m * gap / hbar**2  # d(p^2) per unit s

    def wavevector_offset(s):
        # p - kF for xi = gap * s, without cancellation
        return k_gap * s / (np.sqrt(kF**2 + k_gap * s) + kF)

    s_x = float(bcs.xi(x))
    q = kF + wavevector_offset(s_x)
    dq = wavevector_offset(s_x)

    t_r, w_r = np.polynomial.legendre.leggauss(n_radial)
    s_top = np.sqrt(y_max**2 - 1)
    s = 0.5 * s_top * (t_r + 1)
    ws = 0.5 * s_top * w_r
    p = kF + wavevector_offset(s)
    dp_ds = 0.5 * k_gap / p  # d p / d s
    y = np.sqrt(1 + s * s)
    c = (1 - s_x * s) / (x * y)
    M2 = 0.5 * (1 + c)

    # |p - q|^2 = (p - q)^2 + 2 p q t with t = 1 - cos(theta) in [0, 2]
    rc2 = csl.r_c**2
    radial = np.exp(-rc2 * (wavevector_offset(s) - dq) ** 2)
    a = 2 * rc2 * p * q  # decay rate in t
    t_a, w_a = np.polynomial.legendre.leggauss(n_angle)
    edges = np.array([0.0, 0.5, 2.0, 6.0, 15.0, 40.0])
    # panels in z = a t, capped at t = 2; beyond z = 40 the correlator is below e^-40
    panels = np.minimum(edges[None, :], 2.0 * a[:, None])
    lo, hi = panels[:, :-1, None], panels[:, 1:, None]
    z = 0.5 * (hi - lo) * (t_a + 1) + lo
    angular = (0.5 * (hi - lo) * w_a * np.exp(-z)).sum(axis=(1, 2)) / a
    integrand = 2 * np.pi * p**2 * dp_ds * radial * angular * M2
    pref = (4 * np.pi * rc2) ** 1.5 * csl.mass_ratio**2 / (2 * np.pi) ** 3
    return float(csl.lam * pref * np.dot(ws, integrand))
