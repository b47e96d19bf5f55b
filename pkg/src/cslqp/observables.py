"""Quantities derived from an occupation function, and NISQ gate budgets."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from . import bcs
from .grid import OccupationFunction
from .materials import CODATA, MaterialParams

SPIN_DEGENERACY = 2
DEFAULT_SAFETY = 1e-3
EXPERIMENTAL_SUBGAP_CURRENT = 1e-12  # A
REPORTED_GAMMA1 = 1e-6  # 1/s


@dataclass(frozen=True)
class QubitParams:
    omega_q: float  # rad/s
    t_gate: float  # s
    label: str = "transmon"

    def __post_init__(self) -> None:
        if not (self.omega_q > 0 and self.t_gate > 0):
            raise ValueError("omega_q and t_gate must be positive")


DEFAULT_QUBIT = QubitParams(omega_q=2 * math.pi * 3.48e9, t_gate=1e-7)


@dataclass(frozen=True)
class Workload:
    name: str
    n_qubits: int
    n_gates: int
    source: str = ""

    def __post_init__(self) -> None:
        if self.n_qubits < 1 or self.n_gates < 1:
            raise ValueError("workload counts must be positive")


WORKLOADS = {
    "shor": Workload("shor", n_qubits=10**3, n_gates=10**9, source="factoring resource estimate"),
    "molecular-simulation": Workload(
        "molecular-simulation", n_qubits=10**2, n_gates=10**14, source="quantum chemistry resource estimate"
    ),
}


@dataclass(frozen=True)
class JunctionParams:
    i_c: float  # A
    label: str = "junction"

    def __post_init__(self) -> None:
        if not self.i_c > 0:
            raise ValueError("critical current must be positive")


@dataclass(frozen=True)
class DensityResult:
    x_qp: float
    tail_bound: float  # upper bound on quasiparticles above the window


def xqp_from_occupation(f: OccupationFunction, T_tail: float | None = None, mat: MaterialParams | None = None) -> DensityResult:
    """Quasiparticles per Cooper pair, 2 * integral of f rho dx over the grid window.

    The tail bound assumes f decays at least like exp(-(x - x_max) gap / k_B T_tail)
    above the window; T_tail defaults to the phonon temperature in ``f.meta``.
    """
    g = f.grid
    x_qp = SPIN_DEGENERACY * g.integrate_rho(f.f)
    T_tail = T_tail if T_tail is not None else f.meta.get("T_ph")
    tail = float("nan")
    if T_tail and mat is not None:
        t = bcs.thermal_energy(T_tail) / mat.gap0
        tail = SPIN_DEGENERACY * float(f.f[-1]) * bcs.dos(g.x_max) * t
    return DensityResult(float(x_qp), tail)


@dataclass(frozen=True)
class Relaxation:
    gamma1: float  # 1/s
    t1: float  # s, inf when gamma1 == 0
    note: str = ""


def qubit_relaxation(x_qp: float, mat: MaterialParams, qubit: QubitParams) -> Relaxation:
    """Quasiparticle-limited transmon decay, linear in x_qp."""
    if x_qp < 0:
        raise ValueError("x_qp must be non-negative")
    rate_scale = math.sqrt(2 * qubit.omega_q * mat.gap_joule / (math.pi**2 * CODATA.hbar))
    gamma1 = rate_scale * x_qp
    t1 = math.inf if gamma1 == 0 else 1.0 / gamma1
    note = (
        f"direct evaluation gives {gamma1:.3g} 1/s, "
        f"{math.log10(REPORTED_GAMMA1 / gamma1):.2f} decades below the quoted {REPORTED_GAMMA1:g} 1/s"
        if gamma1 > 0 else ""
    )
    return Relaxation(gamma1, t1, note)


def subgap_current(
    f: OccupationFunction,
    V: float,
    junction: JunctionParams,
    mat: MaterialParams,
    simplified_normalization: bool = False,
    n_quad: int = 400,
) -> float:
    """Quasiparticle tunnelling current (A) at bias V (volts), 0 < eV < 2 gap.

    I = (2/pi) I_c * integral rho(x) rho(x + v) (f(x) - f(x + v)) dx with
    v = eV/gap, from R_N = pi gap / (2 e I_c).  The simplified normalization
    R_N = gap / (e I_c) drops the 2/pi.  f is zero above the grid window.
    """
    v = V / mat.gap0  # eV / gap with V in volts and gap in eV
    if not 0 < v < 2:
        raise ValueError("bias must satisfy 0 < eV < 2 gap")
    norm = 1.0 if simplified_normalization else 2.0 / math.pi
    # x = cosh(u) absorbs rho(x); rho(x + v) is regular since x + v > 1
    x, w = bcs.gauss_legendre_u(f.grid.x_max, n_quad)
    return norm * junction.i_c * float(np.sum(w * subgap_integrand(f, v, x)))


def subgap_integrand(f: OccupationFunction, v: float, x, swap: bool = False):
    """rho(x + v) (f(x) - f(x + v)); ``swap`` exchanges the two occupation arguments."""
    a, b = f.at(x), f.at(np.asarray(x) + v)
    return bcs.dos(np.asarray(x) + v) * ((b - a) if swap else (a - b))


def subgap_sweep(f: OccupationFunction, junction: JunctionParams, mat: MaterialParams, n: int = 10, **kw):
    """Current over n biases on (0.1, 1.9) gap/e; returns (V, I)."""
    V = np.linspace(0.1, 1.9, n) * mat.gap0
    return V, np.array([subgap_current(f, Vi, junction, mat, **kw) for Vi in V])


@dataclass(frozen=True)
class GateBudget:
    n_qubits: int
    t_tot: float  # s
    t_op: float  # s
    n_g_max: int


def _exact(v) -> Fraction:
    # decimal reading of the float so that 1e-7 means 1/10^7
    return v if isinstance(v, Fraction) else Fraction(str(v)) if isinstance(v, float) else Fraction(v)


def gate_budget(T1, N: int, t_gate, safety=DEFAULT_SAFETY) -> GateBudget:
    """T_tot = T1 / N, T_op = safety * T_tot, n_g = floor(T_op / t_gate), exactly."""
    T1f, tg, sf = _exact(T1), _exact(t_gate), _exact(safety)
    if T1f <= 0 or tg <= 0 or sf <= 0 or N < 1:
        raise ValueError("gate budget inputs must be positive")
    t_tot = T1f / N
    t_op = sf * t_tot
    return GateBudget(N, float(t_tot), float(t_op), math.floor(t_op / tg))


@dataclass(frozen=True)
class Verdict:
    workload: str
    feasible: bool
    margin: float  # log10(n_g_max / n_gates)
    n_g_max: int
    n_gates: int


def feasibility(workload: Workload, T1, t_gate, safety=DEFAULT_SAFETY) -> Verdict:
    b = gate_budget(T1, workload.n_qubits, t_gate, safety)
    margin = math.log10(b.n_g_max / workload.n_gates) if b.n_g_max > 0 else -math.inf
    return Verdict(workload.name, workload.n_gates <= b.n_g_max, margin, b.n_g_max, workload.n_gates)


def budget_frontier(T1, t_gate, safety=DEFAULT_SAFETY, n_values=None):
    """(N, n_g_max) pairs; default N = 10 ... 10^6 in decades."""
    n_values = n_values or [10**k for k in range(1, 7)]
    return [(N, gate_budget(T1, N, t_gate, safety).n_g_max) for N in n_values]


def verdict_dict(v: Verdict) -> dict:
    return asdict(v)
