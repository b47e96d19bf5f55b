"""Quasiparticle kinetic equation on the cosh-uniform energy grid.

df(x)/dt = gamma(x)
    + gamma_0 * sum_y S(x, y) [fbar(x) f(y) A(x, y) - f(x) fbar(y) B(x, y)]
    + gamma_0 * sum_y G(x, y) [fbar(x) fbar(y) N(x + y) - f(x) f(y) (N(x + y) + 1)]

with S = (x - y)^2 rho L^2 and G = (x + y)^2 rho M^2.  For y > x a phonon is
emitted when the partner drops to x (A = N + 1, B = N); for y < x it is
absorbed (A = N, B = N + 1).  Phonons stay at the bath temperature.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import bcs
from .csl_rates import CslGenerationCurve
from .grid import EnergyGrid, OccupationFunction
from .materials import MaterialParams

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 1e-4
    x_max: float = 4.0
    n_nodes: int = 200
    dt_initial: float = 1e-3  # units of 1/gamma_0
    convergence_tol: float = 1e-14  # on |df/dtau| / max(f, floor)
    max_steps: int = 2000
    floor: float = 1e-40
    dt_growth: float = 2.0
    newton_tol: float = 1e-10
    newton_iter: int = 30

    def __post_init__(self) -> None:
        for name in ("eps", "dt_initial", "convergence_tol", "floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.convergence_tol < 1:
            raise ValueError("convergence_tol must be < 1")
        if self.n_nodes < 4 or self.max_steps < 1:
            raise ValueError("n_nodes >= 4 and max_steps >= 1 required")
        if not self.x_max > 1 + self.eps:
            raise ValueError("x_max must exceed 1 + eps")

    def grid(self) -> EnergyGrid:
        return EnergyGrid.cosh_uniform(self.eps, self.x_max, self.n_nodes)


def _log_np1(z):
    # log(N(z) + 1) for z > 0
    return -np.log(-np.expm1(-z))


@dataclass
class RhsBreakdown:
    """Per-node terms of the kinetic equation (1/s); their sum is ``total``."""

    injection: np.ndarray
    scatter_in: np.ndarray
    scatter_out: np.ndarray
    pair_generation: np.ndarray
    recombination: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return (self.injection + self.scatter_in - self.scatter_out
                + self.pair_generation - self.recombination)

    def largest_term(self) -> float:
        return float(max(np.max(np.abs(v)) for v in (
            self.injection, self.scatter_in, self.scatter_out, self.pair_generation, self.recombination)))


class KineticOperator:
    """Discretised collision operator for one grid, material and bath temperature."""

    def __init__(
        self,
        grid: EnergyGrid,
        mat: MaterialParams,
        T_ph: float,
        gamma: CslGenerationCurve | None = None,
        csl_kernel: np.ndarray | None = None,
    ):
        self.grid, self.mat, self.T_ph = grid, mat, T_ph
        if gamma is not None:
            grid.check_same(gamma.grid)
        self.gamma = np.zeros(grid.n_nodes) if gamma is None else gamma.gamma.copy()
        # live Pauli blocking of the drive: gamma_i -> gamma_i - sum_j K_ij f_j
        self.csl_kernel = csl_kernel
        self.gamma0 = mat.gamma0
        x = grid.nodes
        X, Y = x[:, None], x[None, :]
        L2, M2 = bcs.coherence_factors(X, Y)
        W = grid.rho_weights[None, :]
        self.KS = (X - Y) ** 2 * L2 * W
        self.KG = (X + Y) ** 2 * M2 * W
        t = bcs.thermal_energy(T_ph) / mat.gap0
        with np.errstate(divide="ignore"):
            z = np.abs(X - Y) / t
            lnp1 = np.where(z > 0, _log_np1(np.where(z > 0, z, 1.0)), np.inf)
            ln = lnp1 - z
            up, down = Y > X, Y < X
            self.log_A = np.where(up, lnp1, np.where(down, ln, -np.inf))
            self.log_B = np.where(up, ln, np.where(down, lnp1, -np.inf))
            zp = (X + Y) / t
            self.log_Np1 = _log_np1(zp)
            self.log_N = self.log_Np1 - zp
            self.log_KS = np.log(self.KS)
            self.log_KG = np.log(self.KG)
        self._KA = self.KS * np.exp(self.log_A)
        self._KB = self.KS * np.exp(self.log_B)
        self._KN = self.KG * np.exp(self.log_N)
        self._KN1 = self.KG * np.exp(self.log_Np1)

    def injection(self, f: np.ndarray) -> np.ndarray:
        if self.csl_kernel is None:
            return self.gamma
        return self.gamma - self.csl_kernel @ f

    def rhs(self, f: np.ndarray) -> np.ndarray:
        fb = 1.0 - f
        scat = fb * (self._KA @ f) - f * (self._KB @ fb)
        pair = fb * (self._KN @ fb) - f * (self._KN1 @ f)
        return self.injection(f) + self.gamma0 * (scat + pair)

    def jacobian(self, f: np.ndarray) -> np.ndarray:
        fb = 1.0 - f
        KA, KB, KN, KN1 = self._KA, self._KB, self._KN, self._KN1
        J = fb[:, None] * KA + f[:, None] * KB - fb[:, None] * KN - f[:, None] * KN1
        J[np.diag_indices_from(J)] += -(KA @ f) - (KB @ fb) - (KN @ fb) - (KN1 @ f)
        J *= self.gamma0
        if self.csl_kernel is not None:
            J -= self.csl_kernel
        return J

    def breakdown(self, log_f: np.ndarray) -> RhsBreakdown:
        """All terms evaluated from log f with log-sum-exp contractions."""
        log_fb = np.log(-np.expm1(log_f))
        g0 = self.gamma0

        def contract(log_k, log_v):
            with np.errstate(divide="ignore"):
                return np.exp(logsumexp(log_k + log_v[None, :], axis=1))

        f = np.exp(log_f)
        return RhsBreakdown(
            injection=self.injection(f),
            scatter_in=g0 * np.exp(log_fb) * contract(self.log_KS + self.log_A, log_f),
            scatter_out=g0 * f * contract(self.log_KS + self.log_B, log_fb),
            pair_generation=g0 * np.exp(log_fb) * contract(self.log_KG + self.log_N, log_fb),
            recombination=g0 * f * contract(self.log_KG + self.log_Np1, log_f),
        )


def kinetic_rhs(
    f: OccupationFunction,
    T_ph: float,
    gamma_ext: CslGenerationCurve | None,
    mat: MaterialParams,
) -> RhsBreakdown:
    """Right-hand side of the kinetic equation, term by term (1/s per node)."""
    op = KineticOperator(f.grid, mat, T_ph, gamma_ext)
    out = op.breakdown(f.log_f)
    for name in ("injection", "scatter_in", "scatter_out", "pair_generation", "recombination"):
        if np.any(np.isnan(getattr(out, name))):
            raise FloatingPointError(f"nan in {name} term")
    return out


@dataclass
class ConvergenceReport:
    converged: bool
    steps: int
    evolved_time: float  # s
    residual: float  # max |df/dtau| / max(f, floor)
    rejected_steps: int
    history: list[tuple[float, float, float]] = field(default_factory=list)  # (t, dt, residual)

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "steps": self.steps,
            "evolved_time_s": self.evolved_time,
            "residual": self.residual,
            "rejected_steps": self.rejected_steps,
        }


def _residual(op: KineticOperator, f: np.ndarray, floor: float) -> float:
    return float(np.max(np.abs(op.rhs(f)) / op.gamma0 / np.maximum(f, floor)))


def evolve_to_steady_state(
    f0: OccupationFunction,
    T_ph: float,
    gamma_ext: CslGenerationCurve | None,
    cfg: SolverConfig,
    mat: MaterialParams,
    csl_kernel: np.ndarray | None = None,
) -> tuple[OccupationFunction, ConvergenceReport]:
    """March f in time until the relative rate of change drops below tolerance.

    Backward Euler with Newton iterations on the exact Jacobian; the step
    grows geometrically after each accepted step and is halved whenever an
    iterate goes negative or Newton fails to converge.
    """
    op = KineticOperator(f0.grid, mat, T_ph, gamma_ext, csl_kernel)
    g0 = op.gamma0
    f = f0.f.copy()
    I = np.eye(f.size)
    dt = cfg.dt_initial / g0
    t = 0.0
    rejected = 0
    history: list[tuple[float, float, float]] = []
    res = _residual(op, f, cfg.floor)
    steps = 0
    while steps < cfg.max_steps:
        fn = f.copy()
        ok = False
        for _ in range(cfg.newton_iter):
            R = fn - f - dt * op.rhs(fn)
            d = np.linalg.solve(I - dt * op.jacobian(fn), -R)
            fn = fn + d
            if not np.all(np.isfinite(fn)):
                break
            if np.max(np.abs(d) / np.maximum(np.abs(fn), cfg.floor)) < cfg.newton_tol:
                ok = True
                break
        if not ok or np.any(fn < 0) or np.any(fn >= 1):
            rejected += 1
            dt /= 2
            if dt * g0 < 1e-30:
                raise SolverError("time step underflow while keeping f non-negative")
            continue
        f = fn
        t += dt
        steps += 1
        res = _residual(op, f, cfg.floor)
        history.append((t, dt, res))
        if res < cfg.convergence_tol:
            break
        dt *= cfg.dt_growth
    converged = res < cfg.convergence_tol
    if not converged:
        log.warning("kinetic solver stopped after %d steps, residual %.3g", steps, res)
    with np.errstate(divide="ignore"):
        log_f = np.log(f)
    out = OccupationFunction(
        f0.grid,
        log_f,
        meta={"T_init": f0.meta.get("T_init"), "T_ph": T_ph, "evolved_time": t},
        flags=f0.flags.copy(),
    )
    return out, ConvergenceReport(converged, steps, t, res, rejected, history)


def scattering_out_integral(x, n_quad: int = 96):
    """D(x) = integral over y in [1, x] of (x - y)^2 rho(y) L^2(x, y)."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x_arr)
    for i, xi in enumerate(x_arr):
        if xi <= 1:
            out[i] = 0.0
            continue
        y, w = bcs.gauss_legendre_u(xi, n_quad)
        L2, _ = bcs.coherence_factors(xi, y)
        out[i] = np.sum(w * (xi - y) ** 2 * L2)
    return out if np.ndim(x) else float(out[0])


@dataclass
class AnalyticDiagnostics:
    delta_f: np.ndarray
    scattering_out: np.ndarray  # D(x)
    dropped_scatter_in: np.ndarray  # neglected term relative to the drive
    dropped_recombination: np.ndarray

    def summary(self) -> dict:
        off = slice(1, None)
        return {
            "max_dropped_scatter_in_over_drive": float(np.max(self.dropped_scatter_in[off])),
            "max_dropped_recombination_over_drive": float(np.max(self.dropped_recombination[off])),
        }


def analytic_steady_state(
    T: float,
    gamma_ext: CslGenerationCurve,
    grid: EnergyGrid,
    mat: MaterialParams,
) -> tuple[OccupationFunction, AnalyticDiagnostics]:
    """f_SS = f_FD(T) + gamma / (gamma_0 D(x)), drive balanced by downward scattering.

    The first node sits next to the gap edge where D vanishes like (x-1)^3.5;
    it is flagged.  The diagnostics hold the terms this balance neglects.
    """
    grid.check_same(gamma_ext.grid)
    if not 0.005 <= T <= 0.1:
        raise ValueError("analytic steady state is meant for 5-100 mK")
    x = grid.nodes
    D = scattering_out_integral(x)
    delta_f = gamma_ext.gamma / (mat.gamma0 * D)
    log_fd = bcs.log_fermi_dirac(x * mat.gap0, T)
    f = np.exp(log_fd) + delta_f
    flags = np.zeros(grid.n_nodes, dtype=bool)
    flags[0] = True
    bad = f >= 0.5
    if np.any(bad[1:]):
        raise ValueError("drive too strong for the dilute steady-state approximation")
    f = np.where(bad, 0.5, f)
    occ = OccupationFunction(grid, np.log(f), meta={"T_init": T, "T_ph": T, "evolved_time": "analytic"}, flags=flags)
    parts = KineticOperator(grid, mat, T, gamma_ext).breakdown(occ.log_f)
    g = np.maximum(gamma_ext.gamma, np.finfo(float).tiny)
    diag = AnalyticDiagnostics(delta_f, D, parts.scatter_in / g, parts.recombination / g)
    return occ, diag


@dataclass
class ValidationMetrics:
    log_ratio: np.ndarray  # log10(f_num / f_ss) per node, nan where excluded
    median_abs: float
    max_abs: float
    n_compared: int

    def as_dict(self) -> dict:
        return {"median_abs_log10_ratio": self.median_abs, "max_abs_log10_ratio": self.max_abs,
                "n_compared": self.n_compared}


def validate(f_num: OccupationFunction, f_ss: OccupationFunction) -> ValidationMetrics:
    """|log10(f_num / f_ss)| statistics excluding flagged gap-edge nodes."""
    f_num.grid.check_same(f_ss.grid)
    keep = ~(f_num.flags | f_ss.flags)
    a, b = f_num.log_f[keep], f_ss.log_f[keep]
    if np.any(np.isinf(a)) or np.any(np.isinf(b)):
        raise ValueError("zero occupation outside the flagged gap-edge region")
    r = (a - b) / np.log(10.0)
    full = np.full(f_num.grid.n_nodes, np.nan)
    full[keep] = r
    return ValidationMetrics(full, float(np.median(np.abs(r))), float(np.max(np.abs(r))), int(keep.sum()))
