"""Energy grid with cosh-uniform spacing and occupation functions on it."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import bcs
from .materials import MaterialParams


class GridMismatchError(ValueError):
    pass


def _simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on n equispaced nodes (3/8 rule closes an odd panel)."""
    if n < 2:
        raise ValueError("need at least two nodes")
    if n == 2:
        return np.array([0.5, 0.5]) * h
    if n == 3:
        return np.array([1, 4, 1]) * h / 3
    w = np.zeros(n)
    m = n - 1
    m_simp = m if m % 2 == 0 else m - 3
    if m_simp > 0:
        w[: m_simp + 1 : 2] += 2.0
        w[1:m_simp:2] += 4.0
        w[0] -= 1.0
        w[m_simp] -= 1.0
        w *= h / 3
    if m_simp != m:
        w[m_simp : m_simp + 4] += np.array([1, 3, 3, 1]) * 3 * h / 8
    return w


@dataclass(frozen=True, eq=False)
class EnergyGrid:
    """Nodes x = cosh(u) with u uniform on [acosh(1 + eps), acosh(x_max)].

    ``rho_weights`` integrate g(x) rho(x) dx over [1, x_max]; the strip
    [1, 1 + eps] is lumped into the first node, holding g constant there.
    ``weights`` are the plain dx weights, rho_weights / rho(x).
    """

    eps: float
    x_max: float
    n_nodes: int
    u: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    rho_weights: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    substitution: str = "cosh-uniform"

    @classmethod
    def cosh_uniform(cls, eps: float = 1e-4, x_max: float = 4.0, n_nodes: int = 200) -> "EnergyGrid":
        if not eps > 0:
            raise ValueError("eps must be positive")
        if not x_max > 1 + eps:
            raise ValueError("x_max must exceed 1 + eps")
        if n_nodes < 4:
            raise ValueError("need at least 4 nodes")
        u = np.linspace(np.arccosh(1.0 + eps), np.arccosh(x_max), n_nodes)
        x = np.cosh(u)
        x[0] = 1.0 + eps
        W = _simpson_weights(n_nodes, u[1] - u[0]) * np.cosh(u)
        W[0] += np.sinh(u[0])
        return cls(eps, x_max, n_nodes, u, x, W, W / bcs.dos(x))

    def same_as(self, other: "EnergyGrid") -> bool:
        return self is other or (
            self.n_nodes == other.n_nodes
            and self.eps == other.eps
            and self.x_max == other.x_max
            and np.array_equal(self.nodes, other.nodes)
        )

    def check_same(self, other: "EnergyGrid") -> None:
        if not self.same_as(other):
            raise GridMismatchError("occupation and rate curves live on different grids")

    def integrate_rho(self, values) -> float:
        """Sum of values * rho over the window, i.e. the integral of g rho dx."""
        return float(np.dot(self.rho_weights, values))

    def as_dict(self) -> dict:
        return {"eps": self.eps, "x_max": self.x_max, "n_nodes": self.n_nodes,
                "substitution": self.substitution}


@dataclass(eq=False)
class OccupationFunction:
    """Quasiparticle occupation on a grid; ``log_f`` is authoritative."""

    grid: EnergyGrid
    log_f: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)
    flags: np.ndarray | None = None  # True marks an unreliable gap-edge node

    def __post_init__(self) -> None:
        self.log_f = np.asarray(self.log_f, dtype=float)
        if self.log_f.shape != self.grid.nodes.shape:
            raise GridMismatchError("occupation length does not match grid")
        if np.any(np.isnan(self.log_f)) or np.any(self.log_f >= 0):
            raise ValueError("occupation must satisfy 0 <= f < 1")
        if self.flags is None:
            self.flags = np.zeros(self.grid.n_nodes, dtype=bool)

    @classmethod
    def from_values(cls, grid: EnergyGrid, f, **kw) -> "OccupationFunction":
        f = np.asarray(f, dtype=float)
        if np.any(f < 0) or np.any(f >= 1):
            raise ValueError("occupation must satisfy 0 <= f < 1")
        with np.errstate(divide="ignore"):
            return cls(grid, np.log(f), **kw)

    @classmethod
    def thermal(cls, grid: EnergyGrid, mat: MaterialParams, T: float) -> "OccupationFunction":
        log_f = bcs.log_fermi_dirac(grid.nodes * mat.gap0, T)
        return cls(grid, log_f, meta={"T_init": T, "T_ph": T, "evolved_time": 0.0})

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)

    def log_at(self, x) -> np.ndarray:
        """log f at arbitrary x, linear in u between nodes.

        Constant on [1, 1 + eps] and -inf (empty states) above x_max.
        """
        x = np.asarray(x, dtype=float)
        u = np.arccosh(np.clip(x, 1.0, None))
        g = self.grid
        lf = self.log_f
        finite = np.isfinite(lf)
        if not finite.all():
            lf = np.where(finite, lf, -1e300)
        out = np.interp(u, g.u, lf, left=lf[0], right=-np.inf)
        out = np.where(x > g.x_max * (1 + 1e-12), -np.inf, out)
        return np.where(out < -1e299, -np.inf, out)

    def at(self, x) -> np.ndarray:
        return np.exp(self.log_at(x))

    def with_meta(self, **kw) -> "OccupationFunction":
        meta = dict(self.meta)
        meta.update(kw)
        return OccupationFunction(self.grid, self.log_f.copy(), meta, self.flags.copy())
