"""Physical constants, material / CSL parameter records and derived scales.

Unit conventions used throughout the package: energies in eV, temperatures in
K, rates in 1/s, lengths in m.  Conversions to SI happen only where a formula
mixes energies with hbar or masses.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import scipy.constants as sc


class MaterialError(ValueError):
    """Unknown material or a record that violates its invariants."""


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float  # J s
    k_B: float  # J/K
    electron_mass: float  # kg
    nucleon_mass: float  # kg, proton mass
    electron_charge: float  # C

    @property
    def k_B_eV(self) -> float:
        return self.k_B / self.electron_charge

    def as_dict(self) -> dict[str, float]:
        return {
            "hbar": self.hbar,
            "k_B": self.k_B,
            "electron_mass": self.electron_mass,
            "nucleon_mass": self.nucleon_mass,
            "electron_charge": self.electron_charge,
        }


CODATA = PhysicalConstants(
    hbar=sc.hbar,
    k_B=sc.k,
    electron_mass=sc.m_e,
    nucleon_mass=sc.m_p,
    electron_charge=sc.e,
)

# Ratio between the gap at T=0 and k_B T_c in weak-coupling BCS.
BCS_GAP_RATIO = 1.76


def ev_to_joule(energy_ev: float, constants: PhysicalConstants = CODATA) -> float:
    return energy_ev * constants.electron_charge


def joule_to_ev(energy_j: float, constants: PhysicalConstants = CODATA) -> float:
    return energy_j / constants.electron_charge


@dataclass(frozen=True)
class MaterialParams:
    name: str
    gap0: float  # eV
    fermi_energy: float  # eV
    tau0: float  # s, characteristic electron-phonon time
    critical_temperature: float | None = None  # K

    def __post_init__(self) -> None:
        if not self.gap0 > 0:
            raise MaterialError(f"{self.name}: gap0 must be positive, got {self.gap0}")
        if not self.tau0 > 0:
            raise MaterialError(f"{self.name}: tau0 must be positive, got {self.tau0}")
        if not self.fermi_energy / self.gap0 > 1e3:
            raise MaterialError(
                f"{self.name}: fermi_energy/gap0 = {self.fermi_energy / self.gap0:.3g}, "
                "need > 1e3"
            )
        tc_from_gap = self.gap0 / (BCS_GAP_RATIO * CODATA.k_B_eV)
        if self.critical_temperature is None:
            object.__setattr__(self, "critical_temperature", tc_from_gap)
        elif abs(self.critical_temperature / tc_from_gap - 1.0) > 0.01:
            raise MaterialError(
                f"{self.name}: gap0 = 1.76 k_B T_c violated by more than 1% "
                f"(T_c={self.critical_temperature} K, gap implies {tc_from_gap:.4g} K)"
            )

    @property
    def gamma0(self) -> float:
        """Characteristic electron-phonon rate 1/tau0 (1/s)."""
        return 1.0 / self.tau0

    @property
    def gap_joule(self) -> float:
        return ev_to_joule(self.gap0)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "gap0": self.gap0,
            "fermi_energy": self.fermi_energy,
            "tau0": self.tau0,
            "critical_temperature": self.critical_temperature,
        }


ELECTRON_MASS_RATIO = CODATA.electron_mass / CODATA.nucleon_mass


@dataclass(frozen=True)
class CslParams:
    lam: float = 1e-10  # 1/s
    r_c: float = 1e-7  # m
    mass_ratio: float = field(default=ELECTRON_MASS_RATIO)

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise MaterialError(f"CSL lambda must be >= 0, got {self.lam}")
        if not self.r_c > 0:
            raise MaterialError(f"CSL r_c must be positive, got {self.r_c}")
        if not 0 < self.mass_ratio < 1:
            raise MaterialError(f"mass_ratio must lie in (0, 1), got {self.mass_ratio}")

    @property
    def particle_mass(self) -> float:
        """Mass (kg) of the particle the noise couples to."""
        return self.mass_ratio * CODATA.nucleon_mass

    def scaled(self, factor: float) -> "CslParams":
        return replace(self, lam=self.lam * factor)

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "r_c": self.r_c, "mass_ratio": self.mass_ratio}


MATERIALS: Mapping[str, MaterialParams] = {
    "aluminum": MaterialParams("aluminum", gap0=3.4e-4, fermi_energy=11.6, tau0=438e-9),
    # 0.34 meV read as the pair-breaking energy 2*gap.
    "aluminum-170uev": MaterialParams(
        "aluminum-170uev", gap0=1.7e-4, fermi_energy=11.6, tau0=438e-9
    ),
}

CSL_PRESETS: Mapping[str, CslParams] = {
    "paper-baseline": CslParams(lam=1e-10, r_c=1e-7),
}


def load_material(source: str | MaterialParams | Mapping) -> MaterialParams:
    """Return a validated material record from a preset name or explicit fields."""
    if isinstance(source, MaterialParams):
        return source
    if isinstance(source, str):
        try:
            return MATERIALS[source]
        except KeyError:
            known = ", ".join(sorted(MATERIALS))
            raise MaterialError(f"unknown material {source!r} (known: {known})") from None
    fields = dict(source)
    missing = {"name", "gap0", "fermi_energy", "tau0"} - fields.keys()
    if missing:
        raise MaterialError(f"material record missing fields: {sorted(missing)}")
    return MaterialParams(**fields)


def load_csl(source: str | CslParams | Mapping = "paper-baseline") -> CslParams:
    if isinstance(source, CslParams):
        return source
    if isinstance(source, str):
        try:
            return CSL_PRESETS[source]
        except KeyError:
            raise MaterialError(f"unknown CSL preset {source!r}") from None
    fields = dict(source)
    if "lambda" in fields:
        fields["lam"] = fields.pop("lambda")
    return CslParams(**fields)


@dataclass(frozen=True)
class ScaleSet:
    beta: float  # fermi_energy / gap
    t_csl: float  # K, k_B T_CSL = hbar^2 / (2 m r_c^2)
    gap_over_tcsl: float
    fermi_over_tcsl: float
    gauss_width: float  # 2 m gap r_c^2 / hbar^2

    def as_dict(self) -> dict[str, float]:
        return {
            "beta": self.beta,
            "t_csl": self.t_csl,
            "gap_over_tcsl": self.gap_over_tcsl,
            "fermi_over_tcsl": self.fermi_over_tcsl,
            "gauss_width": self.gauss_width,
        }


def derived_scales(mat: MaterialParams, csl: CslParams) -> ScaleSet:
    m = csl.particle_mass
    kT_csl = CODATA.hbar**2 / (2.0 * m * csl.r_c**2)  # J
    gap_over_tcsl = mat.gap_joule / kT_csl
    return ScaleSet(
        beta=mat.fermi_energy / mat.gap0,
        t_csl=kT_csl / CODATA.k_B,
        gap_over_tcsl=gap_over_tcsl,
        fermi_over_tcsl=ev_to_joule(mat.fermi_energy) / kT_csl,
        # 2 m gap r_c^2 / hbar^2 is the same quantity
        gauss_width=gap_over_tcsl,
    )
