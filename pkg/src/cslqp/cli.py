"""Command-line driver: cslqp {rates,steady-state,crossover,budget,sweep}.

Each run writes ``<out>/<scenario-hash>/<analysis>.json`` plus one CSV per
curve.  Exit codes: 0 ok, 2 config error, 3 solver non-convergence,
4 crossover bracketing failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from . import __version__, csl_rates, kinetic, observables, phonon_kernels
from .grid import OccupationFunction
from .materials import CODATA, CSL_PRESETS, MaterialError, MaterialParams, derived_scales, load_csl, load_material

log = logging.getLogger("cslqp")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_BRACKET = 0, 2, 3, 4
OUT_ENV = "CSLQP_OUT"

# Comparison values printed next to computed ones.
QUOTED = {
    "total_generation_rate": 3e-11,  # 1/(s um^3)
    "power_density": 1e-33,  # W/um^3
    "literature_power_density": 6e-14,  # W/um^3
    "subgap_current_experiment": observables.EXPERIMENTAL_SUBGAP_CURRENT,
    "gamma1": observables.REPORTED_GAMMA1,
}


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class MaterialModel(_Strict):
    name: str
    gap0: PositiveFloat
    fermi_energy: PositiveFloat
    tau0: PositiveFloat
    critical_temperature: Optional[PositiveFloat] = None


class CslModel(_Strict):
    lam: float = Field(1e-10, alias="lambda", ge=0)
    r_c: PositiveFloat = 1e-7
    mass_ratio: Optional[float] = Field(None, gt=0, lt=1)


class SolverModel(_Strict):
    eps: PositiveFloat = 1e-4
    x_max: float = Field(4.0, gt=1)
    n_nodes: int = Field(200, ge=4)
    dt_initial: PositiveFloat = 1e-3
    convergence_tol: float = Field(1e-14, gt=0, lt=1)
    max_steps: PositiveInt = 2000


class QubitModel(_Strict):
    omega_q: PositiveFloat = observables.DEFAULT_QUBIT.omega_q
    t_gate: PositiveFloat = 1e-7


class JunctionModel(_Strict):
    i_c: PositiveFloat = 1e-4


class WorkloadModel(_Strict):
    name: str
    n_qubits: PositiveInt
    n_gates: PositiveInt
    source: str = ""


class BudgetModel(_Strict):
    t1: PositiveFloat = 1e6  # s
    safety: PositiveFloat = 1e-3


class CrossoverModel(_Strict):
    t_min: PositiveFloat = 0.010
    t_max: PositiveFloat = 0.200
    n_points: int = Field(100, ge=2)
    occupation: Literal["thermal", "driven"] = "thermal"


class OutputModel(_Strict):
    directory: str = "results"
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


class ScenarioConfig(_Strict):
    material: Union[str, MaterialModel] = "aluminum"
    csl: CslModel = CslModel()
    solver: SolverModel = SolverModel()
    temperatures: list[PositiveFloat] = [0.020]
    qubit: QubitModel = QubitModel()
    junction: JunctionModel = JunctionModel()
    workloads: list[Union[str, WorkloadModel]] = ["shor", "molecular-simulation"]
    budget: BudgetModel = BudgetModel()
    crossover: CrossoverModel = CrossoverModel()
    output: OutputModel = OutputModel()

    def material_params(self) -> MaterialParams:
        m = self.material
        return load_material(m if isinstance(m, str) else m.model_dump())

    def csl_params(self):
        d = {"lambda": self.csl.lam, "r_c": self.csl.r_c}
        if self.csl.mass_ratio is not None:
            d["mass_ratio"] = self.csl.mass_ratio
        return load_csl(d)

    def solver_config(self) -> kinetic.SolverConfig:
        return kinetic.SolverConfig(**self.solver.model_dump())

    def workload_list(self) -> list[observables.Workload]:
        out = []
        for w in self.workloads:
            if isinstance(w, str):
                if w not in observables.WORKLOADS:
                    raise ConfigError(f"workloads: unknown catalog entry {w!r}")
                out.append(observables.WORKLOADS[w])
            else:
                out.append(observables.Workload(**w.model_dump()))
        return out

    def physics_dict(self) -> dict:
        d = self.model_dump(by_alias=True, mode="json")
        d.pop("output")
        return d


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"])
        lines.append(f"  {path}: {e['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def load_config(path: str | None, preset: str | None = None, overrides: dict | None = None) -> ScenarioConfig:
    raw: dict[str, Any] = {}
    if preset:
        if preset not in CSL_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        raw["csl"] = CSL_PRESETS[preset].as_dict()
    if path:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a mapping at top level")
        raw.update(loaded)
    if overrides:
        raw.update(overrides)
    try:
        cfg = ScenarioConfig.model_validate(raw)
        cfg.material_params()
        cfg.csl_params()
        cfg.solver_config()
        cfg.workload_list()
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc
    except (MaterialError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def scenario_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(cfg.physics_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def payload_hash(outputs: dict) -> str:
    return hashlib.sha256(json.dumps(_jsonable(outputs), sort_keys=True).encode()).hexdigest()


class ResultRecord:
    """Outputs of one analysis plus provenance; the payload hash ignores timestamps."""

    def __init__(self, analysis: str, cfg: ScenarioConfig):
        self.analysis = analysis
        self.cfg = cfg
        self.scenario = scenario_hash(cfg)
        self.outputs: dict[str, Any] = {}
        self.curves: dict[str, tuple[list[str], list[str], list[tuple]]] = {}
        self.warnings: list[str] = []

    def put(self, key: str, value, unit: str) -> None:
        self.outputs[key] = {"value": value, "unit": unit}

    def curve(self, name: str, columns: list[str], units: list[str], rows) -> None:
        self.curves[name] = (columns, units, list(rows))

    def as_dict(self) -> dict:
        return {
            "analysis": self.analysis,
            "scenario_hash": self.scenario,
            "payload_hash": payload_hash({"outputs": self.outputs, "curves": self.curves}),
            "outputs": _jsonable(self.outputs),
            "warnings": list(self.warnings),
            "config": self.cfg.physics_dict(),
            "provenance": {
                "tool_version": __version__,
                "constants": CODATA.as_dict(),
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            },
        }

    def write(self, out_dir: Path, formats) -> list[Path]:
        target = Path(out_dir) / self.scenario
        target.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            p = target / f"{self.analysis}.json"
            p.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
            written.append(p)
        if "csv" in formats:
            for name, (cols, units, rows) in self.curves.items():
                fname = self.analysis if name == self.analysis else f"{self.analysis}-{name}"
                p = target / f"{fname}.csv"
                with open(p, "w", newline="") as fh:
                    fh.write("# " + ", ".join(f"{c} [{u}]" for c, u in zip(cols, units)) + "\n")
                    w = csv.writer(fh)
                    w.writerow(cols)
                    for r in rows:
                        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
                written.append(p)
        return written


class BracketFailure(RuntimeError):
    def __init__(self, record: ResultRecord, message: str):
        super().__init__(message)
        self.record = record


# ---------------------------------------------------------------- analyses


def run_rates(cfg: ScenarioConfig) -> ResultRecord:
    mat, csl = cfg.material_params(), cfg.csl_params()
    rec = ResultRecord("rates", cfg)
    grid = cfg.solver_config().grid()
    curve = csl_rates.generation_curve(grid, mat, csl)
    rec.curve("rates", ["x", "gamma"], ["gap", "1/s"], zip(grid.nodes, curve.gamma))
    sc = derived_scales(mat, csl)
    rec.put("scales", sc.as_dict(), "beta, K, -, -, -")
    rec.put("reduction_rate", csl_rates.reduction_rate(csl, 4, 2), "1/s")
    rec.put("csl_generation_gap_edge", csl_rates.csl_generation_rate(1.0, mat, csl), "1/s")
    tot = csl_rates.total_generation_rate(mat, csl)
    pw = csl_rates.power_density(mat, csl)
    rec.put("total_generation_rate", tot, "1/(s um^3)")
    rec.put("power_density", pw, "W/um^3")
    rec.put("total_generation_rate_quoted", QUOTED["total_generation_rate"], "1/(s um^3)")
    rec.put("power_density_quoted", QUOTED["power_density"], "W/um^3")
    rec.put("power_density_over_literature", pw / QUOTED["literature_power_density"], "-")
    T = np.linspace(cfg.crossover.t_min, cfg.crossover.t_max, cfg.crossover.n_points)
    for name, c in phonon_kernels.difference_curves(T, mat, csl).items():
        if name in ("recombination", "eph_generation"):
            rec.curve(name, ["abscissa", "value", "kind"], ["K", "1/s", "-"], c.rows()[1:])
    return rec


def _steady_state_one(cfg: ScenarioConfig, T: float, curve, mat, scfg) -> dict:
    grid = curve.grid
    f0 = OccupationFunction.thermal(grid, mat, T)
    f_num, report = kinetic.evolve_to_steady_state(f0, T, curve, scfg, mat)
    f_an, diag = kinetic.analytic_steady_state(T, curve, grid, mat)
    metrics = kinetic.validate(f_num, f_an)
    return {"T": T, "f_num": f_num, "f_an": f_an, "report": report, "diag": diag, "metrics": metrics}


def _occupation_rows(f: OccupationFunction):
    with np.errstate(divide="ignore"):
        l10 = f.log_f / np.log(10.0)
    return zip(f.grid.nodes, f.f, l10, f.flags.astype(int))


def run_steady_state(cfg: ScenarioConfig) -> ResultRecord:
    if not cfg.temperatures:
        raise ConfigError("temperatures: at least one temperature is required")
    mat, csl, scfg = cfg.material_params(), cfg.csl_params(), cfg.solver_config()
    grid = scfg.grid()
    curve = csl_rates.generation_curve(grid, mat, csl)
    rec = ResultRecord("steady_state", cfg)
    junction = observables.JunctionParams(cfg.junction.i_c)
    qubit = observables.QubitParams(cfg.qubit.omega_q, cfg.qubit.t_gate)
    per_T = []
    for T in cfg.temperatures:
        r = _steady_state_one(cfg, T, curve, mat, scfg)
        tag = f"T{T * 1e3:g}mK"
        cols, units = ["x", "f", "log10_f", "flag"], ["gap", "-", "-", "-"]
        rec.curve(f"{tag}-numeric", cols, units, _occupation_rows(r["f_num"]))
        rec.curve(f"{tag}-analytic", cols, units, _occupation_rows(r["f_an"]))
        x_num = observables.xqp_from_occupation(r["f_num"], mat=mat)
        x_an = observables.xqp_from_occupation(r["f_an"], mat=mat)
        V, I = observables.subgap_sweep(r["f_num"], junction, mat)
        relax = observables.qubit_relaxation(x_num.x_qp, mat, qubit)
        rec.curve(f"{tag}-subgap", ["V", "I"], ["V", "A"], zip(V, I))
        entry = {
            "T_K": T,
            "x_qp_numeric": x_num.x_qp,
            "x_qp_analytic": x_an.x_qp,
            "x_qp_tail_bound": x_num.tail_bound,
            "convergence": r["report"].as_dict(),
            "validation": r["metrics"].as_dict(),
            "dropped_terms": r["diag"].summary(),
            "subgap_current_max_A": float(I.max()),
            "subgap_current_at_gap_A": observables.subgap_current(r["f_num"], mat.gap0, junction, mat),
            "gamma1_per_s": relax.gamma1,
            "t1_s": relax.t1,
        }
        if not r["report"].converged:
            rec.warnings.append(f"{tag}: kinetic solver did not converge (residual {r['report'].residual:.3g})")
        per_T.append(entry)
    rec.put("per_temperature", per_T, "see keys (K, -, s, A, 1/s)")
    rec.put("subgap_current_experiment", QUOTED["subgap_current_experiment"], "A")
    return rec


def run_crossover(cfg: ScenarioConfig) -> ResultRecord:
    mat, csl = cfg.material_params(), cfg.csl_params()
    cc = cfg.crossover
    rec = ResultRecord("crossover", cfg)
    occupation = None
    if cc.occupation == "driven":
        scfg = cfg.solver_config()
        grid = scfg.grid()
        curve = csl_rates.generation_curve(grid, mat, csl)

        def occupation(T):
            f0 = OccupationFunction.thermal(grid, mat, T)
            return kinetic.evolve_to_steady_state(f0, T, curve, scfg, mat)[0]

    T = np.linspace(cc.t_min, cc.t_max, cc.n_points)
    curves = phonon_kernels.difference_curves(T, mat, csl, occupation)
    for name in ("D1", "D2"):
        rec.curve(name, ["abscissa", "value", "kind"], ["K", "1/s", "-"], curves[name].rows()[1:])
    try:
        res = phonon_kernels.crossover_temperatures(mat, csl, (cc.t_min, cc.t_max), occupation)
    except phonon_kernels.BracketingError as exc:
        rec.warnings.append(str(exc))
        raise BracketFailure(rec, str(exc)) from exc
    rec.put("T1_star", res.t1, "K")
    rec.put("T2_star", res.t2, "K")
    rec.put("csl_generation_gap_edge", res.gamma_csl, "1/s")
    return rec


def run_budget(cfg: ScenarioConfig) -> ResultRecord:
    b, q = cfg.budget, cfg.qubit
    rec = ResultRecord("budget", cfg)
    frontier = observables.budget_frontier(b.t1, q.t_gate, b.safety)
    rec.curve("budget", ["N", "n_g_max"], ["qubits", "gates"], frontier)
    rec.put("frontier", frontier, "qubits, gates")
    verdicts = [observables.verdict_dict(observables.feasibility(w, b.t1, q.t_gate, b.safety))
                for w in cfg.workload_list()]
    rec.put("verdicts", verdicts, "log10 margin")
    return rec


ANALYSES = {
    "rates": run_rates,
    "steady-state": run_steady_state,
    "crossover": run_crossover,
    "budget": run_budget,
}


def _set_path(d: dict, path: str, value: float) -> dict:
    if path in ("temperature", "temperatures"):
        d["temperatures"] = [value]
        return d
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"sweep axis {path!r} does not name a numeric field")
        node = node[k]
    old = node.get(keys[-1])
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ConfigError(f"sweep axis {path!r} does not name a numeric field")
    node[keys[-1]] = value
    return d


def run_sweep(cfg: ScenarioConfig, axis: str, values: list[float], analysis: str, threads: int = 1):
    base = cfg.model_dump(by_alias=True, mode="json")
    cfgs = []
    for v in values:
        d = _set_path(copy.deepcopy(base), axis, v)
        try:
            cfgs.append(ScenarioConfig.model_validate(d))
        except ValidationError as exc:
            raise ConfigError(_format_validation(exc)) from exc
    fn = ANALYSES[analysis]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(fn, cfgs))
    else:
        records = [fn(c) for c in cfgs]
    return records


def _summary_row(axis: str, value: float, rec: ResultRecord) -> dict:
    row = {"axis": axis, "value": value, "scenario_hash": rec.scenario,
           "payload_hash": rec.as_dict()["payload_hash"]}
    if rec.analysis == "steady_state":
        first = rec.outputs["per_temperature"]["value"][0]
        row["x_qp_numeric"] = first["x_qp_numeric"]
        row["x_qp_analytic"] = first["x_qp_analytic"]
    return row


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file")
    common.add_argument("--out", help="output directory (overrides $%s and the config)" % OUT_ENV)
    common.add_argument("--preset", choices=sorted(CSL_PRESETS), help="CSL parameter preset")
    common.add_argument("--format", choices=["csv", "json", "both"], default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cslqp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ANALYSES:
        sub.add_parser(name, parents=[common])
    sw = sub.add_parser("sweep", parents=[common])
    sw.add_argument("--axis", required=True, help="dotted config path, e.g. csl.lambda")
    sw.add_argument("--values", required=True, nargs="+", type=float)
    sw.add_argument("--analysis", choices=sorted(ANALYSES), default="steady-state")
    return ap


def _formats(args, cfg: ScenarioConfig) -> list[str]:
    if args.format is None:
        return list(cfg.output.formats)
    return ["csv", "json"] if args.format == "both" else [args.format]


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or cfg.output.directory)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.preset)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out, formats = _out_dir(args, cfg), _formats(args, cfg)
    try:
        if args.command == "sweep":
            records = run_sweep(cfg, args.axis, args.values, args.analysis, args.threads)
            rows = [_summary_row(args.axis, v, r) for v, r in zip(args.values, records)]
            for r in records:
                r.write(out, formats)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"sweep-{args.axis}.json").write_text(json.dumps(_jsonable(rows), indent=2) + "\n")
            print(json.dumps(_jsonable(rows), indent=2))
            bad = any(r.warnings for r in records if r.analysis == "steady_state")
            return EXIT_NONCONVERGED if bad else EXIT_OK
        rec = ANALYSES[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketFailure as exc:
        exc.record.write(out, formats)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    paths = rec.write(out, formats)
    for p in paths:
        print(p)
    if rec.analysis == "steady_state" and rec.warnings:
        for w in rec.warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
