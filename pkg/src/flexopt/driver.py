"""Run configuration, the nested analysis-and-design loop, and file exports."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degrees import validate_degree_sets
from .errors import ConfigurationError
from .mesh import Mesh, build_mesh
from .optimizer import (OptimizerState, TerminationReport, check_termination, kkt_residual, step,
                        update_movelimit)
from .problem import FlexureProblem
from .variants import RunPlan, VariantConfig, configure_variant

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    nelx: int = 100
    nely: int = 100
    nelz: int | None = None
    doc: list[str] = field(default_factory=lambda: ["tx"])
    dof: list[str] = field(default_factory=lambda: ["ty"])
    emax: list[float] = field(default_factory=lambda: [1.0])
    emax_mode: str = "normalized"
    weights: list[float] | None = None
    objective_mode: str = "sum"
    # material and discretization constants
    eps: float = 1e-6
    nu: float = 0.3
    penal: float = 3.0
    radius: float = 2.0
    tol_change: float = 1e-3
    x0: float = 0.5
    xmin: float = 1e-3
    volume_fraction: float | None = None
    symmetry: str | list[str] = "auto"
    rz_mode: str = "table"
    variant: VariantConfig = field(default_factory=VariantConfig)
    # optimizer
    max_iter: int = 500
    ml_init: float = 0.2
    ml_incr: float = 1.2
    ml_decr: float = 0.5
    ml_min: float = 0.001
    ml_max: float = 0.5
    osc_threshold: float = 0.2
    osc_active: float = 0.0
    osc_weighted: bool = True
    asymax: float = 10.0
    raa0: float = 1e-3
    tol_kkt: float = 1e-4
    tol_feas: float = 1e-4
    objective_scale: float = 10.0
    constraint_scale: float = 10.0
    random_init: float = 0.0
    seed: int = 0
    solver: str = "cholesky"
    # execution and output
    threads: int = 1
    out: str | None = None
    snapshot_every: int = 0

    def validate(self) -> None:
        dims = [self.nelx, self.nely] + ([self.nelz] if self.nelz is not None else [])
        for d in dims:
            if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 1:
                raise ConfigurationError(f"element counts must be positive integers, got {dims}")
        ndim = len(dims)
        validate_degree_sets(self.doc, self.dof, ndim)
        if len(self.emax) != len(self.dof):
            raise ConfigurationError(f"{len(self.dof)} DOFs but {len(self.emax)} emax values")
        if any(not e > 0 for e in self.emax):
            raise ConfigurationError(f"emax values must be positive, got {self.emax}")
        if self.emax_mode not in ("normalized", "raw"):
            raise ConfigurationError(f"emax_mode must be 'normalized' or 'raw', got {self.emax_mode!r}")
        if not 0.0 < self.x0 <= 1.0:
            raise ConfigurationError(f"initial design must lie in (0, 1], got {self.x0}")
        if not 0.0 < self.xmin < 1.0:
            raise ConfigurationError(f"xmin must lie in (0, 1), got {self.xmin}")
        if not 0.0 < self.ml_init <= 0.5:
            raise ConfigurationError(f"movelimit must lie in (0, 0.5], got {self.ml_init}")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0")
        if self.weights is not None and len(self.weights) != len(self.doc):
            raise ConfigurationError(f"{len(self.doc)} DOCs but {len(self.weights)} weights")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        variant = data.pop("variant", None) or {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        vnames = {f.name for f in dataclasses.fields(VariantConfig)}
        vunknown = set(variant) - vnames
        if vunknown:
            raise ConfigurationError(f"unknown [variant] keys: {sorted(vunknown)}")
        for key in ("doc", "dof"):
            if isinstance(data.get(key), str):
                data[key] = [data[key]]
        if isinstance(data.get("emax"), (int, float)):
            data["emax"] = [float(data["emax"])]
        return cls(**data, variant=VariantConfig(**variant))

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def symmetry_axes(config: RunConfig) -> tuple[str, ...]:
    """Resolve the ``symmetry`` setting to mirror axes.

    ``"auto"`` mirrors across the vertical mid-plane(s); the horizontal
    mid-plane is added when every active degree is invariant under it, which
    holds for translations and, on square domains, for the tabulated ``rz``.
    """
    sym = config.symmetry
    if sym in (None, "none", "off", False):
        return ()
    if sym != "auto":
        return tuple([sym] if isinstance(sym, str) else sym)
    if config.nelz is not None:
        return ("x", "y")
    active = list(config.doc) + list(config.dof)
    if "rz" not in active or config.nelx == config.nely:
        return ("x", "y")
    return ("x",)


@dataclass
class RunResult:
    config: RunConfig
    plan: RunPlan
    mesh: Mesh
    x: np.ndarray
    filtered: np.ndarray
    physical: np.ndarray
    eroded: np.ndarray | None
    intermediate: np.ndarray | None
    dilated: np.ndarray | None
    log: list[dict]
    termination: TerminationReport
    alpha: dict[str, float]
    energies: dict[str, float]
    references: dict[str, float]
    constraint_names: list[str]
    max_stress: dict[str, float]
    mnd: float
    objective: float
    beta: float
    effort: list[tuple[int, int, int]]
    elapsed: float
    problem: FlexureProblem = field(repr=False)

    @property
    def iterations(self) -> int:
        return len(self.log)

    def report(self) -> dict:
        t = self.termination
        return {
            "dims": list(self.mesh.dims),
            "doc": list(self.config.doc),
            "dof": list(self.config.dof),
            "emax": list(self.config.emax),
            "mode": self.plan.mode,
            "iterations": self.iterations,
            "converged": t.converged,
            "reason": t.reason,
            "change": t.change,
            "kkt_norm": t.kkt_norm,
            "feasible": t.feasible,
            "objective": self.objective,
            "constraints": dict(zip(self.constraint_names, [float(v) for v in self.log[-1]["g"]])),
            "alpha": self.alpha,
            "energies": self.energies,
            "reference_energies": self.references,
            "max_stress": self.max_stress,
            "stress_q": self.plan.q,
            "mnd": self.mnd,
            "beta": self.beta,
            "elapsed_s": self.elapsed,
        }


def measure_non_discreteness(xp) -> float:
    xp = np.asarray(xp, dtype=float)
    return float(np.sum(4.0 * xp * (1.0 - xp)) / xp.size)


def _set_threads(n: int) -> None:
    try:
        import numba
    except ImportError:
        return
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; workqueue is always available
        numba.config.THREADING_LAYER = "workqueue"
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def run(config: RunConfig) -> RunResult:
    """Optimize a flexure topology for the given configuration."""
    config.validate()
    _set_threads(config.threads)
    t0 = time.perf_counter()
    mesh = build_mesh(config.nelx, config.nely, config.nelz)
    sets = validate_degree_sets(config.doc, config.dof, mesh.ndim)
    plan = configure_variant(sets, config.variant, radius=config.radius)
    problem = FlexureProblem(
        mesh, sets, plan, config.emax, emax_mode=config.emax_mode, weights=config.weights,
        objective_mode=config.objective_mode, volume_fraction=config.volume_fraction,
        symmetry=symmetry_axes(config), eps=config.eps, nu=config.nu, penal=config.penal,
        rz_mode=config.rz_mode, solver=config.solver)

    n = mesh.n_elements
    x = np.full(n, config.x0)
    if config.random_init > 0:
        rng = np.random.default_rng(config.seed)
        x = x + config.random_init * (rng.random(n) - 0.5)
    x = np.clip(x, config.xmin, 1.0)

    n_con = len(sets.dof) + (len(plan.stress_dofs) if plan.stress else 0) \
        + (1 if config.volume_fraction is not None else 0)
    opt = OptimizerState.create(n, n_con, xmin=config.xmin, xmax=1.0, movelimit=config.ml_init,
                                 asymax=config.asymax, raa0=config.raa0)
    s0, s1 = config.objective_scale, config.constraint_scale

    out = Path(config.out) if config.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    log: list[dict] = []
    effort: list[tuple[int, int, int]] = []
    stage, stage_start = 0, 0
    change = math.nan
    k = 0
    while True:
        beta = plan.beta_at(stage)
        before = problem.stats.snapshot()
        try:
            ev = problem.evaluate(x, beta)
        except Exception as exc:
            logger.error("evaluation failed at design iteration %d: %s", k, exc)
            raise
        after = problem.stats.snapshot()
        effort.append(tuple(a - b for a, b in zip(after, before)))
        r = ev.responses
        kkt = kkt_residual(x, -s0 * r.df, s1 * r.g, s1 * r.dg, opt) if k > 0 else math.inf
        row = {"k": k, "f": r.f, "g": r.g.copy(), "change": change, "kkt": kkt,
               "E": [r.energies[d] for d in sets.active], "beta": beta, "ml": opt.movelimit}
        log.append(row)
        logger.info("k=%4d f=%.5f g=%s change=%.2e kkt=%.2e ml=%.3f%s", k, r.f,
                    np.array2string(r.g, precision=4), change, kkt, opt.movelimit,
                    f" beta={beta:g}" if plan.robust else "")
        if out is not None and config.snapshot_every and k % config.snapshot_every == 0:
            _export_field(ev.state.physical("nominal"), mesh, out / f"snapshot_{k:04d}")

        final_stage = stage >= plan.final_stage
        term = check_termination(change if k > 0 else math.inf, kkt, r.g, k, config.max_iter,
                                 config.tol_change, config.tol_kkt, config.tol_feas,
                                 allow=final_stage)
        if term.stop:
            break
        if plan.robust and not final_stage:
            early = term.feasible and k > 0 and change < config.tol_change
            if k - stage_start + 1 >= plan.beta_interval or early:
                stage += 1
                stage_start = k + 1

        if plan.stress and plan.adaptive_stress:
            for d, ratio in ev.stress_ratio.items():
                problem.stress_scale[d] = 0.5 * problem.stress_scale[d] + 0.5 * ratio

        opt.movelimit = update_movelimit(x, opt.xold1, opt.xold2, opt.movelimit,
                                         config.ml_incr, config.ml_decr, config.ml_min,
                                         config.ml_max, config.osc_threshold, config.osc_active,
                                         config.osc_weighted)
        x_new, opt = step(x, -s0 * r.f, -s0 * r.df, s1 * r.g, s1 * r.dg, opt)
        change = float(np.max(np.abs(x_new - x)))
        x = x_new
        k += 1

    state = ev.state
    physical = state.physical("nominal")
    max_stress = problem.max_stress(x, beta)
    result = RunResult(
        config=config, plan=plan, mesh=mesh, x=x, filtered=state.filtered, physical=physical,
        eroded=state.eroded, intermediate=state.intermediate, dilated=state.dilated,
        log=log, termination=term, alpha=dict(r.alpha), energies=dict(r.energies),
        references=dict(r.references), constraint_names=list(r.names), max_stress=max_stress,
        mnd=measure_non_discreteness(physical), objective=r.f, beta=beta, effort=effort,
        elapsed=time.perf_counter() - t0, problem=problem)
    if out is not None:
        write_outputs(result, out)
    return result


# exports

def _pgm_bytes(grid2d: np.ndarray) -> bytes:
    """Binary PGM of a (rows, cols) field in [0, 1]; solid maps to black."""
    vals = np.floor(255.0 * (1.0 - np.clip(grid2d, 0.0, 1.0)) + 0.5).astype(np.uint8)
    rows, cols = vals.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + vals.tobytes()


def _image_rows(field2d: np.ndarray) -> np.ndarray:
    # (nelx, nely) grid -> image rows from top (max y) to bottom
    return np.flipud(field2d.T)


def export_density(field_values, path: str | Path, fmt: str, mesh: Mesh) -> Path:
    """Write a density field as PGM or CSV (2D) or legacy VTK (3D)."""
    path = Path(path)
    vals = np.asarray(field_values, dtype=float)
    if np.any(vals < 0.0) or np.any(vals > 1.0) or not np.all(np.isfinite(vals)):
        raise ValueError("density field must lie in [0, 1]")
    grid = mesh.to_grid(vals)
    try:
        if fmt == "pgm":
            if mesh.ndim != 2:
                raise ValueError("PGM export requires a 2D field")
            path.write_bytes(_pgm_bytes(_image_rows(grid)))
        elif fmt == "csv":
            if mesh.ndim != 2:
                raise ValueError("CSV export requires a 2D field")
            img = _image_rows(grid)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for row in img:
                    w.writerow([f"{v:.9g}" for v in row])
        elif fmt == "vtk":
            if mesh.ndim != 3:
                raise ValueError("VTK export requires a 3D field")
            nx, ny, nz = mesh.dims
            # VTK cell order: x fastest, then y, then z
            flat = np.transpose(grid, (2, 1, 0)).ravel()
            lines = [
                "# vtk DataFile Version 3.0",
                "flexure density",
                "ASCII",
                "DATASET STRUCTURED_POINTS",
                f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}",
                "ORIGIN 0 0 0",
                "SPACING 1 1 1",
                f"CELL_DATA {flat.size}",
                "SCALARS density double 1",
                "LOOKUP_TABLE default",
            ]
            lines += [f"{v:.9g}" for v in flat]
            path.write_text("\n".join(lines) + "\n")
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return path


def read_density_csv(path: str | Path, mesh: Mesh) -> np.ndarray:
    img = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.flipud(img).T.ravel()


def _export_field(values, mesh: Mesh, stem: Path) -> None:
    if mesh.ndim == 2:
        export_density(values, stem.with_suffix(".pgm"), "pgm", mesh)
        export_density(values, stem.with_suffix(".csv"), "csv", mesh)
    else:
        export_density(values, stem.with_suffix(".vtk"), "vtk", mesh)


def write_log(result: RunResult, path: str | Path) -> Path:
    """Iteration history: ``k,f,g_1..g_m,change,kkt,E_1..E_d``."""
    path = Path(path)
    m = len(result.constraint_names)
    active = list(result.config.doc) + list(result.config.dof)
    header = ["k", "f"] + [f"g_{i + 1}" for i in range(m)] + ["change", "kkt"] \
        + [f"E_{i + 1}" for i in range(len(active))]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in result.log:
                w.writerow([row["k"], repr(float(row["f"]))] + [repr(float(v)) for v in row["g"]]
                           + [repr(float(row["change"])), repr(float(row["kkt"]))]
                           + [repr(float(e)) for e in row["E"]])
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return path


def write_outputs(result: RunResult, out: Path) -> None:
    out = Path(out)
    _export_field(result.physical, result.mesh, out / "design")
    if result.eroded is not None:
        _export_field(result.eroded, result.mesh, out / "design_eroded")
        _export_field(result.dilated, result.mesh, out / "design_dilated")
    write_log(result, out / "log.csv")
    (out / "report.json").write_text(json.dumps(result.report(), indent=2, default=float) + "\n")
