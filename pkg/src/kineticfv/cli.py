"""Run configuration, orchestration, field output, error norms and convergence studies.

Configuration files are plain ``key = value`` lines; ``#`` starts a comment.
Example::

    case = lax
    epsilon = 5e-4
    order = 3
    output_dir = out/lax
"""
from __future__ import annotations

import argparse
import inspect
import logging
import math
import sys
import time
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cases import (
    CASES,
    GAMMA,
    CaseSpec,
    bkw_field,
    get_case,
    initial_field,
    pressure_coefficient,
    solve_riemann,
    support_check,
)
from .collision import homogeneous_rk4, precompute_kernel
from .cweno import build_operator
from .mesh import PolyMesh, compute_quadrature
from .solver import (
    EPS_ZERO,
    TABLEAUS,
    Problem,
    SolverState,
    Transport,
    cfl_timestep,
    get_tableau,
    imex_step,
    log_line,
)
from .velocity import VelocityGrid, conserved_moments, moments

log = logging.getLogger("kineticfv")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

# case-factory keyword that "mesh_size" maps to
MESH_SIZE_ARG = {"vortex": "n", "lax": "nx", "explosion": "n", "dmr": "nx", "naca": "coarsen"}
# config keys forwarded to the case factories under another name
CASE_ARG = {"epsilon": "eps", "order": "order", "t_final": "t_final", "n_axis": "n_axis",
            "model": "model", "mesh_kind": "mesh_kind", "amplitude": "amplitude", "seed": "seed",
            "mach": "mach", "attack_deg": "attack_deg"}


@dataclass
class RunConfig:
    """Case name plus optional overrides; ``None`` keeps the case default."""

    case: str
    epsilon: float | None = None
    order: int | None = None
    tableau: str | None = None
    t_final: float | None = None
    n_axis: int | None = None
    velocity_bound: float | None = None
    mesh_size: int | None = None
    mesh_kind: str | None = None
    amplitude: float | None = None
    seed: int | None = None
    mach: float | None = None
    attack_deg: float | None = None
    model: str | None = None
    dt: float | None = None
    cfl: float = 0.5
    directions: int = 8
    output_dir: str | None = None
    output_format: str = "csv"
    output_every: int = 0
    log_every: int = 10
    workers: int = 1

    def case_overrides(self) -> dict:
        kw = {}
        for key, arg in CASE_ARG.items():
            val = getattr(self, key)
            if val is not None:
                kw[arg] = val
        if self.mesh_size is not None:
            if self.case not in MESH_SIZE_ARG:
                raise ConfigError(f"case {self.case!r} has no mesh size")
            kw[MESH_SIZE_ARG[self.case]] = self.mesh_size
        return kw

    def replace(self, **kw) -> "RunConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        return RunConfig(**data)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def validate_config(cfg: RunConfig) -> RunConfig:
    """Check value ranges and that the case accepts every override."""
    if cfg.case not in CASES:
        raise ConfigError(f"unknown case {cfg.case!r}; choose from {sorted(CASES)}")
    if cfg.order is not None and cfg.order not in (1, 2, 3):
        raise ConfigError("order must be 1, 2 or 3")
    if cfg.tableau is not None and cfg.tableau not in TABLEAUS and cfg.tableau != "RK4":
        raise ConfigError(f"unknown tableau {cfg.tableau!r}; choose from {sorted(TABLEAUS)}")
    if cfg.model is not None and cfg.model not in ("bgk", "boltzmann"):
        raise ConfigError("model must be 'bgk' or 'boltzmann'")
    if cfg.output_format not in ("csv", "vtk"):
        raise ConfigError("output_format must be 'csv' or 'vtk'")
    if cfg.epsilon is not None and cfg.epsilon < 0:
        raise ConfigError("epsilon must be non-negative")
    for key in ("t_final", "dt", "cfl", "velocity_bound"):
        val = getattr(cfg, key)
        if val is not None and not val > 0:
            raise ConfigError(f"{key} must be positive")
    if cfg.workers < 1 or cfg.directions < 1 or cfg.log_every < 1 or cfg.output_every < 0:
        raise ConfigError("workers, directions and log_every must be >= 1, output_every >= 0")
    params = inspect.signature(CASES[cfg.case]).parameters
    for arg in cfg.case_overrides():
        if arg not in params:
            raise ConfigError(f"case {cfg.case!r} does not accept the override {arg!r}")
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: invalid value {raw!r} for {key!r}") from None
    if "case" not in values:
        raise ConfigError(f"{source}: missing required key 'case'")
    try:
        return validate_config(RunConfig(**values))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(), str(path))


def make_spec(cfg: RunConfig) -> CaseSpec:
    spec = get_case(cfg.case, **cfg.case_overrides())
    kw = {}
    if cfg.tableau is not None:
        kw["tableau"] = cfg.tableau
    if cfg.dt is not None:
        kw["dt"] = cfg.dt
    if cfg.velocity_bound is not None:
        kw["velocity"] = (-cfg.velocity_bound, cfg.velocity_bound, spec.velocity[2])
    return spec.with_overrides(**kw) if kw else spec


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    """One error value; ``order`` is relative to the previous row of the same norm and variable."""

    norm: str
    variable: str
    value: float
    size: float
    order: float | None = None


def observed_order(e1: float, e2: float, h1: float, h2: float) -> float:
    return math.log(e1 / e2) / math.log(h1 / h2)


def attach_orders(rows: Sequence[ErrorReport]) -> list[ErrorReport]:
    """Fill the order column from consecutive rows with the same norm and variable."""
    last: dict[tuple[str, str], ErrorReport] = {}
    out = []
    for r in rows:
        prev = last.get((r.norm, r.variable))
        order = None
        if prev is not None and prev.value > 0 and r.value > 0 and prev.size != r.size:
            order = observed_order(prev.value, r.value, prev.size, r.size)
        nr = ErrorReport(r.norm, r.variable, r.value, r.size, order)
        out.append(nr)
        last[(r.norm, r.variable)] = nr
    return out


def _pnorm(x: np.ndarray, p) -> float:
    x = np.abs(np.asarray(x, dtype=float)).ravel()
    if p == np.inf or p == "inf":
        return float(x.max())
    return float(np.sum(x ** p) ** (1.0 / p))


def velocity_error_norms(f_num: np.ndarray, f_ref: np.ndarray, grid: VelocityGrid, p=1) -> float:
    """Relative discrete ``l^p`` error on the velocity grid; ``p = inf`` gives the maximum absolute error."""
    f_num = np.asarray(f_num, dtype=float)
    f_ref = np.asarray(f_ref, dtype=float)
    if f_num.shape != f_ref.shape or f_num.shape[-1] != grid.size:
        raise ValueError("distributions must live on the same velocity grid")
    diff = f_num - f_ref
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(diff)))
    ref = _pnorm(f_ref, p)
    if ref == 0.0:
        warnings.warn("reference has zero norm; returning the absolute error", RuntimeWarning, stacklevel=2)
        return _pnorm(diff, p)
    return _pnorm(diff, p) / ref


def _prim_from_conserved(U: np.ndarray) -> np.ndarray:
    rho = U[..., 0]
    ux, uy = U[..., 1] / rho, U[..., 2] / rho
    theta = U[..., 3] / rho - 0.5 * (ux * ux + uy * uy)
    return np.stack([rho, ux, uy, theta], axis=-1)


VARIABLE_INDEX = {"rho": 0, "ux": 1, "uy": 2, "T": 3}


def space_error_norms(macro_num: np.ndarray, macro_ref, mesh: PolyMesh, p=1, degree: int = 0,
                      variables: Sequence[str] = ("rho", "T")) -> dict[str, float]:
    """Absolute ``L^p`` errors of macroscopic fields integrated with cell quadrature.

    Parameters
    ----------
    macro_num : (nc, 4)
        Cell averages of the conserved moments (mass, momentum, energy).
    macro_ref : callable or ndarray
        ``macro_ref(points) -> (n, 4)`` primitive states, or primitive values
        already sampled at the cell quadrature points, ``(nc, nq, 4)``.
    degree :
        Reconstruction degree used to evaluate the numerical fields at the
        quadrature points; 0 uses the cell averages.
    """
    if mesh.quad_degree is None:
        compute_quadrature(mesh, max(2 * degree, 2))
    U = np.asarray(macro_num, dtype=float)
    if degree > 0:
        op = build_operator(mesh, degree)
        Uq = op.point_values(np.ascontiguousarray(U))
    else:
        Uq = np.broadcast_to(U[:, None, :], mesh.cell_qp.shape[:2] + (4,))
    num = _prim_from_conserved(Uq)
    if callable(macro_ref):
        ref = np.asarray(macro_ref(mesh.cell_qp.reshape(-1, 2))).reshape(num.shape)
    else:
        ref = np.asarray(macro_ref, dtype=float)
    out = {}
    for var in variables:
        e = np.abs(num[..., VARIABLE_INDEX[var]] - ref[..., VARIABLE_INDEX[var]])
        if p == np.inf or p == "inf":
            out[var] = float(e.max())
        else:
            out[var] = float(np.sum(mesh.cell_qw * e ** p) ** (1.0 / p))
    return out


def cell_error_norms(a: np.ndarray, b: np.ndarray, area: np.ndarray, p=1) -> float:
    """Area-weighted ``L^p`` difference of two cell-average fields."""
    e = np.abs(np.asarray(a) - np.asarray(b))
    if p == np.inf or p == "inf":
        return float(e.max())
    return float(np.sum(area * e ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# field output
# ---------------------------------------------------------------------------

FIELD_COLUMNS = ("x", "y", "area", "rho", "ux", "uy", "T", "p", "mach")


def macroscopic_fields(F: np.ndarray, grid: VelocityGrid, mesh: PolyMesh) -> np.ndarray:
    """Rows of ``FIELD_COLUMNS`` per cell."""
    prim = moments(F, grid)
    rho, ux, uy, th = prim.T
    p = rho * th
    sound = np.sqrt(GAMMA * np.where(th > 0, th, np.nan))
    mach = np.hypot(ux, uy) / sound
    return np.column_stack([mesh.barycenter, mesh.area, rho, ux, uy, th, p, mach])


def write_csv(path, data: np.ndarray, columns: Sequence[str]) -> None:
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(columns), comments="")


def write_vtk(path, mesh: PolyMesh, data: np.ndarray, title: str = "kineticfv fields") -> None:
    """Legacy ASCII unstructured grid with one polygon per cell."""
    used = np.unique(np.concatenate(mesh.cells))
    remap = -np.ones(len(mesh.nodes), dtype=np.int64)
    remap[used] = np.arange(len(used))
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(used)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.nodes[used]]
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"CELLS {mesh.ncell} {size}")
    lines += [" ".join(map(str, [len(c), *remap[c]])) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.ncell}")
    lines += ["7"] * mesh.ncell
    lines.append(f"CELL_DATA {mesh.ncell}")
    for j, name in enumerate(FIELD_COLUMNS[3:], start=3):
        if name in ("ux", "uy"):
            continue
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in data[:, j]]
    lines.append("VECTORS velocity double")
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in data[:, 4:6]]
    Path(path).write_text("\n".join(lines) + "\n")


def centerline(data: np.ndarray, mesh: PolyMesh) -> np.ndarray:
    """Rows of ``data`` whose barycentre lies within ``h/2`` of the strip's mid-line, sorted by x."""
    mid = 0.5 * (mesh.domain.y0 + mesh.domain.y1)
    sel = np.flatnonzero(np.abs(data[:, 1] - mid) < 0.5 * mesh.h)
    order = sel[np.lexsort((data[sel, 1], data[sel, 0]))]
    return data[order]


def _crossing(x: np.ndarray, y: np.ndarray, level: float, rising: bool) -> float:
    """First x at which ``y`` crosses ``level`` in the given direction (linear interpolation)."""
    above = y >= level if rising else y <= level
    idx = np.flatnonzero(above)
    if len(idx) == 0 or idx[0] == 0:
        return float(x[idx[0]]) if len(idx) else float("nan")
    i = idx[0]
    t = (level - y[i - 1]) / (y[i] - y[i - 1])
    return float(x[i - 1] + t * (x[i] - x[i - 1]))


def riemann_profile_report(line: np.ndarray, left, right, t: float, length: float) -> dict:
    """Density L1 error and contact/shock positions of a 1D profile against the exact solution.

    ``line`` holds centreline rows of ``FIELD_COLUMNS``; the L1 error is the
    mean absolute density error times the strip length.
    """
    sol = solve_riemann(left, right)
    x, rho = line[:, 0], line[:, 3]
    exact = sol.sample(x / t)[:, 0]
    speeds = sol.wave_speeds()
    out = {"l1_density": float(np.mean(np.abs(rho - exact)) * length)}
    rl, rr = sol.star_density(-1), sol.star_density(1)
    x_contact = speeds["contact"] * t
    if "right_shock" in speeds:
        x_shock = speeds["right_shock"] * t
        lo = 0.5 * (x_contact + x_shock)
        m = x > lo
        num_shock = _crossing(x[m], rho[m], 0.5 * (rr + sol.right[0]), rising=rr < sol.right[0])
        out.update(shock_exact=x_shock, shock_numeric=num_shock)
    tail = speeds.get("left_tail", speeds.get("left_shock", x_contact / max(t, 1e-300))) * t
    m = (x > 0.5 * (tail + x_contact)) & (x < x_contact + 0.5 * (out.get("shock_exact", x[-1]) - x_contact))
    out.update(contact_exact=x_contact,
               contact_numeric=_crossing(x[m], rho[m], 0.5 * (rl + rr), rising=rr > rl))
    return out


def wall_pressure_coefficients(data: np.ndarray, mesh: PolyMesh, freestream, tag: str = "wall") -> np.ndarray:
    """Columns ``x, cp_upper, cp_lower`` from the cells adjacent to the wall faces.

    Upper and lower faces are paired through the mirror image ``y -> -y``.
    """
    faces = mesh.boundary_faces(tag)
    mid = mesh.face_mid[faces]
    cp = pressure_coefficient(data[mesh.face_cells[faces, 0], 7], freestream)
    up = np.flatnonzero(mid[:, 1] > 0)
    lo = np.flatnonzero(mid[:, 1] < 0)
    key_lo = {(round(mid[j, 0], 9), round(-mid[j, 1], 9)): j for j in lo}
    rows = []
    for i in up:
        j = key_lo.get((round(mid[i, 0], 9), round(mid[i, 1], 9)))
        if j is not None:
            rows.append((mid[i, 0], cp[i], cp[j]))
    rows.sort()
    return np.array(rows).reshape(-1, 3)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    spec: CaseSpec
    grid: VelocityGrid
    mesh: PolyMesh | None
    state: SolverState | None
    dt: float
    steps: int
    fields: np.ndarray | None
    reports: list[ErrorReport] = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    seconds: float = 0.0


def step_count(t_final: float, dt: float) -> tuple[int, float]:
    """Number of uniform steps not exceeding ``dt`` that reach ``t_final`` exactly."""
    n = max(1, math.ceil(t_final / dt * (1.0 - 1e-12)))
    return n, t_final / n


def setup(cfg: RunConfig, spec: CaseSpec | None = None, monitor: Callable | None = None):
    """Mesh, grid, initial state and stepping problem for a configuration."""
    spec = spec or make_spec(cfg)
    mesh = spec.build_mesh()
    grid = spec.grid()
    support_check(spec, mesh, log.warning)
    F = initial_field(spec, mesh, grid)
    transport = Transport(mesh, grid, spec.degree, spec.boundaries)
    kernel = None
    if spec.model == "boltzmann" and spec.eps >= EPS_ZERO:
        kernel = precompute_kernel(grid, cfg.directions)
    prob = Problem(transport, grid, spec.eps, kernel, workers=cfg.workers, monitor=monitor)
    return spec, mesh, grid, SolverState(F), prob


def integrate(state: SolverState, prob: Problem, tableau: str, dt: float, t_final: float,
              boltzmann: bool, callback: Callable[[SolverState, float], None] | None = None) -> tuple[SolverState, int, float]:
    tab = get_tableau(tableau)
    n, dt = step_count(t_final - state.t, dt)
    for _ in range(n):
        state = imex_step(state, prob, tab, dt, boltzmann=boltzmann)
        if callback is not None:
            callback(state, dt)
    return state, n, dt


def _run_homogeneous(cfg: RunConfig, spec: CaseSpec) -> RunResult:
    grid = spec.grid()
    kernel = precompute_kernel(grid, cfg.directions)
    f0 = bkw_field(grid, 0.0)
    dt = spec.dt or 0.01
    steps, dt = step_count(spec.t_final, dt)
    f = homogeneous_rk4(f0, grid, kernel, dt, spec.t_final)
    ref = bkw_field(grid, spec.t_final)
    reports = [ErrorReport(name, "f", velocity_error_norms(f, ref, grid, p), grid.dv)
               for name, p in (("L1", 1), ("L2", 2), ("Linf", np.inf))]
    return RunResult(spec, grid, None, None, dt, steps, None, reports, {"f": f, "reference": ref})


def run(cfg: RunConfig, monitor: Callable | None = None) -> RunResult:
    """Run one case end to end and write its outputs when ``output_dir`` is set."""
    cfg = validate_config(cfg)
    start = time.perf_counter()
    spec = make_spec(cfg)
    outdir = Path(cfg.output_dir) if cfg.output_dir else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
    if spec.metadata.get("homogeneous"):
        res = _run_homogeneous(cfg, spec)
        res.seconds = time.perf_counter() - start
        if outdir is not None:
            res.files.append(_write_report(outdir / "report.txt", spec, res))
        return res

    spec, mesh, grid, state, prob = setup(cfg, spec, monitor)
    dt0 = spec.dt or cfl_timestep(mesh, grid, cfg.cfl)
    files: list[Path] = []
    logs: list[str] = []
    header = f"# case={spec.name} eps={spec.eps:g} model={spec.model} tableau={spec.tableau} " \
             f"order={spec.order} cells={mesh.ncell} velocity={grid.n_axis}^2 on [{grid.vmin:g},{grid.vmax:g}]"
    logs.append(header)
    logs.append("# step, t, dt, mass, momentum_x, momentum_y, energy, min_f")
    logs.append(log_line(state, 0.0, grid, mesh.area))
    log.info(header)

    def write_fields(st: SolverState, tag: str):
        if outdir is None:
            return
        data = macroscopic_fields(st.F, grid, mesh)
        if cfg.output_format == "vtk":
            path = outdir / f"{spec.name}_{tag}.vtk"
            write_vtk(path, mesh, data)
        else:
            path = outdir / f"{spec.name}_{tag}.csv"
            write_csv(path, data, FIELD_COLUMNS)
        files.append(path)

    def callback(st: SolverState, dt: float):
        if st.step % cfg.log_every == 0:
            line = log_line(st, dt, grid, mesh.area)
            logs.append(line)
            log.info(line)
        if cfg.output_every and st.step % cfg.output_every == 0:
            write_fields(st, f"{st.step:06d}")

    boltzmann = spec.model == "boltzmann"
    state, steps, dt = integrate(state, prob, spec.tableau, dt0, spec.t_final, boltzmann, callback)
    if state.step % cfg.log_every:
        logs.append(log_line(state, dt, grid, mesh.area))
    data = macroscopic_fields(state.F, grid, mesh)
    res = RunResult(spec, grid, mesh, state, dt, steps, data, log=logs)
    _postprocess(res)
    write_fields(state, "final")
    res.seconds = time.perf_counter() - start
    if outdir is not None:
        (outdir / "run.log").write_text("\n".join(logs) + "\n")
        files.append(outdir / "run.log")
        files += _write_extras(outdir, res)
        files.append(_write_report(outdir / "report.txt", spec, res))
    res.files = files
    return res


def _postprocess(res: RunResult) -> None:
    spec, mesh, state = res.spec, res.mesh, res.state
    if spec.name == "vortex" and spec.reference is not None:
        U = conserved_moments(state.F, res.grid)
        ref = lambda x: spec.reference(x, state.t)  # noqa: E731
        for name, p in (("L1", 1), ("L2", 2)):
            for var, val in space_error_norms(U, ref, mesh, p, spec.degree).items():
                res.reports.append(ErrorReport(name, var, val, mesh.h))
    elif spec.name == "lax":
        from .cases import LAX_LEFT, LAX_RIGHT
        line = centerline(res.fields, mesh)
        res.extras["centerline"] = line
        rep = riemann_profile_report(line, LAX_LEFT, LAX_RIGHT, state.t, mesh.domain.width)
        res.extras["riemann"] = rep
        res.reports.append(ErrorReport("L1", "rho_centerline", rep["l1_density"], mesh.h))
    elif spec.name == "naca":
        free = np.asarray(spec.metadata["freestream"])
        cp = wall_pressure_coefficients(res.fields, mesh, free)
        res.extras["cp"] = cp
        far = np.max(np.abs(res.fields[:, :2]), axis=1) >= 0.8 * mesh.domain.x1
        res.extras["cp_far_max"] = float(np.max(np.abs(pressure_coefficient(res.fields[far, 7], free))))
        res.extras["cp_rms_asymmetry"] = float(np.sqrt(np.mean((cp[:, 1] - cp[:, 2]) ** 2))) if len(cp) else float("nan")


def _write_extras(outdir: Path, res: RunResult) -> list[Path]:
    out = []
    if "centerline" in res.extras:
        path = outdir / "centerline.csv"
        write_csv(path, res.extras["centerline"], FIELD_COLUMNS)
        out.append(path)
    if "cp" in res.extras:
        path = outdir / "cp.csv"
        write_csv(path, res.extras["cp"], ("x", "cp_upper", "cp_lower"))
        out.append(path)
    return out


def format_reports(reports: Sequence[ErrorReport]) -> str:
    lines = [f"{'norm':<6}{'variable':<16}{'size':>12}{'error':>14}{'order':>8}"]
    for r in reports:
        order = "" if r.order is None else f"{r.order:8.2f}"
        lines.append(f"{r.norm:<6}{r.variable:<16}{r.size:12.4e}{r.value:14.4e}{order:>8}")
    return "\n".join(lines)


def _write_report(path: Path, spec: CaseSpec, res: RunResult) -> Path:
    lines = [f"case {spec.name}", f"steps {res.steps}", f"dt {res.dt:.6e}", f"seconds {res.seconds:.1f}"]
    for k, v in spec.metadata.items():
        lines.append(f"meta {k} {v}")
    for k, v in res.extras.items():
        if np.isscalar(v):
            lines.append(f"{k} {v:.6e}" if isinstance(v, float) else f"{k} {v}")
        elif isinstance(v, dict):
            lines += [f"{k}.{a} {b:.6e}" for a, b in v.items()]
    if res.reports:
        lines.append(format_reports(res.reports))
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceTable:
    mode: str
    reports: list[ErrorReport]
    monotone: bool

    def values(self, norm: str, variable: str) -> list[float]:
        return [r.value for r in self.reports if r.norm == norm and r.variable == variable]

    def orders(self, norm: str, variable: str) -> list[float]:
        return [r.order for r in self.reports if r.norm == norm and r.variable == variable and r.order is not None]


def _final_state(cfg: RunConfig, dt: float | None = None) -> tuple[CaseSpec, PolyMesh, SolverState, float]:
    spec, mesh, grid, state, prob = setup(cfg)
    step = dt or spec.dt or cfl_timestep(mesh, grid, cfg.cfl)
    state, _, step = integrate(state, prob, spec.tableau, step, spec.t_final, spec.model == "boltzmann")
    return spec, mesh, state, step


def convergence_driver(base: RunConfig, levels: Sequence, mode: str = "space-time",
                       norms: Sequence = (("L1", 1), ("L2", 2)), variables: Sequence[str] = ("rho", "T")) -> ConvergenceTable:
    """Error table over refinement levels.

    ``space-time``: ``levels`` are mesh sizes; each run is compared with the
    case's exact solution and ``size`` is the mesh length scale.
    ``time-only``: ``levels`` are time steps on the fixed configured mesh;
    each run is compared with a run at ``min(levels) / 16`` and ``size`` is
    the time step.
    """
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least three levels")
    rows: list[ErrorReport] = []
    if mode == "space-time":
        for n in levels:
            cfg = base.replace(mesh_size=int(n))
            spec, mesh, state, _ = _final_state(cfg)
            if spec.reference is None:
                raise ValueError(f"case {spec.name!r} has no exact solution")
            U = conserved_moments(state.F, spec.grid())
            ref = lambda x, t=state.t, s=spec: s.reference(x, t)  # noqa: E731
            for name, p in norms:
                errs = space_error_norms(U, ref, mesh, p, spec.degree, variables)
                rows += [ErrorReport(name, v, errs[v], mesh.h) for v in variables]
    elif mode == "time-only":
        steps = sorted((float(d) for d in levels), reverse=True)
        spec, mesh, ref_state, _ = _final_state(base, steps[-1] / 16.0)
        grid = spec.grid()
        ref = moments(ref_state.F, grid)
        for dt in steps:
            _, _, state, used = _final_state(base, dt)
            prim = moments(state.F, grid)
            for name, p in norms:
                for v in variables:
                    j = VARIABLE_INDEX[v]
                    rows.append(ErrorReport(name, v, cell_error_norms(prim[:, j], ref[:, j], mesh.area, p), used))
    else:
        raise ValueError("mode must be 'space-time' or 'time-only'")
    rows = attach_orders(rows)
    monotone = True
    for name, _ in norms:
        for v in variables:
            vals = [r.value for r in rows if r.norm == name and r.variable == v]
            if any(b >= a for a, b in zip(vals, vals[1:])):
                monotone = False
                log.warning("non-monotone %s error sequence for %s: %s", name, v, vals)
    return ConvergenceTable(mode, rows, monotone)


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _tests_dir() -> Path:
    return Path(__file__).resolve().parents[2] / "tests"


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kineticfv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run one configuration")
    p_solve.add_argument("config")
    p_solve.add_argument("--output-dir")
    p_conv = sub.add_parser("converge", help="convergence study over refinement levels")
    p_conv.add_argument("config")
    p_conv.add_argument("--levels", nargs="+", required=True,
                        help="mesh sizes (space-time) or time steps (time-only)")
    p_conv.add_argument("--mode", choices=("space-time", "time-only"), default="space-time")
    p_val = sub.add_parser("validate", help="run the test suite")
    p_val.add_argument("--all", action="store_true", help="include the slow acceptance runs")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            cfg = parse_config(args.config)
            if args.output_dir:
                cfg = cfg.replace(output_dir=args.output_dir)
            res = run(cfg)
            print(f"{res.spec.name}: {res.steps} steps of dt={res.dt:.4e} in {res.seconds:.1f} s")
            for k, v in res.extras.items():
                if isinstance(v, float):
                    print(f"{k} = {v:.6e}")
                elif isinstance(v, dict):
                    for a, b in v.items():
                        print(f"{k}.{a} = {b:.6e}")
            if res.reports:
                print(format_reports(res.reports))
            if res.fields is not None and not np.all(np.isfinite(res.fields[:, 3:8])):
                print("non-finite macroscopic fields", file=sys.stderr)
                return 1
            return 0
        if args.command == "converge":
            cfg = parse_config(args.config)
            levels = [float(x) for x in args.levels] if args.mode == "time-only" else [int(x) for x in args.levels]
            table = convergence_driver(cfg, levels, args.mode)
            print(format_reports(table.reports))
            if not table.monotone:
                print("warning: non-monotone error sequence", file=sys.stderr)
            return 0
        import pytest
        tests = _tests_dir()
        if not tests.is_dir():
            print(f"test directory {tests} not found", file=sys.stderr)
            return 2
        extra = [] if args.all else ["-m", "not slow"]
        return int(pytest.main([str(tests), "-q", *extra]))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
