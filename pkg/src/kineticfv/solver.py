"""Finite-volume transport, boundary conditions and IMEX Runge-Kutta stepping.

The semi-discrete system per velocity node is

    dF/dt + T(F) = (1/eps) Q(F),

with ``T`` the upwind finite-volume divergence of CWENO face values.  BGK
relaxation is always treated implicitly; the stiff solve is diagonal once
the stage moments are known, because collisions conserve them.  The full
Boltzmann operator enters through the penalisation gap ``Q_B - Q_BGK``,
which is treated explicitly.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .collision import SpectralKernel, boltzmann_spectral
from .cweno import CwenoOperator, build_operator
from .mesh import PolyMesh
from .velocity import VACUUM_DENSITY, VelocityGrid, conserved_moments, maxwellian, moments

log = logging.getLogger(__name__)

EPS_ZERO = 1e-12
BOUNDARY_KINDS = ("periodic", "dirichlet", "inflow", "transmissive", "specular", "diffuse")


class SolverError(RuntimeError):
    pass


class TableauError(ValueError):
    pass


# ---------------------------------------------------------------------------
# fluxes and boundary conditions
# ---------------------------------------------------------------------------

def rusanov_flux(f_in, f_out, velocity, normal):
    """Local Lax-Friedrichs flux for linear advection, i.e. exact upwinding."""
    vn = np.asarray(velocity)[..., 0] * normal[0] + np.asarray(velocity)[..., 1] * normal[1]
    return 0.5 * vn * (f_in + f_out) - 0.5 * np.abs(vn) * (f_out - f_in)


@dataclass
class BoundarySpec:
    """Boundary condition attached to a face tag.

    ``state`` is a primitive state ``(rho, ux, uy, theta)`` or a callable
    ``state(points, t) -> (n, 4)`` for time-dependent Dirichlet data.
    Wall conditions use ``wall_theta``/``wall_velocity`` and the
    accommodation coefficient (1 = fully diffuse, 0 = specular).
    """

    kind: str
    state: object = None
    wall_theta: float = 1.0
    wall_velocity: tuple[float, float] = (0.0, 0.0)
    accommodation: float = 1.0

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if not 0.0 <= self.accommodation <= 1.0:
            raise ValueError("accommodation coefficient must lie in [0, 1]")
        if self.kind in ("dirichlet", "inflow") and self.state is None:
            raise ValueError(f"{self.kind} boundary needs a state")
        if self.kind == "specular":
            self.accommodation = 0.0


def reflection_weights(grid: VelocityGrid, normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear weights sampling ``f(v - 2 (v.n) n)`` on the velocity grid.

    Returns node indices and weights of shape ``(K, 4)``; reflected
    velocities landing exactly on nodes get a single unit weight, points
    outside the grid get zero weight.
    """
    v = grid.nodes
    n = np.asarray(normal, dtype=float)
    r = v - 2.0 * (v @ n)[:, None] * n
    pos = (r - grid.vmin) / grid.dv - 0.5
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    N = grid.n_axis
    idx = np.zeros((len(v), 4), dtype=np.int64)
    wts = np.zeros((len(v), 4))
    corner = 0
    for da in (0, 1):
        for db in (0, 1):
            a = lo[:, 0] + da
            b = lo[:, 1] + db
            w = (frac[:, 0] if da else 1 - frac[:, 0]) * (frac[:, 1] if db else 1 - frac[:, 1])
            ok = (a >= 0) & (a < N) & (b >= 0) & (b < N) & (w > 0)
            idx[:, corner] = np.where(ok, a * N + b, 0)
            wts[:, corner] = np.where(ok, w, 0.0)
            corner += 1
    return idx, wts


class BoundaryTable:
    """Precomputed per-face data for all boundary faces of a mesh."""

    def __init__(self, mesh: PolyMesh, grid: VelocityGrid, specs: dict[str, BoundarySpec]):
        self.mesh, self.grid = mesh, grid
        faces = np.flatnonzero(mesh.face_cells[:, 1] < 0)
        self.faces = faces
        self.face_ghost = -np.ones(mesh.nface, dtype=np.int64)
        self.face_ghost[faces] = np.arange(len(faces))
        names = [mesh.tag_names[t] for t in mesh.face_tag[faces]]
        missing = sorted(set(names) - set(specs))
        if missing:
            raise SolverError(f"no boundary condition for tags {missing}")
        self.groups: list[tuple[BoundarySpec, np.ndarray]] = []
        vx, vy = grid.vx, grid.vy
        for tag in sorted(set(names)):
            spec = specs[tag]
            rows = np.array([r for r, nm in enumerate(names) if nm == tag], dtype=np.int64)
            data: dict = {"rows": rows}
            fidx = faces[rows]
            nrm = mesh.face_normal[fidx]
            if spec.kind == "periodic":
                raise SolverError(f"tag {tag!r} is periodic but the mesh has unpaired faces there")
            if spec.kind in ("dirichlet", "inflow") and not callable(spec.state):
                prim = np.broadcast_to(np.asarray(spec.state, dtype=float), (len(rows), 4))
                data["fixed"] = maxwellian(prim, grid)
            if spec.kind in ("specular", "diffuse"):
                data["vn"] = vx[None, :] * nrm[:, :1] + vy[None, :] * nrm[:, 1:]
                if spec.accommodation < 1.0:
                    refl = [reflection_weights(grid, n) for n in nrm]
                    data["ridx"] = np.stack([r[0] for r in refl])
                    data["rwts"] = np.stack([r[1] for r in refl])
                if spec.accommodation > 0.0:
                    wall = np.array([1.0, *spec.wall_velocity, spec.wall_theta])
                    mw = maxwellian(wall, grid)
                    vn = data["vn"]
                    incoming = vn < 0.0
                    denom = np.sum(np.where(incoming, -vn, 0.0) * mw, axis=1)
                    data["mw"] = np.where(incoming, mw, 0.0)
                    data["denom"] = denom
            self.groups.append((spec, data))

    def ghost_values(self, f_inner: np.ndarray, t: float) -> np.ndarray:
        """Exterior states for every boundary face, ``(n_bf, K)``."""
        ghost = np.empty_like(f_inner)
        for spec, data in self.groups:
            rows = data["rows"]
            fin = f_inner[rows]
            kind = spec.kind
            if kind == "transmissive":
                ghost[rows] = fin
            elif kind in ("dirichlet", "inflow"):
                if "fixed" in data:
                    ghost[rows] = data["fixed"]
                else:
                    pts = self.mesh.face_mid[self.faces[rows]]
                    ghost[rows] = maxwellian(np.asarray(spec.state(pts, t)), self.grid)
            else:
                ghost[rows] = self._wall(spec, data, fin)
        return ghost

    @staticmethod
    def _wall(spec: BoundarySpec, data: dict, fin: np.ndarray) -> np.ndarray:
        alpha = spec.accommodation
        out = np.zeros_like(fin)
        if alpha < 1.0:
            ridx, rwts = data["ridx"], data["rwts"]
            rows = np.arange(len(fin))[:, None, None]
            out += (1.0 - alpha) * np.sum(rwts * fin[rows, ridx], axis=-1)
        if alpha > 0.0:
            vn = data["vn"]
            outflow = np.sum(np.where(vn > 0.0, vn, 0.0) * fin, axis=1)
            denom = data["denom"]
            mu = np.where(denom > 0.0, outflow / np.where(denom > 0.0, denom, 1.0), 0.0)
            out += alpha * mu[:, None] * data["mw"]
        # outgoing nodes never use the ghost value; keep them interior for clarity
        return np.where(data["vn"] > 0.0, fin, out)


# ---------------------------------------------------------------------------
# spatial operator
# ---------------------------------------------------------------------------

def cfl_timestep(mesh: PolyMesh, grid: VelocityGrid, cfl: float = 0.5) -> float:
    """``cfl * dx / max|v|`` with ``dx`` the smallest ``2 |P| / perimeter``."""
    from .velocity import max_speed
    dx = float(np.min(2.0 * mesh.area / mesh.perimeter))
    return cfl * dx / max_speed(grid)


class Transport:
    """Finite-volume divergence ``T(F)`` for every cell and velocity node.

    Parameters
    ----------
    mesh, grid :
        Phase-space discretisation.
    degree :
        Reconstruction degree; 0 gives the first-order scheme.
    boundaries :
        Boundary specification per face tag.
    frozen :
        Use linear CWENO weights (testing aid).
    """

    def __init__(self, mesh: PolyMesh, grid: VelocityGrid, degree: int,
                 boundaries: dict[str, BoundarySpec] | None = None, frozen: bool = False):
        self.mesh, self.grid, self.degree, self.frozen = mesh, grid, degree, frozen
        self.cweno: CwenoOperator | None = build_operator(mesh, degree) if degree > 0 else None
        self.bc = BoundaryTable(mesh, grid, boundaries or {})
        self.vx = np.ascontiguousarray(grid.vx)
        self.vy = np.ascontiguousarray(grid.vy)
        self._fv: np.ndarray | None = None

    def face_values(self, F: np.ndarray) -> np.ndarray:
        m = self.mesh
        if self.cweno is None:
            return np.ascontiguousarray(np.broadcast_to(F[:, None, :], (m.ncell, m.kmax, F.shape[1])))
        if self._fv is None or self._fv.shape[2] != F.shape[1]:
            self._fv = np.empty((m.ncell, m.kmax, F.shape[1]))
        return self.cweno.face_values(F, self.frozen, out=self._fv)

    def __call__(self, F: np.ndarray, t: float = 0.0) -> np.ndarray:
        m = self.mesh
        fv = self.face_values(F)
        bf = self.bc.faces
        inner = fv[m.face_cells[bf, 0], m.face_edges[bf, 0]]
        ghost = np.ascontiguousarray(self.bc.ghost_values(inner, t)) if len(bf) else np.zeros((1, F.shape[1]))
        out = np.empty_like(F)
        _kernels.upwind_divergence(fv, ghost, m.face_cells, m.face_edges, m.face_normal,
                                   m.face_length, self.bc.face_ghost, m.area, self.vx, self.vy, out)
        return out


def collision_correction(op: CwenoOperator | None, Q: np.ndarray) -> np.ndarray:
    """Cell average of the reconstructed collision term minus the cell-centred value.

    The reconstruction basis has zero mean over the cell, so the average of
    the reconstruction equals the input and the correction vanishes
    identically; it is provided for auditing and skipped by the stepper.
    """
    if op is None:
        return np.zeros_like(Q)
    m = op.mesh
    coeffs = op.coefficients(Q)
    rel = (m.cell_qp - m.barycenter[:, None, :]) / m.radius[:, None, None]
    phi = np.stack([rel[..., 0] ** p * rel[..., 1] ** q for p, q in op.exps], axis=-1) - op.mono_mean[:, None, :]
    avg_phi = np.einsum("iq,iqt->it", m.cell_qw, phi) / m.area[:, None]
    return np.einsum("it,itk->ik", avg_phi, coeffs)


# ---------------------------------------------------------------------------
# IMEX tableaus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImexTableau:
    name: str
    order: int
    explicit: np.ndarray
    implicit: np.ndarray
    explicit_weights: np.ndarray
    implicit_weights: np.ndarray

    @property
    def stages(self) -> int:
        return len(self.explicit_weights)

    @property
    def abscissae(self) -> np.ndarray:
        return self.explicit.sum(axis=1)

    @property
    def stiffly_accurate(self) -> bool:
        return bool(np.array_equal(self.explicit[-1, :], self.explicit_weights)
                    and np.array_equal(self.implicit[-1], self.implicit_weights))

    def explicit_needed(self) -> np.ndarray:
        """Stages whose explicit terms enter a later stage or the update."""
        used = np.any(self.explicit != 0.0, axis=0)
        if not self.stiffly_accurate:
            used |= self.explicit_weights != 0.0
        return used


def _tableau(name, order, ex, im, wex, wim) -> ImexTableau:
    return ImexTableau(name, order, np.array(ex, dtype=float), np.array(im, dtype=float),
                       np.array(wex, dtype=float), np.array(wim, dtype=float))


def _ars222() -> ImexTableau:
    g = 1.0 - 1.0 / math.sqrt(2.0)
    d = 1.0 - 1.0 / (2.0 * g)
    ex = [[0, 0, 0], [g, 0, 0], [d, 1 - d, 0]]
    im = [[0, 0, 0], [0, g, 0], [0, 1 - g, g]]
    return _tableau("ARS222", 2, ex, im, [d, 1 - d, 0], [0, 1 - g, g])


def _bpr343() -> ImexTableau:
    ex = [[0, 0, 0, 0, 0],
          [1, 0, 0, 0, 0],
          [4 / 9, 2 / 9, 0, 0, 0],
          [1 / 4, 0, 3 / 4, 0, 0],
          [1 / 4, 0, 3 / 4, 0, 0]]
    im = [[0, 0, 0, 0, 0],
          [1 / 2, 1 / 2, 0, 0, 0],
          [5 / 18, -1 / 9, 1 / 2, 0, 0],
          [1 / 2, 0, 0, 1 / 2, 0],
          [1 / 4, 0, 3 / 4, -1 / 2, 1 / 2]]
    return _tableau("BPR343", 3, ex, im, [1 / 4, 0, 3 / 4, 0, 0], [1 / 4, 0, 3 / 4, -1 / 2, 1 / 2])


def _euler() -> ImexTableau:
    return _tableau("EULER", 1, [[0, 0], [1, 0]], [[0, 0], [0, 1]], [1, 0], [0, 1])


ARS222 = _ars222()
BPR343 = _bpr343()
IMEX_EULER = _euler()
TABLEAUS = {t.name: t for t in (ARS222, BPR343, IMEX_EULER)}


def get_tableau(name: str) -> ImexTableau:
    key = name.upper().replace("(", "").replace(")", "").replace(",", "")
    if key not in TABLEAUS:
        raise TableauError(f"unknown tableau {name!r}; choose from {sorted(TABLEAUS)}")
    return TABLEAUS[key]


@dataclass
class TableauReport:
    name: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_tableau(tab: ImexTableau, tol: float = 1e-14) -> TableauReport:
    """Check structure, row sums, weight sums and order conditions up to order 3."""
    rep = TableauReport(tab.name)
    A, Ai = tab.explicit, tab.implicit
    b, bi = tab.explicit_weights, tab.implicit_weights
    if np.any(np.triu(A) != 0.0):
        rep.violations.append("explicit matrix not strictly lower triangular")
    if np.any(np.triu(Ai, 1) != 0.0):
        rep.violations.append("implicit matrix not lower triangular")
    c, ci = A.sum(axis=1), Ai.sum(axis=1)
    if np.max(np.abs(c - ci)) > tol:
        rep.violations.append("row sums of explicit and implicit matrices differ")

    def check(label, value, target):
        if abs(value - target) > tol:
            rep.violations.append(f"{label}: {value:.16g} != {target:.16g}")

    check("sum explicit weights", b.sum(), 1.0)
    check("sum implicit weights", bi.sum(), 1.0)
    if tab.order >= 2:
        for lab, w in (("explicit", b), ("implicit", bi)):
            for lab2, cc in (("explicit", c), ("implicit", ci)):
                check(f"{lab} weights . {lab2} abscissae = 1/2", w @ cc, 0.5)
    if tab.order >= 3:
        check("explicit b.c^2 = 1/3", b @ c ** 2, 1.0 / 3.0)
        check("implicit b.c^2 = 1/3", bi @ ci ** 2, 1.0 / 3.0)
        check("explicit b.A.c = 1/6", b @ A @ c, 1.0 / 6.0)
        check("implicit b.A.c = 1/6", bi @ Ai @ ci, 1.0 / 6.0)
        check("coupling b.Ai.c = 1/6", b @ Ai @ ci, 1.0 / 6.0)
        check("coupling bi.A.c = 1/6", bi @ A @ c, 1.0 / 6.0)
        check("coupling b.c.ci = 1/3", b @ (c * ci), 1.0 / 3.0)
        check("coupling bi.c.ci = 1/3", bi @ (c * ci), 1.0 / 3.0)
        check("coupling b.A.ci = 1/6", b @ A @ ci, 1.0 / 6.0)
        check("coupling bi.Ai.c = 1/6", bi @ Ai @ c, 1.0 / 6.0)
        check("coupling b.Ai.ci = 1/6", b @ Ai @ ci, 1.0 / 6.0)
        check("coupling bi.A.ci = 1/6", bi @ A @ ci, 1.0 / 6.0)
    return rep


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

@dataclass
class SolverState:
    F: np.ndarray
    t: float = 0.0
    step: int = 0
    relaxation: np.ndarray | None = None   # implicit stage term carried to the next step


@dataclass
class Problem:
    """Everything the stepper needs besides the state."""

    transport: Transport
    grid: VelocityGrid
    eps: float
    kernel: SpectralKernel | None = None
    workers: int = 1
    chunk: int = 256
    monitor: Callable | None = None   # monitor(stage, F, equilibrium)


def _equilibrium(U: np.ndarray, grid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """Maxwellian and density of conserved states ``(nc, 4)``."""
    rho = U[:, 0]
    safe = np.where(rho > 0.0, rho, 1.0)
    ux, uy = U[:, 1] / safe, U[:, 2] / safe
    theta = (U[:, 3] / safe - 0.5 * (ux * ux + uy * uy))
    prim = np.column_stack([rho, ux, uy, theta])
    bad = (rho > 0.0) & ~(theta > 0.0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SolverError(f"non-positive temperature in cell {i}: rho={rho[i]:.6g} theta={theta[i]:.6g}")
    return maxwellian(prim, grid), rho


def conservative_projection(G: np.ndarray, weight: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Remove the mass, momentum and energy moments of ``G`` along ``weight * invariant``.

    The correction lies in the span of ``weight * (1, vx, vy, |v|^2/2)``;
    rows whose weight has no mass are returned unchanged.
    """
    vx, vy = grid.vx, grid.vy
    basis = np.stack([np.ones_like(vx), vx, vy, 0.5 * (vx * vx + vy * vy)])     # (4, K)
    gram = grid.weight * np.einsum("ik,jk,ck->cij", basis, basis, weight)
    live = gram[:, 0, 0] > VACUUM_DENSITY
    gram[~live] = np.eye(4)
    rhs = np.where(live[:, None], conserved_moments(G, grid), 0.0)
    coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return G - weight * (coef @ basis)


def _gap(F: np.ndarray, prob: Problem) -> np.ndarray:
    """Boltzmann minus BGK, evaluated in deterministic cell chunks.

    The spectral operator conserves momentum and energy only up to its
    truncation error; the stage moments assume an exactly conservative gap,
    so its invariant moments are projected out.
    """
    grid, kernel = prob.grid, prob.kernel
    out = np.empty_like(F)
    bounds = [(s, min(s + prob.chunk, len(F))) for s in range(0, len(F), prob.chunk)]

    def work(b):
        s, e = b
        blk = F[s:e]
        prim = moments(blk, grid)
        M = maxwellian(prim, grid)
        gap = boltzmann_spectral(blk, grid, kernel, chunk=prob.chunk) - prim[:, :1] * (M - blk)
        out[s:e] = conservative_projection(gap, M, grid)

    if prob.workers > 1:
        with ThreadPoolExecutor(prob.workers) as pool:
            list(pool.map(work, bounds))
    else:
        for b in bounds:
            work(b)
    return out


def _check_finite(F: np.ndarray, stage: int) -> None:
    if not np.all(np.isfinite(F)):
        i, k = np.argwhere(~np.isfinite(F))[0]
        raise SolverError(f"non-finite value at cell {i}, velocity node {k}, stage {stage}")


def imex_step(state: SolverState, prob: Problem, tab: ImexTableau, dt: float, boltzmann: bool = False) -> SolverState:
    """One IMEX Runge-Kutta step with implicit BGK relaxation.

    ``boltzmann`` adds the explicit penalisation gap ``(Q_B - Q_BGK)/eps``.
    """
    grid, eps = prob.grid, prob.eps
    limit = eps < EPS_ZERO
    use_gap = boltzmann and not limit
    if use_gap and prob.kernel is None:
        raise SolverError("Boltzmann step needs a spectral kernel")
    A, Ai = tab.explicit, tab.implicit
    s = tab.stages
    need = tab.explicit_needed()
    Fn = state.F
    _check_finite(Fn, 0)
    Un = conserved_moments(Fn, grid)
    expl: list[np.ndarray | None] = [None] * s   # T - G/eps
    expl_U: list[np.ndarray | None] = [None] * s
    relax: list[np.ndarray | None] = [None] * s
    stages_F: list[np.ndarray] = []
    for l in range(s):
        t_l = state.t + tab.abscissae[l] * dt
        rhs = Fn.copy()
        Ul = Un.copy()
        for m in range(l):
            if A[l, m] != 0.0:
                rhs -= dt * A[l, m] * expl[m]
                Ul -= dt * A[l, m] * expl_U[m]
            if Ai[l, m] != 0.0:
                rhs += dt * Ai[l, m] * relax[m]
        all_ = Ai[l, l]
        E, rho = _equilibrium(Ul, grid)
        if all_ == 0.0:
            Fl = rhs
            if state.relaxation is not None and l == 0:
                relax[l] = state.relaxation
            elif limit:
                relax[l] = np.zeros_like(Fl)
            else:
                relax[l] = (rho / eps)[:, None] * (E - Fl)
        elif limit:
            Fl = E
            relax[l] = (Fl - rhs) / (dt * all_)
        else:
            c = (dt * all_ / eps) * rho[:, None]
            Fl = (rhs + c * E) / (1.0 + c)
            relax[l] = (Fl - rhs) / (dt * all_)
        _check_finite(Fl, l)
        if prob.monitor is not None:
            prob.monitor(l, Fl, E)
        stages_F.append(Fl)
        if need[l]:
            T = prob.transport(Fl, t_l)
            expl_U[l] = conserved_moments(T, grid)
            expl[l] = T - _gap(Fl, prob) / eps if use_gap else T
    if tab.stiffly_accurate:
        Fnew = stages_F[-1]
        carry = relax[-1]
    else:
        Fnew = Fn.copy()
        for m in range(s):
            if tab.explicit_weights[m] != 0.0:
                Fnew -= dt * tab.explicit_weights[m] * expl[m]
            if tab.implicit_weights[m] != 0.0:
                Fnew += dt * tab.implicit_weights[m] * relax[m]
        carry = None
    return SolverState(Fnew, state.t + dt, state.step + 1, carry)


def imex_step_bgk(state: SolverState, prob: Problem, tab: ImexTableau, dt: float) -> SolverState:
    return imex_step(state, prob, tab, dt, boltzmann=False)


def imex_step_boltzmann(state: SolverState, prob: Problem, tab: ImexTableau, dt: float) -> SolverState:
    return imex_step(state, prob, tab, dt, boltzmann=True)


def log_line(state: SolverState, dt: float, grid: VelocityGrid, area: np.ndarray) -> str:
    """``step, t, dt, mass, momentum_x, momentum_y, energy, min_f``."""
    tot = area @ conserved_moments(state.F, grid)
    return (f"{state.step}, {state.t:.10g}, {dt:.6g}, {tot[0]:.15e}, {tot[1]:.15e}, "
            f"{tot[2]:.15e}, {tot[3]:.15e}, {state.F.min():.6e}")
