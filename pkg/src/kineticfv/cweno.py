"""Central WENO reconstruction on polygonal cells.

Each cell carries a zero-mean Taylor basis scaled by its characteristic
length, so the constant coefficient of every candidate polynomial is the
cell average and conservation holds by construction.  The candidates are

* one degree-M polynomial fitted by constrained least squares on the
  central stencil,
* one linear polynomial per sector stencil (the cell plus two neighbours),

blended through the usual central-WENO construction: the high-degree
polynomial is split as ``p_opt = lam0 * p0 + sum lam_s * p_s`` and ``p0``
and the ``p_s`` are re-weighted from smoothness indicators.

Geometry-only operators are precomputed once in :class:`CwenoOperator`.
Per-cell functions below act on a single scalar field and mirror the
vectorised production path in :mod:`kineticfv._kernels`, which they are
tested against.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mesh import PolyMesh, build_stencils, compute_quadrature, n_basis

log = logging.getLogger(__name__)

EPS_WEIGHTS = 1e-14
POWER = 4
LAMBDA_CENTRAL = 0.8


class CwenoError(ValueError):
    pass


def exponents(degree: int) -> list[tuple[int, int]]:
    """Non-constant monomial exponents ``(p, q)`` ordered by total degree."""
    return [(d - q, q) for d in range(1, degree + 1) for q in range(d + 1)]


def _derivatives(exps: list[tuple[int, int]], xi: np.ndarray, eta: np.ndarray, max_order: int) -> np.ndarray:
    """All derivatives of orders 1..max_order of every monomial.

    Returns an array ``(n_multi, n_terms, *xi.shape)``.
    """
    multis = [(d - b, b) for d in range(1, max_order + 1) for b in range(d + 1)]
    out = np.zeros((len(multis), len(exps)) + xi.shape)
    for a, (bx, by) in enumerate(multis):
        for t, (p, q) in enumerate(exps):
            if bx > p or by > q:
                continue
            cx = np.prod(np.arange(p - bx + 1, p + 1)) if bx else 1.0
            cy = np.prod(np.arange(q - by + 1, q + 1)) if by else 1.0
            out[a, t] = cx * cy * xi ** (p - bx) * eta ** (q - by)
    return out


@dataclass
class CwenoOperator:
    """Precomputed per-cell reconstruction operators for one mesh and degree."""

    mesh: PolyMesh
    degree: int
    exps: list
    mono_mean: np.ndarray      # (nc, nt) cell means of the raw monomials
    opt: np.ndarray            # (nc, nt, ne-1) least-squares operator
    sec_cells: np.ndarray      # (nc, kmax, 2) sector neighbours (0 where unused)
    sec_op: np.ndarray         # (nc, kmax, 2, 2) linear fit operators
    sec_valid: np.ndarray      # (nc, kmax) int8
    lam0: np.ndarray           # (nc,)
    lam_sec: np.ndarray        # (nc,)
    smat: np.ndarray           # (nc, nt, nt) indicator matrices
    face_basis: np.ndarray     # (nc, kmax, nt) edge means of the basis
    eps: float = EPS_WEIGHTS
    power: int = POWER

    @property
    def nterm(self) -> int:
        return len(self.exps)

    # ------------------------------------------------------------------
    def basis_at(self, cell: int, pts: np.ndarray) -> np.ndarray:
        """Zero-mean basis values ``(..., nt)`` of ``cell`` at absolute points."""
        m = self.mesh
        rel = (pts - m.barycenter[cell]) / m.radius[cell]
        vals = np.stack([rel[..., 0] ** p * rel[..., 1] ** q for p, q in self.exps], axis=-1)
        return vals - self.mono_mean[cell]

    def evaluate(self, cell: int, coeffs: np.ndarray, average: float | np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Value of the polynomial ``average + coeffs . phi`` at points ``pts``.

        ``coeffs`` may carry trailing field dimensions: shape ``(nt, ...)``.
        """
        phi = self.basis_at(cell, pts)
        return np.asarray(average) + np.tensordot(phi, coeffs, axes=([-1], [0]))

    # ------------------------------------------------------------------
    def coefficients(self, F: np.ndarray, frozen: bool = False) -> np.ndarray:
        """Hybrid coefficients ``(nc, nt, K)`` for a field ``(nc, K)``."""
        F2 = np.ascontiguousarray(F, dtype=float)
        out = np.empty((self.mesh.ncell, self.nterm, F2.shape[1]))
        _kernels.cweno_coefficients(F2, self.mesh.stencil, self.opt, self.sec_cells, self.sec_op,
                                    self.sec_valid, self.lam0, self.lam_sec, self.smat,
                                    self.eps, frozen, out)
        return out

    def face_values(self, F: np.ndarray, frozen: bool = False, out: np.ndarray | None = None) -> np.ndarray:
        """Edge-averaged reconstructed values ``(nc, kmax, K)``."""
        F2 = np.ascontiguousarray(F, dtype=float)
        if out is None:
            out = np.empty((self.mesh.ncell, self.mesh.kmax, F2.shape[1]))
        _kernels.cweno_face_values(F2, self.mesh.stencil, self.opt, self.sec_cells, self.sec_op,
                                   self.sec_valid, self.lam0, self.lam_sec, self.smat,
                                   self.face_basis, self.mesh.nvert, self.eps, frozen, out)
        return out

    def point_values(self, F: np.ndarray, frozen: bool = False) -> np.ndarray:
        """Reconstruction at every cell quadrature point, ``(nc, nq, K)``."""
        coeffs = self.coefficients(F, frozen)
        m = self.mesh
        rel = (m.cell_qp - m.barycenter[:, None, :]) / m.radius[:, None, None]
        phi = np.stack([rel[..., 0] ** p * rel[..., 1] ** q for p, q in self.exps], axis=-1)
        phi -= self.mono_mean[:, None, :]
        return F[:, None, :] + np.einsum("iqt,itk->iqk", phi, coeffs)


def build_operator(mesh: PolyMesh, degree: int, lambda_central: float = LAMBDA_CENTRAL,
                   eps: float = EPS_WEIGHTS, power: int = POWER) -> CwenoOperator:
    """Precompute least-squares, sector, indicator and face operators."""
    if degree not in (1, 2, 3):
        raise CwenoError(f"unsupported reconstruction degree {degree}")
    if power != POWER:
        raise CwenoError("only the exponent r = 4 is implemented")
    if not 0.0 < lambda_central < 1.0:
        raise CwenoError("central linear weight must lie in (0, 1)")
    if mesh.quad_degree is None or mesh.quad_degree < 2 * degree:
        compute_quadrature(mesh, max(2 * degree, 2))
    if mesh.stencil_degree != degree:
        build_stencils(mesh, degree)
    exps = exponents(degree)
    nt = len(exps)
    nc, kmax = mesh.ncell, mesh.kmax
    L = mesh.period
    xb, h = mesh.barycenter, mesh.radius

    def raw(cell_pts: np.ndarray, i: int) -> np.ndarray:
        rel = (cell_pts - xb[i]) / h[i]
        return np.stack([rel[..., 0] ** p * rel[..., 1] ** q for p, q in exps], axis=-1)

    qp, qw = mesh.cell_qp, mesh.cell_qw
    mono_mean = np.zeros((nc, nt))
    for i in range(nc):
        mono_mean[i] = qw[i] @ raw(qp[i], i) / mesh.area[i]

    def cell_avg_of_basis(i: int, j: int, shift: np.ndarray) -> np.ndarray:
        pts = qp[j] + shift * L
        return qw[j] @ raw(pts, i) / mesh.area[j] - mono_mean[i]

    ne = mesh.stencil.shape[1]
    opt = np.zeros((nc, nt, ne - 1))
    n_lin = 2
    fallback = 0
    for i in range(nc):
        A = np.array([cell_avg_of_basis(i, mesh.stencil[i, r], mesh.stencil_shift[i, r]) for r in range(1, ne)])
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] > 1e-10 * sv[0]:
            opt[i] = np.linalg.pinv(A)
        else:
            fallback += 1
            opt[i, :n_lin] = np.linalg.pinv(A[:, :n_lin])
    if fallback:
        log.warning("%d cells use a linear central fit (rank-deficient stencil)", fallback)

    sec_cells = np.zeros((nc, kmax, 2), dtype=np.int64)
    sec_op = np.zeros((nc, kmax, 2, 2))
    sec_valid = np.zeros((nc, kmax), dtype=np.int8)
    for i in range(nc):
        for s in range(kmax):
            if mesh.sectors[i, s, 0] < 0:
                continue
            rows = []
            for r in (1, 2):
                rows.append(cell_avg_of_basis(i, mesh.sectors[i, s, r], mesh.sector_shift[i, s, r])[:n_lin])
            B = np.array(rows)
            if abs(np.linalg.det(B)) < 1e-12 * max(1.0, np.abs(B).max() ** 2):
                continue
            sec_op[i, s] = np.linalg.inv(B)
            sec_cells[i, s] = mesh.sectors[i, s, 1:]
            sec_valid[i, s] = 1
    nsec = sec_valid.sum(axis=1)
    lam0 = np.where(nsec > 0, lambda_central, 1.0)
    lam_sec = np.where(nsec > 0, (1.0 - lambda_central) / np.maximum(nsec, 1), 0.0)

    smat = np.zeros((nc, nt, nt))
    for i in range(nc):
        rel = (qp[i] - xb[i]) / h[i]
        der = _derivatives(exps, rel[:, 0], rel[:, 1], degree)   # (nm, nt, nq)
        w = qw[i] / h[i] ** 2
        smat[i] = np.einsum("atq,asq,q->ts", der, der, w)

    face_basis = np.zeros((nc, kmax, nt))
    for i in range(nc):
        for e in range(mesh.nvert[i]):
            vals = raw(mesh.edge_qp[i, e], i) - mono_mean[i]
            face_basis[i, e] = mesh.edge_qw[i, e] @ vals / mesh.edge_length[i, e]

    return CwenoOperator(mesh, degree, exps, mono_mean, opt, sec_cells, sec_op, sec_valid,
                         lam0, lam_sec, smat, face_basis, eps, power)


# ---------------------------------------------------------------------------
# single-cell reference path
# ---------------------------------------------------------------------------

def fit_optimal_polynomial(op: CwenoOperator, cell: int, averages: np.ndarray) -> np.ndarray:
    """Non-constant coefficients of the constrained least-squares fit.

    ``averages`` holds the cell averages of the whole field, indexed by cell.
    """
    st = op.mesh.stencil[cell]
    d = averages[st[1:]] - averages[cell]
    return op.opt[cell] @ d


def fit_linear_polynomials(op: CwenoOperator, cell: int, averages: np.ndarray) -> list[np.ndarray]:
    """Slopes ``(c_x, c_y)`` of every valid sector polynomial of ``cell``."""
    out = []
    for s in np.flatnonzero(op.sec_valid[cell]):
        d = averages[op.sec_cells[cell, s]] - averages[cell]
        out.append(op.sec_op[cell, s] @ d)
    return out


def central_polynomial(p_opt: np.ndarray, sector_polys: list[np.ndarray], lam0: float, lam_s: float) -> np.ndarray:
    """``p0 = (p_opt - sum lam_s p_s) / lam0`` on non-constant coefficients."""
    c = np.array(p_opt, dtype=float)
    for ps in sector_polys:
        c[: len(ps)] -= lam_s * np.asarray(ps)
    return c / lam0


def oscillation_indicator(op: CwenoOperator, cell: int, coeffs: np.ndarray) -> float:
    """Scaled Jiang-Shu indicator: quadratic form of the non-constant coefficients."""
    c = np.asarray(coeffs, dtype=float)
    S = op.smat[cell][: len(c), : len(c)]
    return float(c @ S @ c)


def nonlinear_weights(sigmas: np.ndarray, lams: np.ndarray, eps: float = EPS_WEIGHTS, power: int = POWER) -> np.ndarray:
    """Normalised weights ``lam / (sigma + eps)^power``."""
    s = np.asarray(sigmas, dtype=float)
    wt = np.asarray(lams, dtype=float) / (s + eps) ** power
    return wt / wt.sum()


@dataclass
class ReconstructionPolynomial:
    cell: int
    average: float
    coeffs: np.ndarray
    operator: CwenoOperator

    @property
    def degree(self) -> int:
        return self.operator.degree

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.operator.evaluate(self.cell, self.coeffs, self.average, np.asarray(pts, dtype=float))


def reconstruct(op: CwenoOperator, averages: np.ndarray, cell: int, frozen: bool = False) -> ReconstructionPolynomial:
    """Hybrid CWENO polynomial of ``cell`` for one scalar field."""
    averages = np.asarray(averages, dtype=float)
    p_opt = fit_optimal_polynomial(op, cell, averages)
    secs = fit_linear_polynomials(op, cell, averages)
    lam0, lam_s = float(op.lam0[cell]), float(op.lam_sec[cell])
    p0 = central_polynomial(p_opt, secs, lam0, lam_s)
    lams = np.array([lam0] + [lam_s] * len(secs))
    if frozen:
        w = lams
    else:
        sig = [oscillation_indicator(op, cell, p0)] + [oscillation_indicator(op, cell, ps) for ps in secs]
        w = nonlinear_weights(np.array(sig), lams, op.eps, op.power)
    c = w[0] * p0
    for ws, ps in zip(w[1:], secs):
        c[:2] += ws * ps
    return ReconstructionPolynomial(cell, float(averages[cell]), c, op)
