"""Compiled inner loops for reconstruction and flux assembly.

The velocity index is always the innermost, contiguous dimension, so every
per-node loop is a simple vectorisable sweep.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, error_model="numpy")
def _hybrid_coefficients(i, F, stencil, opt, sec_cells, sec_op, sec_valid,
                         lam0, lam_sec, smat, eps, frozen, d, cs, c0, cw):
    """Fill ``cw[:nt, :K]`` with the CWENO coefficients of cell ``i``."""
    K = F.shape[1]
    ne1 = stencil.shape[1] - 1
    nt = opt.shape[1]
    kmax = sec_cells.shape[1]
    fi = F[i]
    for j in range(ne1):
        row = F[stencil[i, j + 1]]
        for k in range(K):
            d[j, k] = row[k] - fi[k]
    for t in range(nt):
        for k in range(K):
            c0[t, k] = 0.0
        for j in range(ne1):
            a = opt[i, t, j]
            if a != 0.0:
                for k in range(K):
                    c0[t, k] += a * d[j, k]
    ls = lam_sec[i]
    l0 = lam0[i]
    nsec = 0
    for s in range(kmax):
        if sec_valid[i, s] == 0:
            continue
        ra = F[sec_cells[i, s, 0]]
        rb = F[sec_cells[i, s, 1]]
        m00 = sec_op[i, s, 0, 0]
        m01 = sec_op[i, s, 0, 1]
        m10 = sec_op[i, s, 1, 0]
        m11 = sec_op[i, s, 1, 1]
        for k in range(K):
            da = ra[k] - fi[k]
            db = rb[k] - fi[k]
            sx = m00 * da + m01 * db
            sy = m10 * da + m11 * db
            cs[nsec, 0, k] = sx
            cs[nsec, 1, k] = sy
            c0[0, k] -= ls * sx
            c0[1, k] -= ls * sy
        nsec += 1
    inv0 = 1.0 / l0
    for t in range(nt):
        for k in range(K):
            c0[t, k] *= inv0
    if nsec == 0 or frozen:
        w0 = l0
        for t in range(nt):
            for k in range(K):
                cw[t, k] = w0 * c0[t, k]
        for s in range(nsec):
            for k in range(K):
                cw[0, k] += ls * cs[s, 0, k]
                cw[1, k] += ls * cs[s, 1, k]
        return
    s00 = smat[i, 0, 0]
    s01 = 2.0 * smat[i, 0, 1]
    s11 = smat[i, 1, 1]
    sig = np.zeros(K)
    for a in range(nt):
        for b in range(a, nt):
            sab = smat[i, a, b] if a == b else 2.0 * smat[i, a, b]
            if sab == 0.0:
                continue
            ca = c0[a]
            cb = c0[b]
            for k in range(K):
                sig[k] += sab * ca[k] * cb[k]
    w0 = np.empty(K)
    tot = np.empty(K)
    for k in range(K):
        t0 = sig[k] + eps
        t0 *= t0
        w0[k] = l0 / (t0 * t0)
        tot[k] = w0[k]
    for s in range(nsec):
        csx = cs[s, 0]
        csy = cs[s, 1]
        for k in range(K):
            sx = csx[k]
            sy = csy[k]
            ts = s00 * sx * sx + s01 * sx * sy + s11 * sy * sy + eps
            ts *= ts
            ws = ls / (ts * ts)
            csx[k] = ws * sx
            csy[k] = ws * sy
            tot[k] += ws
    for k in range(K):
        tot[k] = 1.0 / tot[k]
        w0[k] *= tot[k]
    for t in range(nt):
        for k in range(K):
            cw[t, k] = w0[k] * c0[t, k]
    for s in range(nsec):
        for k in range(K):
            cw[0, k] += cs[s, 0, k] * tot[k]
            cw[1, k] += cs[s, 1, k] * tot[k]


@njit(cache=True, error_model="numpy")
def cweno_coefficients(F, stencil, opt, sec_cells, sec_op, sec_valid, lam0, lam_sec,
                       smat, eps, frozen, out):
    nc, K = F.shape
    ne1 = stencil.shape[1] - 1
    nt = opt.shape[1]
    kmax = sec_cells.shape[1]
    d = np.empty((ne1, K))
    cs = np.empty((kmax, 2, K))
    c0 = np.empty((nt, K))
    for i in range(nc):
        _hybrid_coefficients(i, F, stencil, opt, sec_cells, sec_op, sec_valid,
                             lam0, lam_sec, smat, eps, frozen, d, cs, c0, out[i])


@njit(cache=True, error_model="numpy")
def cweno_face_values(F, stencil, opt, sec_cells, sec_op, sec_valid, lam0, lam_sec,
                      smat, face_basis, nvert, eps, frozen, out):
    nc, K = F.shape
    ne1 = stencil.shape[1] - 1
    nt = opt.shape[1]
    kmax = sec_cells.shape[1]
    d = np.empty((ne1, K))
    cs = np.empty((kmax, 2, K))
    c0 = np.empty((nt, K))
    cw = np.empty((nt, K))
    for i in range(nc):
        _hybrid_coefficients(i, F, stencil, opt, sec_cells, sec_op, sec_valid,
                             lam0, lam_sec, smat, eps, frozen, d, cs, c0, cw)
        fi = F[i]
        for e in range(nvert[i]):
            o = out[i, e]
            for k in range(K):
                o[k] = fi[k]
            for t in range(nt):
                b = face_basis[i, e, t]
                for k in range(K):
                    o[k] += b * cw[t, k]


@njit(cache=True, error_model="numpy")
def upwind_divergence(fv, ghost, face_cells, face_edges, face_normal, face_length,
                      face_ghost, area, vx, vy, out):
    """Accumulate ``(1/|P|) sum |e| (v.n) f_upwind`` over all faces.

    ``face_ghost[f]`` is the row of ``ghost`` holding the exterior value of a
    boundary face, -1 for interior faces.
    """
    nf = face_cells.shape[0]
    K = vx.shape[0]
    out[:] = 0.0
    vn = np.empty(K)
    for f in range(nf):
        o = face_cells[f, 0]
        nb = face_cells[f, 1]
        nx = face_normal[f, 0]
        ny = face_normal[f, 1]
        ln = face_length[f]
        for k in range(K):
            vn[k] = vx[k] * nx + vy[k] * ny
        fl = fv[o, face_edges[f, 0]]
        g = face_ghost[f]
        if g >= 0:
            fr = ghost[g]
        else:
            fr = fv[nb, face_edges[f, 1]]
        ro = out[o]
        so = ln / area[o]
        if g >= 0:
            for k in range(K):
                v = vn[k]
                flux = v * fl[k] if v > 0.0 else v * fr[k]
                ro[k] += so * flux
        else:
            rn = out[nb]
            sn = ln / area[nb]
            for k in range(K):
                v = vn[k]
                flux = v * fl[k] if v > 0.0 else v * fr[k]
                ro[k] += so * flux
                rn[k] -= sn * flux
