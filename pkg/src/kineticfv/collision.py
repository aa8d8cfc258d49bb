"""Collision operators acting on the velocity index of distribution arrays.

* :func:`bgk_operator` -- relaxation towards the local discrete Maxwellian.
* :func:`boltzmann_spectral` -- fast spectral evaluation of the 2D Maxwell
  molecule operator in Carleman form, using a finite set of collision
  directions so the gain term splits into products of filtered fields.
* :func:`boltzmann_direct` -- the same spectral quadrature evaluated pair by
  pair with explicit DFT matrices; an independent O(N^4) reference.

None of the operators includes the 1/epsilon factor.

Conventions
-----------
The velocity box ``[c - L, c + L]^2`` is mapped to ``[-pi, pi)^2`` by
``xi = (v - c)/s`` with ``s = L/pi``.  Collision partners are truncated to
the ball of radius ``R = lam * pi`` with ``lam = 2/(3 + sqrt 2)``.  In these
units the kernel mode weights read

    B(l, m) = Bc * (pi/A) * sum_p psi(l . e_p) * psi(m . e_p^perp),
    psi(s) = 2 sin(R s) / s,

with ``Bc = 2 b0`` and ``e_p`` at angles ``p pi / A``.  The physical
operator is ``s^2`` times the scaled one.  Nyquist modes are removed from
all weights: aliased frequency pairs can then never reach the zero mode,
so mass is conserved to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .velocity import VelocityGrid, maxwellian, moments

LAMBDA = 2.0 / (3.0 + math.sqrt(2.0))
DEFAULT_DIRECTIONS = 8
DEFAULT_B0 = 1.0 / (2.0 * math.pi)
DIRECT_SIZE_LIMIT = 16


class CollisionError(ValueError):
    pass


def bgk_operator(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """BGK relaxation ``rho * (M[f] - f)`` with collision frequency ``rho``."""
    prim = moments(f, grid)
    return prim[..., :1] * (maxwellian(prim, grid) - f)


def _psi(s: np.ndarray, radius: float) -> np.ndarray:
    """Fourier transform of the indicator of [-R, R]: 2 sin(R s)/s."""
    out = np.empty_like(s, dtype=float)
    small = np.abs(s) < 1e-12
    out[small] = 2.0 * radius
    ss = s[~small]
    out[~small] = 2.0 * np.sin(radius * ss) / ss
    return out


def signed_frequencies(n: int) -> np.ndarray:
    """FFT-ordered integer frequencies in ``[-n/2, n/2)``."""
    return np.rint(np.fft.fftfreq(n) * n).astype(int)


@dataclass(frozen=True)
class SpectralKernel:
    """Precomputed mode weights of the spectral collision operator.

    Attributes
    ----------
    n_axis, directions, b0 :
        Grid size per axis, number of collision directions, kernel constant.
    radius :
        Truncation radius ``R = lam * pi`` in scaled units.
    scale :
        Velocity scaling ``s``; physical output is ``s**2`` times the scaled one.
    alpha :
        ``(A, N, N)`` weights ``psi(l . e_p)`` on FFT-ordered frequencies.
    alpha_perp :
        ``(A, N, N)`` weights ``Bc (pi/A) psi(m . e_p^perp)``.
    loss :
        ``(N, N)`` diagonal weights ``sum_p alpha_p(m) alpha_perp_p(m)``.
    partner :
        For direction ``p`` the index ``q`` with ``alpha_perp_p = c * alpha_q``,
        or -1 when no such direction exists (odd A).
    """

    n_axis: int
    directions: int
    b0: float
    radius: float
    scale: float
    half_width: float
    alpha: np.ndarray
    alpha_perp: np.ndarray
    loss: np.ndarray
    partner: np.ndarray
    perp_factor: float

    @property
    def collision_constant(self) -> float:
        return 2.0 * self.b0

    def zero_mode_weight(self) -> float:
        return float(self.loss[0, 0])

    def matches(self, grid: VelocityGrid) -> bool:
        return grid.n_axis == self.n_axis and math.isclose(grid.half_width, self.half_width)


def precompute_kernel(grid: VelocityGrid, directions: int = DEFAULT_DIRECTIONS, b0: float = DEFAULT_B0) -> SpectralKernel:
    """Mode weights for Maxwell molecules on ``directions`` equally spaced angles."""
    if int(directions) != directions or directions < 4:
        raise CollisionError(f"direction count must be an integer >= 4, got {directions}")
    directions = int(directions)
    n = grid.n_axis
    radius = LAMBDA * math.pi
    k = signed_frequencies(n).astype(float)
    l1, l2 = np.meshgrid(k, k, indexing="ij")
    nyq = (l1 == -n // 2) | (l2 == -n // 2)
    theta = np.arange(directions) * math.pi / directions
    alpha = np.empty((directions, n, n))
    alpha_perp = np.empty((directions, n, n))
    bc = 2.0 * b0
    perp_factor = bc * math.pi / directions
    for p, th in enumerate(theta):
        c, s = math.cos(th), math.sin(th)
        alpha[p] = _psi(l1 * c + l2 * s, radius)
        alpha_perp[p] = perp_factor * _psi(-l1 * s + l2 * c, radius)
    alpha[:, nyq] = 0.0
    alpha_perp[:, nyq] = 0.0
    loss = np.sum(alpha * alpha_perp, axis=0)
    partner = -np.ones(directions, dtype=np.int64)
    if directions % 2 == 0:
        half = directions // 2
        partner = (np.arange(directions) + half) % directions
    for arr in (alpha, alpha_perp, loss):
        arr.setflags(write=False)
    return SpectralKernel(
        n_axis=n, directions=directions, b0=float(b0), radius=radius,
        scale=grid.half_width / math.pi, half_width=grid.half_width,
        alpha=alpha, alpha_perp=alpha_perp, loss=loss, partner=partner,
        perp_factor=perp_factor,
    )


def _half(arr: np.ndarray) -> np.ndarray:
    """Restrict full-spectrum weights to the rfft half spectrum."""
    n = arr.shape[-1]
    return np.ascontiguousarray(arr[..., : n // 2 + 1])


class _RealKernel:
    """Half-spectrum copies of the kernel weights."""

    def __init__(self, kernel: SpectralKernel):
        self.alpha = _half(kernel.alpha)
        self.alpha_perp = _half(kernel.alpha_perp)
        self.loss = _half(kernel.loss)

    @classmethod
    def of(cls, kernel: SpectralKernel) -> "_RealKernel":
        # cached on the (frozen) kernel itself so the copy lives and dies with it
        hit = kernel.__dict__.get("_real")
        if hit is None:
            hit = cls(kernel)
            object.__setattr__(kernel, "_real", hit)
        return hit


def boltzmann_spectral(f: np.ndarray, grid: VelocityGrid, kernel: SpectralKernel, chunk: int = 256) -> np.ndarray:
    """Fast spectral collision operator on arrays ``(..., N*N)``.

    The gain term is the sum over directions of products of two filtered
    copies of ``f``; for an even direction count the perpendicular filter of
    direction ``p`` is a multiple of the filter of direction ``p + A/2`` and
    only ``A`` inverse transforms are needed.
    """
    if not kernel.matches(grid):
        raise CollisionError("velocity grid does not match the spectral kernel")
    f = np.asarray(f, dtype=float)
    n = grid.n_axis
    lead = f.shape[:-1]
    flat = f.reshape(-1, n, n)
    out = np.empty_like(flat)
    rk = _RealKernel.of(kernel)
    s2 = kernel.scale ** 2
    A = kernel.directions
    even = A % 2 == 0
    for start in range(0, flat.shape[0], chunk):
        blk = flat[start:start + chunk]
        spec = np.fft.rfft2(blk)
        gain = np.zeros_like(blk)
        if even:
            half = A // 2
            # alpha_perp_p = perp_factor * alpha_{p+A/2}; pairs (p, p+A/2) counted twice
            for p in range(half):
                g1 = np.fft.irfft2(rk.alpha[p] * spec, s=(n, n))
                g2 = np.fft.irfft2(rk.alpha[p + half] * spec, s=(n, n))
                gain += g1 * g2
            gain *= 2.0 * kernel.perp_factor
        else:
            for p in range(A):
                g1 = np.fft.irfft2(rk.alpha[p] * spec, s=(n, n))
                g2 = np.fft.irfft2(rk.alpha_perp[p] * spec, s=(n, n))
                gain += g1 * g2
        lossf = np.fft.irfft2(rk.loss * spec, s=(n, n))
        out[start:start + chunk] = s2 * (gain - blk * lossf)
    return out.reshape(lead + (n * n,))


def boltzmann_direct(f_cell: np.ndarray, grid: VelocityGrid, kernel: SpectralKernel, force: bool = False) -> np.ndarray:
    """Pairwise evaluation of ``Q_k = sum_{l+m=k} beta(l, m) f_l f_m``.

    Uses explicit DFT matrices and the full complex mode weights
    ``beta(l, m) = B(l, m) - B(m, m)``; frequency sums are taken modulo N,
    exactly as a size-N discrete transform does.
    """
    if not kernel.matches(grid):
        raise CollisionError("velocity grid does not match the spectral kernel")
    n = grid.n_axis
    if n > DIRECT_SIZE_LIMIT and not force:
        raise CollisionError(f"direct evaluation refused for N={n} > {DIRECT_SIZE_LIMIT}; pass force=True")
    f2 = np.asarray(f_cell, dtype=float).reshape(n, n)
    j = np.arange(n)
    W = np.exp(-2j * np.pi * np.outer(j, j) / n)
    coef = (W @ f2 @ W.T) / (n * n)                      # c_l, FFT-ordered
    A = kernel.directions
    al = kernel.alpha.reshape(A, -1)
    ap = kernel.alpha_perp.reshape(A, -1)
    gain_w = al.T @ ap                                   # B(l, m), shape (N^2, N^2)
    beta = gain_w - np.diag(gain_w)[None, :]             # subtract B(m, m)
    c = coef.reshape(-1)
    pair = beta * np.outer(c, c)
    idx = np.arange(n)
    l1, l2 = np.meshgrid(idx, idx, indexing="ij")
    l1, l2 = l1.ravel(), l2.ravel()
    k1 = (l1[:, None] + l1[None, :]) % n
    k2 = (l2[:, None] + l2[None, :]) % n
    qhat = np.zeros(n * n, dtype=complex)
    np.add.at(qhat, (k1 * n + k2).ravel(), pair.ravel())
    qhat = qhat.reshape(n, n)
    Winv = np.conj(W)
    q = Winv @ qhat @ Winv.T
    if np.max(np.abs(q.imag)) > 1e-10 * max(1.0, np.max(np.abs(q.real))):
        raise CollisionError("direct evaluation produced a complex residue")
    return kernel.scale ** 2 * q.real.reshape(-1)


def penalization_gap(f: np.ndarray, grid: VelocityGrid, kernel: SpectralKernel) -> np.ndarray:
    """Boltzmann minus BGK collision term, both without the 1/epsilon factor."""
    return boltzmann_spectral(f, grid, kernel) - bgk_operator(f, grid)


def homogeneous_rk4(f0: np.ndarray, grid: VelocityGrid, kernel: SpectralKernel, dt: float, t_final: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta for ``df/dt = Q(f)`` without transport."""
    steps = int(round(t_final / dt))
    if steps < 1 or not math.isclose(steps * dt, t_final, rel_tol=1e-9):
        raise CollisionError("t_final must be a positive multiple of dt")
    f = np.array(f0, dtype=float)

    def rate(g):
        return boltzmann_spectral(g, grid, kernel)

    for _ in range(steps):
        k1 = rate(f)
        k2 = rate(f + 0.5 * dt * k1)
        k3 = rate(f + 0.5 * dt * k2)
        k4 = rate(f + dt * k3)
        f = f + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return f
