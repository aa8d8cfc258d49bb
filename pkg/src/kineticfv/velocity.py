"""Discrete velocity model: Cartesian velocity nodes, moments and Maxwellians.

Distribution arrays keep the velocity index last, flattened row-major from
the ``(N_axis, N_axis)`` grid with the first axis along v_x.  All moment and
Maxwellian routines accept any number of leading (cell) dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VACUUM_DENSITY = 1e-14


class VelocityGridError(ValueError):
    pass


@dataclass(frozen=True)
class MacroState:
    """Density, bulk velocity and temperature (gas constant set to one)."""

    rho: float
    ux: float
    uy: float
    theta: float

    @property
    def u(self) -> np.ndarray:
        return np.array([self.ux, self.uy])

    @property
    def pressure(self) -> float:
        return self.rho * self.theta

    @property
    def energy(self) -> float:
        return self.rho * self.theta + 0.5 * self.rho * (self.ux ** 2 + self.uy ** 2)

    @classmethod
    def from_pressure(cls, rho: float, ux: float, uy: float, p: float) -> "MacroState":
        return cls(rho, ux, uy, p / rho)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform square grid of cell-centred velocity nodes."""

    vmin: float
    vmax: float
    n_axis: int

    def __post_init__(self):
        if not self.vmax > self.vmin:
            raise VelocityGridError("velocity bounds must satisfy vmax > vmin")
        if self.n_axis < 4 or self.n_axis % 2:
            raise VelocityGridError("nodes per axis must be even and at least 4")

    @property
    def dv(self) -> float:
        return (self.vmax - self.vmin) / self.n_axis

    @property
    def weight(self) -> float:
        return self.dv ** 2

    @property
    def size(self) -> int:
        return self.n_axis ** 2

    @property
    def axis(self) -> np.ndarray:
        return self.vmin + (np.arange(self.n_axis) + 0.5) * self.dv

    @property
    def vx(self) -> np.ndarray:
        return np.repeat(self.axis, self.n_axis)

    @property
    def vy(self) -> np.ndarray:
        return np.tile(self.axis, self.n_axis)

    @property
    def nodes(self) -> np.ndarray:
        return np.column_stack([self.vx, self.vy])

    @property
    def half_width(self) -> float:
        return 0.5 * (self.vmax - self.vmin)

    @property
    def centre(self) -> float:
        return 0.5 * (self.vmax + self.vmin)


def build_grid(vmin: float, vmax: float, n_axis: int) -> VelocityGrid:
    return VelocityGrid(float(vmin), float(vmax), int(n_axis))


def max_speed(grid: VelocityGrid) -> float:
    """Largest Euclidean node speed."""
    return float(np.max(np.hypot(grid.vx, grid.vy)))


def conserved_moments(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Mass, momentum and energy densities, shape ``f.shape[:-1] + (4,)``."""
    w = grid.weight
    vx, vy = grid.vx, grid.vy
    basis = np.stack([np.ones_like(vx), vx, vy, 0.5 * (vx * vx + vy * vy)])
    return w * (f @ basis.T)


def moments(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Primitive moments ``(rho, ux, uy, theta)`` with the two-pass temperature.

    Cells with density below the vacuum threshold return all zeros.
    """
    f = np.asarray(f, dtype=float)
    w = grid.weight
    vx, vy = grid.vx, grid.vy
    rho = w * f.sum(axis=-1)
    vac = rho < VACUUM_DENSITY
    safe = np.where(vac, 1.0, rho)
    ux = w * (f @ vx) / safe
    uy = w * (f @ vy) / safe
    cx = vx - ux[..., None]
    cy = vy - uy[..., None]
    theta = w * np.sum((cx * cx + cy * cy) * f, axis=-1) / (2.0 * safe)
    out = np.stack([rho, ux, uy, theta], axis=-1)
    return np.where(vac[..., None], 0.0, out)


def macro_state(f_cell: np.ndarray, grid: VelocityGrid) -> MacroState:
    """Moments of a single cell as a :class:`MacroState`."""
    r, ux, uy, th = moments(np.asarray(f_cell), grid)
    return MacroState(float(r), float(ux), float(uy), float(th))


def maxwellian(prim: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Discrete Maxwellian of primitive states ``(..., 4)``.

    Vacuum states (density zero) give zero; zero temperature with positive
    density is singular and raises.
    """
    prim = np.asarray(prim, dtype=float)
    rho, ux, uy, th = (prim[..., i] for i in range(4))
    vac = rho < VACUUM_DENSITY
    if np.any(~vac & ~(th > 0)):
        raise VelocityGridError("Maxwellian of a state with positive density and non-positive temperature")
    th_safe = np.where(vac, 1.0, th)
    # the Gaussian factorises over the two axes: 2N exponentials instead of N^2
    ax = grid.axis
    inv = 1.0 / (2.0 * th_safe[..., None])
    gx = np.exp(-((ax - ux[..., None]) ** 2) * inv)
    gy = np.exp(-((ax - uy[..., None]) ** 2) * inv)
    pref = np.where(vac, 0.0, rho) / (2.0 * np.pi * th_safe)
    out = (pref[..., None] * gx)[..., :, None] * gy[..., None, :]
    return out.reshape(prim.shape[:-1] + (grid.size,))


def discrete_maxwellian(state: MacroState, grid: VelocityGrid) -> np.ndarray:
    return maxwellian(np.array([state.rho, state.ux, state.uy, state.theta]), grid)


def support_fits(state_max_speed: float, theta_max: float, grid: VelocityGrid) -> bool:
    """True when ``|u| + 5 sqrt(theta)`` lies inside the velocity box."""
    return state_max_speed + 5.0 * np.sqrt(theta_max) <= grid.half_width
