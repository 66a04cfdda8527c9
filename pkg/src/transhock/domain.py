"""Fixed box (Ls, L1) x (-1,1)^2, finite differences, and the shock-dependent map.

Arrays on the box have shape (N1, N2, N3); traces on the cross-section have
shape (N2, N3).  Transverse derivatives use ghost nodes by even/odd
reflection across the walls; ``parity`` is a pair (p2, p3) with +1 for even
and -1 for odd.  Odd fields vanish on the corresponding walls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateMap

EVEN = 1
ODD = -1
EE = (EVEN, EVEN)
OE = (ODD, EVEN)   # odd in y2, even in y3 (v2-like)
EO = (EVEN, ODD)   # v3-like
OO = (ODD, ODD)

MAP_FLOOR_FRACTION = 0.5


@dataclass(frozen=True)
class Grid:
    Ls: float
    L1: float
    N1: int
    N2: int
    N3: int

    def __post_init__(self):
        for name in ("N1", "N2", "N3"):
            n = getattr(self, name)
            if n < 9 or n % 2 == 0:
                raise ConfigError(f"{name} must be odd and >= 9, got {n}")
        if not self.L1 > self.Ls:
            raise ConfigError("need L1 > Ls")

    @property
    def shape(self):
        return (self.N1, self.N2, self.N3)

    @property
    def h1(self):
        return (self.L1 - self.Ls) / (self.N1 - 1)

    @property
    def h2(self):
        return 2.0 / (self.N2 - 1)

    @property
    def h3(self):
        return 2.0 / (self.N3 - 1)

    @property
    def y1(self):
        return np.linspace(self.Ls, self.L1, self.N1)

    @property
    def y2(self):
        return np.linspace(-1.0, 1.0, self.N2)

    @property
    def y3(self):
        return np.linspace(-1.0, 1.0, self.N3)

    def mesh(self):
        return np.meshgrid(self.y1, self.y2, self.y3, indexing="ij")

    def trace_mesh(self):
        return np.meshgrid(self.y2, self.y3, indexing="ij")

    def zeros(self):
        return np.zeros(self.shape)

    def trace_zeros(self):
        return np.zeros((self.N2, self.N3))

    def with_sizes(self, N1, N2, N3):
        return Grid(self.Ls, self.L1, N1, N2, N3)


# ---------------------------------------------------------------------------
# one-dimensional stencils applied along an axis


def d_axial(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """First derivative: centered inside, second-order one-sided at both ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def dd_axial(f: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second derivative: centered inside, second-order one-sided (4-point) at the ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def pad_parity(f: np.ndarray, axis: int, parity: int, width: int = 1) -> np.ndarray:
    """Append ``width`` reflected ghost layers on both sides of ``axis``."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    lo = f[width:0:-1] * parity
    hi = f[-2:-2 - width:-1] * parity
    out = np.concatenate([lo, f, hi], axis=0)
    return np.moveaxis(out, 0, axis)


def d_trans(f: np.ndarray, h: float, axis: int, parity: int) -> np.ndarray:
    """Centered first derivative with reflected ghosts."""
    g = np.moveaxis(pad_parity(f, axis, parity), axis, 0)
    out = (g[2:] - g[:-2]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def dd_trans(f: np.ndarray, h: float, axis: int, parity: int) -> np.ndarray:
    g = np.moveaxis(pad_parity(f, axis, parity), axis, 0)
    out = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / (h * h)
    return np.moveaxis(out, 0, axis)


def lagrange4(t):
    """Cubic Lagrange weights for nodes -1, 0, 1, 2 at offset t in [0, 1]."""
    return np.stack([-t * (t - 1) * (t - 2) / 6.0,
                     (t + 1) * (t - 1) * (t - 2) / 2.0,
                     -(t + 1) * t * (t - 2) / 2.0,
                     (t + 1) * t * (t - 1) / 6.0])


def lagrange_stencil(s, n, clamp_end: bool):
    """First index of the 4-point stencil and its weights at fractional index s.

    With ``clamp_end`` the stencil stays inside [0, n-1] (shifted at the ends);
    otherwise it may reach two ghost nodes on either side.
    """
    i0 = np.floor(s).astype(np.int64)
    if clamp_end:
        i0 = np.clip(i0, 1, n - 3)
    else:
        i0 = np.clip(i0, 0, n - 2)
    return i0 - 1, lagrange4(s - i0)


def interp_trace(F: np.ndarray, parity, a, b, h2: float, h3: float) -> np.ndarray:
    """Bicubic interpolation of a cross-section field at points (a, b), parity ghosts at the walls."""
    n2, n3 = F.shape
    G = pad_parity(pad_parity(F, 0, parity[0], 2), 1, parity[1], 2)
    i2, w2 = lagrange_stencil((np.clip(a, -1.0, 1.0) + 1.0) / h2, n2, False)
    i3, w3 = lagrange_stencil((np.clip(b, -1.0, 1.0) + 1.0) / h3, n3, False)
    out = np.zeros(np.shape(a))
    for p in range(4):
        row = w2[p] * 0.0
        for q in range(4):
            row = row + w3[q] * G[i2 + p + 2, i3 + q + 2]
        out = out + w2[p] * row
    return out


# ---------------------------------------------------------------------------
# box-level helpers


def d1(grid: Grid, f: np.ndarray) -> np.ndarray:
    return d_axial(f, grid.h1, 0)


def d2(grid: Grid, f: np.ndarray, parity=EE) -> np.ndarray:
    ax = f.ndim - 2
    return d_trans(f, grid.h2, ax, parity[0])


def d3(grid: Grid, f: np.ndarray, parity=EE) -> np.ndarray:
    ax = f.ndim - 1
    return d_trans(f, grid.h3, ax, parity[1])


def dd2(grid: Grid, f: np.ndarray, parity=EE) -> np.ndarray:
    return dd_trans(f, grid.h2, f.ndim - 2, parity[0])


def dd3(grid: Grid, f: np.ndarray, parity=EE) -> np.ndarray:
    return dd_trans(f, grid.h3, f.ndim - 1, parity[1])


def lap_trans(grid: Grid, f: np.ndarray, parity=EE) -> np.ndarray:
    return dd2(grid, f, parity) + dd3(grid, f, parity)


def flip(parity, axis: int):
    """Parity of the derivative along transverse axis 2 or 3."""
    p = list(parity)
    p[axis - 2] = -p[axis - 2]
    return tuple(p)


# ---------------------------------------------------------------------------
# the shock-dependent coordinate change


def check_map(grid: Grid, v5: np.ndarray) -> np.ndarray:
    gap = grid.L1 - v5 - grid.Ls
    floor = MAP_FLOOR_FRACTION * (grid.L1 - grid.Ls)
    if np.any(gap <= floor):
        j = np.unravel_index(np.argmin(gap), gap.shape)
        raise DegenerateMap(f"L1 - v5 - Ls = {gap[j]:.3e} below floor {floor:.3e}", where=tuple(int(t) for t in j))
    return gap


def transform_map(grid: Grid, v5: np.ndarray, y1=None) -> np.ndarray:
    """Physical x1 = y1 + (L1 - y1)/(L1 - Ls) * v5(y')."""
    check_map(grid, v5)
    y1 = grid.y1 if y1 is None else np.asarray(y1, dtype=float)
    return y1[:, None, None] + ((grid.L1 - y1) / (grid.L1 - grid.Ls))[:, None, None] * v5[None, :, :]


class Transform:
    """The derivative operators D1, D2, D3 for a given shock perturbation v5."""

    def __init__(self, grid: Grid, v5: np.ndarray):
        self.grid = grid
        self.v5 = np.asarray(v5, dtype=float)
        gap = check_map(grid, self.v5)
        self.k = (grid.L1 - grid.Ls) / gap                      # (N2, N3)
        y1 = grid.y1[:, None, None]
        self.dv5_2 = d2(grid, self.v5, EE)
        self.dv5_3 = d3(grid, self.v5, EE)
        self.c2 = (y1 - grid.L1) * self.dv5_2[None] / gap[None]
        self.c3 = (y1 - grid.L1) * self.dv5_3[None] / gap[None]
        self.x1 = transform_map(grid, self.v5)

    def D(self, i: int, f: np.ndarray, parity=EE, df1: np.ndarray | None = None) -> np.ndarray:
        g = self.grid
        f1 = d1(g, f) if df1 is None else df1
        if i == 1:
            return self.k[None] * f1
        if i == 2:
            return d2(g, f, parity) + self.c2 * f1
        if i == 3:
            return d3(g, f, parity) + self.c3 * f1
        raise ValueError(i)


def apply_D(i: int, f: np.ndarray, v5: np.ndarray, grid: Grid, parity=EE) -> np.ndarray:
    return Transform(grid, v5).D(i, f, parity)
