"""Transport along the streamlines of the previous iterate.

On the fixed box the streamline operator D1 + a2 D2 + a3 D3 (a_j = v_j / u1)
equals kappa * (d/dy1 + I2 d/dy2 + I3 d/dy3), so the Bernoulli perturbation
is constant along dy'/dtau = I and the first vorticity component obeys
d(omega)/dtau = (H0 - mu omega) / kappa on the same curves.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import trace_backward, trajectory_offsets
from .background import BackgroundSolution, IterationCoeffs
from .domain import EE, EO, OE, OO, Grid, Transform, interp_trace
from .errors import TrajectoryEscape, VelocityFloor

U_FLOOR_FRACTION = 0.1
CLAMP_TOL = 1e-9


@dataclass
class Advection:
    U: np.ndarray        # axial speed u_bar(x1) + v1
    a2: np.ndarray
    a3: np.ndarray
    kappa: np.ndarray
    I2: np.ndarray
    I3: np.ndarray


def u_floor(bg: BackgroundSolution, grid: Grid) -> float:
    return U_FLOOR_FRACTION * float(np.min(bg.sub.u(grid.y1)))


def build_advection_field(v, T: Transform, bg: BackgroundSolution) -> Advection:
    """Characteristic slopes I2, I3 for the velocity perturbation ``v`` (v1, v2, v3, ...)."""
    grid = T.grid
    U = bg.sub.u(T.x1) + v[0]
    floor = u_floor(bg, grid)
    if np.any(U <= floor):
        k = np.unravel_index(np.argmin(U), U.shape)
        raise VelocityFloor(f"axial speed {U[k]:.4g} at or below floor {floor:.4g}", where=tuple(int(i) for i in k))
    a2 = v[1] / U
    a3 = v[2] / U
    kappa = T.k[None] + a2 * T.c2 + a3 * T.c3
    return Advection(U, a2, a3, kappa, a2 / kappa, a3 / kappa)


class CharacteristicBundle:
    """Backward trajectories from every node to the shock plane, with foot points beta."""

    def __init__(self, pos: np.ndarray, grid: Grid, excursion: float):
        self.pos = pos
        self.grid = grid
        self.excursion = excursion
        n1 = grid.N1
        self.off = trajectory_offsets(n1)
        feet = pos[self.off[1:] - 1]               # last row of each trajectory: off[i] + i
        self.beta2 = feet[..., 0]
        self.beta3 = feet[..., 1]

    def path(self, i: int):
        """Positions (i+1, N2, N3, 2) of the trajectories launched from slice i, from y1_i down to Ls."""
        return self.pos[self.off[i]:self.off[i] + i + 1]

    def compose(self, F: np.ndarray, parity=EE) -> np.ndarray:
        """Trace field F (on the cross-section) evaluated at the foot points."""
        g = self.grid
        return interp_trace(F, parity, self.beta2, self.beta3, g.h2, g.h3)

    def along(self, F: np.ndarray, parity=EE) -> np.ndarray:
        """Box field F sampled at every stored trajectory point (ragged row layout)."""
        g = self.grid
        out = np.empty(self.pos.shape[:-1])
        n1 = g.N1
        for l in range(n1):
            i = np.arange(l, n1)
            rows = self.off[i] + (i - l)
            P = self.pos[rows]
            out[rows] = interp_trace(F[l], parity, P[..., 0], P[..., 1], g.h2, g.h3)
        return out


def trace_characteristics(I2: np.ndarray, I3: np.ndarray, grid: Grid, clamp_tol: float = CLAMP_TOL) -> CharacteristicBundle:
    pos, worst = trace_backward(I2, I3, grid.h1, grid.h2, grid.h3, clamp_tol)
    if worst > clamp_tol:
        raise TrajectoryEscape(f"trajectory left the cross-section by {worst:.3e} (limit {clamp_tol:.1e})")
    return CharacteristicBundle(pos, grid, max(worst, 0.0))


def cumulative_simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Running integral along axis 0: Simpson on pairs, 3/8 rule closing odd counts, trapezoid for one step."""
    n = y.shape[0]
    C = np.zeros_like(y, dtype=float)
    if n < 2:
        return C
    C[1] = 0.5 * h * (y[0] + y[1])
    for k in range(2, n):
        if k % 2 == 0:
            C[k] = C[k - 2] + h / 3.0 * (y[k - 2] + 4.0 * y[k - 1] + y[k])
        else:
            C[k] = C[k - 3] + 3.0 * h / 8.0 * (y[k - 3] + 3.0 * y[k - 2] + 3.0 * y[k - 1] + y[k])
    return C


def bernoulli_remainder(v5: np.ndarray, R1: np.ndarray, R2: np.ndarray, bundle: CharacteristicBundle,
                        co: IterationCoeffs) -> np.ndarray:
    """R4 = b2 (v5(beta) - v5(y')) + R2(beta) - (b2/b1) R1(y').

    With v4 = (b2/b1) v1(Ls, y') + R4 and v1(Ls) = b1 v5 + R1 this makes v4 equal
    to its shock value b2 v5 + R2 at the foot point, i.e. exactly transported.
    For beta = identity it reduces to R3 = R2 - (b2/b1) R1.
    """
    return (co.b2 * (bundle.compose(v5) - v5[None]) + bundle.compose(R2)
            - (co.b2 / co.b1) * R1[None])


def vorticity_coefficients(v, adv: Advection, T: Transform, bg: BackgroundSolution):
    """Damping mu and source H0 of the vorticity transport, both divided by kappa."""
    v1, v2, v3, v4 = v
    U = adv.U
    dub = bg.sub.du(T.x1)
    Dv1 = [T.D(1, v1, EE) + dub, T.D(2, v1, EE), T.D(3, v1, EE)]   # derivatives of U itself
    mu = (T.D(2, v2, OE) - v2 * Dv1[1] / U) / U + (T.D(3, v3, EO) - v3 * Dv1[2] / U) / U
    inv2 = -1.0 / (U * U)
    H0 = inv2 * Dv1[2] * T.D(2, v4, EE) - inv2 * Dv1[1] * T.D(3, v4, EE)
    return mu / adv.kappa, H0 / adv.kappa


def solve_vorticity(R6: np.ndarray, mu_k: np.ndarray, H_k: np.ndarray, bundle: CharacteristicBundle) -> np.ndarray:
    """Integrate d(omega)/dtau + mu_k omega = H_k from the shock datum R6 along every trajectory."""
    g = bundle.grid
    h = g.h1
    M = bundle.along(mu_k, EE)
    H = bundle.along(H_k, OO)
    start = bundle.compose(R6, OO)
    omega = np.empty(g.shape)
    omega[0] = start[0]
    for i in range(1, g.N1):
        rows = slice(bundle.off[i], bundle.off[i] + i + 1)
        A = cumulative_simpson(M[rows], h)       # A[s] = integral of mu_k from y1_{i-s} to y1_i
        E = np.exp(-A)
        omega[i] = start[i] * E[i] + cumulative_simpson(H[rows] * E, h)[i]
    return omega
