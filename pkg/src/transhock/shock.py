"""Shock-plane quantities: slope functions, jump remainders, and the shock update.

Traces live on the cross-section grid.  ``v`` stacks the traces of v1..v4 at
y1 = Ls, ``v5`` is the shock displacement, and ``up`` is the supersonic state
(u1, u2, u3, P, rho) sampled at x1 = Ls + v5.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import BackgroundSolution, IterationCoeffs
from .domain import EE, EO, OE, Grid, d_trans, dd_trans
from .errors import DegenerateJ
from .gas import density_from_bernoulli, enthalpy
from .upstream import PerturbationSpec, SupersonicField, sample_upstream

J_FLOOR_FRACTION = 0.5


@dataclass
class ShockTraceData:
    v: np.ndarray          # (4, N2, N3)
    v5: np.ndarray         # (N2, N3)
    up: tuple              # supersonic (u1, u2, u3, P, rho) at Ls + v5
    y2: np.ndarray
    y3: np.ndarray

    @property
    def shape(self):
        return self.v5.shape


def make_trace(v, v5, field: SupersonicField, Ls: float, y2, y3) -> ShockTraceData:
    """Bundle traces with the upstream state sampled on the displaced shock."""
    Y2, Y3 = np.meshgrid(y2, y3, indexing="ij")
    up = sample_upstream(field, Ls + v5, Y2, Y3)
    return ShockTraceData(np.asarray(v, dtype=float), np.asarray(v5, dtype=float), up,
                          np.asarray(y2, float), np.asarray(y3, float))


def density_of_state(v1, v2, v3, v4, x1, Y2, Y3, bg: BackgroundSolution, pert: PerturbationSpec):
    """Density recovered from the Bernoulli perturbation v4 at physical position x1."""
    ub = bg.sub.u(x1)
    q2 = (ub + v1) ** 2 + v2 * v2 + v3 * v3
    Phi = bg.force.Phi(x1) + pert.eps * pert.phi0(x1, Y2, Y3)
    return density_from_bernoulli(bg.B_sub + v4, q2, Phi, bg.gas)


def tilde_thermo(tr: ShockTraceData, bg: BackgroundSolution, pert: PerturbationSpec):
    """Subsonic density and pressure on the shock from the trace values."""
    Y2, Y3 = np.meshgrid(tr.y2, tr.y3, indexing="ij")
    v1, v2, v3, v4 = tr.v
    rho = density_of_state(v1, v2, v3, v4, bg.Ls + tr.v5, Y2, Y3, bg, pert)
    return rho, rho ** bg.gas.gamma


def j_floor(co: IterationCoeffs) -> float:
    return J_FLOOR_FRACTION * co.P_jump ** 2


def eval_J(tr: ShockTraceData, bg: BackgroundSolution, rho_t, P_t, check: bool = True):
    """Determinant J of the tangential jump system and the numerators J2, J3."""
    v1, v2, v3, _ = tr.v
    um1, um2, um3, Pm, rm = tr.up
    U = bg.sub.u(bg.Ls + tr.v5) + v1
    A22 = rho_t * v2 * v2 + P_t - (rm * um2 * um2 + Pm)
    A33 = rho_t * v3 * v3 + P_t - (rm * um3 * um3 + Pm)
    A23 = rho_t * v2 * v3 - rm * um2 * um3
    F2 = rho_t * U * v2 - rm * um1 * um2
    F3 = rho_t * U * v3 - rm * um1 * um3
    J = A22 * A33 - A23 * A23
    J2 = A33 * F2 - F3 * A23
    J3 = A22 * F3 - F2 * A23
    if check:
        floor = j_floor(bg.coeffs)
        if np.any(np.abs(J) < floor):
            k = np.unravel_index(np.argmin(np.abs(J)), J.shape)
            raise DegenerateJ(f"|J| = {abs(J[k]):.3e} below floor {floor:.3e}", where=tuple(int(i) for i in k))
    return J, J2, J3


def eval_g(tr: ShockTraceData, bg: BackgroundSolution, pert: PerturbationSpec, JJ=None):
    """Quadratic remainders g2 = J2/J - a0 v2, g3 = J3/J - a0 v3."""
    if JJ is None:
        JJ = eval_J(tr, bg, *tilde_thermo(tr, bg, pert))
    J, J2, J3 = JJ
    a0 = bg.coeffs.a0
    return J2 / J - a0 * tr.v[1], J3 / J - a0 * tr.v[2]


def eval_R0(tr: ShockTraceData, bg: BackgroundSolution, pert: PerturbationSpec, thermo=None, JJ=None):
    """Nonlinear remainders of the mass, normal momentum and Bernoulli jump relations."""
    co = bg.coeffs
    gas = bg.gas
    if thermo is None:
        thermo = tilde_thermo(tr, bg, pert)
    rt, Pt = thermo
    if JJ is None:
        JJ = eval_J(tr, bg, rt, Pt)
    J, J2, J3 = JJ
    s2, s3 = J2 / J, J3 / J
    v1, v2, v3, _ = tr.v
    v5 = tr.v5
    um1, um2, um3, Pm, rm = tr.up
    xi = co.Ls + v5
    ubp, rbp, Pbp = bg.sub.u(xi), bg.sub.rho(xi), bg.sub.P(xi)
    ubm, rbm, Pbm = bg.sup.u(xi), bg.sup.rho(xi), bg.sup.P(xi)
    uL, rL, c2L = co.u_p, co.rho_p, co.c2_p
    dRf = (co.rho_p - co.rho_m) * bg.force.f(co.Ls)
    U = ubp + v1
    w0 = rt - rbp

    Q1 = s2 * (rt * v2 - rm * um2) + s3 * (rt * v3 - rm * um3)
    R01 = (-(rbp * ubp - rbm * ubm) + Q1 + (rm * um1 - rbm * ubm)
           - (v1 + ubp - uL) * w0 - (rbp - rL) * v1)

    mom_p = rbp * ubp ** 2 + Pbp
    mom_m = rbm * ubm ** 2 + Pbm
    Mp = rt * U * U + Pt
    Q2 = s2 * (rt * U * v2 - rm * um1 * um2) + s3 * (rt * U * v3 - rm * um1 * um3)
    R02 = (-((mom_p - mom_m) - dRf * v5) + (rm * um1 ** 2 + Pm) - mom_m
           - (Mp - mom_p - (uL * uL + c2L) * w0 - 2.0 * rL * uL * v1) + Q2)

    Y2, Y3 = np.meshgrid(tr.y2, tr.y3, indexing="ij")
    R03 = ((ubp - uL) * v1 + 0.5 * (v1 * v1 + v2 * v2 + v3 * v3)
           + enthalpy(rt, gas) - enthalpy(rbp, gas) - (c2L / rL) * w0
           - pert.eps * pert.phi0(xi, Y2, Y3))
    return R01, R02, R03


def eval_R(R0s, co: IterationCoeffs):
    """(R1, R2, R3) from the jump remainders through the background 2x2 inverse at Ls."""
    R01, R02, R03 = R0s
    uL, rL, c2L = co.u_p, co.rho_p, co.c2_p
    den = c2L - uL * uL
    R0 = (-2.0 * uL * R01 + R02) / den
    R1 = ((uL * uL + c2L) * R01 - uL * R02) / (rL * den)
    R2 = uL * R1 + (c2L / rL) * R0 + R03
    R3 = -(co.b2 / co.b1) * R1 + R2
    return R1, R2, R3


def solve_rh_linear(R01, R02, v5, co: IterationCoeffs):
    """Direct pointwise solve of the linearized mass/momentum pair for (w0, w1)."""
    uL, rL, c2L = co.u_p, co.rho_p, co.c2_p
    dRf = (co.rho_p - co.rho_m) * co.force.f(co.Ls)
    A = np.array([[uL, rL], [uL * uL + c2L, 2.0 * rL * uL]])
    rhs = np.stack([np.ravel(R01), np.ravel(-dRf * v5 + R02)])
    w = np.linalg.solve(A, rhs)
    return w[0].reshape(np.shape(R01)), w[1].reshape(np.shape(R01))


def shock_update(v1_trace, R1, co: IterationCoeffs):
    return (np.asarray(v1_trace) - R1) / co.b1


def shock_slope_residual(v5, v, g2, g3, co: IterationCoeffs, h2: float, h3: float):
    """F2 = d2 v5 - a0 v2 - g2 and F3 = d3 v5 - a0 v3 - g3 on the cross-section."""
    F2 = d_trans(v5, h2, 0, EE[0]) - co.a0 * v[1] - g2
    F3 = d_trans(v5, h3, 1, EE[1]) - co.a0 * v[2] - g3
    return F2, F3


@dataclass
class ShockOps:
    """Everything the interior solve needs from the shock plane at the previous iterate."""

    g2: np.ndarray
    g3: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    R6: np.ndarray
    q1: np.ndarray
    J: np.ndarray
    rho_t: np.ndarray
    P_t: np.ndarray


def shock_ops(tr: ShockTraceData, bg: BackgroundSolution, pert: PerturbationSpec, grid: Grid,
              dv2_1, dv3_1) -> ShockOps:
    """Evaluate g, R, the vorticity datum and the shock-plane source.

    ``dv2_1``, ``dv3_1`` are the axial derivatives of v2, v3 at y1 = Ls.
    """
    co = bg.coeffs
    h2, h3 = grid.h2, grid.h3
    thermo = tilde_thermo(tr, bg, pert)
    JJ = eval_J(tr, bg, *thermo)
    g2, g3 = eval_g(tr, bg, pert, JJ)
    R1, R2, R3 = eval_R(eval_R0(tr, bg, pert, thermo, JJ), co)
    gap = grid.L1 - tr.v5 - grid.Ls
    c2 = (grid.Ls - grid.L1) * d_trans(tr.v5, h2, 0, EE[0]) / gap
    c3 = (grid.Ls - grid.L1) * d_trans(tr.v5, h3, 1, EE[1]) / gap
    g4 = c2 * dv3_1 - c3 * dv2_1
    R6 = (d_trans(g2, h3, 1, OE[1]) - d_trans(g3, h2, 0, EO[0])) / co.a0 + g4
    q1 = (co.b1 * (d_trans(g2, h2, 0, OE[0]) + d_trans(g3, h3, 1, EO[1]))
          + dd_trans(R1, h2, 0, EE[0]) + dd_trans(R1, h3, 1, EE[1]))
    return ShockOps(g2, g3, R1, R2, R3, R6, q1, JJ[0], thermo[0], thermo[1])
