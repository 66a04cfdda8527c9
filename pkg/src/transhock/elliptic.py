"""Elliptic subproblems for the subsonic velocity.

* ``solve_pi``: Dirichlet Poisson problem for the auxiliary potential Pi that
  removes the divergence of the curl sources.
* ``solve_divcurl``: divergence-free field with prescribed curl and normal
  conditions, built as the discrete curl of a vector potential.
* ``solve_m1`` / ``solve_potential``: the Neumann problem on the shock plane
  and the nonlocal potential problem, both in the cosine eigenbasis of the
  cross-section.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, eigh, inv, solve_banded

from .background import BackgroundSolution, IterationCoeffs
from .domain import EE, EO, OE, OO, Grid, Transform, d_axial, d_trans
from .errors import DivergenceResidualTooLarge, SingularMode, SolvabilityViolated
from .shock import ShockOps
from .upstream import PerturbationSpec

DIV_TOL = 1e-8
MEAN_RTOL = 1e-6
SM_DENOM_FLOOR = 1e-12

# one-sided first-derivative weights at the y1 faces of the potential problem, by order
ONE_SIDED = {2: np.array([-3.0, 4.0, -1.0]) / 2.0,
             3: np.array([-11.0, 18.0, -9.0, 2.0]) / 6.0}
POTENTIAL_END_ORDER = 3


# ---------------------------------------------------------------------------
# fast diagonalization


class Eig1D:
    """Eigen-decomposition of a 1-D three-point second difference.

    ``kind`` is "dirichlet" (unknowns are the interior nodes) or "neumann"
    (all nodes, mirror ghosts).  The Neumann matrix is symmetrized with the
    trapezoid weights before ``eigh``.  "compatible" is the product of the
    first-derivative stencils used for divergence and gradient, restricted to
    interior nodes, so that div_h(grad_h Pi) is inverted exactly.
    """

    def __init__(self, n_nodes: int, h: float, kind: str, axis_kind: str = "axial"):
        self.kind = kind
        if kind == "compatible":
            I = np.eye(n_nodes)
            if axis_kind == "axial":
                Dg = Dd = d_axial(I, h, 0)
            else:
                Dg, Dd = d_trans(I, h, 0, OO[0]), d_trans(I, h, 0, EE[0])
            T = (Dd @ Dg)[1:-1, 1:-1]
            lam, V = eig(T)
            if np.max(np.abs(lam.imag)) > 1e-9 * np.max(np.abs(lam)):
                raise ValueError("compatible Laplacian has complex spectrum")
            self.fwd = inv(V.real)
            self.inv = V.real
            lam = lam.real
            n = n_nodes - 2
        elif kind == "dirichlet":
            n = n_nodes - 2
            T = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / (h * h)
            lam, V = eigh(T)
            self.fwd = V.T
            self.inv = V
        elif kind == "neumann":
            n = n_nodes
            T = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / (h * h)
            T[0, 1] = T[-1, -2] = 2.0 / (h * h)
            w = np.ones(n)
            w[0] = w[-1] = 0.5
            sw = np.sqrt(w)
            S = sw[:, None] * T / sw[None, :]
            S = 0.5 * (S + S.T)
            lam, V = eigh(S)
            self.fwd = V.T * sw[None, :]
            self.inv = V / sw[:, None]
        else:
            raise ValueError(kind)
        self.T = T
        self.lam = lam
        self.n = n


def _along(M: np.ndarray, X: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(M, np.moveaxis(X, axis, 0), axes=(1, 0)), 0, axis)


def fd_solve(ops: list[Eig1D], b: np.ndarray) -> np.ndarray:
    """Solve (T1 + T2 + T3) x = b by tensor diagonalization."""
    x = b
    for ax, op in enumerate(ops):
        x = _along(op.fwd, x, ax)
    lam = ops[0].lam[:, None, None] + ops[1].lam[None, :, None] + ops[2].lam[None, None, :]
    x = x / lam
    for ax, op in enumerate(ops):
        x = _along(op.inv, x, ax)
    return x


def fd_apply(ops: list[Eig1D], x: np.ndarray) -> np.ndarray:
    return sum(_along(op.T, x, ax) for ax, op in enumerate(ops))


class EllipticCache:
    """One-dimensional decompositions reused across iterations on the same grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        hs = (grid.h1, grid.h2, grid.h3)
        ns = grid.shape
        self.dir = [Eig1D(n, h, "dirichlet") for n, h in zip(ns, hs)]
        self.neu = [Eig1D(n, h, "neumann") for n, h in zip(ns, hs)]
        self.compat = [Eig1D(n, h, "compatible", "axial" if a == 0 else "trans")
                       for a, (n, h) in enumerate(zip(ns, hs))]
        self.basis2 = NeumannBasis(grid.y2)
        self.basis3 = NeumannBasis(grid.y3)

    def potential_ops(self, i: int) -> list[Eig1D]:
        return [self.neu[a] if a == i else self.dir[a] for a in range(3)]


# ---------------------------------------------------------------------------
# discrete gradient, divergence and curl with parity-matched stencils


def div_parity(grid: Grid, F1, F2, F3, p1=OO, p2=EO, p3=OE):
    """D1 F1 + D2 F2 + D3 F3 with the axial one-sided stencil and reflected ghosts."""
    return (d_axial(F1, grid.h1, 0) + d_trans(F2, grid.h2, 1, p2[0]) + d_trans(F3, grid.h3, 2, p3[1]))


def curl_potential(grid: Grid, A1, A2, A3):
    """Discrete curl of a vector potential with A1 ~ OO, A2 ~ EO, A3 ~ OE parities."""
    h1, h2, h3 = grid.h1, grid.h2, grid.h3
    v1 = d_trans(A3, h2, 1, OE[0]) - d_trans(A2, h3, 2, EO[1])
    v2 = d_trans(A1, h3, 2, OO[1]) - d_axial(A3, h1, 0)
    v3 = d_axial(A2, h1, 0) - d_trans(A1, h2, 1, OO[0])
    return v1, v2, v3


def gradient_pi(grid: Grid, Pi):
    return (d_axial(Pi, grid.h1, 0), d_trans(Pi, grid.h2, 1, OO[0]), d_trans(Pi, grid.h3, 2, OO[1]))


def solve_pi(G1, G2, G3, grid: Grid, cache: EllipticCache | None = None) -> np.ndarray:
    """Pi, zero on all faces, with div_h grad_h Pi = div_h G at every interior node.

    Both operators are the parity stencils of ``div_parity`` and ``gradient_pi``,
    so the corrected sources are discretely solenoidal up to rounding.
    """
    cache = cache or EllipticCache(grid)
    rhs = div_parity(grid, G1, G2, G3)[1:-1, 1:-1, 1:-1]
    Pi = np.zeros(grid.shape)
    Pi[1:-1, 1:-1, 1:-1] = fd_solve(cache.compat, rhs)
    return Pi


def correct_sources(G1, G2, G3, Pi, grid: Grid, check: bool = True):
    """G - grad Pi, with the interior discrete divergence checked against DIV_TOL."""
    P1, P2, P3 = gradient_pi(grid, Pi)
    Gt = (G1 - P1, G2 - P2, G3 - P3)
    res = float(np.max(np.abs(div_parity(grid, *Gt)[1:-1, 1:-1, 1:-1]))) if grid.N1 > 2 else 0.0
    if check and res > DIV_TOL:
        raise DivergenceResidualTooLarge(f"discrete divergence of corrected sources {res:.3e} > {DIV_TOL:.0e}")
    return Gt, res


def solve_divcurl(Gt1, Gt2, Gt3, grid: Grid, cache: EllipticCache | None = None):
    """Divergence-free field with curl close to Gt, v1 = 0 on the end planes, normal components 0 on walls.

    Each potential component solves -Lap A_i = Gt_i, Dirichlet on faces normal to
    the other two axes and Neumann on faces normal to axis i.  The velocity is
    the discrete curl of A, so its discrete divergence vanishes identically.
    """
    cache = cache or EllipticCache(grid)
    A = []
    for i, G in enumerate((Gt1, Gt2, Gt3)):
        ops = cache.potential_ops(i)
        sl = tuple(slice(None) if a == i else slice(1, -1) for a in range(3))
        Ai = np.zeros(grid.shape)
        Ai[sl] = fd_solve(ops, -G[sl])
        A.append(Ai)
    return curl_potential(grid, *A)


# ---------------------------------------------------------------------------
# Neumann eigenbasis of the cross-section


class NeumannBasis:
    """Modes cos(k pi (y+1)/2), k = 0..M, orthonormal in L2(-1, 1).

    Even k are +-cos(k pi y / 2) and odd k are +-sin(k pi y / 2), so this is the
    constant / cosine / half-integer sine family.  Sampling uses trapezoid weights,
    under which the sampled modes are exactly orthonormal for M < N - 1.
    """

    def __init__(self, y: np.ndarray, M: int | None = None):
        y = np.asarray(y, dtype=float)
        N = y.size
        self.y = y
        self.h = y[1] - y[0]
        self.M = (N - 1) // 2 if M is None else int(M)
        k = np.arange(self.M + 1)
        self.k = k
        self.tau = k * math.pi / 2.0
        norm = np.where(k == 0, 1.0 / math.sqrt(2.0), 1.0)
        arg = np.outer(k, (y + 1.0)) * math.pi / 2.0
        self.B = norm[:, None] * np.cos(arg)                          # (M+1, N)
        self.dB = -(norm * self.tau)[:, None] * np.sin(arg)
        w = np.full(N, self.h)
        w[0] = w[-1] = 0.5 * self.h
        self.w = w

    @property
    def eigenvalues(self):
        return self.tau ** 2

    def gram(self) -> np.ndarray:
        return (self.B * self.w) @ self.B.T

    def coeffs(self, f: np.ndarray, axis: int) -> np.ndarray:
        return _along(self.B * self.w, f, axis)

    def synth(self, c: np.ndarray, axis: int, deriv: bool = False) -> np.ndarray:
        return _along((self.dB if deriv else self.B).T, c, axis)


def trace_coeffs(f, b2: NeumannBasis, b3: NeumannBasis):
    """Cross-section field (..., N2, N3) -> mode coefficients (..., M2+1, M3+1)."""
    nd = f.ndim
    return b3.coeffs(b2.coeffs(f, nd - 2), nd - 1)


def trace_synth(c, b2: NeumannBasis, b3: NeumannBasis, d2: bool = False, d3: bool = False):
    nd = c.ndim
    return b3.synth(b2.synth(c, nd - 2, d2), nd - 1, d3)


def solve_m1(q5: np.ndarray, b2: NeumannBasis, b3: NeumannBasis, scale: float = 1.0, mean_rtol: float = MEAN_RTOL):
    """Zero-mean Neumann solution of Lap' m1 = scale * q5; returns (m1, coefficients, mean residual)."""
    c = trace_coeffs(scale * q5, b2, b3)
    area_mean = c[0, 0] * b2.B[0, 0] * b3.B[0, 0]
    ref = float(np.max(np.abs(scale * q5)))
    if abs(area_mean) > mean_rtol * max(ref, 1e-300) and ref > 0.0:
        raise SolvabilityViolated(f"mean of Neumann data {area_mean:.3e} exceeds {mean_rtol:.0e} x max {ref:.3e}")
    lam = b2.eigenvalues[:, None] + b3.eigenvalues[None, :]
    lam[0, 0] = 1.0
    m = -c / lam
    m[0, 0] = 0.0
    return trace_synth(m, b2, b3), m, area_mean


# ---------------------------------------------------------------------------
# per-mode nonlocal two-point problem


@dataclass
class ModeBVPSpec:
    y1: np.ndarray
    d1_half: np.ndarray      # d1 at the N1-1 half nodes
    d6: np.ndarray
    d5: np.ndarray
    lam: float
    nonlocal_weight: float   # a0 * b1
    b4: float
    m1: float
    m2: float
    G5: np.ndarray
    end_order: int = 2


def mode_matrix_dense(spec: ModeBVPSpec) -> np.ndarray:
    """Full matrix of the discrete mode problem (used for checks and as fallback)."""
    n = spec.y1.size
    h = spec.y1[1] - spec.y1[0]
    w = ONE_SIDED[spec.end_order] / h
    m = w.size
    A = np.zeros((n, n))
    A[0, :m] = w
    A[0, 0] -= spec.b4
    A[-1, n - m:] = -w[::-1]
    for i in range(1, n - 1):
        dm, dp = spec.d1_half[i - 1], spec.d1_half[i]
        A[i, i - 1] = dm / h ** 2 - spec.d6[i] / (2 * h)
        A[i, i] = -(dm + dp) / h ** 2 - spec.lam
        A[i, i + 1] = dp / h ** 2 + spec.d6[i] / (2 * h)
        A[i, 0] += spec.nonlocal_weight * spec.d5[i]
    return A


def mode_rhs(spec: ModeBVPSpec) -> np.ndarray:
    b = np.array(spec.G5, dtype=float).copy()
    b[0] = spec.m1
    b[-1] = spec.m2
    return b


def mode_bvp(spec: ModeBVPSpec, where=None) -> np.ndarray:
    """Banded solve with the nonlocal trace column folded in by Sherman-Morrison."""
    n = spec.y1.size
    h = spec.y1[1] - spec.y1[0]
    b = mode_rhs(spec)
    w = ONE_SIDED[spec.end_order] / h
    m = w.size
    bw = m - 1                     # lower = upper bandwidth
    ab = np.zeros((2 * bw + 1, n))

    def put(i, j, val):
        ab[bw + i - j, j] += val

    for j in range(m):
        put(0, j, w[j])
        put(n - 1, n - 1 - j, -w[j])
    put(0, 0, -spec.b4)
    i = np.arange(1, n - 1)
    dm, dp = spec.d1_half[i - 1], spec.d1_half[i]
    ab[bw + 1, i - 1] += dm / h ** 2 - spec.d6[i] / (2 * h)
    ab[bw, i] += -(dm + dp) / h ** 2 - spec.lam
    ab[bw - 1, i + 1] += dp / h ** 2 + spec.d6[i] / (2 * h)
    u = np.zeros(n)
    w = spec.nonlocal_weight * spec.d5
    u[1:n - 1] = w[1:n - 1]
    # the first rows reach column 0 inside the band
    for r in range(1, bw + 1):
        if r < n - 1:
            put(r, 0, u[r])
            u[r] = 0.0
    try:
        z = solve_banded((bw, bw), ab, np.stack([b, u], axis=1))
    except np.linalg.LinAlgError:
        z = None
    if z is not None and np.all(np.isfinite(z)):
        den = 1.0 + z[0, 1]
        if abs(den) >= SM_DENOM_FLOOR:
            return z[:, 0] - z[:, 1] * (z[0, 0] / den)
    A = mode_matrix_dense(spec)
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise SingularMode("mode system is singular", where=where) from e
    if not np.all(np.isfinite(x)):
        raise SingularMode("mode system produced non-finite values", where=where)
    return x


def solve_potential(G5: np.ndarray, m1c: np.ndarray, m2: np.ndarray, co: IterationCoeffs, grid: Grid,
                    cache: EllipticCache):
    """phi on the box from the modal decomposition; returns (phi, d1 phi, d2 phi, d3 phi)."""
    b2, b3 = cache.basis2, cache.basis3
    y1 = grid.y1
    h = grid.h1
    Gc = trace_coeffs(G5, b2, b3)                        # (N1, M2+1, M3+1)
    m2c = trace_coeffs(m2, b2, b3)
    d1_half = co.d1(0.5 * (y1[1:] + y1[:-1]))
    d6 = co.d6(y1)
    d5 = co.d5(y1)
    X = np.zeros_like(Gc)
    for i in range(b2.M + 1):
        for j in range(b3.M + 1):
            spec = ModeBVPSpec(y1, d1_half, d6, d5, float(b2.eigenvalues[i] + b3.eigenvalues[j]),
                               co.a0 * co.b1, co.b4, float(m1c[i, j]), float(m2c[i, j]), Gc[:, i, j],
                               POTENTIAL_END_ORDER)
            X[:, i, j] = mode_bvp(spec, where=(i, j))
    phi = trace_synth(X, b2, b3)
    p1 = d_axial_ends(phi, h, POTENTIAL_END_ORDER)
    p2 = trace_synth(X, b2, b3, d2=True)
    p3 = trace_synth(X, b2, b3, d3=True)
    return phi, p1, p2, p3


def d_axial_ends(f: np.ndarray, h: float, order: int) -> np.ndarray:
    """Axial derivative, centered inside, one-sided of the given order on the two end planes."""
    out = d_axial(f, h, 0)
    w = ONE_SIDED[order] / h
    m = w.size
    out[0] = np.tensordot(w, f[:m], axes=(0, 0))
    out[-1] = -np.tensordot(w, f[::-1][:m], axes=(0, 0))
    return out


def reconstruct_velocity(vt, dphi, co: IterationCoeffs, grid: Grid):
    """v1 = vt1 + d1 phi + d4/b3 d1 phi(Ls), v2 = vt2 + d2 phi, v3 = vt3 + d3 phi."""
    p1, p2, p3 = dphi
    d4 = co.d4(grid.y1)[:, None, None]
    v1 = vt[0] + p1 + d4 / co.b3 * p1[0][None]
    return v1, vt[1] + p2, vt[2] + p3


# ---------------------------------------------------------------------------
# source assembly


@dataclass
class SourceBundle:
    G0: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    q1: np.ndarray
    q4: np.ndarray


def exit_data(bg: BackgroundSolution, pert: PerturbationSpec, Y2, Y3):
    """-eps Pex/(rho u)(L1) - E/u(L1), the data part of the exit condition."""
    gas = bg.gas
    L1 = bg.L1
    Pe = bg.Pe
    rhoL, uL = bg.sub.rho(L1), bg.sub.u(L1)
    dP = pert.eps * pert.pex(Y2, Y3)
    hP = lambda P: gas.enthalpy_factor * P ** ((gas.gamma - 1.0) / gas.gamma)
    E = hP(Pe + dP) - hP(Pe) - dP / rhoL - pert.eps * pert.phi0(L1, Y2, Y3)
    return -dP / (rhoL * uL) - E / uL


def continuity_defect(v, T: Transform, bg: BackgroundSolution, pert: PerturbationSpec):
    """Nonlinear continuity expression in physical derivatives; vanishes on exact solutions."""
    g = bg.gas.gamma
    v1, v2, v3, v4 = v
    X1 = T.x1
    grid = T.grid
    Y1, Y2, Y3 = grid.mesh()
    ub = bg.sub.u(X1)
    dub = bg.sub.du(X1)
    c2b = bg.sub.c2(X1)
    u1 = ub + v1
    eps = pert.eps
    Phi0 = pert.phi0(X1, Y2, Y3)
    P1, P2, P3 = pert.grad_phi0(X1, Y2, Y3)
    c2 = c2b + (g - 1.0) * (v4 + eps * Phi0 - ub * v1 - 0.5 * v1 * v1 - 0.5 * (v2 * v2 + v3 * v3))
    D = T.D
    D1v1, D2v1, D3v1 = D(1, v1, EE), D(2, v1, EE), D(3, v1, EE)
    D1v2, D2v2, D3v2 = D(1, v2, OE), D(2, v2, OE), D(3, v2, OE)
    D1v3, D2v3, D3v3 = D(1, v3, EO), D(2, v3, EO), D(3, v3, EO)
    f = bg.force.f(X1)
    E = ((c2 - u1 * u1) * (dub + D1v1) + (c2 - v2 * v2) * D2v2 + (c2 - v3 * v3) * D3v3
         - u1 * (v2 * D1v2 + v3 * D1v3 - f - eps * P1)
         - v2 * (u1 * D2v1 + v3 * D2v3 - eps * P2)
         - v3 * (u1 * D3v1 + v2 * D3v2 - eps * P3))
    return E, c2b


def assemble_sources(v, v5, omega, R4, ops: ShockOps, T: Transform, bg: BackgroundSolution,
                     pert: PerturbationSpec) -> SourceBundle:
    """Right sides of the divergence and curl equations and the shock/exit boundary data."""
    co = bg.coeffs
    grid = T.grid
    h1, h2, h3 = grid.h1, grid.h2, grid.h3
    y1 = grid.y1
    v1, v2, v3, v4 = v
    U = bg.sub.u(T.x1) + v1
    ubar = co.ubar(y1)[:, None, None]
    d1c, d2c, d3c = (co.d1(y1)[:, None, None], co.d2(y1)[:, None, None], co.d3(y1)[:, None, None])

    p1 = lambda f: d_axial(f, h1, 0)
    p2 = lambda f, par: d_trans(f, h2, 1, par[0])
    p3 = lambda f, par: d_trans(f, h3, 2, par[1])
    D = T.D

    E, c2b = continuity_defect(v, T, bg, pert)
    G0cal = d1c * p1(v1) + p2(v2, OE) + p3(v3, EO) + d2c * v1 + d3c * v4 - E / c2b
    G0 = G0cal - d3c * R4

    H1 = (p2(v3, EO) - p3(v2, OE)) - (D(2, v3, EO) - D(3, v2, OE))
    G1 = omega + H1
    H2 = (p3(v1, EE) - p1(v3) - p3(v4, EE) / ubar) - (D(3, v1, EE) - D(1, v3, EO) - D(3, v4, EE) / U)
    H3 = (p1(v2) - p2(v1, EE) + p2(v4, EE) / ubar) - (D(1, v2, OE) - D(2, v1, EE) + D(2, v4, EE) / U)
    G2 = v2 * omega / U + H2 + p3(R4, EE) / ubar
    G3 = v3 * omega / U + H3 - p2(R4, EE) / ubar

    Y2, Y3 = grid.trace_mesh()
    uL1 = co.ubar(grid.L1)
    q4 = (R4[-1] / uL1 + exit_data(bg, pert, Y2, Y3)
          - (v1[-1] ** 2 + v2[-1] ** 2 + v3[-1] ** 2) / (2.0 * uL1))
    return SourceBundle(G0, G1, G2, G3, ops.q1, q4)


def shock_plane_source(q1, vt, co: IterationCoeffs, grid: Grid):
    """q5 = q1 + a0 b1 (d2 vt2 + d3 vt3) at Ls."""
    return q1 + co.a0 * co.b1 * (d_trans(vt[1][0], grid.h2, 0, OE[0]) + d_trans(vt[2][0], grid.h3, 1, EO[1]))


def potential_source(src: SourceBundle, vt, m1, co: IterationCoeffs, grid: Grid):
    """G5 = G0 + Mbar^2 d1 vt1 - d2 vt1 - (b2/b1) d3 vt1(Ls) - d5 m1 / b3."""
    y1 = grid.y1
    d1c = co.d1(y1)[:, None, None]
    G4 = (src.G0 + (1.0 - d1c) * d_axial(vt[0], grid.h1, 0) - co.d2(y1)[:, None, None] * vt[0]
          - (co.b2 / co.b1) * co.d3(y1)[:, None, None] * vt[0][0][None])
    return G4 - co.d5(y1)[:, None, None] * m1[None] / co.b3
