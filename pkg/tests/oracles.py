"""Manufactured solutions and dense reference solvers shared by the unit and acceptance tests."""
import dataclasses
import math

import numpy as np

from transhock.domain import Grid
from transhock.elliptic import (EllipticCache, ModeBVPSpec, div_parity, fd_solve, mode_bvp, mode_matrix_dense,
                                mode_rhs, solve_divcurl, solve_pi)
from transhock.verification import ManufacturedField


def kron_sum(ops):
    """Dense matrix of T1 + T2 + T3 acting on row-major (n1, n2, n3) arrays."""
    T = [op.T for op in ops]
    I = [np.eye(t.shape[0]) for t in T]
    return (np.kron(np.kron(T[0], I[1]), I[2]) + np.kron(np.kron(I[0], T[1]), I[2])
            + np.kron(np.kron(I[0], I[1]), T[2]))


def dense_fd_gap(ops, rng):
    """Largest difference between fast diagonalization and a dense solve on random data."""
    shape = tuple(op.n for op in ops)
    b = rng.standard_normal(shape)
    x_fd = fd_solve(ops, b)
    x_dense = np.linalg.solve(kron_sum(ops), b.ravel()).reshape(shape)
    return float(np.max(np.abs(x_fd - x_dense)))


def poisson_error(Ls, L1, shape):
    """Pi = sin(s) sin(pi y2) sin(pi y3) recovered from its exact gradient."""
    g = Grid(Ls, L1, *shape)
    Y1, Y2, Y3 = g.mesh()
    a = math.pi / (g.L1 - g.Ls)
    s = a * (Y1 - g.Ls)
    exact = np.sin(s) * np.sin(math.pi * Y2) * np.sin(math.pi * Y3)
    G1 = a * np.cos(s) * np.sin(math.pi * Y2) * np.sin(math.pi * Y3)
    G2 = math.pi * np.sin(s) * np.cos(math.pi * Y2) * np.sin(math.pi * Y3)
    G3 = math.pi * np.sin(s) * np.sin(math.pi * Y2) * np.cos(math.pi * Y3)
    Pi = solve_pi(G1, G2, G3, g, EllipticCache(g))
    return float(np.max(np.abs(Pi - exact)))


def divcurl_error(Ls, L1, shape):
    """v = curl(0, 0, psi) with psi = sin(s) sin(pi y2), recovered from its curl.

    Returns (max velocity error, max interior divergence of the result).
    """
    g = Grid(Ls, L1, *shape)
    Y1, Y2, _ = g.mesh()
    a = math.pi / (g.L1 - g.Ls)
    s = a * (Y1 - g.Ls)
    psi = np.sin(s) * np.sin(math.pi * Y2)
    v1 = math.pi * np.sin(s) * np.cos(math.pi * Y2)
    v2 = -a * np.cos(s) * np.sin(math.pi * Y2)
    z = np.zeros(g.shape)
    w = solve_divcurl(z, z, (a * a + math.pi ** 2) * psi, g, EllipticCache(g))
    err = max(float(np.max(np.abs(w[0] - v1))), float(np.max(np.abs(w[1] - v2))), float(np.max(np.abs(w[2]))))
    div = float(np.max(np.abs(div_parity(g, *w)[1:-1, 1:-1, 1:-1])))
    return err, div


# smooth coefficients for the per-mode problem  (d1 X')' + d6 X' - lam X + w d5 X(a) = G
MODE_COEFFS = dict(d1=lambda y: 1.0 + 0.3 * y, dd1=lambda y: 0.3 + 0.0 * y, d6=lambda y: 0.2 * np.sin(y),
                   d5=lambda y: -0.5 - 0.1 * y, lam=2.3, weight=0.1, b4=0.4)
MODE_EXACT = (lambda y: np.cos(2.0 * y) + 0.5 * y * y, lambda y: -2.0 * np.sin(2.0 * y) + y,
              lambda y: -4.0 * np.cos(2.0 * y) + 1.0)


def mode_spec(n, end_order=2, a=1.5, b=2.0):
    c = MODE_COEFFS
    X, dX, ddX = MODE_EXACT
    y = np.linspace(a, b, n)
    G = (c["dd1"](y) * dX(y) + c["d1"](y) * ddX(y) + c["d6"](y) * dX(y) - c["lam"] * X(y)
         + c["weight"] * c["d5"](y) * X(a))
    spec = ModeBVPSpec(y, c["d1"](0.5 * (y[1:] + y[:-1])), c["d6"](y), c["d5"](y), c["lam"], c["weight"], c["b4"],
                       float(dX(a) - c["b4"] * X(a)), float(dX(b)), G, end_order)
    return spec, X(y)


def mode_error(n, end_order=2):
    spec, exact = mode_spec(n, end_order)
    return float(np.max(np.abs(mode_bvp(spec) - exact)))


def mode_dense_gap(n, end_order=2):
    spec, _ = mode_spec(n, end_order)
    x_dense = np.linalg.solve(mode_matrix_dense(spec), mode_rhs(spec))
    return float(np.max(np.abs(mode_bvp(spec) - x_dense)))


def orders(errs):
    e = np.asarray(errs, dtype=float)
    return np.log2(e[:-1] / e[1:])


# --- fields for the equivalence check ----------------------------------------------------------------

# one-sided estimates of the mapped-coordinate wall slope; they vanish only under refinement
SLOPE_DIAGNOSTICS = ("d2_x1_wall2", "d3_x1_wall3")


def background_field(bg, n, x1=None):
    x1 = np.linspace(bg.Ls, bg.L1, n) if x1 is None else x1
    y = np.linspace(-1.0, 1.0, n)
    X1, _, _ = np.meshgrid(x1, y, y, indexing="ij")
    z = np.zeros_like(X1)
    return ManufacturedField(x1, y, y, bg.sub.rho(X1), bg.sub.u(X1), z, z.copy(), bg.force.Phi(X1), bg.gas)


def random_nonsolution(bg, n, amp, rng):
    mf = background_field(bg, n)
    X1, X2, X3 = np.meshgrid(mf.x1, mf.x2, mf.x3, indexing="ij")

    def mode():
        k = rng.integers(1, 3, 3)
        ph = rng.uniform(0.0, 2 * math.pi, 3)
        return (np.cos(k[0] * math.pi * X1 + ph[0]) * np.cos(k[1] * math.pi * X2 / 2 + ph[1])
                * np.cos(k[2] * math.pi * X3 / 2 + ph[2]))

    return dataclasses.replace(mf, rho=mf.rho * (1 + amp * mode()), u1=mf.u1 * (1 + amp * mode()),
                               u2=amp * mode(), u3=amp * mode())
