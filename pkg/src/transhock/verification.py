"""Residual checks of a computed solution against the original Euler system and jump conditions.

Derivatives here come from ``np.gradient`` (second order, one-sided on the
boundary) and a chain rule through the tabulated physical coordinate, never
from the solver's parity stencils, so small residuals are evidence rather
than a restatement of the discretization.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .domain import EE, EO, OE, dd_trans, d_trans
from .gas import GasParams, enthalpy
from .upstream import sample_upstream

EQUATIONS = ("mass", "momentum1", "momentum2", "momentum3")


# ---------------------------------------------------------------------------
# physical derivatives on the mapped box


class MappedDerivatives:
    """d/dx on nodes (y1, y2, y3) with physical x1 = X(y), x2 = y2, x3 = y3."""

    def __init__(self, X1: np.ndarray, y1, y2, y3):
        self.axes = (np.asarray(y1), np.asarray(y2), np.asarray(y3))
        dX = np.gradient(X1, *self.axes, edge_order=2)
        self.J = dX[0]
        self.X2 = dX[1]
        self.X3 = dX[2]

    def grad(self, f):
        g1, g2, g3 = np.gradient(f, *self.axes, edge_order=2)
        dx1 = g1 / self.J
        return dx1, g2 - self.X2 * dx1, g3 - self.X3 * dx1


def _norms(r, interior=True):
    if interior:
        r = r[1:-1, 1:-1, 1:-1]
    return {"max": float(np.max(np.abs(r))), "l2": float(np.sqrt(np.mean(r * r)))}


def euler_terms(rho, u1, u2, u3, P, Phi, dops: MappedDerivatives):
    """Left minus right side of the four conservation laws, node by node."""
    m1, m2, m3 = rho * u1, rho * u2, rho * u3
    d = dops.grad
    mass = d(m1)[0] + d(m2)[1] + d(m3)[2]
    gP = d(Phi)
    mom = []
    for ui, k in ((u1, 0), (u2, 1), (u3, 2)):
        fl = [m1 * ui, m2 * ui, m3 * ui]
        fl[k] = fl[k] + P
        mom.append(d(fl[0])[0] + d(fl[1])[1] + d(fl[2])[2] - rho * gP[k])
    return [mass] + mom


def euler_residual(sol, force=None) -> dict:
    """Max and RMS of the four conservation-law residuals over interior nodes."""
    g = sol.grid
    prob = sol.problem
    force = force or prob.bg.force
    _, Y2, Y3 = g.mesh()
    Phi = force.Phi(sol.x1) + prob.pert.eps * prob.pert.phi0(sol.x1, Y2, Y3)
    dops = MappedDerivatives(sol.x1, g.y1, g.y2, g.y3)
    res = euler_terms(sol.rho, sol.u1, sol.u2, sol.u3, sol.P, Phi, dops)
    return {name: _norms(r) for name, r in zip(EQUATIONS, res)}


# ---------------------------------------------------------------------------
# jump conditions on the shock


def rh_terms(minus, plus, dxi2, dxi3):
    """The four jump relations; ``minus``/``plus`` are (rho, u1, u2, u3, P) on the surface."""
    def flux(s):
        r, a, b, c, p = s
        return (r * a, r * b, r * c,
                r * a * a + p, r * a * b, r * a * c,
                r * b * b + p, r * b * c, r * c * c + p)

    F = [fp - fm for fp, fm in zip(flux(plus), flux(minus))]
    j_m1, j_m2, j_m3, j11, j12, j13, j22, j23, j33 = F
    return [j_m1 - dxi2 * j_m2 - dxi3 * j_m3,
            j11 - dxi2 * j12 - dxi3 * j13,
            j12 - dxi2 * j22 - dxi3 * j23,
            j13 - dxi2 * j23 - dxi3 * j33]


def shock_states(sol, xi=None):
    """Supersonic and subsonic states at x1 = xi(y').

    The subsonic side is cubic in x1 through the first four slices; with the
    default xi the first slice already lies on the surface.
    """
    g = sol.grid
    prob = sol.problem
    xi = sol.xi if xi is None else xi
    T2, T3 = g.trace_mesh()
    um1, um2, um3, Pm, rm = sample_upstream(prob.field, xi, T2, T3)
    X = sol.x1[:4]
    plus = []
    for f in (sol.rho, sol.u1, sol.u2, sol.u3, sol.P):
        plus.append(_cubic_in_x(X, f[:4], xi))
    return (rm, um1, um2, um3, Pm), tuple(plus)


def _cubic_in_x(X, F, x):
    """Lagrange cubic through four nodes per column, evaluated at x (may extrapolate)."""
    out = np.zeros_like(x)
    for a in range(4):
        w = np.ones_like(x)
        for b in range(4):
            if b != a:
                w = w * (x - X[b]) / (X[a] - X[b])
        out = out + w * F[a]
    return out


def rh_residual(sol, xi=None) -> list[float]:
    g = sol.grid
    xi = sol.xi if xi is None else xi
    minus, plus = shock_states(sol, xi)
    d2, d3 = np.gradient(xi, g.y2, g.y3, edge_order=2)
    return [float(np.max(np.abs(r))) for r in rh_terms(minus, plus, d2, d3)]


# ---------------------------------------------------------------------------
# deformation-curl form


def bernoulli(rho, u1, u2, u3, Phi, gas: GasParams):
    return 0.5 * (u1 * u1 + u2 * u2 + u3 * u3) + enthalpy(rho, gas) - Phi


def deformation_curl_terms(rho, u1, u2, u3, Phi, gas: GasParams, dops: MappedDerivatives):
    """Bernoulli transport, the two vorticity relations (times u1) and the continuity form."""
    d = dops.grad
    B = bernoulli(rho, u1, u2, u3, Phi, gas)
    gB = d(B)
    G1, G2, G3 = d(u1), d(u2), d(u3)
    transport = u1 * gB[0] + u2 * gB[1] + u3 * gB[2]
    w1 = G3[1] - G2[2]
    w2 = G1[2] - G3[0]
    w3 = G2[0] - G1[1]
    vort2 = u1 * w2 - (u2 * w1 + gB[2])
    vort3 = u1 * w3 - (u3 * w1 - gB[1])
    q2 = u1 * u1 + u2 * u2 + u3 * u3
    c2 = (gas.gamma - 1.0) * (B - 0.5 * q2 + Phi)
    gP = d(Phi)
    cont = ((c2 - u1 * u1) * G1[0] + (c2 - u2 * u2) * G2[1] + (c2 - u3 * u3) * G3[2]
            - u1 * (u2 * G2[0] + u3 * G3[0] - gP[0])
            - u2 * (u1 * G1[1] + u3 * G3[1] - gP[1])
            - u3 * (u1 * G1[2] + u2 * G2[2] - gP[2]))
    return [transport, vort2, vort3, cont]


DC_EQUATIONS = ("bernoulli_transport", "vorticity2", "vorticity3", "continuity_form")


@dataclass
class ManufacturedField:
    """A smooth state on a Cartesian box, for the equivalence check."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    rho: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    Phi: np.ndarray
    gas: GasParams

    @property
    def P(self):
        return self.rho ** self.gas.gamma


def _relative(terms, scale):
    return float(max(np.max(np.abs(t[1:-1, 1:-1, 1:-1])) for t in terms) / scale)


def equivalence_check(mf: ManufacturedField, tol: float | None = None) -> dict:
    """Euler-form and deformation-curl-form residuals of the same field, each relative to its scale.

    Euler residuals are divided by max(rho |u|^2 + P) / L and the deformation-curl
    residuals by max(|u|^3) / L, L being the box size, so both are dimensionless.
    """
    X1, X2, X3 = np.meshgrid(mf.x1, mf.x2, mf.x3, indexing="ij")
    dops = MappedDerivatives(X1, mf.x1, mf.x2, mf.x3)
    q2 = mf.u1 ** 2 + mf.u2 ** 2 + mf.u3 ** 2
    Lbox = max(np.ptp(mf.x1), np.ptp(mf.x2), np.ptp(mf.x3))
    eul = euler_terms(mf.rho, mf.u1, mf.u2, mf.u3, mf.P, mf.Phi, dops)
    dc = deformation_curl_terms(mf.rho, mf.u1, mf.u2, mf.u3, mf.Phi, mf.gas, dops)
    e = _relative(eul, np.max(mf.rho * q2 + mf.P) / Lbox)
    c = _relative(dc, np.max(q2) ** 1.5 / Lbox)
    out = {"euler": e, "deformation_curl": c, "ratio": e / c if c > 0 else math.inf,
           "euler_eqs": [float(np.max(np.abs(t[1:-1, 1:-1, 1:-1]))) for t in eul],
           "dc_eqs": [float(np.max(np.abs(t[1:-1, 1:-1, 1:-1]))) for t in dc]}
    if tol is not None:
        small = e < tol and c < tol
        large = e > 10 * tol and c > 10 * tol
        out["agree"] = bool(small or large)
    return out


def solution_as_manufactured(sol) -> tuple[dict, dict]:
    """Euler and deformation-curl residual maxima of a solver output on its mapped grid."""
    g = sol.grid
    prob = sol.problem
    _, Y2, Y3 = g.mesh()
    Phi = prob.bg.force.Phi(sol.x1) + prob.pert.eps * prob.pert.phi0(sol.x1, Y2, Y3)
    dops = MappedDerivatives(sol.x1, g.y1, g.y2, g.y3)
    eul = euler_terms(sol.rho, sol.u1, sol.u2, sol.u3, sol.P, Phi, dops)
    dc = deformation_curl_terms(sol.rho, sol.u1, sol.u2, sol.u3, Phi, prob.bg.gas, dops)
    return ({n: _norms(r) for n, r in zip(EQUATIONS, eul)},
            {n: _norms(r) for n, r in zip(DC_EQUATIONS, dc)})


# ---------------------------------------------------------------------------
# wall conditions of the physical solution


def physical_compatibility(sol) -> dict[str, float]:
    """Wall conditions on (u1, u2, u3, P) and the shock surface, in the stencils of the iterate class."""
    g = sol.grid
    h2, h3 = g.h2, g.h3
    w = (0, -1)

    def at2(f):
        return float(np.max(np.abs(f[:, w, :]))) if f.ndim == 3 else float(np.max(np.abs(f[w, :])))

    def at3(f):
        return float(np.max(np.abs(f[:, :, w]))) if f.ndim == 3 else float(np.max(np.abs(f[:, w])))

    tab = {
        "u2_wall2": at2(sol.u2),
        "u3_wall3": at3(sol.u3),
        "dd2_u2_wall2": at2(dd_trans(sol.u2, h2, 1, OE[0])),
        "dd3_u3_wall3": at3(dd_trans(sol.u3, h3, 2, EO[1])),
        "d2_xi_wall2": at2(d_trans(sol.xi, h2, 0, EE[0])),
        "d3_xi_wall3": at3(d_trans(sol.xi, h3, 1, EE[1])),
        # slope of the mapped coordinate along each wall; the tangential derivative
        # conditions on u1, u3, P hold in physical variables only if it vanishes
        "d2_x1_wall2": at2(np.gradient(sol.x1, g.y2, axis=1, edge_order=2)),
        "d3_x1_wall3": at3(np.gradient(sol.x1, g.y3, axis=2, edge_order=2)),
    }
    for name, f in (("u1", sol.u1), ("u3", sol.u3), ("P", sol.P)):
        par = EO if name == "u3" else EE
        tab[f"d2_{name}_wall2"] = at2(d_trans(f, h2, 1, par[0]))
    for name, f in (("u1", sol.u1), ("u2", sol.u2), ("P", sol.P)):
        par = OE if name == "u2" else EE
        tab[f"d3_{name}_wall3"] = at3(d_trans(f, h3, 2, par[1]))
    return tab


# ---------------------------------------------------------------------------
# report


def report(sol, status: str = "converged") -> dict:
    eul, dc = solution_as_manufactured(sol)
    st = sol.state
    hist = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in r.items()}
            for r in sol.history]
    rep = {
        "status": status,
        "grid": list(sol.grid.shape),
        "eps": float(sol.problem.pert.eps),
        "Ls": float(sol.problem.bg.Ls),
        "euler": eul,
        "deformation_curl": dc,
        "rh": rh_residual(sol),
        "entropy_margin": sol.entropy_margin,
        "background_pressure_jump": float(sol.problem.co.P_jump),
        "shock_displacement_max": float(np.max(np.abs(sol.xi - sol.problem.bg.Ls))),
        "velocity_perturbation_max": float(np.max(np.abs(st.v[:3]))),
        "pi_norm": float(np.max(np.abs(st.Pi))) if st.Pi is not None else 0.0,
        "compat": {"iterate": st.diagnostics.get("compat", {}), "physical": physical_compatibility(sol)},
        "history": hist,
    }
    return rep


def report_json(rep: dict) -> str:
    return json.dumps(rep, indent=2, sort_keys=True)


def report_text(rep: dict) -> str:
    lines = [f"status: {rep['status']}   grid {rep['grid']}   eps {rep['eps']:.3e}   Ls {rep['Ls']:.10f}"]
    for name, n in rep["euler"].items():
        lines.append(f"  euler {name:<18s} max {n['max']:.3e}  l2 {n['l2']:.3e}")
    for i, r in enumerate(rep["rh"], 1):
        lines.append(f"  jump condition {i}          max {r:.3e}")
    lines.append(f"  entropy margin {rep['entropy_margin']:.6e} (background jump {rep['background_pressure_jump']:.6e})")
    lines.append(f"  |xi - Ls| {rep['shock_displacement_max']:.3e}   |Pi| {rep['pi_norm']:.3e}")
    worst = max(list(rep["compat"]["iterate"].values()) + [0.0])
    lines.append(f"  worst iterate wall condition {worst:.3e}")
    lines.append(f"  iterations {len(rep['history'])}")
    return "\n".join(lines)
