"""Perturbed supersonic flow ahead of the shock.

The perturbation is the response of steady Euler linearized about the
supersonic branch.  With q = (rho', u1', u2', u3') the linear system reads

    (rho_b a + u_b r)' + rho_b (d2 b + d3 c) = 0
    rho_b u_b a' + rho_b u_b' a + u_b u_b' r + (c_b^2 r)' = f r + rho_b eps d1 Phi0
    rho_b u_b b' + c_b^2 d2 r = rho_b eps d2 Phi0        (and the same for c, d3)

Two realizations are offered: ``analytic_supersonic`` integrates the exact
transverse-mode amplitudes as ODEs in x1, and ``march_supersonic`` marches
the full grid with a Lax-Wendroff scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundSolution, Branch
from .domain import EE, EO, OE, lagrange_stencil, pad_parity
from .errors import CFLViolation, CompatibilityViolation, ConfigError, OutOfDomain, SupersonicLost

FAMILIES = {
    # field: required (y2-factor, y3-factor) kinds
    "u10": ("cos", "cos"),
    "P0": ("cos", "cos"),
    "Phi0": ("cos", "cos"),
    "Pex": ("cos", "cos"),
    "u20": ("sin", "cos"),
    "u30": ("cos", "sin"),
}


def _factor(kind: str, k: float, y, order: int = 0):
    w = k * math.pi
    if kind == "cos":
        return (np.cos(w * y), -w * np.sin(w * y), -w * w * np.cos(w * y))[order]
    if kind == "sin":
        return (np.sin(w * y), w * np.cos(w * y), -w * w * np.sin(w * y))[order]
    raise ConfigError(f"unknown trig kind {kind!r}")


@dataclass(frozen=True)
class TrigMode:
    """amp * F2(k2 pi y2) * F3(k3 pi y3) [* p(x1) for the force potential]."""

    amp: float
    kind2: str
    k2: float
    kind3: str
    k3: float
    poly: tuple[float, ...] = (1.0,)

    def value(self, y2, y3, d2: int = 0, d3: int = 0):
        return self.amp * _factor(self.kind2, self.k2, y2, d2) * _factor(self.kind3, self.k3, y3, d3)

    def p(self, x1, der: int = 0):
        c = np.polynomial.polynomial.polyder(np.asarray(self.poly, dtype=float), der) if der else np.asarray(self.poly)
        return np.polynomial.polynomial.polyval(x1, c)

    def to_dict(self) -> dict:
        d = {"amp": self.amp, "y2": [self.kind2, self.k2], "y3": [self.kind3, self.k3]}
        if self.poly != (1.0,):
            d["poly"] = list(self.poly)
        return d


def check_mode(name: str, mode: TrigMode, tol: float = 1e-10) -> None:
    """Wall compatibility of one mode, checked on the analytic factors."""
    even2 = name != "u20"
    even3 = name != "u30"
    for kind, k, even, axis in ((mode.kind2, mode.k2, even2, 2), (mode.kind3, mode.k3, even3, 3)):
        if kind not in ("cos", "sin"):
            raise CompatibilityViolation(f"{name}: unknown factor kind {kind!r}", where=axis)
        scale = 1.0 + (k * math.pi) ** 2
        for y in (-1.0, 1.0):
            if even:
                bad = abs(_factor(kind, k, y, 1)) > tol * scale
                what = "normal derivative"
            else:
                bad = abs(_factor(kind, k, y, 0)) > tol or abs(_factor(kind, k, y, 2)) > tol * scale
                what = "value or second derivative"
            if bad:
                raise CompatibilityViolation(
                    f"{name} mode {kind}({k}*pi*y{axis}) has nonzero {what} on the wall y{axis}={y:+.0f}",
                    where=(name, axis))


@dataclass
class PerturbationSpec:
    eps: float = 0.0
    u10: list[TrigMode] = field(default_factory=list)
    u20: list[TrigMode] = field(default_factory=list)
    u30: list[TrigMode] = field(default_factory=list)
    P0: list[TrigMode] = field(default_factory=list)
    Phi0: list[TrigMode] = field(default_factory=list)
    Pex: list[TrigMode] = field(default_factory=list)

    def __post_init__(self):
        for name in FAMILIES:
            for m in getattr(self, name):
                check_mode(name, m)

    def with_eps(self, eps: float) -> "PerturbationSpec":
        return PerturbationSpec(eps, list(self.u10), list(self.u20), list(self.u30), list(self.P0),
                                list(self.Phi0), list(self.Pex))

    # force potential perturbation and its gradient (unit amplitude; multiply by eps)
    def phi0(self, x1, y2, y3):
        out = np.zeros(np.broadcast(x1, y2, y3).shape)
        for m in self.Phi0:
            out = out + m.p(x1) * m.value(y2, y3)
        return out

    def grad_phi0(self, x1, y2, y3):
        shp = np.broadcast(x1, y2, y3).shape
        g1, g2, g3 = np.zeros(shp), np.zeros(shp), np.zeros(shp)
        for m in self.Phi0:
            g1 = g1 + m.p(x1, 1) * m.value(y2, y3)
            g2 = g2 + m.p(x1) * m.value(y2, y3, 1, 0)
            g3 = g3 + m.p(x1) * m.value(y2, y3, 0, 1)
        return g1, g2, g3

    def pex(self, y2, y3):
        out = np.zeros(np.broadcast(y2, y3).shape)
        for m in self.Pex:
            out = out + m.value(y2, y3)
        return out

    def inflow(self, name: str, y2, y3):
        out = np.zeros(np.broadcast(y2, y3).shape)
        for m in getattr(self, name):
            out = out + m.value(y2, y3)
        return out

    def to_dict(self) -> dict:
        d = {"eps": self.eps}
        for name in FAMILIES:
            d[name] = [m.to_dict() for m in getattr(self, name)]
        return d


# ---------------------------------------------------------------------------


@dataclass
class SupersonicField:
    """Tabulated supersonic state: background branch plus linear deviations.

    Deviations ``dev`` have shape (4, nx, N2, N3) holding (rho', u1', u2', u3')
    and already include the factor eps.
    """

    x: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    dev: np.ndarray
    branch: Branch
    mode: str
    eps: float

    @property
    def gamma(self):
        return self.branch.gas.gamma

    def state(self):
        """Full tabulated state as arrays (u1, u2, u3, P, rho)."""
        X = self.x[:, None, None]
        rho = self.branch.rho(X) + self.dev[0]
        u1 = self.branch.u(X) + self.dev[1]
        return u1, self.dev[2], self.dev[3], rho ** self.gamma, rho

    def check_supersonic(self) -> None:
        u1, u2, u3, P, rho = self.state()
        if np.any(rho <= 0.0):
            raise SupersonicLost("density became non-positive in the supersonic field")
        c2 = self.gamma * rho ** (self.gamma - 1.0)
        q2 = u1 * u1 + u2 * u2 + u3 * u3
        if np.any(q2 <= c2):
            i = np.unravel_index(np.argmin(q2 - c2), q2.shape)
            raise SupersonicLost("supersonic field went subsonic", where=(float(self.x[i[0]]),) + i[1:])


PARITIES = (EE, EE, OE, EO)


def sample_upstream(field: SupersonicField, x1, y2, y3):
    """Cubic interpolation in x1 and bicubic in (y2, y3); exact at table nodes.

    Returns (u1, u2, u3, P, rho) with the broadcast shape of the inputs.
    """
    x1, y2, y3 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(y2, float), np.asarray(y3, float))
    L0, L1 = field.x[0], field.x[-1]
    tol = 1e-12 * (L1 - L0)
    if np.any(x1 < L0 - tol) or np.any(x1 > L1 + tol):
        raise OutOfDomain("x1 outside the supersonic table", where=(float(np.min(x1)), float(np.max(x1))))
    if np.any(np.abs(y2) > 1.0 + 1e-12) or np.any(np.abs(y3) > 1.0 + 1e-12):
        raise OutOfDomain("cross-section point outside the closed square")
    x1c = np.clip(x1, L0, L1)
    nx, n2, n3 = field.dev.shape[1:]
    hx = (L1 - L0) / (nx - 1)
    h2 = 2.0 / (n2 - 1)
    h3 = 2.0 / (n3 - 1)
    ix, wx = lagrange_stencil((x1c - L0) / hx, nx, True)
    i2, w2 = lagrange_stencil((np.clip(y2, -1, 1) + 1.0) / h2, n2, False)
    i3, w3 = lagrange_stencil((np.clip(y3, -1, 1) + 1.0) / h3, n3, False)
    out = []
    for c in range(4):
        F = pad_parity(pad_parity(field.dev[c], 1, PARITIES[c][0], 2), 2, PARITIES[c][1], 2)
        acc = np.zeros(x1.shape)
        for a in range(4):
            for b in range(4):
                for d in range(4):
                    acc = acc + wx[a] * w2[b] * w3[d] * F[ix + a, i2 + b + 2, i3 + d + 2]
        out.append(acc)
    rho = field.branch.rho(x1c) + out[0]
    u1 = field.branch.u(x1c) + out[1]
    return u1, out[2], out[3], rho ** field.gamma, rho


# ---------------------------------------------------------------------------
# background coefficient functions along the supersonic branch


def _bg_coeffs(branch: Branch, x):
    g = branch.gas.gamma
    u = branch.u(x)
    du = branch.du(x)
    rho = branch.m / u
    drho = -branch.m * du / (u * u)
    c2 = g * rho ** (g - 1.0)
    dc2 = (g - 1.0) * c2 * drho / rho
    f = branch.force.f(x)
    return u, du, rho, drho, c2, dc2, f


def linear_matrices(branch: Branch, x: float):
    """S, T2, T3, Kinv with q' = S q + T2 d2 q + T3 d3 q + source."""
    u, du, rho, drho, c2, dc2, f = _bg_coeffs(branch, x)
    K = np.array([[u, rho], [c2, rho * u]])
    Kinv = np.linalg.inv(K)
    S = np.zeros((4, 4))
    S[:2, :2] = Kinv @ np.array([[-du, -drho], [-u * du - dc2 + f, -rho * du]])
    T2 = np.zeros((4, 4))
    T3 = np.zeros((4, 4))
    col = Kinv @ np.array([-rho, 0.0])
    T2[:2, 2] = col
    T3[:2, 3] = col
    T2[2, 0] = -c2 / (rho * u)
    T3[3, 0] = -c2 / (rho * u)
    return S, T2, T3, Kinv


def _source(pert: PerturbationSpec, branch: Branch, x: float, Y2, Y3):
    if not pert.Phi0 or pert.eps == 0.0:
        return np.zeros((4,) + Y2.shape)
    u, du, rho, drho, c2, dc2, f = _bg_coeffs(branch, x)
    _, _, _, Kinv = linear_matrices(branch, x)
    g1, g2, g3 = pert.grad_phi0(x, Y2, Y3)
    s = np.empty((4,) + Y2.shape)
    s[0] = Kinv[0, 1] * rho * pert.eps * g1
    s[1] = Kinv[1, 1] * rho * pert.eps * g1
    s[2] = pert.eps * g2 / u
    s[3] = pert.eps * g3 / u
    return s


# ---------------------------------------------------------------------------
# analytic mode: transverse modes decouple into 4x4 ODE systems in x1


def _groups(pert: PerturbationSpec):
    """Collect inflow and force modes by transverse wavenumber pair (m, n)."""
    groups: dict[tuple[float, float], dict] = {}

    def g(key):
        return groups.setdefault(key, {"R": 0.0, "A": 0.0, "B": 0.0, "C": 0.0, "phi": []})

    for m in pert.P0:
        g((m.k2, m.k3))["R"] += m.amp   # pressure amplitude; converted to density below
    for m in pert.u10:
        g((m.k2, m.k3))["A"] += m.amp
    for m in pert.u20:
        g((m.k2, m.k3))["B"] += m.amp
    for m in pert.u30:
        g((m.k2, m.k3))["C"] += m.amp
    for m in pert.Phi0:
        g((m.k2, m.k3))["phi"].append(m)
    return groups


def _mode_rhs(cf, j, Q, w2, w3, p, dp):
    """Right side for all groups at stage index j of the precomputed coefficient table."""
    u, du, rho, drho, c2, dc2, f = (c[j] for c in cf)
    R, A, B, C = Q
    r0 = -drho * A - du * R - rho * (w2 * B + w3 * C)
    r1 = -rho * du * A - u * du * R - dc2 * R + f * R + rho * dp[j]
    det = rho * u * u - rho * c2
    dR = (rho * u * r0 - rho * r1) / det
    dA = (u * r1 - c2 * r0) / det
    dB = w2 * (c2 * R - rho * p[j]) / (rho * u)
    dC = w3 * (c2 * R - rho * p[j]) / (rho * u)
    return np.stack([dR, dA, dB, dC])


def analytic_supersonic(pert: PerturbationSpec, bg: BackgroundSolution, y2: np.ndarray, y3: np.ndarray,
                        nx: int = 401, substeps: int = 8) -> SupersonicField:
    """Exact transverse-mode response of the linearized system, tabulated on a fine x1 grid."""
    branch = bg.sup
    x = np.linspace(bg.L0, bg.L1, nx)
    Y2, Y3 = np.meshgrid(y2, y3, indexing="ij")
    dev = np.zeros((4, nx, len(y2), len(y3)))
    groups = _groups(pert)
    if pert.eps != 0.0 and groups:
        keys = list(groups)
        w2 = np.array([k[0] for k in keys]) * math.pi
        w3 = np.array([k[1] for k in keys]) * math.pi
        ns = (nx - 1) * substeps
        h = (bg.L1 - bg.L0) / ns
        xh = bg.L0 + 0.5 * h * np.arange(2 * ns + 1)        # half-step stage points
        cf = _bg_coeffs(branch, xh)
        p = np.zeros((xh.size, len(keys)))
        dp = np.zeros((xh.size, len(keys)))
        for g, k in enumerate(keys):
            for m in groups[k]["phi"]:
                p[:, g] += m.amp * m.p(xh)
                dp[:, g] += m.amp * m.p(xh, 1)
        cf = [c[:, None] * np.ones(len(keys)) for c in cf]
        c2_0 = branch.c2(bg.L0)
        Q = np.array([[groups[k]["R"] / c2_0, groups[k]["A"], groups[k]["B"], groups[k]["C"]] for k in keys]).T
        amps = np.empty((nx, 4, len(keys)))
        amps[0] = Q
        for i in range(ns):
            j = 2 * i
            s1 = _mode_rhs(cf, j, Q, w2, w3, p, dp)
            s2 = _mode_rhs(cf, j + 1, Q + h / 2 * s1, w2, w3, p, dp)
            s3 = _mode_rhs(cf, j + 1, Q + h / 2 * s2, w2, w3, p, dp)
            s4 = _mode_rhs(cf, j + 2, Q + h * s3, w2, w3, p, dp)
            Q = Q + h / 6 * (s1 + 2 * s2 + 2 * s3 + s4)
            if (i + 1) % substeps == 0:
                amps[(i + 1) // substeps] = Q
        for g, (k2, k3) in enumerate(keys):
            Ycc = _factor("cos", k2, Y2) * _factor("cos", k3, Y3)
            Ysc = _factor("sin", k2, Y2) * _factor("cos", k3, Y3)
            Ycs = _factor("cos", k2, Y2) * _factor("sin", k3, Y3)
            dev[0] += amps[:, 0, g, None, None] * Ycc
            dev[1] += amps[:, 1, g, None, None] * Ycc
            dev[2] += amps[:, 2, g, None, None] * Ysc
            dev[3] += amps[:, 3, g, None, None] * Ycs
        dev *= pert.eps
    fld = SupersonicField(x, np.asarray(y2, float), np.asarray(y3, float), dev, branch, "analytic", pert.eps)
    fld.check_supersonic()
    return fld


# ---------------------------------------------------------------------------
# Lax-Wendroff march


def _derivs(q, h2, h3):
    """Per-component first, second and mixed transverse differences with parity ghosts."""
    n = q.shape[0]
    D2 = np.empty_like(q)
    D3 = np.empty_like(q)
    D22 = np.empty_like(q)
    D33 = np.empty_like(q)
    D23 = np.empty_like(q)
    for c in range(n):
        p2, p3 = PARITIES[c]
        g = pad_parity(pad_parity(q[c], 0, p2), 1, p3)
        D2[c] = (g[2:, 1:-1] - g[:-2, 1:-1]) / (2 * h2)
        D3[c] = (g[1:-1, 2:] - g[1:-1, :-2]) / (2 * h3)
        D22[c] = (g[2:, 1:-1] - 2 * g[1:-1, 1:-1] + g[:-2, 1:-1]) / (h2 * h2)
        D33[c] = (g[1:-1, 2:] - 2 * g[1:-1, 1:-1] + g[1:-1, :-2]) / (h3 * h3)
        D23[c] = (g[2:, 2:] - g[2:, :-2] - g[:-2, 2:] + g[:-2, :-2]) / (4 * h2 * h3)
    return D2, D3, D22, D33, D23


def _apply(M, q):
    return np.einsum("ij,j...->i...", M, q)


def cfl_number(branch: Branch, x: np.ndarray, hx: float, h2: float, h3: float) -> float:
    nu = 0.0
    for xi in x:
        _, T2, T3, _ = linear_matrices(branch, xi)
        s2 = np.max(np.abs(np.linalg.eigvals(T2)))
        s3 = np.max(np.abs(np.linalg.eigvals(T3)))
        nu = max(nu, hx * (s2 / h2 + s3 / h3))
    return nu


CFL_MAX = 0.9


def march_supersonic(pert: PerturbationSpec, bg: BackgroundSolution, y2: np.ndarray, y3: np.ndarray,
                     nx: int | None = None, cfl: float = 0.5) -> SupersonicField:
    """Linearized Lax-Wendroff march from L0 to L1 (Taylor form with compact second differences)."""
    branch = bg.sup
    h2 = 2.0 / (len(y2) - 1)
    h3 = 2.0 / (len(y3) - 1)
    probe = np.linspace(bg.L0, bg.L1, 17)
    if nx is None:
        nu1 = cfl_number(branch, probe, 1.0, h2, h3)
        nx = int(math.ceil((bg.L1 - bg.L0) * nu1 / cfl)) + 1
        nx = max(nx, 9)
    x = np.linspace(bg.L0, bg.L1, nx)
    hx = x[1] - x[0]
    nu = cfl_number(branch, np.concatenate([probe, x]), hx, h2, h3)
    if nu > CFL_MAX:
        raise CFLViolation(f"axial step {hx:.3e} gives CFL number {nu:.3f} > {CFL_MAX}")
    Y2, Y3 = np.meshgrid(y2, y3, indexing="ij")
    dev = np.zeros((4, nx, len(y2), len(y3)))
    if pert.eps != 0.0:
        q = np.stack([pert.inflow("P0", Y2, Y3) / branch.c2(bg.L0), pert.inflow("u10", Y2, Y3),
                      pert.inflow("u20", Y2, Y3), pert.inflow("u30", Y2, Y3)]) * pert.eps
        dev[:, 0] = q
        dx = 1e-4 * (bg.L1 - bg.L0)
        for n in range(nx - 1):
            xn = x[n]
            S, T2, T3, _ = linear_matrices(branch, xn)
            xa, xb = max(xn - dx, bg.L0), min(xn + dx, bg.L1)
            Sa, T2a, T3a, _ = linear_matrices(branch, xa)
            Sb, T2b, T3b, _ = linear_matrices(branch, xb)
            dS, dT2, dT3 = (Sb - Sa) / (xb - xa), (T2b - T2a) / (xb - xa), (T3b - T3a) / (xb - xa)
            s = _source(pert, branch, xn, Y2, Y3)
            ds = (_source(pert, branch, xb, Y2, Y3) - _source(pert, branch, xa, Y2, Y3)) / (xb - xa)
            D2, D3, D22, D33, D23 = _derivs(q, h2, h3)
            Lq = _apply(S, q) + _apply(T2, D2) + _apply(T3, D3)
            sD2, sD3, _, _, _ = _derivs(s, h2, h3)
            Ls_ = _apply(S, s) + _apply(T2, sD2) + _apply(T3, sD3)
            LLq = (_apply(S @ S, q) + _apply(S @ T2 + T2 @ S, D2) + _apply(S @ T3 + T3 @ S, D3)
                   + _apply(T2 @ T2, D22) + _apply(T3 @ T3, D33) + _apply(T2 @ T3 + T3 @ T2, D23))
            dLq = _apply(dS, q) + _apply(dT2, D2) + _apply(dT3, D3)
            q = q + hx * (Lq + s) + 0.5 * hx * hx * (LLq + Ls_ + dLq + ds)
            # wall-normal velocities vanish exactly on the walls
            q[2, 0, :] = 0.0
            q[2, -1, :] = 0.0
            q[3, :, 0] = 0.0
            q[3, :, -1] = 0.0
            dev[:, n + 1] = q
    fld = SupersonicField(x, np.asarray(y2, float), np.asarray(y3, float), dev, branch, "march", pert.eps)
    fld.check_supersonic()
    return fld
