"""1-D transonic shock with an external force and the derived iteration coefficients.

With the mass flux m = rho u fixed, steady 1-D Euler reduces to

    u' = f u / (u^2 - c^2(m/u)),

integrated with fixed-step RK4.  The shock position is found by bisection on
the exit-pressure map, which is monotone in the shock position.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from . import _kernels
from .errors import (BisectionStalled, CoefficientSignViolation, ConfigError,
                     NoSubsonicRoot, PressureOutOfRange, SonicEncountered)
from .gas import GasParams
from .io import write_csv

SONIC_GUARD = 1e-6
PRESSURE_RTOL = 1e-9
MAX_BISECT = 200


class ForceProfile:
    """Axial force f(x1) > 0 on [L0, L1] and its antiderivative Phi with Phi(L0) = 0."""

    def __init__(self, L0: float, L1: float, constant: float | None = None,
                 x: np.ndarray | None = None, f: np.ndarray | None = None):
        self.L0, self.L1 = float(L0), float(L1)
        if constant is not None:
            if not constant > 0.0:
                raise ConfigError(f"force must be positive, got {constant}")
            self.constant = float(constant)
            self._spline = None
        else:
            x = np.asarray(x, dtype=float)
            f = np.asarray(f, dtype=float)
            if x.ndim != 1 or x.shape != f.shape or x.size < 4:
                raise ConfigError("tabulated force needs matching 1-D arrays with >= 4 points")
            if x[0] > self.L0 or x[-1] < self.L1:
                raise ConfigError("tabulated force must cover [L0, L1]")
            if np.any(f <= 0.0):
                raise ConfigError("force must be positive on the whole table")
            self.constant = None
            self._spline = CubicSpline(x, f)
            self._anti = self._spline.antiderivative()
            if np.any(self._spline(np.linspace(self.L0, self.L1, 2001)) <= 0.0):
                raise ConfigError("interpolated force is not positive on [L0, L1]")

    def f(self, x):
        if self._spline is None:
            return np.full(np.shape(x), self.constant) if np.ndim(x) else self.constant
        out = self._spline(x)
        return float(out) if np.ndim(x) == 0 else out

    def Phi(self, x):
        if self._spline is None:
            return self.constant * (np.asarray(x, dtype=float) - self.L0) if np.ndim(x) else self.constant * (x - self.L0)
        out = self._anti(x) - self._anti(self.L0)
        return float(out) if np.ndim(x) == 0 else out

    def to_dict(self) -> dict:
        if self._spline is None:
            return {"constant": self.constant}
        return {"x": self._spline.x.tolist(), "f": self._spline(self._spline.x).tolist()}


@dataclass(frozen=True)
class State1D:
    x1: float
    rho: float
    u: float
    gas: GasParams

    @property
    def P(self) -> float:
        return self.rho ** self.gas.gamma

    @property
    def c2(self) -> float:
        return self.gas.gamma * self.rho ** (self.gas.gamma - 1.0)

    @property
    def m(self) -> float:
        return self.rho * self.u

    @property
    def supersonic(self) -> bool:
        return self.u * self.u > self.c2

    def sonic_gap(self) -> float:
        return (self.u * self.u - self.c2) / self.c2


class Branch:
    """RK4 tabulation u(x) of one branch with cubic-Hermite dense output."""

    def __init__(self, x: np.ndarray, u: np.ndarray, m: float, force: ForceProfile, gas: GasParams):
        order = np.argsort(x)
        self.x = np.asarray(x, dtype=float)[order]
        self.u_nodes = np.asarray(u, dtype=float)[order]
        self.m = float(m)
        self.force = force
        self.gas = gas
        du = self._slope(self.u_nodes, force.f(self.x))
        self._spline = CubicHermiteSpline(self.x, self.u_nodes, du)

    def _slope(self, u, f):
        c2 = self.gas.gamma * (self.m / u) ** (self.gas.gamma - 1.0)
        return f * u / (u * u - c2)

    def _check(self, x):
        xa = np.asarray(x, dtype=float)
        tol = 1e-12 * (self.x[-1] - self.x[0])
        if np.any(xa < self.x[0] - tol) or np.any(xa > self.x[-1] + tol):
            from .errors import OutOfDomain
            raise OutOfDomain(f"x outside branch table [{self.x[0]}, {self.x[-1]}]")
        return np.clip(xa, self.x[0], self.x[-1])

    def u(self, x):
        out = self._spline(self._check(x))
        return float(out) if np.ndim(x) == 0 else out

    def du(self, x):
        """u' from the ODE right side at the interpolated state."""
        xa = self._check(x)
        out = self._slope(self._spline(xa), self.force.f(xa))
        return float(out) if np.ndim(x) == 0 else out

    def rho(self, x):
        return self.m / self.u(x)

    def P(self, x):
        return self.rho(x) ** self.gas.gamma

    def c2(self, x):
        return self.gas.gamma * self.rho(x) ** (self.gas.gamma - 1.0)

    def state(self, x: float) -> State1D:
        return State1D(float(x), float(self.rho(x)), float(self.u(x)), self.gas)


def integrate_branch(start: State1D, span: tuple[float, float], force: ForceProfile, gas: GasParams,
                     h: float = 1e-3, guard: float = SONIC_GUARD) -> Branch:
    """RK4 from ``start`` (located at span[0]) to span[1]; either direction."""
    xa, xb = float(span[0]), float(span[1])
    if abs(start.sonic_gap()) < guard:
        raise SonicEncountered("start state is sonic", where=xa)
    length = xb - xa
    n = max(1, int(math.ceil(abs(length) / h - 1e-9)))
    step = length / n
    xs = xa + step * np.arange(2 * n + 1) / 2.0
    fstage = np.asarray(force.f(xs), dtype=float)
    u, fail = _kernels.rk4_branch(start.u, start.m, gas.gamma, step, fstage, guard)
    if fail >= 0:
        raise SonicEncountered("branch approaches the sonic point", where=float(xa + fail * step))
    xn = xa + step * np.arange(n + 1)
    return Branch(xn, u, start.m, force, gas)


def momentum_flux(m: float, u: float, gamma: float) -> float:
    return m * u + (m / u) ** gamma


def rh_jump_1d(upstream: State1D, guard: float = SONIC_GUARD) -> State1D:
    """Subsonic state sharing mass and momentum flux with a supersonic state."""
    gas = upstream.gas
    g = gas.gamma
    m = upstream.m
    if abs(upstream.sonic_gap()) < guard:
        raise SonicEncountered("upstream state is sonic; the jump degenerates", where=upstream.x1)
    if not upstream.supersonic:
        raise NoSubsonicRoot("upstream state is not supersonic", where=upstream.x1)
    K = momentum_flux(m, upstream.u, g)
    u_son = (g * m ** (g - 1.0)) ** (1.0 / (g + 1.0))

    def F(u):
        return m * u + m ** g * u ** (-g) - K

    lo, hi = 1e-12 * u_son, u_son * (1.0 - 1e-12)
    Flo, Fhi = F(lo), F(hi)
    if not (Flo > 0.0 and Fhi < 0.0):
        raise NoSubsonicRoot("no sign change on the subsonic bracket", where=upstream.x1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10 * u_son:
            break
    u = 0.5 * (lo + hi)
    for _ in range(3):
        u = u - F(u) / (m - g * m ** g * u ** (-g - 1.0))
    if not (0.0 < u < u_son):
        raise NoSubsonicRoot("Newton polish left the subsonic bracket", where=upstream.x1)
    return State1D(upstream.x1, m / u, u, gas)


@dataclass
class BackgroundSolution:
    gas: GasParams
    force: ForceProfile
    L0: float
    L1: float
    Ls: float
    Pe: float
    inflow: State1D
    sup: Branch
    sub: Branch
    h: float
    P_range: tuple[float, float] | None = None
    coeffs: "IterationCoeffs | None" = None

    @property
    def m(self) -> float:
        return self.inflow.m

    @property
    def B_sub(self) -> float:
        """Bernoulli constant of the subsonic branch."""
        u = self.sub.u(self.Ls)
        rho = self.sub.rho(self.Ls)
        return 0.5 * u * u + self.gas.enthalpy_factor * rho ** (self.gas.gamma - 1.0) - self.force.Phi(self.Ls)

    @property
    def B_sup(self) -> float:
        u = self.sup.u(self.Ls)
        rho = self.sup.rho(self.Ls)
        return 0.5 * u * u + self.gas.enthalpy_factor * rho ** (self.gas.gamma - 1.0) - self.force.Phi(self.Ls)

    def jumps(self) -> dict:
        """Jumps (subsonic minus supersonic) at Ls."""
        x = self.Ls
        rp, up, Pp = self.sub.rho(x), self.sub.u(x), self.sub.P(x)
        rm, um, Pm = self.sup.rho(x), self.sup.u(x), self.sup.P(x)
        return {"mass": rp * up - rm * um,
                "momentum": rp * up * up + Pp - (rm * um * um + Pm),
                "pressure": Pp - Pm}

    def check_invariants(self, tol: float = 1e-10) -> None:
        for br, name, sup in ((self.sup, "supersonic", True), (self.sub, "subsonic", False)):
            M2 = br.u_nodes ** 2 / br.c2(br.x)
            if sup and np.any(M2 <= 1.0):
                raise SonicEncountered(f"{name} branch is not supersonic everywhere")
            if not sup and np.any(M2 >= 1.0):
                raise SonicEncountered(f"{name} branch is not subsonic everywhere")
        j = self.jumps()
        scale = self.m * self.sub.u(self.Ls) + self.sub.P(self.Ls)
        if abs(j["mass"]) > tol * self.m or abs(j["momentum"]) > tol * scale:
            raise ValueError(f"RH residuals too large: {j}")
        if not j["pressure"] > 0.0:
            raise ValueError("entropy condition violated by the background jump")
        if not self.L0 < self.Ls < self.L1:
            raise ValueError("shock outside the nozzle")

    def to_csv(self, path, n: int = 201) -> None:
        x = np.linspace(self.L0, self.L1, n)
        cols = [x, self.sup.rho(x), self.sup.u(x), self.sup.P(x),
                self.sub.rho(x), self.sub.u(x), self.sub.P(x)]
        header = ["x1", "rho_sup", "u_sup", "P_sup", "rho_sub", "u_sub", "P_sub"]
        write_csv(path, header, np.column_stack(cols))

    def sidecar(self) -> dict:
        out = {"gamma": self.gas.gamma, "L0": self.L0, "L1": self.L1, "Ls": self.Ls, "Pe": self.Pe,
               "mass_flux": self.m, "rho0": self.inflow.rho, "u0": self.inflow.u,
               "force": self.force.to_dict(), "jumps": self.jumps(), "h": self.h}
        if self.P_range is not None:
            out["P1"], out["P0"] = self.P_range
        if self.coeffs is not None:
            out["coeffs"] = self.coeffs.scalars()
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def supersonic_branch(inflow: State1D, force: ForceProfile, gas: GasParams, L0: float, L1: float,
                      h: float) -> Branch:
    if not inflow.supersonic:
        raise ConfigError("inflow must be supersonic")
    return integrate_branch(State1D(L0, inflow.rho, inflow.u, gas), (L0, L1), force, gas, h)


def exit_pressure(Ls: float, sup: Branch, force: ForceProfile, gas: GasParams, L1: float, h: float) -> float:
    """Forward map: supersonic state at Ls, jump, integrate to L1, return P(L1)."""
    down = rh_jump_1d(sup.state(Ls))
    if L1 - Ls <= 0.0:
        return down.P
    br = integrate_branch(down, (Ls, L1), force, gas, h)
    return float(br.P(L1))


def _subsonic_full(Ls, sup, force, gas, L0, L1, h) -> Branch:
    down = rh_jump_1d(sup.state(Ls))
    parts_x, parts_u = [], []
    if Ls > L0:
        back = integrate_branch(down, (Ls, L0), force, gas, h)
        parts_x.append(back.x[:-1] if L1 > Ls else back.x)
        parts_u.append(back.u_nodes[:-1] if L1 > Ls else back.u_nodes)
    if L1 > Ls:
        fwd = integrate_branch(down, (Ls, L1), force, gas, h)
        parts_x.append(fwd.x)
        parts_u.append(fwd.u_nodes)
    return Branch(np.concatenate(parts_x), np.concatenate(parts_u), down.m, force, gas)


def admissible_pressure_range(inflow: State1D, force: ForceProfile, gas: GasParams, L0: float, L1: float,
                              h: float = 1e-3, delta: float | None = None) -> tuple[float, float]:
    """(P1, P0): exit pressures with the shock at L1 - delta and at L0 + delta."""
    delta = h if delta is None else delta
    sup = supersonic_branch(inflow, force, gas, L0, L1, h)
    P0 = exit_pressure(L0 + delta, sup, force, gas, L1, h)
    P1 = exit_pressure(L1 - delta, sup, force, gas, L1, h)
    if not P1 < P0:
        raise PressureOutOfRange(f"exit-pressure map not decreasing: P1={P1}, P0={P0}")
    return P1, P0


def find_shock_position(Pe: float, inflow: State1D, force: ForceProfile, gas: GasParams, L0: float, L1: float,
                        h: float = 1e-3, delta: float | None = None, max_iter: int = MAX_BISECT,
                        rtol: float = PRESSURE_RTOL) -> BackgroundSolution:
    """Bisection on Ls so that the exit pressure equals Pe."""
    delta = h if delta is None else delta
    sup = supersonic_branch(inflow, force, gas, L0, L1, h)
    lo, hi = L0 + delta, L1 - delta
    P0 = exit_pressure(lo, sup, force, gas, L1, h)
    P1 = exit_pressure(hi, sup, force, gas, L1, h)
    if not (P1 <= Pe <= P0):
        raise PressureOutOfRange(f"Pe={Pe} outside admissible range [{P1}, {P0}]")
    tol = rtol * P0
    if abs(P0 - Pe) <= tol:
        Ls = lo
    elif abs(P1 - Pe) <= tol:
        Ls = hi
    else:
        Ls = None
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            Pm = exit_pressure(mid, sup, force, gas, L1, h)
            if abs(Pm - Pe) <= tol:
                Ls = mid
                break
            # exit pressure decreases as the shock moves downstream
            if Pm > Pe:
                lo = mid
            else:
                hi = mid
        if Ls is None:
            raise BisectionStalled(f"no shock position within {max_iter} bisection steps")
    sub = _subsonic_full(Ls, sup, force, gas, L0, L1, h)
    bg = BackgroundSolution(gas=gas, force=force, L0=L0, L1=L1, Ls=Ls, Pe=Pe,
                            inflow=State1D(L0, inflow.rho, inflow.u, gas), sup=sup, sub=sub, h=h,
                            P_range=(P1, P0))
    bg.check_invariants()
    return bg


# ---------------------------------------------------------------------------


@dataclass
class IterationCoeffs:
    """Scalars at the shock and the axial coefficient functions of the linearized problem."""

    a0: float
    b0: float
    b1: float
    b2: float
    b3: float
    b4: float
    Ls: float
    gamma: float
    sub: Branch = field(repr=False)
    force: ForceProfile = field(repr=False)
    # background values at Ls (+ subsonic, - supersonic)
    rho_p: float = 0.0
    u_p: float = 0.0
    c2_p: float = 0.0
    rho_m: float = 0.0
    u_m: float = 0.0
    P_jump: float = 0.0
    y1: np.ndarray | None = None

    # axial functions, evaluated at arbitrary physical x1
    def ubar(self, x):
        return self.sub.u(x)

    def dubar(self, x):
        return self.sub.du(x)

    def c2(self, x):
        return self.sub.c2(x)

    def d1(self, x):
        u = self.sub.u(x)
        return 1.0 - u * u / self.sub.c2(x)

    def d2(self, x):
        u = self.sub.u(x)
        return (self.force.f(x) - (self.gamma + 1.0) * u * self.sub.du(x)) / self.sub.c2(x)

    def d3(self, x):
        return (self.gamma - 1.0) * self.sub.du(x) / self.sub.c2(x)

    def d4(self, x):
        return self.b2 / (self.b1 * self.sub.u(x))

    def d5(self, x):
        u = self.sub.u(x)
        return 2.0 * self.b2 * self.force.f(x) / (self.b1 * u * (self.sub.c2(x) - u * u))

    def d6(self, x):
        # -d1' + d2 collapses to f/c^2 along the background
        return self.force.f(x) / self.sub.c2(x)

    def tables(self) -> dict[str, np.ndarray]:
        y = self.y1
        return {name: np.asarray(getattr(self, name)(y)) for name in ("d1", "d2", "d3", "d4", "d5", "d6")}

    def scalars(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("a0", "b0", "b1", "b2", "b3", "b4")}


def iteration_coefficients(bg: BackgroundSolution, y1: np.ndarray | None = None) -> IterationCoeffs:
    g = bg.gas.gamma
    x = bg.Ls
    rp, up = bg.sub.rho(x), bg.sub.u(x)
    rm, um = bg.sup.rho(x), bg.sup.u(x)
    c2p = bg.sub.c2(x)
    f = bg.force.f(x)
    Pj = bg.sub.P(x) - bg.sup.P(x)
    a0 = rp * up / Pj
    dr = rp - rm
    b0 = -dr * f / (c2p - up * up)
    b1 = up * dr * f / (rp * (c2p - up * up))
    b2 = (rm - rp) * f / rp
    co = IterationCoeffs(a0=a0, b0=b0, b1=b1, b2=b2, b3=0.0, b4=0.0, Ls=x, gamma=g, sub=bg.sub,
                         force=bg.force, rho_p=rp, u_p=up, c2_p=c2p, rho_m=rm, u_m=um, P_jump=Pj)
    co.b3 = 1.0 - co.d4(x)
    co.b4 = co.a0 * co.b1 * co.b3
    if y1 is None:
        y1 = np.linspace(bg.Ls, bg.L1, 33)
    co.y1 = np.asarray(y1, dtype=float)
    checks = [("a0", co.a0 > 0), ("b0", co.b0 < 0), ("b1", co.b1 > 0), ("b2", co.b2 < 0),
              ("b3", co.b3 > 0), ("b4", co.b4 > 0),
              ("d1", bool(np.all(co.d1(co.y1) > 0))), ("d5", bool(np.all(co.d5(co.y1) < 0)))]
    for name, ok in checks:
        if not ok:
            raise CoefficientSignViolation(f"coefficient {name} has the wrong sign", where=name)
    bg.coeffs = co
    return co


def build_background(gamma: float, rho0: float, u0: float, force: ForceProfile, L0: float, L1: float,
                     Pe: float | None = None, h: float = 1e-3, delta: float | None = None) -> BackgroundSolution:
    """Convenience: supersonic inflow at L0, exit pressure Pe (midpoint of the admissible range if None)."""
    gas = GasParams(gamma)
    inflow = State1D(L0, rho0, u0, gas)
    if Pe is None:
        P1, P0 = admissible_pressure_range(inflow, force, gas, L0, L1, h, delta)
        Pe = 0.5 * (P1 + P0)
    bg = find_shock_position(Pe, inflow, force, gas, L0, L1, h, delta)
    iteration_coefficients(bg)
    return bg

