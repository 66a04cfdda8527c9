"""The iteration map on (v1..v4, v5), the fixed-point loop, and reconstruction of the physical flow."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import elliptic as el
from .background import BackgroundSolution, IterationCoeffs, iteration_coefficients
from .domain import EE, EO, OE, Grid, Transform, d_axial, d_trans, dd_trans, pad_parity, transform_map
from .errors import EntropyViolated, NotConverged, TranshockError
from .io import read_checkpoint, write_checkpoint
from .shock import ShockOps, density_of_state, make_trace, shock_ops, shock_slope_residual
from .transport import (bernoulli_remainder, build_advection_field, solve_vorticity,
                        trace_characteristics, vorticity_coefficients)
from .upstream import PerturbationSpec, SupersonicField, sample_upstream

log = logging.getLogger(__name__)

FP_TOL = 1e-9
MAX_OUTER = 60
BALL_FACTOR = 10.0
COMPAT_TOL = 1e-8


@dataclass
class SolverSettings:
    fp_tol: float = FP_TOL
    max_outer: int = MAX_OUTER
    relax: float = 1.0                 # under-relaxation, 1 = plain iteration
    ball_factor: float = BALL_FACTOR
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    check_div: bool = True

    def to_dict(self) -> dict:
        return {"fp_tol": self.fp_tol, "max_outer": self.max_outer, "relax": self.relax,
                "ball_factor": self.ball_factor, "checkpoint_every": self.checkpoint_every}


@dataclass
class Problem:
    """Everything fixed during the iteration."""

    bg: BackgroundSolution
    field: SupersonicField
    pert: PerturbationSpec
    grid: Grid
    cache: el.EllipticCache = None
    co: IterationCoeffs = None

    def __post_init__(self):
        if self.cache is None:
            self.cache = el.EllipticCache(self.grid)
        if self.co is None:
            self.co = iteration_coefficients(self.bg, self.grid.y1)


@dataclass
class IterState:
    v: np.ndarray                      # (4, N1, N2, N3)
    v5: np.ndarray                     # (N2, N3)
    omega: np.ndarray | None = None
    Pi: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, grid: Grid) -> "IterState":
        return cls(np.zeros((4,) + grid.shape), grid.trace_zeros())


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except TranshockError as e:
        if e.stage is None:
            e.stage = name
        raise


def step(hat: IterState, prob: Problem) -> IterState:
    """One application of the iteration map."""
    bg, grid, co, pert, cache = prob.bg, prob.grid, prob.co, prob.pert, prob.cache
    v, v5 = hat.v, hat.v5
    h1 = grid.h1

    # shock plane quantities at the previous iterate
    T = _stage("transform", Transform, grid, v5)
    tr = _stage("shock", make_trace, v[:, 0], v5, prob.field, bg.Ls, grid.y2, grid.y3)
    ops: ShockOps = _stage("shock", shock_ops, tr, bg, pert, grid,
                           d_axial(v[1], h1, 0)[0], d_axial(v[2], h1, 0)[0])

    # hyperbolic modes
    adv = _stage("transport", build_advection_field, v, T, bg)
    bundle = _stage("transport", trace_characteristics, adv.I2, adv.I3, grid)
    R4 = bernoulli_remainder(v5, ops.R1, ops.R2, bundle, co)
    mu_k, H_k = vorticity_coefficients(v, adv, T, bg)
    omega = solve_vorticity(ops.R6, mu_k, H_k, bundle)

    # velocity
    src = _stage("sources", el.assemble_sources, v, v5, omega, R4, ops, T, bg, pert)
    Pi = _stage("elliptic", el.solve_pi, src.G1, src.G2, src.G3, grid, cache)
    Gt, div_res = _stage("elliptic", el.correct_sources, src.G1, src.G2, src.G3, Pi, grid)
    vt = el.solve_divcurl(*Gt, grid, cache)
    q5 = el.shock_plane_source(src.q1, vt, co, grid)
    m1, m1c, mean = _stage("elliptic", el.solve_m1, q5, cache.basis2, cache.basis3, co.b3)
    G5 = el.potential_source(src, vt, m1, co, grid)
    phi, p1, p2, p3 = _stage("elliptic", el.solve_potential, G5, m1c, src.q4, co, grid, cache)
    v1, v2, v3 = el.reconstruct_velocity(vt, (p1, p2, p3), co, grid)

    # Bernoulli perturbation and shock position
    v4 = (co.b2 / co.b1) * v1[0][None] + R4
    v5n = (v1[0] - ops.R1) / co.b1
    out = IterState(np.stack([v1, v2, v3, v4]), v5n, omega, Pi)
    F2, F3 = shock_slope_residual(v5n, out.v[:, 0], ops.g2, ops.g3, co, grid.h2, grid.h3)
    out.diagnostics = {
        "div_residual": div_res,
        "m1_mean": float(mean),
        "pi_norm": float(np.max(np.abs(Pi))),
        "source_norm": float(max(np.max(np.abs(g)) for g in (src.G1, src.G2, src.G3))),
        "shock_slope_residual": float(max(np.max(np.abs(F2)), np.max(np.abs(F3)))),
        "trajectory_excursion": float(bundle.excursion),
        "min_J": float(np.min(np.abs(ops.J))),
    }
    out.diagnostics["compat"] = compatibility_table(out, grid)
    return out


# ---------------------------------------------------------------------------
# norms and compatibility


def _first_differences(f, hs, axes):
    return [np.max(np.abs(np.diff(f, axis=a))) / h for a, h in zip(axes, hs)] if f.size else [0.0]


def w_norm(v: np.ndarray, v5: np.ndarray, grid: Grid) -> float:
    """Max-norm of values and first differences of v1..v4 and v5."""
    hs = (grid.h1, grid.h2, grid.h3)
    total = 0.0
    for f in v:
        total += np.max(np.abs(f)) + sum(_first_differences(f, hs, (0, 1, 2)))
    total += np.max(np.abs(v5)) + sum(_first_differences(v5, hs[1:], (0, 1)))
    return float(total)


def compatibility_table(state: IterState, grid: Grid) -> dict[str, float]:
    """Wall conditions of the iterate class.

    Odd quantities are checked by their wall values.  Normal derivatives use the
    reflected-ghost stencils of the solver; for an odd field the second
    difference at the wall is -2 f(wall) / h^2, so it measures the wall value.
    """
    v1, v2, v3, v4 = state.v
    v5 = state.v5
    h2, h3 = grid.h2, grid.h3
    walls2 = (0, -1)

    def at2(f):
        return np.max(np.abs(f[:, walls2, :])) if f.ndim == 3 else np.max(np.abs(f[walls2, :]))

    def at3(f):
        return np.max(np.abs(f[:, :, walls2])) if f.ndim == 3 else np.max(np.abs(f[:, walls2]))

    tab = {
        "v2_wall2": at2(v2),
        "v3_wall3": at3(v3),
        "dd2_v2_wall2": at2(dd_trans(v2, h2, 1, OE[0])),
        "dd3_v3_wall3": at3(dd_trans(v3, h3, 2, EO[1])),
        "d2_v1_wall2": at2(d_trans(v1, h2, 1, EE[0])),
        "d2_v3_wall2": at2(d_trans(v3, h2, 1, EO[0])),
        "d2_v4_wall2": at2(d_trans(v4, h2, 1, EE[0])),
        "d3_v1_wall3": at3(d_trans(v1, h3, 2, EE[1])),
        "d3_v2_wall3": at3(d_trans(v2, h3, 2, OE[1])),
        "d3_v4_wall3": at3(d_trans(v4, h3, 2, EE[1])),
        "d2_v5_wall2": at2(d_trans(v5, h2, 0, EE[0])),
        "d3_v5_wall3": at3(d_trans(v5, h3, 1, EE[1])),
        "ddd2_v5_wall2": at2(_ddd_ghost(v5, h2, 0)),
        "ddd3_v5_wall3": at3(_ddd_ghost(v5, h3, 1)),
    }
    return {k: float(x) for k, x in tab.items()}


def _ddd_ghost(f, h, axis):
    g = pad_parity(f, axis, EE[0], width=2)
    g = np.moveaxis(g, axis, 0)
    n = f.shape[axis]
    i = np.arange(2, n + 2)
    out = (g[i + 2] - 2 * g[i + 1] + 2 * g[i - 1] - g[i - 2]) / (2 * h ** 3)
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# fixed-point loop

HISTORY_COLUMNS = ("iteration", "dv", "dv5", "ratio", "pi_norm", "w_norm", "div_residual",
                   "shock_slope_residual", "compat_max", "m1_mean")


def _split_norm(a: IterState, b: IterState, grid: Grid) -> tuple[float, float]:
    dv = w_norm(a.v - b.v, np.zeros_like(a.v5), grid)
    dv5 = w_norm(np.zeros((0,) + grid.shape), a.v5 - b.v5, grid)
    return dv, dv5


def save_checkpoint(path, state: IterState, history: list[dict], iteration: int, meta: dict | None = None) -> None:
    hist = np.array([[row[c] for c in HISTORY_COLUMNS] for row in history]).reshape(-1, len(HISTORY_COLUMNS))
    m = {"iteration": iteration, "columns": list(HISTORY_COLUMNS)}
    m.update(meta or {})
    write_checkpoint(path, {"v": state.v, "v5": state.v5, "history": hist}, m)


def load_checkpoint(path) -> tuple[IterState, list[dict], int, dict]:
    arrays, meta = read_checkpoint(path)
    cols = meta.get("columns", list(HISTORY_COLUMNS))
    history = [dict(zip(cols, (float(x) for x in row))) for row in arrays["history"]]
    for row in history:
        row["iteration"] = int(row["iteration"])
    return IterState(arrays["v"], arrays["v5"]), history, int(meta["iteration"]), meta


def iterate(prob: Problem, settings: SolverSettings | None = None, resume: str | None = None,
            callback=None) -> tuple[IterState, list[dict]]:
    """Fixed-point iteration from the zero state (or a checkpoint) until the update is below fp_tol."""
    settings = settings or SolverSettings()
    grid = prob.grid
    if resume:
        state, history, k0, meta = load_checkpoint(resume)
        if state.v.shape[1:] != grid.shape:
            raise NotConverged(f"checkpoint grid {state.v.shape[1:]} does not match {grid.shape}", stage="resume")
        radius = meta.get("ball_radius")
    else:
        state, history, k0, radius = IterState.zero(grid), [], 0, None
    prev_delta = history[-1]["dv"] + history[-1]["dv5"] if history else None
    for k in range(k0 + 1, settings.max_outer + 1):
        t0 = time.perf_counter()
        new = step(state, prob)
        if settings.relax != 1.0:
            r = settings.relax
            new.v = r * new.v + (1.0 - r) * state.v
            new.v5 = r * new.v5 + (1.0 - r) * state.v5
        dv, dv5 = _split_norm(new, state, grid)
        delta = dv + dv5
        wn = w_norm(new.v, new.v5, grid)
        compat = max(new.diagnostics["compat"].values())
        row = {"iteration": k, "dv": dv, "dv5": dv5,
               "ratio": delta / prev_delta if prev_delta else float("nan"),
               "pi_norm": new.diagnostics["pi_norm"], "w_norm": wn,
               "div_residual": new.diagnostics["div_residual"],
               "shock_slope_residual": new.diagnostics["shock_slope_residual"],
               "compat_max": compat, "m1_mean": new.diagnostics["m1_mean"]}
        history.append(row)
        log.info("iter %d  dv=%.3e dv5=%.3e ratio=%.3f |Pi|=%.2e (%.2fs)", k, dv, dv5, row["ratio"],
                 row["pi_norm"], time.perf_counter() - t0)
        if callback is not None:
            callback(k, new, row)
        if radius is None and wn > 0.0:
            radius = settings.ball_factor * wn
        state = new
        if radius is not None and wn > radius:
            raise NotConverged(f"iterate norm {wn:.3e} left the ball of radius {radius:.3e}",
                               stage="iteration", where=k, history=history, state=state)
        if settings.checkpoint_every and settings.checkpoint_path and k % settings.checkpoint_every == 0:
            save_checkpoint(settings.checkpoint_path, state, history, k, {"ball_radius": radius})
        if delta <= settings.fp_tol:
            state.diagnostics["iterations"] = k
            return state, history
        prev_delta = delta
    raise NotConverged(f"no convergence in {settings.max_outer} iterations", stage="iteration",
                       history=history, state=state)


# ---------------------------------------------------------------------------
# physical reconstruction


@dataclass
class Solution:
    grid: Grid
    x1: np.ndarray          # physical axial coordinate of every box node
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    P: np.ndarray
    rho: np.ndarray
    xi: np.ndarray          # shock surface on the cross-section grid
    P_minus: np.ndarray     # supersonic pressure on the shock
    state: IterState
    history: list[dict]
    problem: Problem = field(repr=False, default=None)
    report: dict = field(default_factory=dict)

    @property
    def entropy_margin(self) -> float:
        return float(np.min(self.P[0] - self.P_minus))

    def fields(self) -> dict[str, np.ndarray]:
        return {"u1": self.u1, "u2": self.u2, "u3": self.u3, "P": self.P, "rho": self.rho}


def finalize(state: IterState, prob: Problem, history: list[dict] | None = None, check: bool = True) -> Solution:
    """Physical subsonic flow on the image of the box, and the shock surface."""
    bg, grid, pert = prob.bg, prob.grid, prob.pert
    v1, v2, v3, v4 = state.v
    x1 = transform_map(grid, state.v5)
    _, Y2, Y3 = grid.mesh()
    rho = density_of_state(v1, v2, v3, v4, x1, Y2, Y3, bg, pert)
    P = rho ** bg.gas.gamma
    xi = bg.Ls + state.v5
    T2, T3 = grid.trace_mesh()
    P_minus = sample_upstream(prob.field, xi, T2, T3)[3]
    sol = Solution(grid, x1, bg.sub.u(x1) + v1, v2.copy(), v3.copy(), P, rho, xi, P_minus, state,
                   list(history or []), prob)
    if check and not sol.entropy_margin > 0.0:
        k = np.unravel_index(np.argmin(sol.P[0] - P_minus), P_minus.shape)
        raise EntropyViolated(f"P+ - P- = {sol.entropy_margin:.3e} on the shock", stage="finalize",
                              where=tuple(int(i) for i in k))
    return sol


def solve(prob: Problem, settings: SolverSettings | None = None, resume: str | None = None,
          verify: bool = True, callback=None) -> Solution:
    state, history = iterate(prob, settings, resume, callback)
    sol = finalize(state, prob, history)
    if verify:
        from .verification import report
        sol.report = report(sol)
    return sol
