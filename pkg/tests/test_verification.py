import dataclasses
import json
import math

import numpy as np
import pytest

from transhock.driver import IterState, finalize, solve, step
from transhock.verification import (MappedDerivatives, equivalence_check, euler_residual,
                                    physical_compatibility, report, report_json, report_text, rh_residual,
                                    solution_as_manufactured)

from conftest import make_problem
from oracles import SLOPE_DIAGNOSTICS, background_field, random_nonsolution

SHAPES = [(17, 9, 9), (33, 17, 17), (65, 33, 33)]


@pytest.fixture(scope="module")
def flat(bg):
    """The eps = 0 solution on each grid of the triplet."""
    return {s: solve(make_problem(bg, s, 0.0), verify=False) for s in SHAPES}


# --- physical derivatives ----------------------------------------------------------------------------


def test_mapped_derivatives_are_exact_on_quadratics():
    y1 = np.linspace(1.5, 2.0, 9)
    y = np.linspace(-1.0, 1.0, 9)
    Y1, Y2, Y3 = np.meshgrid(y1, y, y, indexing="ij")
    X1 = Y1 + 0.01 * (2.0 - Y1) * (Y2 + 0.5 * Y3)          # affine in y1, like the shock map
    d = MappedDerivatives(X1, y1, y, y)
    f = X1 ** 2 + X1 * Y2 - Y3 ** 2
    g1, g2, g3 = d.grad(f)
    assert np.max(np.abs(g1 - (2 * X1 + Y2))) <= 1e-10
    assert np.max(np.abs(g2 - X1)) <= 1e-10
    assert np.max(np.abs(g3 + 2 * Y3)) <= 1e-10


# --- Euler residual ------------------------------------------------------------------------------------


def test_background_euler_residual_is_second_order(flat):
    errs = [max(n["max"] for n in euler_residual(flat[s]).values()) for s in SHAPES]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), errs
    res = euler_residual(flat[SHAPES[0]])
    assert res["momentum2"]["max"] <= 1e-20 and res["momentum3"]["max"] <= 1e-20


def test_corrupted_field_is_detected(bg, flat):
    sol = flat[SHAPES[2]]
    _, Y2, _ = sol.grid.mesh()
    delta = 1e-3
    bad = dataclasses.replace(sol, u2=sol.u2 + delta * np.sin(math.pi * Y2))
    base = euler_residual(sol)["mass"]["max"]
    got = euler_residual(bad)["mass"]["max"]
    # analytic divergence of the bump: rho * delta * pi * cos(pi y2), on interior nodes
    ref = np.max(np.abs((sol.rho * delta * math.pi * np.cos(math.pi * Y2))[1:-1, 1:-1, 1:-1]))
    assert got - base == pytest.approx(ref, rel=0.02)
    assert got > 1e6 * max(base, 1e-14)


# --- jump conditions -------------------------------------------------------------------------------------


def test_rh_on_the_background(flat):
    for sol in flat.values():
        r = rh_residual(sol)
        assert r[0] <= 1e-12 and r[1] <= 1e-12
        # u2 = u3 = 0, and the flat surface has no slope
        assert r[2] <= 1e-14 and r[3] <= 1e-14


def test_rh_slope_under_shock_displacement(bg, flat):
    sol = flat[SHAPES[1]]
    Ls = bg.Ls
    slope = abs(bg.force.f(Ls) * (bg.sub.rho(Ls) - bg.sup.rho(Ls)))   # |[d1(rho u1^2 + P)]|
    h = sol.grid.h1
    for d in (h / 4, h / 2, h):
        r = rh_residual(sol, sol.xi + d)
        assert r[1] / d == pytest.approx(slope, rel=0.01)
        # the mass flux is constant on both branches
        assert r[0] <= 1e-6 * d


# --- equivalence of the two forms ------------------------------------------------------------------------


def test_equivalence_on_the_background(bg):
    out = [equivalence_check(background_field(bg, n)) for n in (17, 33, 65)]
    for key in ("euler", "deformation_curl"):
        e = [o[key] for o in out]
        assert np.all(np.log2(np.array(e[:-1]) / np.array(e[1:])) >= 1.9), e
    assert out[1]["euler"] < 1e-5 and out[1]["deformation_curl"] < 1e-5


@pytest.mark.parametrize("seed", range(4))
def test_equivalence_on_nonsolutions(bg, seed):
    rng = np.random.default_rng(seed)
    floor = equivalence_check(background_field(bg, 33))
    tol = 10 * max(floor["euler"], floor["deformation_curl"])
    out = equivalence_check(random_nonsolution(bg, 33, 10 ** rng.uniform(-3, -1), rng), tol)
    assert out["agree"]
    assert out["euler"] > 10 * tol and out["deformation_curl"] > 10 * tol
    assert 0.1 <= out["ratio"] <= 10.0


def test_equivalence_after_one_driver_step(bg):
    p = make_problem(bg, SHAPES[1], 1e-3)
    sol = finalize(step(IterState.zero(p.grid), p), p, check=False)
    eul, dc = solution_as_manufactured(sol)
    e = max(n["max"] for n in eul.values())
    c = max(n["max"] for n in dc.values())
    assert 0.1 <= e / c <= 10.0


# --- the report --------------------------------------------------------------------------------------------


def test_report_at_zero_eps(flat):
    sol = flat[SHAPES[0]]
    rep = report(sol)
    assert rep["status"] == "converged"
    assert rep["shock_displacement_max"] <= 1e-12
    assert rep["velocity_perturbation_max"] <= 1e-12
    assert max(rep["rh"]) <= 1e-12
    assert rep["pi_norm"] <= 1e-12
    assert max(rep["compat"]["physical"].values()) <= 1e-10
    assert rep["entropy_margin"] == pytest.approx(rep["background_pressure_jump"], abs=1e-10)
    assert set(rep["euler"]) == {"mass", "momentum1", "momentum2", "momentum3"}
    back = json.loads(report_json(rep))
    assert back["rh"] == rep["rh"]
    assert "entropy margin" in report_text(rep)


def test_report_entries_converge_under_refinement(bg, solutions):
    reps = [report(solutions.get(s, 1e-3)) for s in SHAPES]
    euler = [max(n["max"] for n in r["euler"].values()) for r in reps]
    assert euler[0] > euler[1] > euler[2]
    for k in range(4):
        rh = [r["rh"][k] for r in reps]
        assert rh[0] > rh[1] > rh[2], rh


def test_report_status_plumbing(flat):
    rep = report(flat[SHAPES[0]], status="entropy_violated")
    assert json.loads(report_json(rep))["status"] == "entropy_violated"


def test_physical_compatibility_on_a_solution(solutions):
    tabs = [physical_compatibility(solutions.get(s, 1e-3)) for s in SHAPES]
    for tab in tabs:
        assert max(v for k, v in tab.items() if k not in SLOPE_DIAGNOSTICS) <= 1e-6
    # the mapped-coordinate wall slope is a one-sided estimate of a vanishing quantity
    for key in SLOPE_DIAGNOSTICS:
        vals = [t[key] for t in tabs]
        assert np.all(np.log2(np.array(vals[:-1]) / np.array(vals[1:])) >= 2.0), vals
