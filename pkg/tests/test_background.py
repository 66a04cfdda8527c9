import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from transhock.background import (ForceProfile, State1D, admissible_pressure_range, exit_pressure,
                                  find_shock_position, integrate_branch, iteration_coefficients,
                                  momentum_flux, rh_jump_1d, supersonic_branch)
from transhock.errors import (ConfigError, NonPositiveDensity, PressureOutOfRange, SonicEncountered)
from transhock.gas import GasParams, bernoulli, density_from_bernoulli, thermo

from conftest import FBAR, L0, L1

GAS = GasParams(2.0)
U_PLUS = (1.0 + math.sqrt(17.0)) / 4.0      # subsonic root of 2u^3 - 5u^2 + 4 = (u - 2)(2u^2 - u - 2)


class ZeroForce:
    def f(self, x):
        return np.zeros(np.shape(x)) if np.ndim(x) else 0.0


# --- gas relations -----------------------------------------------------------


@pytest.mark.parametrize("rho,gamma,P,c2", [(1.0, 1.4, 1.0, 1.4), (1.0, 2.0, 1.0, 2.0), (2.0, 2.0, 4.0, 4.0)])
def test_thermo_values(rho, gamma, P, c2):
    assert thermo(rho, GasParams(gamma)) == pytest.approx((P, c2), rel=1e-15)


def test_thermo_rejects_nonpositive_density():
    with pytest.raises(NonPositiveDensity):
        thermo(0.0, GAS)
    with pytest.raises(NonPositiveDensity):
        thermo(np.array([1.0, -0.5]), GAS)


def test_gas_invariants():
    with pytest.raises(ConfigError):
        GasParams(1.0)
    with pytest.raises(ConfigError):
        GasParams(2.0, A=2.0)


def test_bernoulli_values():
    assert bernoulli([1.0, 0.0, 0.0], 1.0, 0.0, GAS) == pytest.approx(2.5)
    assert bernoulli([0.0, 0.0, 0.0], 1.0, 1.0, GAS) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(u=st.lists(st.floats(-3, 3), min_size=3, max_size=3), rho=st.floats(0.05, 5.0),
       Phi=st.floats(-2, 2), gamma=st.floats(1.1, 3.0))
def test_bernoulli_density_round_trip(u, rho, Phi, gamma):
    gas = GasParams(gamma)
    B = bernoulli(u, rho, Phi, gas)
    q2 = sum(x * x for x in u)
    assert density_from_bernoulli(B, q2, Phi, gas) == pytest.approx(rho, rel=1e-9)


# --- branch integration --------------------------------------------------------


def test_zero_force_freezes_state():
    br = integrate_branch(State1D(0.0, 1.0, 2.0, GAS), (0.0, 1.0), ZeroForce(), GAS, 0.01)
    assert np.all(br.u_nodes == 2.0)


def test_supersonic_branch_accelerates():
    br = integrate_branch(State1D(0.0, 1.0, 2.0, GAS), (0.0, 1.0), ForceProfile(0.0, 1.0, FBAR), GAS, 0.01)
    assert np.all(np.diff(br.u_nodes) > 0.0)


def test_branch_step_refinement_and_independent_ode():
    force = ForceProfile(0.0, 1.0, FBAR)
    start = State1D(0.0, 1.0, 2.0, GAS)
    coarse = integrate_branch(start, (0.0, 1.0), force, GAS, 1e-2).u(1.0)
    fine = integrate_branch(start, (0.0, 1.0), force, GAS, 1e-3).u(1.0)
    assert abs(coarse - fine) < 1e-8
    # independent adaptive integrator on the same reduced ODE
    m = 2.0

    def rhs(x, u):
        return FBAR * u / (u * u - 2.0 * m / u)

    ref = solve_ivp(rhs, (0.0, 1.0), [2.0], method="DOP853", rtol=1e-13, atol=1e-14).y[0, -1]
    assert abs(fine - ref) < 1e-10


def test_exit_pressure_fourth_order():
    force = ForceProfile(L0, L1, FBAR)
    inflow = State1D(L0, 1.0, 2.0, GAS)
    vals = []
    for h in (0.1, 0.05, 0.025):
        sup = supersonic_branch(inflow, force, GAS, L0, L1, h)
        vals.append(exit_pressure(1.5, sup, force, GAS, L1, h))
    order = math.log2(abs(vals[0] - vals[1]) / abs(vals[1] - vals[2]))
    assert order >= 3.5


def test_sonic_start_rejected():
    sonic = State1D(0.0, 1.0, math.sqrt(2.0), GAS)
    with pytest.raises(SonicEncountered):
        integrate_branch(sonic, (0.0, 1.0), ForceProfile(0.0, 1.0, FBAR), GAS)


# --- one-dimensional jump ---------------------------------------------------------


def test_rh_jump_closed_form_root():
    down = rh_jump_1d(State1D(0.0, 1.0, 2.0, GAS))
    assert down.u == pytest.approx(U_PLUS, abs=1e-12)
    assert down.rho == pytest.approx(2.0 / U_PLUS, abs=1e-12)
    assert down.u == pytest.approx(1.280776, abs=1e-6)
    assert down.rho == pytest.approx(1.561553, abs=1e-6)
    assert down.P == pytest.approx(2.438447, abs=1e-6)
    assert down.P > 1.0
    assert not down.supersonic


def test_rh_jump_sonic_upstream():
    with pytest.raises(SonicEncountered):
        rh_jump_1d(State1D(0.0, 1.0, math.sqrt(2.0), GAS))


@settings(max_examples=100, deadline=None)
@given(rho=st.floats(0.2, 3.0), mach=st.floats(1.05, 4.0), gamma=st.floats(1.2, 3.0))
def test_rh_jump_preserves_fluxes(rho, mach, gamma):
    gas = GasParams(gamma)
    u = mach * math.sqrt(gamma * rho ** (gamma - 1.0))
    up = State1D(0.0, rho, u, gas)
    down = rh_jump_1d(up)
    assert down.m == pytest.approx(up.m, rel=1e-12)
    K = momentum_flux(up.m, up.u, gamma)
    assert down.m * down.u + down.P == pytest.approx(K, rel=1e-12)
    assert down.P > up.P
    assert down.u * down.u < down.c2


# --- background with a shock ----------------------------------------------------------


def test_background_invariants(bg):
    assert L0 < bg.Ls < L1
    for br in (bg.sup, bg.sub):
        flux = br.rho(br.x) * br.u(br.x)
        assert np.max(np.abs(flux / bg.m - 1.0)) <= 1e-10
    M2_sup = bg.sup.u(bg.sup.x) ** 2 / bg.sup.c2(bg.sup.x)
    M2_sub = bg.sub.u(bg.sub.x) ** 2 / bg.sub.c2(bg.sub.x)
    assert np.all(M2_sup > 1.0) and np.all(M2_sub < 1.0)
    j = bg.jumps()
    assert abs(j["mass"]) <= 1e-10 * bg.m
    assert j["pressure"] > 0.0


def test_momentum_identity_along_branch(bg):
    # rho u u' + P' = rho f, with P' from the spline derivative of rho^gamma
    x = np.linspace(bg.Ls, L1, 401)
    br = bg.sub
    res = br.rho(x) * br.u(x) * br.du(x) + np.gradient(br.P(x), x, edge_order=2) - br.rho(x) * FBAR
    assert np.max(np.abs(res[2:-2])) < 1e-5


def test_pressure_range_and_midpoint(bg):
    P1, P0 = bg.P_range
    assert P1 < P0
    assert P1 == pytest.approx(2.632399590803575, rel=1e-12)
    assert P0 == pytest.approx(2.748127658567944, rel=1e-12)
    assert bg.Pe == pytest.approx(0.5 * (P1 + P0), rel=1e-14)
    # forward map at the returned shock position reproduces the exit pressure
    P_exit = exit_pressure(bg.Ls, bg.sup, bg.force, bg.gas, L1, bg.h)
    assert abs(P_exit - bg.Pe) <= 1e-9 * P0


def test_shock_position_limits_and_monotone():
    gas = GAS
    force = ForceProfile(L0, L1, FBAR)
    inflow = State1D(L0, 1.0, 2.0, gas)
    h = 1e-3
    P1, P0 = admissible_pressure_range(inflow, force, gas, L0, L1, h)
    near0 = find_shock_position(P0 - 1e-9, inflow, force, gas, L0, L1, h)
    near1 = find_shock_position(P1 + 1e-9, inflow, force, gas, L0, L1, h)
    assert near0.Ls - L0 < 2 * h
    assert L1 - near1.Ls < 2 * h
    Ls = [find_shock_position(Pe, inflow, force, gas, L0, L1, h).Ls for Pe in np.linspace(P1, P0, 5)]
    assert np.all(np.diff(Ls) < 0.0)
    with pytest.raises(PressureOutOfRange):
        find_shock_position(P0 * 1.01, inflow, force, gas, L0, L1, h)


def test_nonpositive_force_rejected():
    with pytest.raises(ConfigError):
        ForceProfile(L0, L1, 0.0)
    x = np.linspace(L0, L1, 9)
    with pytest.raises(ConfigError):
        ForceProfile(L0, L1, x=x, f=0.1 - 0.2 * (x - L0))


def test_tabulated_force_matches_constant():
    x = np.linspace(L0, L1, 9)
    tab = ForceProfile(L0, L1, x=x, f=np.full_like(x, FBAR))
    assert tab.Phi(1.7) == pytest.approx(FBAR * 0.7, rel=1e-12)


def test_coefficient_signs_and_definitions(bg):
    co = iteration_coefficients(bg)
    assert co.a0 > 0 and co.b0 < 0 and co.b1 > 0 and co.b2 < 0 and co.b3 > 0 and co.b4 > 0
    assert co.b4 == co.a0 * co.b1 * co.b3
    assert co.a0 == pytest.approx(bg.m / bg.jumps()["pressure"], rel=1e-14)
    t = co.tables()
    assert np.all(t["d1"] > 0.0) and np.all(t["d5"] < 0.0)
    assert co.b3 == pytest.approx(1.0 - t["d4"][0], rel=1e-14)
    # d6 = -d1' + d2 along the background
    y = np.linspace(bg.Ls + 0.01, L1 - 0.01, 201)
    d6 = -np.gradient(co.d1(y), y, edge_order=2) + co.d2(y)
    assert np.max(np.abs(d6 - co.d6(y))[2:-2]) < 1e-5


def test_a0_for_the_jump_example():
    # a0 = (rho u)^+ / [P] for the upstream state (1, 2), with P^+ = (2/u^+)^2 in closed form
    up = State1D(0.0, 1.0, 2.0, GAS)
    down = rh_jump_1d(up)
    a0 = down.m / (down.P - up.P)
    assert a0 == pytest.approx(2.0 / ((2.0 / U_PLUS) ** 2 - 1.0), rel=1e-12)
    assert a0 == pytest.approx(2.0 / 1.438447, abs=1e-6)
