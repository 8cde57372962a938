import math

import numpy as np
import pytest

from agp_forge.agp import AgpBasis, AgpSolver, agp_operator
from agp_forge.dynamics import Drive, StateVector
from agp_forge.models import (
    Schedule,
    ising_agp_orbits,
    single_spin_system,
    swap_sites,
    transverse_ising_chain,
    two_spin_system,
)
from agp_forge.pauli import PauliOperator
from agp_forge.qsl import (
    NORM_HS,
    NORM_OPERATOR,
    EigenstateTracker,
    NotExactError,
    QuadratureError,
    bound_integral,
    fidelity_floor,
    integrand_at,
    integrand_curve,
    loose_bound_integral,
    rank_terms,
    truncated_drives,
)

CASES = {"a": [], "b": [0], "c": [1], "d": [2]}


@pytest.fixture(scope="module")
def two_spin():
    H = two_spin_system(-1.0, omega0=-1.0)
    solver = AgpSolver.for_path(H, np.linspace(-2, 2, 9), [swap_sites(2)])
    return H, solver


def rotating_spin():
    return single_spin_system(math.sin, lambda lam: 0.0, math.cos,
                              (math.cos, lambda lam: 0.0, lambda lam: -math.sin(lam)))


def test_fidelity_floor():
    assert fidelity_floor(0.0) == 1.0
    assert fidelity_floor(math.pi / 3) == pytest.approx(0.25)
    assert fidelity_floor(2.0) == 0.0


def test_integrand_zero_for_exact_drive():
    H = rotating_spin()
    sol = AgpSolver(H, AgpBasis.from_labels(["Y"])).solve(0.4)
    psi = StateVector.eigenstate(H, 0.4).amps
    assert integrand_at(sol, agp_operator(sol), 1.0, psi) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("omega", [0.5, 2.0])
def test_integrand_rotating_spin(omega):
    # std of (1/2) Y in an eigenstate of a field in the x-z plane is 1/2
    H = rotating_spin()
    sol = AgpSolver(H, AgpBasis.from_labels(["Y"])).solve(0.9)
    psi = StateVector.eigenstate(H, 0.9).amps
    assert integrand_at(sol, None, omega, psi) == pytest.approx(omega / 2, rel=1e-12)


def test_integrand_rejects_restricted_solution(two_spin):
    H, solver = two_spin
    sol = solver.solve_restricted(0.3, [0])
    with pytest.raises(NotExactError):
        integrand_at(sol, None, 1.0, StateVector.eigenstate(H, 0.3).amps)


def test_exact_drive_gives_zero_bound(two_spin):
    H, solver = two_spin
    ex = Drive.from_solver(solver)
    b = bound_integral(H, ex, ex, Schedule.cosine(1.0), 64)
    assert b.bound_B == 0.0 and b.fidelity_floor == 1.0
    lb = loose_bound_integral(H, ex, ex, Schedule.cosine(1.0), 64, norm_kind=NORM_HS)
    assert lb.bound_B == 0.0


@pytest.fixture(scope="module")
def two_spin_bounds(two_spin):
    H, solver = two_spin
    sched = Schedule.cosine(1.0)
    ex = Drive.from_solver(solver)
    drives = truncated_drives(solver, CASES)
    tr = EigenstateTracker(H, sched.lam(0.0))
    return {k: bound_integral(H, ex, d, sched, 256, rtol=1e-8, tracker=tr, label=k) for k, d in drives.items()}


def test_two_spin_bound_values(two_spin_bounds):
    B = {k: r.bound_B for k, r in two_spin_bounds.items()}
    # frozen from the converged quadrature at rtol 1e-6 and 1024+ panels
    ref = {"a": 1.5547191, "b": 0.9445521, "c": 1.0082789, "d": 1.8040114}
    for k in ref:
        assert B[k] == pytest.approx(ref[k], rel=1e-6)
    assert two_spin_bounds["b"].fidelity_floor > 0.1 and two_spin_bounds["c"].fidelity_floor > 0.1
    assert two_spin_bounds["a"].fidelity_floor < 0.05 and two_spin_bounds["d"].fidelity_floor < 0.05


def test_two_spin_integrand_at_zero_field(two_spin):
    H, solver = two_spin
    sched = Schedule.cosine(1.0)
    drives = truncated_drives(solver, CASES)
    ex = Drive.from_solver(solver)
    vals = {k: integrand_curve(H, ex, d, sched, [0.5])[0] for k, d in drives.items()}
    assert vals["a"] > vals["b"] and vals["a"] > vals["c"]
    # alpha_YZ vanishes at delta=0 by the X1 X2 symmetry, so (d) coincides with (a) there
    assert vals["d"] == pytest.approx(vals["a"], rel=1e-12)
    assert vals["a"] == pytest.approx(8.648, rel=1e-3)


def test_bound_is_time_invariant(two_spin):
    H, solver = two_spin
    ex = Drive.from_solver(solver)
    app = truncated_drives(solver, {"b": [0]})["b"]
    b1 = bound_integral(H, ex, app, Schedule.cosine(1.0), 256, rtol=1e-9).bound_B
    b10 = bound_integral(H, ex, app, Schedule.cosine(10.0), 256, rtol=1e-9).bound_B
    assert b10 == pytest.approx(b1, rel=1e-6)


def test_loose_bounds_dominate(two_spin, two_spin_bounds):
    H, solver = two_spin
    sched = Schedule.cosine(1.0)
    ex = Drive.from_solver(solver)
    tr = EigenstateTracker(H, sched.lam(0.0))
    for k, d in truncated_drives(solver, CASES).items():
        tight = two_spin_bounds[k]
        for kind in (NORM_OPERATOR, NORM_HS):
            lb = loose_bound_integral(H, ex, d, sched, 128, norm_kind=kind, rtol=1e-5, tracker=tr)
            assert lb.bound_B >= tight.bound_B
        ts = np.linspace(0, 1, 33)
        sig = integrand_curve(H, ex, d, sched, ts, tracker=tr)
        op = integrand_curve(H, ex, d, sched, ts, norm_kind=NORM_OPERATOR, tracker=tr)
        hs = integrand_curve(H, ex, d, sched, ts, norm_kind=NORM_HS, tracker=tr)
        assert np.all(op >= sig - 1e-12) and np.all(hs >= op - 1e-12)


def test_hs_variant_case_b(two_spin):
    # O = dlambda/dt [ alpha_XY (XY + YX) + alpha_YZ (YZ + ZY) ], Tr O^2 = 2**2 * (2 a_XY^2 + 2 a_YZ^2)
    H, solver = two_spin
    sched = Schedule.cosine(1.0)
    app = truncated_drives(solver, {"b": [0]})["b"]
    t = 0.37
    got = integrand_curve(H, Drive.from_solver(solver), app, sched, [t], norm_kind=NORM_HS)[0]
    a = solver.solve(sched.lam(t)).alpha
    assert got == pytest.approx(abs(sched.rate(t)) * math.sqrt(8 * (a[1] ** 2 + a[2] ** 2)), rel=1e-12)


def test_loose_bound_rejects_unknown_norm(two_spin):
    H, solver = two_spin
    with pytest.raises(ValueError):
        loose_bound_integral(H, solver, None, Schedule.cosine(1.0), norm_kind="frobenius")


def test_quadrature_failure_is_reported(two_spin):
    H, solver = two_spin
    with pytest.raises(QuadratureError):
        bound_integral(H, solver, None, Schedule.cosine(1.0), 10, rtol=1e-14, max_doublings=1)


def test_rank_terms_two_spin(two_spin):
    H, solver = two_spin
    ranked = rank_terms(H, solver, Schedule.cosine(1.0), 128, rtol=1e-5)
    assert [r[1] for r in ranked][-1] in ("YZ", "ZY")
    assert {r[0] for r in ranked[:2]} == {0, 1}


def test_rank_terms_single_orbit():
    H = rotating_spin()
    solver = AgpSolver(H, AgpBasis.from_labels(["Y"]))
    ranked = rank_terms(H, solver, Schedule.linear(1.0), 32)
    assert ranked == [(0, "Y", 0.0)]


def test_rank_terms_ising_first_orbit():
    L = 8
    H = transverse_ising_chain(L)
    solver = AgpSolver(H, AgpBasis.from_grouping(ising_agp_orbits(L)))
    ranked = rank_terms(H, solver, Schedule.annealing(1.0), 16, rtol=1e-3, max_doublings=3)
    assert ranked[0][0] == 0


def test_callable_inputs(two_spin):
    H, solver = two_spin
    sched = Schedule.cosine(1.0)
    via_solver = bound_integral(H, solver, None, sched, 64, rtol=1e-4).bound_B
    via_fn = bound_integral(H, lambda lam: solver.operator(lam), lambda lam: PauliOperator.zero(2), sched, 64,
                            rtol=1e-4).bound_B
    assert via_fn == pytest.approx(via_solver, rel=1e-12)
