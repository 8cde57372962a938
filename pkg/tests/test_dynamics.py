import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from agp_forge.agp import AgpBasis, AgpSolver
from agp_forge.dynamics import (
    Drive,
    NormDriftError,
    PauliSum,
    StateVector,
    convergence_check,
    default_steps,
    evolve,
    fidelity,
)
from agp_forge.models import Schedule, single_spin_system, swap_sites, two_spin_system
from agp_forge.pauli import PauliOperator, PauliString
from agp_forge.spectral import spectrum_at, to_dense

from .conftest import random_operator


def rotating_spin():
    return single_spin_system(math.sin, lambda lam: 0.0, math.cos,
                              (math.cos, lambda lam: 0.0, lambda lam: -math.sin(lam)))


def two_spin():
    H = two_spin_system(-1.0, omega0=-1.0)
    return H, AgpSolver.for_path(H, np.linspace(-2, 2, 9), [swap_sites(2)])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_pauli_sum_matches_dense(rng, n):
    op = random_operator(rng, n, 6)
    strings = op.strings()
    ps = PauliSum(strings, n)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    c = np.array([op.coeff(s) for s in strings])
    np.testing.assert_allclose(ps.apply(c, psi), to_dense(op) @ psi, atol=1e-12)


def test_pauli_sum_empty():
    ps = PauliSum([], 2)
    assert np.all(ps.apply(np.zeros(0), np.ones(4)) == 0)


def test_state_vector_validation():
    with pytest.raises(ValueError):
        StateVector(np.ones(3))
    s = StateVector(np.array([3.0, 4.0]))
    assert s.norm == 5.0 and s.normalized().norm == pytest.approx(1.0)


def test_fidelity_examples(rng):
    H = two_spin_system(-1.0)
    sp = spectrum_at(H, 0.3)
    assert fidelity(sp.states[:, 0], sp, 0) == pytest.approx(1.0)
    assert fidelity(sp.states[:, 1], sp, 0) == pytest.approx(0.0, abs=1e-28)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    assert fidelity(StateVector(psi), sp, 2) == pytest.approx(abs(np.vdot(sp.states[:, 2], psi)) ** 2, rel=1e-12)


def test_static_hamiltonian_keeps_eigenstate():
    H = single_spin_system(lambda lam: 0.3, lambda lam: 0.0, lambda lam: 1.0,
                           (lambda lam: 0.0, lambda lam: 0.0, lambda lam: 0.0))
    sched = Schedule.linear(2.0)
    r = evolve(H, None, sched, n_steps=400)
    assert r.min_fidelity > 1 - 1e-10
    assert r.norm_drift < 1e-10


@pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
def test_exact_driving_pins_single_spin(T):
    H = rotating_spin()
    solver = AgpSolver(H, AgpBasis.from_labels(["Y"]))
    r = evolve(H, Drive.from_solver(solver), Schedule.linear(T, 0.0, math.pi), n_steps=2000)
    assert r.min_fidelity >= 1 - 1e-6


def test_callable_drive_equivalent_to_solver_drive():
    H = rotating_spin()
    sched = Schedule.linear(0.5, 0.0, 1.0)
    a = evolve(H, lambda lam: PauliOperator.from_labels({"Y": 0.5}), sched, n_steps=300)
    b = evolve(H, Drive([PauliString.from_label("Y")], lambda lam: np.array([0.5])), sched, n_steps=300)
    np.testing.assert_array_equal(a.fidelities, b.fidelities)


def test_default_steps():
    H = two_spin_system(-1.0)
    assert default_steps(H, Schedule.cosine(1.0)) == 10_000
    # coefficient 1-norm at the endpoints is 1 + 2*2 + 2 = 7
    assert default_steps(H, Schedule.cosine(100.0)) == 70_000


def test_step_and_size_limits():
    H = two_spin_system(-1.0)
    with pytest.raises(ValueError):
        evolve(H, None, Schedule.cosine(1.0), n_steps=50)
    with pytest.raises(ValueError):
        PauliSum([PauliString.from_label("Z" * 13)], 13)


def test_norm_drift_is_reported():
    H = single_spin_system(lambda lam: 300 * lam, lambda lam: 0.0, lambda lam: 200.0)
    with pytest.raises(NormDriftError, match="increase n_steps"):
        evolve(H, None, Schedule.linear(10.0), n_steps=100)


def test_two_spin_undriven_matches_ode_oracle():
    H, _ = two_spin()
    sched = Schedule.cosine(1.0)
    r = evolve(H, None, sched, n_samples=3)
    assert r.norm_drift < 1e-8

    def rhs(t, y):
        return -1j * (to_dense(H.operator(sched.lam(t))) @ y)

    psi0 = StateVector.eigenstate(H, sched.lam(0.0)).amps
    sol = solve_ivp(rhs, (0.0, 1.0), psi0, method="DOP853", rtol=1e-12, atol=1e-12)
    sp = spectrum_at(H, sched.lam(1.0))
    ref = fidelity(sol.y[:, -1], sp, 0)
    assert r.final_fidelity == pytest.approx(ref, abs=1e-8)


def test_two_spin_self_convergence():
    H, _ = two_spin()
    sched = Schedule.cosine(1.0)
    coarse = evolve(H, None, sched, n_steps=10_000, n_samples=11)
    fine = evolve(H, None, sched, n_steps=20_000, n_samples=11)
    assert convergence_check(coarse, fine) < 1e-6
    assert convergence_check(coarse, coarse) == 0.0


def test_two_spin_exact_driving_and_ordering():
    H, solver = two_spin()
    sched = Schedule.cosine(1.0)
    exact = evolve(H, Drive.from_solver(solver), sched, n_steps=4000)
    assert exact.min_fidelity >= 1 - 1e-6
    finals = {}
    for name, keep in {"a": [], "b": [0], "c": [1], "d": [2]}.items():
        drive = Drive.from_solver(solver, "truncated", keep, name) if keep else Drive.none()
        finals[name] = evolve(H, drive, sched, n_steps=4000, n_samples=2).final_fidelity
    assert finals["b"] > finals["a"] and finals["c"] > finals["a"]
    assert finals["d"] <= finals["a"]


def test_csv_and_manifest(tmp_path):
    H = rotating_spin()
    r = evolve(H, None, Schedule.linear(0.5), n_steps=200, n_samples=5)
    p = r.to_csv(tmp_path / "f.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "t,lambda,p_0"
    assert len(lines) == 6
    m = r.manifest()
    assert m["n_steps"] == 200 and m["drive"] == "none" and m["schedule"]["kind"] == "linear"


def test_evolution_is_deterministic():
    H = rotating_spin()
    a = evolve(H, None, Schedule.linear(0.5), n_steps=300)
    b = evolve(H, None, Schedule.linear(0.5), n_steps=300)
    assert np.array_equal(a.final_state.amps, b.final_state.amps)
