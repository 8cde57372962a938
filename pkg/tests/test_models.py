import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agp_forge.agp import generate_basis
from agp_forge.models import (
    Schedule,
    SymmetryError,
    SymmetryGrouping,
    cyclic_shift,
    detect_orbits,
    ising_agp_orbits,
    ising_generators,
    reflection,
    schedule_from_dict,
    single_spin_system,
    swap_sites,
    transverse_ising_chain,
    two_spin_system,
)
from agp_forge.pauli import PauliOperator, PauliString

from .conftest import kron_operator


def rotating_spin():
    return single_spin_system(math.sin, lambda lam: 0.0, math.cos,
                              (math.cos, lambda lam: 0.0, lambda lam: -math.sin(lam)))


def test_single_spin_operator():
    H = rotating_spin()
    assert H.operator(0.0) == PauliOperator.from_labels({"Z": 1.0})
    const = single_spin_system(lambda lam: 1.0, lambda lam: 1.0, lambda lam: 1.0)
    assert const.operator(0.3) == PauliOperator.from_labels({"X": 1.0, "Y": 1.0, "Z": 1.0})


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_single_spin_eigenvalues_are_field_magnitude(lam, a, b, c):
    H = single_spin_system(lambda x: a * x, lambda x: b, lambda x: c + x)
    E = np.linalg.eigvalsh(kron_operator(H.operator(lam)))
    h = math.sqrt((a * lam) ** 2 + b**2 + (c + lam) ** 2)
    np.testing.assert_allclose(E, [-h, h], atol=1e-12)


def test_dcoeffs_match_finite_differences():
    H = two_spin_system(-1.0, delta=lambda lam: -2 * math.cos(lam), ddelta=lambda lam: 2 * math.sin(lam))
    for lam in (0.1, 0.7, 2.0):
        h = 1e-6
        fd = (H.coeffs(lam + h) - H.coeffs(lam - h)) / (2 * h)
        np.testing.assert_allclose(H.dcoeffs(lam), fd, rtol=1e-6, atol=1e-8)


def test_missing_derivative_falls_back_to_finite_difference():
    H = single_spin_system(math.sin, lambda lam: 0.0, math.cos)
    np.testing.assert_allclose(H.dcoeffs(0.4), [math.cos(0.4), 0.0, -math.sin(0.4)], rtol=1e-6)


def test_two_spin_limits():
    H = two_spin_system(0.0, delta=lambda lam: 0.0, omega0=-1.0, ddelta=lambda lam: 0.0)
    assert H.operator(0.5) == PauliOperator.from_labels({"XI": -1.0, "IX": -1.0})
    H = two_spin_system(0.0)
    assert H.derivative(0.3) == PauliOperator.from_labels({"ZI": 1.0, "IZ": 1.0})


def test_two_spin_ground_energy_at_zero_field():
    H = two_spin_system(-1.0, omega0=-1.0)
    E0 = np.linalg.eigvalsh(kron_operator(H.operator(0.0)))[0]
    # (|00>+|11>)/sqrt2 and (|01>+|10>)/sqrt2 span the block [[-1, -2], [-2, 1]]
    assert E0 == pytest.approx(-math.sqrt(5), abs=1e-12)


def test_ising_endpoints():
    L = 5
    H = transverse_ising_chain(L)
    par = H.operator(0.0)
    assert par == PauliOperator([(PauliString.single(L, i, "X"), -1.0) for i in range(L)], L)
    cl = H.operator(1.0)
    assert cl == PauliOperator([(PauliString.from_sites(L, {i: "Z", (i + 1) % L: "Z"}), -1.0) for i in range(L)], L)


def test_ising_l3_ground_energy():
    H = transverse_ising_chain(3)
    # independent construction of the same matrix
    X = np.array([[0, 1], [1, 0]])
    Z = np.diag([1, -1])
    I = np.eye(2)

    def site(op, i):
        mats = [I, I, I]
        mats[i] = op
        return np.kron(np.kron(mats[0], mats[1]), mats[2])

    M = sum(-0.5 * site(Z, i) @ site(Z, (i + 1) % 3) - 0.5 * site(X, i) for i in range(3))
    np.testing.assert_allclose(np.linalg.eigvalsh(kron_operator(H.operator(0.5))), np.linalg.eigvalsh(M), atol=1e-12)


def test_ising_rejects_tiny_chain():
    with pytest.raises(ValueError):
        transverse_ising_chain(2)


def test_two_spin_orbits_under_swap():
    H = two_spin_system(-1.0)
    basis = generate_basis(H, 0.3)
    g = detect_orbits(basis.strings, [swap_sites(2)], H)
    assert [sorted(s.label for s in o) for o in g.orbits] == [["IY", "YI"], ["XY", "YX"], ["YZ", "ZY"]]


def test_singleton_grouping():
    strings = [PauliString.from_label(s) for s in ("XY", "YZ")]
    g = SymmetryGrouping.singletons(strings)
    assert g.sizes == [1, 1]
    assert detect_orbits(strings, []).sizes == [1, 1]


@pytest.mark.parametrize("L", [4, 5, 6])
def test_ising_orbits_under_shift_and_reflection(L):
    H = transverse_ising_chain(L)
    basis = generate_basis(H, 0.37)
    g = detect_orbits(basis.strings, ising_generators(L), H)
    assert len(g.orbits) == L - 1
    closed = ising_agp_orbits(L)
    assert {frozenset(o) for o in g.orbits} == {frozenset(o) for o in closed.orbits}


def test_shift_alone_splits_mirror_pairs():
    L = 4
    H = transverse_ising_chain(L)
    basis = generate_basis(H, 0.37)
    g = detect_orbits(basis.strings, [cyclic_shift(L)], H)
    assert len(g.orbits) == 2 * (L - 1)


def test_generator_must_preserve_hamiltonian():
    H = two_spin_system(-1.0, omega0=-1.0)
    H_asym = single_spin_system(lambda lam: 1.0, lambda lam: 0.0, lambda lam: lam)
    with pytest.raises(SymmetryError):
        detect_orbits([PauliString.from_label("Y")], [[0, 1]], H_asym)
    assert reflection(2) == swap_sites(2)
    assert detect_orbits([PauliString.from_label("YI"), PauliString.from_label("IY")], [[1, 0]], H).sizes == [2]


def test_ising_orbits_truncated():
    g = ising_agp_orbits(6, K=2)
    assert len(g.orbits) == 3
    assert all(len(o) == 12 for o in g.orbits)
    with pytest.raises(ValueError):
        ising_agp_orbits(6, K=5)


@pytest.mark.parametrize("d", [
    {"kind": "linear", "T": 2.0},
    {"kind": "annealing", "T": 3.0},
    {"kind": "cosine", "T": 1.0, "amplitude": 2.0},
])
def test_schedules(d):
    s = schedule_from_dict(d)
    assert s.t_final == d["T"]
    for t in (0.1, 0.5 * s.t_final, 0.9 * s.t_final):
        h = 1e-6
        assert s.rate(t) == pytest.approx((s.lam(t + h) - s.lam(t - h)) / (2 * h), rel=1e-6)
    r = s.with_duration(10 * s.t_final)
    assert r.lam(10 * 0.3 * s.t_final) == pytest.approx(s.lam(0.3 * s.t_final))
    assert schedule_from_dict(s.to_dict()).lam(0.2) == s.lam(0.2)


def test_cosine_schedule_endpoints():
    s = Schedule.cosine(1.0, 2.0)
    assert s.lam(0.0) == pytest.approx(-2.0)
    assert s.lam(0.5) == pytest.approx(0.0, abs=1e-15)
    assert s.lam(1.0) == pytest.approx(2.0)


def test_schedule_without_derivative_uses_central_difference():
    s = Schedule(lambda t: t**2, 2.0)
    assert s.rate(1.0) == pytest.approx(2.0, rel=1e-8)
    with pytest.raises(ValueError):
        Schedule(lambda t: t, 0.0)
