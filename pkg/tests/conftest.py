import functools

import numpy as np
import pytest

from agp_forge.pauli import PauliOperator, PauliString

_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_matrix(label: str) -> np.ndarray:
    """Dense matrix of a Pauli label by explicit Kronecker products, site 0 leftmost."""
    return functools.reduce(np.kron, [_MATS[c] for c in label])


def kron_operator(op: PauliOperator) -> np.ndarray:
    dim = 1 << op.n_sites
    out = np.zeros((dim, dim), dtype=complex)
    for s, c in op.items():
        out += c * kron_matrix(s.label)
    return out


def random_operator(rng: np.random.Generator, n: int, n_terms: int) -> PauliOperator:
    terms = {}
    n_terms = min(n_terms, 4**n - 1)
    while len(terms) < n_terms:
        label = "".join(rng.choice(list("IXYZ"), size=n))
        if set(label) != {"I"}:
            terms[PauliString.from_label(label)] = float(rng.normal())
    return PauliOperator(terms, n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
