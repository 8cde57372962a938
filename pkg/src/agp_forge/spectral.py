"""Dense-matrix ground truth for small systems.

Everything here forms ``2**L x 2**L`` matrices and is meant for verification
and for eigenstate-dependent quantities at modest ``L``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .models import ParametricHamiltonian
from .pauli import PauliOperator, PauliString

MAX_DENSE_SITES = 14
GAP_TOL = 1e-9
PERTURBATIVE_GAP = 1e-4


class DenseCapError(ValueError):
    pass


class DegenerateSpectrumError(ValueError):
    pass


def index_mask(mask: int, n_sites: int) -> int:
    """Site mask -> computational-basis index mask (site 0 is the most significant bit)."""
    out = 0
    for i in range(n_sites):
        if (mask >> i) & 1:
            out |= 1 << (n_sites - 1 - i)
    return out


def pauli_action(s: PauliString) -> tuple[np.ndarray, np.ndarray]:
    """``(perm, phase)`` with ``(P psi) = phase * psi[perm]``."""
    n = s.n_sites
    idx = np.arange(1 << n, dtype=np.int64)
    xi, zi = index_mask(s.x, n), index_mask(s.z, n)
    perm = idx ^ xi
    parity = np.zeros(1 << n, dtype=np.int64)
    zbits = perm & zi
    for b in range(n):
        parity ^= (zbits >> b) & 1
    phase = (1j ** s.y_count) * (1 - 2 * parity)
    return perm, phase.astype(complex)


def to_dense(A: PauliOperator, max_sites: int = MAX_DENSE_SITES) -> np.ndarray:
    """Dense matrix of a Pauli operator."""
    n = A.n_sites
    if n > max_sites:
        raise DenseCapError(f"{n} sites exceeds the dense cap of {max_sites}")
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for s, c in A.items():
        perm, phase = pauli_action(s)
        # (P)_{r, perm[r]} = phase[r]
        out[cols, perm] += c * phase
    return out


@dataclass
class Spectrum:
    """Ascending eigenpairs; ``degenerate`` flags any gap below the tolerance."""

    energies: np.ndarray
    states: np.ndarray
    degenerate: bool = False
    min_gap: float = float("inf")
    lam: float | None = None

    @property
    def dim(self) -> int:
        return len(self.energies)

    def manifold(self, n: int, tol: float = GAP_TOL) -> np.ndarray:
        """Indices of levels degenerate with level ``n``."""
        scale = max(1.0, float(np.max(np.abs(self.energies))))
        return np.flatnonzero(np.abs(self.energies - self.energies[n]) <= tol * scale)


def diagonalize(H: np.ndarray, gauge_ref: Spectrum | None = None, gap_tol: float = GAP_TOL, lam: float | None = None) -> Spectrum:
    """Hermitian eigendecomposition with optional phase continuity.

    With ``gauge_ref`` each eigenvector is matched to the reference vector of
    largest overlap magnitude and rephased so that overlap is real positive.
    """
    if not np.allclose(H, H.conj().T, atol=1e-10):
        raise ValueError("matrix is not Hermitian")
    E, V = np.linalg.eigh(H)
    scale = max(1.0, float(np.max(np.abs(E))))
    gaps = np.diff(E)
    min_gap = float(gaps.min()) if gaps.size else float("inf")
    degenerate = bool(gaps.size and min_gap <= gap_tol * scale)
    if gauge_ref is not None:
        ov = gauge_ref.states.conj().T @ V  # ov[ref, new]
        rows, cols = linear_sum_assignment(-np.abs(ov))
        for r, c in zip(rows, cols):
            o = ov[r, c]
            if abs(o) > 0:
                V[:, c] *= np.conj(o) / abs(o)
    else:
        # deterministic phase: largest component real positive
        k = np.argmax(np.abs(V), axis=0)
        ph = V[k, np.arange(V.shape[1])]
        V = V * (np.conj(ph) / np.abs(ph))
    return Spectrum(E, V, degenerate, min_gap, lam)


def spectrum_at(H: ParametricHamiltonian, lam: float, gauge_ref: Spectrum | None = None) -> Spectrum:
    return diagonalize(to_dense(H.operator(lam)), gauge_ref, lam=lam)


def _check(spec: Spectrum) -> None:
    if spec.degenerate:
        raise DegenerateSpectrumError(
            f"spectrum at lambda={spec.lam} has a gap of {spec.min_gap:.3g}; gauge matching unreliable"
        )


def _state_derivative(minus: Spectrum, mid: Spectrum, plus: Spectrum, dlambda: float) -> np.ndarray:
    for s in (minus, mid, plus):
        _check(s)
    Vm = _rephase(minus.states, mid.states)
    Vp = _rephase(plus.states, mid.states)
    return (Vp - Vm) / (2.0 * dlambda)


def _rephase(V: np.ndarray, ref: np.ndarray) -> np.ndarray:
    ov = np.einsum("ij,ij->j", ref.conj(), V)
    return V * (np.conj(ov) / np.abs(ov))


def exact_agp(minus: Spectrum, mid: Spectrum, plus: Spectrum, dlambda: float) -> np.ndarray:
    """``i sum_n (1 - |n><n|) |d n><n|`` with ``|d n>`` from a central difference.

    ``minus``/``plus`` are spectra at ``lambda -/+ dlambda``.
    """
    V = mid.states
    D = _state_derivative(minus, mid, plus, dlambda)
    overl = np.einsum("ij,ij->j", V.conj(), D)  # <n|dn>
    A = 1j * ((D - V * overl) @ V.conj().T)
    return 0.5 * (A + A.conj().T)


def exact_agp_perturbative(spec: Spectrum, dH: np.ndarray, gap_tol: float = GAP_TOL) -> np.ndarray:
    """``<m|A|n> = i <m|dH|n> / (E_n - E_m)`` for non-degenerate pairs, zero otherwise."""
    V, E = spec.states, spec.energies
    W = V.conj().T @ dH @ V
    diff = E[None, :] - E[:, None]  # E_n - E_m at [m, n]
    scale = max(1.0, float(np.max(np.abs(E))))
    mask = np.abs(diff) > gap_tol * scale
    Aeig = np.zeros_like(W)
    Aeig[mask] = 1j * W[mask] / diff[mask]
    A = V @ Aeig @ V.conj().T
    return 0.5 * (A + A.conj().T)


def geometric_tensor_sum(minus: Spectrum, mid: Spectrum, plus: Spectrum, dlambda: float) -> float:
    """``sum_n <dn|(1 - |n><n|)|dn>`` from finite differences (unnormalized, per unit dlambda^2)."""
    V = mid.states
    D = _state_derivative(minus, mid, plus, dlambda)
    norm2 = np.sum(np.abs(D) ** 2, axis=0)
    overl = np.einsum("ij,ij->j", V.conj(), D)
    return float(np.sum(norm2 - np.abs(overl) ** 2))


def geometric_tensor_sum_perturbative(spec: Spectrum, dH: np.ndarray, gap_tol: float = GAP_TOL) -> float:
    """``sum_{n != m} |<m|dH|n>|^2 / (E_n - E_m)^2`` over non-degenerate pairs.

    Invariant under basis changes inside degenerate levels, so usable where
    the finite-difference route is not.
    """
    V, E = spec.states, spec.energies
    W = V.conj().T @ dH @ V
    diff = E[None, :] - E[:, None]
    scale = max(1.0, float(np.max(np.abs(E))))
    mask = np.abs(diff) > gap_tol * scale
    return float(np.sum(np.abs(W[mask]) ** 2 / diff[mask] ** 2))


def default_dlambda(lam_range: float = 1.0) -> float:
    return 1e-5 * lam_range


def agp_at(H: ParametricHamiltonian, lam: float, method: str = "auto", dlambda: float | None = None) -> np.ndarray:
    """Eigenstate AGP of ``H`` at ``lam``.

    ``method`` is ``"fd"``, ``"perturbative"`` or ``"auto"`` (perturbative when
    the smallest gap is below ``1e-4`` or the spectrum is degenerate).
    """
    mid = spectrum_at(H, lam)
    if method == "auto":
        method = "perturbative" if (mid.degenerate or mid.min_gap < PERTURBATIVE_GAP) else "fd"
    if method == "perturbative":
        return exact_agp_perturbative(mid, to_dense(H.derivative(lam)))
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    h = dlambda or default_dlambda()
    return exact_agp(spectrum_at(H, lam - h, mid), mid, spectrum_at(H, lam + h, mid), h)


def eigenbasis(A: np.ndarray, spec: Spectrum) -> np.ndarray:
    return spec.states.conj().T @ A @ spec.states


def dump_spectrum_csv(H: ParametricHamiltonian, lambdas: Iterable[float], path: str | Path) -> Path:
    """Write ``lambda, E_0, ..., E_{2^L-1}`` rows."""
    path = Path(path)
    rows = []
    for lam in lambdas:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            E = spectrum_at(H, lam).energies
        rows.append([f"{lam:.12g}"] + [f"{e:.12g}" for e in E])
    dim = 1 << H.n_sites
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda"] + [f"E_{i}" for i in range(dim)])
        w.writerows(rows)
    return path
