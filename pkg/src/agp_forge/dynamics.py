"""Statevector evolution under counterdiabatic driving.

The total Hamiltonian ``H(lambda_t) + dlambda/dt * A_app(lambda_t)`` is applied
string by string through index permutations and sign vectors; no
``2**L x 2**L`` matrix is formed during time stepping. Dense matrices appear
only when the instantaneous eigenstates are needed for fidelity samples.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh

from .agp import AgpSolver
from .models import ParametricHamiltonian, Schedule
from .pauli import PauliOperator, PauliString
from .spectral import GAP_TOL, Spectrum, index_mask, to_dense

MAX_EVOLUTION_SITES = 12
MIN_STEPS = 100
DEFAULT_MIN_STEPS = 10_000
NORM_DRIFT_LIMIT = 1e-6


class NormDriftError(RuntimeError):
    pass


class StateVector:
    """Complex amplitudes on ``2**n_sites`` computational states."""

    __slots__ = ("amps", "n_sites")

    def __init__(self, amps: np.ndarray, n_sites: int | None = None):
        amps = np.asarray(amps, dtype=complex).copy()
        dim = amps.shape[0]
        if n_sites is None:
            n_sites = dim.bit_length() - 1
        if amps.ndim != 1 or dim != 1 << n_sites:
            raise ValueError("amplitude vector must have length 2**n_sites")
        self.amps = amps
        self.n_sites = n_sites

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        return StateVector(self.amps / self.norm, self.n_sites)

    @classmethod
    def eigenstate(cls, H: ParametricHamiltonian, lam: float, level: int = 0) -> "StateVector":
        _, V = eigh(to_dense(H.operator(lam)), subset_by_index=[level, level])
        return cls(V[:, 0], H.n_sites)


@dataclass
class EvolutionResult:
    times: np.ndarray
    lambdas: np.ndarray
    fidelities: np.ndarray
    final_state: StateVector
    norm_drift: float
    n_steps: int
    level: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelities[-1])

    @property
    def min_fidelity(self) -> float:
        return float(np.min(self.fidelities))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "lambda", f"p_{self.level}"])
            for t, lam, p in zip(self.times, self.lambdas, self.fidelities):
                w.writerow([f"{t:.12g}", f"{lam:.12g}", f"{p:.12g}"])
        return path

    def manifest(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "level": self.level,
            "norm_drift": self.norm_drift,
            "final_fidelity": self.final_fidelity,
            "min_fidelity": self.min_fidelity,
            **self.meta,
        }


class PauliSum:
    """Fast ``sum_s c_s P_s |psi>`` for a fixed list of strings.

    Each string is stored as an index permutation, a sign vector and a power
    of ``i``, so an application is one gather, one
    real-by-complex product and one matvec.
    """

    def __init__(self, strings: Sequence[PauliString], n_sites: int):
        if n_sites > MAX_EVOLUTION_SITES:
            raise ValueError(f"{n_sites} sites exceeds the evolution cap of {MAX_EVOLUTION_SITES}")
        self.strings = list(strings)
        self.n_sites = n_sites
        dim = 1 << n_sites
        idx = np.arange(dim, dtype=np.int64)
        self._perms = np.empty((len(self.strings), dim), dtype=np.int64)
        self._signs = np.empty((len(self.strings), dim))
        self._ipow = np.array([1j ** s.y_count for s in self.strings], dtype=complex)
        for k, s in enumerate(self.strings):
            perm = idx ^ index_mask(s.x, n_sites)
            bits = perm & index_mask(s.z, n_sites)
            parity = np.zeros(dim, dtype=np.int64)
            for b in range(n_sites):
                parity ^= (bits >> b) & 1
            self._perms[k] = perm
            self._signs[k] = 1 - 2 * parity

    def __len__(self) -> int:
        return len(self.strings)

    def apply(self, coeffs: np.ndarray, psi: np.ndarray) -> np.ndarray:
        if not self.strings:
            return np.zeros_like(psi)
        w = np.asarray(coeffs, dtype=float) * self._ipow
        return w @ (self._signs * psi[self._perms])


@dataclass
class Drive:
    """Approximate AGP as fixed strings with ``lambda``-dependent coefficients."""

    strings: list[PauliString]
    coeffs: Callable[[float], np.ndarray]
    label: str = "custom"

    @classmethod
    def none(cls) -> "Drive":
        return cls([], lambda lam: np.zeros(0), "none")

    @classmethod
    def from_solver(cls, solver: AgpSolver, kind: str = "exact", keep: Sequence[int] | None = None, label: str | None = None) -> "Drive":
        return cls(solver.strings, solver.coefficient_fn(kind, keep), label or kind)

    @classmethod
    def from_operator_fn(cls, fn: Callable[[float], PauliOperator], strings: Sequence[PauliString], label: str = "custom") -> "Drive":
        strings = list(strings)

        def coeffs(lam: float) -> np.ndarray:
            op = fn(lam)
            extra = set(op.strings()) - set(strings)
            if extra:
                raise ValueError(f"A_app produced strings outside the declared list, e.g. {sorted(extra)[0].label}")
            return np.array([op.coeff(s) for s in strings])

        return cls(strings, coeffs, label)

    def operator(self, lam: float, n_sites: int) -> PauliOperator:
        return PauliOperator(zip(self.strings, self.coeffs(lam)), n_sites)


def default_steps(H: ParametricHamiltonian, sched: Schedule) -> int:
    """``max(1e4, 100 * T * ||H||)`` with ``||H||`` the largest coefficient 1-norm at the endpoints."""
    ends = (sched.lam(0.0), sched.lam(sched.t_final))
    scale = max(float(np.sum(np.abs(H.coeffs(x)))) for x in ends)
    return max(DEFAULT_MIN_STEPS, int(math.ceil(100 * sched.t_final * scale)))


def _manifold_projector(H: ParametricHamiltonian, lam: float, level: int, tol: float = GAP_TOL) -> np.ndarray:
    """Orthonormal columns spanning the eigenspace of ``level`` at ``lam``."""
    Hd = to_dense(H.operator(lam))
    dim = Hd.shape[0]
    hi = min(dim - 1, level + 4)
    E, V = eigh(Hd, subset_by_index=[0, hi])
    scale = max(1.0, float(np.max(np.abs(E))))
    sel = np.abs(E - E[level]) <= tol * scale
    if sel[-1] and hi < dim - 1:
        # degeneracy extends past the computed window
        E, V = np.linalg.eigh(Hd)
        sel = np.abs(E - E[level]) <= tol * scale
    return V[:, sel]


def fidelity(psi: StateVector | np.ndarray, spec: Spectrum, n: int = 0) -> float:
    """``|<n|psi>|^2``, summed over the degenerate manifold of level ``n``."""
    amps = psi.amps if isinstance(psi, StateVector) else np.asarray(psi)
    V = spec.states[:, spec.manifold(n)]
    return float(np.sum(np.abs(V.conj().T @ amps) ** 2))


def evolve(
    H: ParametricHamiltonian,
    A_app: Drive | Callable[[float], PauliOperator] | None,
    sched: Schedule,
    psi0: StateVector | None = None,
    n_steps: int | None = None,
    *,
    level: int = 0,
    n_samples: int = 21,
    app_strings: Sequence[PauliString] | None = None,
) -> EvolutionResult:
    """Integrate ``i d|psi>/dt = H_tot(t)|psi>`` with classical RK4.

    ``psi0`` defaults to eigenstate ``level`` at ``lambda(0)``. Fidelities
    to the instantaneous eigenspace of ``level`` are recorded at
    ``n_samples`` evenly spaced step indices including both ends.
    """
    L = H.n_sites
    if L > MAX_EVOLUTION_SITES:
        raise ValueError(f"{L} sites exceeds the evolution cap of {MAX_EVOLUTION_SITES}")
    if n_steps is None:
        n_steps = default_steps(H, sched)
    if n_steps < MIN_STEPS:
        raise ValueError(f"n_steps must be at least {MIN_STEPS}")
    if A_app is None:
        drive = Drive.none()
    elif isinstance(A_app, Drive):
        drive = A_app
    else:
        if app_strings is None:
            probe = [sched.lam(x * sched.t_final) for x in (0.0, 0.25, 0.5, 0.75, 1.0)]
            app_strings = sorted({s for lam in probe for s in A_app(lam).strings()}, key=PauliString.sort_key)
        drive = Drive.from_operator_fn(A_app, app_strings)
    if psi0 is None:
        psi0 = StateVector.eigenstate(H, sched.lam(0.0), level)

    nh = len(H.basis)
    op = PauliSum(list(H.basis) + list(drive.strings), L)
    coeff_cache: dict[float, np.ndarray] = {}

    def coeffs_at(t: float) -> np.ndarray:
        c = coeff_cache.get(t)
        if c is None:
            lam = sched.lam(t)
            c = np.empty(len(op))
            c[:nh] = H.coeffs(lam)
            if len(drive.strings):
                c[nh:] = sched.rate(t) * drive.coeffs(lam)
            if len(coeff_cache) > 4:
                coeff_cache.clear()
            coeff_cache[t] = c
        return c

    def rhs(t: float, psi: np.ndarray) -> np.ndarray:
        return -1j * op.apply(coeffs_at(t), psi)

    T = sched.t_final
    dt = T / n_steps
    sample_steps = np.unique(np.linspace(0, n_steps, max(2, n_samples)).round().astype(int))
    times, lams, fids = [], [], []
    psi = psi0.amps.copy()
    drift = 0.0
    next_sample = 0

    def record(step: int) -> None:
        nonlocal drift
        t = step * dt
        lam = sched.lam(t)
        V = _manifold_projector(H, lam, level)
        nrm = float(np.linalg.norm(psi))
        drift = max(drift, abs(nrm - 1.0))
        if drift > NORM_DRIFT_LIMIT:
            raise NormDriftError(
                f"norm drift {drift:.2e} at t={t:.6g} with dt={dt:.3g}; increase n_steps beyond {n_steps}"
            )
        times.append(t)
        lams.append(lam)
        fids.append(min(1.0, float(np.sum(np.abs(V.conj().T @ psi) ** 2))))

    for step in range(n_steps + 1):
        if step == sample_steps[next_sample]:
            record(step)
            next_sample += 1
            if next_sample == len(sample_steps):
                break
        t = step * dt
        k1 = rhs(t, psi)
        k2 = rhs(t + 0.5 * dt, psi + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, psi + 0.5 * dt * k2)
        k4 = rhs(t + dt, psi + dt * k3)
        psi = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    meta = {"drive": drive.label, "T": T, "schedule": sched.to_dict(), "system": H.name}
    return EvolutionResult(np.array(times), np.array(lams), np.array(fids), StateVector(psi, L),
                           drift, n_steps, level, meta)


def convergence_check(coarse: EvolutionResult, fine: EvolutionResult) -> float:
    """Largest fidelity difference, with ``fine`` interpolated onto ``coarse`` times."""
    if len(coarse.times) == len(fine.times) and np.allclose(coarse.times, fine.times):
        return float(np.max(np.abs(coarse.fidelities - fine.fidelities)))
    f = np.interp(coarse.times, fine.times, fine.fidelities)
    return float(np.max(np.abs(coarse.fidelities - f)))


def run_manifest(result: EvolutionResult, extra: dict | None = None) -> str:
    return json.dumps({**result.manifest(), **(extra or {})}, indent=2, sort_keys=True)
