"""AGP-norm scans across system size and basis restriction for the Ising chain."""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import linregress

from .agp import AgpBasis, AgpSolution, AgpSolver
from .models import ising_agp_orbits, transverse_ising_chain

# residuals are only evaluated up to this size in scans; the norm itself is cheap at any L
RESIDUAL_MAX_L = 60


@dataclass
class ScanRecord:
    g: float
    L: int
    K: int | None
    hs_norm_per_dim: float
    restriction_rate: float | None = None
    orbit_sum: float = float("nan")
    mode: str = ""
    residual: float = float("nan")

    def row(self) -> list:
        return [self.g, self.L, "" if self.K is None else self.K,
                "" if self.restriction_rate is None else self.restriction_rate,
                self.hs_norm_per_dim, self.orbit_sum, self.mode, self.residual]


CSV_HEADER = ["g", "L", "K", "rate", "hs_norm_per_dim", "orbit_sum", "mode", "residual"]


def hs_norm_per_dim(sol: AgpSolution, dlambda: float = 1.0, keep: Iterable[int] | None = None) -> float:
    """``||dlambda A||^2_HS / 2**L``: orbit coefficient squared times orbit size, summed.

    ``keep`` limits the sum to a subset of orbits.
    """
    sizes = np.array([len(o) for o in sol.basis.orbits], dtype=float)
    a2 = np.asarray(sol.alpha, dtype=float) ** 2
    if keep is not None:
        idx = sorted(set(keep))
        sizes, a2 = sizes[idx], a2[idx]
    return float(dlambda**2 * math.fsum(sizes * a2))


def orbit_coefficient_sum(sol: AgpSolution, dlambda: float = 1.0, keep: Iterable[int] | None = None) -> float:
    """``sum_k (dlambda alpha_k)^2`` over orbits, one term per distinct coefficient."""
    a2 = np.asarray(sol.alpha, dtype=float) ** 2
    if keep is not None:
        a2 = a2[sorted(set(keep))]
    return float(dlambda**2 * math.fsum(a2))


@functools.lru_cache(maxsize=32)
def ising_solver(L: int) -> AgpSolver:
    """Solver on the closed-form ``Y X..X Z`` orbit basis of the periodic chain."""
    return AgpSolver(transverse_ising_chain(L), AgpBasis.from_grouping(ising_agp_orbits(L)))


def _record(solver: AgpSolver, g: float, L: int, K: int | None, sol: AgpSolution, keep, dlambda: float) -> ScanRecord:
    rate = None if K is None else (K + 1) / (L - 1)
    return ScanRecord(g, L, K, hs_norm_per_dim(sol, dlambda, keep), rate,
                      orbit_coefficient_sum(sol, dlambda, keep), sol.mode, sol.residual_norm)


def size_scan(
    g: float,
    L_list: Sequence[int] = tuple(range(20, 201, 20)),
    K_policy: str | int = "exact",
    dlambda: float = 1.0,
    residual_max_L: int = RESIDUAL_MAX_L,
) -> list[ScanRecord]:
    """One record per ``L``; ``K_policy`` is ``"exact"`` or a fixed restriction order."""
    out = []
    for L in L_list:
        if L < 3:
            raise ValueError("size_scan needs L >= 3")
        solver = ising_solver(L)
        with_res = L <= residual_max_L
        if K_policy == "exact":
            sol = solver.solve(g, with_residual=with_res)
            out.append(_record(solver, g, L, None, sol, None, dlambda))
        else:
            K = min(int(K_policy), L - 2)
            keep = range(K + 1)
            sol = solver.solve_restricted(g, keep, with_residual=with_res)
            out.append(_record(solver, g, L, K, sol, keep, dlambda))
    return out


def restriction_scan(g: float, L: int, K_list: Iterable[int] | None = None, dlambda: float = 1.0) -> list[ScanRecord]:
    """Variational solve on orbits ``0..K`` and the matching restricted norm sum, per ``K``."""
    K_list = list(range(L - 1)) if K_list is None else list(K_list)
    bad = [K for K in K_list if not 0 <= K <= L - 2]
    if bad:
        raise ValueError(f"K must satisfy 0 <= K <= L-2 = {L - 2}; got {bad}")
    solver = ising_solver(L)
    out = []
    for K in K_list:
        keep = range(K + 1)
        sol = solver.solve_restricted(g, keep)
        out.append(_record(solver, g, L, K, sol, keep, dlambda))
    return out


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_scaling(records: Sequence[ScanRecord], x: str = "auto", y: str = "hs_norm_per_dim") -> FitResult:
    """Least-squares line of ``y`` against ``L`` or the restriction rate."""
    if len(records) < 3:
        raise ValueError("fit_scaling needs at least 3 records")
    if x == "auto":
        x = "L" if len({r.L for r in records}) > 1 else "rate"
    xs = np.array([r.L if x == "L" else r.restriction_rate for r in records], dtype=float)
    ys = np.array([getattr(r, y) for r in records], dtype=float)
    if np.ptp(ys) == 0.0:
        return FitResult(0.0, float(ys[0]), 1.0, len(ys))
    res = linregress(xs, ys)
    return FitResult(float(res.slope), float(res.intercept), float(res.rvalue**2), len(ys))


def peak_scan(L: int, g_grid: Iterable[float], dlambda: float = 1.0) -> list[ScanRecord]:
    solver = ising_solver(L)
    return [_record(solver, g, L, None, solver.solve(g, with_residual=False), None, dlambda) for g in g_grid]


def write_records(records: Sequence[ScanRecord], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r.row()])
    return path


def write_fit(fit: FitResult, path: str | Path, **extra) -> Path:
    path = Path(path)
    path.write_text(json.dumps({**fit.to_dict(), **extra}, indent=2, sort_keys=True) + "\n")
    return path
