"""Speed-limit lower bound on the fidelity of approximately counterdiabatic runs.

For a driven eigenstate the angle ``arccos sqrt(p_n(t))`` is bounded by the
time integral of the standard deviation of ``dlambda/dt (A - A_app)`` in the
instantaneous eigenstate. Since ``dt * dlambda/dt = dlambda`` the integral is
a line integral along the path and does not depend on the total time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import eigh

from .agp import MODE_CONSTRAINED, MODE_EXACT, AgpSolution, AgpSolver
from .dynamics import Drive, PauliSum
from .models import ParametricHamiltonian, Schedule
from .pauli import PauliOperator, PauliString
from .spectral import GAP_TOL, to_dense

DEFAULT_PANELS = 1024
MIN_PANELS = 10
QUAD_RTOL = 1e-6
QUAD_ATOL = 1e-12
MAX_DOUBLINGS = 20
POWER_ITERS = 1000
POWER_RTOL = 1e-12

NORM_OPERATOR = "operator"
NORM_HS = "hilbert-schmidt"


class QuadratureError(RuntimeError):
    pass


class NotExactError(ValueError):
    pass


@dataclass
class BoundResult:
    lambda_grid: np.ndarray
    integrand: np.ndarray
    bound_B: float
    fidelity_floor: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_panels: int = 0
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def angle_floor(self) -> float:
        return self.bound_B

    def summary(self) -> dict:
        return {"case": self.label, "B": self.bound_B, "fidelity_floor": self.fidelity_floor,
                "n_panels": self.n_panels, **self.meta}


def fidelity_floor(B: float) -> float:
    """``cos^2 B`` for ``B <= pi/2``, else 0."""
    return math.cos(B) ** 2 if B <= math.pi / 2 else 0.0


def _as_dense(A: PauliOperator | np.ndarray, dim: int) -> np.ndarray:
    if isinstance(A, np.ndarray):
        return A
    return to_dense(A) if len(A) else np.zeros((dim, dim), dtype=complex)


def integrand_at(
    A_exact: PauliOperator | np.ndarray | AgpSolution,
    A_app: PauliOperator | np.ndarray | None,
    dlambda_dt: float,
    state: np.ndarray,
) -> float:
    """``sigma[dlambda/dt (A - A_app), |n>]``.

    ``A_exact`` may be an :class:`AgpSolution`, which must be exact.
    """
    if isinstance(A_exact, AgpSolution):
        if A_exact.mode not in (MODE_EXACT, MODE_CONSTRAINED):
            raise NotExactError(f"A_exact has mode {A_exact.mode!r}; an exact AGP is required")
        from .agp import agp_operator

        A_exact = agp_operator(A_exact)
    psi = np.asarray(state, dtype=complex)
    dim = psi.shape[0]
    O = _as_dense(A_exact, dim)
    if A_app is not None:
        O = O - _as_dense(A_app, dim)
    return abs(dlambda_dt) * _std(O @ psi, psi)


def _std(Opsi: np.ndarray, psi: np.ndarray) -> float:
    mean = float(np.real(np.vdot(psi, Opsi)))
    var = float(np.real(np.vdot(Opsi, Opsi))) - mean * mean
    return math.sqrt(max(var, 0.0))


class _Difference:
    """``A(lambda) - A_app(lambda)`` on the union of both string lists."""

    def __init__(self, exact: Drive, app: Drive | None, n_sites: int):
        strings = list(exact.strings)
        pos = {s: i for i, s in enumerate(strings)}
        app_idx = []
        if app is not None:
            for s in app.strings:
                if s not in pos:
                    pos[s] = len(strings)
                    strings.append(s)
                app_idx.append(pos[s])
        self.strings = strings
        self.exact, self.app = exact, app
        self._app_idx = np.array(app_idx, dtype=int)
        self._n_exact = len(exact.strings)
        self.n_sites = n_sites
        self.op = PauliSum(strings, n_sites)

    def coeffs(self, lam: float) -> np.ndarray:
        c = np.zeros(len(self.strings))
        c[: self._n_exact] = self.exact.coeffs(lam)
        if self.app is not None and len(self._app_idx):
            np.subtract.at(c, self._app_idx, self.app.coeffs(lam))
        return c


def _to_drive(A, n_sites: int, sched: Schedule | None = None) -> Drive | None:
    if A is None or isinstance(A, Drive):
        return A
    if isinstance(A, AgpSolver):
        return Drive.from_solver(A)
    if callable(A):
        lams = [0.0, 1.0] if sched is None else [sched.lam(x * sched.t_final) for x in (0, 0.25, 0.5, 0.75, 1)]
        strings = sorted({s for lam in lams for s in A(lam).strings()}, key=PauliString.sort_key)
        return Drive.from_operator_fn(A, strings)
    raise TypeError(f"cannot interpret {type(A).__name__} as a drive")


class EigenstateTracker:
    """Eigenstate ``level`` of ``H(lambda)``; inside a degenerate manifold the
    state is the normalized projection of the initial eigenstate, which keeps
    conserved symmetry sectors consistent along the path."""

    def __init__(self, H: ParametricHamiltonian, lam0: float, level: int = 0):
        self.H, self.level = H, level
        self.lam0 = lam0
        self.ref = self._levels(lam0)[1][:, 0]
        self._cache: dict[float, np.ndarray] = {}

    def _levels(self, lam: float):
        Hd = to_dense(self.H.operator(lam))
        dim = Hd.shape[0]
        hi = min(dim - 1, self.level + 4)
        E, V = eigh(Hd, subset_by_index=[0, hi])
        scale = max(1.0, float(np.max(np.abs(E))))
        sel = np.abs(E - E[self.level]) <= GAP_TOL * scale
        if sel[-1] and hi < dim - 1:
            E, V = np.linalg.eigh(Hd)
            sel = np.abs(E - E[self.level]) <= GAP_TOL * scale
        return E[sel], V[:, sel]

    def __call__(self, lam: float) -> np.ndarray:
        psi = self._cache.get(lam)
        if psi is None:
            _, V = self._levels(lam)
            psi = V[:, 0]
            if V.shape[1] > 1:
                proj = V @ (V.conj().T @ self.ref)
                nrm = np.linalg.norm(proj)
                if nrm > 1e-8:
                    psi = proj / nrm
            self._cache[lam] = psi
        return psi


def _power_norm(op: PauliSum, c: np.ndarray, psi: np.ndarray) -> float:
    """Operator norm of ``O`` via power iteration on ``O^2`` from ``psi``.

    The Rayleigh sequence of a PSD matrix is nondecreasing, and its first
    element ``<psi|O^2|psi>`` already dominates the variance in ``psi``.
    """
    v = psi / np.linalg.norm(psi)
    est = 0.0
    for _ in range(POWER_ITERS):
        w = op.apply(c, op.apply(c, v))
        new = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - est) <= POWER_RTOL * max(new, 1e-300):
            est = new
            break
        est = max(est, new)
    return math.sqrt(max(est, 0.0))


def _integrate(f: Callable[[float], float], T: float, n_panels: int, rtol: float, max_doublings: int):
    if n_panels < MIN_PANELS:
        raise ValueError(f"n_panels must be at least {MIN_PANELS}")
    if n_panels % 2:
        n_panels += 1
    cache: dict[int, float] = {}
    # keys index the grid refined max_doublings times, so coarse nodes are reused

    def rule(n: int, depth: int) -> tuple[float, np.ndarray, np.ndarray]:
        stride = 1 << (max_doublings - depth)
        ts, ys = [], []
        for j in range(n + 1):
            key = j * stride
            if key not in cache:
                cache[key] = f(T * key / (n_panels << max_doublings))
            ts.append(T * j / n)
            ys.append(cache[key])
        ys = np.array(ys)
        return float(simpson(ys, dx=T / n)), np.array(ts), ys

    n = n_panels
    B, ts, ys = rule(n, 0)
    for depth in range(1, max_doublings + 1):
        n2 = n * 2
        B2, ts2, ys2 = rule(n2, depth)
        if abs(B2 - B) <= rtol * abs(B2) + QUAD_ATOL:
            return B2, ts2, ys2, n2
        B, ts, ys, n = B2, ts2, ys2, n2
    raise QuadratureError(f"bound did not converge to rtol={rtol} after {max_doublings} doublings (B={B:.6g})")


def _integrand_fn(H, A_exact, A_app, sched, level, kind, tracker=None) -> Callable[[float], float]:
    L = H.n_sites
    exact = _to_drive(A_exact, L, sched)
    app = _to_drive(A_app, L, sched)
    diff = _Difference(exact, app, L)
    track = tracker
    if track is None or track.level != level or track.lam0 != sched.lam(0.0):
        track = EigenstateTracker(H, sched.lam(0.0), level)

    def f(t: float) -> float:
        lam = sched.lam(t)
        rate = abs(sched.rate(t))
        c = diff.coeffs(lam)
        if rate == 0.0 or not np.any(c):
            return 0.0
        if kind == NORM_HS:
            # unnormalized Hilbert-Schmidt norm sqrt(Tr O^2) dominates the operator norm
            return rate * math.sqrt(float(c @ c) * (1 << L))
        psi = track(lam)
        if kind == NORM_OPERATOR:
            return rate * _power_norm(diff.op, c, psi)
        return rate * _std(diff.op.apply(c, psi), psi)

    return f


def integrand_curve(H, A_exact_fn, A_app_fn, sched: Schedule, times, *, level: int = 0,
                    norm_kind: str = "sigma", tracker: EigenstateTracker | None = None) -> np.ndarray:
    """Integrand values at the given times."""
    f = _integrand_fn(H, A_exact_fn, A_app_fn, sched, level, norm_kind, tracker)
    return np.array([f(float(t)) for t in times])


def _bound(H, A_exact, A_app, sched, n_panels, level, rtol, max_doublings, kind, label, tracker=None):
    f = _integrand_fn(H, A_exact, A_app, sched, level, kind, tracker)
    B, ts, ys, n = _integrate(f, sched.t_final, n_panels, rtol, max_doublings)
    lams = np.array([sched.lam(t) for t in ts])
    meta = {"norm": kind, "includes_rate": True, "T": sched.t_final, "schedule": sched.to_dict()}
    return BoundResult(lams, ys, B, fidelity_floor(B), ts, n, label, meta)


def bound_integral(
    H: ParametricHamiltonian,
    A_exact_fn,
    A_app_fn,
    sched: Schedule,
    n_panels: int = DEFAULT_PANELS,
    *,
    level: int = 0,
    rtol: float = QUAD_RTOL,
    max_doublings: int = MAX_DOUBLINGS,
    label: str = "",
    tracker: EigenstateTracker | None = None,
) -> BoundResult:
    """Composite-Simpson bound ``B = int_0^T sigma dt`` with panel doubling.

    ``A_exact_fn`` and ``A_app_fn`` may be :class:`Drive` objects, an
    :class:`AgpSolver` (exact AGP), callables ``lambda -> PauliOperator``,
    or ``None`` for ``A_app = 0``. The integrand includes ``|dlambda/dt|``.
    A shared ``tracker`` reuses eigenstates across several bounds on one path.
    """
    return _bound(H, A_exact_fn, A_app_fn, sched, n_panels, level, rtol, max_doublings, "sigma", label, tracker)


def loose_bound_integral(
    H: ParametricHamiltonian,
    A_exact_fn,
    A_app_fn,
    sched: Schedule,
    n_panels: int = DEFAULT_PANELS,
    *,
    norm_kind: str = NORM_OPERATOR,
    level: int = 0,
    rtol: float = QUAD_RTOL,
    max_doublings: int = MAX_DOUBLINGS,
    label: str = "",
    tracker: EigenstateTracker | None = None,
) -> BoundResult:
    """As :func:`bound_integral` with the standard deviation replaced by a norm.

    ``operator`` uses power iteration; ``hilbert-schmidt`` uses the
    unnormalized ``sqrt(Tr O^2)`` computed from coefficients alone.
    """
    if norm_kind not in (NORM_OPERATOR, NORM_HS):
        raise ValueError(f"norm_kind must be {NORM_OPERATOR!r} or {NORM_HS!r}")
    return _bound(H, A_exact_fn, A_app_fn, sched, n_panels, level, rtol, max_doublings, norm_kind, label, tracker)


def rank_terms(
    H: ParametricHamiltonian,
    full: AgpSolver,
    sched: Schedule,
    n_panels: int = DEFAULT_PANELS,
    *,
    rtol: float = QUAD_RTOL,
    max_doublings: int = MAX_DOUBLINGS,
) -> list[tuple[int, str, float]]:
    """``(orbit, label, B)`` for each single-orbit truncation, smallest ``B`` first."""
    sol = full.solve(sched.lam(0.5 * sched.t_final))
    if not sol.is_exact:
        raise NotExactError("rank_terms needs an exact AGP solver")
    exact = Drive.from_solver(full)
    tracker = EigenstateTracker(H, sched.lam(0.0))
    out = []
    for k, orbit in enumerate(full.basis.orbits):
        app = Drive.from_solver(full, "truncated", [k], label=orbit[0].label)
        res = bound_integral(H, exact, app, sched, n_panels, rtol=rtol, max_doublings=max_doublings,
                             tracker=tracker)
        out.append((k, orbit[0].label, res.bound_B))
    out.sort(key=lambda r: (r[2], r[0]))
    return out


def truncated_drives(solver: AgpSolver, keeps: dict[str, Sequence[int]]) -> dict[str, Drive]:
    """Named single- or multi-orbit truncations of the exact AGP."""
    return {name: (Drive.none() if not keep else Drive.from_solver(solver, "truncated", keep, name))
            for name, keep in keeps.items()}
